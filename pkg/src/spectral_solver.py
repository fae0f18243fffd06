"""
Spectral solution of the stationary fluid queue

For a chain with generator M and per-state drift d_s = load_s - C, the
per-state distribution F_s(x) = P(S <= x, state = s) of the storage deficit
S solves dF/dx D = F M with D = diag(d). The solution is

    F(x) = pi + sum_{Re z_i < 0} alpha_i phi_i exp(z_i x)

with z_i phi_i D = phi_i M, and alpha fixed by F_s(0) = 0 for every state
whose load exceeds the grid power.

The eigenproblem is posed in scaled coordinates psi = phi diag(pi)^(-1/2):
then z psi D = psi S with S = W M W^-1, W = diag(sqrt(pi)), which is
symmetric for the reversible chains built by source_model. The transposed
form (D^-1 S^T) psi^T = z psi^T is a standard eigenproblem.
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Union

import numpy as np
import scipy.linalg as la

from config import get_settings
from errors import (
    CapacityError,
    ConditioningError,
    DomainError,
    NumericalError,
    StabilityError,
)
from source_model import FluidModel

logger = logging.getLogger(__name__)

ZERO_DRIFT_SHIFT = 1e-9
# the zero mode is the eigenvector parallel to sqrt(pi)
ZERO_MODE_ALIGNMENT = 1.0 - 1e-4
RESIDUAL_TOLERANCE = 1e-8
IMAGINARY_TOLERANCE = 1e-9

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class DriftTable:
    """Per-state drift once grid power is moved off any state load"""

    drift: np.ndarray  # per-state load minus grid power, kW
    grid_power: float  # possibly perturbed away from a state load
    requested_grid_power: float

    @property
    def perturbed(self) -> bool:
        """True when grid power was shifted to avoid a zero drift"""
        return self.grid_power != self.requested_grid_power

    @property
    def positive_states(self) -> np.ndarray:
        """Indices of states whose load exceeds grid power"""
        return np.flatnonzero(self.drift > 0)


@dataclass(frozen=True)
class SolverDiagnostics:
    eigenvalues: List[complex]
    residuals: List[float]
    condition_number: float
    zero_eigenvalue: float
    perturbed: bool
    n_states: int
    n_positive_drift: int

    def to_dict(self) -> Dict:
        def encode(z: complex):
            return [float(np.real(z)), float(np.imag(z))]

        return {
            "eigenvalues": [encode(z) for z in self.eigenvalues],
            "residuals": [float(r) for r in self.residuals],
            "condition_number": float(self.condition_number),
            "zero_eigenvalue": float(self.zero_eigenvalue),
            "perturbed": self.perturbed,
            "n_states": self.n_states,
            "n_positive_drift": self.n_positive_drift,
        }


@dataclass(frozen=True)
class SpectralSolution:
    eigenvalues: np.ndarray  # retained (negative) eigenvalues z_i
    eigenvectors: np.ndarray  # (S, m) scaled eigenvectors psi_i as columns
    coefficients: np.ndarray  # alpha_i
    stationary: np.ndarray
    drift: DriftTable
    diagnostics: SolverDiagnostics
    sqrt_stationary: np.ndarray = field(repr=False)
    # -alpha_i * (1^T phi_i): survivor(x) = Re sum_i weight_i exp(z_i x)
    tail_weights: np.ndarray = field(repr=False)

    @property
    def unit_sum_coefficients(self) -> np.ndarray:
        """alpha_i for eigenvectors rescaled so their entries sum to one"""
        return -self.tail_weights


def make_drift_table(model: FluidModel, grid_power: float) -> DriftTable:
    """Net drift per state, nudging C off any state load it coincides with"""
    scale = max(1.0, abs(grid_power))
    effective = float(grid_power)
    if np.any(np.abs(model.loads - effective) <= 1e-12 * scale):
        effective = grid_power + ZERO_DRIFT_SHIFT * scale
        warnings.warn(
            f"grid power {grid_power:.10g} equals a state load; using {effective:.12g}",
            RuntimeWarning,
        )
    return DriftTable(
        drift=model.loads - effective,
        grid_power=effective,
        requested_grid_power=float(grid_power),
    )


def _scaled_generator(model: FluidModel) -> np.ndarray:
    """W M W^-1 with W = diag(sqrt(pi)), built from log pi so tails never underflow"""
    coo = model.generator.tocoo()
    half_log = 0.5 * model.log_stationary
    values = coo.data * np.exp(half_log[coo.row] - half_log[coo.col])
    scaled = np.zeros((model.n_states, model.n_states))
    scaled[coo.row, coo.col] = values
    return scaled


def _zero_mode(eigenvectors: np.ndarray, sqrt_pi: np.ndarray):
    """Index of the eigenvector closest to sqrt(pi) and its |cosine| with it"""
    norms = np.linalg.norm(eigenvectors, axis=0) * np.linalg.norm(sqrt_pi)
    cosines = np.abs(sqrt_pi @ eigenvectors) / np.where(norms > 0, norms, 1.0)
    index = int(np.argmax(cosines))
    return index, float(cosines[index])


def solve(model: FluidModel, grid_power: float) -> SpectralSolution:
    """Eigen-decomposition and boundary fit for one model and grid power"""
    dense_cap = get_settings().max_dense_states
    if model.n_states > dense_cap:
        raise CapacityError(model.n_states, dense_cap, what="dense eigenproblem")

    mean_load = model.mean_load
    if not mean_load < grid_power:
        raise StabilityError(mean_load, grid_power)

    drift = make_drift_table(model, grid_power)
    d = drift.drift
    scaled = _scaled_generator(model)
    operator = scaled.T / d[:, None]

    try:
        eigenvalues, eigenvectors = la.eig(operator)
    except la.LinAlgError as e:
        raise NumericalError(f"eigen solver did not converge: {e}")

    sqrt_pi = np.exp(0.5 * model.log_stationary)
    # a drift of order ZERO_DRIFT_SHIFT puts eigenvalues near 1e9, so the zero
    # mode is picked by its eigenvector rather than by a magnitude threshold
    zero_index, alignment = _zero_mode(eigenvectors, sqrt_pi)
    if alignment < ZERO_MODE_ALIGNMENT:
        raise NumericalError(
            f"no eigenvector parallel to sqrt(pi) (best alignment {alignment:.6f})"
        )
    zero_value = eigenvalues[zero_index]

    negative = np.flatnonzero(eigenvalues.real < 0)
    negative = negative[negative != zero_index]
    positive_states = drift.positive_states
    if negative.size != positive_states.size:
        raise NumericalError(
            f"{negative.size} negative eigenvalues for {positive_states.size} "
            "positive-drift states"
        )

    retained = np.concatenate(([zero_index], negative))
    operator_norm = np.abs(operator).sum(axis=1).max()
    residuals = [
        float(
            np.abs(operator @ eigenvectors[:, i] - eigenvalues[i] * eigenvectors[:, i]).max()
        )
        for i in retained
    ]
    if max(residuals) > RESIDUAL_TOLERANCE * operator_norm:
        raise NumericalError("eigenpair residual above tolerance", residuals)

    z = eigenvalues[negative]
    psi = eigenvectors[:, negative]

    if negative.size:
        boundary = psi[positive_states, :]
        rhs = -sqrt_pi[positive_states]
        alpha, _, rank, singular = la.lstsq(boundary.astype(complex), rhs.astype(complex))
        condition = float(singular[0] / singular[-1]) if singular[-1] > 0 else np.inf
        if rank < negative.size:
            raise ConditioningError("boundary-condition system is rank deficient", condition)
    else:
        alpha = np.zeros(0, dtype=complex)
        condition = 1.0

    weights = -alpha * (sqrt_pi @ psi)

    diagnostics = SolverDiagnostics(
        eigenvalues=[complex(v) for v in eigenvalues[retained]],
        residuals=residuals,
        condition_number=condition,
        zero_eigenvalue=float(abs(zero_value)),
        perturbed=drift.perturbed,
        n_states=model.n_states,
        n_positive_drift=int(positive_states.size),
    )
    logger.debug(
        "solved %d-state model at C=%.6g: %d decay modes, cond %.3e",
        model.n_states,
        drift.grid_power,
        negative.size,
        condition,
    )
    return SpectralSolution(
        eigenvalues=z,
        eigenvectors=psi,
        coefficients=alpha,
        stationary=model.stationary,
        drift=drift,
        diagnostics=diagnostics,
        sqrt_stationary=sqrt_pi,
        tail_weights=weights,
    )


def _check_level(level: ArrayLike) -> np.ndarray:
    levels = np.asarray(level, dtype=float)
    if np.any(~np.isfinite(levels)) or np.any(levels < 0):
        raise DomainError(f"storage level must be finite and nonnegative, got {level}")
    return levels


def _real_part(values: np.ndarray, what: str) -> np.ndarray:
    residue = np.abs(np.imag(values)).max() if values.size else 0.0
    if residue > IMAGINARY_TOLERANCE:
        raise NumericalError(f"{what} has imaginary residue {residue:.3e}")
    return np.real(values)


def survivor_curve(sol: SpectralSolution, levels: np.ndarray) -> np.ndarray:
    """P(S > x) for every level in `levels`"""
    x = _check_level(levels)
    flat = x.ravel()
    if sol.eigenvalues.size == 0:
        return np.zeros_like(x)
    terms = np.exp(np.outer(flat, sol.eigenvalues)) @ sol.tail_weights
    values = _real_part(terms, "survivor probability")
    return np.clip(values, 0.0, 1.0).reshape(x.shape)


def survivor_probability(sol: SpectralSolution, level: float) -> float:
    """P(S > x) = -sum_i alpha_i (1^T phi_i) exp(z_i x)"""
    return float(survivor_curve(sol, np.asarray(level, dtype=float)))


def cdf(sol: SpectralSolution, level: float) -> np.ndarray:
    """Per-state F_s(x) = P(S <= x, state = s)"""
    x = float(_check_level(level))
    if sol.eigenvalues.size == 0:
        return sol.stationary.copy()
    modes = sol.eigenvectors @ (sol.coefficients * np.exp(sol.eigenvalues * x))
    correction = _real_part(sol.sqrt_stationary * modes, "cdf")
    return np.clip(sol.stationary + correction, 0.0, None)


def state_survivor(sol: SpectralSolution, level: float) -> np.ndarray:
    """Per-state P(S > x, state = s)"""
    return np.clip(sol.stationary - cdf(sol, level), 0.0, None)


def unserved_fraction(sol: SpectralSolution, level: float) -> float:
    """Long-run share of demand shed when the storage holds `level`.

    While the deficit exceeds the storage, every state whose load is above
    the grid power sheds the excess. The share is the mean shed rate over
    the mean load.
    """
    drift = sol.drift.drift
    mean_load = float(sol.stationary @ (drift + sol.drift.grid_power))
    shed = float(np.clip(drift, 0.0, None) @ state_survivor(sol, level))
    return shed / mean_load
