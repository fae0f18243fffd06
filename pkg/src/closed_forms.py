"""
Closed forms for a single consumer and the large-population approximation

All functions here work in normalized units: time in mean On durations
(mu = 1) and power in peak demands (R = 1). Use normalize_single_user and
denormalize_storage to move between physical and normalized values.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from errors import DomainError, ParameterDomainError, StabilityError
from source_model import ConsumerClass, Population

logger = logging.getLogger(__name__)


def _check_single_user(chi: float, c: float) -> None:
    if chi <= 0:
        raise ParameterDomainError(f"chi must be positive, got {chi}")
    if not 0.0 < c < 1.0:
        raise DomainError(f"normalized capacity must lie in (0, 1), got {c}")
    if not chi / (1.0 + chi) < c:
        raise StabilityError(chi / (1.0 + chi), c, "normalized units")


def decay_rate(chi: float, c: float) -> float:
    """The single negative eigenvalue chi/c - 1/(1-c)"""
    _check_single_user(chi, c)
    return chi / c - 1.0 / (1.0 - c)


def single_user_overflow(chi: float, c: float, b: float) -> float:
    """P(S > b) = chi/(c(1+chi)) * exp((chi/c - 1/(1-c)) b)"""
    _check_single_user(chi, c)
    if b < 0:
        raise DomainError(f"storage level must be nonnegative, got {b}")
    return chi / (c * (1.0 + chi)) * math.exp(decay_rate(chi, c) * b)


def single_user_capacity(chi: float, c: float, eps: float) -> float:
    """Smallest b with single_user_overflow(chi, c, b) <= eps"""
    _check_single_user(chi, c)
    if not 0.0 < eps < 1.0:
        raise DomainError(f"outage target must lie in (0, 1), got {eps}")
    if eps >= single_user_overflow(chi, c, 0.0):
        logger.info(
            "target %.3g already met without storage (overflow at 0 is %.6g)",
            eps,
            single_user_overflow(chi, c, 0.0),
        )
        return 0.0
    return c * (1.0 - c) / (chi - chi * c - c) * math.log(eps * c * (1.0 + chi) / chi)


@dataclass(frozen=True)
class CapacityDistribution:
    """Finite law of the grid capacity"""

    capacities: Tuple[float, ...]
    probabilities: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "capacities", tuple(float(c) for c in self.capacities))
        object.__setattr__(
            self, "probabilities", tuple(float(p) for p in self.probabilities)
        )
        if len(self.capacities) != len(self.probabilities) or not self.capacities:
            raise ParameterDomainError("capacity law needs matching, nonempty support")
        if any(p < 0 for p in self.probabilities):
            raise ParameterDomainError("capacity probabilities must be nonnegative")
        if abs(sum(self.probabilities) - 1.0) > 1e-9:
            raise ParameterDomainError(
                f"capacity probabilities sum to {sum(self.probabilities)}, not 1"
            )

    @classmethod
    def point_mass(cls, capacity: float) -> "CapacityDistribution":
        return cls(capacities=(capacity,), probabilities=(1.0,))

    @classmethod
    def from_json(cls, entries: Sequence[Dict]) -> "CapacityDistribution":
        """Accepts [{"capacity": c, "probability": p}, ...]"""
        return cls(
            capacities=tuple(e["capacity"] for e in entries),
            probabilities=tuple(e["probability"] for e in entries),
        )

    def to_json(self) -> List[Dict[str, float]]:
        return [
            {"capacity": c, "probability": p}
            for c, p in zip(self.capacities, self.probabilities)
        ]

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.choice(self.capacities, p=self.probabilities))


def single_user_overflow_random_capacity(
    chi: float, dist: CapacityDistribution, b: float
) -> float:
    """Overflow averaged over the capacity law"""
    total = 0.0
    for c, p in zip(dist.capacities, dist.probabilities):
        try:
            total += p * single_user_overflow(chi, c, b)
        except StabilityError:
            raise StabilityError(
                chi / (1.0 + chi), c, f"capacity support point {c} is unstable"
            )
    return total


def normalize_single_user(
    consumer: ConsumerClass, grid_power: float, storage: float = 0.0
) -> Tuple[float, float, float]:
    """Physical (C kW, B kWh) to normalized (chi, c, b)"""
    return (
        consumer.chi,
        grid_power / consumer.peak_demand,
        storage * consumer.mu / consumer.peak_demand,
    )


def denormalize_storage(b: float, consumer: ConsumerClass) -> float:
    """Normalized storage back to kWh"""
    return b * consumer.peak_demand / consumer.mu


# Large-population approximation. Diagnostic grade: the expressions are
# evaluated exactly as published, including the phi term whose
# sigma*log(sigma) contributions cancel.


@dataclass(frozen=True)
class AsymptoticParams:
    lam: float
    sigma: float  # grid power per source
    n_users: int

    def __post_init__(self):
        if self.lam <= 0:
            raise ParameterDomainError(f"lambda must be positive, got {self.lam}")
        if not 0.0 < self.sigma < 1.0:
            raise ParameterDomainError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.n_users < 1:
            raise ParameterDomainError(f"n_users must be positive, got {self.n_users}")
        if self.upsilon <= 0:
            raise StabilityError(self.lam / (1.0 + self.lam), self.sigma, "per source")

    @property
    def upsilon(self) -> float:
        """Headroom above the mean demand per source"""
        return self.sigma - self.lam / (1.0 + self.lam)

    def kappa(self, level: float) -> float:
        """Storage per user for a total normalized level"""
        return level / self.n_users


def asymptotic_params_for(pop: Population, grid_power: float) -> AsymptoticParams:
    """Normalized parameters of a single-class population"""
    if pop.n_classes != 1:
        raise DomainError("the large-population approximation covers one class only")
    consumer = pop.classes[0]
    n = pop.counts[0]
    return AsymptoticParams(
        lam=consumer.chi, sigma=grid_power / (consumer.peak_demand * n), n_users=n
    )


def _helper_log(value: float, helper: str) -> float:
    if value <= 0:
        raise DomainError(f"{helper}: logarithm of nonpositive value {value:.6g}")
    return math.log(value)


def _helper_sqrt(value: float, helper: str) -> float:
    if value < 0:
        raise DomainError(f"{helper}: square root of negative value {value:.6g}")
    return math.sqrt(value)


def asymptotic_helpers(p: AsymptoticParams) -> Dict[str, float]:
    """f, u, phi, g, z, psi at the given parameters"""
    lam, s = p.lam, p.sigma
    a = s + lam * (1.0 - s)
    excess = s * (1.0 + lam) - lam

    f = _helper_log(s / (lam * (1.0 - s)), "f") - 2.0 * excess / a
    if f <= 0:
        raise DomainError(f"f: helper must be positive, got {f:.6g}")
    if lam == 1.0:
        raise DomainError("u: undefined for lambda = 1")
    u = excess / (s * (1.0 - lam))
    phi = (
        s * _helper_log(s, "phi")
        + (1.0 - s) * _helper_log(1.0 - s, "phi")
        - s * _helper_log(s, "phi")
        + _helper_log(1.0 + lam, "phi")
    )
    z = (1.0 - lam) + lam * (1.0 - 2.0 * s) / a
    psi = (2.0 * s - 1.0) * excess ** 3 / (s * (1.0 - s) ** 2 * a ** 3)
    g = z + 0.5 * a * psi * (1.0 - s) / f
    return {"f": f, "u": u, "phi": phi, "g": g, "z": z, "psi": psi}


def asymptotic_survivor(p: AsymptoticParams, x: float) -> float:
    """Large-N approximation of P(S > x), clamped to [0, 1]"""
    if x < 0:
        raise DomainError(f"storage level must be nonnegative, got {x}")
    h = asymptotic_helpers(p)
    a = p.sigma + p.lam * (1.0 - p.sigma)
    n = p.n_users
    prefactor = 0.5 * _helper_sqrt(h["u"] / (math.pi * h["f"] * a * n), "prefactor")
    value = (
        prefactor
        * math.exp(-n * h["phi"] - h["g"] * x)
        * math.exp(-2.0 * _helper_sqrt(h["f"] * a * n * x, "tail"))
    )
    return min(max(value, 0.0), 1.0)


def asymptotic_comparison(
    p: AsymptoticParams, levels: Sequence[float], exact: Sequence[float]
) -> List[Dict[str, float]]:
    """Rows of (level, approximation, exact, ratio) for the diagnostics output"""
    rows = []
    for x, g in zip(levels, exact):
        approx = asymptotic_survivor(p, x)
        rows.append(
            {
                "level": float(x),
                "asymptotic": approx,
                "spectral": float(g),
                "ratio": approx / g if g > 0 else math.inf,
            }
        )
    return rows
