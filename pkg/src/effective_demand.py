"""
Effective demand admission and sizing

For a decay parameter zeta = log(eps)/B < 0 each consumer of class k is
charged a deterministic omega_k(zeta) between its mean and its peak demand.
A population meets the outage target (asymptotically in B) iff
sum_k omega_k N_k <= C.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

from bisection import BisectionResult, bisect_monotone, expand_bracket
from errors import (
    DomainError,
    InfeasibleError,
    UnsupportedDimensionError,
)
from source_model import ConsumerClass, Population, mean_demand, peak_demand

STORAGE_FLOOR = 1e-6
STORAGE_CAP = 2.0 ** 40
STORAGE_TOL = 1e-6


@dataclass(frozen=True)
class DecayParameter:
    epsilon: float
    storage: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"outage target must lie in (0, 1), got {self.epsilon}")
        if not self.storage > 0:
            raise DomainError(f"storage must be positive, got {self.storage}")

    @property
    def zeta(self) -> float:
        """Decay rate log(eps)/B, negative"""
        return math.log(self.epsilon) / self.storage

    @property
    def xi(self) -> float:
        """Susceptibility 1 - eps^(1/B)"""
        return 1.0 - math.exp(self.zeta)


def _zeta_value(zeta: Union[DecayParameter, float]) -> float:
    value = zeta.zeta if isinstance(zeta, DecayParameter) else float(zeta)
    if value > 0 or math.isnan(value):
        raise DomainError(f"decay parameter must be nonpositive, got {value}")
    return value


def effective_demand(consumer: ConsumerClass, zeta: Union[DecayParameter, float]) -> float:
    """omega(zeta) = [zR + mu + lam - sqrt((zR + mu - lam)^2 + 4 lam mu)] / (2 z)"""
    z = _zeta_value(zeta)
    lam, mu, r = consumer.lam, consumer.mu, consumer.peak_demand
    a = z * r + mu + lam
    root = math.sqrt((z * r + mu - lam) ** 2 + 4.0 * lam * mu)
    if a >= 0:
        # rationalized form; equals lam R/(lam+mu) at zeta = 0
        return 2.0 * lam * r / (a + root)
    return (a - root) / (2.0 * z)


def effective_demand_table(
    pop: Population, zeta: Union[DecayParameter, float]
) -> List[Dict[str, float]]:
    """Per-class rows: class_index, lambda, mu, peak, omega"""
    return [
        {
            "class_index": k,
            "lambda": c.lam,
            "mu": c.mu,
            "peak": c.peak_demand,
            "omega": effective_demand(c, zeta),
        }
        for k, c in enumerate(pop.classes)
    ]


def effective_load(pop: Population, zeta: Union[DecayParameter, float]) -> float:
    """sum_k omega_k(zeta) N_k"""
    return sum(effective_demand(c, zeta) * n for c, n in zip(pop.classes, pop.counts))


@dataclass(frozen=True)
class AdmissionDecision:
    admit: bool
    load: float  # sum of omega_k N_k
    margin: float  # C - load
    strict_admit: bool  # sum < C, the inner set of the sandwich
    grid_power: float
    decay: DecayParameter


def admissible(
    pop: Population, grid_power: float, storage: float, eps: float
) -> AdmissionDecision:
    """Admit iff sum_k omega_k N_k <= C; ties admit"""
    decay = DecayParameter(epsilon=eps, storage=storage)
    load = effective_load(pop, decay)
    # log(1 - xi) is zeta, so the inner set differs only by strictness
    return AdmissionDecision(
        admit=load <= grid_power,
        load=load,
        margin=grid_power - load,
        strict_admit=load < grid_power,
        grid_power=grid_power,
        decay=decay,
    )


def admission_region(
    classes: Sequence[ConsumerClass], grid_power: float, storage: float, eps: float
) -> List[Tuple[int, int]]:
    """Staircase of (N_1, largest admissible N_2)"""
    if len(classes) != 2:
        raise UnsupportedDimensionError(
            f"admission region is drawn for 2 classes, got {len(classes)}"
        )
    decay = DecayParameter(epsilon=eps, storage=storage)
    omega_1 = effective_demand(classes[0], decay)
    omega_2 = effective_demand(classes[1], decay)
    region = []
    for n_1 in range(int(math.floor(grid_power / omega_1)) + 1):
        n_2 = int(math.floor((grid_power - omega_1 * n_1) / omega_2))
        region.append((n_1, max(n_2, 0)))
    return region


def min_storage_search(pop: Population, grid_power: float, eps: float) -> BisectionResult:
    """Bisection for the smallest B admitting the population"""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"outage target must lie in (0, 1), got {eps}")
    mean = mean_demand(pop)
    if grid_power <= mean:
        raise InfeasibleError(
            f"grid power {grid_power:.6g} kW does not exceed mean demand {mean:.6g} kW; "
            "no finite storage meets the target"
        )
    if grid_power >= peak_demand(pop):
        return BisectionResult(value=0.0, iterations=0, bracket=0.0, converged=True)

    def admits(b: float) -> bool:
        return effective_load(pop, math.log(eps) / b) <= grid_power

    if admits(STORAGE_FLOOR):
        return BisectionResult(
            value=STORAGE_FLOOR, iterations=0, bracket=0.0, converged=True
        )
    hi = expand_bracket(admits, 1.0, STORAGE_CAP)
    lo = hi / 2.0 if hi > 1.0 else STORAGE_FLOOR
    return bisect_monotone(admits, lo, hi, tol=STORAGE_TOL)


def min_storage(pop: Population, grid_power: float, eps: float) -> float:
    """Smallest storage (kWh) with sum_k omega_k(log(eps)/B) N_k <= C"""
    return min_storage_search(pop, grid_power, eps).value


def grid_power_for(pop: Population, storage: float, eps: float) -> float:
    """Grid power that exactly admits the population at storage B"""
    if storage <= 0:
        return peak_demand(pop)
    return effective_load(pop, DecayParameter(epsilon=eps, storage=storage))

