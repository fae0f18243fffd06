"""
Epsilon-outage storage sizing and inverse grid-power planning

The sizing question is: the smallest storage B such that P(S > B) <= eps,
where S is the stationary storage deficit. Three engines answer it:

- spectral: exact survivor of the composite chain (spectral_solver)
- effective_demand: asymptotic admission rule sum omega_k N_k <= C
- closed_form: single consumer only (closed_forms)

The spectral engine can also size against the share of demand left
unserved instead of P(S > B); see OutageMeasure.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

from bisection import bisect_monotone, expand_bracket
from closed_forms import (
    denormalize_storage,
    normalize_single_user,
    single_user_capacity,
    single_user_overflow,
)
from config import get_settings
from errors import (
    DomainError,
    InfeasibleError,
    StabilityError,
    UndefinedSavingsError,
    UnsupportedEngineError,
)
import effective_demand as ed
import spectral_solver
from source_model import Population, build_generator_multi, mean_demand, peak_demand

logger = logging.getLogger(__name__)

BRACKET_TOL = 1e-6
MAX_ITERATIONS = 200
STORAGE_CAP = 2.0 ** 40
ACHIEVED_SLACK = 1e-9
# effective-demand results are re-checked exactly when the chain is this small
EXACT_CHECK_STATES = 2000


class Engine(str, Enum):
    SPECTRAL = "spectral"
    EFFECTIVE_DEMAND = "effective_demand"
    CLOSED_FORM = "closed_form"


class OutageMeasure(str, Enum):
    DEFICIT = "deficit"  # P(S > B)
    UNSERVED_DEMAND = "unserved_demand"  # share of demand shed once B runs dry


@dataclass(frozen=True)
class SizingResult:
    storage: float  # B(eps), kWh
    engine: Engine
    achieved: Optional[float]  # outage measure at the returned B
    iterations: int
    bracket: float
    converged: bool = True
    notes: List[str] = field(default_factory=list)
    measure: OutageMeasure = OutageMeasure.DEFICIT


@dataclass(frozen=True)
class GridPowerResult:
    grid_power: float  # kW
    engine: Engine
    achieved: Optional[float]
    iterations: int
    bracket: float
    converged: bool = True


def _check_epsilon(eps: float) -> None:
    if not 0.0 < eps < 1.0:
        raise DomainError(f"outage target must lie in (0, 1), got {eps}")


def _require_single_user(pop: Population, engine: Engine) -> None:
    if pop.n_classes != 1 or pop.counts[0] != 1:
        raise UnsupportedEngineError(
            f"engine '{engine.value}' handles a single consumer; population has "
            f"{pop.n_classes} classes and counts {list(pop.counts)}"
        )


def _exact_survivor(pop: Population, grid_power: float, storage: float) -> Optional[float]:
    if pop.state_space_size > EXACT_CHECK_STATES:
        return None
    sol = spectral_solver.solve(build_generator_multi(pop), grid_power)
    return spectral_solver.survivor_probability(sol, storage)


def epsilon_outage_capacity(
    pop: Population,
    grid_power: float,
    eps: float,
    engine: Engine = Engine.SPECTRAL,
    measure: OutageMeasure = OutageMeasure.DEFICIT,
) -> SizingResult:
    """Smallest B (kWh) whose outage measure is at most eps under the chosen engine"""
    engine = Engine(engine)
    measure = OutageMeasure(measure)
    _check_epsilon(eps)
    if measure is not OutageMeasure.DEFICIT and engine is not Engine.SPECTRAL:
        raise UnsupportedEngineError(
            f"outage measure '{measure.value}' needs the spectral engine, not '{engine.value}'"
        )
    mean = mean_demand(pop)
    if not mean < grid_power:
        raise StabilityError(mean, grid_power)

    if engine is Engine.CLOSED_FORM:
        _require_single_user(pop, engine)
        consumer = pop.classes[0]
        chi, c, _ = normalize_single_user(consumer, grid_power)
        if c >= 1.0:
            return SizingResult(0.0, engine, 0.0, 0, 0.0, notes=["grid covers peak"])
        b = single_user_capacity(chi, c, eps)
        return SizingResult(
            storage=denormalize_storage(b, consumer),
            engine=engine,
            achieved=single_user_overflow(chi, c, b),
            iterations=0,
            bracket=0.0,
        )

    if engine is Engine.EFFECTIVE_DEMAND:
        search = ed.min_storage_search(pop, grid_power, eps)
        notes = ["effective demand is asymptotic in B; achieved is the exact survivor"]
        achieved = _exact_survivor(pop, grid_power, search.value)
        if achieved is None:
            notes.append("state space too large for an exact re-check")
        return SizingResult(
            storage=search.value,
            engine=engine,
            achieved=achieved,
            iterations=search.iterations,
            bracket=search.bracket,
            converged=search.converged,
            notes=notes,
        )

    sol = spectral_solver.solve(build_generator_multi(pop), grid_power)
    return size_from_solution(sol, eps, measure)


def size_from_solution(
    sol: spectral_solver.SpectralSolution,
    eps: float,
    measure: OutageMeasure = OutageMeasure.DEFICIT,
) -> SizingResult:
    """Spectral B(eps) from an already solved model"""
    _check_epsilon(eps)
    measure = OutageMeasure(measure)
    if measure is OutageMeasure.UNSERVED_DEMAND:
        outage = spectral_solver.unserved_fraction
    else:
        outage = spectral_solver.survivor_probability

    at_zero = outage(sol, 0.0)
    if at_zero <= eps:
        return SizingResult(
            storage=0.0,
            engine=Engine.SPECTRAL,
            achieved=at_zero,
            iterations=0,
            bracket=0.0,
            notes=["target met without storage"],
            measure=measure,
        )

    log_eps = math.log(eps)

    def meets_target(b: float) -> bool:
        g = outage(sol, b)
        return g <= 0.0 or math.log(g) <= log_eps

    hi = expand_bracket(meets_target, 1.0, STORAGE_CAP)
    lo = hi / 2.0 if hi > 1.0 else 0.0
    search = bisect_monotone(
        meets_target, lo, hi, tol=BRACKET_TOL, max_iter=MAX_ITERATIONS
    )
    achieved = outage(sol, search.value)
    notes = [] if search.converged else ["bisection iteration cap reached"]
    if achieved > eps + ACHIEVED_SLACK:
        raise InfeasibleError(
            f"post-hoc outage {achieved:.6g} exceeds target {eps:.6g}"
        )
    return SizingResult(
        storage=search.value,
        engine=Engine.SPECTRAL,
        achieved=achieved,
        iterations=search.iterations,
        bracket=search.bracket,
        converged=search.converged,
        notes=notes,
        measure=measure,
    )


def storage_curve(
    pop: Population,
    grid_powers: Sequence[float],
    eps: float,
    engine: Engine = Engine.SPECTRAL,
    measure: OutageMeasure = OutageMeasure.DEFICIT,
) -> List[SizingResult]:
    """B(eps) for each grid power"""
    return [epsilon_outage_capacity(pop, c, eps, engine, measure) for c in grid_powers]


def min_grid_power(
    pop: Population,
    storage: float,
    eps: float,
    engine: Engine = Engine.SPECTRAL,
) -> GridPowerResult:
    """Smallest C (kW) with P(S > B) <= eps"""
    engine = Engine(engine)
    _check_epsilon(eps)
    if storage < 0:
        raise DomainError(f"storage must be nonnegative, got {storage}")
    mean = mean_demand(pop)
    peak = peak_demand(pop)

    if engine is Engine.EFFECTIVE_DEMAND:
        c = ed.grid_power_for(pop, storage, eps)
        return GridPowerResult(
            grid_power=c,
            engine=engine,
            achieved=_exact_survivor(pop, c, storage) if c > mean else None,
            iterations=0,
            bracket=0.0,
        )

    if engine is Engine.CLOSED_FORM:
        _require_single_user(pop, engine)
        consumer = pop.classes[0]

        def survivor(c: float) -> float:
            chi, c_norm, b = normalize_single_user(consumer, c, storage)
            if c_norm >= 1.0:
                return 0.0
            return single_user_overflow(chi, c_norm, b)

    else:
        model = build_generator_multi(pop)

        def survivor(c: float) -> float:
            if c >= peak:
                return 0.0
            sol = spectral_solver.solve(model, c)
            return spectral_solver.survivor_probability(sol, storage)

    def meets_target(c: float) -> bool:
        return c > mean and survivor(c) <= eps

    if not meets_target(peak):
        raise InfeasibleError(
            f"outage target {eps:.6g} unreachable even at peak grid power {peak:.6g} kW"
        )
    search = bisect_monotone(
        meets_target, mean, peak, tol=BRACKET_TOL * max(1.0, peak), max_iter=MAX_ITERATIONS
    )
    return GridPowerResult(
        grid_power=search.value,
        engine=engine,
        achieved=survivor(search.value),
        iterations=search.iterations,
        bracket=search.bracket,
        converged=search.converged,
    )


def peak_allocation_storage(pop: Population, grid_power: float, support_duration: float) -> float:
    """Storage covering the full-simultaneity shortfall for one support duration"""
    return max(peak_demand(pop) - grid_power, 0.0) * support_duration


def peak_savings(
    pop: Population,
    grid_power: float,
    eps: float,
    support_duration: float,
    engine: Engine = Engine.SPECTRAL,
) -> float:
    """1 - B(eps) / B_peak"""
    if support_duration <= 0:
        raise DomainError(f"support duration must be positive, got {support_duration}")
    b_peak = peak_allocation_storage(pop, grid_power, support_duration)
    if b_peak <= 0:
        raise UndefinedSavingsError(
            f"grid power {grid_power:.6g} kW covers the peak demand; no peak-sized storage"
        )
    result = epsilon_outage_capacity(pop, grid_power, eps, engine)
    return min(max(1.0 - result.storage / b_peak, 0.0), 1.0)


def default_engine_for(pop: Population) -> Engine:
    """Spectral when the dense eigenproblem fits, effective demand otherwise"""
    if pop.state_space_size <= get_settings().max_dense_states:
        return Engine.SPECTRAL
    return Engine.EFFECTIVE_DEMAND
