"""
Monte Carlo simulator - event-driven oracle for the fluid model

Simulates the composite On/Off chain exactly (exponential holding times, no
time stepping) and lets the storage deficit S(t) move linearly between events
at the net rate (load - C), scaled by the efficiency and clipped by optional
charge/discharge caps. S is reflected at 0 and unbounded above, so the
estimated survivor is directly comparable with the spectral solution.

Replications draw from independent counter-based streams keyed by
(seed, replication index); results do not depend on execution order.
"""

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from closed_forms import CapacityDistribution
from config import get_settings
from errors import DegenerateInputError, DomainError, EstimatorError, ParameterDomainError
from source_model import Population, mean_demand

logger = logging.getLogger(__name__)

ETA_MODES = ("symmetric", "charge_only")
RANDOM_BLOCK = 4096
# occupancy is tracked per state only below this many states
OCCUPANCY_STATE_CAP = 100_000


@dataclass(frozen=True)
class SimConfig:
    population: Population
    grid_power: float  # kW
    horizon: float
    efficiency: float = 1.0
    warmup: Optional[float] = None  # defaults to 10% of the horizon
    replications: int = 10
    seed: int = 0
    eta_mode: str = "symmetric"
    charge_rate_cap: Optional[float] = None  # P_c, kW
    discharge_rate_cap: Optional[float] = None  # P_d, kW
    capacity_distribution: Optional[CapacityDistribution] = None

    def __post_init__(self):
        if self.warmup is None:
            object.__setattr__(self, "warmup", 0.1 * self.horizon)
        if not self.horizon > 0:
            raise ParameterDomainError(f"horizon must be positive, got {self.horizon}")
        if not 0.0 <= self.warmup < self.horizon:
            raise ParameterDomainError(
                f"warmup must lie in [0, horizon), got {self.warmup} for horizon {self.horizon}"
            )
        if int(self.replications) != self.replications or self.replications < 1:
            raise ParameterDomainError(
                f"replications must be a positive integer, got {self.replications}"
            )
        if not 0.0 < self.efficiency <= 1.0:
            raise ParameterDomainError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if self.eta_mode not in ETA_MODES:
            raise ParameterDomainError(
                f"eta_mode must be one of {ETA_MODES}, got '{self.eta_mode}'"
            )
        for name, cap in (
            ("charge_rate_cap", self.charge_rate_cap),
            ("discharge_rate_cap", self.discharge_rate_cap),
        ):
            if cap is not None and not cap > 0:
                raise ParameterDomainError(f"{name} must be positive, got {cap}")
        if self.grid_power < 0:
            raise ParameterDomainError(f"grid power must be nonnegative, got {self.grid_power}")

    @property
    def observed_time(self) -> float:
        """Horizon after warm-up"""
        return self.horizon - self.warmup


@dataclass(frozen=True)
class SurvivorEstimate:
    level: float  # kWh
    estimate: float
    std_error: Optional[float]  # None for a single replication
    replications: int


@dataclass
class ReplicationResult:
    index: int
    grid_power: float
    time_above: np.ndarray  # fraction of observed time with S > level
    occupancy: Optional[np.ndarray]
    mean_deficit: float
    second_moment: float
    events: int


@dataclass
class SimulationSummary:
    levels: List[float]
    survivor: List[SurvivorEstimate]
    occupancy: Optional[List[float]]
    occupancy_std_error: Optional[List[float]]
    mean_deficit: float
    second_moment: float
    events: int
    replications: int
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "levels": self.levels,
            "estimates": [s.estimate for s in self.survivor],
            "std_errors": [s.std_error for s in self.survivor],
            "occupancy": self.occupancy,
            "occupancy_std_errors": self.occupancy_std_error,
            "mean_deficit": self.mean_deficit,
            "second_moment": self.second_moment,
            "events": self.events,
            "replications": self.replications,
            "notes": self.notes,
        }


def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one replication"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(sequence))


class _Uniforms:
    """Block-buffered uniforms in (0, 1]"""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buffer: List[float] = []
        self.position = 0

    def next(self) -> float:
        if self.position >= len(self.buffer):
            self.buffer = (1.0 - self.rng.random(RANDOM_BLOCK)).tolist()
            self.position = 0
        value = self.buffer[self.position]
        self.position += 1
        return value


def _deficit_rate(config: SimConfig, net_load: float) -> float:
    """dS/dt for a given load minus grid power"""
    eta = config.efficiency
    if config.eta_mode == "symmetric" or net_load < 0:
        rate = eta * net_load
    else:
        rate = net_load
    if rate > 0 and config.discharge_rate_cap is not None:
        rate = min(rate, config.discharge_rate_cap)
    if rate < 0 and config.charge_rate_cap is not None:
        rate = max(rate, -config.charge_rate_cap)
    return rate


def _advance(s0: float, rate: float, dt: float) -> float:
    return max(s0 + rate * dt, 0.0)


def _accumulate(
    s0: float, rate: float, dt: float, levels: np.ndarray, time_above: np.ndarray
) -> tuple:
    """Add one linear segment to the level counters; returns (int S dt, int S^2 dt)"""
    if rate > 0:
        wait = np.maximum(levels - s0, 0.0) / rate
        time_above += np.clip(dt - wait, 0.0, dt)
        s1 = s0 + rate * dt
        return s0 * dt + 0.5 * rate * dt * dt, (s1 ** 3 - s0 ** 3) / (3.0 * rate)
    if rate < 0:
        down = -rate
        active = min(dt, s0 / down)
        time_above += np.clip((s0 - levels) / down, 0.0, active)
        s1 = s0 - down * active
        return s0 * active - 0.5 * down * active * active, (s0 ** 3 - s1 ** 3) / (3.0 * down)
    time_above += np.where(s0 > levels, dt, 0.0)
    return s0 * dt, s0 * s0 * dt


def _run_replication(config: SimConfig, levels: np.ndarray, index: int) -> ReplicationResult:
    pop = config.population
    rng = replication_rng(config.seed, index)
    grid_power = (
        config.capacity_distribution.sample(rng)
        if config.capacity_distribution is not None
        else float(config.grid_power)
    )
    uniforms = _Uniforms(rng)

    counts = list(pop.counts)
    lams = [c.lam for c in pop.classes]
    mus = [c.mu for c in pop.classes]
    peaks = [c.peak_demand for c in pop.classes]
    n_classes = len(counts)
    strides = [1] * n_classes
    for k in range(1, n_classes):
        strides[k] = strides[k - 1] * (counts[k - 1] + 1)

    # start from the stationary occupancy law; warmup still discards the transient in S
    state = [
        int(rng.binomial(n, lam / (lam + mu))) for n, lam, mu in zip(counts, lams, mus)
    ]
    state_index = sum(n * s for n, s in zip(state, strides))
    track_occupancy = pop.state_space_size <= OCCUPANCY_STATE_CAP
    occupancy = np.zeros(pop.state_space_size) if track_occupancy else None

    time_above = np.zeros(levels.shape[0])
    first = second = 0.0
    deficit = 0.0
    t = 0.0
    warmup, horizon = config.warmup, config.horizon
    events = 0

    while t < horizon:
        rates = []
        for k in range(n_classes):
            rates.append((counts[k] - state[k]) * lams[k])
            rates.append(state[k] * mus[k])
        total = sum(rates)
        if total <= 0:
            raise DegenerateInputError(
                f"state {tuple(state)} has no outgoing transitions"
            )

        load = sum(n * r for n, r in zip(state, peaks))
        rate = _deficit_rate(config, load - grid_power)
        t_next = min(t - math.log(uniforms.next()) / total, horizon)

        start = t
        if start < warmup:
            cut = min(warmup, t_next)
            deficit = _advance(deficit, rate, cut - start)
            start = cut
        if t_next > start:
            dt = t_next - start
            a, b = _accumulate(deficit, rate, dt, levels, time_above)
            first += a
            second += b
            if occupancy is not None:
                occupancy[state_index] += dt
            deficit = _advance(deficit, rate, dt)
        t = t_next
        if t >= horizon:
            break

        pick = uniforms.next() * total
        for j, r in enumerate(rates):
            pick -= r
            if pick <= 0 and r > 0:
                break
        else:
            j = max(i for i, r in enumerate(rates) if r > 0)
        k, going_down = divmod(j, 2)
        if going_down:
            state[k] -= 1
            state_index -= strides[k]
        else:
            state[k] += 1
            state_index += strides[k]
        events += 1

    observed = config.observed_time
    return ReplicationResult(
        index=index,
        grid_power=grid_power,
        time_above=time_above / observed,
        occupancy=occupancy / observed if occupancy is not None else None,
        mean_deficit=first / observed,
        second_moment=second / observed,
        events=events,
    )


def _check_levels(levels: Sequence[float]) -> np.ndarray:
    values = np.asarray(list(levels), dtype=float)
    if values.ndim != 1 or np.any(~np.isfinite(values)) or np.any(values < 0):
        raise DomainError(f"levels must be finite and nonnegative, got {list(levels)}")
    return values


def _warn_if_unstable(config: SimConfig) -> None:
    mean = mean_demand(config.population)
    if config.capacity_distribution is not None:
        capacity = float(
            np.dot(config.capacity_distribution.capacities, config.capacity_distribution.probabilities)
        )
    else:
        capacity = config.grid_power
    if not mean < capacity:
        warnings.warn(
            f"mean demand {mean:.6g} kW is not below grid power {capacity:.6g} kW; "
            "the deficit has no steady state",
            RuntimeWarning,
        )


def run_replications(
    config: SimConfig, levels: Sequence[float], max_workers: Optional[int] = None
) -> List[ReplicationResult]:
    """All replications, ordered by replication index"""
    values = _check_levels(levels)
    _warn_if_unstable(config)
    workers = max_workers or get_settings().workers
    results: List[Optional[ReplicationResult]] = [None] * config.replications

    with ThreadPoolExecutor(
        max_workers=min(workers, config.replications), thread_name_prefix="SimRep"
    ) as executor:
        future_to_index = {
            executor.submit(_run_replication, config, values, r): r
            for r in range(config.replications)
        }
        for future in as_completed(future_to_index):
            r = future_to_index[future]
            results[r] = future.result()

    logger.debug(
        "simulated %d replications, %d events",
        config.replications,
        sum(r.events for r in results),
    )
    return results


def _mean_and_error(samples: np.ndarray, need_error: bool):
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        if need_error:
            raise EstimatorError(
                "standard errors need at least 2 replications, got 1"
            )
        return mean, None
    return mean, samples.std(axis=0, ddof=1) / math.sqrt(samples.shape[0])


def estimate_survivor(config: SimConfig, levels: Sequence[float]) -> List[SurvivorEstimate]:
    """Across-replication mean and standard error of the time above each level"""
    if config.replications < 2:
        raise EstimatorError(
            f"standard errors need at least 2 replications, got {config.replications}"
        )
    results = run_replications(config, levels)
    return _survivor_estimates(results, _check_levels(levels), need_error=True)


def _survivor_estimates(
    results: List[ReplicationResult], levels: np.ndarray, need_error: bool
) -> List[SurvivorEstimate]:
    samples = np.vstack([r.time_above for r in results])
    mean, error = _mean_and_error(samples, need_error)
    return [
        SurvivorEstimate(
            level=float(x),
            estimate=float(min(max(m, 0.0), 1.0)),
            std_error=float(error[i]) if error is not None else None,
            replications=len(results),
        )
        for i, (x, m) in enumerate(zip(levels, mean))
    ]


def simulate(config: SimConfig, levels: Sequence[float] = (0.0,)) -> SimulationSummary:
    """Occupancy, deficit moments and survivor estimates in one pass"""
    values = _check_levels(levels)
    results = run_replications(config, values)
    notes = []
    if config.replications < 2:
        notes.append("single replication: standard errors unavailable")

    occupancy = occupancy_error = None
    if results[0].occupancy is not None:
        occ_mean, occ_error = _mean_and_error(
            np.vstack([r.occupancy for r in results]), need_error=False
        )
        occupancy = occ_mean.tolist()
        occupancy_error = occ_error.tolist() if occ_error is not None else None
    else:
        notes.append("state space too large for per-state occupancy")

    return SimulationSummary(
        levels=values.tolist(),
        survivor=_survivor_estimates(results, values, need_error=False),
        occupancy=occupancy,
        occupancy_std_error=occupancy_error,
        mean_deficit=float(np.mean([r.mean_deficit for r in results])),
        second_moment=float(np.mean([r.second_moment for r in results])),
        events=sum(r.events for r in results),
        replications=len(results),
        notes=notes,
    )
