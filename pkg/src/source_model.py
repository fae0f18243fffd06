"""
On/Off consumer classes and the composite birth-death chain

Each consumer alternates between Off and On; Off durations are exponential
with rate lambda and On durations exponential with rate mu. A population of
K classes is modelled as a K-dimensional birth-death chain over occupancy
tuples n = (n_1..n_K), where n_k counts the On consumers of class k.

States are enumerated mixed-radix with n_1 varying fastest, so the index of
n is sum_k n_k * prod_{j<k} (N_j + 1).
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.stats import binom

from config import get_settings
from errors import CapacityError, ParameterDomainError, ScenarioError


@dataclass(frozen=True)
class ConsumerClass:
    """One appliance type: Off->On rate, On->Off rate and power drawn while On"""

    lam: float
    mu: float
    peak_demand: float

    def __post_init__(self):
        for name, value in (
            ("lambda", self.lam),
            ("mu", self.mu),
            ("peak_demand", self.peak_demand),
        ):
            if not (isinstance(value, (int, float)) and math.isfinite(value)):
                raise ParameterDomainError(f"{name} must be a finite number, got {value!r}")
            if value <= 0:
                raise ParameterDomainError(f"{name} must be positive, got {value}")

    @classmethod
    def normalized(cls, lam: float) -> "ConsumerClass":
        """Class in normalized units: time in mean On durations, power in peaks"""
        return cls(lam=lam, mu=1.0, peak_demand=1.0)

    @property
    def chi(self) -> float:
        """Activity ratio lambda/mu"""
        return self.lam / self.mu

    @property
    def on_probability(self) -> float:
        """Long-run share of time the appliance is On"""
        return self.lam / (self.lam + self.mu)

    @property
    def mean_demand(self) -> float:
        """Stationary mean draw of one user, in kW"""
        return self.peak_demand * self.on_probability

    def to_dict(self) -> Dict[str, float]:
        return {"lambda": self.lam, "mu": self.mu, "peak_demand": self.peak_demand}


@dataclass(frozen=True)
class Population:
    """Per-class user counts over a set of consumer classes"""

    classes: Tuple[ConsumerClass, ...]
    counts: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "counts", tuple(self.counts))
        if len(self.classes) != len(self.counts):
            raise ParameterDomainError(
                f"{len(self.classes)} classes but {len(self.counts)} counts"
            )
        if not self.classes:
            raise ParameterDomainError("population needs at least one class")
        for count in self.counts:
            if isinstance(count, bool) or int(count) != count or count < 0:
                raise ParameterDomainError(
                    f"counts must be nonnegative integers, got {count!r}"
                )
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if not any(self.counts):
            raise ParameterDomainError("at least one class count must be positive")

    @classmethod
    def single(cls, n_users: int, consumer: ConsumerClass) -> "Population":
        """Homogeneous pool of n_users identical consumers"""
        return cls(classes=(consumer,), counts=(n_users,))

    @classmethod
    def from_dict(cls, document: Dict, normalized: bool = False) -> "Population":
        """Build from {"classes": [{"lambda", "mu", "peak_demand"}], "counts": [..]}.

        In normalized mode mu and peak_demand default to 1.
        """
        if not isinstance(document, dict):
            raise ScenarioError("population must be a JSON object", field="population")
        for key in ("classes", "counts"):
            if key not in document:
                raise ScenarioError("missing population entry", field=key)
        classes = []
        for index, entry in enumerate(document["classes"]):
            field = f"classes[{index}]"
            if "lambda" not in entry:
                raise ScenarioError("missing rate", field=f"{field}.lambda")
            try:
                if normalized:
                    classes.append(
                        ConsumerClass(
                            lam=float(entry["lambda"]),
                            mu=float(entry.get("mu", 1.0)),
                            peak_demand=float(entry.get("peak_demand", 1.0)),
                        )
                    )
                else:
                    for key in ("mu", "peak_demand"):
                        if key not in entry:
                            raise ScenarioError(
                                "missing value (physical units)", field=f"{field}.{key}"
                            )
                    classes.append(
                        ConsumerClass(
                            lam=float(entry["lambda"]),
                            mu=float(entry["mu"]),
                            peak_demand=float(entry["peak_demand"]),
                        )
                    )
            except (TypeError, ValueError) as e:
                if isinstance(e, ParameterDomainError):
                    raise
                raise ScenarioError(f"non-numeric class parameter: {e}", field=field)
        return cls(classes=tuple(classes), counts=tuple(document["counts"]))

    def to_dict(self) -> Dict:
        """Inverse of from_dict in physical form"""
        return {
            "classes": [c.to_dict() for c in self.classes],
            "counts": list(self.counts),
        }

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def state_space_size(self) -> int:
        """Number of occupancy tuples, prod(n_k + 1)"""
        # Python ints, so no overflow for any population
        return math.prod(n + 1 for n in self.counts)

    def with_counts(self, counts: Sequence[int]) -> "Population":
        """Same classes with new per-class user counts.

        Used by the admission-region and monotonicity scans; counts are
        validated again by the constructor.
        """
        return Population(classes=self.classes, counts=tuple(counts))


@dataclass(frozen=True)
class FluidModel:
    """Enumerated chain with generator, per-state load and stationary law"""

    states: np.ndarray  # (S, K) occupancy tuples
    generator: sp.csr_matrix  # (S, S) rate table, rows sum to zero
    loads: np.ndarray  # (S,) aggregate demand in kW
    stationary: np.ndarray  # (S,)
    log_stationary: np.ndarray  # (S,) log of stationary, finite where it underflows

    @property
    def n_states(self) -> int:
        return self.loads.shape[0]

    @property
    def mean_load(self) -> float:
        """Stationary mean aggregate demand"""
        return float(self.stationary @ self.loads)

    def dense_generator(self) -> np.ndarray:
        """Generator as a dense array for the eigen solvers"""
        return self.generator.toarray()


def _check_class(consumer: ConsumerClass) -> None:
    if not isinstance(consumer, ConsumerClass):
        raise ParameterDomainError(f"expected a ConsumerClass, got {type(consumer).__name__}")


def stationary_distribution(n_users: int, consumer: ConsumerClass) -> np.ndarray:
    """Binomial(N, lambda/(lambda+mu)) law of the number of On consumers"""
    _check_class(consumer)
    if int(n_users) != n_users or n_users < 1:
        raise ParameterDomainError(f"n_users must be a positive integer, got {n_users}")
    return binom.pmf(np.arange(n_users + 1), n_users, consumer.on_probability)


def _log_stationary(states: np.ndarray, pop: Population) -> np.ndarray:
    log_pi = np.zeros(states.shape[0])
    for k, (consumer, count) in enumerate(zip(pop.classes, pop.counts)):
        log_pi += binom.logpmf(states[:, k], count, consumer.on_probability)
    return log_pi


def _enumerate_states(counts: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    radices = np.array([n + 1 for n in counts], dtype=np.int64)
    strides = np.concatenate(([1], np.cumprod(radices)[:-1])).astype(np.int64)
    index = np.arange(int(np.prod(radices)), dtype=np.int64)
    states = (index[:, None] // strides[None, :]) % radices[None, :]
    return states, strides


def build_generator_multi(
    pop: Population, max_states: Optional[int] = None
) -> FluidModel:
    """Composite chain for K classes; transitions only to neighbouring tuples"""
    cap = max_states if max_states is not None else get_settings().max_states
    size = pop.state_space_size
    if size > cap:
        raise CapacityError(size, cap)

    states, strides = _enumerate_states(pop.counts)
    index = np.arange(size, dtype=np.int64)
    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    rates: List[np.ndarray] = []

    for k, (consumer, count) in enumerate(zip(pop.classes, pop.counts)):
        n_k = states[:, k]
        up = n_k < count
        rows.append(index[up])
        cols.append(index[up] + strides[k])
        rates.append((count - n_k[up]) * consumer.lam)
        down = n_k > 0
        rows.append(index[down])
        cols.append(index[down] - strides[k])
        rates.append(n_k[down] * consumer.mu)

    row = np.concatenate(rows)
    col = np.concatenate(cols)
    rate = np.concatenate(rates).astype(float)
    off_diagonal = sp.coo_matrix((rate, (row, col)), shape=(size, size)).tocsr()
    exit_rates = np.asarray(off_diagonal.sum(axis=1)).ravel()
    generator = (off_diagonal - sp.diags(exit_rates)).tocsr()

    peaks = np.array([c.peak_demand for c in pop.classes])
    loads = states @ peaks
    log_pi = _log_stationary(states, pop)
    stationary = np.exp(log_pi)
    stationary /= stationary.sum()

    return FluidModel(
        states=states,
        generator=generator,
        loads=loads,
        stationary=stationary,
        log_stationary=log_pi,
    )


def build_generator_single(n_users: int, consumer: ConsumerClass) -> FluidModel:
    """(N+1)-state birth-death chain of one class"""
    _check_class(consumer)
    if int(n_users) != n_users or n_users < 1:
        raise ParameterDomainError(f"n_users must be a positive integer, got {n_users}")
    return build_generator_multi(Population.single(int(n_users), consumer))


def mean_demand(pop: Population) -> float:
    """Sum over classes of N_k R_k lambda_k / (lambda_k + mu_k)"""
    return float(sum(n * c.mean_demand for c, n in zip(pop.classes, pop.counts)))


def peak_demand(pop: Population) -> float:
    """Aggregate demand when every consumer is On"""
    return float(sum(n * c.peak_demand for c, n in zip(pop.classes, pop.counts)))


def stationary_by_linear_solve(generator: np.ndarray) -> np.ndarray:
    """Solve pi M = 0, sum(pi) = 1 directly (independent check of the product form)"""
    generator = np.asarray(generator, dtype=float)
    size = generator.shape[0]
    system = generator.T.copy()
    system[-1, :] = 1.0
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    return np.linalg.solve(system, rhs)
