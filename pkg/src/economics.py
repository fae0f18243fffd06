"""
Economics - per-user monthly cost of grid-only, storage-only and shared storage

Costs are normalized to the daily peak window: every user runs a number of
identical appliances whose On/Off behaviour during the peak hours follows
the consumer model, and each case is priced per user per month.
"""

import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import numpy_financial as npf
from scipy.stats import binom

from config import get_settings
from errors import (
    DomainError,
    InfeasibleError,
    ParameterDomainError,
    ScenarioError,
)
import effective_demand as ed
from sizing import Engine, default_engine_for, epsilon_outage_capacity
from source_model import ConsumerClass, Population

logger = logging.getLogger(__name__)

CASES = ("grid_only", "ess_only", "shared")
SEGMENTS = ("residential", "small_ci", "large_ci")
SEASONS = ("summer", "winter")
OUTAGE_BUCKETS = {"15min": 15.0, "30min": 30.0, "1h": 60.0, "2h": 120.0}
BREAKEVEN_CAP = 10_000

# storage size (kWh) for a population at a grid power and outage target
Sizer = Callable[[Population, float, float], float]


@dataclass(frozen=True)
class TariffBook:
    power_quality_cost: Dict[str, Dict[str, float]]  # $/kW per event
    outage_cost: Dict[str, Dict[str, float]]  # $/kW by duration bucket
    tou_rates: Dict[str, Dict[str, Dict[str, float]]]  # $/kWh by season, period
    demand_charges: Dict[str, Dict[str, Dict[str, float]]]  # $/kW-month, reference only

    def __post_init__(self):
        for table_name in ("power_quality_cost", "outage_cost", "tou_rates", "demand_charges"):
            for path, value in _walk(getattr(self, table_name), table_name):
                if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                    raise ParameterDomainError(f"{path} must be a nonnegative number, got {value!r}")
        for segment, seasons in self.tou_rates.items():
            for season, rates in seasons.items():
                for period in ("peak", "off_peak"):
                    if not isinstance(rates, dict) or period not in rates:
                        raise ScenarioError(
                            "TOU row needs peak and off_peak rates",
                            field=f"tou_rates.{segment}.{season}.{period}",
                        )
                if rates["peak"] < rates["off_peak"]:
                    raise ParameterDomainError(
                        f"tou_rates.{segment}.{season}: peak rate below off-peak rate"
                    )

    def energy_rate(self, segment: str, season: str, period: str) -> float:
        """$/kWh; season 'average' is the even summer/winter mix"""
        rows = self.tou_rates[segment]
        if season == "average":
            return 0.5 * (rows["summer"][period] + rows["winter"][period])
        return rows[season][period]

    def to_dict(self) -> Dict:
        """Plain nested dicts, the layout from_dict reads"""
        return asdict(self)

    @classmethod
    def from_dict(cls, document: Dict) -> "TariffBook":
        missing = [
            key
            for key in ("power_quality_cost", "outage_cost", "tou_rates", "demand_charges")
            if key not in document
        ]
        if missing:
            raise ScenarioError("tariff book incomplete", field=missing[0])
        return cls(
            power_quality_cost=document["power_quality_cost"],
            outage_cost=document["outage_cost"],
            tou_rates=document["tou_rates"],
            demand_charges=document["demand_charges"],
        )

    @classmethod
    def from_json(cls, path: str) -> "TariffBook":
        with open(path, "r", encoding="utf-8") as f:
            try:
                document = json.load(f)
            except json.JSONDecodeError as e:
                raise ScenarioError(f"tariff book is not valid JSON: {e.msg}", line=e.lineno)
        return cls.from_dict(document)


def _walk(node, path):
    if isinstance(node, dict):
        for key, child in node.items():
            yield from _walk(child, f"{path}.{key}")
    else:
        yield path, node


def default_tariff_book() -> TariffBook:
    """US averages for power quality, outage cost, TOU rates and demand charges"""
    return TariffBook(
        power_quality_cost={
            "residential": {"average": 0.10, "high": 0.60},
            "small_ci": {"average": 0.42, "high": 2.52},
            "large_ci": {"average": 1.42, "high": 14.00},
        },
        outage_cost={
            "residential": {"15min": 0.05, "30min": 0.60, "1h": 2.60, "2h": 3.95},
            "small_ci": {"15min": 8.65, "30min": 16.01, "1h": 23.37, "2h": 48.91},
            "large_ci": {"15min": 4.79, "30min": 7.46, "1h": 10.12, "2h": 17.96},
        },
        tou_rates={
            "residential": {
                "summer": {"peak": 0.25, "off_peak": 0.06},
                "winter": {"peak": 0.13, "off_peak": 0.06},
            },
            "small_ci": {
                "summer": {"peak": 0.18, "off_peak": 0.05},
                "winter": {"peak": 0.12, "off_peak": 0.05},
            },
            "large_ci": {
                "summer": {"peak": 0.06, "off_peak": 0.04},
                "winter": {"peak": 0.05, "off_peak": 0.04},
            },
        },
        demand_charges={
            "residential": {
                "summer": {"peak": 0.0, "off_peak": 0.0},
                "winter": {"peak": 0.0, "off_peak": 0.0},
            },
            "small_ci": {
                "summer": {"peak": 15.0, "off_peak": 15.0},
                "winter": {"peak": 8.0, "off_peak": 8.0},
            },
            "large_ci": {
                "summer": {"peak": 12.0, "off_peak": 12.0},
                "winter": {"peak": 10.0, "off_peak": 10.0},
            },
        },
    )


def load_tariff_book(path: Optional[str] = None) -> TariffBook:
    """Book from `path`, else from STORAGE_SIZING_TARIFF_BOOK, else the default"""
    path = path or get_settings().tariff_book_path
    if path:
        logger.info("loading tariff book from %s", path)
        return TariffBook.from_json(path)
    return default_tariff_book()


@dataclass(frozen=True)
class EconScenario:
    lam: float  # appliance usage frequency, per peak hour
    n_users: int = 1
    case: str = "shared"
    appliances_per_user: int = 15
    peak_demand_per_appliance: float = 1.2  # kW
    peak_days_per_year: int = 250
    peak_hours: float = 1.0
    interruption_minutes_per_year: float = 88.0
    storage_annual_cost: float = 1500.0  # $/year per standalone unit
    storage_capex: Optional[float] = None  # annualized over project_years when given
    project_years: int = 15
    discount_rate: float = 0.10
    grid_headroom: float = 1.20
    epsilon: float = 0.001
    efficiency: float = 1.0
    segment: str = "residential"
    season: str = "summer"
    power_quality_level: str = "average"
    power_quality_events_per_year: float = 1.0

    def __post_init__(self):
        if self.case not in CASES:
            raise ParameterDomainError(f"case must be one of {CASES}, got '{self.case}'")
        if self.segment not in SEGMENTS:
            raise ParameterDomainError(f"segment must be one of {SEGMENTS}, got '{self.segment}'")
        if self.season not in SEASONS + ("average",):
            raise ParameterDomainError(f"unknown season '{self.season}'")
        for name in (
            "lam",
            "appliances_per_user",
            "peak_demand_per_appliance",
            "peak_days_per_year",
            "peak_hours",
            "project_years",
        ):
            if not getattr(self, name) > 0:
                raise ParameterDomainError(f"{name} must be positive, got {getattr(self, name)}")
        for name in (
            "interruption_minutes_per_year",
            "storage_annual_cost",
            "grid_headroom",
            "power_quality_events_per_year",
        ):
            if getattr(self, name) < 0:
                raise ParameterDomainError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if int(self.n_users) != self.n_users or self.n_users < 1:
            raise ParameterDomainError(f"n_users must be a positive integer, got {self.n_users}")
        if not 0.0 <= self.discount_rate < 1.0:
            raise ParameterDomainError(f"discount_rate must lie in [0, 1), got {self.discount_rate}")
        if not 0.0 < self.epsilon < 1.0:
            raise ParameterDomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0.0 < self.efficiency <= 1.0:
            raise ParameterDomainError(f"efficiency must lie in (0, 1], got {self.efficiency}")

    @classmethod
    def from_dict(cls, document: Dict) -> "EconScenario":
        """Build from a scenario economics block; unknown keys are rejected"""
        if "lambda" not in document:
            raise ScenarioError("missing usage frequency", field="lambda")
        known = {f for f in cls.__dataclass_fields__ if f != "lam"}
        unknown = set(document) - known - {"lambda", "n_values", "description", "sizer", "breakeven", "breakeven_cap"}
        if unknown:
            raise ScenarioError("unknown economics entry", field=sorted(unknown)[0])
        kwargs = {k: v for k, v in document.items() if k in known}
        return cls(lam=document["lambda"], **kwargs)

    def with_users(self, n_users: int) -> "EconScenario":
        """Copy with a different number of users"""
        return EconScenario(**{**asdict(self), "n_users": n_users})

    @property
    def appliance(self) -> ConsumerClass:
        # one unit of time is the peak window
        return ConsumerClass(
            lam=self.lam / self.peak_hours,
            mu=1.0 / self.peak_hours,
            peak_demand=self.peak_demand_per_appliance,
        )

    @property
    def mean_user_demand(self) -> float:
        """kW drawn by one user on average during the peak window"""
        return self.appliances_per_user * self.appliance.mean_demand

    @property
    def peak_hours_per_month(self) -> float:
        """Hours of peak window billed per month"""
        return self.peak_hours * self.peak_days_per_year / 12.0

    @property
    def standalone_storage(self) -> float:
        """kWh of a storage unit carrying one user at peak for the whole window"""
        return self.appliances_per_user * self.peak_demand_per_appliance * self.peak_hours

    @property
    def annual_storage_cost(self) -> float:
        """$/year of one standalone unit; capex is annualized when given"""
        if self.storage_capex is not None:
            return annualized_storage_cost(self.storage_capex, self.project_years, self.discount_rate)
        return self.storage_annual_cost


@dataclass
class CostBreakdown:
    case: str
    n_users: int
    items: Dict[str, float]  # $ per user per month
    storage: Optional[float] = None  # kWh of the pooled unit
    notes: List[str] = field(default_factory=list)

    @property
    def total(self) -> float:
        """$ per user per month over all items"""
        return float(sum(self.items.values()))

    def to_dict(self) -> Dict:
        return {
            "case": self.case,
            "n_users": self.n_users,
            "items": dict(self.items),
            "total": self.total,
            "storage": self.storage,
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class BreakevenResult:
    n_users: Optional[int]  # None when no crossover below the cap
    shared_cost: Optional[float]  # at n_users
    previous_shared_cost: Optional[float]  # at n_users - 1
    grid_only_cost: float
    cap: int

    @property
    def found(self) -> bool:
        return self.n_users is not None


def annualized_storage_cost(capex: float, years: int, rate: float) -> float:
    """Capital recovery: capex * r (1+r)^y / ((1+r)^y - 1), capex / y at r = 0"""
    if capex < 0:
        raise DomainError(f"capex must be nonnegative, got {capex}")
    if int(years) != years or years < 1:
        raise DomainError(f"years must be a positive integer, got {years}")
    if not 0.0 <= rate < 1.0:
        raise DomainError(f"rate must lie in [0, 1), got {rate}")
    return float(npf.pmt(rate, years, -capex))


def outage_events(minutes: float) -> List[str]:
    """Split yearly interruption minutes into duration buckets, nearest bucket first"""
    remaining = float(minutes)
    smallest = min(OUTAGE_BUCKETS.values())
    events = []
    while remaining > 0.5 * smallest:
        bucket = min(
            OUTAGE_BUCKETS, key=lambda name: (abs(OUTAGE_BUCKETS[name] - remaining), -OUTAGE_BUCKETS[name])
        )
        events.append(bucket)
        remaining -= OUTAGE_BUCKETS[bucket]
    return events


def _reliability_cost(s: EconScenario, book: TariffBook, demand: float) -> float:
    per_kw = sum(book.outage_cost[s.segment][b] for b in outage_events(s.interruption_minutes_per_year))
    return per_kw * demand / 12.0


def _power_quality_cost(s: EconScenario, book: TariffBook, demand: float) -> float:
    per_kw = book.power_quality_cost[s.segment][s.power_quality_level]
    return per_kw * demand * s.power_quality_events_per_year / 12.0


def pooled_population(s: EconScenario) -> Population:
    """Every appliance of every user as one homogeneous pool"""
    return Population.single(s.n_users * s.appliances_per_user, s.appliance)


def split_load(pop: Population, grid_power: float) -> Dict[str, float]:
    """E[min(L, C)] and E[(L - C)+] in kW for a single-class population"""
    consumer = pop.classes[0]
    n = pop.counts[0]
    on = np.arange(n + 1)
    pmf = binom.pmf(on, n, consumer.on_probability)
    load = on * consumer.peak_demand
    return {
        "grid": float(pmf @ np.minimum(load, grid_power)),
        "storage": float(pmf @ np.maximum(load - grid_power, 0.0)),
    }


def spectral_sizer(pop: Population, grid_power: float, eps: float) -> float:
    """Exact storage from the spectral solve.

    Bounded by the dense eigen solver, so only for pools auto_sizer would
    also send to the spectral engine.
    """
    return epsilon_outage_capacity(pop, grid_power, eps, Engine.SPECTRAL).storage


def effective_demand_sizer(pop: Population, grid_power: float, eps: float) -> float:
    # no exact re-check; breakeven scans call this thousands of times
    return ed.min_storage(pop, grid_power, eps)


def auto_sizer(pop: Population, grid_power: float, eps: float) -> float:
    """Spectral for small pools, effective demand beyond the dense-solver limit"""
    if default_engine_for(pop) is Engine.SPECTRAL:
        return spectral_sizer(pop, grid_power, eps)
    return effective_demand_sizer(pop, grid_power, eps)


SIZERS: Dict[str, Sizer] = {
    "spectral": spectral_sizer,
    "effective_demand": effective_demand_sizer,
    "auto": auto_sizer,
}


def _size(sizer: Sizer, s: EconScenario, n_users: int) -> float:
    pop = pooled_population(s.with_users(n_users))
    grid_power = s.grid_headroom * n_users * s.mean_user_demand
    try:
        return sizer(pop, grid_power, s.epsilon)
    except InfeasibleError as e:
        raise InfeasibleError(f"shared case with {n_users} users: {e}") from e


def scenario_cost(
    s: EconScenario, book: TariffBook, sizer: Sizer = effective_demand_sizer
) -> CostBreakdown:
    """Per-user per-month cost breakdown for the scenario's case"""
    hours = s.peak_hours_per_month
    demand = s.mean_user_demand
    peak_rate = book.energy_rate(s.segment, s.season, "peak")
    off_peak_rate = book.energy_rate(s.segment, s.season, "off_peak") / s.efficiency
    reliability = _reliability_cost(s, book, demand)
    power_quality = _power_quality_cost(s, book, demand)

    if s.case == "grid_only":
        return CostBreakdown(
            case=s.case,
            n_users=s.n_users,
            items={
                "energy_peak": demand * hours * peak_rate,
                "energy_off_peak": 0.0,
                "power_quality": power_quality,
                "reliability": reliability,
                "storage": 0.0,
            },
        )

    if s.case == "ess_only":
        return CostBreakdown(
            case=s.case,
            n_users=s.n_users,
            items={
                "energy_peak": 0.0,
                "energy_off_peak": demand * hours * off_peak_rate,
                "power_quality": 0.0,
                "reliability": 0.0,
                "storage": s.annual_storage_cost / 12.0,
            },
            storage=s.standalone_storage,
        )

    pop = pooled_population(s)
    grid_power = s.grid_headroom * s.n_users * demand
    notes = []
    if s.grid_headroom <= 1.0:
        # the grid cannot carry the mean: no pooling gain, one standalone unit per user
        storage = s.n_users * s.standalone_storage
        units = float(s.n_users)
        notes.append("grid power does not exceed mean demand: pool sized as standalone units")
    else:
        storage = _size(sizer, s, s.n_users)
        reference = _size(sizer, s, 1)
        units = storage / reference if reference > 0 else 0.0

    split = split_load(pop, grid_power)
    return CostBreakdown(
        case=s.case,
        n_users=s.n_users,
        items={
            "energy_peak": split["grid"] / s.n_users * hours * peak_rate,
            "energy_off_peak": split["storage"] / s.n_users * hours * off_peak_rate,
            "power_quality": s.epsilon * power_quality,
            "reliability": s.epsilon * reliability,
            "storage": s.annual_storage_cost * units / s.n_users / 12.0,
        },
        storage=storage,
        notes=notes,
    )


def _case_total(s: EconScenario, case: str, book: TariffBook, sizer: Sizer, n: int) -> float:
    return scenario_cost(EconScenario(**{**asdict(s), "case": case, "n_users": n}), book, sizer).total


def cost_table(
    s: EconScenario, book: TariffBook, sizer: Sizer, n_values: Sequence[int]
) -> List[Dict[str, float]]:
    """One row per population size: the three totals and the shared itemization"""
    grid_only = scenario_cost(EconScenario(**{**asdict(s), "case": "grid_only"}), book, sizer)
    ess_only = scenario_cost(EconScenario(**{**asdict(s), "case": "ess_only"}), book, sizer)
    rows = []
    for n in n_values:
        shared = scenario_cost(
            EconScenario(**{**asdict(s), "case": "shared", "n_users": int(n)}), book, sizer
        )
        row = {
            "n": int(n),
            "grid_only": grid_only.total,
            "ess_only": ess_only.total,
            "shared": shared.total,
        }
        row.update({f"shared_{k}": v for k, v in shared.items.items()})
        row["shared_storage_kwh"] = shared.storage
        rows.append(row)
    return rows


def breakeven_population(
    s: EconScenario, book: TariffBook, sizer: Sizer = effective_demand_sizer, cap: int = BREAKEVEN_CAP
) -> BreakevenResult:
    """Smallest n_users whose shared cost is below the grid-only cost"""
    grid_only = _case_total(s, "grid_only", book, sizer, 1)
    previous = None
    warned = False
    for n in range(1, cap + 1):
        shared = _case_total(s, "shared", book, sizer, n)
        if previous is not None and shared >= previous and not warned:
            warnings.warn(
                f"shared cost not decreasing at n={n} ({previous:.6g} -> {shared:.6g})",
                RuntimeWarning,
            )
            warned = True
        if shared < grid_only:
            logger.info("breakeven at %d users (%.4f < %.4f)", n, shared, grid_only)
            return BreakevenResult(
                n_users=n,
                shared_cost=shared,
                previous_shared_cost=previous,
                grid_only_cost=grid_only,
                cap=cap,
            )
        previous = shared
    logger.info("no breakeven below %d users", cap)
    return BreakevenResult(
        n_users=None,
        shared_cost=None,
        previous_shared_cost=previous,
        grid_only_cost=grid_only,
        cap=cap,
    )
