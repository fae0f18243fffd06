"""
Scenario Loader - JSON scenario files and their typed views

A scenario document names a population, a grid power (absolute or per
user), an outage target and the optional blocks read by individual
commands (simulation, sweep, economics). See scenarios/template.json.
"""

import json
import os
from typing import Any, Dict, List, Optional, Tuple

from closed_forms import CapacityDistribution
from errors import ParameterDomainError, ScenarioError
from simulator import SimConfig
from source_model import Population

UNIT_MODES = ("normalized", "physical")


def load_scenario(path: str) -> Dict:
    """Parse one scenario file; malformed JSON reports the offending line"""
    if not os.path.exists(path):
        raise ScenarioError(f"scenario file '{path}' not found")
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"malformed JSON: {e.msg}", line=e.lineno)
    if not isinstance(document, dict):
        raise ScenarioError("scenario must be a JSON object", line=1)
    return document


def unit_mode(document: Dict, override: Optional[str] = None) -> str:
    """Unit mode of a scenario; a command-line override wins over the document"""
    mode = override or document.get("units", "normalized")
    if mode not in UNIT_MODES:
        raise ScenarioError(f"unknown unit mode '{mode}'", field="units")
    return mode


def population_of(document: Dict, mode: str) -> Population:
    """Population block parsed for the unit mode.

    Normalized scenarios measure time in mean On durations, so every class
    must keep mu = 1.
    """
    if "population" not in document:
        raise ScenarioError("missing population block", field="population")
    pop = Population.from_dict(document["population"], normalized=(mode == "normalized"))
    if mode == "normalized":
        for k, c in enumerate(pop.classes):
            if c.mu != 1.0:
                raise ScenarioError(
                    "normalized units measure time in mean On durations, so mu must be 1",
                    field=f"population.classes[{k}].mu",
                )
    return pop


def grid_power_of(document: Dict, pop: Population) -> float:
    """Absolute grid power, or grid_power_per_user times the user count"""
    if "grid_power" in document:
        return _number(document, "grid_power")
    if "grid_power_per_user" in document:
        return _number(document, "grid_power_per_user") * sum(pop.counts)
    raise ScenarioError("missing grid power", field="grid_power")


def _number(document: Dict, key: str, default: Any = None) -> float:
    if key not in document:
        if default is None:
            raise ScenarioError("missing value", field=key)
        return default
    value = document[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"expected a number, got {value!r}", field=key)
    return float(value)


def epsilon_of(document: Dict) -> float:
    """Outage target"""
    return _number(document, "epsilon")


def storage_of(document: Dict) -> float:
    return _number(document, "storage")


def storage_scale_of(document: Dict) -> Optional[float]:
    """kWh per normalized storage unit (peak kW times hours of peak draw per unit), if declared"""
    block = document.get("unit_conversion")
    if block is None:
        return None
    return _number(block, "peak_demand_kw") * _number(block, "storage_unit_hours")


def sim_config_of(document: Dict, pop: Population, grid_power: float) -> Tuple[SimConfig, List[float]]:
    """Simulation settings and the storage levels to report survivors at"""
    block = document.get("simulation")
    if not isinstance(block, dict):
        raise ScenarioError("missing simulation block", field="simulation")
    distribution = None
    if "capacity_distribution" in block:
        try:
            distribution = CapacityDistribution.from_json(block["capacity_distribution"])
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"bad capacity law: {e}", field="simulation.capacity_distribution")
    try:
        config = SimConfig(
            population=pop,
            grid_power=grid_power,
            horizon=_number(block, "horizon"),
            efficiency=_number(block, "efficiency", 1.0),
            warmup=block.get("warmup"),
            replications=int(_number(block, "replications", 10)),
            seed=int(block.get("seed", 0)),
            eta_mode=block.get("eta_mode", "symmetric"),
            charge_rate_cap=block.get("charge_rate_cap"),
            discharge_rate_cap=block.get("discharge_rate_cap"),
            capacity_distribution=distribution,
        )
    except ParameterDomainError as e:
        raise ScenarioError(str(e), field="simulation")
    levels = [float(x) for x in block.get("levels", [0.0])]
    return config, levels
