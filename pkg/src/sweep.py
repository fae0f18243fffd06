"""
Sweep Pipeline - multithreaded parameter grid for storage sizing

Expands a declared grid of populations, grid powers and outage targets
into points, sizes each point on a thread pool and returns rows sorted by
grid index, so output order never depends on completion order.
"""

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from errors import ScenarioError, SizingError
from sizing import Engine, epsilon_outage_capacity
from source_model import Population

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    counts: Tuple[int, ...]
    grid_power: float
    epsilon: float


def build_grid(
    base: Population,
    sweep: Dict,
    default_epsilon: Optional[float] = None,
) -> List[SweepPoint]:
    """Cartesian product counts x grid power x epsilon, in declaration order.

    Grid powers come either from "grid_power" (kW) or "grid_power_per_user"
    (kW per user, scaled by each population's size).
    """
    counts_list = sweep.get("counts", [list(base.counts)])
    if "grid_power" in sweep:
        powers, per_user = sweep["grid_power"], False
    elif "grid_power_per_user" in sweep:
        powers, per_user = sweep["grid_power_per_user"], True
    else:
        raise ScenarioError("sweep needs grid_power or grid_power_per_user", field="sweep")
    epsilons = sweep.get("epsilon", [default_epsilon] if default_epsilon is not None else None)
    if not epsilons:
        raise ScenarioError("sweep needs at least one epsilon", field="sweep.epsilon")

    points = []
    for index, (counts, power, eps) in enumerate(itertools.product(counts_list, powers, epsilons)):
        counts = tuple(int(n) for n in counts)
        if len(counts) != base.n_classes:
            raise ScenarioError(
                f"{len(counts)} counts for {base.n_classes} classes", field="sweep.counts"
            )
        grid_power = float(power) * sum(counts) if per_user else float(power)
        points.append(SweepPoint(index, counts, grid_power, float(eps)))
    return points


class SweepPipeline:
    """Reusable multithreaded sizing sweep"""

    def __init__(self, base: Population, engine: Engine = Engine.SPECTRAL, run_log=None):
        self.base = base
        self.engine = Engine(engine)
        self.run_log = run_log

    def execute(
        self,
        points: Sequence[SweepPoint],
        max_workers: int = 4,
        progress_callback: Optional[Callable] = None,
    ) -> List[Dict]:
        """Size every point; raises the lowest-index failure after all points finish"""
        results: Dict[int, Dict] = {}
        failures: Dict[int, SizingError] = {}

        with ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="Sweep") as executor:
            future_to_point = {
                executor.submit(self._size_point, point): point for point in points
            }
            completed = 0
            for future in as_completed(future_to_point):
                point = future_to_point[future]
                completed += 1
                try:
                    results[point.index] = future.result()
                except SizingError as e:
                    failures[point.index] = e
                    if self.run_log:
                        self.run_log.log_error(
                            type(e).__name__,
                            str(e),
                            {"index": point.index, "counts": point.counts, "grid_power": point.grid_power},
                        )
                if progress_callback:
                    progress_callback(completed, len(points), point)

        if failures:
            raise failures[min(failures)]
        return [results[i] for i in sorted(results)]

    def _size_point(self, point: SweepPoint) -> Dict:
        start = time.time()
        pop = self.base.with_counts(point.counts)
        result = epsilon_outage_capacity(pop, point.grid_power, point.epsilon, self.engine)
        if self.run_log:
            self.run_log.log_operation(
                "SWEEP_POINT",
                f"#{point.index} N={list(point.counts)} C={point.grid_power:.6g} "
                f"B={result.storage:.6g} ({time.time() - start:.2f}s)",
            )
        return {
            "N": ";".join(str(n) for n in point.counts),
            "C": point.grid_power,
            "epsilon": point.epsilon,
            "B": result.storage,
            "engine": result.engine.value,
            "achieved": result.achieved,
        }
