"""
Monotone-predicate bisection

All sizing searches in this package look for the smallest x at which a
monotone predicate (e.g. "outage probability at x is within target")
turns true. The predicate is kept true at the upper end of the bracket, so
the returned value always satisfies it.
"""

import warnings
from dataclasses import dataclass
from typing import Callable

from errors import InfeasibleError

Predicate = Callable[[float], bool]


@dataclass(frozen=True)
class BisectionResult:
    value: float
    iterations: int
    bracket: float
    converged: bool


def expand_bracket(predicate: Predicate, start: float, cap: float) -> float:
    """Double `start` until the predicate holds; give up beyond `cap`"""
    hi = start
    while not predicate(hi):
        hi *= 2.0
        if hi > cap:
            raise InfeasibleError(
                f"predicate still false at {hi / 2.0:.6g}; search capped at {cap:.6g}"
            )
    return hi


def bisect_monotone(
    predicate: Predicate,
    lo: float,
    hi: float,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> BisectionResult:
    """Shrink [lo, hi] around the switch point of a false->true predicate.

    The returned value is always the upper end, where the predicate holds.
    """
    iterations = 0
    while hi - lo > tol and iterations < max_iter:
        mid = 0.5 * (lo + hi)
        if predicate(mid):
            hi = mid
        else:
            lo = mid
        iterations += 1

    converged = hi - lo <= tol
    if not converged:
        warnings.warn(
            f"bisection stopped after {iterations} iterations with bracket {hi - lo:.3e}",
            RuntimeWarning,
        )
    return BisectionResult(
        value=hi, iterations=iterations, bracket=hi - lo, converged=converged
    )
