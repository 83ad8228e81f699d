"""Nonlinear Fitness-Complexity iteration on a binary export matrix.

One step maps ``(F, Q)`` to

    F~_c = sum_p M_cp Q_p
    Q~_p = 1 / sum_c M_cp / F_c

and then divides each tilded vector by its mean, so both stay at mean one.
On nested matrices some fitness values decay to zero only algebraically and
never settle in value; the solver therefore also stops once the country and
product rankings have been stable for ``rank_patience`` iterations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from tradeshape.rca import BinaryExportMatrix


class ConvergenceMode(str, enum.Enum):
    VALUE = "value"
    RANK = "rank"
    NONE = "none"


@dataclass(frozen=True)
class FitnessConfig:
    max_iterations: int = 1000
    value_tolerance: float = 1e-9
    rank_patience: int = 20
    zero_floor: float = 1e-300

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.value_tolerance > 0 and self.rank_patience > 0 and self.zero_floor > 0):
            raise ValueError("value_tolerance, rank_patience and zero_floor must be positive")


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    delta_f: float
    delta_q: float
    country_rank_changes: int
    product_rank_changes: int


@dataclass
class FitnessResult:
    countries: list[str]
    products: list[str]
    fitness: NDArray[np.float64]
    complexity: NDArray[np.float64]
    iterations_run: int
    converged: bool
    convergence_mode: ConvergenceMode
    trace: list[TraceRow] = field(default_factory=list)

    def fitness_of(self) -> dict[str, float]:
        return dict(zip(self.countries, map(float, self.fitness)))


def iterate_once(
    m: ArrayLike,
    f: ArrayLike,
    q: ArrayLike,
    zero_floor: float = 0.0,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """One coupled update followed by mean normalisation.

    Entries of ``f`` at or below ``zero_floor`` are treated as exactly zero:
    they drop out of the 1/F sums, and every product they export gets
    ``Q~ = 0`` (the limit of an infinite term in the denominator). With the
    default ``zero_floor=0`` the input must be strictly positive apart from
    exact zeros; negative entries are always an error.
    """
    m = np.asarray(m, dtype=float)
    f = np.asarray(f, dtype=float)
    q = np.asarray(q, dtype=float)
    if m.shape != (f.size, q.size):
        raise ValueError(f"matrix shape {m.shape} does not match f ({f.size}) and q ({q.size})")
    if np.any(f < 0) or np.any(q < 0):
        raise ValueError("fitness and complexity must be non-negative")
    if zero_floor == 0.0 and np.any((f == 0) & m.any(axis=1)):
        raise ValueError("zero fitness for an exporting country; pass zero_floor to enable the guard")

    alive = f > zero_floor
    inv_f = np.zeros_like(f)
    inv_f[alive] = 1.0 / f[alive]
    f_t = m @ q
    denom = m.T @ inv_f
    touched_by_zero = (m.T @ (~alive).astype(float)) > 0
    ok = (denom > 0) & ~touched_by_zero
    q_t = np.zeros_like(q)
    q_t[ok] = 1.0 / denom[ok]

    f_mean = f_t.mean()
    q_mean = q_t.mean()
    if f_mean <= 0 or q_mean <= 0:
        raise ValueError("normalisation undefined: all fitness or all complexity vanished")
    f_new = f_t / f_mean
    q_new = q_t / q_mean
    f_new[f_new <= zero_floor] = 0.0
    return f_new, q_new


def _ranking(values: NDArray[np.float64], codes: Sequence[str]) -> NDArray[np.int64]:
    """Ordinal ranks (1 = largest), ties broken by code.

    Values are compared after rounding to 12 significant digits relative to
    the maximum, so float noise between equal entries cannot flip the order.
    """
    scale = values.max() if values.size and values.max() > 0 else 1.0
    key = np.round(values / scale, 12)
    order = np.lexsort((np.asarray(codes), -key))
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[order] = np.arange(1, values.size + 1)
    return ranks


def _max_rel_change(new: NDArray[np.float64], old: NDArray[np.float64]) -> float:
    scale = np.maximum(np.abs(new), np.abs(old))
    diff = np.abs(new - old)
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(scale > 0, diff / scale, 0.0)
    return float(rel.max()) if rel.size else 0.0


def solve(
    m: BinaryExportMatrix,
    cfg: FitnessConfig | None = None,
    callback: Callable[[int, NDArray[np.float64], NDArray[np.float64]], None] | None = None,
) -> FitnessResult:
    """Iterate from F = Q = 1 until value or rank convergence.

    Value convergence: the largest relative change of both vectors falls
    below ``value_tolerance``. Rank convergence: neither ranking changed for
    ``rank_patience`` consecutive iterations. ``callback(n, F, Q)`` is called
    after every iteration.

    Countries without exports get F = 0 after the first step and products
    nobody exports get Q = 0; they stay in the vectors so that the means are
    taken over all C countries and P products.
    """
    cfg = cfg or FitnessConfig()
    mat = np.asarray(m.m, dtype=float)
    if mat.size == 0:
        raise ValueError("empty export matrix")
    c, p = mat.shape
    countries = list(m.countries)
    products = list(m.products)
    f = np.ones(c)
    q = np.ones(p)
    f_rank = _ranking(f, countries)
    q_rank = _ranking(q, products)
    stable = 0
    trace: list[TraceRow] = []
    mode = ConvergenceMode.NONE
    n = 0
    for n in range(1, cfg.max_iterations + 1):
        f_new, q_new = iterate_once(mat, f, q, cfg.zero_floor)
        df = _max_rel_change(f_new, f)
        dq = _max_rel_change(q_new, q)
        fr = _ranking(f_new, countries)
        qr = _ranking(q_new, products)
        cf = int(np.count_nonzero(fr != f_rank))
        cq = int(np.count_nonzero(qr != q_rank))
        trace.append(TraceRow(n, df, dq, cf, cq))
        f, q, f_rank, q_rank = f_new, q_new, fr, qr
        if callback is not None:
            callback(n, f, q)
        if df < cfg.value_tolerance and dq < cfg.value_tolerance:
            mode = ConvergenceMode.VALUE
            break
        stable = stable + 1 if cf == 0 and cq == 0 else 0
        if stable >= cfg.rank_patience:
            mode = ConvergenceMode.RANK
            break
    return FitnessResult(
        countries=countries,
        products=products,
        fitness=f,
        complexity=q,
        iterations_run=n,
        converged=mode is not ConvergenceMode.NONE,
        convergence_mode=mode,
        trace=trace,
    )


def fitness_rank(result: FitnessResult) -> dict[str, int]:
    """Country -> rank by descending fitness (1 = fittest), ties by code."""
    ranks = _ranking(np.asarray(result.fitness, dtype=float), result.countries)
    return dict(zip(result.countries, map(int, ranks)))
