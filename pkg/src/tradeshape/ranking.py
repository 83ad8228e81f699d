"""Ranking curves of export volumes, their crossings, and indicator ranks."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray


@dataclass(frozen=True)
class RankingCurve:
    country: str
    volumes: NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.volumes.size)

    def as_ecdf_points(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Swap axes: ascending volumes paired with heights i/N."""
        v = self.volumes[::-1]
        return v, np.arange(1, v.size + 1) / v.size


def ranking_curve(sample: ArrayLike, country: str) -> RankingCurve:
    v = np.asarray(sample, dtype=float).ravel()
    if v.size == 0:
        raise ValueError(f"{country}: empty sample")
    if np.any(v <= 0):
        raise ValueError(f"{country}: ranking curves need positive volumes")
    return RankingCurve(country, np.sort(v)[::-1].copy())


def count_crossings(a: RankingCurve, b: RankingCurve) -> int:
    """Sign alternations of a_r - b_r over the shared ranks.

    Zero differences inherit the previous nonzero sign, so touching without
    passing through is not a crossing.
    """
    n = min(len(a), len(b))
    s = np.sign(a.volumes[:n] - b.volumes[:n])
    s = s[s != 0]
    if s.size < 2:
        return 0
    return int(np.count_nonzero(s[1:] != s[:-1]))


@dataclass
class DominanceSummary:
    countries: list[str]
    above_fraction: NDArray[np.float64]
    crossings: NDArray[np.int64]

    @property
    def n_pairs(self) -> int:
        c = len(self.countries)
        return c * (c - 1) // 2

    @property
    def zero_crossing_share(self) -> float:
        """Share of unordered country pairs whose curves never cross."""
        if self.n_pairs == 0:
            return float("nan")
        iu = np.triu_indices(len(self.countries), k=1)
        return float(np.count_nonzero(self.crossings[iu] == 0)) / self.n_pairs

    def pair_rows(self):
        for i, j in combinations(range(len(self.countries)), 2):
            yield (
                self.countries[i],
                self.countries[j],
                float(self.above_fraction[i, j]),
                float(self.above_fraction[j, i]),
                int(self.crossings[i, j]),
            )


def dominance_matrix(curves: Sequence[RankingCurve]) -> DominanceSummary:
    """Pairwise share of shared ranks where one curve lies above, and crossings.

    ``above_fraction[i, j]`` is the fraction of ranks with curve i strictly
    above curve j. A single curve gives empty matrices.
    """
    curves = sorted(curves, key=lambda c: c.country)
    c = len(curves)
    above = np.zeros((c, c))
    cross = np.zeros((c, c), dtype=np.int64)
    for i, j in combinations(range(c), 2):
        a, b = curves[i], curves[j]
        n = min(len(a), len(b))
        d = a.volumes[:n] - b.volumes[:n]
        above[i, j] = np.count_nonzero(d > 0) / n
        above[j, i] = np.count_nonzero(d < 0) / n
        cross[i, j] = cross[j, i] = count_crossings(a, b)
    if c < 2:
        above = np.zeros((0, 0))
        cross = np.zeros((0, 0), dtype=np.int64)
    return DominanceSummary([cv.country for cv in curves], above, cross)


INDICATORS = ("fitness", "gdp", "gdp_pc", "total_export")


@dataclass(frozen=True)
class IndicatorColoring:
    indicator_name: str
    ranks: dict[str, int]
    color_index: dict[str, float]


def indicator_ranks(values: Mapping[str, float], name: str, countries: Sequence[str] | None = None) -> IndicatorColoring:
    """Rank countries by descending indicator (ties by code) and map to [0, 1].

    Color index is ``(rank - 1) / (C - 1)``, so the top country gets 0; a
    lone country gets 0. ``countries`` lists the codes that must be covered.
    """
    if name not in INDICATORS:
        raise ValueError(f"unknown indicator {name!r}")
    needed = list(countries) if countries is not None else list(values)
    missing = sorted(c for c in needed if c not in values or not np.isfinite(values[c]))
    if missing:
        raise ValueError(f"indicator {name!r} missing for: {', '.join(missing)}")
    codes = sorted(needed)
    order = sorted(codes, key=lambda c: (-float(values[c]), c))
    ranks = {c: r for r, c in enumerate(order, start=1)}
    n = len(codes)
    colors = {c: (ranks[c] - 1) / (n - 1) if n > 1 else 0.0 for c in codes}
    return IndicatorColoring(name, ranks, colors)
