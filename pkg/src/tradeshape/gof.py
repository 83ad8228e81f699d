"""Goodness-of-fit of the log-normal hypothesis.

KS and CvM statistics are computed against a log-normal fitted to the same
sample, so classical critical values are too lenient. P-values are therefore
calibrated by a parametric bootstrap: each replicate draws N values from the
fitted law, refits, and recomputes the statistic. Asymptotic ("naive")
p-values for a fully specified law are reported alongside for comparison.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special, stats

from tradeshape.distfit import DegenerateSampleError, LogNormalFit, fit_lognormal

KINDS = ("ks", "cvm")


@dataclass(frozen=True)
class Ecdf:
    sorted_values: NDArray[np.float64]

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)

    def __call__(self, x: ArrayLike) -> NDArray[np.float64] | float:
        out = np.searchsorted(self.sorted_values, x, side="right") / self.n
        return float(out) if np.ndim(out) == 0 else out

    def plateaus(self) -> NDArray[np.float64]:
        """Height reached at each order statistic, k/N for k = 1..N."""
        return np.arange(1, self.n + 1) / self.n


def ecdf(sample: ArrayLike) -> Ecdf:
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    return Ecdf(x)


def ks_from_uniform(u: ArrayLike) -> NDArray[np.float64] | float:
    """Two-sided KS distance for CDF values sorted ascending along the last axis."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    i = np.arange(1, n + 1)
    d_plus = (i / n - u).max(axis=-1)
    d_minus = (u - (i - 1) / n).max(axis=-1)
    return np.maximum(d_plus, d_minus)


def cvm_from_uniform(u: ArrayLike) -> NDArray[np.float64] | float:
    """CvM W^2 for CDF values sorted ascending along the last axis."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    mid = (2 * np.arange(1, n + 1) - 1) / (2 * n)
    return 1.0 / (12 * n) + ((mid - u) ** 2).sum(axis=-1)


_STAT = {"ks": ks_from_uniform, "cvm": cvm_from_uniform}


def _fitted_uniforms(sample: ArrayLike, fit: LogNormalFit) -> NDArray[np.float64]:
    if not fit.sigma > 0:
        raise DegenerateSampleError("degenerate sample (σ=0)")
    y = np.sort(np.log(np.asarray(sample, dtype=float).ravel()))
    return special.ndtr((y - fit.mu) / fit.sigma)


def ks_statistic(sample: ArrayLike, fit: LogNormalFit) -> float:
    return float(ks_from_uniform(_fitted_uniforms(sample, fit)))


def cvm_statistic(sample: ArrayLike, fit: LogNormalFit) -> float:
    return float(cvm_from_uniform(_fitted_uniforms(sample, fit)))


def seed_words(seed: int | Sequence[int], *keys: int | str) -> list[int]:
    """Entropy words for numpy's SeedSequence from a base seed and keys.

    String keys (country codes) are hashed with CRC-32 so the derived stream
    does not depend on scheduling or process.
    """
    words = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    for k in keys:
        words.append(zlib.crc32(k.encode()) if isinstance(k, str) else int(k))
    return words


def bootstrap_distribution(
    fit: LogNormalFit,
    n: int,
    replicates: int,
    seed: int | Sequence[int],
) -> dict[str, NDArray[np.float64]]:
    """Bootstrap KS and CvM statistics under the fitted log-normal.

    Replicate ``b`` uses its own PCG64 stream seeded from ``(seed, b)``.
    Draws are made directly in log space (normal with the fitted parameters),
    which is the same law as exponentiating and taking logs again.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    base = seed_words(seed)
    y = np.empty((replicates, n))
    for b in range(replicates):
        rng = np.random.Generator(np.random.PCG64(base + [b]))
        y[b] = rng.normal(fit.mu, fit.sigma, size=n)
    y.sort(axis=1)
    mu = y.mean(axis=1, keepdims=True)
    sd = np.sqrt(((y - mu) ** 2).mean(axis=1, keepdims=True))
    u = special.ndtr((y - mu) / sd)
    return {"ks": ks_from_uniform(u), "cvm": cvm_from_uniform(u)}


def pvalue_from_distribution(observed: float, boot: ArrayLike) -> float:
    """(1 + #{boot >= observed}) / (B + 1)."""
    boot = np.asarray(boot, dtype=float)
    return (1.0 + np.count_nonzero(boot >= observed)) / (boot.size + 1.0)


def bootstrap_pvalue(
    sample: ArrayLike,
    statistic_kind: str,
    replicates: int = 1000,
    seed: int | Sequence[int] = 0,
) -> tuple[float, float]:
    """Observed statistic and its parametric-bootstrap p-value."""
    if statistic_kind not in _STAT:
        raise ValueError(f"statistic_kind must be one of {KINDS}")
    if replicates < 100:
        raise ValueError("bootstrap needs B >= 100")
    x = np.asarray(sample, dtype=float).ravel()
    fit = fit_lognormal(x)
    observed = float(_STAT[statistic_kind](_fitted_uniforms(x, fit)))
    boot = bootstrap_distribution(fit, x.size, replicates, seed)[statistic_kind]
    return observed, pvalue_from_distribution(observed, boot)


@dataclass(frozen=True)
class GofResult:
    n: int
    ks_stat: float
    cvm_stat: float
    ks_pvalue: float
    cvm_pvalue: float
    ks_pvalue_naive: float
    cvm_pvalue_naive: float
    alpha_ks: float = 0.05
    alpha_cvm: float = 0.01
    bootstrap_replicates: int = 1000
    seed: list[int] = field(default_factory=list)

    @property
    def calibration(self) -> str:
        return "bootstrap" if self.bootstrap_replicates > 0 else "naive"

    @property
    def reject_ks(self) -> bool:
        return self.ks_pvalue < self.alpha_ks

    @property
    def reject_cvm(self) -> bool:
        return self.cvm_pvalue < self.alpha_cvm


def gof_test(
    sample: ArrayLike,
    fit: LogNormalFit | None = None,
    replicates: int = 1000,
    seed: int | Sequence[int] = 0,
    alpha_ks: float = 0.05,
    alpha_cvm: float = 0.01,
) -> GofResult:
    """KS and CvM tests of log-normality sharing one set of bootstrap draws.

    ``replicates=0`` skips the bootstrap; the reject flags then use the naive
    asymptotic p-values.
    """
    x = np.asarray(sample, dtype=float).ravel()
    fit = fit or fit_lognormal(x)
    u = _fitted_uniforms(x, fit)
    d = float(ks_from_uniform(u))
    w2 = float(cvm_from_uniform(u))
    n = x.size
    ks_naive = float(stats.kstwo.sf(d, n))
    cvm_naive = float(stats.cramervonmises(np.log(x), "norm", args=(fit.mu, fit.sigma)).pvalue)
    cvm_naive = min(max(cvm_naive, 0.0), 1.0)
    if replicates:
        if replicates < 100:
            raise ValueError("bootstrap needs B >= 100")
        boot = bootstrap_distribution(fit, n, replicates, seed)
        ks_p = pvalue_from_distribution(d, boot["ks"])
        cvm_p = pvalue_from_distribution(w2, boot["cvm"])
    else:
        ks_p, cvm_p = ks_naive, cvm_naive
    return GofResult(
        n=n,
        ks_stat=d,
        cvm_stat=w2,
        ks_pvalue=ks_p,
        cvm_pvalue=cvm_p,
        ks_pvalue_naive=ks_naive,
        cvm_pvalue_naive=cvm_naive,
        alpha_ks=alpha_ks,
        alpha_cvm=alpha_cvm,
        bootstrap_replicates=replicates,
        seed=seed_words(seed),
    )


@dataclass(frozen=True)
class GofProfile:
    """GoF statistics ordered by fitness rank, with parabola fits.

    Coefficient arrays are highest power first, so ``cvm_coef[0]`` is the
    quadratic coefficient.
    """

    countries: list[str]
    ranks: NDArray[np.int64]
    cvm_stat: NDArray[np.float64]
    ks_pvalue: NDArray[np.float64]
    cvm_coef: NDArray[np.float64]
    ks_coef: NDArray[np.float64]

    def cvm_residuals(self) -> NDArray[np.float64]:
        return self.cvm_stat - np.polyval(self.cvm_coef, self.ranks)


def gof_profile(results: Mapping[str, GofResult], country_order: Mapping[str, int]) -> GofProfile:
    """Order per-country results by fitness rank and fit parabolas.

    ``country_order`` maps country code to fitness rank (1 = fittest).
    """
    codes = [c for c in results if c in country_order]
    if len(codes) < 3:
        raise ValueError("gof_profile needs at least three countries")
    codes.sort(key=lambda c: (country_order[c], c))
    ranks = np.array([country_order[c] for c in codes], dtype=np.int64)
    cvm = np.array([results[c].cvm_stat for c in codes])
    ksp = np.array([results[c].ks_pvalue for c in codes])
    x = ranks.astype(float)
    return GofProfile(
        countries=codes,
        ranks=ranks,
        cvm_stat=cvm,
        ks_pvalue=ksp,
        cvm_coef=np.polyfit(x, cvm, 2),
        ks_coef=np.polyfit(x, ksp, 2),
    )


def rejection_counts(results: Iterable[GofResult]) -> dict[str, int]:
    out = {"ks": 0, "cvm": 0, "total": 0}
    for r in results:
        out["total"] += 1
        out["ks"] += int(r.reject_ks)
        out["cvm"] += int(r.reject_cvm)
    return out


__all__ = [
    "Ecdf",
    "GofProfile",
    "GofResult",
    "bootstrap_distribution",
    "bootstrap_pvalue",
    "cvm_statistic",
    "ecdf",
    "gof_profile",
    "gof_test",
    "ks_statistic",
    "pvalue_from_distribution",
    "rejection_counts",
    "seed_words",
]
