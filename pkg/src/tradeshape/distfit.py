"""Log-space histograms, log-normal fits and export-shape classification.

Volumes are handled in natural logs internally; base-10 values appear only in
histogram edges and in the ``*_log10`` fields meant for presentation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special, stats

if TYPE_CHECKING:
    from tradeshape.gof import GofResult

LN10 = math.log(10.0)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


class DegenerateSampleError(ValueError):
    """Raised when a sample cannot support a log-normal fit."""


@dataclass(frozen=True)
class Histogram:
    bin_edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    normalized: bool = False

    @property
    def centers(self) -> NDArray[np.float64]:
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def mode_log10(self) -> float:
        """Midpoint of the highest-count bin; ties go to the lower bin."""
        return float(self.centers[int(np.argmax(self.counts))])


@dataclass(frozen=True)
class LogNormalFit:
    """Log-normal parameters of a volume sample.

    ``mu`` and ``sigma`` are the mean and standard deviation of ``ln(E)``.
    For a fit made on a right-truncated subsample, ``upper_log`` is the
    truncation point in natural-log units and the parameters describe the
    untruncated parent law.
    """

    mu: float
    sigma: float
    n: int
    log_likelihood: float
    mu_se: float = math.nan
    sigma_se: float = math.nan
    upper_log: float | None = None

    @property
    def mode_log10(self) -> float:
        # Peak of the log10(E) histogram density, which is where the class
        # thresholds (3 and 7 decades) are read off.
        return self.mu / LN10

    @property
    def density_mode_log10(self) -> float:
        """log10 of the mode of the density of E itself."""
        return (self.mu - self.sigma**2) / LN10

    def cdf(self, x: ArrayLike) -> NDArray[np.float64]:
        """CDF of the fitted law at volumes ``x`` (conditional on truncation)."""
        return self.log_cdf_values(np.log(np.asarray(x, dtype=float)))

    def log_cdf_values(self, y: ArrayLike) -> NDArray[np.float64]:
        """CDF evaluated at natural-log volumes ``y``."""
        if self.sigma <= 0:
            raise DegenerateSampleError("degenerate sample (σ=0)")
        z = (np.asarray(y, dtype=float) - self.mu) / self.sigma
        if self.upper_log is None:
            return special.ndtr(z)
        # ratio in log space so a far-off truncation point cannot give 0/0
        top = special.log_ndtr((self.upper_log - self.mu) / self.sigma)
        return np.minimum(np.exp(special.log_ndtr(z) - top), 1.0)

    def quantile(self, p: float) -> float:
        """Volume quantile of the untruncated parent law."""
        return math.exp(self.mu + self.sigma * float(special.ndtri(p)))


class ShapeClass(str, enum.Enum):
    TRUNCATED = "TruncatedLogNormal"
    FULL = "FullLogNormal"
    PARETO = "ParetoLogNormal"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class ShapeResult:
    shape: ShapeClass
    left_truncation_score: float
    right_excess_score: float
    mode_log10: float
    left_cvm_pvalue: float = math.nan


@dataclass(frozen=True)
class ClassifierConfig:
    excess_threshold: float = 0.05
    truncation_threshold: float = 0.03
    low_mode_log10: float = 3.0
    left_alpha: float = 0.01
    tail_percentile: float = 0.9

    def __post_init__(self) -> None:
        if not (self.excess_threshold >= 0 and 0 <= self.truncation_threshold < 1):
            raise ValueError("mass thresholds must be non-negative fractions")
        if not (0 < self.left_alpha < 1 and 0 < self.tail_percentile < 1):
            raise ValueError("left_alpha and tail_percentile must lie in (0, 1)")


def _positive_array(sample: ArrayLike) -> NDArray[np.float64]:
    x = np.asarray(sample, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise ValueError("sample values must be finite and strictly positive")
    return x


def log_histogram(
    sample: ArrayLike,
    width: float = 0.25,
    anchor: str = "floor",
    normalized: bool = False,
) -> Histogram:
    """Histogram of ``log10(sample)`` with fixed-width bins.

    With ``anchor="floor"`` the first edge is ``floor(min log10)``; with
    ``anchor="min"`` it is the smallest log value itself, which makes the bin
    layout equivariant under rescaling of the sample. Bins are half-open
    ``[a, b)`` and enough of them are laid out to contain the maximum.
    """
    if width <= 0:
        raise ValueError("bin width must be positive")
    logs = np.log10(_positive_array(sample))
    lo_val = float(logs.min())
    if anchor == "floor":
        lo = math.floor(lo_val)
    elif anchor == "min":
        lo = lo_val
    else:
        raise ValueError(f"unknown anchor {anchor!r}")
    idx = np.floor((logs - lo) / width).astype(np.int64)
    idx[idx < 0] = 0
    nbins = int(idx.max()) + 1
    edges = lo + width * np.arange(nbins + 1, dtype=float)
    counts = np.bincount(idx, minlength=nbins).astype(np.int64)
    if normalized:
        dens = counts / (counts.sum() * width)
        return Histogram(edges, dens, normalized=True)  # type: ignore[arg-type]
    return Histogram(edges, counts)


def histogram_parabola(hist: Histogram) -> tuple[NDArray[np.float64], float]:
    """Least-squares parabola through log10(count) of occupied bins.

    Returns ``(coefficients, r_squared)`` with coefficients highest power
    first. Diagnostic only: a log-normal sample gives a downward parabola.
    """
    occupied = hist.counts > 0
    if occupied.sum() < 3:
        raise ValueError("need at least three occupied bins for a parabola")
    x = hist.centers[occupied]
    y = np.log10(hist.counts[occupied].astype(float))
    coef = np.polyfit(x, y, 2)
    resid = y - np.polyval(coef, x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return coef, r2


def lognormal_loglik(sample: ArrayLike, mu: float, sigma: float) -> float:
    """Log-likelihood of ``sample`` under LogNormal(mu, sigma)."""
    y = np.log(_positive_array(sample))
    z = (y - mu) / sigma
    return float(-(y.sum()) - y.size * (math.log(sigma) + _HALF_LOG_2PI) - 0.5 * (z * z).sum())


def fit_lognormal(sample: ArrayLike) -> LogNormalFit:
    """Maximum-likelihood log-normal fit (population standard deviation)."""
    x = _positive_array(sample)
    if x.size < 2:
        raise DegenerateSampleError("need at least two observations")
    y = np.log(x)
    mu = float(y.mean())
    sigma = float(np.sqrt(((y - mu) ** 2).mean()))
    if sigma == 0.0 or np.all(x == x[0]):
        raise DegenerateSampleError("degenerate sample (σ=0)")
    n = x.size
    ll = float(-(y.sum()) - n * (math.log(sigma) + _HALF_LOG_2PI) - 0.5 * n)
    return LogNormalFit(
        mu=mu,
        sigma=sigma,
        n=n,
        log_likelihood=ll,
        mu_se=sigma / math.sqrt(n),
        sigma_se=sigma / math.sqrt(2 * n),
    )


def _truncated_nll(theta, y, c):
    mu, log_s = theta
    s = math.exp(log_s)
    z = (y - mu) / s
    return y.size * (log_s + float(special.log_ndtr((c - mu) / s))) + 0.5 * float((z * z).sum())


def _numeric_hessian(fun, theta, h=1e-4):
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = h
            ej[j] = h
            val = (
                fun(theta + ei + ej)
                - fun(theta + ei - ej)
                - fun(theta - ei + ej)
                + fun(theta - ei - ej)
            ) / (4 * h * h)
            hess[i, j] = hess[j, i] = val
    return hess


def left_of_mode(sample: ArrayLike, width: float = 0.25) -> tuple[NDArray[np.float64], float]:
    """Points at or below the empirical modal volume and that mode (log10).

    The mode is the midpoint of the highest-count bin of a histogram anchored
    at the sample minimum.
    """
    x = _positive_array(sample)
    mode10 = log_histogram(x, width=width, anchor="min").mode_log10()
    keep = np.log10(x) <= mode10
    return x[keep], mode10


def refit_left_of_mode(
    sample: ArrayLike,
    full_fit: LogNormalFit,
    width: float = 0.25,
    min_points: int = 10,
) -> LogNormalFit:
    """Refit the left wing only, as a normal right-truncated at the mode.

    The returned fit describes the parent log-normal; its ``upper_log`` field
    records the truncation point so that ``cdf`` is the conditional law of the
    kept points.
    """
    left, mode10 = left_of_mode(sample, width)
    if left.size < min_points:
        raise DegenerateSampleError(
            f"too few left-of-mode points ({left.size} < {min_points})"
        )
    y = np.log(left)
    c = mode10 * LN10
    s0 = max(full_fit.sigma, float(y.std()), 1e-3)
    res = optimize.minimize(
        _truncated_nll,
        x0=np.array([full_fit.mu, math.log(s0)]),
        args=(y, c),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    mu, log_s = (float(v) for v in res.x)
    sigma = math.exp(log_s)

    def nll_ms(theta):
        return _truncated_nll((theta[0], math.log(theta[1])), y, c)

    try:
        cov = np.linalg.inv(_numeric_hessian(nll_ms, [mu, sigma], h=1e-4 * sigma))
        mu_se, sigma_se = (math.sqrt(v) if v > 0 else math.nan for v in np.diag(cov))
    except np.linalg.LinAlgError:
        mu_se = sigma_se = math.nan
    ll = -float(res.fun) - y.size * _HALF_LOG_2PI - float(y.sum())
    return LogNormalFit(
        mu=mu,
        sigma=sigma,
        n=int(y.size),
        log_likelihood=ll,
        mu_se=mu_se,
        sigma_se=sigma_se,
        upper_log=c,
    )


def left_truncation_score(sample: ArrayLike, full_fit: LogNormalFit) -> float:
    """Mass the full fit places below the smallest observed volume."""
    x = _positive_array(sample)
    return float(special.ndtr((math.log(x.min()) - full_fit.mu) / full_fit.sigma))


def right_excess_score(sample: ArrayLike, left_fit: LogNormalFit, percentile: float = 0.9) -> float:
    """Empirical minus fitted mass above the fitted ``percentile`` of the left fit."""
    x = _positive_array(sample)
    cut = left_fit.mu + left_fit.sigma * float(special.ndtri(percentile))
    emp = float(np.count_nonzero(np.log(x) > cut)) / x.size
    return emp - (1.0 - percentile)


def left_cvm_pvalue(sample: ArrayLike, left_fit: LogNormalFit) -> float:
    """Asymptotic CvM p-value of the left subsample against the truncated fit."""
    if left_fit.upper_log is None:
        raise ValueError("left_fit must carry its truncation point")
    y = np.log(_positive_array(sample))
    y = y[y <= left_fit.upper_log]
    return float(stats.cramervonmises(y, left_fit.log_cdf_values).pvalue)


def classify_shape(
    sample: ArrayLike,
    full_fit: LogNormalFit,
    left_fit: LogNormalFit | None,
    gof: GofResult,
    config: ClassifierConfig | None = None,
) -> ShapeResult:
    """Assign one of the three export-shape classes, or Indeterminate.

    Rules, first match wins:

    1. truncated: the fitted mode is low and the full fit puts more than
       ``truncation_threshold`` of its mass below the smallest volume;
    2. Pareto-log-normal: the single log-normal is rejected by CvM, the
       sample has more than ``excess_threshold`` extra mass above the 90th
       percentile of the left-wing fit, and that left-wing fit itself passes
       CvM on the left subsample;
    3. full log-normal: CvM accepts the single log-normal;
    4. otherwise Indeterminate.

    ``left_fit`` may be None when the left wing is too thin to refit; rule 2
    is then skipped.
    """
    cfg = config or ClassifierConfig()
    trunc = left_truncation_score(sample, full_fit)
    mode10 = full_fit.mode_log10
    if left_fit is not None:
        excess = right_excess_score(sample, left_fit, cfg.tail_percentile)
        p_left = left_cvm_pvalue(sample, left_fit)
    else:
        excess = math.nan
        p_left = math.nan

    if mode10 < cfg.low_mode_log10 and trunc > cfg.truncation_threshold:
        shape = ShapeClass.TRUNCATED
    elif (
        left_fit is not None
        and gof.reject_cvm
        and excess > cfg.excess_threshold
        and p_left >= cfg.left_alpha
    ):
        shape = ShapeClass.PARETO
    elif not gof.reject_cvm:
        shape = ShapeClass.FULL
    else:
        shape = ShapeClass.INDETERMINATE
    return ShapeResult(shape, trunc, excess, mode10, p_left)
