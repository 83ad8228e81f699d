"""End-to-end analysis: RCA -> fitness -> per-country fits and tests -> tables."""

from __future__ import annotations

import json
import logging
import math
import os
import platform
import shutil
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
import scipy

from tradeshape import __version__
from tradeshape.config import RunConfig
from tradeshape.distfit import (
    DegenerateSampleError,
    LogNormalFit,
    ShapeResult,
    classify_shape,
    fit_lognormal,
    log_histogram,
    refit_left_of_mode,
)
from tradeshape.fitness import FitnessResult, fitness_rank, solve
from tradeshape.gof import GofProfile, GofResult, gof_profile, gof_test, seed_words
from tradeshape.ingest import IndicatorTable, TradeMatrix, country_volume_sample, write_matrix
from tradeshape.ranking import (
    DominanceSummary,
    IndicatorColoring,
    RankingCurve,
    dominance_matrix,
    indicator_ranks,
    ranking_curve,
)
from tradeshape.rca import BinaryExportMatrix, binarize, rca_matrix
from tradeshape.synth import RNG_NAME

log = logging.getLogger(__name__)


class AnalysisError(RuntimeError):
    pass


def fmt(v) -> str:
    """Table cell formatting: 12 significant digits, lowercase booleans."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{float(v):.12g}"
    return "" if v is None else str(v)


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> None:
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


@dataclass
class CountryAnalysis:
    country: str
    curve: RankingCurve
    full_fit: LogNormalFit
    left_fit: LogNormalFit | None
    gof: GofResult
    shape: ShapeResult


def analyze_country(country: str, sample: np.ndarray, cfg: RunConfig) -> CountryAnalysis:
    """Ranking curve, fits, GoF tests and shape class for one country."""
    try:
        curve = ranking_curve(sample, country)
        full = fit_lognormal(sample)
        try:
            left = refit_left_of_mode(sample, full, width=cfg.bin_width, min_points=cfg.min_left_points)
        except DegenerateSampleError as exc:
            log.info("%s: no left-of-mode refit (%s)", country, exc)
            left = None
        g = gof_test(
            sample,
            full,
            replicates=cfg.gof.bootstrap,
            seed=seed_words(cfg.seed, country),
            alpha_ks=cfg.gof.alpha_ks,
            alpha_cvm=cfg.gof.alpha_cvm,
        )
        shape = classify_shape(sample, full, left, g, cfg.classifier)
    except ValueError as exc:
        raise AnalysisError(f"{country}: {exc}") from exc
    return CountryAnalysis(country, curve, full, left, g, shape)


def _analyze_star(args):
    return analyze_country(*args)


@dataclass
class AnalysisResult:
    matrix: TradeMatrix
    rca: np.ndarray
    m: BinaryExportMatrix
    fitness: FitnessResult
    countries: dict[str, CountryAnalysis]
    skipped: list[str]
    dominance: DominanceSummary
    colorings: dict[str, IndicatorColoring]
    profile: GofProfile | None


def run_analysis(matrix: TradeMatrix, cfg: RunConfig, indicators: IndicatorTable | None = None) -> AnalysisResult:
    rca = rca_matrix(matrix)
    m = binarize(rca, cfg.rca_threshold, matrix.countries, matrix.products)
    fit = solve(m, cfg.fitness)
    ranks = fitness_rank(fit)

    work = []
    skipped = []
    for c in matrix.countries:
        sample = country_volume_sample(matrix, c)
        if sample.size < 2:
            log.warning("%s: %d exported products, skipped", c, sample.size)
            skipped.append(c)
            continue
        work.append((c, sample, cfg))
    jobs = cfg.jobs or os.cpu_count() or 1
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            analyses = list(ex.map(_analyze_star, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        analyses = [analyze_country(*w) for w in work]
    per_country = {a.country: a for a in sorted(analyses, key=lambda a: a.country)}

    dominance = dominance_matrix([a.curve for a in per_country.values()])

    analysed = list(per_country)
    colorings = {"fitness": indicator_ranks(fit.fitness_of(), "fitness", analysed)}
    totals = dict(zip(matrix.countries, matrix.volumes.sum(axis=1).astype(float)))
    colorings["total_export"] = indicator_ranks(totals, "total_export", analysed)
    if indicators is not None:
        for name in ("gdp", "gdp_pc"):
            if name in indicators.names():
                colorings[name] = indicator_ranks(indicators.get(name), name, analysed)

    profile = None
    if len(per_country) >= 3:
        profile = gof_profile({c: a.gof for c, a in per_country.items()}, ranks)
    return AnalysisResult(matrix, rca, m, fit, per_country, skipped, dominance, colorings, profile)


SUMMARY_COLUMNS = [
    "country", "n", "mu", "sigma", "mode_log10", "left_n", "left_mu", "left_sigma", "class",
    "left_truncation_score", "right_excess_score", "left_cvm_p", "ks_stat", "ks_p", "cvm_stat",
    "cvm_p", "reject_ks", "reject_cvm", "fitness", "fitness_rank",
]
GOF_COLUMNS = [
    "country", "N", "ks_stat", "ks_p", "ks_p_naive", "cvm_stat", "cvm_p", "cvm_p_naive",
    "reject_ks", "reject_cvm", "alpha_ks", "alpha_cvm", "B", "calibration", "seed",
]


def write_fitness(res: FitnessResult, out: Path) -> None:
    ranks = fitness_rank(res)
    write_table(out / "fitness.csv", ["country", "fitness", "rank"],
                ((c, f, ranks[c]) for c, f in zip(res.countries, res.fitness)))
    write_table(out / "complexity.csv", ["product", "complexity"], zip(res.products, res.complexity))
    last = res.trace[-1] if res.trace else None
    report = {
        "mode": res.convergence_mode.value,
        "converged": res.converged,
        "iterations": res.iterations_run,
        "final_delta_fitness": last.delta_f if last else None,
        "final_delta_complexity": last.delta_q if last else None,
    }
    (out / "convergence.json").write_text(json.dumps(report, indent=2) + "\n")


def write_rca(matrix: TradeMatrix, rca: np.ndarray, m: BinaryExportMatrix, out: Path) -> None:
    write_matrix(matrix, out / "rca.csv", rca, fmt=fmt)
    write_matrix(matrix, out / "m.csv", m.m, fmt=lambda v: str(int(v)))


def write_gof(per_country: dict[str, CountryAnalysis], out: Path) -> None:
    rows = []
    for c, a in per_country.items():
        g = a.gof
        rows.append((c, g.n, g.ks_stat, g.ks_pvalue, g.ks_pvalue_naive, g.cvm_stat, g.cvm_pvalue,
                     g.cvm_pvalue_naive, g.reject_ks, g.reject_cvm, g.alpha_ks, g.alpha_cvm,
                     g.bootstrap_replicates, g.calibration, " ".join(map(str, g.seed))))
    write_table(out / "gof.csv", GOF_COLUMNS, rows)


def write_profile(profile: GofProfile, out: Path) -> None:
    write_table(out / "gof_profile.csv", ["fitness_rank", "country", "cvm_stat", "ks_p"],
                zip(profile.ranks, profile.countries, profile.cvm_stat, profile.ks_pvalue))
    write_table(out / "gof_profile_fit.csv", ["series", "a2", "a1", "a0"],
                [("cvm_stat", *profile.cvm_coef), ("ks_p", *profile.ks_coef)])


def write_ranking(per_curves: Sequence[RankingCurve], dominance: DominanceSummary,
                  colorings: dict[str, IndicatorColoring], out: Path) -> None:
    cdir = out / "curves"
    cdir.mkdir(exist_ok=True)
    for cv in per_curves:
        write_table(cdir / f"{cv.country}.csv", ["rank", "volume"],
                    zip(range(1, len(cv) + 1), cv.volumes))
    write_table(out / "dominance.csv",
                ["country_a", "country_b", "a_above_share", "b_above_share", "crossings"],
                dominance.pair_rows(),
                comments=[f"pairs={dominance.n_pairs} zero_crossing_share={fmt(dominance.zero_crossing_share)}"])
    rows = []
    for name, col in colorings.items():
        for c in sorted(col.ranks):
            rows.append((c, name, col.ranks[c], col.color_index[c]))
    write_table(out / "coloring.csv", ["country", "indicator", "rank", "color_index"], rows)


def write_bundle(result: AnalysisResult, cfg: RunConfig, out: Path) -> None:
    ranks = fitness_rank(result.fitness)
    fit_of = result.fitness.fitness_of()
    rows = []
    for c, a in result.countries.items():
        lf = a.left_fit
        rows.append((
            c, a.full_fit.n, a.full_fit.mu, a.full_fit.sigma, a.full_fit.mode_log10,
            lf.n if lf else None, lf.mu if lf else math.nan, lf.sigma if lf else math.nan,
            a.shape.shape.value, a.shape.left_truncation_score, a.shape.right_excess_score,
            a.shape.left_cvm_pvalue, a.gof.ks_stat, a.gof.ks_pvalue, a.gof.cvm_stat, a.gof.cvm_pvalue,
            a.gof.reject_ks, a.gof.reject_cvm, fit_of[c], ranks[c],
        ))
    write_table(out / "summary.csv", SUMMARY_COLUMNS, rows)
    write_rca(result.matrix, result.rca, result.m, out)
    write_fitness(result.fitness, out)
    write_gof(result.countries, out)
    if result.profile is not None:
        write_profile(result.profile, out)
    write_ranking([a.curve for a in result.countries.values()], result.dominance, result.colorings, out)
    if cfg.dump_histograms:
        hdir = out / "histograms"
        hdir.mkdir(exist_ok=True)
        for c, a in result.countries.items():
            h = log_histogram(a.curve.volumes, width=cfg.bin_width)
            write_table(hdir / f"{c}.csv", ["bin_center_log10", "count"], zip(h.centers, h.counts))


def manifest(cfg: RunConfig, wall_time: float, extra: dict | None = None) -> dict:
    return {
        "tool": "tradeshape",
        "version": __version__,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "rng": RNG_NAME,
        "bootstrap_seed_rule": "per country: [seed, crc32(country)], per replicate: + [b]",
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pandas": pd.__version__,
        },
        "wall_time_seconds": round(wall_time, 3),
        **(extra or {}),
    }


class StagedOutput:
    """Write into a scratch directory and move files into place on success.

    On failure nothing from the run is left in ``out_dir``.
    """

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    def __enter__(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.out_dir))
        return self.tmp

    def __exit__(self, exc_type, exc, tb) -> bool:
        try:
            if exc_type is None:
                for item in sorted(self.tmp.iterdir()):
                    dest = self.out_dir / item.name
                    if dest.is_dir():
                        shutil.rmtree(dest)
                    item.replace(dest)
        finally:
            shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def analyze_to_dir(matrix: TradeMatrix, cfg: RunConfig, out_dir: str | Path,
                   indicators: IndicatorTable | None = None) -> AnalysisResult:
    t0 = time.perf_counter()
    with StagedOutput(out_dir) as tmp:
        result = run_analysis(matrix, cfg, indicators)
        write_bundle(result, cfg, tmp)
        extra = {
            "countries": len(matrix.countries),
            "products": len(matrix.products),
            "year": matrix.year,
            "skipped_countries": result.skipped,
            "fitness_convergence": result.fitness.convergence_mode.value,
            "fitness_iterations": result.fitness.iterations_run,
            "class_counts": _class_counts(result),
        }
        (tmp / "manifest.json").write_text(
            json.dumps(manifest(cfg, time.perf_counter() - t0, extra), indent=2, default=str) + "\n"
        )
    return result


def _class_counts(result: AnalysisResult) -> dict[str, int]:
    counts: dict[str, int] = {}
    for a in result.countries.values():
        counts[a.shape.shape.value] = counts.get(a.shape.shape.value, 0) + 1
    return dict(sorted(counts.items()))
