"""Command-line entry point: ``tradeshape <subcommand> ...``.

Exit codes: 0 success, 1 hard error, 2 ingest finished but rejected rows.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from tradeshape.config import ConfigError, RunConfig, load_config
from tradeshape.ingest import (
    ColumnMap,
    IngestError,
    TradeMatrix,
    country_volume_sample,
    load_indicators,
    read_matrix,
    read_trade_file,
    write_matrix,
)
from tradeshape.pipeline import (
    AnalysisError,
    StagedOutput,
    analyze_country,
    analyze_to_dir,
    manifest,
    write_fitness,
    write_gof,
    write_ranking,
    write_rca,
)
from tradeshape.synth import SynthError, corpus_from_dict, gen_corpus, load_corpus_spec, write_labels, write_trade_file

log = logging.getLogger("tradeshape")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON or YAML run configuration")
    p.add_argument("--seed", type=int, help="base random seed")
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _matrix_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--matrix", help="matrix file written by 'ingest'")
    src.add_argument("--trade-file", help="raw trade records (ingested on the fly)")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="tradeshape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="parse and aggregate raw trade records")
    p.add_argument("trade_file")
    p.add_argument("--delimiter")

    p = sub.add_parser("analyze", parents=[common], help="run the full pipeline")
    _matrix_args(p)
    p.add_argument("--indicators", help="indicator table (country, gdp, gdp_pc, total_export)")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates B (0 = naive p-values)")
    p.add_argument("--dump-histograms", action="store_true", default=None)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("spec", nargs="?", help="corpus spec (JSON/YAML)")
    p.add_argument("--preset", choices=["three_class", "nested", "full_scale"])

    p = sub.add_parser("fitness", parents=[common], help="RCA, M and the fitness solve only")
    _matrix_args(p)
    p.add_argument("--rca-threshold", type=float)

    p = sub.add_parser("gof", parents=[common], help="log-normal fits and GoF tests only")
    _matrix_args(p)
    p.add_argument("--bootstrap", type=int)

    p = sub.add_parser("rank", parents=[common], help="ranking curves, dominance and colorings only")
    _matrix_args(p)
    p.add_argument("--indicators")
    return parser


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    overrides = {"seed": args.seed, "jobs": args.jobs, "out_dir": args.out_dir}
    for name in ("trade_file", "indicators", "matrix", "rca_threshold", "dump_histograms"):
        if hasattr(args, name):
            key = {"indicators": "indicator_file", "matrix": "matrix_file"}.get(name, name)
            overrides[key] = getattr(args, name)
    cfg = cfg.updated(**overrides)
    if getattr(args, "bootstrap", None) is not None:
        cfg = cfg.updated(gof=type(cfg.gof)(cfg.gof.alpha_ks, cfg.gof.alpha_cvm, args.bootstrap))
    if getattr(args, "delimiter", None):
        cols = cfg.columns
        cfg = cfg.updated(columns=ColumnMap(cols.year, cols.country, cols.product, cols.volume, cols.category, args.delimiter))
    return cfg


def _load_matrix(cfg: RunConfig) -> TradeMatrix:
    if cfg.matrix_file:
        return read_matrix(cfg.matrix_file)
    if cfg.trade_file:
        matrix, rejected = read_trade_file(cfg.trade_file, cfg.columns)
        if rejected:
            log.warning("%d rows rejected while reading %s", len(rejected), cfg.trade_file)
        return matrix
    raise ConfigError("no input: give --matrix or --trade-file (or set them in the config)")


def cmd_ingest(args) -> int:
    cfg = _config(args)
    matrix, rejected = read_trade_file(args.trade_file, cfg.columns)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(matrix, out / "matrix.csv")
    (out / "rejects.txt").write_text("".join(f"{r}\n" for r in rejected))
    empty = matrix.empty_rows()
    print(f"{len(matrix.countries)} countries x {len(matrix.products)} products -> {out / 'matrix.csv'}")
    if empty:
        print(f"warning: countries with no exports: {', '.join(empty)}", file=sys.stderr)
    if rejected:
        print(f"{len(rejected)} rows rejected, see {out / 'rejects.txt'}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg = _config(args)
    matrix = _load_matrix(cfg)
    indicators = load_indicators(cfg.indicator_file, matrix) if cfg.indicator_file else None
    result = analyze_to_dir(matrix, cfg, cfg.out_dir, indicators)
    print(f"analysed {len(result.countries)} countries -> {cfg.out_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    if args.spec and args.preset:
        raise ConfigError("give a spec file or --preset, not both")
    if args.spec:
        spec = load_corpus_spec(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
    elif args.preset:
        spec = corpus_from_dict({"preset": args.preset, "seed": cfg.seed})
    else:
        raise ConfigError("synth needs a spec file or --preset")
    matrix, _ = gen_corpus(spec)
    with StagedOutput(cfg.out_dir) as tmp:
        write_trade_file(matrix, tmp / "trade.csv")
        write_labels(spec, tmp / "labels.csv")
    print(f"{len(matrix.countries)} countries -> {Path(cfg.out_dir) / 'trade.csv'}")
    return EXIT_OK


def cmd_fitness(args) -> int:
    from tradeshape.fitness import solve
    from tradeshape.rca import binarize, rca_matrix

    cfg = _config(args)
    matrix = _load_matrix(cfg)
    with StagedOutput(cfg.out_dir) as tmp:
        rca = rca_matrix(matrix)
        m = binarize(rca, cfg.rca_threshold, matrix.countries, matrix.products)
        res = solve(m, cfg.fitness)
        write_rca(matrix, rca, m, tmp)
        write_fitness(res, tmp)
    print(f"fitness: {res.convergence_mode.value} after {res.iterations_run} iterations")
    return EXIT_OK


def _samples(matrix: TradeMatrix):
    for c in matrix.countries:
        x = country_volume_sample(matrix, c)
        if x.size >= 2:
            yield c, x


def cmd_gof(args) -> int:
    cfg = _config(args)
    matrix = _load_matrix(cfg)
    t0 = time.perf_counter()
    with StagedOutput(cfg.out_dir) as tmp:
        per = {c: analyze_country(c, x, cfg) for c, x in _samples(matrix)}
        write_gof(per, tmp)
        (tmp / "manifest.json").write_text(json.dumps(manifest(cfg, time.perf_counter() - t0), indent=2, default=str) + "\n")
    print(f"tested {len(per)} countries -> {cfg.out_dir}")
    return EXIT_OK


def cmd_rank(args) -> int:
    from tradeshape.ranking import dominance_matrix, indicator_ranks, ranking_curve

    cfg = _config(args)
    matrix = _load_matrix(cfg)
    curves = [ranking_curve(x, c) for c, x in _samples(matrix)]
    codes = [cv.country for cv in curves]
    colorings = {}
    totals = dict(zip(matrix.countries, matrix.volumes.sum(axis=1).astype(float)))
    colorings["total_export"] = indicator_ranks(totals, "total_export", codes)
    if cfg.indicator_file:
        table = load_indicators(cfg.indicator_file, matrix)
        for name in ("gdp", "gdp_pc"):
            if name in table.names():
                colorings[name] = indicator_ranks(table.get(name), name, codes)
    with StagedOutput(cfg.out_dir) as tmp:
        write_ranking(curves, dominance_matrix(curves), colorings, tmp)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "analyze": cmd_analyze,
    "synth": cmd_synth,
    "fitness": cmd_fitness,
    "gof": cmd_gof,
    "rank": cmd_rank,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (IngestError, ConfigError, SynthError, AnalysisError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
