"""Parsing of raw export records and aggregation to a 4-digit trade matrix."""

from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray

log = logging.getLogger(__name__)

MANDATORY = ("year", "country", "product", "volume")
# Observed range of per-country product counts at 4 digits.
TYPICAL_SAMPLE_RANGE = (100, 1131)


class IngestError(ValueError):
    """Hard input error (missing column, mixed years, unknown country)."""


@dataclass(frozen=True)
class ExportRecord:
    year: int
    country: str
    product: str
    volume: float
    category_label: str | None = None


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str

    def __str__(self) -> str:
        return f"{self.line}\t{self.reason}"


@dataclass
class ColumnMap:
    """Names of the input columns and the delimiter."""

    year: str = "year"
    country: str = "country"
    product: str = "product"
    volume: str = "volume"
    category: str | None = "category"
    delimiter: str = ","


@dataclass
class TradeMatrix:
    """Country x product export volumes in thousands of USD."""

    countries: list[str]
    products: list[str]
    volumes: NDArray[np.float64]
    year: int | None = None
    categories: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.volumes = np.asarray(self.volumes, dtype=float)
        if self.volumes.shape != (len(self.countries), len(self.products)):
            raise IngestError(
                f"volume matrix shape {self.volumes.shape} does not match "
                f"{len(self.countries)} countries x {len(self.products)} products"
            )
        if len(set(self.countries)) != len(self.countries):
            raise IngestError("duplicate country codes")
        if len(set(self.products)) != len(self.products):
            raise IngestError("duplicate product codes")
        if not np.all(np.isfinite(self.volumes)) or np.any(self.volumes < 0):
            raise IngestError("volumes must be finite and non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.volumes.shape

    def empty_rows(self) -> list[str]:
        """Countries with no exports at all (allowed, but worth flagging)."""
        rows = ~np.any(self.volumes > 0, axis=1)
        return [c for c, e in zip(self.countries, rows) if e]

    def row(self, country: str) -> NDArray[np.float64]:
        try:
            i = self.countries.index(country)
        except ValueError:
            raise IngestError(f"unknown country {country!r}") from None
        return self.volumes[i]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.volumes, index=pd.Index(self.countries, name="country"), columns=self.products)


@dataclass
class IngestResult:
    records: list[ExportRecord]
    rejected: list[Rejection]
    lines: list[int] = field(default_factory=list)


def _is_digits(s: str) -> bool:
    return s.isascii() and s.isdigit()


def parse_records(stream: IO[str] | str, columns: ColumnMap | None = None) -> IngestResult:
    """Read delimiter-separated export records with a header row.

    Malformed rows are collected with their 1-based line number instead of
    raising; a missing mandatory column is a hard error.
    """
    cols = columns or ColumnMap()
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream, delimiter=cols.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise IngestError("input is empty (no header row)") from None
    index = {}
    for key in MANDATORY:
        name = getattr(cols, key)
        if name not in header:
            raise IngestError(f"missing mandatory column {name!r}")
        index[key] = header.index(name)
    cat_idx = header.index(cols.category) if cols.category and cols.category in header else None

    records: list[ExportRecord] = []
    rejected: list[Rejection] = []
    lines: list[int] = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            rejected.append(Rejection(lineno, "too few fields"))
            continue
        year_s = row[index["year"]].strip()
        country = row[index["country"]].strip()
        product = row[index["product"]].strip()
        vol_s = row[index["volume"]].strip()
        try:
            year = int(year_s)
        except ValueError:
            rejected.append(Rejection(lineno, f"unparseable year {year_s!r}"))
            continue
        if len(country) != 3:
            rejected.append(Rejection(lineno, f"country code must have 3 characters: {country!r}"))
            continue
        if not _is_digits(product) or len(product) not in (2, 4, 6):
            rejected.append(Rejection(lineno, f"product code must be 2, 4 or 6 digits: {product!r}"))
            continue
        try:
            volume = float(vol_s)
        except ValueError:
            rejected.append(Rejection(lineno, f"unparseable number {vol_s!r}"))
            continue
        if not math.isfinite(volume):
            rejected.append(Rejection(lineno, f"unparseable number {vol_s!r}"))
            continue
        if volume < 0:
            rejected.append(Rejection(lineno, "negative volume"))
            continue
        label = row[cat_idx].strip() or None if cat_idx is not None else None
        records.append(ExportRecord(year, country, product, volume, label))
        lines.append(lineno)
    return IngestResult(records, rejected, lines)


def aggregate_to_4digit(
    records: Iterable[ExportRecord],
    rejected: list[Rejection] | None = None,
    lines: Sequence[int] | None = None,
) -> TradeMatrix:
    """Sum records into a 4-digit country x product matrix.

    6-digit codes are summed into their 4-digit prefix and duplicate pairs are
    summed. 2-digit records are too coarse and are appended to ``rejected``
    (with their line number when ``lines`` is given). Rows and columns are
    sorted by code.
    """
    records = list(records)
    years = {r.year for r in records}
    if len(years) > 1:
        raise IngestError(f"records span several years: {sorted(years)}")
    cells: dict[tuple[str, str], list[float]] = defaultdict(list)
    categories: dict[str, str] = {}
    countries: set[str] = set()
    for k, r in enumerate(records):
        if len(r.product) == 2:
            if rejected is not None:
                rejected.append(Rejection(lines[k] if lines else k + 1, "2-digit code"))
            continue
        code = r.product[:4]
        countries.add(r.country)
        cells[(r.country, code)].append(r.volume)
        if r.category_label:
            categories.setdefault(code, r.category_label)
    country_list = sorted(countries)
    product_list = sorted({p for _, p in cells})
    ci = {c: i for i, c in enumerate(country_list)}
    pi = {p: j for j, p in enumerate(product_list)}
    vol = np.zeros((len(country_list), len(product_list)))
    # fsum is exactly rounded, so cell totals do not depend on record order
    for (c, p), v in cells.items():
        vol[ci[c], pi[p]] = math.fsum(v)
    matrix = TradeMatrix(country_list, product_list, vol, years.pop() if years else None, categories)
    empty = matrix.empty_rows()
    if empty:
        log.warning("countries with no exports: %s", ", ".join(empty))
    return matrix


def country_volume_sample(matrix: TradeMatrix, country: str) -> NDArray[np.float64]:
    """Strictly positive volumes of one country (zeros mean no export)."""
    row = matrix.row(country)
    sample = row[row > 0]
    lo, hi = TYPICAL_SAMPLE_RANGE
    if sample.size and not lo <= sample.size <= hi:
        log.debug("%s: %d exported products is outside the usual %d-%d range", country, sample.size, lo, hi)
    return sample.copy()


def read_trade_file(path: str | Path, columns: ColumnMap | None = None) -> tuple[TradeMatrix, list[Rejection]]:
    """Parse and aggregate a raw trade file; returns the matrix and all rejections."""
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    with path.open(newline="") as fh:
        parsed = parse_records(fh, columns)
    rejected = list(parsed.rejected)
    matrix = aggregate_to_4digit(parsed.records, rejected, parsed.lines)
    rejected.sort(key=lambda r: r.line)
    return matrix, rejected


# -- canonical matrix format --------------------------------------------------
#
# Wide CSV: a "# year: <y>" comment line, then a header "country,<products...>"
# and one row per country. Volumes use repr() so the round trip is exact.


def write_matrix(matrix: TradeMatrix, path: str | Path, values: NDArray | None = None, fmt=repr) -> None:
    """Write ``values`` (default: the volumes) in the wide matrix layout."""
    vals = matrix.volumes if values is None else values
    with Path(path).open("w", newline="") as fh:
        if matrix.year is not None:
            fh.write(f"# year: {matrix.year}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["country", *matrix.products])
        for c, row in zip(matrix.countries, vals):
            w.writerow([c, *(fmt(float(v)) for v in row)])


def read_matrix(path: str | Path) -> TradeMatrix:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"no such file: {path}")
    year = None
    with path.open() as fh:
        first = fh.readline()
        if first.startswith("# year:"):
            year = int(first.split(":", 1)[1])
        else:
            fh.seek(0)
        rows = list(csv.reader(fh))
    header = rows[0]
    if not header or header[0] != "country":
        raise IngestError(f"{path}: not a trade matrix file")
    countries = [r[0] for r in rows[1:]]
    vol = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(len(countries), len(header) - 1)
    return TradeMatrix(countries, header[1:], vol, year)


# -- indicators ---------------------------------------------------------------

INDICATOR_COLUMNS = ("gdp", "gdp_pc", "total_export")


@dataclass
class IndicatorTable:
    """Per-country macro indicators; missing values are NaN."""

    countries: list[str]
    values: dict[str, NDArray[np.float64]]

    def names(self) -> list[str]:
        return [k for k, v in self.values.items() if np.any(np.isfinite(v))]

    def get(self, name: str) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.countries, self.values[name])}


def load_indicators(
    path: str | Path | IO[str],
    matrix: TradeMatrix | None = None,
    delimiter: str = ",",
    tolerance: float = 0.01,
) -> IndicatorTable:
    """Load GDP / GDPpc / total-export columns keyed by country.

    When ``matrix`` is given, countries must belong to it, ``total_export`` is
    filled from row sums where absent, and any provided value must agree with
    the row sum within ``tolerance`` (relative).
    """
    df = pd.read_csv(path, sep=delimiter, dtype={"country": str})
    if "country" not in df.columns:
        raise IngestError("indicator file needs a 'country' column")
    if df["country"].duplicated().any():
        dup = sorted(df.loc[df["country"].duplicated(), "country"])
        raise IngestError(f"duplicate indicator rows for {', '.join(dup)}")
    values = {}
    for name in INDICATOR_COLUMNS:
        col = pd.to_numeric(df[name], errors="coerce") if name in df.columns else pd.Series(np.nan, index=df.index)
        if (col.dropna() < 0).any():
            raise IngestError(f"negative values in indicator {name!r}")
        values[name] = col.to_numpy(dtype=float)
    countries = df["country"].str.strip().tolist()
    table = IndicatorTable(countries, values)
    if matrix is not None:
        extra = sorted(set(countries) - set(matrix.countries))
        if extra:
            raise IngestError(f"indicator countries not in trade matrix: {', '.join(extra)}")
        totals = dict(zip(matrix.countries, matrix.volumes.sum(axis=1)))
        te = table.values["total_export"]
        for i, c in enumerate(countries):
            if np.isnan(te[i]):
                te[i] = totals[c]
            elif not math.isclose(te[i], totals[c], rel_tol=tolerance):
                raise IngestError(
                    f"{c}: total_export {te[i]:.6g} disagrees with row sum {totals[c]:.6g} by more than {tolerance:.0%}"
                )
    return table
