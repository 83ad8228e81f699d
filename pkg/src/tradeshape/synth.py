"""Synthetic export data from a multiplicative capability model.

Each exported volume is the product of ``k`` i.i.d. log-normal capability
factors, so before any modification ``ln(volume)`` is exactly normal with mean
``k*m`` and variance ``k*s**2``. Two modifications reproduce the deviations
seen in real export baskets:

* a left threshold: volumes below it are not exported (dropped);
* a right cap: above a quantile of the body, either a Pareto tail is grafted
  with a continuous density, or (``kind="ceiling"``) volumes are dropped.

All randomness comes from numpy's PCG64 generator; seeds are recorded in the
emitted label files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import special

from tradeshape.distfit import ShapeClass
from tradeshape.gof import seed_words
from tradeshape.ingest import TradeMatrix

RNG_NAME = "numpy.random.PCG64"
INTENDED = (ShapeClass.TRUNCATED, ShapeClass.FULL, ShapeClass.PARETO)


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class RightCap:
    cap_quantile: float
    pareto_alpha: float = 1.0
    kind: str = "pareto"

    def __post_init__(self) -> None:
        if not 0 < self.cap_quantile < 1:
            raise SynthError("cap_quantile must lie in (0, 1)")
        if not self.pareto_alpha > 0:
            raise SynthError("pareto_alpha must be positive")
        if self.kind not in ("pareto", "ceiling"):
            raise SynthError(f"unknown cap kind {self.kind!r}")


@dataclass(frozen=True)
class SynthCountrySpec:
    code: str
    n_products: int
    k_capabilities: int
    capability_log_mean: float
    capability_log_sd: float
    left_threshold: float | None = None
    right_cap: RightCap | None = None
    seed: int | None = None
    label: ShapeClass | None = None

    def __post_init__(self) -> None:
        if self.n_products < 1:
            raise SynthError(f"{self.code}: n_products must be >= 1")
        if self.k_capabilities < 1:
            raise SynthError(f"{self.code}: k_capabilities must be >= 1")
        vals = (self.capability_log_mean, self.capability_log_sd)
        if not all(math.isfinite(v) for v in vals) or self.capability_log_sd < 0:
            raise SynthError(f"{self.code}: capability parameters must be finite, sd >= 0")
        if self.left_threshold is not None and not self.left_threshold > 0:
            raise SynthError(f"{self.code}: left_threshold must be positive")

    @property
    def log_mean(self) -> float:
        return self.k_capabilities * self.capability_log_mean

    @property
    def log_sd(self) -> float:
        return math.sqrt(self.k_capabilities) * self.capability_log_sd

    def body_quantile(self, p: float) -> float:
        """Volume at quantile ``p`` of the unmodified multiplicative law."""
        return math.exp(self.log_mean + self.log_sd * float(special.ndtri(p)))


@dataclass
class SynthCorpusSpec:
    countries: list[SynthCountrySpec]
    seed: int = 0
    year: int = 2010

    def __post_init__(self) -> None:
        if not self.countries:
            raise SynthError("corpus spec has no countries")
        codes = [c.code for c in self.countries]
        if len(set(codes)) != len(codes):
            raise SynthError("duplicate country codes in corpus spec")
        for c in self.countries:
            if c.label is not None and c.label not in INTENDED:
                raise SynthError(f"{c.code}: intended label must be one of {[s.value for s in INTENDED]}")


def _tail_weight(spec: SynthCountrySpec, cap: RightCap) -> float:
    """Probability of the Pareto component for a continuous graft.

    The body keeps mass ``q`` below the graft point ``x_q``; the tail has
    unnormalised mass ``t = f(x_q) * x_q / alpha`` so that both pieces share
    the density value at ``x_q`` after dividing by ``q + t``.
    """
    q = cap.cap_quantile
    t = float(np.exp(-0.5 * special.ndtri(q) ** 2) / math.sqrt(2 * math.pi)) / (spec.log_sd * cap.pareto_alpha)
    return t / (q + t)


def graft_densities(spec: SynthCountrySpec) -> tuple[float, float]:
    """Density of the volume law just below and just above the graft point."""
    cap = spec.right_cap
    if cap is None or cap.kind != "pareto":
        raise SynthError("spec has no grafted Pareto tail")
    if spec.log_sd == 0:
        raise SynthError("graft needs a non-degenerate body")
    q = cap.cap_quantile
    w = _tail_weight(spec, cap)
    xq = spec.body_quantile(q)
    z = special.ndtri(q)
    body = float(np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * spec.log_sd * xq))
    left = body * (1 - w) / q
    right = w * cap.pareto_alpha / xq
    return left, right


def _body_logs(rng: np.random.Generator, spec: SynthCountrySpec, n: int) -> NDArray[np.float64]:
    factors = rng.normal(spec.capability_log_mean, spec.capability_log_sd, size=(n, spec.k_capabilities))
    return factors.sum(axis=1)


def gen_country(spec: SynthCountrySpec, seed: int | Sequence[int] | None = None) -> NDArray[np.float64]:
    """Draw one country's exported volumes (thousands of USD).

    ``seed`` overrides ``spec.seed``. The draws do not depend on the threshold,
    so raising it can only remove volumes.
    """
    s = spec.seed if seed is None else seed
    if s is None:
        raise SynthError(f"{spec.code}: no seed given")
    rng = np.random.Generator(np.random.PCG64(seed_words(s)))
    n = spec.n_products
    cap = spec.right_cap
    if cap is None:
        logs = _body_logs(rng, spec, n)
    else:
        g = math.log(spec.body_quantile(cap.cap_quantile))
        if cap.kind == "ceiling":
            logs = _body_logs(rng, spec, n)
            logs = logs[logs <= g]
        else:
            tail = rng.random(n) < _tail_weight(spec, cap)
            logs = np.empty(n)
            n_tail = int(tail.sum())
            logs[tail] = g + rng.exponential(1.0 / cap.pareto_alpha, size=n_tail)
            need = n - n_tail
            body: list[NDArray[np.float64]] = []
            have = 0
            while have < need:
                draw = _body_logs(rng, spec, max(2 * (need - have), 16))
                draw = draw[draw < g]
                body.append(draw)
                have += draw.size
            logs[~tail] = np.concatenate(body)[:need] if need else []
    vol = np.exp(logs)
    if spec.left_threshold is not None:
        vol = vol[vol >= spec.left_threshold]
    if vol.size == 0:
        raise SynthError(f"{spec.code}: empty synthetic sample")
    return vol


def gen_corpus(spec: SynthCorpusSpec) -> tuple[TradeMatrix, dict[str, ShapeClass | None]]:
    """Assemble a trade matrix from per-country samples.

    Country ``c`` exports the first ``len(sample_c)`` products of a shared code
    list, with its volumes in random order, so larger baskets contain smaller
    ones. Products nobody reaches are omitted.
    """
    samples = []
    for c in spec.countries:
        s = c.seed if c.seed is not None else seed_words(spec.seed, c.code)
        vol = gen_country(c, s)
        perm = np.random.Generator(np.random.PCG64(seed_words(spec.seed, c.code, "order"))).permutation(vol.size)
        samples.append(vol[perm])
    p = max(v.size for v in samples)
    products = [f"{j + 1:04d}" for j in range(p)]
    mat = np.zeros((len(samples), p))
    for i, v in enumerate(samples):
        mat[i, : v.size] = v
    order = np.argsort([c.code for c in spec.countries], kind="stable")
    codes = [spec.countries[i].code for i in order]
    matrix = TradeMatrix(codes, products, mat[order], spec.year)
    labels = {c.code: c.label for c in spec.countries}
    return matrix, labels


def country_code(i: int) -> str:
    """Three-letter code for index ``i`` (AAA, AAB, ...)."""
    a, rem = divmod(i, 26 * 26)
    b, c = divmod(rem, 26)
    if a >= 26:
        raise SynthError("too many countries for 3-letter codes")
    return "".join(chr(65 + v) for v in (a, b, c))


# -- ready-made corpora --------------------------------------------------------

# Capability factor law shared by the presets. With m = 1.6 the log10 mode
# of a country is about 0.69 * k decades.
CAP_MEAN = 1.6
CAP_SD = 0.8


def three_class_corpus(
    seed: int = 0,
    n_per_class: int = 10,
    truncated_mass: float = 0.2,
    cap_quantile: float = 0.9,
    pareto_alpha: float = 0.2,
) -> SynthCorpusSpec:
    """Corpus with one block of countries per export-shape class.

    Truncated countries have a low mode (k = 3, below 10^3 k$) and lose
    ``truncated_mass`` of their left wing; full log-normal countries sit in
    the middle (k = 6); Pareto countries are the richest (k = 9) with a tail
    grafted above ``cap_quantile``. Product counts grow with k.
    """
    specs = []
    i = 0
    for block, label in enumerate(INTENDED):
        for j in range(n_per_class):
            k = 3 * (block + 1)
            n = [220, 520, 860][block] + j * [12, 25, 27][block]
            base = SynthCountrySpec(f"C{i:02d}", n, k, CAP_MEAN, CAP_SD)
            if label is ShapeClass.TRUNCATED:
                spec = SynthCountrySpec(
                    base.code, n, k, CAP_MEAN, CAP_SD,
                    left_threshold=base.body_quantile(truncated_mass), label=label,
                )
            elif label is ShapeClass.PARETO:
                spec = SynthCountrySpec(
                    base.code, n, k, CAP_MEAN, CAP_SD,
                    right_cap=RightCap(cap_quantile, pareto_alpha), label=label,
                )
            else:
                spec = SynthCountrySpec(base.code, n, k, CAP_MEAN, CAP_SD, label=label)
            specs.append(spec)
            i += 1
    return SynthCorpusSpec(specs, seed=seed)


def nested_corpus(
    seed: int = 0,
    n_countries: int = 20,
    min_products: int = 100,
    max_products: int = 1131,
    cap_mean: float = 1.0,
    cap_sd: float = 0.3,
) -> SynthCorpusSpec:
    """Countries with k = 1..n capabilities and evenly growing basket sizes."""
    sizes = np.linspace(min_products, max_products, n_countries).round().astype(int)
    specs = [
        SynthCountrySpec(country_code(i), int(sizes[i]), i + 1, cap_mean, cap_sd)
        for i in range(n_countries)
    ]
    return SynthCorpusSpec(specs, seed=seed)


def full_scale_corpus(seed: int = 0, n_countries: int = 148, max_products: int = 1131) -> SynthCorpusSpec:
    """148 countries with 100..1131 products cycling through the three classes."""
    sizes = np.linspace(100, max_products, n_countries).round().astype(int)
    specs = []
    for i in range(n_countries):
        frac = i / max(n_countries - 1, 1)
        k = 2 + int(round(8 * frac))
        code = country_code(i)
        n = int(sizes[i])
        if frac < 1 / 3:
            base = SynthCountrySpec(code, n, k, CAP_MEAN, CAP_SD)
            specs.append(SynthCountrySpec(code, n, k, CAP_MEAN, CAP_SD, left_threshold=base.body_quantile(0.2), label=ShapeClass.TRUNCATED))
        elif frac < 2 / 3:
            specs.append(SynthCountrySpec(code, n, k, CAP_MEAN, CAP_SD, label=ShapeClass.FULL))
        else:
            specs.append(SynthCountrySpec(code, n, k, CAP_MEAN, CAP_SD, right_cap=RightCap(0.9, 0.2), label=ShapeClass.PARETO))
    return SynthCorpusSpec(specs, seed=seed)


def shuffled_null(matrix: TradeMatrix, seed: int | Sequence[int] = 0) -> TradeMatrix:
    """Pool all positive volumes and deal them back at random.

    Each country keeps its number of exported products, so curve lengths are
    preserved while any link between country and volume level is destroyed.
    """
    rng = np.random.Generator(np.random.PCG64(seed_words(seed)))
    mask = matrix.volumes > 0
    pool = matrix.volumes[mask]
    out = np.zeros_like(matrix.volumes)
    out[mask] = rng.permutation(pool)
    return TradeMatrix(list(matrix.countries), list(matrix.products), out, matrix.year)


# -- spec files and outputs ----------------------------------------------------


def _country_from_dict(d: dict[str, Any], default_code: str) -> SynthCountrySpec:
    d = dict(d)
    code = d.pop("code", default_code)
    label = d.pop("label", None) or d.pop("intended_class", None)
    cap = d.pop("right_cap", None)
    q_left = d.pop("left_threshold_quantile", None)
    try:
        spec = SynthCountrySpec(
            code=code,
            n_products=int(d.pop("n_products")),
            k_capabilities=int(d.pop("k_capabilities")),
            capability_log_mean=float(d.pop("capability_log_mean")),
            capability_log_sd=float(d.pop("capability_log_sd")),
            left_threshold=d.pop("left_threshold", None),
            right_cap=RightCap(**cap) if cap else None,
            seed=d.pop("seed", None),
            label=ShapeClass(label) if label else None,
        )
    except KeyError as exc:
        raise SynthError(f"{code}: missing field {exc.args[0]!r}") from None
    except TypeError as exc:
        raise SynthError(f"{code}: {exc}") from None
    if d:
        raise SynthError(f"{code}: unknown fields {sorted(d)}")
    if q_left is not None:
        if spec.left_threshold is not None:
            raise SynthError(f"{code}: give left_threshold or left_threshold_quantile, not both")
        spec = SynthCountrySpec(**{**spec.__dict__, "left_threshold": spec.body_quantile(float(q_left))})
    return spec


def corpus_from_dict(data: dict[str, Any]) -> SynthCorpusSpec:
    """Build a corpus spec from a parsed JSON/YAML document.

    Either ``preset`` (``three_class``, ``nested``, ``full_scale``) with
    optional ``preset_args``, or an explicit ``countries`` list.
    """
    seed = int(data.get("seed", 0))
    if "preset" in data:
        builders = {"three_class": three_class_corpus, "nested": nested_corpus, "full_scale": full_scale_corpus}
        name = data["preset"]
        if name not in builders:
            raise SynthError(f"unknown preset {name!r}; choose from {sorted(builders)}")
        spec = builders[name](seed=seed, **data.get("preset_args", {}))
    else:
        rows = data.get("countries") or []
        spec = SynthCorpusSpec([_country_from_dict(r, country_code(i)) for i, r in enumerate(rows)], seed=seed)
    spec.year = int(data.get("year", spec.year))
    return spec


def load_corpus_spec(path: str | Path) -> SynthCorpusSpec:
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    return corpus_from_dict(data)


def write_trade_file(matrix: TradeMatrix, path: str | Path) -> None:
    """Long-format records in the layout the ingest step reads."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "country", "product", "volume", "category"])
        year = matrix.year if matrix.year is not None else 0
        for i, c in enumerate(matrix.countries):
            row = matrix.volumes[i]
            for j in np.flatnonzero(row > 0):
                p = matrix.products[j]
                w.writerow([year, c, p, repr(float(row[j])), p[:2]])


def write_labels(spec: SynthCorpusSpec, path: str | Path) -> None:
    cols = [
        "country", "intended_class", "n_products", "k_capabilities", "capability_log_mean",
        "capability_log_sd", "left_threshold", "cap_kind", "cap_quantile", "pareto_alpha",
        "seed", "rng",
    ]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for c in sorted(spec.countries, key=lambda s: s.code):
            seed = c.seed if c.seed is not None else " ".join(map(str, seed_words(spec.seed, c.code)))
            cap = c.right_cap
            w.writerow([
                c.code,
                c.label.value if c.label else "",
                c.n_products,
                c.k_capabilities,
                repr(c.capability_log_mean),
                repr(c.capability_log_sd),
                repr(c.left_threshold) if c.left_threshold is not None else "",
                cap.kind if cap else "",
                repr(cap.cap_quantile) if cap else "",
                repr(cap.pareto_alpha) if cap else "",
                seed,
                RNG_NAME,
            ])


def spec_to_dict(spec: SynthCorpusSpec) -> dict[str, Any]:
    rows = []
    for c in spec.countries:
        d = asdict(c)
        d["label"] = c.label.value if c.label else None
        rows.append(d)
    return {"seed": spec.seed, "year": spec.year, "countries": rows}


def read_labels(path: str | Path) -> dict[str, str]:
    with Path(path).open(newline="") as fh:
        return {r["country"]: r["intended_class"] for r in csv.DictReader(fh)}


__all__ = [
    "RightCap", "SynthCountrySpec", "SynthCorpusSpec", "gen_country", "gen_corpus",
    "graft_densities", "three_class_corpus", "nested_corpus", "full_scale_corpus",
    "shuffled_null", "load_corpus_spec", "corpus_from_dict", "write_trade_file", "write_labels",
]
