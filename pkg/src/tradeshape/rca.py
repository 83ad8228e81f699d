"""Balassa revealed comparative advantage and the binary export matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from tradeshape.ingest import TradeMatrix


@dataclass
class BinaryExportMatrix:
    countries: list[str]
    products: list[str]
    m: NDArray[np.int8]
    threshold: float = 1.0

    def __post_init__(self) -> None:
        self.m = np.asarray(self.m)
        if self.m.shape != (len(self.countries), len(self.products)):
            raise ValueError("binary matrix shape does not match code lists")
        if not np.isin(self.m, (0, 1)).all():
            raise ValueError("binary export matrix entries must be 0 or 1")

    @classmethod
    def from_array(cls, m: ArrayLike, countries=None, products=None, threshold: float = 1.0):
        """Wrap a plain 0/1 array, inventing codes when none are given."""
        arr = np.asarray(m).astype(np.int8)
        c, p = arr.shape
        countries = list(countries) if countries is not None else [f"c{i}" for i in range(c)]
        products = list(products) if products is not None else [f"{j:04d}" for j in range(p)]
        return cls(countries, products, arr, threshold)


def rca_matrix(t: TradeMatrix | ArrayLike) -> NDArray[np.float64]:
    """RCA_cp = (E_cp / sum_p E_cp) / (sum_c E_cp / sum_cp E_cp).

    Cells in an all-zero row or column get RCA = 0.
    """
    e = np.asarray(t.volumes if isinstance(t, TradeMatrix) else t, dtype=float)
    if e.size == 0:
        raise ValueError("empty trade matrix")
    total = e.sum()
    if not total > 0:
        raise ValueError("trade matrix has no positive volume")
    row = e.sum(axis=1, keepdims=True)
    col = e.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (e / row) / (col / total)
    out[~np.isfinite(out)] = 0.0
    out[(row == 0).ravel(), :] = 0.0
    out[:, (col == 0).ravel()] = 0.0
    return out


def binarize(rca: ArrayLike, threshold: float = 1.0, countries=None, products=None) -> BinaryExportMatrix:
    """M_cp = 1 iff RCA_cp >= threshold."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    r = np.asarray(rca, dtype=float)
    m = (r >= threshold).astype(np.int8)
    return BinaryExportMatrix.from_array(m, countries, products, threshold)


def export_matrix(t: TradeMatrix, threshold: float = 1.0) -> BinaryExportMatrix:
    return binarize(rca_matrix(t), threshold, t.countries, t.products)
