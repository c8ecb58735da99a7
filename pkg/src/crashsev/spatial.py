"""Global Moran's I, local Getis-Ord G* and hotspot district extraction."""
from __future__ import annotations

import enum
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.special import ndtr

from .ingest import CrashRecord, slice_by_cells
from .raster import GridSpec, RasterCell, SpatialWeights, locate

SIGNIFICANCE_Z = 1.96


class DegenerateInputError(ValueError):
    pass


class WeightsError(ValueError):
    pass


@dataclass(frozen=True)
class MoranResult:
    I: float
    expectation: float
    variance: float
    z: float
    p_two_sided: float

    @property
    def significant(self) -> bool:
        return abs(self.z) > SIGNIFICANCE_Z

    def to_dict(self) -> dict:
        return {"I": self.I, "E": self.expectation, "V": self.variance, "z": self.z, "p": self.p_two_sided}


class HotspotLabel(enum.IntEnum):
    COLD99 = -3
    COLD95 = -2
    COLD90 = -1
    NOT_SIGNIFICANT = 0
    HOT90 = 1
    HOT95 = 2
    HOT99 = 3

    @property
    def display(self) -> str:
        return {0: "NotSignificant"}.get(self.value, self.name.title())

    @classmethod
    def parse(cls, name: str) -> "HotspotLabel":
        key = name.strip().upper().replace("NOTSIGNIFICANT", "NOT_SIGNIFICANT")
        return cls[key]


# two-sided normal critical values for 99/95/90 % confidence
_BINS = ((2.576, 3), (1.960, 2), (1.645, 1))


def _check(x, w: SpatialWeights) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or len(x) != w.n:
        raise ValueError("attribute vector length must equal the number of cells")
    if len(x) < 2:
        raise DegenerateInputError("need at least two cells")
    if np.ptp(x) == 0:
        raise DegenerateInputError("attribute is constant; spatial statistics are undefined")
    return x


def _lag(x: np.ndarray, w: SpatialWeights) -> np.ndarray:
    return w.sparse() @ x


def morans_i(x, w: SpatialWeights) -> float:
    x = _check(x, w)
    s0 = w.s0
    if s0 == 0:
        raise WeightsError("no cell has any neighbor")
    z = x - x.mean()
    return float(len(x) / s0 * (z @ _lag(z, w)) / (z @ z))


def morans_expectation(n: int) -> float:
    if n < 2:
        raise ValueError("Moran's I needs n >= 2")
    return -1.0 / (n - 1)


def morans_variance(x, w: SpatialWeights) -> float:
    """Variance of I under the randomization null (Cliff and Ord).

    For n < 4 the closed form is undefined, so the exact permutation
    variance is enumerated instead.
    """
    x = _check(x, w)
    n = len(x)
    s0 = w.s0
    if s0 == 0:
        raise WeightsError("no cell has any neighbor")
    if n < 4:
        vals = [morans_i(x[list(p)], w) for p in itertools.permutations(range(n))]
        return float(np.var(vals))
    ws = w.sparse()
    s1 = 0.5 * float(((ws + ws.T).power(2)).sum())
    s2 = float(((np.asarray(ws.sum(axis=1)).ravel() + np.asarray(ws.sum(axis=0)).ravel()) ** 2).sum())
    z = x - x.mean()
    m2 = (z ** 2).sum()
    b2 = n * (z ** 4).sum() / m2 ** 2
    nn = float(n)
    num = (nn * ((nn * nn - 3 * nn + 3) * s1 - nn * s2 + 3 * s0 ** 2)
           - b2 * ((nn * nn - nn) * s1 - 2 * nn * s2 + 6 * s0 ** 2))
    e_i2 = num / ((nn - 1) * (nn - 2) * (nn - 3) * s0 ** 2)
    return float(e_i2 - morans_expectation(n) ** 2)


def morans_z(i: float, expectation: float, variance: float) -> tuple[float, float]:
    """Standard score and two-sided normal p-value."""
    if not variance > 0:
        raise DegenerateInputError("variance of I is not positive")
    z = (i - expectation) / math.sqrt(variance)
    return z, float(2.0 * ndtr(-abs(z)))


def moran(x, w: SpatialWeights) -> MoranResult:
    i = morans_i(x, w)
    e = morans_expectation(len(np.asarray(x)))
    v = morans_variance(x, w)
    z, p = morans_z(i, e, v)
    return MoranResult(i, e, v, z, p)


def morans_permutations(x, w: SpatialWeights, n_perm: int, rng: np.random.Generator) -> np.ndarray:
    """I under random relabelling of ``x``; a reference null for tests."""
    x = _check(x, w)
    ws = w.sparse()
    n = len(x)
    factor = n / w.s0
    z = x - x.mean()
    denom = z @ z
    out = np.empty(n_perm)
    for k in range(n_perm):
        zp = z[rng.permutation(n)]
        out[k] = factor * (zp @ (ws @ zp)) / denom
    return out


def getis_ord_gstar(x, w: SpatialWeights) -> np.ndarray:
    """Per-cell G* z-scores with self-inclusive binary weights."""
    x = _check(x, w)
    n = len(x)
    xbar = x.mean()
    s = math.sqrt((x ** 2).sum() / n - xbar ** 2)
    lag = _lag(x, w) + x
    wsum = w.cardinalities + 1.0
    # binary weights: sum of squared weights equals sum of weights
    denom = s * np.sqrt((n * wsum - wsum ** 2) / (n - 1))
    num = lag - xbar * wsum
    with np.errstate(invalid="ignore", divide="ignore"):
        g = np.where(denom > 0, num / np.where(denom > 0, denom, 1.0), 0.0)
    return g


def classify_hotspots(z) -> list[HotspotLabel]:
    out = []
    for v in np.atleast_1d(np.asarray(z, dtype=float)):
        level = 0
        for crit, lv in _BINS:
            if abs(v) >= crit:
                level = lv
                break
        out.append(HotspotLabel(int(math.copysign(level, v)) if level else 0))
    return out


@dataclass
class District:
    district_id: int
    member_cells: set[tuple[int, int]]
    records: list[CrashRecord] = field(default_factory=list)

    @property
    def crash_count(self) -> int:
        return len(self.records)


def extract_districts(
    cells: Sequence[RasterCell],
    labels: Sequence[HotspotLabel],
    records: Sequence[CrashRecord],
    grid: GridSpec,
    k: int = 4,
    min_cells: int = 3,
    level: HotspotLabel = HotspotLabel.HOT90,
) -> list[District]:
    """Group hot cells into queen-connected components and keep the top ``k``.

    Components with fewer than ``min_cells`` cells are discarded; survivors
    are ranked by member crash count (ties broken by lowest (row, col)) and
    numbered 1..k in that order.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(cells) != len(labels):
        raise ValueError("cells and labels must align")
    hot = [i for i, lab in enumerate(labels) if lab >= level]
    found = []
    if hot:
        pos = {(cells[i].row, cells[i].col): j for j, i in enumerate(hot)}
        rows, cols = [], []
        for j, i in enumerate(hot):
            c = cells[i]
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    nb = pos.get((c.row + dr, c.col + dc))
                    if nb is not None and nb != j:
                        rows.append(j)
                        cols.append(nb)
        adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(hot), len(hot)))
        _, comp = connected_components(adj, directed=False)
        for c_id in np.unique(comp):
            members = [cells[hot[j]] for j in np.flatnonzero(comp == c_id)]
            if len(members) < min_cells:
                continue
            keys = {(m.row, m.col) for m in members}
            found.append((-sum(m.crash_count for m in members), min(keys), keys))
    found.sort(key=lambda t: (t[0], t[1]))
    if len(found) < k:
        warnings.warn(f"only {len(found)} qualifying hotspot component(s) found, {k} requested", stacklevel=2)
    loc = locate(records, grid)
    districts = []
    for d_id, (_, _, keys) in enumerate(found[:k], start=1):
        districts.append(District(d_id, keys, slice_by_cells(records, loc, keys)))
    return districts
