"""Rectangular rasterization of crash points and queen-contiguity weights."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
import scipy.sparse as sp

from .ingest import CrashRecord

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
DEFAULT_CELL_KM = 1.364  # ~1.86 km^2 cells


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Grid anchored at its south-west corner.

    Coordinates are projected onto a local equirectangular plane whose
    longitude scale is taken at the grid's central latitude.
    """

    origin_lat: float
    origin_lon: float
    cell_size_km: float = DEFAULT_CELL_KM
    n_rows: int = 1
    n_cols: int = 1

    def __post_init__(self):
        if not self.cell_size_km > 0 or self.n_rows < 1 or self.n_cols < 1:
            raise GridError("grid must have positive cell size and at least one row and column")

    @property
    def height_km(self) -> float:
        return self.n_rows * self.cell_size_km

    @property
    def width_km(self) -> float:
        return self.n_cols * self.cell_size_km

    @property
    def _ref_lat(self) -> float:
        return self.origin_lat + math.degrees(0.5 * self.height_km / EARTH_RADIUS_KM)

    def project(self, lat, lon):
        """(lat, lon) degrees -> (y_km, x_km) relative to the origin."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        y = EARTH_RADIUS_KM * np.radians(lat - self.origin_lat)
        x = EARTH_RADIUS_KM * math.cos(math.radians(self._ref_lat)) * np.radians(lon - self.origin_lon)
        return y, x

    def unproject(self, y_km, x_km):
        y_km = np.asarray(y_km, dtype=float)
        x_km = np.asarray(x_km, dtype=float)
        lat = self.origin_lat + np.degrees(y_km / EARTH_RADIUS_KM)
        lon = self.origin_lon + np.degrees(x_km / (EARTH_RADIUS_KM * math.cos(math.radians(self._ref_lat))))
        return lat, lon

    def cell_polygon(self, row: int, col: int) -> list[list[float]]:
        ys = np.array([row, row, row + 1, row + 1, row]) * self.cell_size_km
        xs = np.array([col, col + 1, col + 1, col, col]) * self.cell_size_km
        lat, lon = self.unproject(ys, xs)
        return [[float(a), float(b)] for a, b in zip(lon, lat)]

    @classmethod
    def covering(cls, records: Sequence[CrashRecord], cell_size_km: float = DEFAULT_CELL_KM) -> "GridSpec":
        """Smallest grid anchored at the records' south-west bound that covers them."""
        if not records:
            raise GridError("cannot derive a grid from zero records")
        lat = np.array([r.lat for r in records])
        lon = np.array([r.lon for r in records])
        lat0, lon0 = float(lat.min()), float(lon.min())
        n_rows = max(1, math.ceil(EARTH_RADIUS_KM * math.radians(lat.max() - lat0) / cell_size_km))
        # longitude scale depends on n_rows through the reference latitude
        g = cls(lat0, lon0, cell_size_km, n_rows, 1)
        _, x = g.project(lat, lon)
        n_cols = max(1, math.ceil(float(x.max()) / cell_size_km))
        return cls(lat0, lon0, cell_size_km, n_rows, n_cols)


@dataclass(frozen=True)
class RasterCell:
    row: int
    col: int
    crash_count: int
    attribute: float


@dataclass
class SpatialWeights:
    """Binary symmetric adjacency over ``n`` cells, diagonal excluded."""

    n: int
    neighbors: list[np.ndarray]

    @property
    def cardinalities(self) -> np.ndarray:
        return np.array([len(nb) for nb in self.neighbors], dtype=int)

    @property
    def s0(self) -> float:
        return float(self.cardinalities.sum())

    def sparse(self) -> sp.csr_matrix:
        rows = np.repeat(np.arange(self.n), self.cardinalities)
        cols = np.concatenate(self.neighbors) if self.n else np.empty(0, dtype=int)
        return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(self.n, self.n))

    def dense(self) -> np.ndarray:
        return self.sparse().toarray()

    @classmethod
    def from_dense(cls, w) -> "SpatialWeights":
        w = np.asarray(w)
        if w.shape[0] != w.shape[1]:
            raise ValueError("weights matrix must be square")
        if not np.array_equal(w, w.T):
            raise ValueError("weights matrix must be symmetric")
        if np.any(np.diag(w) != 0):
            raise ValueError("weights matrix must have a zero diagonal")
        if not np.isin(w, (0, 1)).all():
            raise ValueError("weights must be binary")
        return cls(w.shape[0], [np.flatnonzero(row) for row in w])


def locate(records: Sequence[CrashRecord], spec: GridSpec) -> np.ndarray:
    """(row, col) for every record; ``-1`` marks records outside the extent.

    Cells are half-open ``[lower, upper)``; points exactly on the upper extent
    edge go to the last row or column.
    """
    out = np.full((len(records), 2), -1, dtype=int)
    if not records:
        return out
    y, x = spec.project([r.lat for r in records], [r.lon for r in records])
    rows = np.floor(y / spec.cell_size_km).astype(int)
    cols = np.floor(x / spec.cell_size_km).astype(int)
    rows[np.isclose(y, spec.height_km, rtol=0, atol=1e-9)] = spec.n_rows - 1
    cols[np.isclose(x, spec.width_km, rtol=0, atol=1e-9)] = spec.n_cols - 1
    inside = (rows >= 0) & (rows < spec.n_rows) & (cols >= 0) & (cols < spec.n_cols)
    out[inside, 0] = rows[inside]
    out[inside, 1] = cols[inside]
    return out


def rasterize(records: Sequence[CrashRecord], spec: GridSpec) -> list[RasterCell]:
    """Aggregate records into non-empty cells, sorted by (row, col).

    Out-of-extent records are logged and excluded; use :func:`locate` to
    recover them.
    """
    loc = locate(records, spec)
    inside = loc[:, 0] >= 0
    n_out = int((~inside).sum())
    if n_out:
        log.warning("%d record(s) fall outside the grid extent", n_out)
    if not inside.any():
        return []
    keys = loc[inside, 0].astype(np.int64) * spec.n_cols + loc[inside, 1]
    weights = np.array([r.weight for r, ok in zip(records, inside) if ok])
    uniq, inv = np.unique(keys, return_inverse=True)
    counts = np.bincount(inv)
    attr = np.bincount(inv, weights=weights)
    return [RasterCell(int(k // spec.n_cols), int(k % spec.n_cols), int(c), float(a))
            for k, c, a in zip(uniq, counts, attr)]


def queen_weights(cells: Sequence[RasterCell]) -> SpatialWeights:
    """Queen contiguity (edges and corners) among the given cells only."""
    pos = {}
    for i, c in enumerate(cells):
        key = (c.row, c.col)
        if key in pos:
            raise ValueError(f"duplicate cell {key}")
        pos[key] = i
    neighbors = []
    for c in cells:
        nb = [pos[(c.row + dr, c.col + dc)]
              for dr in (-1, 0, 1) for dc in (-1, 0, 1)
              if (dr or dc) and (c.row + dr, c.col + dc) in pos]
        neighbors.append(np.array(sorted(nb), dtype=int))
    return SpatialWeights(len(cells), neighbors)


def cells_geojson(cells: Sequence[RasterCell], spec: GridSpec, extra: dict[str, Sequence] | None = None) -> dict:
    """RFC 7946 FeatureCollection of cell polygons.

    ``extra`` adds per-cell property columns (aligned with ``cells``).
    """
    features = []
    for i, c in enumerate(cells):
        props = {"row": c.row, "col": c.col, "crash_count": c.crash_count, "attribute": c.attribute}
        for name, values in (extra or {}).items():
            v = values[i]
            props[name] = v.item() if hasattr(v, "item") else v
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [spec.cell_polygon(c.row, c.col)]},
            "properties": props,
        })
    return {"type": "FeatureCollection", "features": features}


def write_geojson(collection: dict, dest: IO[str]) -> None:
    json.dump(collection, dest, indent=1, allow_nan=False)
    dest.write("\n")
