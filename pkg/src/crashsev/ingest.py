"""Crash record parsing, KABCO severity mapping and district slicing."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

COVARIATES = (
    "rear_end", "angle", "head_on", "sideswipe", "hit_fixed_object",
    "hit_pedestrian", "hit_bicycle", "state_road", "local_road", "curve_road",
    "speed_limit_ge50", "unsignalized_intersection", "signalized_intersection",
    "snow", "work_zone", "dark", "light", "rural", "older_driver",
    "young_driver", "drunk_driving", "exceeding_speed_limit", "fatigued",
    "drug_related", "running_stop_sign", "running_red_light", "unbelted",
    "large_truck", "overturn",
)

BASE_COLUMNS = ("id", "lat", "lon", "max_injury")


class SchemaError(ValueError):
    pass


class RowError(ValueError):
    def __init__(self, row: int, message: str):
        super().__init__(f"row {row}: {message}")
        self.row = row
        self.message = message


class KabcoLevel(enum.Enum):
    K = "K"
    A = "A"
    B = "B"
    C = "C"
    O = "O"  # noqa: E741

    @classmethod
    def parse(cls, token: str) -> "KabcoLevel":
        try:
            return cls(token.strip().upper())
        except ValueError:
            raise ValueError(f"unknown KABCO level {token!r}") from None


# casualty ordering, most severe first
KABCO_ORDER = (KabcoLevel.K, KabcoLevel.A, KabcoLevel.B, KabcoLevel.C, KabcoLevel.O)

_SEVERITY = {KabcoLevel.O: 0, KabcoLevel.C: 1, KabcoLevel.B: 1, KabcoLevel.A: 2, KabcoLevel.K: 2}

_FATALITY_EQUIVALENT = {
    KabcoLevel.K: 1.0,
    KabcoLevel.A: 0.1107,
    KabcoLevel.B: 0.0310,
    KabcoLevel.C: 0.0148,
    KabcoLevel.O: 0.0049,
}

SEVERITY_LABELS = ("none", "minor", "serious")


def severity_class(k: KabcoLevel) -> int:
    """Ordinal response: 0 no injury, 1 minor (B, C), 2 serious (K, A)."""
    return _SEVERITY[k]


def equivalent_fatality(k: KabcoLevel) -> float:
    return _FATALITY_EQUIVALENT[k]


@dataclass(frozen=True)
class CrashRecord:
    id: str
    lat: float
    lon: float
    max_injury: KabcoLevel
    covariates: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError("latitude out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError("longitude out of range")
        for name, v in self.covariates.items():
            if v not in (0, 1):
                raise ValueError(f"covariate {name} must be 0 or 1, got {v!r}")

    @property
    def severity(self) -> int:
        return severity_class(self.max_injury)

    @property
    def weight(self) -> float:
        return equivalent_fatality(self.max_injury)


@dataclass
class IngestReport:
    n_rows: int = 0
    errors: list[RowError] = field(default_factory=list)
    missing: dict[str, int] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_indicator(token: str) -> int | None:
    token = token.strip()
    if token == "":
        return None
    v = float(token)
    if v not in (0.0, 1.0):
        raise ValueError(f"indicator value {token!r} is not 0/1")
    return int(v)


def parse_crashes(
    source: IO[bytes] | IO[str] | bytes | str,
    schema: Mapping[str, str] | None = None,
    covariates: Sequence[str] | None = None,
    on_error: str = "raise",
) -> tuple[list[CrashRecord], IngestReport]:
    """Parse a crash CSV into records.

    ``schema`` maps logical field names (``id``, ``lat``, ``lon``,
    ``max_injury`` and covariate names) to CSV column headers; unmapped names
    are looked up verbatim. Covariate columns missing from the header are
    treated as all-zero and counted in ``report.missing``; empty covariate
    cells default to 0 and are counted too.

    ``on_error`` is ``"raise"`` (fail on the first bad row) or ``"skip"``
    (collect row errors in the report).
    """
    if on_error not in ("raise", "skip"):
        raise ValueError("on_error must be 'raise' or 'skip'")
    schema = dict(schema or {})
    covariates = tuple(COVARIATES if covariates is None else covariates)

    if isinstance(source, bytes):
        text = io.StringIO(source.decode("utf-8-sig"))
    elif isinstance(source, str):
        text = io.StringIO(source)
    else:
        head = source.read()
        text = io.StringIO(head.decode("utf-8-sig") if isinstance(head, bytes) else head)

    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("header row missing") from None
    index = {name: i for i, name in enumerate(header)}

    def col(name):
        return index.get(schema.get(name, name))

    base = {}
    for name in BASE_COLUMNS:
        i = col(name)
        if i is None:
            raise SchemaError(f"missing column {schema.get(name, name)!r}")
        base[name] = i
    cov_idx = {name: col(name) for name in covariates}

    report = IngestReport(missing={name: 0 for name in covariates})
    absent = [name for name, i in cov_idx.items() if i is None]

    records = []
    for rownum, row in enumerate(reader, start=2):
        if not row:
            continue
        report.n_rows += 1
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            try:
                lat = float(row[base["lat"]])
                lon = float(row[base["lon"]])
            except ValueError:
                raise ValueError("unparseable coordinate") from None
            if not -90.0 <= lat <= 90.0:
                raise ValueError("latitude out of range")
            if not -180.0 <= lon <= 180.0:
                raise ValueError("longitude out of range")
            level = KabcoLevel.parse(row[base["max_injury"]])
            cov = {}
            for name, i in cov_idx.items():
                v = None if i is None else _parse_indicator(row[i])
                if v is None:
                    report.missing[name] += 1
                    v = 0
                cov[name] = v
            records.append(CrashRecord(row[base["id"]], lat, lon, level, cov))
        except ValueError as exc:
            err = RowError(rownum, str(exc))
            if on_error == "raise":
                raise err from None
            report.errors.append(err)
    for name in absent:
        report.missing[name] = report.n_rows
    return records, report


def write_crashes(records: Iterable[CrashRecord], dest: IO[str],
                  covariates: Sequence[str] | None = None) -> None:
    covariates = tuple(COVARIATES if covariates is None else covariates)
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(BASE_COLUMNS + covariates)
    for r in records:
        w.writerow([r.id, repr(r.lat), repr(r.lon), r.max_injury.value]
                   + [r.covariates.get(c, 0) for c in covariates])


def to_frame(records: Sequence[CrashRecord], covariates: Sequence[str] | None = None) -> pd.DataFrame:
    """Model-ready table: one row per crash, covariates plus ``severity``."""
    covariates = tuple(COVARIATES if covariates is None else covariates)
    data = {c: np.fromiter((r.covariates.get(c, 0) for r in records), dtype=float, count=len(records))
            for c in covariates}
    data["severity"] = np.fromiter((r.severity for r in records), dtype=int, count=len(records))
    return pd.DataFrame(data, index=[r.id for r in records])


def slice_by_cells(records: Sequence[CrashRecord], located: np.ndarray, cells: set[tuple[int, int]]) -> list[CrashRecord]:
    """Records whose located (row, col) lies in ``cells``.

    ``located`` is the ``(n, 2)`` array produced by :func:`crashsev.raster.locate`.
    """
    return [r for r, (i, j) in zip(records, located) if (int(i), int(j)) in cells]
