"""Synthetic crash data with planted hotspots and known model parameters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ingest import COVARIATES, CrashRecord, KabcoLevel
from .probit.model import CONSTANT, ModelSpec, Parameters, build_design
from .raster import DEFAULT_CELL_KM, GridSpec

# rough prevalence of the indicators in speeding crashes
PREVALENCE = {
    "rear_end": 0.22, "angle": 0.14, "head_on": 0.03, "sideswipe": 0.04,
    "hit_fixed_object": 0.5, "hit_pedestrian": 0.01, "hit_bicycle": 0.002,
    "state_road": 0.25, "local_road": 0.37, "curve_road": 0.33,
    "speed_limit_ge50": 0.34, "unsignalized_intersection": 0.22,
    "signalized_intersection": 0.12, "snow": 0.15, "work_zone": 0.02,
    "dark": 0.18, "light": 0.2, "rural": 0.5, "older_driver": 0.09,
    "young_driver": 0.2, "drunk_driving": 0.08, "exceeding_speed_limit": 0.16,
    "fatigued": 0.01, "drug_related": 0.04, "running_stop_sign": 0.02,
    "running_red_light": 0.015, "unbelted": 0.13, "large_truck": 0.08,
    "overturn": 0.09,
}


def default_spec(n_draws: int = 1000) -> ModelSpec:
    return ModelSpec(
        fixed_vars=("hit_fixed_object", "drunk_driving", "unbelted"),
        random_vars=("exceeding_speed_limit", "young_driver"),
        mean_shifters={"exceeding_speed_limit": ("curve_road",)},
        correlated=True,
        n_draws=n_draws,
    )


# generating coefficients by variable; unlisted variables get DEFAULT_SLOPE
TRUE_COEF = {
    CONSTANT: -0.3, "hit_fixed_object": -0.5, "drunk_driving": 0.9, "unbelted": 1.1,
    "exceeding_speed_limit": 0.6, "young_driver": -0.2,
}
DEFAULT_SLOPE = 0.3


def default_truth(spec: ModelSpec) -> Parameters:
    """Generating parameters for any spec, keyed by variable name."""
    p = Parameters.zeros(spec, u1=1.4)
    p.beta_fixed = np.array([TRUE_COEF.get(v, DEFAULT_SLOPE) for v in spec.fixed_names])
    p.beta_random_mean = np.array([TRUE_COEF.get(v, DEFAULT_SLOPE) for v in spec.random_names])
    for k, m in spec.shifter_index:
        p.eta[k, m] = 0.5
    K = len(spec.random_names)
    diag = [0.9, 0.7] + [0.8] * max(0, K - 2)
    p.cholesky = np.diag(diag[:K])
    if spec.correlated:
        for k in range(1, K):
            p.cholesky[k, k - 1] = -0.5
    return p


def perturb(params: Parameters, rng: np.random.Generator, scale: float, spec: ModelSpec) -> Parameters:
    """Jitter slope coefficients; the constant and threshold stay put so the
    overall severity level (and hence hotspot strength) is comparable."""
    fixed = params.beta_fixed + rng.normal(0, scale, params.beta_fixed.shape)
    rand = params.beta_random_mean + rng.normal(0, scale, params.beta_random_mean.shape)
    for k, name in enumerate(spec.fixed_names):
        if name == CONSTANT:
            fixed[k] = params.beta_fixed[k]
    for k, name in enumerate(spec.random_names):
        if name == CONSTANT:
            rand[k] = params.beta_random_mean[k]
    return Parameters(fixed, rand, params.eta.copy(), params.cholesky.copy(), params.threshold_u1)


def simulate_ordered_probit(data: pd.DataFrame, spec: ModelSpec, params: Parameters,
                            rng: np.random.Generator) -> np.ndarray:
    """Draw severity classes from the model with true (pseudo-random) normals."""
    frame = data.copy()
    frame[spec.response] = 0
    d = build_design(frame, spec)
    K = len(spec.random_names)
    mean = params.beta_random_mean + (d.z @ params.eta.T if d.z.shape[1] else 0.0)
    beta_r = mean + rng.standard_normal((d.n, K)) @ params.cholesky.T
    ystar = d.xf @ params.beta_fixed + (d.xr * beta_r).sum(axis=1) + rng.standard_normal(d.n)
    return np.where(ystar < 0, 0, np.where(ystar < params.threshold_u1, 1, 2))


def binary_covariates(n: int, rng: np.random.Generator, columns=COVARIATES) -> pd.DataFrame:
    return pd.DataFrame({c: (rng.random(n) < PREVALENCE.get(c, 0.1)).astype(float) for c in columns})


def kabco_from_class(y: np.ndarray, rng: np.random.Generator) -> list[KabcoLevel]:
    u = rng.random(len(y))
    out = []
    for cls, v in zip(y, u):
        if cls == 2:
            out.append(KabcoLevel.K if v < 0.1 else KabcoLevel.A)
        elif cls == 1:
            out.append(KabcoLevel.B if v < 0.4 else KabcoLevel.C)
        else:
            out.append(KabcoLevel.O)
    return out


@dataclass
class PlantedLayout:
    grid: GridSpec
    clusters: list[set[tuple[int, int]]]
    background: list[tuple[int, int]]

    @property
    def cluster_cells(self) -> set[tuple[int, int]]:
        return set().union(*self.clusters) if self.clusters else set()


def plant_layout(
    rng: np.random.Generator,
    n_rows: int = 40,
    n_cols: int = 40,
    n_clusters: int = 4,
    size_range: tuple[int, int] = (2, 4),
    background_density: float = 0.35,
    origin: tuple[float, float] = (40.0, -78.0),
    cell_size_km: float = DEFAULT_CELL_KM,
) -> PlantedLayout:
    """Rectangular clusters, each fenced by a one-cell ring of empty cells."""
    grid = GridSpec(origin[0], origin[1], cell_size_km, n_rows, n_cols)
    blocked = np.zeros((n_rows, n_cols), dtype=bool)
    clusters = []
    for _ in range(n_clusters):
        for _attempt in range(1000):
            h, w = rng.integers(size_range[0], size_range[1] + 1, size=2)
            r0 = int(rng.integers(1, n_rows - h))
            c0 = int(rng.integers(1, n_cols - w))
            if not blocked[r0 - 1:r0 + h + 1, c0 - 1:c0 + w + 1].any():
                break
        else:
            raise RuntimeError("could not place all clusters; enlarge the grid")
        blocked[r0 - 1:r0 + h + 1, c0 - 1:c0 + w + 1] = True
        clusters.append({(r, c) for r in range(r0, r0 + h) for c in range(c0, c0 + w)})
    free = np.argwhere(~blocked)
    keep = rng.random(len(free)) < background_density
    background = [(int(r), int(c)) for r, c in free[keep]]
    return PlantedLayout(grid, clusters, background)


def _points_in(cells: list[tuple[int, int]], grid: GridSpec, rng: np.random.Generator):
    cells = np.asarray(cells, dtype=float).reshape(-1, 2)
    # stay clear of cell edges so binning recovers the planted cell
    off = rng.uniform(0.05, 0.95, size=cells.shape)
    y = (cells[:, 0] + off[:, 0]) * grid.cell_size_km
    x = (cells[:, 1] + off[:, 1]) * grid.cell_size_km
    return grid.unproject(y, x)


@dataclass
class SynthResult:
    records: list[CrashRecord]
    layout: PlantedLayout
    spec: ModelSpec
    base_params: Parameters
    cluster_params: list[Parameters]
    cluster_of: np.ndarray  # planted cluster index per record, -1 for background
    truth: dict = field(default_factory=dict)


def synthesize(
    n: int = 5000,
    seed: int = 42,
    n_clusters: int = 4,
    cluster_share: float = 0.8,
    heterogeneous: bool = True,
    perturb_scale: float = 0.3,
    n_rows: int = 40,
    n_cols: int = 40,
    spec: ModelSpec | None = None,
    params: Parameters | None = None,
) -> SynthResult:
    """Crash records whose severities follow a known ordered probit.

    Planted clusters receive ``cluster_share`` of all crashes; with
    ``heterogeneous`` each cluster gets its own perturbed parameter vector.
    """
    rng = np.random.default_rng(seed)
    spec = spec or default_spec()
    base = params or default_truth(spec)
    layout = plant_layout(rng, n_rows, n_cols, n_clusters)
    n_bg = 0 if not layout.background else n - int(round(cluster_share * n))
    n_cl = n - n_bg

    cells, owner = [], []
    cl_cells = [sorted(c) for c in layout.clusters]
    flat = [(cell, k) for k, cs in enumerate(cl_cells) for cell in cs]
    # every planted cell gets at least one crash, the rest spread uniformly
    picks = list(range(len(flat))) + list(rng.integers(0, len(flat), n_cl - len(flat)))
    for i in sorted(picks):
        cells.append(flat[i][0])
        owner.append(flat[i][1])
    if n_bg:
        bg = layout.background
        first = list(range(min(len(bg), n_bg)))
        picks = first + list(rng.integers(0, len(bg), n_bg - len(first)))
        for i in sorted(picks):
            cells.append(bg[i])
            owner.append(-1)
    owner = np.array(owner)

    cluster_params = [perturb(base, rng, perturb_scale, spec) if heterogeneous else base
                      for _ in layout.clusters]
    cov = binary_covariates(n, rng)
    y = np.empty(n, dtype=int)
    for k in range(-1, len(layout.clusters)):
        mask = owner == k
        if mask.any():
            p = base if k < 0 else cluster_params[k]
            y[mask] = simulate_ordered_probit(cov[mask].reset_index(drop=True), spec, p, rng)
    levels = kabco_from_class(y, rng)
    lat, lon = _points_in(cells, layout.grid, rng)
    cov_int = cov.to_numpy(dtype=int)
    records = [
        CrashRecord(f"S{seed}-{i:06d}", float(lat[i]), float(lon[i]), levels[i],
                    dict(zip(COVARIATES, cov_int[i].tolist())))
        for i in range(n)
    ]
    truth = {
        "schema": "crashsev.truth/1",
        "seed": seed,
        "n": n,
        "grid": {"origin_lat": layout.grid.origin_lat, "origin_lon": layout.grid.origin_lon,
                 "cell_size_km": layout.grid.cell_size_km, "n_rows": layout.grid.n_rows,
                 "n_cols": layout.grid.n_cols},
        "spec": spec.to_dict(),
        "params": base.to_dict(),
        "param_vector": dict(zip(spec.param_names, _natural(base.pack(spec)))),
        "clusters": [
            {"cells": sorted([list(c) for c in cs]), "n_crashes": int((owner == k).sum()),
             "params": cluster_params[k].to_dict(),
             "param_vector": dict(zip(spec.param_names, _natural(cluster_params[k].pack(spec))))}
            for k, cs in enumerate(layout.clusters)
        ],
    }
    return SynthResult(records, layout, spec, base, cluster_params, owner, truth)


def _natural(theta: np.ndarray) -> list[float]:
    out = theta.astype(float).tolist()
    out[-1] = float(np.exp(theta[-1]))
    return out


def probit_frame(
    n: int,
    rng: np.random.Generator,
    n_fixed: int = 3,
    n_random: int = 2,
    n_shifters: int = 1,
    random_sd: float = 1.0,
) -> pd.DataFrame:
    """Covariates for parameter-recovery experiments.

    Fixed regressors are binary, random-coefficient regressors normal with
    standard deviation ``random_sd``, mean shifters binary.
    """
    cols = {f"x{i + 1}": (rng.random(n) < 0.4).astype(float) for i in range(n_fixed)}
    cols.update({f"r{i + 1}": random_sd * rng.standard_normal(n) for i in range(n_random)})
    cols.update({f"z{i + 1}": (rng.random(n) < 0.5).astype(float) for i in range(n_shifters)})
    return pd.DataFrame(cols)


def recovery_spec(n_draws: int = 500, correlated: bool = True) -> ModelSpec:
    return ModelSpec(fixed_vars=("x1", "x2", "x3"), random_vars=("r1", "r2"),
                     mean_shifters={"r1": ("z1",)}, correlated=correlated, n_draws=n_draws)


def recovery_truth(spec: ModelSpec) -> Parameters:
    p = Parameters.zeros(spec, u1=1.2)
    p.beta_fixed = np.array([0.2, 0.5, -0.4, 0.3])
    p.beta_random_mean = np.array([0.5, -0.3])
    p.eta[0, 0] = 0.4
    chol = np.array([[1.0, 0.0], [0.6, 0.8]])
    p.cholesky = chol if spec.correlated else np.diag(np.diag(chol))
    return p


def recovery_dataset(n: int, seed: int, spec: ModelSpec | None = None,
                     params: Parameters | None = None,
                     random_sd: float = 1.0) -> tuple[pd.DataFrame, Parameters]:
    rng = np.random.default_rng(seed)
    spec = spec or recovery_spec()
    params = params or recovery_truth(spec)
    frame = probit_frame(n, rng, random_sd=random_sd)
    frame[spec.response] = simulate_ordered_probit(frame, spec, params, rng)
    return frame, params

