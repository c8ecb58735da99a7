"""Command line entry point: ``crashsev <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .config import GridConfig, PipelineConfig
from .ingest import CrashRecord, parse_crashes, to_frame, write_crashes
from .probit.estimate import EstimationResult, estimate
from .probit.model import SpecError
from .raster import GridSpec, cells_geojson, locate, queen_weights, rasterize, write_geojson
from .report import fit_table, transfer_table
from .spatial import (
    DegenerateInputError,
    HotspotLabel,
    WeightsError,
    classify_hotspots,
    extract_districts,
    getis_ord_gstar,
    moran,
)
from .stability import LrTestResult, lr_pooled_test, pooled_df, transfer_matrix, write_transfer_csv
from .synth import synthesize

log = logging.getLogger("crashsev")

POOLED = "pooled"


class PipelineError(RuntimeError):
    pass


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _stamp(payload: dict, args, started: float) -> dict:
    if getattr(args, "stamp", False):
        payload["created"] = datetime.now(timezone.utc).isoformat()
        payload["wall_time_s"] = time.perf_counter() - started
    return payload


def _load_records(cfg: PipelineConfig) -> list[CrashRecord]:
    path = Path(cfg.input)
    if not path.exists():
        raise PipelineError(f"input file not found: {path}")
    with open(path, "rb") as fh:
        try:
            records, report = parse_crashes(fh, cfg.columns, on_error=cfg.on_error)
        except ValueError as exc:
            raise PipelineError(f"{path}: {exc}") from None
    for err in report.errors:
        log.warning("%s: %s", path, err)
    return records


def _grid(cfg: PipelineConfig, records) -> GridSpec | None:
    g = cfg.grid
    given = (g.origin_lat, g.origin_lon, g.n_rows, g.n_cols)
    if all(v is not None for v in given):
        return GridSpec(g.origin_lat, g.origin_lon, g.cell_size_km, g.n_rows, g.n_cols)
    if any(v is not None for v in given):
        raise PipelineError("grid needs all of origin_lat, origin_lon, n_rows, n_cols, or none")
    return GridSpec.covering(records, g.cell_size_km) if records else None


def _grid_dict(grid: GridSpec | None) -> dict | None:
    if grid is None:
        return None
    return {"origin_lat": grid.origin_lat, "origin_lon": grid.origin_lon,
            "cell_size_km": grid.cell_size_km, "n_rows": grid.n_rows, "n_cols": grid.n_cols}


def cmd_synth(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    s = cfg.synth
    res = synthesize(n=s.n, seed=cfg.seed, n_clusters=s.n_clusters, cluster_share=s.cluster_share,
                     heterogeneous=s.heterogeneous, n_rows=s.n_rows, n_cols=s.n_cols,
                     spec=cfg.model_spec("default"))
    with open(out / "crashes.csv", "w", encoding="utf-8", newline="") as fh:
        write_crashes(res.records, fh)
    _write_json(out / "truth.json", res.truth)
    # ready-to-run config pinned to the planted grid
    g = res.layout.grid
    follow = dataclasses.replace(
        cfg, input="crashes.csv", out_dir=".",
        grid=GridConfig(g.cell_size_km, g.origin_lat, g.origin_lon, g.n_rows, g.n_cols))
    follow.dump(out / "synth_config.json")
    log.info("wrote %d synthetic crashes to %s", len(res.records), out / "crashes.csv")
    return 0


def cmd_rasterize(cfg: PipelineConfig, args) -> int:
    started = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = _load_records(cfg)
    grid = _grid(cfg, records)
    cells = rasterize(records, grid) if grid else []
    n_out = int((locate(records, grid)[:, 0] < 0).sum()) if grid else 0
    with open(out / "cells.geojson", "w", encoding="utf-8") as fh:
        write_geojson(cells_geojson(cells, grid) if grid else {"type": "FeatureCollection", "features": []}, fh)
    summary = {
        "schema": "crashsev.raster/1",
        "grid": _grid_dict(grid),
        "n_records": len(records),
        "n_cells": len(cells),
        "total_crashes": sum(c.crash_count for c in cells),
        "total_attribute": float(sum(c.attribute for c in cells)),
        "out_of_extent": n_out,
    }
    _write_json(out / "raster_summary.json", _stamp(summary, args, started))
    return 0


def cmd_analyze(cfg: PipelineConfig, args) -> int:
    started = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = _load_records(cfg)
    grid = _grid(cfg, records)
    cells = rasterize(records, grid) if grid else []
    w = queen_weights(cells)
    x = np.array([c.attribute for c in cells])
    try:
        m = moran(x, w)
    except (DegenerateInputError, WeightsError, ValueError) as exc:
        raise PipelineError(f"Moran's I failed: {exc}") from None
    _write_json(out / "moran.json", _stamp({"schema": "crashsev.moran/1", **m.to_dict(),
                                           "n": len(x), "significant": m.significant}, args, started))

    g = getis_ord_gstar(x, w)
    labels = classify_hotspots(g)
    with open(out / "hotspots.geojson", "w", encoding="utf-8") as fh:
        write_geojson(cells_geojson(cells, grid, {"z": g, "category": [lab.display for lab in labels]}), fh)

    h = cfg.hotspots
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        districts = extract_districts(cells, labels, records, grid, k=h.k, min_cells=h.min_cells,
                                      level=HotspotLabel.parse(h.level))
    for wmsg in caught:
        log.warning("%s", wmsg.message)
    for old in out.glob("district_*.csv"):
        old.unlink()
    with open(out / "districts.csv", "w", encoding="utf-8", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["district_id", "row", "col"])
        for d in districts:
            for r, c in sorted(d.member_cells):
                wr.writerow([d.district_id, r, c])
    for d in districts:
        with open(out / f"district_{d.district_id}.csv", "w", encoding="utf-8", newline="") as fh:
            write_crashes(d.records, fh)
    summary = {
        "schema": "crashsev.analyze/1",
        "n_cells": len(cells),
        "hotspot_counts": {lab.display: int(sum(1 for v in labels if v == lab)) for lab in HotspotLabel},
        "districts": [{"district_id": d.district_id, "n_cells": len(d.member_cells),
                       "n_crashes": d.crash_count} for d in districts],
    }
    _write_json(out / "analyze_summary.json", summary)
    return 0


def _district_ids(out: Path) -> list[str]:
    ids = sorted(int(p.stem.split("_", 1)[1]) for p in out.glob("district_*.csv"))
    return [str(i) for i in ids]


def _district_frame(out: Path, district: str) -> pd.DataFrame:
    if district == POOLED:
        ids = _district_ids(out)
        if not ids:
            raise PipelineError("no district datasets found; run 'analyze' first")
        return pd.concat([_district_frame(out, i) for i in ids])
    path = out / f"district_{district}.csv"
    if not path.exists():
        raise PipelineError(f"district {district} dataset not found: {path}")
    with open(path, "rb") as fh:
        records, _ = parse_crashes(fh)
    return to_frame(records)


def _fit_one(cfg: PipelineConfig, args, out: Path, district: str) -> bool:
    started = time.perf_counter()
    frame = _district_frame(out, district)
    spec = cfg.model_spec(district)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = estimate(frame, spec, max_iter=cfg.estimation.max_iter,
                              discrete_effects=cfg.estimation.discrete_effects)
        except SpecError as exc:
            raise PipelineError(f"district {district}: {exc}") from None
    for wmsg in caught:
        log.warning("district %s: %s", district, wmsg.message)
    payload = {"schema": "crashsev.fit/1", "district": district, "version": __version__, **result.to_dict()}
    _write_json(out / f"fit_{district}.json", _stamp(payload, args, started))
    with open(out / f"fit_{district}.txt", "w", encoding="utf-8") as fh:
        fh.write(fit_table(result, f"District {district}"))
    if not result.converged:
        log.error("district %s: estimation did not converge; partial report written", district)
    return result.converged


def cmd_fit(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    target = getattr(args, "district", None) or "all"
    if target == "all":
        ids = _district_ids(out)
        if not ids:
            raise PipelineError("no district datasets found; run 'analyze' first")
        targets = ids + ([POOLED] if len(ids) > 1 else [])
    else:
        targets = [target]
    ok = True
    for d in targets:
        ok &= _fit_one(cfg, args, out, d)
    return 0 if ok else 2


def _load_fit(out: Path, district: str) -> EstimationResult:
    path = out / f"fit_{district}.json"
    if not path.exists():
        raise PipelineError(f"fit for district {district} not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return EstimationResult.from_dict(json.load(fh))


def cmd_lrtests(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    ids = _district_ids(out)
    results = {d: _load_fit(out, d) for d in ids}
    frames = {d: _district_frame(out, d) for d in ids}
    matrix = transfer_matrix(results, frames, level=cfg.lrtests.level) if len(ids) > 1 else {}
    with open(out / "transfer_matrix.csv", "w", encoding="utf-8", newline="") as fh:
        write_transfer_csv(matrix, ids, fh)
    payload = {
        "schema": "crashsev.lrtests/1",
        "districts": ids,
        "pairwise": [{"m1": a, "m2": b, **t.to_dict()} for (a, b), t in matrix.items()],
        "pooled": None,
    }
    if len(ids) < 2:
        payload["notice"] = "fewer than two districts; pooled test skipped"
        log.warning(payload["notice"])
    else:
        full = _load_fit(out, POOLED)
        df = cfg.lrtests.pooled_df
        if df is None:
            df = pooled_df(list(results.values()), full)
        else:
            log.info("pooled test df overridden to %d", df)
        t = lr_pooled_test(full.ll, [results[d].ll for d in ids], df, level=cfg.lrtests.level)
        payload["pooled"] = {"ll_full": full.ll, "ll_districts": [results[d].ll for d in ids], **t.to_dict()}
    _write_json(out / "lrtests.json", payload)
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    out = Path(cfg.out_dir)
    parts = []
    if (out / "moran.json").exists():
        with open(out / "moran.json", encoding="utf-8") as fh:
            m = json.load(fh)
        parts.append("Global Moran's I\n"
                     f"  I = {m['I']:.4g}   E[I] = {m['E']:.4g}   V[I] = {m['V']:.4g}   "
                     f"z = {m['z']:.4g}   p = {m['p']:.4g}\n")
    ids = _district_ids(out)
    for d in ids + [POOLED]:
        path = out / f"fit_{d}.txt"
        if path.exists():
            parts.append(path.read_text(encoding="utf-8"))
    if (out / "lrtests.json").exists():
        with open(out / "lrtests.json", encoding="utf-8") as fh:
            lr = json.load(fh)
        matrix = {(p["m1"], p["m2"]): LrTestResult.from_dict(p) for p in lr["pairwise"]}
        if matrix:
            parts.append("Likelihood ratio tests between districts\n" + transfer_table(matrix, lr["districts"]))
        if lr.get("pooled"):
            p = lr["pooled"]
            parts.append(f"Pooled vs separate: chi2 = {p['chi2']:.4g} with {p['df']} df, "
                         f"confidence {100 * p['confidence']:.2f}%\n")
    if not parts:
        raise PipelineError(f"nothing to report in {out}")
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
    return 0


def cmd_run(cfg: PipelineConfig, args) -> int:
    for step in (cmd_rasterize, cmd_analyze, cmd_fit, cmd_lrtests, cmd_report):
        code = step(cfg, args)
        if code:
            return code
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "rasterize": cmd_rasterize,
    "analyze": cmd_analyze,
    "fit": cmd_fit,
    "lrtests": cmd_lrtests,
    "report": cmd_report,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crashsev", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON pipeline config")
        p.add_argument("--input", help="crash CSV (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="random seed for synth")
        p.add_argument("--district", help="district id, 'pooled' or 'all' (fit only)")
        p.add_argument("--draws", type=int, help="Halton draws per observation for every model")
        p.add_argument("--stamp", action="store_true", help="embed timestamps and wall time in reports")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.input:
        cfg.input = args.input
    if args.out:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    if args.draws is not None:
        cfg.draws = args.draws
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except (PipelineError, ValueError, OSError) as exc:
        print(f"crashsev {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
