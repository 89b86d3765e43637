"""Batch stages: simulate -> reconstruct -> (unwrap) -> analyze, plus timing bench.

All stages communicate through files under ``cfg.out``. Paths recorded in CSVs
and sidecars are relative to ``cfg.out`` so that two runs with the same seed and
configuration produce byte-identical tables wherever they are written.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import features as feat
from . import io
from .config import PipelineConfig
from .field import phase_of, wrap
from .fourier import carrier_from_reference, default_filter, detect_carrier, ft_reconstruct
from .holosim import (ReferenceWave, draw_population, object_field, phantom_metadata,
                      phantom_phase, record_hologram, reference_field)
from .sparse import ReconstructionError, reconstruct_sparse
from .unwrap import unwrap2d

log = logging.getLogger(__name__)

HOLOGRAM_DIR = "holograms"
TRUTH_DIR = "truth"
RECON_DIR = "recon"
UNWRAP_DIR = "unwrapped"
ANALYSIS_DIR = "analysis"
MANIFEST = "manifest.csv"
SUMMARY = "summary.txt"
EDGE_BAND = 3.0  # pixels either side of the generating rim

MANIFEST_FIELDS = ["grain_id", "label", "profile", "target_mean", "peak_phase", "radius",
                   "center_x", "center_y", "rim_softness", "noise_seed", "hologram", "truth"]


@dataclass
class StageResult:
    stage: str
    outputs: list = field(default_factory=list)
    failures: list = field(default_factory=list)  # (file, message)
    timings: list = field(default_factory=list)  # (file, seconds)
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def messages(self):
        return [f"stage {self.stage}: {name}: {msg}" for name, msg in self.failures]


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _rel(path: Path, root: Path) -> str:
    try:
        return Path(os.path.relpath(path, root)).as_posix()
    except ValueError:
        return Path(path).as_posix()


def _pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _prepare_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory {path} is not writable")
    return path


# -- simulate ------------------------------------------------------------------

def _simulate_one(job):
    grain, cfg = job
    out = Path(cfg.out)
    truth = phantom_phase(grain.phantom, cfg.grid)
    obj = object_field(truth, grain.phantom.amplitude_inside, grain.phantom.support(cfg.grid))
    meta = {"grain_id": grain.grain_id, "label": grain.label, "target_mean": grain.target_mean,
            **phantom_metadata(grain.phantom, cfg.grid), "config_hash": cfg.digest()}
    holo = record_hologram(obj, cfg.reference, cfg.sensor, grain.noise_seed, meta)
    holo_path = out / HOLOGRAM_DIR / (grain.grain_id + io.hologram_suffix(holo))
    truth_path = out / TRUTH_DIR / f"{grain.grain_id}.phase"
    io.write_hologram(holo_path, holo)
    io.write_phase_map(truth_path, truth, {"grain_id": grain.grain_id, "config_hash": cfg.digest()})
    p = grain.phantom
    cx, cy = p.centered(cfg.grid)
    return {"grain_id": grain.grain_id, "label": grain.label, "profile": p.profile.value,
            "target_mean": _num(grain.target_mean), "peak_phase": _num(p.peak_phase),
            "radius": _num(p.radius), "center_x": _num(cx), "center_y": _num(cy),
            "rim_softness": _num(p.rim_softness), "noise_seed": str(grain.noise_seed),
            "hologram": _rel(holo_path, out), "truth": _rel(truth_path, out)}


def simulate(cfg: PipelineConfig) -> StageResult:
    """Render the configured population into hologram + truth files and a manifest."""
    res = StageResult("simulate")
    out = Path(cfg.out)
    _prepare_dir(out / HOLOGRAM_DIR)
    _prepare_dir(out / TRUTH_DIR)
    grains = draw_population(cfg.population, cfg.grid, cfg.seed)
    rows = _pmap(_simulate_one, [(g, cfg) for g in grains], cfg.workers)
    with open(out / MANIFEST, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS)
        w.writeheader()
        w.writerows(rows)
    res.outputs = [out / r["hologram"] for r in rows]
    return res


def read_manifest(path) -> dict:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["_root"] = path.parent
    return {r["grain_id"]: r for r in rows}


# -- reconstruct ---------------------------------------------------------------

def _reconstruct_one(job):
    path, cfg, method = job
    path = Path(path)
    out = Path(cfg.out)
    stem = path.stem
    t0 = time.perf_counter()
    try:
        holo = io.read_hologram(path)
        if cfg.carrier == "detect":
            center = detect_carrier(holo)
            ref = ReferenceWave((center.fx, center.fy), holo.reference.amplitude, 0.0)
            holo = replace(holo, reference=ref)
        else:
            center = carrier_from_reference(holo)
        filt = default_filter(center, cfg.filter_fraction, cfg.filter_shape)
        O = ft_reconstruct(holo, filt)
        trace = None
        if method == "sparse":
            R = reference_field(holo.reference, holo.grid)
            try:
                O, trace = reconstruct_sparse(holo, R, cfg.recon, O)
            except ReconstructionError as exc:
                if exc.trace is not None:
                    exc.trace.write_csv(out / RECON_DIR / f"{stem}_trace.csv")
                raise
        meta = {"grain_id": holo.metadata.get("grain_id", stem), "method": method,
                "filter_shape": filt.shape, "filter_radius": filt.radius,
                "carrier_fx": center.fx, "carrier_fy": center.fy, "carrier_source": cfg.carrier,
                "source": _rel(path, out), "config_hash": cfg.digest()}
        if cfg.recon.roi is not None and method == "sparse":
            meta["roi"] = ",".join(str(v) for v in cfg.recon.roi)
        if trace is not None:
            meta.update({"iterations": len(trace), "stop_reason": trace.stop_reason})
            trace.write_csv(out / RECON_DIR / f"{stem}_trace.csv")
        io.write_complex_field(out / RECON_DIR / f"{stem}.cfield", O, meta)
        io.write_phase_map(out / RECON_DIR / f"{stem}.phase", phase_of(O), meta)
        return (str(path), None, time.perf_counter() - t0)
    except Exception as exc:  # batch policy: record and continue
        return (str(path), f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)


def _inputs(paths, default_dir: Path, suffixes):
    if paths:
        found = []
        for p in map(Path, paths):
            if p.is_dir():
                found.extend(sorted(q for q in p.iterdir() if q.suffix in suffixes))
            else:
                found.append(p)
        return found
    if not default_dir.is_dir():
        return []
    return sorted(q for q in default_dir.iterdir() if q.suffix in suffixes)


def reconstruct(cfg: PipelineConfig, inputs=None, method: str | None = None) -> StageResult:
    method = method or cfg.method
    res = StageResult("reconstruct", info={"method": method})
    out = Path(cfg.out)
    _prepare_dir(out / RECON_DIR)
    files = _inputs(inputs, out / HOLOGRAM_DIR, {".pgm", ".raw"})
    if not files:
        res.failures.append(("-", "no hologram inputs found"))
        return res
    for path, err, secs in _pmap(_reconstruct_one, [(f, cfg, method) for f in files], cfg.workers):
        res.timings.append((path, secs))
        if err:
            log.error("reconstruct %s: %s", path, err)
            res.failures.append((Path(path).name, err))
        else:
            res.outputs.append(out / RECON_DIR / f"{Path(path).stem}.phase")
    return res


# -- unwrap --------------------------------------------------------------------

def _unwrap_one(job):
    path, cfg = job
    out = Path(cfg.out)
    try:
        pm, hdr = io.read_phase_map(path)
        un, rep = unwrap2d(pm, cfg.unwrap_frame)
        meta = {k: v for k, v in hdr.items() if k not in io.GRID_KEYS + ("wrapped",)}
        meta["residual_rms"] = rep.residual_rms
        target = out / UNWRAP_DIR / Path(path).name
        io.write_phase_map(target, un, meta)
        return (str(path), None)
    except Exception as exc:
        return (str(path), f"{type(exc).__name__}: {exc}")


def unwrap(cfg: PipelineConfig, inputs=None) -> StageResult:
    res = StageResult("unwrap")
    out = Path(cfg.out)
    _prepare_dir(out / UNWRAP_DIR)
    files = _inputs(inputs, out / RECON_DIR, {".phase"})
    if not files:
        res.failures.append(("-", "no phase inputs found"))
        return res
    for path, err in _pmap(_unwrap_one, [(f, cfg) for f in files], cfg.workers):
        if err:
            res.failures.append((Path(path).name, err))
        else:
            res.outputs.append(out / UNWRAP_DIR / Path(path).name)
    return res


# -- analyze -------------------------------------------------------------------

def _error_regions(truth, row):
    """Disc interior and rim band of the generating phantom, as boolean masks."""
    x, y = truth.grid.coordinates()
    r = np.hypot(x - float(row["center_x"]), y - float(row["center_y"]))
    radius = float(row["radius"])
    disc = r <= radius
    band = np.abs(r - radius) <= EDGE_BAND
    return disc, band


def _analyze_one(job):
    path, cfg, truth_row = job
    path = Path(path)
    out = Path(cfg.out)
    rec = {"file": _rel(path, out), "grain_id": path.stem, "error": ""}
    try:
        pm, hdr = io.read_phase_map(path)
        rec["grain_id"] = hdr.get("grain_id", path.stem)
        wrapped_vals = None
        if pm.wrapped:
            wrapped_vals = pm.values
            pm, rep = unwrap2d(pm, cfg.unwrap_frame)
            rec["residual_rms"] = rep.residual_rms
        else:
            rec["residual_rms"] = float(hdr.get("residual_rms", "nan"))
            wrapped_vals = wrap(pm.values)
        pm = feat.flatten_background(pm, cfg.unwrap_frame)
        try:
            level = cfg.level if cfg.level == "auto" else float(cfg.level)
            fr = feat.extract_features(pm, rec["grain_id"], cfg.threshold, level, rec["file"])
            rec["features"] = fr
        except feat.NoGrainFound as exc:
            rec["features"] = None
            rec["error"] = str(exc)
        if truth_row is not None and truth_row.get("truth"):
            truth, _ = io.read_phase_map(Path(truth_row["_root"]) / truth_row["truth"])
            if truth.grid.shape == pm.grid.shape:
                disc, band = _error_regions(truth, truth_row)
                interior = pm.values - truth.values
                rec["interior_rms"] = float(np.sqrt(np.mean(interior[disc] ** 2)))
                edge = wrap(wrapped_vals - truth.values)
                rec["edge_rms"] = float(np.sqrt(np.mean(edge[band] ** 2)))
    except Exception as exc:
        rec["features"] = None
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["failed"] = True
    return rec


FEATURE_FIELDS = ["grain_id", "file", "area_px", "area_um2", "perimeter_um", "mean_phase",
                  "max_phase", "optical_volume", "label", "unwrap_residual_rms"]


def analyze(cfg: PipelineConfig, inputs=None, manifest=None) -> StageResult:
    """Features, class statistics, Welch test and histograms for a set of phase maps."""
    res = StageResult("analyze")
    out = Path(cfg.out)
    adir = _prepare_dir(out / ANALYSIS_DIR)
    default_dir = out / (UNWRAP_DIR if "unwrap" in cfg.stages and (out / UNWRAP_DIR).is_dir() else RECON_DIR)
    files = _inputs(inputs, default_dir, {".phase"})
    if manifest is None and (out / MANIFEST).exists() and not inputs:
        manifest = out / MANIFEST
    truth_rows = read_manifest(manifest) if manifest else {}

    jobs = []
    for f in files:
        gid = f.stem
        try:
            gid = io.read_header(f).get("grain_id", gid)
        except io.FormatError:
            pass
        jobs.append((f, cfg, truth_rows.get(gid)))
    recs = _pmap(_analyze_one, jobs, cfg.workers)
    recs.sort(key=lambda r: r["grain_id"])

    records = []
    with open(adir / "features.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FEATURE_FIELDS)
        for r in recs:
            if r.get("failed"):
                res.failures.append((r["file"], r["error"]))
            fr = r["features"]
            resid = _num(r.get("residual_rms", float("nan")))
            if fr is None:
                w.writerow([r["grain_id"], r["file"], 0, "nan", "nan", "nan", "nan", "nan", "unknown", resid])
                continue
            records.append(fr)
            w.writerow([fr.grain_id, fr.file, fr.area_px, _num(fr.area_um2), _num(fr.perimeter_um),
                        _num(fr.mean_phase), _num(fr.max_phase), _num(fr.optical_volume), fr.label, resid])

    # class grouping: truth labels when a manifest is present, else predicted labels
    if truth_rows:
        group = [truth_rows[fr.grain_id]["label"] if fr.grain_id in truth_rows else "unknown" for fr in records]
    else:
        group = [fr.label for fr in records]
    stats = {}
    groups = {}
    for fr, g in zip(records, group):
        groups.setdefault(g, []).append(fr.mean_phase)
    for g, vals in sorted(groups.items()):
        if g == "unknown":
            continue
        try:
            stats[g] = feat.class_stats(g, vals)
        except feat.StatsError as exc:
            log.warning("%s", exc)

    confusion = None
    accuracy = None
    if truth_rows:
        predicted = {r["grain_id"]: (r["features"].label if r["features"] else "unknown") for r in recs}
        confusion = {}
        hits = 0
        for gid, row in sorted(truth_rows.items()):
            pred = predicted.get(gid, "unknown")
            confusion[(row["label"], pred)] = confusion.get((row["label"], pred), 0) + 1
            hits += pred == row["label"]
        accuracy = hits / len(truth_rows) if truth_rows else float("nan")

    with open(adir / "stats.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "n", "mean", "std"])
        for s in stats.values():
            w.writerow([s.label, s.n, _num(s.mean), _num(s.std)])
        if confusion is not None:
            w.writerow([])
            w.writerow(["truth", "predicted", "count"])
            for truth_label in ("nonviable", "viable"):
                for pred in ("nonviable", "viable", "unknown"):
                    w.writerow([truth_label, pred, confusion.get((truth_label, pred), 0)])
            w.writerow(["accuracy", _num(accuracy), ""])

    ttest = None
    with open(adir / "ttest.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "dof", "p"])
        if "nonviable" in stats and "viable" in stats:
            try:
                ttest = feat.welch_t(stats["nonviable"], stats["viable"])
                w.writerow([_num(ttest.t), _num(ttest.dof), _num(ttest.p)])
            except feat.StatsError as exc:
                log.warning("t-test skipped: %s", exc)

    with open(adir / "histogram.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "density", "class"])
        values = [fr.mean_phase for fr in records]
        if values:
            edges = feat.histogram_edges(values, cfg.bin_width)
            classes = [("all", values)] + [(g, v) for g, v in sorted(groups.items()) if g != "unknown"]
            for name, vals in classes:
                h = feat.histogram(vals, cfg.bin_width, edges)
                for lo, hi, d in h.rows():
                    w.writerow([_num(lo), _num(hi), _num(d), name])

    errs = [r for r in recs if "edge_rms" in r]
    if errs:
        with open(adir / "errors.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["grain_id", "interior_rms", "edge_rms"])
            for r in errs:
                w.writerow([r["grain_id"], _num(r["interior_rms"]), _num(r["edge_rms"])])

    res.outputs = [adir / n for n in ("features.csv", "stats.csv", "ttest.csv", "histogram.csv")]
    res.info = {
        "n_files": len(recs),
        "n_measured": len(records),
        "stats": stats,
        "ttest": ttest,
        "accuracy": accuracy,
        "edge_rms": float(np.mean([r["edge_rms"] for r in errs])) if errs else None,
        "interior_rms": float(np.mean([r["interior_rms"] for r in errs])) if errs else None,
    }
    return res


# -- pipeline & bench ----------------------------------------------------------

def write_summary(path, cfg: PipelineConfig, results: list[StageResult]):
    lines = [f"config_hash: {cfg.digest()}", f"seed: {cfg.seed}", f"method: {cfg.method}",
             f"stages: {', '.join(cfg.stages)}"]
    ana = next((r for r in results if r.stage == "analyze"), None)
    if ana is not None:
        info = ana.info
        lines.append(f"corpus_size: {info['n_files']}")
        lines.append(f"measured: {info['n_measured']}")
        for s in info["stats"].values():
            lines.append(f"class {s.label}: n={s.n} mean={s.mean:.4f} std={s.std:.4f} sem={s.sem:.4f}")
        if info["accuracy"] is not None:
            lines.append(f"accuracy: {info['accuracy']:.4f}")
        if info["ttest"] is not None:
            t = info["ttest"]
            lines.append(f"welch_t: {t.t:.6g}")
            lines.append(f"welch_dof: {t.dof:.6g}")
            lines.append(f"welch_p: {t.p:.6g}")
        if info["edge_rms"] is not None:
            lines.append(f"edge_rms: {info['edge_rms']:.6g}")
            lines.append(f"interior_rms: {info['interior_rms']:.6g}")
    failures = [m for r in results for m in r.messages()]
    lines.append(f"failures: {len(failures)}")
    lines.extend(failures)
    Path(path).write_text("\n".join(lines) + "\n")


def run_pipeline(cfg: PipelineConfig) -> list[StageResult]:
    out = Path(cfg.out)
    _prepare_dir(out)
    results = []
    for stage in cfg.stages:
        t0 = time.perf_counter()
        if stage == "simulate":
            r = simulate(cfg)
        elif stage == "reconstruct":
            r = reconstruct(cfg)
        elif stage == "unwrap":
            r = unwrap(cfg)
        else:
            inputs = [out / UNWRAP_DIR] if "unwrap" in cfg.stages else [out / RECON_DIR]
            r = analyze(cfg, inputs, out / MANIFEST if (out / MANIFEST).exists() else None)
        log.info("stage %s finished in %.1f s (%d failures)", stage, time.perf_counter() - t0, len(r.failures))
        results.append(r)
    write_summary(out / SUMMARY, cfg, results)
    return results


def run_bench(cfg: PipelineConfig) -> Path:
    """Time simulation, per-hologram reconstruction per method, and analysis."""
    out = Path(cfg.out)
    _prepare_dir(out)
    rows = []
    t0 = time.perf_counter()
    sim = simulate(cfg)
    rows.append(("stage", "simulate", "", time.perf_counter() - t0))
    for method in cfg.bench_methods:
        mcfg = replace(cfg, out=out / f"bench_{method}", method=method)
        _prepare_dir(Path(mcfg.out))
        t0 = time.perf_counter()
        rec = reconstruct(mcfg, [out / HOLOGRAM_DIR], method)
        rows.append(("stage", "reconstruct", method, time.perf_counter() - t0))
        for path, secs in rec.timings:
            rows.append(("file", Path(path).name, method, secs))
        secs = [s for _, s in rec.timings]
        rows.append(("aggregate", "mean_per_file", method, float(np.mean(secs)) if secs else float("nan")))
        t0 = time.perf_counter()
        analyze(mcfg, [Path(mcfg.out) / RECON_DIR], out / MANIFEST)
        rows.append(("stage", "analyze", method, time.perf_counter() - t0))
    path = out / "bench.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scope", "name", "method", "seconds"])
        for scope, name, method, secs in rows:
            w.writerow([scope, name, method, f"{secs:.6f}"])
    return path
