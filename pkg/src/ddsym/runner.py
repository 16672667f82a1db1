"""Run an ExperimentConfig: one simulation per sweep point, one writer for all files."""

from __future__ import annotations

import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ddsym.aht import average_hamiltonian
from ddsym.config import ConfigError, ExperimentConfig, from_dict
from ddsym.model import build_hamiltonian
from ddsym.sim import (
    DegenerateFitError,
    NotDecayedError,
    decay_time,
    echo_times,
    evolve,
    fidelity_series,
    precession_angle,
)

log = logging.getLogger(__name__)


def _decay(traj, channel):
    try:
        return {"status": "ok", "value": decay_time(traj, channel)}
    except NotDecayedError as exc:
        return {"status": "not-decayed", "last_value": exc.last_value}


def run_point(raw: dict, overrides: dict, index: int) -> dict:
    """Simulate one sweep point; returns metrics plus the text of its output files."""
    cfg = from_dict(raw)
    warnings_: list[str] = []
    seq = cfg.sequence()
    parts = build_hamiltonian(cfg.hamiltonian)
    eps = cfg.hamiltonian.epsilon
    n_cycles = cfg.cycles_for(seq)
    traj = evolve(seq, parts, eps, n_cycles=n_cycles, sample_points=cfg.sample_points)

    record: dict = {
        "index": index,
        "overrides": overrides,
        "label": seq.label,
        "cycle_time": seq.cycle_time,
        "pulses_per_cycle": seq.n_pulses,
        "n_cycles": n_cycles,
    }
    if "decay_time" in cfg.metrics:
        record["decay_time"] = _decay(traj, "my")
    if "decay_time_total" in cfg.metrics:
        record["decay_time_total"] = _decay(traj, "total")
    if "precession" in cfg.metrics:
        try:
            record["precession_per_pulse"] = {"status": "ok", "value": precession_angle(traj)}
        except DegenerateFitError as exc:
            record["precession_per_pulse"] = {"status": "degenerate-fit", "message": str(exc)}
            warnings_.append(f"point {index}: {exc}")
    if "fidelity" in cfg.metrics:
        series = fidelity_series(seq, parts, eps, n_cycles)
        record["fidelity"] = {
            "times": [c * seq.cycle_time for c in range(n_cycles + 1)],
            "values": series.tolist(),
        }
    if "final" in cfg.metrics:
        record["final"] = {"mx": float(traj.mx[-1]), "my": float(traj.my[-1]), "mz": float(traj.mz[-1])}
    if "echoes" in cfg.metrics:
        echoes = echo_times(traj)
        record["echoes"] = {
            "times": echoes.tolist(),
            "spacing": float(np.median(np.diff(echoes))) if len(echoes) > 1 else None,
        }

    aht_text = None
    if cfg.aht_report:
        try:
            ah = average_hamiltonian(seq, parts, eps, max_order=cfg.aht_order)
            aht_text = f"# {seq.label}\n" + ah.report()
        except ValueError as exc:
            warnings_.append(f"point {index}: average Hamiltonian failed: {exc}")
            aht_text = f"# {seq.label}\nerror: {exc}\n"

    buf = io.StringIO()
    buf.write("time,mx,my,mz\n")
    for row in zip(traj.times, traj.mx, traj.my, traj.mz):
        buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
    record["warnings"] = warnings_
    return {"record": record, "csv": buf.getvalue(), "aht": aht_text}


def _run_point_safe(args):
    raw, overrides, index = args
    try:
        return run_point(raw, overrides, index)
    except (ValueError, np.linalg.LinAlgError) as exc:
        msg = f"point {index}: {type(exc).__name__}: {exc}"
        return {"record": {"index": index, "overrides": overrides, "error": msg, "warnings": [msg]},
                "csv": None, "aht": None}


def run_config(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """Simulate every sweep point and write CSV, metrics JSON and AHT reports."""
    out = Path(out_dir if out_dir is not None else cfg.outputs)
    points = cfg.points()
    for overrides, point in points:
        try:
            point.sequence()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"sweep point {overrides}: invalid sequence: {exc}") from exc
    jobs = [(point.raw, overrides, i) for i, (overrides, point) in enumerate(points)]
    jobs = [(dict(raw, sweep=[]), ov, i) for raw, ov, i in jobs]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_point_safe, jobs))
    else:
        results = [_run_point_safe(job) for job in jobs]

    out.mkdir(parents=True, exist_ok=True)
    records = []
    for res in results:
        rec = res["record"]
        i = rec["index"]
        if res["csv"] is not None:
            (out / f"point_{i:03d}_trajectory.csv").write_text(res["csv"], encoding="utf-8")
        if res["aht"] is not None:
            (out / f"point_{i:03d}_aht.txt").write_text(res["aht"], encoding="utf-8")
        for w in rec.get("warnings", []):
            log.warning(w)
        records.append(rec)
    metrics = {"name": cfg.name, "points": records}
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return metrics
