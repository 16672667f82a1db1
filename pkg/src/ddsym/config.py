"""Experiment configuration: a nested YAML mapping validated into dataclasses."""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ddsym.dsl import parse_sequence
from ddsym.model import HamiltonianSpec, sample_couplings
from ddsym.seq import PulseSequence, build_named
from ddsym.sim import SAMPLE_MODES

METRICS = ("decay_time", "decay_time_total", "precession", "fidelity", "final", "echoes")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    hamiltonian: HamiltonianSpec
    builder: str | None = None
    params: dict = field(default_factory=dict)
    dsl: str | None = None
    n_cycles: int | None = 1
    total_time: float | None = None
    sample_points: Any = "cycle_boundaries"
    metrics: tuple[str, ...] = ("decay_time", "decay_time_total", "precession")
    sweep: list[tuple[str, list]] = field(default_factory=list)
    outputs: str = "results"
    workers: int = 1
    aht_order: int = 2
    aht_report: bool = True
    name: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def sequence(self) -> PulseSequence:
        if self.dsl is not None:
            return parse_sequence(self.dsl, label=self.name or "dsl")
        return build_named(self.builder, **self.params)

    def cycles_for(self, seq: PulseSequence) -> int:
        if self.total_time is not None:
            return max(1, math.ceil(self.total_time / seq.cycle_time - 1e-9))
        return int(self.n_cycles)

    def points(self) -> list[tuple[dict, ExperimentConfig]]:
        """One (overrides, config) pair per point of the Cartesian sweep."""
        if not self.sweep:
            return [({}, self)]
        paths = [p for p, _ in self.sweep]
        out = []
        for combo in itertools.product(*(v for _, v in self.sweep)):
            data = copy.deepcopy(self.raw)
            data.pop("sweep", None)
            for path, value in zip(paths, combo):
                _set_path(data, path, value)
            out.append((dict(zip(paths, combo)), from_dict(data)))
        return out

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def _set_path(data: dict, path: str, value) -> None:
    keys = path.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node.get(k, {}), dict):
            raise ConfigError(f"sweep path {path!r} crosses a non-mapping at {k!r}")
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def _hamiltonian_from(h: dict) -> HamiltonianSpec:
    h = dict(h)
    couplings = h.pop("couplings", None)
    if couplings is not None:
        if "b" in h or "d" in h:
            raise ConfigError("give either explicit b/d lists or a couplings block, not both")
        K = int(h.get("n_bath", 0))
        b, d = sample_couplings(K, float(couplings["scale_b"]), float(couplings["scale_d"]), int(h.get("seed", 0)))
        h["b"] = b
        h["d"] = d if h.get("bath_model", "none") != "none" else ()
    unknown = set(h) - {"n_bath", "omega_S", "b", "bath_model", "d", "epsilon", "seed"}
    if unknown:
        raise ConfigError(f"unknown hamiltonian keys: {sorted(unknown)}")
    return HamiltonianSpec(**h)


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = {"name", "hamiltonian", "sequence", "n_cycles", "total_time", "sample_points",
             "metrics", "sweep", "outputs", "workers", "aht"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        spec = _hamiltonian_from(data.get("hamiltonian", {}))
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid hamiltonian: {exc}") from exc

    seq = data.get("sequence")
    if not isinstance(seq, dict):
        raise ConfigError("sequence block is required")
    has_builder, has_dsl = "builder" in seq, "dsl" in seq
    if has_builder == has_dsl:
        raise ConfigError("sequence needs exactly one of 'builder' or 'dsl'")

    if data.get("n_cycles") is not None and data.get("total_time") is not None:
        raise ConfigError("give n_cycles or total_time, not both")
    n_cycles = data.get("n_cycles", None if "total_time" in data else 1)
    if n_cycles is not None and (int(n_cycles) != n_cycles or n_cycles < 1):
        raise ConfigError("n_cycles must be a positive integer")
    total_time = data.get("total_time")
    if total_time is not None and not (math.isfinite(total_time) and total_time > 0):
        raise ConfigError("total_time must be positive")

    sample_points = data.get("sample_points", "cycle_boundaries")
    if isinstance(sample_points, dict):
        if set(sample_points) != {"uniform"} or not float(sample_points["uniform"]) > 0:
            raise ConfigError("sample_points mapping must be {uniform: dt > 0}")
    elif sample_points not in SAMPLE_MODES or sample_points == "uniform":
        raise ConfigError(f"unknown sample_points {sample_points!r}")

    metrics = tuple(data.get("metrics", ExperimentConfig.metrics))
    bad = set(metrics) - set(METRICS)
    if bad:
        raise ConfigError(f"unknown metrics {sorted(bad)}; known: {METRICS}")

    sweep = []
    for entry in data.get("sweep") or []:
        if not isinstance(entry, dict) or set(entry) != {"path", "values"}:
            raise ConfigError("each sweep entry needs exactly 'path' and 'values'")
        values = entry["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep values for {entry['path']!r} must be a nonempty list")
        for v in values:
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"sweep value {v} is not finite")
        sweep.append((str(entry["path"]), values))

    aht = data.get("aht", {}) or {}
    workers = int(data.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    cfg = ExperimentConfig(
        hamiltonian=spec,
        builder=seq.get("builder"),
        params=dict(seq.get("params", {})),
        dsl=seq.get("dsl"),
        n_cycles=n_cycles,
        total_time=total_time,
        sample_points=sample_points,
        metrics=metrics,
        sweep=sweep,
        outputs=str(data.get("outputs", "results")),
        workers=workers,
        aht_order=int(aht.get("order", 2)),
        aht_report=bool(aht.get("report", True)),
        name=str(data.get("name", "")),
        raw=copy.deepcopy(data),
    )
    if not sweep:
        try:
            cfg.sequence()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid sequence: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML: {exc}") from exc
    return from_dict(data)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
