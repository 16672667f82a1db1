"""Command-line front end.

    ddsym simulate --config FILE [--out DIR]
    ddsym aht --config FILE [--order N]
    ddsym reproduce FIGURE [--out DIR]
    ddsym parse --dsl TEXT
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import yaml

from ddsym.aht import average_hamiltonian
from ddsym.config import ConfigError, ExperimentConfig, from_dict, load_config
from ddsym.dsl import format_sequence, parse_sequence
from ddsym.model import build_hamiltonian
from ddsym.runner import run_config

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig7", "fig8", "fig9")

log = logging.getLogger("ddsym")


def load_preset(figure: str) -> ExperimentConfig:
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; choose from {', '.join(FIGURES)}")
    text = resources.files("ddsym.presets").joinpath(f"{figure}.yaml").read_text(encoding="utf-8")
    return from_dict(yaml.safe_load(text))


def _value(entry):
    if isinstance(entry, dict) and entry.get("status") == "ok":
        return entry["value"]
    return None


def _key(rec: dict) -> str:
    return ", ".join(f"{k.split('.')[-1]}={v}" for k, v in rec["overrides"].items())


def summarize(figure: str, metrics: dict) -> dict:
    """Figure-level comparison distilled from the per-point metrics."""
    points = [p for p in metrics["points"] if "error" not in p]
    by = {_key(p): p for p in points}
    out: dict = {"figure": figure}
    if figure == "fig2":
        spacing = {("S" if p["overrides"]["sequence.params.symmetric"] else "A"): p["echoes"]["spacing"]
                   for p in points}
        out["echo_spacing"] = spacing
        if spacing.get("S") and spacing.get("A"):
            out["spacing_ratio_S_over_A"] = spacing["S"] / spacing["A"]
    elif figure == "fig3":
        rows = {}
        for p in points:
            tau = p["overrides"]["sequence.params.tau"]
            tag = "S" if p["overrides"]["sequence.params.symmetric"] else "A"
            rows.setdefault(2 * tau, {})[tag] = p["final"]["my"]
        out["echo_vs_cycle_time"] = {str(k): v for k, v in sorted(rows.items())}
        out["symmetric_not_worse"] = all(r["S"] >= r["A"] for r in rows.values())
    elif figure in ("fig4", "fig5", "fig8"):
        field = "decay_time_total" if figure == "fig8" else "decay_time"
        out[field] = {k: (_value(p.get(field)) if _value(p.get(field)) is not None
                          else p.get(field, {}).get("status")) for k, p in by.items()}
    elif figure == "fig7":
        out["precession_per_pulse"] = {k: _value(p.get("precession_per_pulse")) for k, p in by.items()}
    elif figure == "fig9":
        series = {("S" if p["overrides"]["sequence.params.symmetric"] else "A"): p["fidelity"] for p in points}
        out["fidelity"] = series
        if "S" in series and "A" in series:
            out["symmetric_not_worse"] = all(
                s >= a for s, a in zip(series["S"]["values"], series["A"]["values"])
            )
    return out


def reproduce(figure: str, out_dir: str | Path | None = None) -> dict:
    cfg = load_preset(figure)
    out = Path(out_dir) if out_dir is not None else Path(cfg.outputs)
    metrics = run_config(cfg, out)
    summary = summarize(figure, metrics)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    metrics = run_config(cfg, args.out)
    n_warn = sum(len(p.get("warnings", [])) for p in metrics["points"])
    print(f"{len(metrics['points'])} point(s) written to {args.out or cfg.outputs}"
          + (f" with {n_warn} warning(s)" if n_warn else ""))
    return 0


def _cmd_aht(args) -> int:
    cfg = load_config(args.config)
    for overrides, point in cfg.points():
        seq = point.sequence()
        parts = build_hamiltonian(point.hamiltonian)
        if overrides:
            print(f"## {overrides}")
        try:
            ah = average_hamiltonian(seq, parts, point.hamiltonian.epsilon, max_order=args.order)
        except ValueError as exc:
            print(f"# {seq.label}\nerror: {exc}")
            continue
        print(f"# {seq.label}")
        print(ah.report(), end="")
    return 0


def _cmd_reproduce(args) -> int:
    summary = reproduce(args.figure, args.out)
    print(json.dumps({k: v for k, v in summary.items() if k != "fidelity"}, indent=2, sort_keys=True))
    return 0


def _cmd_parse(args) -> int:
    print(format_sequence(parse_sequence(args.dsl)))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddsym", description=__doc__.splitlines()[0] if __doc__ else None)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a config file (all sweep points)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("aht", help="print the average-Hamiltonian report of a config's sequence")
    p.add_argument("--config", required=True)
    p.add_argument("--order", type=int, default=2, choices=(0, 1, 2))
    p.set_defaults(func=_cmd_aht)

    p = sub.add_parser("reproduce", help="run a bundled figure preset")
    p.add_argument("figure")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_reproduce)

    p = sub.add_parser("parse", help="print the canonical form of a sequence")
    p.add_argument("--dsl", required=True)
    p.set_defaults(func=_cmd_parse)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        if args.command == "parse":
            print(f"error: {exc}", file=sys.stderr)
            return 2
        raise


if __name__ == "__main__":
    sys.exit(main())
