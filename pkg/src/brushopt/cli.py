"""Command-line interface: ``brushopt {check,generate,optimize,export}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .generator import generate
from .morphology import is_feasible, minimum_length_scale, parse_brush, run_length_stats

OUTPUT_ROOT_ENV = "BRUSHOPT_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_NOT_ACHIEVED = 2
EXIT_SOLVER_FAILED = 3
EXIT_BAD_INPUT = 4

INCOMPLETE_MARKER = "INCOMPLETE"
FAILED_MARKER = "FAILED"

log = logging.getLogger("brushopt")


def resolve_output(path) -> Path:
    """Relative output paths are placed under ``$BRUSHOPT_OUTPUT_ROOT`` when it is set."""
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def parse_shape(text: str):
    try:
        parts = [int(p) for p in text.lower().replace(",", "x").split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, expected e.g. 64x64") from None
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"bad shape {text!r}, expected e.g. 64x64")
    return tuple(parts)


def _brush_arg(text):
    try:
        return parse_brush(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


# -- check ---------------------------------------------------------------------------


def cmd_check(args) -> int:
    try:
        x = io.read_design(args.design)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.design}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    feasible = is_feasible(x, args.brush)
    report = {
        "design": str(args.design),
        "shape": list(x.shape),
        "brush": args.brush.spec,
        "feasible": feasible,
        "min_length_scale": minimum_length_scale(x, args.brush.shape),
        **run_length_stats(x),
    }
    if args.pitch:
        report["pitch_nm"] = args.pitch
        for key in ("min_solid_run", "min_void_run"):
            if report[key] is not None:
                report[key.replace("run", "width_nm" if "solid" in key else "spacing_nm")] = report[key] * args.pitch
    if args.json:
        print(json.dumps(report, sort_keys=True))
    else:
        for key, value in report.items():
            print(f"{key}: {value}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


# -- generate -----------------------------------------------------------------------


def cmd_generate(args) -> int:
    out = resolve_output(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    theta = rng.uniform(-1.0, 1.0, size=args.shape)
    trace_file = open(resolve_output(args.trace), "w") if args.trace else None
    try:
        cb = (lambda step: trace_file.write(json.dumps(step.to_json()) + "\n")) if trace_file else None
        x = generate(theta, args.brush, trace=cb, record_states=bool(trace_file))
    finally:
        if trace_file:
            trace_file.close()
    io.write_design(out, x)
    print(f"wrote {out} ({x.shape[0]}x{x.shape[1]}, {args.brush.spec}, seed {args.seed})")
    return EXIT_OK


# -- optimize --------------------------------------------------------------------------


def _spectra_rows(s):
    rows = []
    for (out, inp, wl), v in sorted(s.items(), key=lambda kv: (kv[0][2], kv[0][0])):
        power = abs(v) ** 2
        db = 10 * np.log10(power) if power > 0 else float("-inf")
        rows.append([wl, f"S{out}{inp}", f"{power:.10g}", f"{db:.6f}"])
    return rows


def write_run_artifacts(out: Path, cfg, traj) -> None:
    io.write_rows(
        out / "trajectory.csv",
        ["step", "loss", "spec_ok", "design_hash", "feasible"],
        [[r.step, repr(r.loss), int(r.spec_ok), r.design_hash, int(r.feasible)] for r in traj.records],
    )
    if not traj.records:
        return
    best = traj.best_step
    io.write_pgm(out / "initial.pgm", traj.designs[0])
    io.write_pgm(out / "best.pgm", traj.designs[best])
    io.write_pgm(out / "final.pgm", traj.designs[-1])
    if traj.first_success is not None:
        io.write_pgm(out / "first_success.pgm", traj.designs[traj.first_success])
    io.write_rows(out / "spectra.csv", ["wavelength_nm", "param", "power", "power_db"], _spectra_rows(traj.records[best].s))


def cmd_optimize(args) -> int:
    from .fdfd import SolverError
    from .optimize import OptimizeConfig, run_optimization

    try:
        cfg = OptimizeConfig.load(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: bad config {args.config}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    if args.seed is not None:
        cfg.seed = args.seed
    if args.budget is not None:
        cfg.budget = args.budget
    out = resolve_output(args.out or cfg.output_dir or "run")
    out.mkdir(parents=True, exist_ok=True)
    for marker in (FAILED_MARKER,):
        (out / marker).unlink(missing_ok=True)
    (out / INCOMPLETE_MARKER).write_text("run in progress\n")
    io.write_json(out / "config.json", cfg.to_dict())

    trace = open(resolve_output(args.trace), "w") if args.trace else None

    def on_step(rec, design):
        if trace:
            trace.write(json.dumps({"step": rec.step, "loss": rec.loss, "spec_ok": rec.spec_ok,
                                    "design_hash": rec.design_hash}) + "\n")
            trace.flush()

    try:
        traj = run_optimization(cfg, callback=on_step)
    except SolverError as exc:  # failure before the first record
        (out / FAILED_MARKER).write_text(f"{exc}\n")
        return EXIT_SOLVER_FAILED
    finally:
        if trace:
            trace.close()
    write_run_artifacts(out, cfg, traj)
    if traj.failed:
        (out / FAILED_MARKER).write_text(f"{traj.error}\n")
        print(f"solver failure: {traj.error}", file=sys.stderr)
        return EXIT_SOLVER_FAILED
    (out / INCOMPLETE_MARKER).unlink()
    if traj.achieved:
        print(f"target achieved at step {traj.first_success}; artifacts in {out}")
        return EXIT_OK
    print(f"target not achieved in {cfg.budget} steps; artifacts in {out}")
    return EXIT_NOT_ACHIEVED


# -- export -------------------------------------------------------------------------


def cmd_export(args) -> int:
    try:
        x = io.read_design(args.design)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read {args.design}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out = resolve_output(args.out or Path(args.design).with_suffix(".contours.json").name)
    out.parent.mkdir(parents=True, exist_ok=True)
    doc = io.contours_to_json(x, args.pitch)
    io.write_json(out, doc)
    print(f"wrote {len(doc['loops'])} loops to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brushopt", description="Brush-feasible photonic inverse design.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="check a design against a brush")
    c.add_argument("design")
    c.add_argument("--brush", type=_brush_arg, required=True, help="e.g. circle:13 or notched:10")
    c.add_argument("--pitch", type=float, default=None, help="pixel pitch in nm for physical widths")
    c.add_argument("--json", action="store_true", help="print the report as JSON")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("generate", help="write a random feasible design")
    g.add_argument("--brush", type=_brush_arg, required=True)
    g.add_argument("--shape", type=parse_shape, default=(64, 64))
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help=".pgm or .csv path")
    g.add_argument("--trace", default=None, help="write generator steps as JSON lines")
    g.set_defaults(func=cmd_generate)

    o = sub.add_parser("optimize", help="run an inverse design from a JSON config")
    o.add_argument("--config", required=True)
    o.add_argument("--out", default=None, help="artifact directory (overrides the config)")
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--budget", type=int, default=None)
    o.add_argument("--trace", default=None, help="write per-step records as JSON lines")
    o.set_defaults(func=cmd_optimize)

    e = sub.add_parser("export", help="export pixel-outline contours as JSON")
    e.add_argument("design")
    e.add_argument("--pitch", type=float, default=10.0, help="pixel pitch in nm")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
