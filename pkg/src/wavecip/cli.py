"""Command-line entry point for scripted experiments and CI checks.

Exit codes: 0 on success, 2 for configuration problems, 3 for solver
failures, 4 when --check finds a metric outside its acceptance band.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .boundary import BoundaryTraces
from .forward import SolverError, extract_neumann, solve_forward
from .grid import GridError
from .harness import CHECK_BANDS, ConfigError, ExperimentConfig, StageError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4


def _load_config(args) -> ExperimentConfig:
    if args.config:
        cfg = harness.parse_config(args.config)
    elif getattr(args, "name", None):
        cfg = harness.named_experiment(args.name, full=args.full)
    else:
        raise ConfigError("either a --config file or an experiment name is required")
    overrides = {}
    if args.noise is not None:
        overrides["sigma"] = args.noise
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides) if overrides else cfg


def _out_dir(args) -> Path:
    out = Path(args.out or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_forward(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    grid_f, grid_i, traces = harness.synthesize_traces(cfg)
    np.save(out / "traces_s.npy", traces.s)
    np.save(out / "traces_p.npy", traces.p)
    print(f"forward: wrote coarse traces for {cfg.glyph} to {out}")
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    metrics = harness.run_experiment(cfg, out_dir=out)
    for name, value in metrics.rows():
        print(f"{name} = {value:.6g}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    metrics = harness.run_experiment(cfg, out_dir=out)
    for name, value in metrics.rows():
        print(f"{name} = {value:.6g}")
    if args.check:
        bands = CHECK_BANDS.get(getattr(args, "name", None) or "", {})
        failed = []
        for name, value in metrics.rows():
            if name in bands:
                lo, hi = bands[name]
                ok = lo <= value <= hi
                print(f"check {name}: {value:.6g} in [{lo:g}, {hi:g}] -> {'ok' if ok else 'FAIL'}")
                if not ok:
                    failed.append(name)
        if failed:
            return EXIT_CHECK
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    deltas = [float(tok) for tok in args.deltas.split(",")]
    rows = harness.run_stability_experiment(cfg, deltas, out_path=out / "stability.csv")
    for delta, ratio in rows:
        print(f"delta = {delta:g}  ratio = {ratio:.6g}")
    ratios = [r for d, r in rows if d > 0]
    if args.check and ratios:
        spread = max(ratios) / min(ratios)
        print(f"check ratio spread: {spread:.3g} < 10 -> {'ok' if spread < 10 else 'FAIL'}")
        if not (spread < 10 and all(np.isfinite(ratios))):
            return EXIT_CHECK
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    full, ablated = harness.run_gradient_check(seed=args.seed or 0)
    print(f"gradient vs central differences: worst relative error = {full:.3e}")
    print(f"with nonlocal term ablated:      worst relative error = {ablated:.3e}")
    if args.check and not (full < 1e-6 and ablated > 1e-3):
        return EXIT_CHECK
    return EXIT_OK


def cmd_convexity(args) -> int:
    lam_star, min_gap, table = harness.run_convexity_sweep(seed=args.seed or 0)
    for lam, worst in table:
        print(f"lambda = {lam:g}  min gap = {worst:.6g}")
    if lam_star is None:
        print("no lambda in the sweep gives nonnegative gaps")
        return EXIT_CHECK if args.check else EXIT_OK
    print(f"lambda* = {lam_star:g}  (min gap {min_gap:.6g})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavecip", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_name=False):
        if with_name:
            p.add_argument("name", nargs="?", help="named experiment or omit with --config")
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--noise", type=float, default=None, help="override noise level sigma")
        p.add_argument("--seed", type=int, default=None, help="override RNG seed")
        p.add_argument("--out", default=None, help="output directory (default ./out)")
        p.add_argument("--full", action="store_true", help="use the full-size grids")
        p.add_argument("--check", action="store_true", help="verify acceptance bands; exit 4 on failure")

    common(sub.add_parser("forward", help="simulate and dump coarse boundary traces"), with_name=True)
    common(sub.add_parser("invert", help="run the inversion and write the reconstruction"), with_name=True)
    common(sub.add_parser("experiment", help="run a named or configured experiment"), with_name=True)
    p_st = sub.add_parser("stability", help="noise-response ratio sweep")
    common(p_st, with_name=True)
    p_st.add_argument("--deltas", default="1e-3,1e-2,1e-1", help="comma-separated perturbation sizes")
    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p_gc)
    p_cv = sub.add_parser("convexity-probe", help="sweep lambda for nonnegative convexity gaps")
    common(p_cv)
    return parser


_HANDLERS = {
    "forward": cmd_forward,
    "invert": cmd_invert,
    "experiment": cmd_experiment,
    "stability": cmd_stability,
    "gradcheck": cmd_gradcheck,
    "convexity-probe": cmd_convexity,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER if not isinstance(exc.cause, (ConfigError, GridError)) else EXIT_CONFIG
    except (SolverError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
