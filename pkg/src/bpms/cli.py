"""Command-line front end: ``sweep``, ``beampattern``, ``converge`` and ``replay``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import BpmsError
from .harness import METHODS, emit_beampattern, emit_convergence, replay, run_sweep
from .scenario import ScenarioConfig, load_config_file


def _config(args) -> ScenarioConfig:
    cfg = load_config_file(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bpms", description="BP/MS tradeoff beamforming designs and bounds")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="TOML scenario document (defaults if omitted)")
        sp.add_argument("--seed", type=_seed, metavar="U64", help="override the channel-phase seed")
        sp.add_argument("--out", metavar="DIR", default=".", help="output directory")
        sp.add_argument("--fused", action="store_true", help="evaluate and optimise the fused BP+MS bounds")

    sp = sub.add_parser("sweep", help="alpha sweep of one design")
    common(sp)
    sp.add_argument("--method", required=True, choices=METHODS)
    sp.add_argument("--alpha-grid", default="21", metavar="N|LIST",
                    help="number of uniform points on [0,1], or a comma-separated list")
    sp.add_argument("--workers", type=int, default=None, help="worker pool size")

    sp = sub.add_parser("beampattern", help="peak-normalised beampattern of one design")
    common(sp)
    sp.add_argument("--method", required=True, choices=METHODS)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--resolution", type=int, default=361)

    sp = sub.add_parser("converge", help="analog FDB objective trace")
    common(sp)
    sp.add_argument("--alpha", type=float, default=0.5)

    sp = sub.add_parser("replay", help="re-run a manifest")
    sp.add_argument("manifest", metavar="MANIFEST")
    sp.add_argument("--out", metavar="DIR", default=".")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            curve = run_sweep(_config(args), args.method, args.alpha_grid, args.fused, args.out, args.workers)
            for a, b, m, s in curve.points:
                print(f"alpha={a:.4f} sqrt_crb_bp={b:.6g} m sqrt_crb_ms={m:.6g} m {s}")
            return 0 if curve.ok else 1
        if args.command == "beampattern":
            emit_beampattern(_config(args), args.method, args.alpha, args.resolution, args.out, args.fused)
            return 0
        if args.command == "converge":
            trace, _ = emit_convergence(_config(args), args.alpha, args.out, args.fused)
            print(f"{len(trace) - 1} outer iterations, objective {trace[0]:.6g} -> {trace[-1]:.6g}")
            return 0
        if args.command == "replay":
            replay(args.manifest, args.out)
            return 0
    except (BpmsError, ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
