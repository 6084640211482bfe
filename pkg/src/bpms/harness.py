"""Batch runs: alpha sweeps, beampatterns and analog convergence traces.

Every run writes CSV data plus a JSON manifest; :func:`replay` re-executes a
manifest and reproduces the CSV bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .analog import beampattern, design_analog_cpa, design_analog_fdb
from .digital import DIGITAL_METHODS, design, fim_model
from .errors import BpmsError, ConfigError
from .scenario import ScenarioConfig, derive_channel_params

METHODS = DIGITAL_METHODS + ("analog-fdb", "analog-cpa")
SWEEP_COLUMNS = ("alpha", "sqrt_crb_bp_m", "sqrt_crb_ms_m", "status")
NUM_FMT = "%.12g"
DB_FLOOR = -300.0
DEFAULT_GRID = 21


def _fmt(v) -> str:
    return NUM_FMT % v


def parse_alpha_grid(grid) -> np.ndarray:
    """``"N"`` gives N uniform points on [0, 1]; otherwise a comma-separated list."""
    if grid is None:
        grid = str(DEFAULT_GRID)
    if isinstance(grid, (list, tuple, np.ndarray)):
        vals = np.asarray(grid, dtype=float)
    else:
        text = str(grid).strip()
        if "," not in text and text.isdigit():
            n = int(text)
            if n < 1:
                raise ConfigError("alpha grid needs at least one point", "alpha_grid")
            vals = np.linspace(0.0, 1.0, n) if n > 1 else np.array([0.5])
        else:
            try:
                vals = np.array([float(t) for t in text.split(",") if t.strip()])
            except ValueError as exc:
                raise ConfigError(f"cannot parse alpha grid {grid!r}", "alpha_grid") from exc
    if vals.size == 0 or np.any(vals < 0) or np.any(vals > 1) or not np.all(np.isfinite(vals)):
        raise ConfigError("alpha grid values must lie in [0, 1]", "alpha_grid")
    vals = np.unique(vals)
    return vals


# ---------------------------------------------------------------------------
# design dispatch and evaluation


def run_design(method, alpha, params, cfg, fused=False):
    """Beamformer set for any of :data:`METHODS`; returns ``(BeamformerSet, info)``."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}", "method")
    info = {}
    if method == "analog-fdb":
        ab, trace, extra = design_analog_fdb(alpha, params, cfg, fused=fused)
        info = {"outer_iterations": len(trace) - 1, "flags": list(extra["flags"])}
        return ab.beamformer_set("analog-fdb", alpha), info
    if method == "analog-cpa":
        _, bf = design_analog_cpa(alpha, params, cfg, fused=fused)
        return bf, info
    return design(method, alpha, params, cfg, fused=fused), info


def evaluate(model, V, fused=False):
    """``(sqrt CRB_BP, sqrt CRB_MS)`` in metres."""
    if fused:
        bp, ms = model.crb_fused(V)
    else:
        bp, ms = model.crb_bp(V), model.crb_ms(V)
    return float(np.sqrt(bp)), float(np.sqrt(ms))


@dataclass
class TradeoffCurve:
    method: str
    points: list                 # (alpha, sqrt_bp, sqrt_ms, status)
    fused: bool
    scenario_hash: str
    seed: int
    reports: dict = field(default_factory=dict)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def bp(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    @property
    def ms(self) -> np.ndarray:
        return np.array([p[2] for p in self.points])

    @property
    def ok(self) -> bool:
        return all(p[3] == "ok" for p in self.points)

    def csv(self) -> str:
        rows = [",".join(SWEEP_COLUMNS)]
        for a, b, m, s in self.points:
            rows.append(",".join([_fmt(a), _fmt(b), _fmt(m), s]))
        return "\n".join(rows) + "\n"


def _sweep_point(method, alpha, params, cfg, fused):
    try:
        bf, info = run_design(method, float(alpha), params, cfg, fused)
        bp, ms = evaluate(fim_model(params, cfg), bf.covariance, fused)
        if not (np.isfinite(bp) and np.isfinite(ms) and bp > 0 and ms > 0):
            return (float(alpha), float("nan"), float("nan"), "error:non-finite"), info
        return (float(alpha), bp, ms, "ok"), info
    except (BpmsError, ArithmeticError, np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
        return (float(alpha), float("nan"), float("nan"), f"error:{type(exc).__name__}"), {"message": str(exc)}


def _workers(n_points, workers):
    if workers is None:
        workers = min(4, os.cpu_count() or 1)
    return max(1, min(int(workers), n_points))


def run_sweep(cfg: ScenarioConfig, method: str, alphas=None, fused: bool = False, out=None,
              workers: int | None = None) -> TradeoffCurve:
    """Run ``method`` at every alpha; writes ``<method>[_fused].csv`` and a manifest when ``out`` is set."""
    grid = parse_alpha_grid(alphas)
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}", "method")
    params = derive_channel_params(cfg)
    started = time.time()
    with ThreadPoolExecutor(max_workers=_workers(grid.size, workers)) as pool:
        results = list(pool.map(lambda a: _sweep_point(method, a, params, cfg, fused), grid))
    points = [r[0] for r in results]
    reports = {_fmt(p[0]): info for p, info in results}
    curve = TradeoffCurve(method, points, fused, cfg.scenario_hash(), cfg.rng_seed, reports)
    if out is not None:
        name = f"{method}{'_fused' if fused else ''}"
        data = curve.csv()
        path = _write(out, name + ".csv", data)
        manifest = _manifest("sweep", cfg, {"method": method, "alpha_grid": [float(a) for a in grid],
                                            "fused": bool(fused)}, started,
                             {"csv": os.path.basename(path), "sha256": _sha(data)},
                             [{"alpha": p[0], "status": p[3]} for p in points])
        manifest["solver_digest"] = _sha(json.dumps(reports, sort_keys=True, default=str))
        _write(out, name + ".manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return curve


def emit_beampattern(cfg: ScenarioConfig, method: str, alpha: float, resolution: int = 361, out=None,
                     fused: bool = False):
    """Peak-normalised transmit beampattern; returns ``(theta, power_db, csv_text)``."""
    if resolution < 2:
        raise ConfigError("resolution must be at least 2", "resolution")
    params = derive_channel_params(cfg)
    started = time.time()
    bf, _ = run_design(method, float(alpha), params, cfg, fused)
    theta = np.linspace(-0.5 * np.pi, 0.5 * np.pi, int(resolution))
    db = np.maximum(beampattern(bf.F, theta, normalize=True), DB_FLOOR)
    rows = ["theta_rad,power_db"] + [f"{_fmt(t)},{_fmt(d)}" for t, d in zip(theta, db)]
    data = "\n".join(rows) + "\n"
    if out is not None:
        name = f"beampattern_{method}_{_fmt(alpha)}"
        _write(out, name + ".csv", data)
        _write(out, name + ".manifest.json", json.dumps(_manifest(
            "beampattern", cfg, {"method": method, "alpha": float(alpha), "resolution": int(resolution),
                                 "fused": bool(fused)}, started,
            {"csv": name + ".csv", "sha256": _sha(data)}, [{"alpha": float(alpha), "status": "ok"}]),
            indent=2, sort_keys=True) + "\n")
    return theta, db, data


def emit_convergence(cfg: ScenarioConfig, alpha: float, out=None, fused: bool = False):
    """Analog-FDB objective trace, one row per outer iteration; returns ``(trace, csv_text)``."""
    params = derive_channel_params(cfg)
    started = time.time()
    _, trace, _ = design_analog_fdb(float(alpha), params, cfg, fused=fused)
    if np.any(np.diff(trace) > 1e-12 * max(trace[0], 1.0)):
        raise RuntimeError("analog FDB objective trace is not monotone")
    rows = ["iteration,objective"] + [f"{i},{_fmt(v)}" for i, v in enumerate(trace)]
    data = "\n".join(rows) + "\n"
    if out is not None:
        name = f"convergence_{_fmt(alpha)}"
        _write(out, name + ".csv", data)
        _write(out, name + ".manifest.json", json.dumps(_manifest(
            "converge", cfg, {"alpha": float(alpha), "fused": bool(fused)}, started,
            {"csv": name + ".csv", "sha256": _sha(data)}, [{"alpha": float(alpha), "status": "ok"}]),
            indent=2, sort_keys=True) + "\n")
    return trace, data


# ---------------------------------------------------------------------------
# manifests


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _write(out, name, text) -> str:
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _manifest(command, cfg, args, started, output, points) -> dict:
    return {
        "command": command,
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "scenario_hash": cfg.scenario_hash(),
        "seed": cfg.rng_seed,
        "args": args,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "output": output,
        "points": points,
    }


def config_from_manifest(manifest: dict) -> ScenarioConfig:
    return ScenarioConfig(**manifest["config"])


def replay(manifest_path, out):
    """Re-run the command recorded in a manifest into ``out``; returns the CSV text."""
    with open(manifest_path, encoding="utf-8") as fh:
        man = json.load(fh)
    cfg = config_from_manifest(man)
    args = man["args"]
    cmd = man["command"]
    if cmd == "sweep":
        curve = run_sweep(cfg, args["method"], args["alpha_grid"], args["fused"], out)
        return curve.csv()
    if cmd == "beampattern":
        return emit_beampattern(cfg, args["method"], args["alpha"], args["resolution"], out, args["fused"])[2]
    if cmd == "converge":
        return emit_convergence(cfg, args["alpha"], out, args["fused"])[1]
    raise ConfigError(f"unknown manifest command {cmd!r}", "command")
