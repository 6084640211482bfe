"""Acceptance criteria, each checked at its stated tolerance.

Every test records a one-line verdict that is printed in the terminal
summary (section "acceptance criteria") whether it passes or fails.
"""

import time

import numpy as np

from bpms.analog import AO_MAX_OUTER, AO_REL_TOL, beampattern, build_analog_codebook, design_analog_fdb, probe_grid
from bpms.digital import (
    build_codebook,
    design_cpa_wbf,
    design_cpa_wcm,
    design_cpa_wcrb,
    design_fdb_wbf,
    design_fdb_wcm,
    design_fdb_wcrb,
    fim_model,
)
from bpms.fim import (
    channel_fim_bp,
    channel_fim_ms,
    crb_bp,
    crb_direct,
    crb_ms,
    fused_fim,
    jacobian_bp,
    jacobian_ms,
    position_fim_bp,
    position_fim_ms,
)
from bpms.harness import emit_beampattern, emit_convergence, replay, run_sweep
from bpms.scenario import ScenarioConfig, derive_channel_params, steering_derivative

from conftest import random_psd, record, small_config
from oracles import (
    entrywise_relative_error,
    finite_difference_channel_fim,
    finite_difference_jacobian,
    normalised_error,
)

GRID21 = np.linspace(0.0, 1.0, 21)
INTERIOR9 = np.linspace(0.1, 0.9, 9)
REF_BP_ALPHA1 = 0.0619
REF_MS_ALPHA0 = 0.1068


def sqrt_pair(model, V, fused=False):
    if fused:
        b, m = model.crb_fused(V)
    else:
        b, m = model.crb_bp(V), model.crb_ms(V)
    return np.sqrt(b), np.sqrt(m)


# 1 -------------------------------------------------------------------------

def test_01_fim_oracle():
    t0 = time.perf_counter()
    cfg = small_config()
    p = derive_channel_params(cfg)
    rng = np.random.default_rng(5)
    F = rng.standard_normal((4, cfg.n_slots)) + 1j * rng.standard_normal((4, cfg.n_slots))
    F *= np.sqrt(cfg.power_per_subcarrier) / np.linalg.norm(F)
    worst_sig, worst_norm = 0.0, 0.0
    for link, fn in (("bp", channel_fim_bp), ("ms", channel_fim_ms)):
        A = fn(p, cfg, F @ F.conj().T).matrix
        B = finite_difference_channel_fim(link, p, cfg, F)
        d = np.sqrt(np.diag(B))
        significant = np.abs(B) >= 1e-6 * np.outer(d, d)
        worst_sig = max(worst_sig, entrywise_relative_error(A, B)[significant].max())
        # analytically zero entries (Re/Im gain cross terms) are judged against sqrt(I_ii I_jj)
        worst_norm = max(worst_norm, normalised_error(A, B).max())
    elapsed = time.perf_counter() - t0
    ok = worst_sig < 1e-5 and worst_norm < 1e-5 and elapsed < 10.0
    record(1, "FIM oracle equivalence", ok,
           f"max rel err {worst_sig:.2e} (nonzero entries), {worst_norm:.2e} (scaled, all entries), {elapsed:.2f} s")
    assert worst_sig < 1e-5 and worst_norm < 1e-5
    assert elapsed < 10.0


# 2 -------------------------------------------------------------------------

def test_02_jacobian_oracle():
    worst = 0.0
    for K in (1, 2, 3):
        cfg = ScenarioConfig().with_targets(K)
        p = derive_channel_params(cfg)
        worst = max(worst,
                    entrywise_relative_error(jacobian_bp(p, cfg), finite_difference_jacobian("bp", p, cfg)).max(),
                    entrywise_relative_error(jacobian_ms(p, cfg), finite_difference_jacobian("ms", p, cfg)).max())
    record(2, "Jacobian oracle", worst < 1e-6, f"max entrywise rel err {worst:.2e} (K = 1, 2, 3)")
    assert worst < 1e-6


# 3 -------------------------------------------------------------------------

def _random_scenario(rng):
    K = int(rng.integers(1, 4))
    while True:
        ue = (rng.uniform(-15, 15), rng.uniform(5, 30))
        targets = tuple((rng.uniform(-15, 15), rng.uniform(5, 30)) for _ in range(K))
        pts = np.array([(0.0, 0.0), ue, *targets])
        dist = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(pts)) * 1e9
        if dist.min() > 2.0:
            break
    return ScenarioConfig(n_targets=K, p_ue=ue, p_targets=targets, rcs_bp=(100.0,) * K,
                          rcs_ms=(10.0,) + (100.0,) * K, rng_seed=int(rng.integers(0, 2 ** 31)),
                          ue_orientation=float(rng.uniform(-np.pi, np.pi)))


def test_03_schur_consistency():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        cfg = _random_scenario(rng)
        p = derive_channel_params(cfg)
        K = cfg.n_targets
        V = random_psd(cfg.n_tx_bs, cfg.n_tx_bs, rng, cfg.power_per_subcarrier)
        pairs = [
            (crb_bp(p, cfg, V), crb_direct(position_fim_bp(p, cfg, V), 2)),
            (crb_ms(p, cfg, V), crb_direct(position_fim_ms(p, cfg, V), 2 * K + 2)),
        ]
        pf, (fb, fm) = fused_fim(p, cfg, V)
        pairs += [(fb, crb_direct(pf, [2 * K, 2 * K + 1])), (fm, crb_direct(pf, 2 * K + 2))]
        worst = max(worst, max(abs(a - b) / abs(b) for a, b in pairs))
    record(3, "Schur consistency", worst < 1e-8, f"max rel diff {worst:.2e} over 20 random scenarios")
    assert worst < 1e-8


# 4 -------------------------------------------------------------------------

def test_04_frontier_endpoints(default_cfg, default_params):
    model = fim_model(default_params, default_cfg)
    pts = np.array([sqrt_pair(model, design_fdb_wcrb(a, default_params, default_cfg)[0]) for a in GRID21])
    bp1, ms0 = pts[-1, 0], pts[0, 1]
    e_bp = bp1 / REF_BP_ALPHA1 - 1
    e_ms = ms0 / REF_MS_ALPHA0 - 1
    crb = pts ** 2
    mono = bool(np.all(np.diff(crb[:, 0]) <= 1e-7 * crb[:-1, 0]) and np.all(np.diff(crb[:, 1]) >= -1e-7 * crb[:-1, 1]))
    ok = abs(e_bp) <= 0.2 and abs(e_ms) <= 0.2 and mono
    record(4, "Frontier endpoints", ok,
           f"sqrt CRB_BP(1) = {bp1:.4f} m ({e_bp:+.1%}), sqrt CRB_MS(0) = {ms0:.4f} m ({e_ms:+.1%}), "
           f"monotone 21-point sweep: {mono}")
    assert abs(e_bp) <= 0.2
    assert abs(e_ms) <= 0.2
    assert mono


# 5 -------------------------------------------------------------------------

def _dominance_failures(frontier, others, alphas):
    """Count violations of WCRB dominance: weighted objective and Pareto order (CRB units)."""
    bad = 0
    F = frontier ** 2
    for pts in others:
        X = pts ** 2
        for i, a in enumerate(alphas):
            w = np.array([a, 1 - a])
            if F[i] @ w > X[i] @ w * (1 + 1e-7):
                bad += 1
        for x in X:
            if np.any(np.all(x < F * (1 - 1e-7), axis=1)):
                bad += 1
    return bad


def test_05_paradigm_ordering(default_cfg, default_params):
    t0 = time.perf_counter()
    cfg, p = default_cfg, default_params
    model = fim_model(p, cfg)
    fam = {"fdb": {}, "cpa": {}}
    for a in INTERIOR9:
        fam["fdb"].setdefault("wcrb", []).append(sqrt_pair(model, design_fdb_wcrb(a, p, cfg)[0]))
        fam["fdb"].setdefault("wcm", []).append(sqrt_pair(model, design_fdb_wcm(a, p, cfg)[0]))
        fam["fdb"].setdefault("wbf", []).append(sqrt_pair(model, design_fdb_wbf(a, p, cfg)[0].covariance))
        fam["cpa"].setdefault("wcrb", []).append(sqrt_pair(model, design_cpa_wcrb(a, p, cfg)[1]))
        fam["cpa"].setdefault("wcm", []).append(sqrt_pair(model, design_cpa_wcm(a, p, cfg)[1].covariance))
        fam["cpa"].setdefault("wbf", []).append(sqrt_pair(model, design_cpa_wbf(a, p, cfg)[0].covariance))
    elapsed = time.perf_counter() - t0
    worst, where, dom = 0.0, "", 0
    for name, d in fam.items():
        wcm, wbf, wcrb = (np.array(d[k]) for k in ("wcm", "wbf", "wcrb"))
        ratio = wcm / wbf
        i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[i, j] > worst:
            worst, where = ratio[i, j], f"{name} {'BP' if j == 0 else 'MS'} at alpha={INTERIOR9[i]:.1f}"
        dom += _dominance_failures(wcrb, (wcm, wbf), INTERIOR9)
    ok = worst <= 1.02 and dom == 0 and elapsed < 300
    record(5, "Paradigm ordering", ok,
           f"max WCM/WBF ratio {worst:.4f} ({where}; limit 1.02), WCRB dominance violations {dom}, {elapsed:.1f} s")
    assert dom == 0
    assert elapsed < 300
    assert worst <= 1.02


# 6 -------------------------------------------------------------------------

def test_06_target_count_trend():
    bp, ms = [], []
    for K in (1, 2, 3):
        cfg = ScenarioConfig().with_targets(K)
        p = derive_channel_params(cfg)
        model = fim_model(p, cfg)
        bp.append(np.sqrt(model.crb_bp(design_fdb_wcrb(1.0, p, cfg)[0])))
        ms.append(np.sqrt(model.crb_ms(design_fdb_wcrb(0.0, p, cfg)[0])))
    ok = bool(np.all(np.diff(bp) < 0) and np.all(np.diff(ms) > 0))
    record(6, "Target-count trend", ok,
           "BP(alpha=1) " + " > ".join(f"{v:.4f}" for v in bp) + " m; MS(alpha=0) " + " < ".join(f"{v:.4f}" for v in ms) + " m")
    assert ok


# 7 -------------------------------------------------------------------------

def test_07_fusion_dominance(default_cfg, default_params):
    cfg, p = default_cfg, default_params
    model = fim_model(p, cfg)
    bp1 = sqrt_pair(model, design_fdb_wcrb(1.0, p, cfg)[0])[0]
    ms0 = sqrt_pair(model, design_fdb_wcrb(0.0, p, cfg)[0])[1]
    fused = np.array([sqrt_pair(model, design_fdb_wcrb(a, p, cfg, fused=True)[0], fused=True)
                      for a in np.linspace(0, 1, 11)])
    rb, rm = fused[-1, 0] / bp1, fused[0, 1] / ms0
    # tradeoff: moving the weight shifts both fused bounds in opposite directions
    span_bp = fused[0, 0] / fused[-1, 0] - 1
    span_ms = fused[-1, 1] / fused[0, 1] - 1
    trade = span_bp > 0.01 and span_ms > 0.01
    ok = rb <= 0.25 and rm <= 0.5 and trade
    record(7, "Fusion dominance", ok,
           f"fused/non-fused BP {fused[-1, 0]:.4f}/{bp1:.4f} = {rb:.3f} (<= 0.25), "
           f"MS {fused[0, 1]:.4f}/{ms0:.4f} = {rm:.3f} (<= 0.5), residual tradeoff BP +{span_bp:.1%} MS +{span_ms:.1%}")
    assert rb <= 0.25
    assert rm <= 0.5
    assert trade


# 8 -------------------------------------------------------------------------

def test_08_analog_convergence(default_cfg, default_params):
    details, ok = [], True
    for a in (0.0, 0.5, 1.0):
        ab, trace, _ = design_analog_fdb(a, default_params, default_cfg)
        n_outer = len(trace) - 1
        mono = bool(np.all(np.diff(trace) <= 1e-12 * trace[0]))
        last = (trace[-2] - trace[-1]) / trace[-2]
        stopped = n_outer <= AO_MAX_OUTER and (last < AO_REL_TOL or n_outer == AO_MAX_OUTER)
        ok &= mono and stopped and n_outer <= 20
        details.append(f"alpha={a:g}: {trace[0]:.4f} -> {trace[-1]:.4f} in {n_outer} iters")
    record(8, "Analog convergence", ok, "; ".join(details))
    assert ok


# 9 -------------------------------------------------------------------------

def test_09_rank_one_recovery(default_cfg, default_params):
    worst = 0.0
    for a in GRID21:
        worst = max(worst, design_fdb_wbf(a, default_params, default_cfg)[1].ratios.max(),
                    design_cpa_wbf(a, default_params, default_cfg)[1].ratios.max())
    record(9, "Rank-one recovery", worst < 1e-6, f"max lambda2/lambda1 {worst:.2e} over 21 alphas, FDB and CPA")
    assert worst < 1e-6


# 10 ------------------------------------------------------------------------

def test_10_structural_invariant(default_cfg, default_params):
    U = build_codebook(default_params, default_cfg).matrix
    Q, _ = np.linalg.qr(U)
    Pp = np.eye(default_cfg.n_tx_bs) - Q @ Q.conj().T
    worst = 0.0
    for a in GRID21:
        V, _ = design_fdb_wcrb(a, default_params, default_cfg)
        worst = max(worst, np.linalg.norm(Pp @ V @ Pp) / np.linalg.norm(V))
    record(10, "Structural invariant", worst < 1e-6, f"max projection residual {worst:.2e}")
    assert worst < 1e-6


# 11 ------------------------------------------------------------------------

def test_11_analog_codebook_fidelity(default_cfg, default_params):
    cfg, p = default_cfg, default_params
    cb = build_analog_codebook(p, cfg, n_probe=256)
    grid = probe_grid(256)
    K1 = p.n_paths
    worst = 0.0
    for k in range(K1):
        target = steering_derivative(p.aod[k], cfg.n_tx_bs, cfg.array_reference)
        ref = beampattern(target, grid, normalize=True)
        fit = beampattern(cb.matrix[:, K1 + k], grid, normalize=True)
        worst = max(worst, np.max(np.abs(fit - ref)))
    record(11, "Analog codebook fidelity", worst < 1.5,
           f"max beampattern deviation {worst:.2f} dB over the 256-point grid (limit 1.5 dB)")
    assert worst < 1.5


# 12 ------------------------------------------------------------------------

def test_12_determinism(default_cfg, tmp_path):
    cfg = default_cfg
    runs = [
        ("fdb-wcrb.csv", lambda out: run_sweep(cfg, "fdb-wcrb", "5", out=out), "fdb-wcrb.manifest.json"),
        ("cpa-wbf_fused.csv", lambda out: run_sweep(cfg, "cpa-wbf", "0,0.5,1", fused=True, out=out),
         "cpa-wbf_fused.manifest.json"),
        ("analog-cpa.csv", lambda out: run_sweep(cfg, "analog-cpa", "0,1", out=out), "analog-cpa.manifest.json"),
        ("beampattern_fdb-wcm_0.3.csv", lambda out: emit_beampattern(cfg, "fdb-wcm", 0.3, out=out),
         "beampattern_fdb-wcm_0.3.manifest.json"),
        ("convergence_0.5.csv", lambda out: emit_convergence(cfg.with_targets(1), 0.5, out=out),
         "convergence_0.5.manifest.json"),
    ]
    same = []
    for csv, fn, man in runs:
        first = tmp_path / "first"
        fn(first)
        replay(first / man, tmp_path / "replay")
        same.append((first / csv).read_bytes() == (tmp_path / "replay" / csv).read_bytes())
    ok = all(same)
    record(12, "Determinism", ok, f"{sum(same)}/{len(same)} manifests replayed byte-identically")
    assert ok
