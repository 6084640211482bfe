"""Unit-modulus (analog) beamformer designs.

Analog FDB alternates SQP solves over slot powers and phase matrices to fit
``F F^H`` to the alpha-blend of the digital guide covariances; analog CPA
replaces the derivative codewords by constant-modulus fits and reuses the
covariance-mismatch power allocation.

Internally covariances and powers are divided by the per-subcarrier budget
``P_B / M``, so the mismatch values reported in traces are dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .digital import BeamformerSet, build_codebook, design_cpa_wcm, guides
from .errors import ConfigError
from .nlp import SqpOptions, gradient_projection_unit_modulus, sqp_minimize
from .scenario import ChannelParamSet, ScenarioConfig, steering_derivative, steering_matrix

AO_REL_TOL = 1e-3
AO_MAX_OUTER = 20
TWO_PI = 2.0 * np.pi


@dataclass
class AnalogBeamformer:
    powers: np.ndarray      # (L,) W
    phases: np.ndarray      # (N_B, L) rad in [0, 2 pi)

    @property
    def matrix(self) -> np.ndarray:
        n = self.phases.shape[0]
        return np.sqrt(np.maximum(self.powers, 0.0) / n)[None, :] * np.exp(1j * self.phases)

    def beamformer_set(self, method="analog-fdb", alpha=float("nan")) -> BeamformerSet:
        return BeamformerSet(self.matrix, method, alpha)


@dataclass
class AnalogCodebook:
    matrix: np.ndarray
    n_probe: int
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def size(self) -> int:
        return self.matrix.shape[1]


# ---------------------------------------------------------------------------
# mismatch objective f(rho, Phi) = tr((F^H F)^2) - 2 Re tr(F^H Psi F)


def _unit_columns(Phi):
    return np.exp(1j * Phi)


def analog_objective(rho, Phi, Psi) -> float:
    """Matrix form with ``[F]_{i,l} = sqrt(rho_l / N) exp(j phi_{i,l})``."""
    n = Phi.shape[0]
    F = np.sqrt(np.maximum(rho, 0.0) / n)[None, :] * _unit_columns(Phi)
    FhF = F.conj().T @ F
    return float(np.real(np.trace(FhF @ FhF)) - 2.0 * np.real(np.trace(F.conj().T @ Psi @ F)))


def analog_objective_expanded(rho, Phi, Psi) -> float:
    """Scalar quadruple-sum expansion of :func:`analog_objective`.

    The sums carry an overall ``N^2`` relative to the matrix form; it is
    divided out so the two agree exactly.
    """
    n, L = Phi.shape
    rho = np.asarray(rho, dtype=float)
    # d[n, i, k] = phi_{n,k} - phi_{n,i}
    d = Phi[:, None, :] - Phi[:, :, None]
    quart = 0.0
    for i in range(L):
        for k in range(L):
            arg = d[:, i, k][:, None] - d[:, i, k][None, :]      # (n, q)
            quart += rho[i] * rho[k] * np.sum(np.cos(arg))
    lin = 0.0
    for i in range(L):
        diff = Phi[None, :, i] - Phi[:, None, i]                # phi_{q,i} - phi_{n,i}
        lin += rho[i] * np.sum(Psi.real * np.cos(diff) - Psi.imag * np.sin(diff))
    return float((quart - 2.0 * n * lin) / n ** 2)


def _grad_rho(rho, E, Psi):
    n = E.shape[0]
    C = E.conj().T @ E / n
    return 2.0 * (np.abs(C) ** 2 @ rho) - 2.0 * np.real(np.einsum("il,ij,jl->l", E.conj(), Psi, E)) / n


def _grad_phi(rho, Phi, Psi):
    n = Phi.shape[0]
    F = np.sqrt(np.maximum(rho, 0.0) / n)[None, :] * _unit_columns(Phi)
    G = 2.0 * F @ (F.conj().T @ F) - 2.0 * Psi @ F
    return -2.0 * np.imag(G.conj() * F)


def mismatch(rho, Phi, V_bp, V_ms, alpha) -> float:
    """``alpha ||F F^H - V_bp||^2 + (1 - alpha) ||F F^H - V_ms||^2`` (normalised units)."""
    n = Phi.shape[0]
    F = np.sqrt(np.maximum(rho, 0.0) / n)[None, :] * _unit_columns(Phi)
    R = F @ F.conj().T
    return float(alpha * np.linalg.norm(R - V_bp) ** 2 + (1.0 - alpha) * np.linalg.norm(R - V_ms) ** 2)


# ---------------------------------------------------------------------------
# alternating optimisation


def _initial_phases(Psi, L, rng):
    n = Psi.shape[0]
    w, Q = np.linalg.eigh(0.5 * (Psi + Psi.conj().T))
    order = np.argsort(-w, kind="stable")
    w, Q = w[order], Q[:, order]
    Phi = rng.uniform(0.0, TWO_PI, size=(n, L))
    rho = np.full(L, 1.0 / L)
    keep = min(L, n)
    good = w[:keep] > 1e-9 * max(w[0], 1e-300)
    m = int(np.sum(good))
    if m:
        Phi[:, :m] = np.mod(np.angle(Q[:, :m]), TWO_PI)
        rho = np.zeros(L)
        rho[:m] = w[:m] / np.sum(w[:m])
    return Phi, rho


def _power_step(rho, Phi, Psi):
    E = _unit_columns(Phi)
    L = rho.size

    def f(r):
        return analog_objective(r, Phi, Psi), _grad_rho(r, E, Psi)

    g = lambda r: (np.array([np.sum(r) - 1.0]), np.ones((1, L)))
    h = lambda r: (-r, -np.eye(L))
    r, rep = sqp_minimize(f, g, h, rho, SqpOptions(tol=1e-9, rel_tol=1e-12, max_iter=100))
    r = np.maximum(r, 0.0)
    r = r / np.sum(r)
    return r, rep


def _phase_step(rho, Phi, Psi):
    n, L = Phi.shape

    def f(x):
        P = x.reshape(n, L)
        return analog_objective(rho, P, Psi), _grad_phi(rho, P, Psi).ravel()

    x, rep = sqp_minimize(f, None, None, Phi.ravel(),
                          SqpOptions(tol=1e-9, rel_tol=1e-10, max_iter=300,
                                     wrap=lambda v: np.mod(v, TWO_PI)))
    return np.mod(x.reshape(n, L), TWO_PI), rep


def design_analog_fdb(alpha, params: ChannelParamSet, cfg: ScenarioConfig, init=None, fused=False,
                      guide=None, rel_tol: float = AO_REL_TOL, max_outer: int = AO_MAX_OUTER):
    """Analog FDB by alternating SQP (powers, then phases).

    ``guide`` optionally overrides the digital guides with ``(V_bp, V_ms)`` in W.
    ``init`` may hold initial phases ``(N_B, L)``.  Returns
    ``(AnalogBeamformer, trace, info)``; ``trace`` is the weighted mismatch
    (normalised units) at initialisation and after every outer iteration.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError("alpha must lie in [0, 1]", "alpha")
    P = cfg.power_per_subcarrier
    if guide is None:
        g = guides(params, cfg, fused=fused)
        V_bp, V_ms = g.V_bp / P, g.V_ms / P
    else:
        V_bp, V_ms = (np.asarray(v, dtype=complex) / P for v in guide)
    Psi = alpha * V_bp + (1.0 - alpha) * V_ms
    L = cfg.n_slots
    rng = np.random.default_rng(cfg.rng_seed)
    Phi, rho = _initial_phases(Psi, L, rng)
    if init is not None:
        Phi = np.mod(np.asarray(init, dtype=float).reshape(cfg.n_tx_bs, L), TWO_PI)
        rho = np.full(L, 1.0 / L)

    cur = mismatch(rho, Phi, V_bp, V_ms, alpha)
    if not np.isfinite(cur):
        raise FloatingPointError("non-finite analog objective at initialisation")
    trace = [cur]
    flags = set()
    for _ in range(max_outer):
        r_new, rep = _power_step(rho, Phi, Psi)
        flags.update(rep.flags)
        if rep.status != "optimal":
            flags.add("power_" + rep.status)
        val = mismatch(r_new, Phi, V_bp, V_ms, alpha)
        if val <= cur:
            rho, cur_p = r_new, val
        else:
            cur_p = cur
        P_new, rep = _phase_step(rho, Phi, Psi)
        flags.update(rep.flags)
        if rep.status != "optimal":
            flags.add("phase_" + rep.status)
        val = mismatch(rho, P_new, V_bp, V_ms, alpha)
        if val <= cur_p:
            Phi, new = P_new, val
        else:
            new = cur_p
        if not np.isfinite(new):
            raise FloatingPointError("non-finite analog objective")
        trace.append(new)
        reduction = (cur - new) / max(cur, 1e-300)
        cur = new
        if reduction < rel_tol:
            break
    ab = AnalogBeamformer(rho * P, Phi)
    return ab, np.array(trace), {"flags": tuple(sorted(flags)), "psi": Psi}


# ---------------------------------------------------------------------------
# analog codebook and power allocation


def probe_grid(n_probe: int) -> np.ndarray:
    """``n_probe`` angles covering one period of the broadside sine, ``[-pi/2, pi/2)``."""
    return -0.5 * np.pi + np.arange(n_probe) * np.pi / n_probe


def build_analog_codebook(params: ChannelParamSet, cfg: ScenarioConfig, n_probe: int | None = None) -> AnalogCodebook:
    n = cfg.n_tx_bs
    n_probe = 16 * n if n_probe is None else int(n_probe)
    if n_probe < 4 * n:
        raise ConfigError(f"probe count must be at least 4 * N_B = {4 * n}", "n_probe")
    U = build_codebook(params, cfg).matrix
    K1 = params.n_paths
    T = steering_matrix(probe_grid(n_probe), n, cfg.array_reference).conj().T
    cols = [U[:, k] for k in range(K1)]
    res = []
    for k in range(K1):
        target = steering_derivative(params.aod[k], n, cfg.array_reference)
        fit = gradient_projection_unit_modulus(target, T)
        cols.append(fit.vector)
        res.append(fit.objective)
    return AnalogCodebook(np.column_stack(cols), n_probe, np.array(res))


def design_analog_cpa(alpha, params: ChannelParamSet, cfg: ScenarioConfig, fused=False, n_probe=None):
    """CPA covariance-mismatch power allocation over the analog codebook; ``(rho, BeamformerSet)``."""
    cb = build_analog_codebook(params, cfg, n_probe)
    rho, bf = design_cpa_wcm(alpha, params, cfg, fused=fused, codebook=cb.matrix, tag=f"analog{cb.n_probe}")
    return rho, BeamformerSet(bf.F, "analog-cpa", alpha)


def beampattern(F, grid, normalize: bool = False) -> np.ndarray:
    """``b(theta) = sum_l |a(theta)^H f_l|^2``; with ``normalize`` in dB relative to the peak.

    The pattern does not depend on the array phase reference.
    """
    F = np.asarray(F, dtype=complex)
    if F.ndim == 1:
        F = F[:, None]
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("grid must be non-empty")
    A = steering_matrix(grid, F.shape[0])
    b = np.sum(np.abs(A.conj().T @ F) ** 2, axis=1)
    if normalize:
        peak = np.max(b)
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(b / peak) if peak > 0 else np.full_like(b, -np.inf)
    return b
