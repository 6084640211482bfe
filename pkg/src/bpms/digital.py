"""Digital beamformer designs trading bistatic positioning against monostatic sensing.

All designs work on the codebook ``U = [a(theta_0..K), a'(theta_0..K)]`` and
keep the covariance inside ``col(U)``.  Internally covariances are scaled by
the per-subcarrier budget ``P_B / M`` so that solver variables are O(1).
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np

from .conic import SdpProblem, solve_sdp, solve_trust_region
from .errors import DecompositionError, IllPosedBoundError, SolverError
from .fim import FimModel, crb_from_efim, efim_blocks
from .hermitian import herm_basis, herm_from_params, hermitize, real_embed
from .scenario import ChannelParamSet, ScenarioConfig, derive_channel_params, steering_derivative, steering_vector

DIGITAL_METHODS = ("fdb-wcrb", "cpa-wcrb", "fdb-wbf", "cpa-wbf", "fdb-wcm", "cpa-wcm")
SDP_TOL = 1e-9


@dataclass(frozen=True)
class Codebook:
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[1]

    @property
    def gram(self) -> np.ndarray:
        return self.matrix.conj().T @ self.matrix


@dataclass(frozen=True)
class BeamformerSet:
    F: np.ndarray
    method: str = ""
    alpha: float = float("nan")

    @property
    def covariance(self) -> np.ndarray:
        return hermitize(self.F @ self.F.conj().T)

    @property
    def power(self) -> float:
        return float(np.real(np.trace(self.covariance)))


def build_codebook(params: ChannelParamSet, cfg: ScenarioConfig) -> Codebook:
    n = cfg.n_tx_bs
    ref = cfg.array_reference
    cols = [steering_vector(t, n, ref) for t in params.aod] + [steering_derivative(t, n, ref) for t in params.aod]
    return Codebook(np.column_stack(cols))


def _phase_normalise(q, eps=1e-12):
    """Rotate ``q`` so its first non-negligible entry is real positive."""
    nz = np.flatnonzero(np.abs(q) > eps * max(np.max(np.abs(q)), eps))
    if len(nz) == 0:
        return q
    ph = q[nz[0]] / abs(q[nz[0]])
    return q / ph


def recover_beamformers(V, L: int, method: str = "", alpha: float = float("nan")) -> BeamformerSet:
    """Factor ``V = F F^H`` with at most ``L`` columns (zero padded)."""
    V = hermitize(np.asarray(V, dtype=complex))
    n = V.shape[0]
    tr = float(np.real(np.trace(V)))
    F = np.zeros((n, L), dtype=complex)
    if tr <= 0:
        return BeamformerSet(F, method, alpha)
    d, Q = np.linalg.eigh(V)
    order = np.argsort(-d, kind="stable")
    d, Q = d[order], Q[:, order]
    keep = d > 1e-12 * tr
    if keep.sum() > L:
        raise DecompositionError(f"covariance has rank {int(keep.sum())} > L = {L}")
    for i in np.flatnonzero(keep):
        F[:, i] = np.sqrt(d[i]) * _phase_normalise(Q[:, i])
    return BeamformerSet(F, method, alpha)


def _pad(F, L):
    out = np.zeros((F.shape[0], L), dtype=complex)
    out[:, :F.shape[1]] = F
    return out


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")


def _params_key(cfg, params):
    h = hashlib.sha256(cfg.scenario_hash().encode())
    for arr in (params.aod, params.aoa, params.delay_bp, params.delay_ms, params.gain_bp, params.gain_ms):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:24]


# ---------------------------------------------------------------------------
# weighted-sum CRB programme


def _sym_basis(k):
    out = []
    for i in range(k):
        for j in range(i, k):
            E = np.zeros((k, k))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    return np.array(out)


class WcrbProgram:
    """Weighted-sum CRB SDP over ``V = U Lam U^H`` (or ``U diag(rho) U^H``).

    The position FIMs of every Hermitian basis direction of ``Lam`` are
    computed once, so each alpha only costs one interior-point solve.
    """

    def __init__(self, model: FimModel, codebook, diagonal: bool = False, fused: bool = False):
        self.model = model
        self.cfg = model.cfg
        self.U = np.asarray(codebook.matrix if isinstance(codebook, Codebook) else codebook)
        self.r = self.U.shape[1]
        # unit-norm columns keep the solver variables comparable in size
        self.norms = np.linalg.norm(self.U, axis=0)
        self.Un = self.U / self.norms[None, :]
        self.diagonal = diagonal
        self.fused = fused
        E = herm_basis(self.r)
        if diagonal:
            E = E[:self.r]
        self.basis = E
        self.power = self.cfg.power_per_subcarrier
        Fb = model.position_basis_bp(self.Un, E)
        Fm = model.position_basis_ms(self.Un, E)
        if fused:
            sb, sm = model.sel_bp, model.sel_ms
            Ff = (np.einsum("ai,pab,bj->pij", sb, Fb, sb, optimize=True)
                  + np.einsum("ai,pab,bj->pij", sm, Fm, sm, optimize=True))
            self.F = {"bp": Ff, "ms": Ff}
            self.keep = {"bp": model.fused_bp_keep, "ms": model.fused_ms_keep}
        else:
            self.F = {"bp": Fb, "ms": Fm}
            self.keep = {"bp": model.bp_keep, "ms": model.ms_keep}
        G = self.Un.conj().T @ self.Un
        self.gram = G
        self.trace_coef = np.real(np.einsum("ij,pji->p", G, E))
        # reference FIM for equilibration: isotropic transmission
        Vref = np.eye(self.cfg.n_tx_bs) * self.power / self.cfg.n_tx_bs
        self.ref = {}
        self.ref_crb = {}
        for key in ("bp", "ms"):
            I = self._fim_of(key, Vref)
            d = np.sqrt(np.abs(np.diag(I)))
            d[d == 0] = 1.0
            self.ref[key] = 1.0 / d
            try:
                self.ref_crb[key] = crb_from_efim(efim_blocks(I, self.keep[key]))
            except IllPosedBoundError:
                self.ref_crb[key] = 1.0

    def _fim_of(self, key, V):
        m = self.model
        if self.fused:
            return m.position_fim_fused(V)
        return m.position_fim_bp(V) if key == "bp" else m.position_fim_ms(V)

    def covariance(self, x) -> np.ndarray:
        """Covariance (W) from normalised Lam parameters."""
        Lam = np.diag(x).astype(complex) if self.diagonal else herm_from_params(x, self.r)
        return hermitize(self.power * self.Un @ Lam @ self.Un.conj().T)

    def lam(self, x) -> np.ndarray:
        """``Lam`` (W) with respect to the raw codebook, so ``V = U Lam U^H``."""
        Lam = np.diag(x).astype(complex) if self.diagonal else herm_from_params(x, self.r)
        s = 1.0 / self.norms
        return self.power * s[:, None] * Lam * s[None, :]

    def rho(self, x) -> np.ndarray:
        """Powers with respect to the raw codebook columns (diagonal programmes)."""
        return self.power * np.asarray(x) / self.norms ** 2

    def solve(self, alpha: float, tol: float = SDP_TOL):
        _check_alpha(alpha)
        weights = {"bp": alpha, "ms": 1.0 - alpha}
        scale = sum(w * self.ref_crb[k] for k, w in weights.items())
        prob = SdpProblem()
        nb = len(self.basis)
        xi = prob.add_variables(nb, "lam")
        if self.diagonal:
            prob.add_nonneg(xi)
        else:
            prob.add_lmi(np.zeros((2 * self.r, 2 * self.r)), xi,
                         np.array([real_embed(Ep) for Ep in self.basis]))
        prob.add_le(xi, self.trace_coef, 1.0)
        for key, w in weights.items():
            if w <= 0:
                continue
            d = self.ref[key]
            keep = self.keep[key]
            Fs = self.power * self.F[key] * d[None, :, None] * d[None, None, :]
            n = Fs.shape[1]
            k = len(keep)
            Ek = np.zeros((n, k))
            Ek[keep, np.arange(k)] = d[keep] / np.sqrt(scale)
            Sb = _sym_basis(k)
            si = prob.add_variables(len(Sb), f"S_{key}")
            diag_mask = np.array([np.trace(E) for E in Sb])
            prob.add_objective(si, w * diag_mask)
            F0 = np.zeros((n + k, n + k))
            F0[:n, n:] = Ek
            F0[n:, :n] = Ek.T
            coeffs = np.zeros((nb + len(Sb), n + k, n + k))
            coeffs[:nb, :n, :n] = Fs
            coeffs[nb:, n:, n:] = Sb
            prob.add_lmi(F0, np.concatenate([xi, si]), coeffs)
        vals, rep = solve_sdp(prob, tol=tol)
        if rep.status != "optimal":
            raise SolverError(f"weighted-sum CRB SDP ended with status {rep.status}", rep)
        x = vals["lam"]
        if self.diagonal:
            x = np.maximum(x, 0.0)
        # the budget is active at the optimum; remove solver-level slack
        t = float(self.trace_coef @ x)
        if t > 0:
            x = x / t
        return x, rep

    def objective(self, alpha, V) -> float:
        return alpha * self.crb("bp", V) + (1.0 - alpha) * self.crb("ms", V)

    def crb(self, key, V) -> float:
        return crb_from_efim(efim_blocks(self._fim_of(key, V), self.keep[key]))


# ---------------------------------------------------------------------------
# scenario cache (guides and precomputed programmes)

_CACHE: dict = {}
_LOCK = threading.Lock()


def _cached(key, build):
    with _LOCK:
        if key in _CACHE:
            return _CACHE[key]
    value = build()
    with _LOCK:
        return _CACHE.setdefault(key, value)


def clear_cache():
    with _LOCK:
        _CACHE.clear()


def fim_model(params, cfg) -> FimModel:
    return _cached(("model", _params_key(cfg, params)), lambda: FimModel(cfg, params))


def wcrb_program(params, cfg, diagonal=False, fused=False, codebook=None, tag="digital") -> WcrbProgram:
    def build():
        cb = build_codebook(params, cfg) if codebook is None else codebook
        return WcrbProgram(fim_model(params, cfg), cb, diagonal=diagonal, fused=fused)
    return _cached(("wcrb", _params_key(cfg, params), diagonal, fused, tag), build)


@dataclass(frozen=True)
class Guides:
    """Single-objective optima: index 1 favours BP (alpha = 1), index 0 favours MS."""

    lam_bp: np.ndarray      # normalised Lam (or rho) at alpha = 1
    lam_ms: np.ndarray      # normalised Lam (or rho) at alpha = 0
    V_bp: np.ndarray
    V_ms: np.ndarray


def guides(params, cfg, diagonal=False, fused=False, codebook=None, tag="digital") -> Guides:
    def build():
        prog = wcrb_program(params, cfg, diagonal, fused, codebook, tag)
        x1, _ = prog.solve(1.0)
        x0, _ = prog.solve(0.0)
        return Guides(x1, x0, prog.covariance(x1), prog.covariance(x0))
    return _cached(("guides", _params_key(cfg, params), diagonal, fused, tag), build)


def _guide_omega(prog, V, L):
    """Guide beamformers of ``V`` written as ``Un @ Om`` (normalised units).

    The guide is the eigen-decomposed beamformer set that the weighted-sum CRB
    design returns; since ``V`` lies in ``col(U)`` the coefficients are exact.
    """
    F = recover_beamformers(V, L).F[:, :prog.r] / np.sqrt(prog.power)
    Om, *_ = np.linalg.lstsq(prog.Un, F, rcond=None)
    return Om


# ---------------------------------------------------------------------------
# designs


def design_fdb_wcrb(alpha, params, cfg, fused=False):
    """Full-dimensional weighted-sum CRB design; returns ``(V, BeamformerSet)``."""
    prog = wcrb_program(params, cfg, fused=fused)
    x, rep = prog.solve(alpha)
    V = prog.covariance(x)
    bf = recover_beamformers(V, cfg.n_slots, "fdb-wcrb", alpha)
    return V, bf


def design_cpa_wcrb(alpha, params, cfg, fused=False, codebook=None, tag="digital"):
    """Codebook power allocation under the weighted-sum CRB; returns ``(rho, V, BeamformerSet)``."""
    prog = wcrb_program(params, cfg, diagonal=True, fused=fused, codebook=codebook, tag=tag)
    x, rep = prog.solve(alpha)
    rho = prog.rho(x)
    V = prog.covariance(x)
    F = _pad(prog.U * np.sqrt(rho)[None, :], cfg.n_slots)
    return rho, V, BeamformerSet(F, "cpa-wcrb", alpha)


def _active_trust_region(blocks, targets):
    """Run the lifted solve on blocks whose target is nonzero.

    A block with a zero target has a zero optimal vector (its stationarity
    condition is homogeneous), so it is dropped from the programme; the
    homogenisation count in the budget follows the active blocks.
    """
    size = [np.linalg.norm(t) for t in targets]
    tiny = 1e-9 * max(max(size), 1e-300)
    active = [l for l, n in enumerate(size) if n > tiny]
    res = solve_trust_region([blocks[l] for l in active], 1.0 + len(active))
    dim = blocks[0][0].shape[0] - 1
    vectors = [np.zeros(dim, dtype=complex) for _ in blocks]
    ratios = np.zeros(len(blocks))
    lifted = []
    for _ in blocks:
        Om = np.zeros((dim + 1, dim + 1), dtype=complex)
        Om[0, 0] = 1.0
        lifted.append(Om)
    for j, l in enumerate(active):
        vectors[l] = res.vectors[j]
        ratios[l] = res.ratios[j]
        lifted[l] = res.lifted[j]
    res.vectors = vectors
    res.ratios = ratios
    res.lifted = lifted
    return res


def design_fdb_wbf(alpha, params, cfg, fused=False):
    """Weighted-sum beamformer mismatch via lifted trust-region blocks."""
    _check_alpha(alpha)
    g = guides(params, cfg, fused=fused)
    prog = wcrb_program(params, cfg, fused=fused)
    U, r = prog.Un, prog.r
    Ob = _guide_omega(prog, g.V_bp, cfg.n_slots)
    Om = _guide_omega(prog, g.V_ms, cfg.n_slots)
    G = prog.gram
    X = G @ (alpha * Ob + (1.0 - alpha) * Om)      # U^H A^H B in normalised units
    blocks = []
    for l in range(r):
        C = np.zeros((r + 1, r + 1), dtype=complex)
        C[0, 1:] = -X[:, l].conj()
        C[1:, 0] = -X[:, l]
        C[1:, 1:] = G
        D = np.zeros_like(C)
        D[0, 0] = 1.0
        D[1:, 1:] = G
        blocks.append((C, D))
    res = _active_trust_region(blocks, list(X.T))
    Omega = np.column_stack(res.vectors)
    F = _pad(np.sqrt(prog.power) * U @ Omega, cfg.n_slots)
    bf = BeamformerSet(F, "fdb-wbf", alpha)
    return bf, res


def design_cpa_wbf(alpha, params, cfg, fused=False):
    """Power-allocation variant of the beamformer mismatch design (2x2 lifted blocks)."""
    _check_alpha(alpha)
    g = guides(params, cfg, diagonal=True, fused=fused)
    prog = wcrb_program(params, cfg, diagonal=True, fused=fused)
    U, r = prog.Un, prog.r
    varpi = np.real(np.diag(prog.gram))
    target = alpha * np.sqrt(np.maximum(g.lam_bp, 0)) + (1.0 - alpha) * np.sqrt(np.maximum(g.lam_ms, 0))
    theta = varpi * target
    blocks = []
    for l in range(r):
        C = np.array([[0.0, -np.conj(theta[l])], [-theta[l], varpi[l]]], dtype=complex)
        D = np.array([[1.0, 0.0], [0.0, varpi[l]]], dtype=complex)
        blocks.append((C, D))
    res = _active_trust_region(blocks, list(theta[:, None]))
    ups = np.array([v[0] for v in res.vectors])
    F = _pad(np.sqrt(prog.power) * U * ups[None, :], cfg.n_slots)
    return BeamformerSet(F, "cpa-wbf", alpha), res


def _wcm_solve(prog: WcrbProgram, target_V, diagonal, tol=SDP_TOL):
    """``min ||U Lam U^H - Psi||_F^2`` with ``Lam >= 0`` and full power (normalised)."""
    U, r = prog.Un, prog.r
    G = prog.gram
    Psi = np.asarray(target_V) / prog.power
    T = U.conj().T @ Psi @ U
    if diagonal:
        Q = np.abs(G) ** 2
        lin = -2.0 * np.real(np.diag(T))
        E = None
    else:
        E = herm_basis(r)
        GE = np.einsum("ij,pjk->pik", G, E)
        Q = np.real(np.einsum("pij,qji->pq", GE, GE))
        lin = -2.0 * np.real(np.einsum("ij,pji->p", T, E))
    prob = SdpProblem()
    xi = prob.add_variables(len(lin), "lam")
    prob.add_objective(xi, lin)
    prob.set_quadratic(xi, 2.0 * 0.5 * (Q + Q.T))
    if diagonal:
        prob.add_nonneg(xi)
    else:
        prob.add_lmi(np.zeros((2 * r, 2 * r)), xi, np.array([real_embed(Ep) for Ep in E]))
    coef = np.real(np.diag(G)) if diagonal else prog.trace_coef
    prob.add_eq(xi, coef, 1.0)
    vals, rep = solve_sdp(prob, tol=tol)
    if rep.status != "optimal":
        raise SolverError(f"covariance mismatch programme ended with status {rep.status}", rep)
    x = vals["lam"]
    # the interior-point optimum is only sqrt(tol)-accurate when the mismatch
    # vanishes; if the equality-constrained minimiser is cone-feasible it is exact
    H = 2.0 * 0.5 * (Q + Q.T)
    n = len(lin)
    K = np.block([[H, coef[:, None]], [coef[None, :], np.zeros((1, 1))]])
    sol, *_ = np.linalg.lstsq(K, np.r_[-lin, 1.0], rcond=None)
    xe = sol[:n]
    if diagonal:
        feasible = np.all(xe >= -1e-12)
    else:
        feasible = np.linalg.eigvalsh(herm_from_params(xe, r))[0] >= -1e-12
    f = lambda v: 0.5 * v @ H @ v + lin @ v
    if feasible and f(xe) <= f(x):
        x = np.maximum(xe, 0.0) if diagonal else xe
    return x, rep


def design_fdb_wcm(alpha, params, cfg, fused=False):
    """Weighted-sum covariance mismatch over ``Lam``; returns ``(V, BeamformerSet)``."""
    _check_alpha(alpha)
    g = guides(params, cfg, fused=fused)
    prog = wcrb_program(params, cfg, fused=fused)
    x, rep = _wcm_solve(prog, alpha * g.V_bp + (1.0 - alpha) * g.V_ms, diagonal=False)
    V = prog.covariance(x)
    return V, recover_beamformers(V, cfg.n_slots, "fdb-wcm", alpha)


def design_cpa_wcm(alpha, params, cfg, fused=False, codebook=None, tag="digital"):
    """Power allocation under the covariance mismatch; returns ``(rho, BeamformerSet)``."""
    _check_alpha(alpha)
    g = guides(params, cfg, diagonal=True, fused=fused, codebook=codebook, tag=tag)
    prog = wcrb_program(params, cfg, diagonal=True, fused=fused, codebook=codebook, tag=tag)
    x, rep = _wcm_solve(prog, alpha * g.V_bp + (1.0 - alpha) * g.V_ms, diagonal=True)
    x = np.maximum(x, 0.0)
    rho = prog.rho(x)
    F = _pad(prog.U * np.sqrt(rho)[None, :], cfg.n_slots)
    return rho, BeamformerSet(F, "cpa-wcm", alpha)


def design(method: str, alpha: float, params=None, cfg: ScenarioConfig | None = None, fused=False) -> BeamformerSet:
    """Dispatch one digital design by name and return its beamformers."""
    cfg = ScenarioConfig() if cfg is None else cfg
    params = derive_channel_params(cfg) if params is None else params
    if method == "fdb-wcrb":
        return design_fdb_wcrb(alpha, params, cfg, fused)[1]
    if method == "cpa-wcrb":
        return design_cpa_wcrb(alpha, params, cfg, fused)[2]
    if method == "fdb-wbf":
        return design_fdb_wbf(alpha, params, cfg, fused)[0]
    if method == "cpa-wbf":
        return design_cpa_wbf(alpha, params, cfg, fused)[0]
    if method == "fdb-wcm":
        return design_fdb_wcm(alpha, params, cfg, fused)[1]
    if method == "cpa-wcm":
        return design_cpa_wcm(alpha, params, cfg, fused)[1]
    raise ValueError(f"unknown digital method {method!r}")
