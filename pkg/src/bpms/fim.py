"""Fisher information, geometric Jacobians and position-domain CRBs.

Every derivative of a channel matrix with respect to a channel-domain
parameter is a short sum of rank-one *atoms* ``c(m) * u @ v^H`` where the
subcarrier dependence ``c(m) = gamma * (-j 2 pi m df)^q * exp(-j 2 pi m df tau)``
is scalar.  The Slepian-Bangs sum over subcarriers therefore collapses to a
Gram matrix of the ``c`` sequences, and the FIM becomes a linear function of
the transmit covariance that is cheap to evaluate for many covariances.

Parameter layouts
-----------------
bistatic channel   ``[theta(K+1), psi(K+1), tau_bp(K+1), Re beta_bp(K+1), Im beta_bp(K+1)]``
monostatic channel ``[theta(K+1), tau_ms(K+1), Re beta_ms(K+1), Im beta_ms(K+1)]``
bistatic position  ``[p_U(2), dphi, p_1..p_K(2K), dt, Re beta_bp, Im beta_bp]``
monostatic position ``[p_U(2), p_1..p_K(2K), Re beta_ms, Im beta_ms]``
fused position     ``[p_1..p_K, p_U, dphi, dt, Re beta_bp, Im beta_bp, Re beta_ms, Im beta_ms]``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionError, IllPosedBoundError
from .scenario import (
    SPEED_OF_LIGHT,
    ChannelParamSet,
    ScenarioConfig,
    bearing,
    bearing_gradient,
    check_geometry,
    derive_channel_params,
    steering_derivative,
    steering_vector,
)

MAX_CONDITION = 1e12


def _labels(prefix, K):
    return tuple(f"{prefix}{k}" for k in range(K + 1))


def bp_channel_labels(K):
    return (_labels("theta", K) + _labels("psi", K) + _labels("tau_bp", K)
            + _labels("re_beta_bp", K) + _labels("im_beta_bp", K))


def ms_channel_labels(K):
    return _labels("theta", K) + _labels("tau_ms", K) + _labels("re_beta_ms", K) + _labels("im_beta_ms", K)


def _pos_labels(K):
    return tuple(f"p{k}_{ax}" for k in range(1, K + 1) for ax in "xy")


def bp_position_labels(K):
    return (("pU_x", "pU_y", "dphi") + _pos_labels(K) + ("dt",)
            + _labels("re_beta_bp", K) + _labels("im_beta_bp", K))


def ms_position_labels(K):
    return ("pU_x", "pU_y") + _pos_labels(K) + _labels("re_beta_ms", K) + _labels("im_beta_ms", K)


def fused_position_labels(K):
    return (_pos_labels(K) + ("pU_x", "pU_y", "dphi", "dt")
            + _labels("re_beta_bp", K) + _labels("im_beta_bp", K)
            + _labels("re_beta_ms", K) + _labels("im_beta_ms", K))


@dataclass(frozen=True)
class ChannelFim:
    matrix: np.ndarray
    ordering: tuple


@dataclass(frozen=True)
class PositionFim:
    matrix: np.ndarray
    ordering: tuple


@dataclass(frozen=True)
class EfimBlocks:
    y_block: np.ndarray
    g_block: np.ndarray
    z_block: np.ndarray
    z_condition: float

    @property
    def schur(self) -> np.ndarray:
        """Equivalent FIM ``Y - G Z^{-1} G^T`` of the retained parameters."""
        Zs, d = _equilibrate(self.z_block)
        sol = _sym_solve(Zs, d[:, None] * self.g_block.T) * d[:, None]
        S = self.y_block - self.g_block @ sol
        return 0.5 * (S + S.T)


# ---------------------------------------------------------------------------
# atoms and subcarrier kernels


@dataclass(frozen=True)
class _Atoms:
    u: np.ndarray        # (n_rx, A) receive-side vectors
    v: np.ndarray        # (n_tx, A) transmit-side vectors
    gamma: np.ndarray    # (A,) complex prefactors
    delay: np.ndarray    # (A,) delays (s)
    order: np.ndarray    # (A,) power of the -j 2 pi m df factor (0 or 1)
    param: np.ndarray    # (A,) parameter index each atom contributes to
    n_params: int


def _bp_atoms(params: ChannelParamSet, cfg: ScenarioConfig) -> _Atoms:
    K1 = params.n_paths
    nb, nu = cfg.n_tx_bs, cfg.n_rx_ue
    u, v, gam, tau, order, par = [], [], [], [], [], []
    for k in range(K1):
        a_u = steering_vector(params.aoa[k], nu, cfg.array_reference)
        da_u = steering_derivative(params.aoa[k], nu, cfg.array_reference)
        a_b = steering_vector(params.aod[k], nb, cfg.array_reference)
        da_b = steering_derivative(params.aod[k], nb, cfg.array_reference)
        beta = params.gain_bp[k]
        tk = params.delay_bp[k]
        rows = [
            (a_u, da_b, beta, 0, k),                # theta_k
            (da_u, a_b, beta, 0, K1 + k),           # psi_k
            (a_u, a_b, beta, 1, 2 * K1 + k),        # tau_k
            (a_u, a_b, 1.0, 0, 3 * K1 + k),         # Re beta_k
            (a_u, a_b, 1j, 0, 4 * K1 + k),          # Im beta_k
        ]
        for uu, vv, g, q, p in rows:
            u.append(uu); v.append(vv); gam.append(g); tau.append(tk); order.append(q); par.append(p)
    return _Atoms(np.array(u).T, np.array(v).T, np.array(gam, dtype=complex), np.array(tau),
                  np.array(order), np.array(par), 5 * K1)


def _ms_atoms(params: ChannelParamSet, cfg: ScenarioConfig) -> _Atoms:
    K1 = params.n_paths
    nb = cfg.n_tx_bs
    u, v, gam, tau, order, par = [], [], [], [], [], []
    for k in range(K1):
        a_b = steering_vector(params.aod[k], nb, cfg.array_reference)
        da_b = steering_derivative(params.aod[k], nb, cfg.array_reference)
        beta = params.gain_ms[k]
        tk = params.delay_ms[k]
        rows = [
            (da_b, a_b, beta, 0, k),                # theta_k, receive side
            (a_b, da_b, beta, 0, k),                # theta_k, transmit side
            (a_b, a_b, beta, 1, K1 + k),            # tau_k
            (a_b, a_b, 1.0, 0, 2 * K1 + k),         # Re beta_k
            (a_b, a_b, 1j, 0, 3 * K1 + k),          # Im beta_k
        ]
        for uu, vv, g, q, p in rows:
            u.append(uu); v.append(vv); gam.append(g); tau.append(tk); order.append(q); par.append(p)
    return _Atoms(np.array(u).T, np.array(v).T, np.array(gam, dtype=complex), np.array(tau),
                  np.array(order), np.array(par), 4 * K1)


def _kernel(atoms: _Atoms, cfg: ScenarioConfig) -> np.ndarray:
    """``K[a, b] = (2N/sigma^2) (u_a^H u_b) sum_m c_b(m) conj(c_a(m))``."""
    m = np.arange(1, cfg.n_subcarriers + 1)
    w = 2 * np.pi * m * cfg.subcarrier_spacing
    seq = (atoms.gamma[:, None] * (-1j * w[None, :]) ** atoms.order[:, None]
           * np.exp(-1j * w[None, :] * atoms.delay[:, None]))
    S = seq.conj() @ seq.T                      # S[a, b] = sum_m conj(c_a) c_b
    G = atoms.u.conj().T @ atoms.u              # G[a, b] = u_a^H u_b
    return (2.0 * cfg.n_observations / cfg.noise_power) * G * S


def _incidence(atoms: _Atoms) -> np.ndarray:
    P = np.zeros((len(atoms.param), atoms.n_params))
    P[np.arange(len(atoms.param)), atoms.param] = 1.0
    return P


class LinkFim:
    """Channel-domain FIM of one link as a linear function of the covariance."""

    def __init__(self, atoms: _Atoms, cfg: ScenarioConfig, ordering: tuple):
        self.atoms = atoms
        self.kernel = _kernel(atoms, cfg)
        self.incidence = _incidence(atoms)
        self.ordering = ordering
        self.n_tx = atoms.v.shape[0]

    @property
    def size(self):
        return self.atoms.n_params

    def _reduce(self, A):
        F = self.incidence.T @ A @ self.incidence
        return 0.5 * (F + F.T)

    def __call__(self, cov) -> np.ndarray:
        cov = np.asarray(cov)
        if cov.shape != (self.n_tx, self.n_tx):
            raise DimensionError(f"covariance must be {self.n_tx}x{self.n_tx}, got {cov.shape}")
        v = self.atoms.v
        Q = (v.conj().T @ cov @ v).T            # Q[a, b] = v_b^H V v_a
        return self._reduce(np.real(self.kernel * Q))

    def basis(self, codebook, herm_basis) -> np.ndarray:
        """FIMs of ``U E_p U^H`` for every basis matrix ``E_p``, shape (P, n, n)."""
        w = np.asarray(codebook).conj().T @ self.atoms.v            # (r, A)
        Q = np.einsum("pij,ib,ja->pab", herm_basis, w.conj(), w, optimize=True)
        A = np.real(self.kernel[None] * Q)
        F = np.einsum("ai,pab,bj->pij", self.incidence, A, self.incidence, optimize=True)
        return 0.5 * (F + F.transpose(0, 2, 1))


# ---------------------------------------------------------------------------
# geometry maps and Jacobians


def geometry_map_bp(eta, cfg: ScenarioConfig) -> np.ndarray:
    """Bistatic channel parameters (without wrapping) from position parameters."""
    K = cfg.n_targets
    eta = np.asarray(eta, dtype=float)
    p_b = np.asarray(cfg.p_bs)
    p_u = eta[0:2]
    dphi = eta[2]
    p_t = eta[3:3 + 2 * K].reshape(K, 2)
    dt = eta[3 + 2 * K]
    gains = eta[4 + 2 * K:]
    theta = bearing(np.vstack([p_u, p_t]) - p_b)
    psi = bearing(np.vstack([p_b, p_t]) - p_u) - dphi
    d_bt = np.linalg.norm(p_t - p_b, axis=1)
    d_tu = np.linalg.norm(p_t - p_u, axis=1)
    tau = np.concatenate([[np.linalg.norm(p_u - p_b)], d_bt + d_tu]) / SPEED_OF_LIGHT + dt
    return np.concatenate([theta, psi, tau, gains])


def geometry_map_ms(eta, cfg: ScenarioConfig) -> np.ndarray:
    K = cfg.n_targets
    eta = np.asarray(eta, dtype=float)
    p_b = np.asarray(cfg.p_bs)
    pts = eta[:2 * K + 2].reshape(K + 1, 2)
    theta = bearing(pts - p_b)
    tau = 2 * np.linalg.norm(pts - p_b, axis=1) / SPEED_OF_LIGHT
    return np.concatenate([theta, tau, eta[2 * K + 2:]])


def position_vector_bp(params: ChannelParamSet, cfg: ScenarioConfig) -> np.ndarray:
    g = params.gain_bp
    return np.concatenate([cfg.p_ue, [cfg.ue_orientation], np.ravel(cfg.p_targets),
                           [cfg.clock_bias], g.real, g.imag])


def position_vector_ms(params: ChannelParamSet, cfg: ScenarioConfig) -> np.ndarray:
    g = params.gain_ms
    return np.concatenate([cfg.p_ue, np.ravel(cfg.p_targets), g.real, g.imag])


def jacobian_bp(params: ChannelParamSet, cfg: ScenarioConfig) -> np.ndarray:
    """``d xi_bp / d eta_bp``, shape ``(5K+5, 4K+6)``."""
    check_geometry(cfg)
    K = cfg.n_targets
    K1 = K + 1
    c = SPEED_OF_LIGHT
    p_b = np.asarray(cfg.p_bs)
    p_u = np.asarray(cfg.p_ue)
    p_t = np.asarray(cfg.p_targets, dtype=float).reshape(K, 2)
    J = np.zeros((5 * K1, 4 * K + 6))
    PU, DPHI, DT = slice(0, 2), 2, 3 + 2 * K

    def pk(k):  # columns of target k (1-based)
        return slice(3 + 2 * (k - 1), 5 + 2 * (k - 1))

    # theta
    J[0, PU] = bearing_gradient(p_u - p_b)
    for k in range(1, K1):
        J[k, pk(k)] = bearing_gradient(p_t[k - 1] - p_b)
    # psi
    J[K1, PU] = -bearing_gradient(p_b - p_u)
    J[K1:2 * K1, DPHI] = -1.0
    for k in range(1, K1):
        g = bearing_gradient(p_t[k - 1] - p_u)
        J[K1 + k, pk(k)] = g
        J[K1 + k, PU] = -g
    # tau
    r0 = p_u - p_b
    J[2 * K1, PU] = r0 / (c * np.linalg.norm(r0))
    for k in range(1, K1):
        d1 = p_t[k - 1] - p_b
        d2 = p_t[k - 1] - p_u
        J[2 * K1 + k, pk(k)] = (d1 / np.linalg.norm(d1) + d2 / np.linalg.norm(d2)) / c
        J[2 * K1 + k, PU] = -d2 / (c * np.linalg.norm(d2))
    J[2 * K1:3 * K1, DT] = 1.0
    # gains pass straight through
    J[3 * K1:, DT + 1:] = np.eye(2 * K1)
    return J


def jacobian_ms(params: ChannelParamSet, cfg: ScenarioConfig) -> np.ndarray:
    """``d xi_ms / d eta_ms``, shape ``(4K+4, 4K+4)``; block diagonal per scatterer."""
    check_geometry(cfg)
    K1 = cfg.n_targets + 1
    c = SPEED_OF_LIGHT
    p_b = np.asarray(cfg.p_bs)
    pts = cfg.positions()
    J = np.zeros((4 * K1, 4 * K1))
    for k in range(K1):
        d = pts[k] - p_b
        cols = slice(2 * k, 2 * k + 2)
        J[k, cols] = bearing_gradient(d)
        J[K1 + k, cols] = 2 * d / (c * np.linalg.norm(d))
    J[2 * K1:, 2 * K1:] = np.eye(2 * K1)
    return J


def fused_selectors(K: int):
    """Column maps placing bistatic / monostatic position parameters in the fused vector."""
    K1 = K + 1
    n = 6 * K + 8
    bp = np.zeros((4 * K + 6, n))
    ms = np.zeros((4 * K + 4, n))
    pu = [2 * K, 2 * K + 1]
    bp[0, pu[0]] = bp[1, pu[1]] = 1.0
    bp[2, 2 * K + 2] = 1.0                         # dphi
    for i in range(2 * K):
        bp[3 + i, i] = 1.0                         # target coordinates
    bp[3 + 2 * K, 2 * K + 3] = 1.0                 # dt
    for i in range(2 * K1):
        bp[4 + 2 * K + i, 2 * K + 4 + i] = 1.0     # bistatic gains
    ms[0, pu[0]] = ms[1, pu[1]] = 1.0
    for i in range(2 * K):
        ms[2 + i, i] = 1.0
    for i in range(2 * K1):
        ms[2 * K1 + i, 4 * K + 6 + i] = 1.0        # monostatic gains
    return bp, ms


# ---------------------------------------------------------------------------
# linear algebra helpers


def _equilibrate(A):
    d = np.sqrt(np.abs(np.diag(A)))
    d[d == 0] = 1.0
    d = 1.0 / d
    return d[:, None] * A * d[None, :], d


def scaled_condition(A) -> float:
    """Condition number after symmetric Jacobi scaling (inf if not PD)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 1.0
    As, _ = _equilibrate(A)
    w = np.linalg.eigvalsh(0.5 * (As + As.T))
    if w[0] <= 0:
        return float("inf")
    return float(w[-1] / w[0])


def _sym_solve(A, B):
    # LAPACK sysv: Bunch-Kaufman LDL^T with symmetric pivoting
    return scipy.linalg.solve(A, B, assume_a="sym")


def position_fim(channel_fim, jacobian) -> PositionFim:
    """Congruence ``J^T I J`` with symmetry restored by averaging."""
    I = channel_fim.matrix if isinstance(channel_fim, ChannelFim) else np.asarray(channel_fim)
    J = np.asarray(jacobian)
    if I.shape[0] != I.shape[1] or J.shape[0] != I.shape[0]:
        raise DimensionError(f"FIM {I.shape} and Jacobian {J.shape} are not conformable")
    P = J.T @ I @ J
    ordering = tuple(f"eta{i}" for i in range(J.shape[1]))
    return PositionFim(0.5 * (P + P.T), ordering)


def efim_blocks(pf, head) -> EfimBlocks:
    """Partition a position FIM into retained (``head``) and nuisance blocks.

    ``head`` is either the number of leading parameters to keep, or an
    explicit sequence of indices.
    """
    M = pf.matrix if isinstance(pf, PositionFim) else np.asarray(pf)
    n = M.shape[0]
    keep = np.arange(head) if np.isscalar(head) else np.asarray(head, dtype=int)
    rest = np.setdiff1d(np.arange(n), keep)
    Z = M[np.ix_(rest, rest)]
    cond = scaled_condition(Z)
    if not cond < MAX_CONDITION:
        raise IllPosedBoundError(
            f"nuisance block is singular or ill-conditioned (scaled condition {cond:.3g})", cond
        )
    return EfimBlocks(M[np.ix_(keep, keep)], M[np.ix_(keep, rest)], Z, cond)


def crb_from_efim(blocks: EfimBlocks) -> float:
    S = blocks.schur
    cond = scaled_condition(S)
    if not cond < MAX_CONDITION:
        raise IllPosedBoundError(
            f"equivalent FIM is singular or ill-conditioned (scaled condition {cond:.3g})", cond
        )
    Ss, d = _equilibrate(S)
    inv_diag = np.diag(_sym_solve(Ss, np.eye(len(S)))) * d * d
    return float(np.sum(inv_diag))


def crb_direct(pf, keep) -> float:
    """Trace of the ``keep`` block of the full inverse (no Schur complement)."""
    M = pf.matrix if isinstance(pf, PositionFim) else np.asarray(pf)
    cond = scaled_condition(M)
    if not cond < MAX_CONDITION ** 1.5:
        raise IllPosedBoundError(f"FIM is singular (scaled condition {cond:.3g})", cond)
    Ms, d = _equilibrate(M)
    keep = np.arange(keep) if np.isscalar(keep) else np.asarray(keep, dtype=int)
    E = np.zeros((len(M), len(keep)))
    E[keep, np.arange(len(keep))] = 1.0
    X = _sym_solve(Ms, E * d[:, None]) * d[:, None]
    return float(np.trace(X[keep]))


# ---------------------------------------------------------------------------
# scenario-level model


class FimModel:
    """Precomputed FIM machinery for one scenario (both links, both domains)."""

    def __init__(self, cfg: ScenarioConfig, params: ChannelParamSet | None = None):
        self.cfg = cfg
        self.params = derive_channel_params(cfg) if params is None else params
        K = cfg.n_targets
        self.K = K
        self.bp = LinkFim(_bp_atoms(self.params, cfg), cfg, bp_channel_labels(K))
        self.ms = LinkFim(_ms_atoms(self.params, cfg), cfg, ms_channel_labels(K))
        self.jac_bp = jacobian_bp(self.params, cfg)
        self.jac_ms = jacobian_ms(self.params, cfg)
        self.sel_bp, self.sel_ms = fused_selectors(K)

    # retained-parameter index sets
    @property
    def bp_keep(self):
        return np.arange(2)

    @property
    def ms_keep(self):
        return np.arange(2 * self.K + 2)

    @property
    def fused_bp_keep(self):
        return np.array([2 * self.K, 2 * self.K + 1])

    @property
    def fused_ms_keep(self):
        return np.arange(2 * self.K + 2)

    def position_fim_bp(self, cov) -> np.ndarray:
        return _congruence(self.jac_bp, self.bp(cov))

    def position_fim_ms(self, cov) -> np.ndarray:
        return _congruence(self.jac_ms, self.ms(cov))

    def position_fim_fused(self, cov) -> np.ndarray:
        return _fuse(self.sel_bp, self.sel_ms, self.position_fim_bp(cov), self.position_fim_ms(cov))

    def crb_bp(self, cov) -> float:
        return crb_from_efim(efim_blocks(self.position_fim_bp(cov), self.bp_keep))

    def crb_ms(self, cov) -> float:
        return crb_from_efim(efim_blocks(self.position_fim_ms(cov), self.ms_keep))

    def crb_fused(self, cov):
        pf = self.position_fim_fused(cov)
        return (crb_from_efim(efim_blocks(pf, self.fused_bp_keep)),
                crb_from_efim(efim_blocks(pf, self.fused_ms_keep)))

    def position_basis_bp(self, codebook, basis) -> np.ndarray:
        F = self.bp.basis(codebook, basis)
        return np.einsum("ai,pab,bj->pij", self.jac_bp, F, self.jac_bp, optimize=True)

    def position_basis_ms(self, codebook, basis) -> np.ndarray:
        F = self.ms.basis(codebook, basis)
        return np.einsum("ai,pab,bj->pij", self.jac_ms, F, self.jac_ms, optimize=True)


def _congruence(J, I):
    P = J.T @ I @ J
    return 0.5 * (P + P.T)


def _fuse(sel_bp, sel_ms, pf_bp, pf_ms):
    F = sel_bp.T @ pf_bp @ sel_bp + sel_ms.T @ pf_ms @ sel_ms
    return 0.5 * (F + F.T)


# ---------------------------------------------------------------------------
# functional API


def _check_cov(cfg, cov):
    cov = np.asarray(cov)
    if cov.shape != (cfg.n_tx_bs, cfg.n_tx_bs):
        raise DimensionError(f"covariance must be {cfg.n_tx_bs}x{cfg.n_tx_bs}, got {cov.shape}")
    return cov


def channel_fim_bp(params: ChannelParamSet, cfg: ScenarioConfig, cov) -> ChannelFim:
    cov = _check_cov(cfg, cov)
    link = LinkFim(_bp_atoms(params, cfg), cfg, bp_channel_labels(cfg.n_targets))
    return ChannelFim(link(cov), link.ordering)


def channel_fim_ms(params: ChannelParamSet, cfg: ScenarioConfig, cov) -> ChannelFim:
    cov = _check_cov(cfg, cov)
    link = LinkFim(_ms_atoms(params, cfg), cfg, ms_channel_labels(cfg.n_targets))
    return ChannelFim(link(cov), link.ordering)


def position_fim_bp(params, cfg, cov) -> PositionFim:
    pf = position_fim(channel_fim_bp(params, cfg, cov), jacobian_bp(params, cfg))
    return PositionFim(pf.matrix, bp_position_labels(cfg.n_targets))


def position_fim_ms(params, cfg, cov) -> PositionFim:
    pf = position_fim(channel_fim_ms(params, cfg, cov), jacobian_ms(params, cfg))
    return PositionFim(pf.matrix, ms_position_labels(cfg.n_targets))


def crb_bp(params: ChannelParamSet, cfg: ScenarioConfig, cov) -> float:
    """Bistatic positioning CRB of the UE position (m^2)."""
    return crb_from_efim(efim_blocks(position_fim_bp(params, cfg, cov), 2))


def crb_ms(params: ChannelParamSet, cfg: ScenarioConfig, cov) -> float:
    """Monostatic sensing CRB summed over the UE and all targets (m^2)."""
    return crb_from_efim(efim_blocks(position_fim_ms(params, cfg, cov), 2 * cfg.n_targets + 2))


def fused_fim(params: ChannelParamSet, cfg: ScenarioConfig, cov):
    """Fused position FIM and the pair ``(CRB_BP, CRB_MS)`` extracted from it.

    Built as the congruence of ``blockdiag(I_bp, I_ms)`` with the stacked
    Jacobian; shared position parameters receive summed information.
    """
    K = cfg.n_targets
    sel_bp, sel_ms = fused_selectors(K)
    F = _fuse(sel_bp, sel_ms, position_fim_bp(params, cfg, cov).matrix,
              position_fim_ms(params, cfg, cov).matrix)
    pf = PositionFim(F, fused_position_labels(K))
    bp = crb_from_efim(efim_blocks(pf, [2 * K, 2 * K + 1]))
    ms = crb_from_efim(efim_blocks(pf, 2 * K + 2))
    return pf, (bp, ms)
