"""Dense primal-dual interior-point solver for small cone programs.

Solves

    minimize    1/2 x^T P x + c^T x
    subject to  G x + s = h,   A x = b,   s in C

where ``C`` is a product of one nonnegative orthant (``dims["l"]`` rows)
and positive semidefinite cones (``dims["s"]`` lists their orders).  A PSD
block of order ``n`` occupies ``n*n`` rows holding the row-major
vectorisation of a symmetric matrix, so inner products are traces.

The method is a Mehrotra predictor-corrector with Nesterov-Todd scaling.
Everything is dense; blocks are expected to be at most a few dozen wide.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import DimensionError

STEP = 0.99
EXPON = 3
STATUSES = ("optimal", "infeasible", "max_iter", "ill_conditioned")


@dataclass
class SolveReport:
    status: str
    primal_objective: float
    dual_objective: float
    kkt_residuals: dict
    iterations: int
    certificate: object = None
    history: list = field(default_factory=list, repr=False)
    flags: tuple = ()
    multipliers: dict | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# cone bookkeeping


class _Cones:
    def __init__(self, dims):
        self.l = int(dims.get("l", 0))
        self.s = [int(n) for n in dims.get("s", [])]
        self.offsets = []
        off = self.l
        for n in self.s:
            self.offsets.append(off)
            off += n * n
        self.size = off
        self.degree = self.l + sum(self.s)

    def blocks(self, u):
        for off, n in zip(self.offsets, self.s):
            yield u[off:off + n * n].reshape(n, n)

    def identity(self):
        e = np.zeros(self.size)
        e[:self.l] = 1.0
        for off, n in zip(self.offsets, self.s):
            e[off:off + n * n] = np.eye(n).ravel()
        return e

    def min_eig(self, u):
        vals = []
        if self.l:
            vals.append(np.min(u[:self.l]))
        for X in self.blocks(u):
            vals.append(np.linalg.eigvalsh(0.5 * (X + X.T))[0])
        return min(vals)


class _Scaling:
    """Nesterov-Todd scaling ``W`` with ``W z = W^{-T} s = lambda``."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        l = cones.l
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            self.d = np.sqrt(s[:l] / z[:l])
        if l and not (np.all(s[:l] > 0) and np.all(z[:l] > 0) and np.all(self.d > 0) and np.all(np.isfinite(self.d))):
            raise np.linalg.LinAlgError("iterate left the interior of the orthant")
        self.lam_l = np.sqrt(s[:l] * z[:l])
        self.r, self.rinv, self.lam_s = [], [], []
        for S, Z in zip(cones.blocks(s), cones.blocks(z)):
            Ls = np.linalg.cholesky(0.5 * (S + S.T))
            Lz = np.linalg.cholesky(0.5 * (Z + Z.T))
            _, sv, Vt = np.linalg.svd(Lz.T @ Ls)
            r = Ls @ Vt.T / np.sqrt(sv)[None, :]
            self.r.append(r)
            self.rinv.append(np.linalg.inv(r))
            self.lam_s.append(sv)

    def lam(self):
        out = np.zeros(self.cones.size)
        out[:self.cones.l] = self.lam_l
        for off, n, lam in zip(self.cones.offsets, self.cones.s, self.lam_s):
            out[off:off + n * n] = np.diag(lam).ravel()
        return out

    def _apply(self, u, mode):
        c = self.cones
        out = np.empty_like(u)
        l = c.l
        if mode in ("W", "WT"):
            out[:l] = u[:l] * self.d
        else:
            out[:l] = u[:l] / self.d
        for k, (off, n) in enumerate(zip(c.offsets, c.s)):
            X = u[off:off + n * n].reshape(n, n)
            r, ri = self.r[k], self.rinv[k]
            if mode == "W":          # r^T X r
                Y = r.T @ X @ r
            elif mode == "WT":       # r X r^T
                Y = r @ X @ r.T
            elif mode == "Winv":     # r^{-T} X r^{-1}
                Y = ri.T @ X @ ri
            else:                    # W^{-T}: r^{-1} X r^{-T}
                Y = ri @ X @ ri.T
            out[off:off + n * n] = Y.ravel()
        return out

    def W(self, u):
        return self._apply(u, "W")

    def WT(self, u):
        return self._apply(u, "WT")

    def Winv(self, u):
        return self._apply(u, "Winv")

    def WinvT(self, u):
        return self._apply(u, "WinvT")

    def scaled_G(self, G, active):
        """``W^{-T} G`` using only the nonzero columns of each PSD block."""
        c = self.cones
        out = np.zeros_like(G)
        l = c.l
        if l:
            out[:l] = G[:l] / self.d[:, None]
        for k, (off, n) in enumerate(zip(c.offsets, c.s)):
            cols = active[k]
            if len(cols) == 0:
                continue
            blk = G[off:off + n * n, cols].T.reshape(len(cols), n, n)
            ri = self.rinv[k]
            Y = ri[None] @ blk @ ri.T[None]
            out[off:off + n * n, cols] = Y.reshape(len(cols), n * n).T
        return out


def _jordan_prod(cones, lam, u):
    """``lambda o u`` for a scaled point ``lambda`` (diagonal in each PSD block)."""
    out = np.empty_like(u)
    out[:cones.l] = lam[:cones.l] * u[:cones.l]
    for off, n in zip(cones.offsets, cones.s):
        L = np.diag(lam[off:off + n * n].reshape(n, n)).copy()
        U = u[off:off + n * n].reshape(n, n)
        out[off:off + n * n] = (0.5 * (L[:, None] + L[None, :]) * U).ravel()
    return out


def _sym_prod(cones, u, v):
    """Jordan product ``(uv + vu) / 2`` of two general cone vectors."""
    out = np.empty_like(u)
    out[:cones.l] = u[:cones.l] * v[:cones.l]
    for off, n in zip(cones.offsets, cones.s):
        U = u[off:off + n * n].reshape(n, n)
        V = v[off:off + n * n].reshape(n, n)
        out[off:off + n * n] = (0.5 * (U @ V + V @ U)).ravel()
    return out


def _jordan_div(cones, lam, w):
    """Solve ``lambda o x = w`` for ``x``."""
    out = np.empty_like(w)
    out[:cones.l] = w[:cones.l] / lam[:cones.l]
    for off, n in zip(cones.offsets, cones.s):
        L = np.diag(lam[off:off + n * n].reshape(n, n)).copy()
        Wm = w[off:off + n * n].reshape(n, n)
        out[off:off + n * n] = (2.0 * Wm / (L[:, None] + L[None, :])).ravel()
    return out


def _max_step(cones, lam, d):
    """Largest ``t`` with ``lambda + t d`` in the cone (inf when unbounded)."""
    worst = 0.0
    if cones.l:
        ratios = d[:cones.l] / lam[:cones.l]
        worst = min(worst, float(np.min(ratios)))
    for off, n in zip(cones.offsets, cones.s):
        L = np.diag(lam[off:off + n * n].reshape(n, n)).copy()
        D = d[off:off + n * n].reshape(n, n)
        isq = 1.0 / np.sqrt(L)
        M = isq[:, None] * (0.5 * (D + D.T)) * isq[None, :]
        worst = min(worst, float(np.linalg.eigvalsh(M)[0]))
    return np.inf if worst >= 0 else -1.0 / worst


def _shift_into_cone(cones, u):
    e = cones.identity()
    t = -cones.min_eig(u)
    if t >= -1e-8 * max(np.linalg.norm(u), 1.0):
        u = u + (1.0 + t) * e
    return u


# ---------------------------------------------------------------------------
# main solver


def solve_conic(c, G, h, dims, A=None, b=None, P=None, tol=1e-8, max_iter=200):
    """Solve a cone QP; returns ``(x, s, z, y, SolveReport)``.

    ``tol`` bounds the relative primal and dual residuals and the
    complementarity gap ``s^T z / max(1, |objective|)`` at termination.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    G = np.asarray(G, dtype=float).reshape(-1, n)
    h = np.asarray(h, dtype=float)
    cones = _Cones(dims)
    if G.shape[0] != cones.size or h.size != cones.size:
        raise DimensionError(f"G has {G.shape[0]} rows, h has {h.size}, cone size is {cones.size}")
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    if A.shape[0] != b.size:
        raise DimensionError("A and b are not conformable")
    P = np.zeros((n, n)) if P is None else np.asarray(P, dtype=float)
    if P.shape != (n, n):
        raise DimensionError("P must be n x n")
    p = A.shape[0]

    active = [np.flatnonzero(np.any(G[off:off + k * k] != 0, axis=0))
              for off, k in zip(cones.offsets, cones.s)]
    resx0 = max(1.0, np.linalg.norm(c))
    resy0 = max(1.0, np.linalg.norm(b))
    resz0 = max(1.0, np.linalg.norm(h))
    history = []

    def kkt_factor(H):
        K = np.zeros((n + p, n + p))
        K[:n, :n] = H
        K[:n, n:] = A.T
        K[n:, :n] = A
        lu = scipy.linalg.lu_factor(K, check_finite=True)
        if not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) == 0:
            raise np.linalg.LinAlgError("singular KKT matrix")
        return lu, K

    def kkt_solve(fac, rhs, refine=1):
        lu, K = fac
        sol = scipy.linalg.lu_solve(lu, rhs)
        for _ in range(refine):
            sol = sol + scipy.linalg.lu_solve(lu, rhs - K @ sol)
        return sol

    def report(status, x, y, s, z, it, cert=None, flags=()):
        pc, dc, res = _objectives(x, y, s, z)
        return SolveReport(status, pc, dc, res, it, cert, history, tuple(flags))

    def _objectives(x, y, s, z):
        pcost = 0.5 * x @ P @ x + c @ x
        dcost = pcost + y @ (A @ x - b) + z @ (G @ x - h)
        rx = P @ x + A.T @ y + G.T @ z + c
        ry = A @ x - b
        rz = G @ x + s - h
        pres = max(np.linalg.norm(ry) / resy0 if p else 0.0, np.linalg.norm(rz) / resz0)
        dres = np.linalg.norm(rx) / resx0
        gap = float(s @ z) / max(1.0, min(abs(pcost), abs(dcost)))
        return float(pcost), float(dcost), {"primal": float(pres), "dual": float(dres), "gap": float(gap)}

    if cones.size == 0:
        # equality-constrained QP: one KKT solve
        K = np.block([[P, A.T], [A, np.zeros((p, p))]])
        sol, *_ = np.linalg.lstsq(K, np.concatenate([-c, b]), rcond=None)
        x, y = sol[:n], sol[n:]
        empty = np.zeros(0)
        _, _, res = _objectives(x, y, empty, empty)
        status = "optimal" if res["primal"] < tol and res["dual"] < tol else "infeasible"
        return x, empty, empty, y, report(status, x, y, empty, empty, 0)

    # initial point: two KKT solves with W = I
    try:
        lu = kkt_factor(P + G.T @ G)
    except (np.linalg.LinAlgError, ValueError):
        x0 = np.zeros(n)
        return x0, h.copy(), cones.identity(), np.zeros(p), SolveReport(
            "ill_conditioned", np.nan, np.nan, {"primal": np.inf, "dual": np.inf, "gap": np.inf}, 0)
    sol = kkt_solve(lu, np.concatenate([G.T @ h, b]))
    x = sol[:n]
    s = h - G @ x
    sol = kkt_solve(lu, np.concatenate([-c, np.zeros(p)]))
    y = sol[n:]
    z = G @ sol[:n]
    s = _shift_into_cone(cones, s)
    z = _shift_into_cone(cones, z)
    e = cones.identity()

    for it in range(max_iter + 1):
        pcost, dcost, res = _objectives(x, y, s, z)
        history.append((pcost, dcost, res["primal"], res["dual"], res["gap"]))
        if res["primal"] < tol and res["dual"] < tol and res["gap"] < tol:
            return x, s, z, y, report("optimal", x, y, s, z, it)

        # infeasibility heuristics
        hz = h @ z + b @ y
        if hz < 0:
            pinf = np.linalg.norm(A.T @ y + G.T @ z) / (-hz)
            if pinf < tol:
                den = -hz
                return x, s, z, y, report("infeasible", x, y, s, z, it,
                                          {"kind": "primal", "y": y / den, "z": z / den})
        cx = c @ x
        if cx < 0:
            dinf = max(np.linalg.norm(P @ x), np.linalg.norm(A @ x), np.linalg.norm(G @ x + s)) / (-cx)
            if dinf < tol:
                return x, s, z, y, report("infeasible", x, y, s, z, it,
                                          {"kind": "dual", "x": x / (-cx), "s": s / (-cx)})
        if it == max_iter:
            break

        try:
            W = _Scaling(cones, s, z)
            lam = W.lam()
            Gs = W.scaled_G(G, active)
            lu = kkt_factor(P + Gs.T @ Gs)
        except (np.linalg.LinAlgError, ValueError):
            return x, s, z, y, report("ill_conditioned", x, y, s, z, it)

        rx = -(P @ x + A.T @ y + G.T @ z + c)
        ry = b - A @ x
        rz = h - G @ x - s
        mu = float(s @ z) / cones.degree
        lamsq = _jordan_prod(cones, lam, lam)

        def newton(bs):
            t = _jordan_div(cones, lam, bs)
            q = W.WinvT(rz) - t
            sol = kkt_solve(lu, np.concatenate([rx + Gs.T @ q, ry]))
            dx, dy = sol[:n], sol[n:]
            dzt = Gs @ dx - q
            dst = t - dzt
            return dx, dy, dzt, dst

        # predictor
        dx, dy, dzt, dst = newton(-lamsq)
        a_aff = min(1.0, _max_step(cones, lam, dst), _max_step(cones, lam, dzt))
        sigma = (1.0 - a_aff) ** EXPON
        # corrector
        bs = -lamsq - _sym_prod(cones, dst, dzt) + sigma * mu * e
        dx, dy, dzt, dst = newton(bs)
        a_max = min(_max_step(cones, lam, dst), _max_step(cones, lam, dzt))
        step = min(1.0, STEP * a_max)
        if not np.all(np.isfinite(dx)) or step < 1e-14:
            return x, s, z, y, report("ill_conditioned", x, y, s, z, it)

        x = x + step * dx
        y = y + step * dy
        s = s + step * W.WT(dst)
        z = z + step * W.Winv(dzt)
        # keep PSD blocks exactly symmetric
        for off, k in zip(cones.offsets, cones.s):
            S = s[off:off + k * k].reshape(k, k)
            s[off:off + k * k] = (0.5 * (S + S.T)).ravel()
            Z = z[off:off + k * k].reshape(k, k)
            z[off:off + k * k] = (0.5 * (Z + Z.T)).ravel()

    return x, s, z, y, report("max_iter", x, y, s, z, max_iter)


# ---------------------------------------------------------------------------
# modelling layer


class SdpProblem:
    """Linear (or convex quadratic) objective over real variables with LMIs.

    Variables are real scalars grouped under names.  An LMI is stored as
    ``F0 + sum_i x_i F_i >= 0`` with symmetric ``F``; only the coefficients of
    variables that actually appear are kept.
    """

    MAX_BLOCK = 64

    def __init__(self):
        self.n = 0
        self.names = {}
        self.c = []
        self.quad = None
        self.lmis = []        # (F0, idx, coeffs)
        self.eqs = []         # (idx, coeffs, rhs)
        self.les = []         # (idx, coeffs, rhs)

    def add_variables(self, count: int, name: str) -> np.ndarray:
        idx = np.arange(self.n, self.n + count)
        self.names[name] = idx
        self.n += count
        self.c.extend([0.0] * count)
        return idx

    def add_objective(self, idx, coeffs):
        for i, v in zip(np.atleast_1d(idx), np.atleast_1d(coeffs)):
            self.c[int(i)] += float(v)

    def set_quadratic(self, idx, Q):
        """Add ``1/2 x[idx]^T Q x[idx]`` to the objective (``Q`` PSD)."""
        self.quad = (np.asarray(idx), np.asarray(Q, dtype=float))

    def add_lmi(self, F0, idx, coeffs):
        F0 = np.asarray(F0, dtype=float)
        coeffs = np.asarray(coeffs, dtype=float)
        k = F0.shape[0]
        if F0.shape != (k, k) or coeffs.shape[1:] != (k, k) or coeffs.shape[0] != len(idx):
            raise DimensionError("LMI coefficient shapes are inconsistent")
        self.lmis.append((0.5 * (F0 + F0.T), np.asarray(idx), 0.5 * (coeffs + coeffs.transpose(0, 2, 1))))

    def add_eq(self, idx, coeffs, rhs):
        self.eqs.append((np.asarray(idx), np.asarray(coeffs, dtype=float), float(rhs)))

    def add_le(self, idx, coeffs, rhs):
        self.les.append((np.asarray(idx), np.asarray(coeffs, dtype=float), float(rhs)))

    def add_nonneg(self, idx):
        for i in np.atleast_1d(idx):
            self.add_le([i], [-1.0], 0.0)

    @property
    def dims(self):
        return {"l": len(self.les), "s": [F0.shape[0] for F0, _, _ in self.lmis]}

    def to_cone(self):
        n = self.n
        c = np.array(self.c)
        dims = self.dims
        rows = dims["l"] + sum(k * k for k in dims["s"])
        G = np.zeros((rows, n))
        h = np.zeros(rows)
        for r, (idx, coeffs, rhs) in enumerate(self.les):
            G[r, idx] = coeffs
            h[r] = rhs
        off = dims["l"]
        for F0, idx, coeffs in self.lmis:
            k = F0.shape[0]
            G[off:off + k * k, idx] = -coeffs.reshape(len(idx), k * k).T
            h[off:off + k * k] = F0.ravel()
            off += k * k
        A = np.zeros((len(self.eqs), n))
        b = np.zeros(len(self.eqs))
        for r, (idx, coeffs, rhs) in enumerate(self.eqs):
            A[r, idx] = coeffs
            b[r] = rhs
        P = None
        if self.quad is not None:
            qi, Q = self.quad
            P = np.zeros((n, n))
            P[np.ix_(qi, qi)] = Q
        return c, G, h, dims, A, b, P


def solve_sdp(problem: SdpProblem, tol: float = 1e-8, max_iter: int = 200):
    """Solve an :class:`SdpProblem`; returns ``(values by name, SolveReport)``."""
    if not 1e-10 <= tol <= 1e-4:
        raise ValueError("tol must lie in [1e-10, 1e-4]")
    for F0, _, _ in problem.lmis:
        if F0.shape[0] > problem.MAX_BLOCK:
            raise DimensionError(f"LMI block of order {F0.shape[0]} exceeds {problem.MAX_BLOCK}")
    c, G, h, dims, A, b, P = problem.to_cone()
    x, s, z, y, rep = solve_conic(c, G, h, dims, A, b, P, tol=tol, max_iter=max_iter)
    values = {name: x[idx] for name, idx in problem.names.items()}
    values["_x"] = x
    values["_z"] = z
    return values, rep


# ---------------------------------------------------------------------------
# lifted trust-region subproblems

RANK_ONE_TOL = 1e-6


@dataclass
class TrustRegionResult:
    vectors: list
    lifted: list
    ratios: np.ndarray
    objective: float
    lifted_objective: float
    report: SolveReport


def solve_trust_region(blocks, budget, tol: float = 1e-9, rank_tol: float = RANK_ONE_TOL):
    """Solve ``min sum_l tr(C_l Om_l)`` over lifted Hermitian blocks.

    Each block is a pair ``(C_l, D_l)`` of Hermitian ``(n_l+1)``-square
    matrices; the constraints are ``Om_l >= 0``, ``[Om_l]_{11} = 1`` and the
    coupled budget ``sum_l tr(D_l Om_l) = budget``.  Every optimal block is
    expected to be rank one, ``Om_l = [1; w_l][1; w_l]^H``; the de-homogenised
    vectors ``w_l`` are returned.
    """
    from .hermitian import herm_basis, herm_from_params, real_embed
    from .errors import RankOneError, SolverError

    head = sum(float(np.real(D[0][0])) for _, D in blocks)
    separable = all(not np.any(np.asarray(D)[0, 1:]) and np.linalg.eigvalsh(np.asarray(D)[1:, 1:])[0] > 0
                    for _, D in blocks)
    if separable and budget - head <= 1e-12 * max(abs(budget), 1.0):
        # no budget left beyond the homogenising coordinates: w = 0 is the only candidate
        if budget - head < -1e-12 * max(abs(budget), 1.0):
            raise SolverError("trust-region budget is infeasible")
        vectors, lifted = [], []
        for C, _ in blocks:
            m = np.asarray(C).shape[0]
            Om = np.zeros((m, m), dtype=complex)
            Om[0, 0] = 1.0
            vectors.append(np.zeros(m - 1, dtype=complex))
            lifted.append(Om)
        obj = sum(float(np.real(np.asarray(C)[0, 0])) for C, _ in blocks)
        rep = SolveReport("optimal", obj, obj, {"primal": 0.0, "dual": 0.0, "gap": 0.0}, 0)
        return TrustRegionResult(vectors, lifted, np.zeros(len(blocks)), obj, obj, rep)

    prob = SdpProblem()
    bidx, bases = [], []
    budget_idx, budget_coef = [], []
    for l, (C, D) in enumerate(blocks):
        C = np.asarray(C, dtype=complex)
        D = np.asarray(D, dtype=complex)
        m = C.shape[0]
        if C.shape != (m, m) or D.shape != (m, m):
            raise DimensionError(f"block {l}: C and D must be square of equal size")
        E = herm_basis(m)
        idx = prob.add_variables(m * m, f"block{l}")
        prob.add_objective(idx, np.real(np.einsum("ij,pji->p", C, E)))
        prob.add_lmi(np.zeros((2 * m, 2 * m)), idx, np.array([real_embed(Ep) for Ep in E]))
        prob.add_eq([idx[0]], [1.0], 1.0)
        budget_idx.append(idx)
        budget_coef.append(np.real(np.einsum("ij,pji->p", D, E)))
        bidx.append(idx)
        bases.append(m)
    prob.add_eq(np.concatenate(budget_idx), np.concatenate(budget_coef), budget)
    vals, rep = solve_sdp(prob, tol=tol)
    if rep.status == "infeasible":
        raise SolverError("trust-region budget is infeasible", rep)
    if rep.status != "optimal":
        raise SolverError(f"lifted trust-region SDP ended with status {rep.status}", rep)

    vectors, lifted, ratios = [], [], []
    obj = 0.0
    for l, ((C, D), idx, m) in enumerate(zip(blocks, bidx, bases)):
        Om = herm_from_params(vals["_x"][idx], m)
        w, Q = np.linalg.eigh(Om)
        lam1 = w[-1]
        ratio = (max(w[-2], 0.0) / lam1) if m > 1 and lam1 > 0 else 0.0
        ratios.append(ratio)
        v = Q[:, -1] * np.sqrt(max(lam1, 0.0))
        if abs(v[0]) == 0:
            raise RankOneError(f"block {l}: leading coordinate vanished", np.inf, rep)
        v = v / v[0]
        vectors.append(v[1:])
        lifted.append(Om)
        obj += float(np.real(v.conj() @ np.asarray(C) @ v))
    ratios = np.array(ratios)
    if np.any(ratios >= rank_tol):
        bad = int(np.argmax(ratios))
        raise RankOneError(
            f"block {bad} is not rank one (lambda2/lambda1 = {ratios[bad]:.3g})", float(ratios[bad]), rep
        )
    if separable:
        polished = _secular_polish(blocks, budget - head)
        if polished is not None:
            w_new, obj_new = polished
            if obj_new <= obj + 1e-9 * max(1.0, abs(obj)):
                vectors, obj = w_new, obj_new
    return TrustRegionResult(vectors, lifted, ratios, obj, rep.primal_objective, rep)


def _secular_polish(blocks, slack):
    """Exact KKT point of the de-homogenised problem via its secular equation.

    With ``D = diag(d00, D_w)`` the stationary vectors are
    ``w_l(mu) = -(C_w + mu D_w)^{-1} c_l``, and the multiplier solves
    ``sum_l w_l^H D_w w_l = slack`` on the branch where every ``C_w + mu D_w``
    is positive semidefinite, which makes the point a global minimiser.
    Returns ``None`` in the hard case (no root on that branch).
    """
    parts = []
    mu_min = -np.inf
    for C, D in blocks:
        C = np.asarray(C, dtype=complex)
        D = np.asarray(D, dtype=complex)
        Cw, Dw, c0 = C[1:, 1:], D[1:, 1:], C[1:, 0]
        lam = scipy.linalg.eigh(0.5 * (Cw + Cw.conj().T), 0.5 * (Dw + Dw.conj().T), eigvals_only=True)
        mu_min = max(mu_min, -lam[0])
        parts.append((C, Cw, Dw, c0))

    def vecs(mu):
        return [-np.linalg.solve(Cw + mu * Dw, c0) for _, Cw, Dw, c0 in parts]

    def phi(mu):
        return sum(float(np.real(w.conj() @ Dw @ w)) for w, (_, _, Dw, _) in zip(vecs(mu), parts)) - slack

    gap = 1e-9 * max(1.0, abs(mu_min))
    lo = mu_min + gap
    try:
        if not phi(lo) > 0:
            return None
        hi = mu_min + 1.0
        while phi(hi) > 0:
            hi = mu_min + 2.0 * (hi - mu_min)
            if hi - mu_min > 1e30:
                return None
        mu = scipy.optimize.brentq(phi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    except (np.linalg.LinAlgError, ValueError):
        return None
    ws = vecs(mu)
    obj = 0.0
    for w, (C, _, _, _) in zip(ws, parts):
        v = np.r_[1.0, w]
        obj += float(np.real(v.conj() @ C @ v))
    return ws, obj
