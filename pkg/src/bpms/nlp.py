"""Smooth nonlinear programming: SQP with a damped BFGS model, and a
unit-modulus gradient projection used for analog codewords.

Constraint convention for :func:`sqp_minimize` (as in the SQP appendix of the
source): equalities ``g(x) = 0`` and inequalities ``h(x) <= 0``.  Every
callable returns ``(value, derivative)``: ``f -> (float, (n,))``,
``g, h -> ((m,), (m, n))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .conic import SolveReport, solve_conic


@dataclass
class SqpOptions:
    tol: float = 1e-8            # KKT residual (scaled, inf-norm)
    rel_tol: float = 1e-12       # relative objective decrease between accepted steps
    feas_tol: float = 1e-9
    max_iter: int = 200
    penalty: float | None = None  # default 10 * ||grad f(x0)||_inf
    armijo: float = 1e-4
    min_step: float = 1e-12
    qp_tol: float = 1e-9
    wrap: object = None          # optional map applied to accepted iterates


def _empty(n):
    return np.zeros(0), np.zeros((0, n))


def _eval(fun, x, n):
    if fun is None:
        return _empty(n)
    v, J = fun(x)
    return np.atleast_1d(np.asarray(v, dtype=float)), np.asarray(J, dtype=float).reshape(-1, n)


def _equality_qp(B, q, A, b):
    """``min q^T p + 1/2 p^T B p`` s.t. ``A p = b`` by one KKT solve."""
    n, m = B.shape[0], A.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = B
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-q, b])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    p, y = sol[:n], sol[n:]
    ok = np.linalg.norm(A @ p - b) <= 1e-8 * max(1.0, np.linalg.norm(b))
    return p, y, np.zeros(0), ok


def _qp(B, gf, gv, gJ, hv, hJ, tol):
    """Quadratic subproblem.  Returns ``(p, lam, mu, ok)``."""
    if hv.size == 0 and gv.size == 0:
        try:
            p = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(B), gf)
        except (np.linalg.LinAlgError, ValueError):
            return -gf, np.zeros(0), np.zeros(0), True
        return p, np.zeros(0), np.zeros(0), bool(np.all(np.isfinite(p)))
    if hv.size == 0:
        return _equality_qp(B, gf, gJ, -gv)
    x, s, z, y, rep = solve_conic(gf, hJ, -hv, {"l": hv.size}, gJ, -gv, B, tol=tol)
    return x, y, z, rep.status == "optimal"


def _elastic_qp(B, gf, gv, gJ, hv, hJ, weight, tol):
    """Relaxed subproblem: linearised constraints may be violated at a price.

    Variables ``[p, v, w, t]`` with ``gJ p + g = v - w`` and ``hJ p + h <= t``,
    ``v, w, t >= 0``; the l1 price ``weight`` matches the merit penalty.
    """
    n, m, k = B.shape[0], gv.size, hv.size
    N = n + 2 * m + k
    P = np.zeros((N, N))
    P[:n, :n] = B
    c = np.concatenate([gf, weight * np.ones(2 * m + k)])
    A = np.hstack([gJ, -np.eye(m), np.eye(m), np.zeros((m, k))]) if m else np.zeros((0, N))
    b = -gv
    rows = []
    if k:
        rows.append(np.hstack([hJ, np.zeros((k, 2 * m)), -np.eye(k)]))
    rows.append(np.hstack([np.zeros((2 * m + k, n)), -np.eye(2 * m + k)]))
    G = np.vstack(rows)
    h = np.concatenate([-hv, np.zeros(2 * m + k)])
    x, s, z, y, rep = solve_conic(c, G, h, {"l": G.shape[0]}, A, b, P, tol=tol)
    return x[:n], y[:m] if m else np.zeros(0), z[:k], rep.status == "optimal"


def _violation(gv, hv):
    return float(np.sum(np.abs(gv)) + np.sum(np.maximum(hv, 0.0)))


def _bfgs_update(B, s, y):
    """Powell-damped BFGS update (keeps ``B`` positive definite)."""
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300:
        return B
    sy = float(s @ y)
    if sy < 0.2 * sBs:
        th = 0.8 * sBs / (sBs - sy)
        y = th * y + (1.0 - th) * Bs
        sy = float(s @ y)
    Bn = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
    if sy <= 0 or not np.all(np.isfinite(Bn)):
        return B
    return 0.5 * (Bn + Bn.T)


def sqp_minimize(f, g_eqs=None, h_ineqs=None, x0=None, opts: SqpOptions | None = None):
    """Line-search SQP on the l1 merit ``f + pen * (sum|g| + sum max(0, h))``.

    Returns ``(x, SolveReport)``.  ``report.multipliers`` holds ``"eq"`` and
    ``"ineq"`` (the latter nonnegative at a KKT point).  Flags: ``"elastic"``
    when a relaxed subproblem had to be used, ``"line_search"`` when no
    acceptable step was found (best iterate returned).
    """
    opts = opts or SqpOptions()
    x = np.array(x0, dtype=float).ravel()
    n = x.size
    if not np.all(np.isfinite(x)):
        raise ValueError("x0 must be finite")
    fx, gf = f(x)
    gf = np.asarray(gf, dtype=float)
    gv, gJ = _eval(g_eqs, x, n)
    hv, hJ = _eval(h_ineqs, x, n)
    lam = np.zeros(gv.size)
    mu = np.zeros(hv.size)
    pen = opts.penalty if opts.penalty is not None else 10.0 * max(np.max(np.abs(gf), initial=0.0), 1e-12)
    B = np.eye(n)
    flags = set()
    history = []
    status = "max_iter"
    best_viol = _violation(gv, hv)
    stall = 0

    def kkt(gf, gJ, hJ, gv, hv, lam, mu):
        stat = gf + gJ.T @ lam + hJ.T @ mu
        scale = max(1.0, np.max(np.abs(gf), initial=0.0))
        return {
            "dual": float(np.max(np.abs(stat), initial=0.0) / scale),
            "primal": float(max(np.max(np.abs(gv), initial=0.0), np.max(hv, initial=0.0), 0.0)),
            "gap": float(np.max(np.abs(mu * hv), initial=0.0) / scale),
        }

    it = 0
    for it in range(opts.max_iter):
        p, lam_qp, mu_qp, ok = _qp(B, gf, gv, gJ, hv, hJ, opts.qp_tol)
        if not ok:
            flags.add("elastic")
            p, lam_qp, mu_qp, ok = _elastic_qp(B, gf, gv, gJ, hv, hJ, pen, opts.qp_tol)
            if not ok:
                status = "infeasible"
                break
        mu_qp = np.maximum(mu_qp, 0.0)
        # exact l1 penalty needs pen > max multiplier
        need = 1.1 * max(np.max(np.abs(lam_qp), initial=0.0), np.max(mu_qp, initial=0.0))
        if pen < need:
            pen = max(need, 2.0 * pen)
        viol = _violation(gv, hv)
        phi = fx + pen * viol
        deriv = float(gf @ p) - pen * viol
        if deriv >= 0 and np.linalg.norm(p) > 0:
            # not a merit descent direction; reset the model
            B = np.eye(n)
            p = -gf
            deriv = float(gf @ p) - pen * viol
        history.append((fx, phi, viol, pen))
        res = kkt(gf, gJ, hJ, gv, hv, lam_qp, mu_qp)
        if res["dual"] < opts.tol and res["primal"] < opts.feas_tol and res["gap"] < opts.tol:
            lam, mu = lam_qp, mu_qp
            status = "optimal"
            break

        beta = 1.0
        while True:
            xn = x + beta * p
            fn, gfn = f(xn)
            gvn, gJn = _eval(g_eqs, xn, n)
            hvn, hJn = _eval(h_ineqs, xn, n)
            phin = fn + pen * _violation(gvn, hvn)
            if np.isfinite(phin) and phin <= phi + opts.armijo * beta * min(deriv, 0.0):
                break
            beta *= 0.5
            if beta < opts.min_step:
                break
        if beta < opts.min_step:
            flags.add("line_search")
            lam, mu = lam_qp, mu_qp
            status = "optimal" if res["primal"] < opts.feas_tol and res["dual"] < np.sqrt(opts.tol) else "max_iter"
            break

        gfn = np.asarray(gfn, dtype=float)
        # Lagrangian gradient difference with the new multipliers
        s = xn - x
        yv = (gfn + gJn.T @ lam_qp + hJn.T @ mu_qp) - (gf + gJ.T @ lam_qp + hJ.T @ mu_qp)
        B = _bfgs_update(B, s, yv)
        if opts.wrap is not None:
            xn = opts.wrap(xn)
        rel = abs(fx - fn) / max(abs(fx), 1e-300)
        x, fx, gf, gv, gJ, hv, hJ = xn, fn, gfn, gvn, gJn, hvn, hJn
        lam, mu = lam_qp, mu_qp
        viol = _violation(gv, hv)
        if viol < 0.9 * best_viol or viol <= opts.feas_tol:
            best_viol = min(best_viol, viol)
            stall = 0
        else:
            stall += 1
            if stall >= 5:
                pen *= 2.0
                stall = 0
        if rel < opts.rel_tol and viol <= opts.feas_tol * max(1, gv.size + hv.size):
            status = "optimal"
            break

    res = kkt(gf, gJ, hJ, gv, hv, lam, mu)
    rep = SolveReport(status, float(fx), float(fx + lam @ gv + mu @ hv), res, it + 1,
                      history=history, flags=tuple(sorted(flags)),
                      multipliers={"eq": lam, "ineq": mu})
    return x, rep


# ---------------------------------------------------------------------------
# unit-modulus beampattern fitting


@dataclass
class UnitModulusFit:
    amplitude: float
    phases: np.ndarray
    objective: float
    iterations: int
    history: list

    @property
    def vector(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phases)


def gradient_projection_unit_modulus(target, weight_matrix, rel_tol: float = 1e-8,
                                     max_iter: int = 500, phases0=None) -> UnitModulusFit:
    """Fit ``A exp(j phi)`` to ``target`` in the ``||T (.)||`` seminorm.

    Alternates the closed-form amplitude ``A >= 0`` with a projected gradient
    step on the unit-modulus factor, step ``1 / lambda_max(T^H T)``; each
    half-step is a majorise-minimise update, so the objective never rises.
    """
    t = np.asarray(target, dtype=complex).ravel()
    T = np.asarray(weight_matrix, dtype=complex)
    R = T.conj().T @ T
    c = R @ t
    lip = float(np.linalg.eigvalsh(R)[-1])
    const = float(np.real(t.conj() @ c))

    def obj(A, u):
        return float(max(A * A * np.real(u.conj() @ R @ u) - 2 * A * np.real(u.conj() @ c) + const, 0.0))

    if np.linalg.norm(t) == 0:
        ph = np.zeros(t.size) if phases0 is None else np.mod(np.asarray(phases0, float), 2 * np.pi)
        return UnitModulusFit(0.0, ph, 0.0, 0, [0.0])

    u = np.exp(1j * (np.angle(t) if phases0 is None else np.asarray(phases0, float)))

    def amp(u):
        den = float(np.real(u.conj() @ R @ u))
        return max(float(np.real(u.conj() @ c)) / den, 0.0) if den > 0 else 0.0

    A = amp(u)
    val = obj(A, u)
    history = [val]
    best = (val, A, u)
    it = 0
    for it in range(1, max_iter + 1):
        if A > 0:
            z = lip * u - R @ u + c / A
            u = np.exp(1j * np.angle(z))
        A = amp(u)
        new = obj(A, u)
        history.append(new)
        if new < best[0]:
            best = (new, A, u)
        if val - new <= rel_tol * max(val, 1e-300):
            break
        val = new
    val, A, u = best
    return UnitModulusFit(A, np.mod(np.angle(u), 2 * np.pi), val, it, history)
