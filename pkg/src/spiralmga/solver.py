"""Gradient-based constrained local optimizer.

A dense SQP: damped-BFGS model of the Lagrangian Hessian, a primal-dual
interior-point solver for the QP subproblems (bounds handled as diagonal
barrier terms), an L1 exact-penalty line search, and an
augmented-Lagrangian restoration pass when the line search stalls.
Derivatives are estimated by finite differences; problems may supply a
fused/batched evaluator so a whole Jacobian costs one call.

Used by both pipeline steps: the per-leg problems of the global search
(10-15 variables) and the collocation refinement (hundreds to a few
thousand variables, dense subproblems).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, TextIO

import numpy as np

_EPS3 = float(np.finfo(float).eps) ** (1.0 / 3.0)   # ~6.06e-6


class NlpStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"


class EvaluationError(ArithmeticError):
    """A functional returned a non-finite value at an accepted iterate."""

    def __init__(self, message: str, x: np.ndarray):
        super().__init__(message)
        self.x = np.array(x)


@dataclass
class NlpProblem:
    """min f(x) s.t. ceq(x) = 0, cin(x) <= 0, lo <= x <= hi.

    ``fused``/``fused_batch`` are optional fast paths returning
    (f, ceq, cin) for one point / a matrix of points; when absent they are
    synthesized from the separate functionals.
    """
    n: int
    bounds: np.ndarray                      # (n, 2)
    objective: Callable[[np.ndarray], float] | None = None
    eq_constraints: Callable[[np.ndarray], np.ndarray] | None = None
    ineq_constraints: Callable[[np.ndarray], np.ndarray] | None = None
    fused: Callable | None = None
    fused_batch: Callable | None = None

    def make_fused(self):
        if self.fused is not None:
            return self.fused
        obj = self.objective
        ceq = self.eq_constraints
        cin = self.ineq_constraints

        def _fused(x):
            f = float(obj(x)) if obj is not None else 0.0
            e = np.atleast_1d(np.asarray(ceq(x), dtype=float)) if ceq else np.zeros(0)
            i = np.atleast_1d(np.asarray(cin(x), dtype=float)) if cin else np.zeros(0)
            return f, e, i
        return _fused


@dataclass
class NlpOptions:
    tol_feas: float = 1e-6
    tol_opt: float = 1e-6
    max_iter: int = 200
    fd_scheme: str = "central"              # "central" | "forward"
    log_stream: Optional[TextIO] = None
    max_ls: int = 30
    restore_threshold: float = 1e-3         # violation that triggers a
                                            # Gauss-Newton feasibility phase
    hessian: str = "bfgs"                   # "bfgs" | "fd" (finite-difference
                                            # Lagrangian Hessian each iteration)
    hessian_refresh: int = 1                # recompute the fd Hessian every k-th
                                            # iteration
    give_up_violation: float = math.inf     # abort as infeasible when the
                                            # initial restoration stalls above this
    f_stall_exit: int = 0                   # >0: stop after k feasible iterations
                                            # without objective progress


@dataclass
class NlpResult:
    x: np.ndarray
    f: float
    max_violation: float
    status: NlpStatus
    iterations: int
    stationarity: float = math.nan
    multipliers_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    multipliers_in: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status is NlpStatus.CONVERGED


def finite_diff_jacobian(functional, x: np.ndarray, scheme: str = "central",
                         batch: Callable | None = None) -> np.ndarray:
    """Finite-difference Jacobian of a vector (or scalar) functional.

    Steps are h_i = eps^(1/3) * max(1, |x_i|); the central scheme has
    O(h^2) truncation error.  ``batch``, when given, maps a (B, n) matrix
    to a (B, m) matrix and replaces the per-point loop.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = _EPS3 * np.maximum(1.0, np.abs(x))
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if batch is not None:
        if scheme == "central":
            pts = np.concatenate([x + np.diag(h), x - np.diag(h)], axis=0)
            vals = np.asarray(batch(pts), dtype=float)
            vals = vals.reshape(2 * n, -1)
            return (vals[:n] - vals[n:]).T / (2.0 * h)
        pts = np.concatenate([x[None, :], x + np.diag(h)], axis=0)
        vals = np.asarray(batch(pts), dtype=float).reshape(n + 1, -1)
        return (vals[1:] - vals[0]).T / h
    f0 = np.atleast_1d(np.asarray(functional(x), dtype=float))
    jac = np.empty((f0.size, n))
    for i in range(n):
        xp = x.copy()
        xp[i] += h[i]
        fp = np.atleast_1d(np.asarray(functional(xp), dtype=float))
        if scheme == "central":
            xm = x.copy()
            xm[i] -= h[i]
            fm = np.atleast_1d(np.asarray(functional(xm), dtype=float))
            jac[:, i] = (fp - fm) / (2.0 * h[i])
        else:
            jac[:, i] = (fp - f0) / h[i]
    return jac


# ---------------------------------------------------------------------------
# QP subproblem: min 1/2 d'Bd + g'd  s.t.  Aeq d = beq, Ain d <= bin,
# lo <= d <= hi   (primal-dual interior point, dense KKT solves)
# ---------------------------------------------------------------------------
def _solve_qp(B, g, Aeq, beq, Ain, bin_, lo, hi, max_iter=60):
    n = g.size
    meq = beq.size
    mi = bin_.size

    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)

    d = np.clip(np.zeros(n), lo + 1e-10, hi - 1e-10)
    width = np.where(has_lo & has_hi, hi - lo, 1.0)
    pad = np.maximum(1e-10, 0.01 * np.minimum(width, 1.0))
    d = np.where(has_lo, np.maximum(d, lo + pad), d)
    d = np.where(has_hi, np.minimum(d, hi - pad), d)

    y = np.zeros(meq)
    sl = np.where(has_lo, d - lo, 1.0)
    su = np.where(has_hi, hi - d, 1.0)
    zl = np.where(has_lo, 1.0, 0.0)
    zu = np.where(has_hi, 1.0, 0.0)
    sg = np.maximum(bin_ - Ain @ d, 0.1) + 0.1 if mi else np.zeros(0)
    zg = np.ones(mi)

    def mu_val():
        parts = float(sl[has_lo] @ zl[has_lo]) + float(su[has_hi] @ zu[has_hi])
        cnt = int(has_lo.sum() + has_hi.sum())
        if mi:
            parts += float(sg @ zg)
            cnt += mi
        return parts / max(cnt, 1), cnt

    best = None
    for _ in range(max_iter):
        mu, cnt = mu_val()
        r_d = B @ d + g + (Aeq.T @ y if meq else 0.0)
        if mi:
            r_d = r_d + Ain.T @ zg
        r_d = r_d - zl + zu
        r_p = (Aeq @ d - beq) if meq else np.zeros(0)
        r_g = (Ain @ d + sg - bin_) if mi else np.zeros(0)

        res = max(np.abs(r_d).max() if n else 0.0,
                  np.abs(r_p).max() if meq else 0.0,
                  np.abs(r_g).max() if mi else 0.0)
        if mu < 1e-12 and res < 1e-9 * (1.0 + np.abs(g).max()):
            break
        best = (d.copy(), y.copy(), zg.copy(), zl.copy(), zu.copy())

        sigma = 0.1 if mu > 1e-10 else 0.0
        tgt = sigma * mu

        diag = np.zeros(n)
        with np.errstate(over="ignore", divide="ignore"):
            diag[has_lo] += zl[has_lo] / sl[has_lo]
            diag[has_hi] += zu[has_hi] / su[has_hi]
        diag = np.minimum(diag, 1e14)
        H = B + np.diag(diag)
        rhs_d = -r_d.copy()
        rhs_d[has_lo] += (tgt - sl[has_lo] * zl[has_lo]) / sl[has_lo]
        rhs_d[has_hi] -= (tgt - su[has_hi] * zu[has_hi]) / su[has_hi]
        if mi:
            Dg = zg / sg
            H = H + Ain.T * Dg @ Ain
            rhs_d -= Ain.T @ ((tgt - sg * zg + zg * r_g) / sg)

        if meq:
            kkt = np.zeros((n + meq, n + meq))
            kkt[:n, :n] = H
            kkt[:n, n:] = Aeq.T
            kkt[n:, :n] = Aeq
            kkt[n:, n:] = -1e-10 * np.eye(meq)
            rhs = np.concatenate([rhs_d, -r_p])
        else:
            kkt = H
            rhs = rhs_d
        try:
            sol = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            return None
        dd = sol[:n]
        dy = sol[n:] if meq else np.zeros(0)

        dzl = np.zeros(n)
        dzu = np.zeros(n)
        dzl[has_lo] = (tgt - sl[has_lo] * zl[has_lo]
                       - zl[has_lo] * dd[has_lo]) / sl[has_lo]
        dzu[has_hi] = (tgt - su[has_hi] * zu[has_hi]
                       + zu[has_hi] * dd[has_hi]) / su[has_hi]
        if mi:
            dsg = -r_g - Ain @ dd
            dzg = (tgt - sg * zg - zg * dsg) / sg
        else:
            dsg = np.zeros(0)
            dzg = np.zeros(0)

        # fraction-to-boundary step lengths
        alpha = 1.0
        for vec, dvec, mask in ((sl, dd, has_lo), (su, -dd, has_hi)):
            neg = mask & (dvec < 0.0)
            if neg.any():
                alpha = min(alpha, float((-0.995 * vec[neg] / dvec[neg]).min()))
        for vec, dvec in ((zl[has_lo], dzl[has_lo]), (zu[has_hi], dzu[has_hi]),
                          (sg, dsg), (zg, dzg)):
            neg = dvec < 0.0
            if neg.any():
                alpha = min(alpha, float((-0.995 * vec[neg] / dvec[neg]).min()))
        alpha = max(min(alpha, 1.0), 1e-12)

        d = d + alpha * dd
        y = y + alpha * dy
        zl = np.maximum(zl + alpha * dzl, 0.0)
        zu = np.maximum(zu + alpha * dzu, 0.0)
        sl = np.where(has_lo, np.maximum(d - lo, 1e-14), 1.0)
        su = np.where(has_hi, np.maximum(hi - d, 1e-14), 1.0)
        if mi:
            sg = np.maximum(sg + alpha * dsg, 1e-14)
            zg = np.maximum(zg + alpha * dzg, 0.0)

    if not np.all(np.isfinite(d)):
        if best is None:
            return None
        d, y, zg, zl, zu = best
    return d, y, zg, zl, zu


def _solve_qp_elastic(B, g, Aeq, beq, Ain, bin_, lo, hi, gamma):
    """L1-elastic variant: constraint violations are penalized at rate
    ``gamma`` inside the QP, which is then always feasible and keeps the
    duals bounded by ``gamma`` even when the plain subproblem is
    inconsistent with the box."""
    n = g.size
    meq = beq.size
    mi = bin_.size
    ne = n + 2 * meq + mi
    Bx = np.zeros((ne, ne))
    Bx[:n, :n] = B
    eps = 1e-8 * max(1.0, float(np.abs(B).max()))
    for i in range(n, ne):
        Bx[i, i] = eps
    gx = np.concatenate([g, np.full(2 * meq + mi, gamma)])
    Aeq_x = np.zeros((meq, ne))
    if meq:
        Aeq_x[:, :n] = Aeq
        Aeq_x[:, n:n + meq] = -np.eye(meq)
        Aeq_x[:, n + meq:n + 2 * meq] = np.eye(meq)
    Ain_x = np.zeros((mi, ne))
    if mi:
        Ain_x[:, :n] = Ain
        Ain_x[:, n + 2 * meq:] = -np.eye(mi)
    lo_x = np.concatenate([lo, np.zeros(2 * meq + mi)])
    hi_x = np.concatenate([hi, np.full(2 * meq + mi, np.inf)])
    out = _solve_qp(Bx, gx, Aeq_x, beq, Ain_x, bin_, lo_x, hi_x)
    if out is None:
        return None
    d, y, zg, zl, zu = out
    return d[:n], y, zg, zl[:n], zu[:n]


def _violation_l1(ceq, cin):
    v = float(np.abs(ceq).sum()) if ceq.size else 0.0
    if cin.size:
        v += float(np.maximum(cin, 0.0).sum())
    return v


def _violation_inf(ceq, cin):
    v = float(np.abs(ceq).max()) if ceq.size else 0.0
    if cin.size:
        v = max(v, float(np.maximum(cin, 0.0).max()))
    return v


def solve(problem: NlpProblem, x0: np.ndarray,
          opts: NlpOptions | None = None) -> NlpResult:
    """Solve the NLP from ``x0`` (clipped into the bounds).

    Equal lower/upper bounds pin a variable, which is then eliminated from
    the subproblems.  An infeasible exit returns the least-infeasible
    iterate encountered.
    """
    opts = opts or NlpOptions()
    bounds = np.asarray(problem.bounds, dtype=float).reshape(problem.n, 2)
    lo_full, hi_full = bounds[:, 0].copy(), bounds[:, 1].copy()
    if np.any(lo_full > hi_full):
        raise ValueError("lower bound exceeds upper bound")

    pinned = lo_full == hi_full
    free = ~pinned
    nf = int(free.sum())
    x_full = np.clip(np.asarray(x0, dtype=float).copy(), lo_full, hi_full)

    fused_one = problem.make_fused()
    batch = problem.fused_batch

    def expand(xf):
        xx = x_full.copy()
        xx[free] = xf
        return xx

    def eval_one(xf):
        f, ceq, cin = fused_one(expand(xf))
        return float(f), np.atleast_1d(ceq).astype(float), np.atleast_1d(cin).astype(float)

    def eval_stack(X):
        # rows of X are reduced points; returns (B, 1+meq+mi) stacked values
        if batch is not None:
            XX = np.repeat(x_full[None, :], X.shape[0], axis=0)
            XX[:, free] = X
            F, CEQ, CIN = batch(XX)
            return np.column_stack([np.asarray(F, dtype=float).reshape(-1, 1),
                                    np.asarray(CEQ, dtype=float).reshape(X.shape[0], -1),
                                    np.asarray(CIN, dtype=float).reshape(X.shape[0], -1)])
        rows = []
        for xr in X:
            f, e, i = eval_one(xr)
            rows.append(np.concatenate([[f], e, i]))
        return np.asarray(rows)

    x = x_full[free]
    lo, hi = lo_full[free], hi_full[free]

    f, ceq, cin = eval_one(x)
    if not (math.isfinite(f) and np.all(np.isfinite(ceq)) and np.all(np.isfinite(cin))):
        raise EvaluationError("non-finite functional at the initial point",
                              expand(x))
    meq, mi = ceq.size, cin.size

    if nf == 0:
        viol = _violation_inf(ceq, cin)
        ok = viol <= opts.tol_feas
        return NlpResult(x=expand(x), f=f, max_violation=viol,
                         status=(NlpStatus.CONVERGED if ok
                                 else NlpStatus.INFEASIBLE),
                         iterations=0, stationarity=0.0)

    def stacked_one(xr):
        fv, e, i = eval_one(xr)
        return np.concatenate([[fv], e, i])

    def jacobians(xr):
        J = finite_diff_jacobian(stacked_one, xr, scheme=opts.fd_scheme,
                                 batch=eval_stack)
        return J[0], J[1:1 + meq], J[1 + meq:]

    _h4 = float(np.finfo(float).eps) ** 0.25

    def lagrangian_hessian(xr, w):
        """Dense FD Hessian of f + w_eq'ceq + w_in'cin, made positive
        definite by absolute-value eigenvalue regularization."""
        h = _h4 * np.maximum(1.0, np.abs(xr))
        pts = [xr]
        for i in range(nf):
            for sgn in (1.0, -1.0):
                p = xr.copy()
                p[i] += sgn * h[i]
                pts.append(p)
        pairs = [(i, j) for i in range(nf) for j in range(i + 1, nf)]
        for i, j in pairs:
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                p = xr.copy()
                p[i] += si * h[i]
                p[j] += sj * h[j]
                pts.append(p)
        vals = eval_stack(np.asarray(pts)) @ w
        if not np.all(np.isfinite(vals)):
            return None
        H = np.empty((nf, nf))
        l0 = vals[0]
        for i in range(nf):
            lp, lm = vals[1 + 2 * i], vals[2 + 2 * i]
            H[i, i] = (lp - 2.0 * l0 + lm) / h[i] ** 2
        base = 1 + 2 * nf
        for k, (i, j) in enumerate(pairs):
            vpp, vpm, vmp, vmm = vals[base + 4 * k: base + 4 * k + 4]
            H[i, j] = H[j, i] = (vpp - vpm - vmp + vmm) / (4.0 * h[i] * h[j])
        try:
            eigval, eigvec = np.linalg.eigh(H)
        except np.linalg.LinAlgError:
            return None
        floor = max(1e-6, 1e-8 * float(np.abs(eigval).max()))
        eigval = np.maximum(np.abs(eigval), floor)
        return (eigvec * eigval) @ eigvec.T

    g, Jeq, Jin = jacobians(x)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(Jeq))
            and np.all(np.isfinite(Jin))):
        raise EvaluationError("non-finite derivative at the initial point",
                              expand(x))

    def restore(x, f, ceq, cin, g, Jeq, Jin, budget=25):
        """Gauss-Newton/Levenberg feasibility phase: drive the violated
        constraints to zero with minimum-norm steps inside the box."""
        lam = 1e-10
        for _ in range(budget):
            act = cin > 0.0
            r = np.concatenate([ceq, cin[act]])
            if r.size == 0 or np.abs(r).max() <= opts.tol_feas * 0.1:
                break
            J = np.vstack([Jeq, Jin[act]]) if meq or act.any() else None
            if J is None:
                break
            JtJ = J.T @ J
            Jtr = J.T @ r
            scale = max(float(np.trace(JtJ)) / max(nf, 1), 1e-12)
            improved = False
            r1 = float(np.abs(r).sum())
            for _ in range(8):
                try:
                    p = -np.linalg.solve(JtJ + lam * scale * np.eye(nf), Jtr)
                except np.linalg.LinAlgError:
                    lam = max(lam * 10.0, 1e-8)
                    continue
                # shorten the step as a ray so the box cannot distort its
                # direction, then clip for safety
                for t_ray in (1.0, 0.25, 0.0625, 0.015625):
                    xt = np.clip(x + t_ray * p, lo, hi)
                    ft, ceqt, cint = eval_one(xt)
                    if (math.isfinite(ft) and np.all(np.isfinite(ceqt))
                            and np.all(np.isfinite(cint))):
                        rt = float(np.abs(ceqt).sum()
                                   + np.maximum(cint, 0.0).sum())
                        if rt < r1 * (1.0 - 1e-10):
                            x, f, ceq, cin = xt, ft, ceqt, cint
                            lam = max(lam / 3.0, 1e-12)
                            improved = True
                            break
                if improved:
                    break
                lam = max(lam * 10.0, 1e-8)
            if not improved:
                break
            g, Jeq, Jin = jacobians(x)
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(Jeq))
                    and np.all(np.isfinite(Jin))):
                break
        return x, f, ceq, cin, g, Jeq, Jin

    if _violation_inf(ceq, cin) > opts.restore_threshold:
        x, f, ceq, cin, g, Jeq, Jin = restore(x, f, ceq, cin, g, Jeq, Jin)
        if _violation_inf(ceq, cin) > opts.give_up_violation:
            return NlpResult(x=expand(x), f=f,
                             max_violation=_violation_inf(ceq, cin),
                             status=NlpStatus.INFEASIBLE, iterations=0,
                             message="restoration stalled")

    B = np.eye(nf)
    bfgs_started = False
    mu_pen = max(10.0, 2.0 * float(np.abs(g).max(initial=0.0)))
    lam_eq = np.zeros(meq)
    lam_in = np.zeros(mi)
    restorations_left = 3
    stall_count = 0
    f_stall = 0
    f_prev_feasible = math.inf

    best_x, best_viol, best_f = x.copy(), _violation_inf(ceq, cin), f
    status = NlpStatus.MAX_ITER
    stationarity = math.inf
    it = 0
    message = ""

    for it in range(1, opts.max_iter + 1):
        if opts.hessian == "fd" and (it - 1) % max(opts.hessian_refresh, 1) == 0:
            w = np.concatenate([[1.0], lam_eq, lam_in])
            H = lagrangian_hessian(x, w)
            if H is not None:
                B = H
        qp = None
        Breg = B
        for attempt in range(3):
            qp = _solve_qp(Breg, g, Jeq, -ceq, Jin, -cin, lo - x, hi - x)
            if qp is not None and np.all(np.isfinite(qp[0])):
                # reject wildly inconsistent subproblems: their duals would
                # poison the penalty parameter
                d_try, y_try, zg_try = qp[0], qp[1], qp[2]
                lin_eq = Jeq @ d_try + ceq if meq else np.zeros(0)
                lin_ok = (np.abs(lin_eq).max(initial=0.0)
                          <= 1e-6 + 1e-6 * np.abs(ceq).max(initial=0.0))
                dual_ok = max(np.abs(y_try).max(initial=0.0),
                              np.abs(zg_try).max(initial=0.0)) < 50.0 * mu_pen
                if lin_ok and dual_ok:
                    break
            Breg = Breg + (10.0 ** attempt) * np.eye(nf)
            qp = None
        if qp is None:
            qp = _solve_qp_elastic(B, g, Jeq, -ceq, Jin, -cin,
                                   lo - x, hi - x, mu_pen)
        if qp is None or not np.all(np.isfinite(qp[0])):
            message = "qp failure"
            break
        d, lam_eq, lam_in, zl, zu = qp

        lam_mag = max(np.abs(lam_eq).max(initial=0.0),
                      np.abs(lam_in).max(initial=0.0))
        if lam_mag >= 0.95 * mu_pen and mu_pen < 1e6:
            mu_pen = min(10.0 * mu_pen, 1e6)
        else:
            mu_pen = max(min(mu_pen, 10.0 * (2.0 * lam_mag + 1.0)),
                         2.0 * lam_mag, 1.0)

        # stationarity of the Lagrangian, one-sided at active bounds
        grad_l = g + (Jeq.T @ lam_eq if meq else 0.0) \
                   + (Jin.T @ lam_in if mi else 0.0)
        proj = grad_l - zl + zu
        stationarity = float(np.abs(proj).max(initial=0.0))

        viol = _violation_inf(ceq, cin)
        if viol <= opts.tol_feas and (stationarity <= opts.tol_opt
                                      or np.abs(d).max(initial=0.0) <= 1e-12):
            status = NlpStatus.CONVERGED
            break

        viol1_0 = _violation_l1(ceq, cin)
        lin_eq = Jeq @ d + ceq if meq else np.zeros(0)
        lin_in = Jin @ d + cin if mi else np.zeros(0)
        viol1_lin = _violation_l1(lin_eq, lin_in)
        phi0 = f + mu_pen * viol1_0
        dphi = float(g @ d) - mu_pen * (viol1_0 - viol1_lin)
        alpha = 1.0
        accepted = False
        soc_budget = 2
        for _ in range(opts.max_ls):
            xt = np.clip(x + alpha * d, lo, hi)
            ft, ceqt, cint = eval_one(xt)
            finite = (math.isfinite(ft) and np.all(np.isfinite(ceqt))
                      and np.all(np.isfinite(cint)))
            if finite:
                phit = ft + mu_pen * _violation_l1(ceqt, cint)
                # a feasible step that reduces the objective is always fine
                if (_violation_inf(ceqt, cint) <= opts.tol_feas
                        and ft < f - 1e-14):
                    accepted = True
                    break
                if phit <= phi0 + 1e-4 * alpha * min(dphi, 0.0) \
                        or phit < phi0 - 1e-16:
                    accepted = True
                    break
            if soc_budget > 0 and meq and finite:
                # second-order correction: cancel the constraint curvature
                # picked up along the step (Maratos guard)
                soc_budget -= 1
                try:
                    dsoc = -Jeq.T @ np.linalg.solve(
                        Jeq @ Jeq.T + 1e-10 * np.eye(meq), ceqt)
                except np.linalg.LinAlgError:
                    dsoc = None
                if dsoc is not None and np.all(np.isfinite(dsoc)):
                    xs = np.clip(x + alpha * d + dsoc, lo, hi)
                    fs, ceqs, cins = eval_one(xs)
                    if (math.isfinite(fs) and np.all(np.isfinite(ceqs))
                            and np.all(np.isfinite(cins))):
                        phis = fs + mu_pen * _violation_l1(ceqs, cins)
                        accept_soc = (phis <= phi0 + 1e-4 * alpha * min(dphi, 0.0)
                                      or (_violation_inf(ceqs, cins) <= opts.tol_feas
                                          and fs < f - 1e-14))
                        if accept_soc:
                            xt, ft, ceqt, cint = xs, fs, ceqs, cins
                            accepted = True
                            break
            alpha *= 0.5
        if not accepted:
            # augmented-Lagrangian restoration pass: descend on
            # f + lam'c + rho/2 ||c||^2 within the box
            rho = max(10.0, 2.0 * mu_pen)
            cin_act = np.maximum(cin, 0.0)
            grad_al = g + (Jeq.T @ (lam_eq + rho * ceq) if meq else 0.0) \
                        + (Jin.T @ (lam_in + rho * cin_act) if mi else 0.0)
            al0 = f + (lam_eq @ ceq if meq else 0.0) \
                    + (lam_in @ cin_act if mi else 0.0) \
                + 0.5 * rho * (float(ceq @ ceq) + float(cin_act @ cin_act))
            step = 1.0 / max(1.0, float(np.abs(grad_al).max(initial=1.0)))
            for _ in range(20):
                xt = np.clip(x - step * grad_al, lo, hi)
                ft, ceqt, cint = eval_one(xt)
                if math.isfinite(ft) and np.all(np.isfinite(ceqt)) \
                        and np.all(np.isfinite(cint)):
                    ca = np.maximum(cint, 0.0)
                    alt = ft + (lam_eq @ ceqt if meq else 0.0) \
                            + (lam_in @ ca if mi else 0.0) \
                        + 0.5 * rho * (float(ceqt @ ceqt) + float(ca @ ca))
                    if alt < al0:
                        accepted = True
                        break
                step *= 0.5
            if not accepted and restorations_left > 0:
                # last resort: re-center on the constraint manifold and
                # continue from there
                restorations_left -= 1
                xr, fr, ceqr, cinr, gr, Jeqr, Jinr = restore(
                    x, f, ceq, cin, g, Jeq, Jin)
                if _violation_l1(ceqr, cinr) < _violation_l1(ceq, cin) - 1e-14:
                    xt, ft, ceqt, cint = xr, fr, ceqr, cinr
                    accepted = True
            if not accepted:
                message = "line search failure"
                break

        x_new = xt
        f_new, ceq_new, cin_new = ft, ceqt, cint
        g_new, Jeq_new, Jin_new = jacobians(x_new)
        if not (np.all(np.isfinite(g_new)) and np.all(np.isfinite(Jeq_new))
                and np.all(np.isfinite(Jin_new))):
            message = "non-finite derivatives"
            break

        s = x_new - x
        if opts.hessian != "fd":
            # damped BFGS update on the Lagrangian gradient difference
            yv = g_new - g
            if meq:
                yv = yv + (Jeq_new - Jeq).T @ lam_eq
            if mi:
                yv = yv + (Jin_new - Jin).T @ lam_in
            if not bfgs_started:
                sy0 = float(s @ yv)
                yy0 = float(yv @ yv)
                if sy0 > 1e-14 and yy0 > 0.0:
                    B = np.eye(nf) * (yy0 / sy0)   # Shanno-Phua sizing
                    bfgs_started = True
            sBs = float(s @ B @ s)
            sy = float(s @ yv)
            if sBs > 0.0 and float(s @ s) > 1e-30:
                theta = 1.0
                if sy < 0.2 * sBs:
                    theta = 0.8 * sBs / (sBs - sy)
                    yv = theta * yv + (1.0 - theta) * (B @ s)
                    sy = float(s @ yv)
                if sy > 1e-14 * math.sqrt(float(s @ s)) * math.sqrt(float(yv @ yv)):
                    Bs = B @ s
                    B = B - np.outer(Bs, Bs) / sBs + np.outer(yv, yv) / sy

        x, f, ceq, cin = x_new, f_new, ceq_new, cin_new
        g, Jeq, Jin = g_new, Jeq_new, Jin_new

        viol = _violation_inf(ceq, cin)
        if viol < best_viol or (viol <= opts.tol_feas
                                and best_viol <= opts.tol_feas and f < best_f):
            best_x, best_viol, best_f = x.copy(), viol, f

        step_inf = float(np.abs(s).max(initial=0.0))
        if viol > opts.tol_feas and step_inf <= 1e-8 * (1.0 + float(np.abs(x).max())):
            stall_count += 1
        else:
            stall_count = 0
        if stall_count >= 2 and restorations_left > 0:
            restorations_left -= 1
            stall_count = 0
            x, f, ceq, cin, g, Jeq, Jin = restore(x, f, ceq, cin, g, Jeq, Jin)
            if opts.hessian != "fd":
                B = np.eye(nf)
                bfgs_started = False
            viol = _violation_inf(ceq, cin)
            if viol < best_viol:
                best_x, best_viol, best_f = x.copy(), viol, f

        if opts.f_stall_exit > 0:
            if viol <= opts.tol_feas:
                if f > f_prev_feasible - 1e-7 * max(1.0, abs(f_prev_feasible)):
                    f_stall += 1
                else:
                    f_stall = 0
                f_prev_feasible = min(f_prev_feasible, f)
                if f_stall >= opts.f_stall_exit:
                    break
            else:
                f_stall = 0

        if opts.log_stream is not None:
            opts.log_stream.write(
                f"{it},{f:.9e},{viol:.3e},{float(np.abs(alpha * d).max(initial=0.0)):.3e}\n")

    viol = _violation_inf(ceq, cin)
    if status is not NlpStatus.CONVERGED:
        # prefer the least-infeasible iterate seen
        if viol > best_viol:
            x, f, viol = best_x, best_f, best_viol
        status = (NlpStatus.MAX_ITER if viol <= opts.tol_feas
                  else NlpStatus.INFEASIBLE)
    return NlpResult(x=expand(x), f=f, max_violation=viol, status=status,
                     iterations=it, stationarity=stationarity,
                     multipliers_eq=lam_eq, multipliers_in=lam_in,
                     message=message)
