"""Small dense convex QP solver.

Solves::

    min 1/2 x'Hx + g'x   s.t.  A_eq x = b_eq,  lower <= A_in x <= upper

with the Goldfarb-Idnani dual active-set method when H is positive
definite. A merely semidefinite H goes through a primal active-set method
in null-space form, started from the projection of the warm point (or the
origin) onto the feasible set. That projection is itself a strictly convex
QP solved by Goldfarb-Idnani.

Warm starts take the active set of a previous solve. Constraint ids are
``2 * row`` for a lower bound and ``2 * row + 1`` for an upper bound, so a
warm start stays meaningful while the row layout does not change.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError


class QPError(RuntimeError):
    """Raised by :func:`solve_qp` with ``raise_on_failure=True``."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


@dataclass
class QPProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.g = np.asarray(self.g, dtype=float).reshape(n)
        if self.H.shape != (n, n):
            raise ValueError("H must be square")
        if self.A_eq is None:
            self.A_eq, self.b_eq = np.zeros((0, n)), np.zeros(0)
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(len(self.A_eq))
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
        self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
        k = len(self.A_in)
        self.lower = np.full(k, -np.inf) if self.lower is None else \
            np.asarray(self.lower, dtype=float).reshape(k)
        self.upper = np.full(k, np.inf) if self.upper is None else \
            np.asarray(self.upper, dtype=float).reshape(k)
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass
class QPResult:
    x: np.ndarray
    status: str  # "optimal", "infeasible", "unbounded", "max_iter"
    iterations: int
    active: frozenset
    y_eq: np.ndarray  # equality multipliers
    y_in: np.ndarray  # per A_in row; > 0 lower bound active, < 0 upper
    kkt: dict = field(default_factory=dict)
    objective: float = np.nan

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _one_sided(p: QPProblem):
    """Rewrite bounds as rows C x >= d; keep constraint ids."""
    rows, rhs, ids = [], [], []
    for i in range(len(p.A_in)):
        if np.isfinite(p.lower[i]):
            rows.append(p.A_in[i]), rhs.append(p.lower[i]), ids.append(2 * i)
        if np.isfinite(p.upper[i]):
            rows.append(-p.A_in[i]), rhs.append(-p.upper[i]), ids.append(2 * i + 1)
    n = p.n
    C = np.array(rows).reshape(-1, n)
    return C, np.array(rhs, dtype=float), np.array(ids, dtype=int)


def _goldfarb_idnani(H, g, E, e, C, d, warm, max_iter, tol):
    """Strictly convex case. Returns x, status, iters, active list, multipliers."""
    n = len(g)
    cf = cho_factor(H)
    Hinv = lambda v: cho_solve(cf, v)
    neq = len(E)
    Nall = np.vstack([E, C]) if len(C) else E
    ball = np.concatenate([e, d])
    x0 = -Hinv(g)

    def eqp(active):
        if not active:
            return x0.copy(), np.zeros(0), True
        N = Nall[active]
        HN = Hinv(N.T)
        K = N @ HN
        try:
            kc = cho_factor(K)
        except LinAlgError:
            return None, None, False
        u = cho_solve(kc, ball[active] - N @ x0)
        return x0 + HN @ u, u, True

    # start from the equalities plus any usable warm-start constraints
    active = list(range(neq)) + [neq + k for k in warm]
    while True:
        x, u, ok = eqp(active)
        if not ok:
            if len(active) == neq:
                return x0, "infeasible", 0, [], np.zeros(0)
            active = list(range(neq))
            continue
        neg = [(u[k], k) for k in range(neq, len(active)) if u[k] < 0]
        if not neg:
            break
        active.pop(min(neg)[1])
    u = list(u)
    scale_c = np.maximum(1.0, np.abs(d))
    it = 0
    while True:
        if len(C) == 0:
            return x, "optimal", it, active, np.array(u)
        s = C @ x - d
        s_norm = s / scale_c
        mask = np.ones(len(C), dtype=bool)
        mask[[a - neq for a in active if a >= neq]] = False
        if not mask.any():
            return x, "optimal", it, active, np.array(u)
        cand = np.where(mask, s_norm, np.inf)
        p = int(np.argmin(cand))
        if cand[p] >= -tol:
            return x, "optimal", it, active, np.array(u)
        npl = C[p]
        up = 0.0
        while True:
            it += 1
            if it > max_iter:
                return x, "max_iter", it, active, np.array(u)
            Hn = Hinv(npl)
            if active:
                N = Nall[active]
                HN = Hinv(N.T)
                K = N @ HN
                r = np.linalg.solve(K, N @ Hn)
                z = Hn - HN @ r
            else:
                r = np.zeros(0)
                z = Hn
            zn = float(z @ npl)
            t2 = np.inf if zn <= 1e-13 * max(float(npl @ Hn), 1e-300) else -(npl @ x - d[p]) / zn
            t1, drop = np.inf, -1
            for k in range(neq, len(active)):
                if r[k] > 1e-14:
                    ratio = u[k] / r[k]
                    if ratio < t1:
                        t1, drop = ratio, k
            t = min(t1, t2)
            if not np.isfinite(t):
                return x, "infeasible", it, active, np.array(u)
            if t2 < np.inf:
                x = x + t * z
            for k in range(len(active)):
                u[k] -= t * r[k]
            up += t
            if t2 <= t1:
                active.append(neq + p)
                u.append(up)
                break
            active.pop(drop)
            u.pop(drop)


def kkt_residuals(p: QPProblem, x, y_eq, y_in) -> dict:
    """Scaled KKT residuals of ``p`` at (x, y)."""
    grad = p.H @ x + p.g
    stat = grad - p.A_eq.T @ y_eq - p.A_in.T @ y_in
    scale = max(1.0, np.abs(p.g).max(initial=0), np.abs(p.H).max(initial=0) * max(1.0, np.abs(x).max(initial=0)))
    ax = p.A_in @ x
    viol = np.concatenate([np.abs(p.A_eq @ x - p.b_eq),
                           np.maximum(p.lower - ax, 0), np.maximum(ax - p.upper, 0)])
    lo_slack = np.where(np.isfinite(p.lower), ax - p.lower, np.inf)
    up_slack = np.where(np.isfinite(p.upper), p.upper - ax, np.inf)
    ylo, yup = np.maximum(y_in, 0), np.maximum(-y_in, 0)
    dual = np.concatenate([np.where(np.isfinite(p.lower), 0, ylo), np.where(np.isfinite(p.upper), 0, yup)])
    with np.errstate(invalid="ignore"):
        comp = np.concatenate([np.where(ylo > 0, ylo * np.abs(lo_slack), 0),
                               np.where(yup > 0, yup * np.abs(up_slack), 0)])
    bscale = max(1.0, np.abs(np.concatenate([p.b_eq, p.lower[np.isfinite(p.lower)],
                                             p.upper[np.isfinite(p.upper)]])).max(initial=0))
    return {"stationarity": float(np.abs(stat).max(initial=0) / scale),
            "primal": float(viol.max(initial=0) / bscale),
            "dual": float(dual.max(initial=0)),
            "complementarity": float(comp.max(initial=0) / (scale * bscale))}


def _null_space(N, n):
    if len(N) == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(N)
    rank = int(np.sum(sv > 1e-12 * max(sv.max(initial=0), 1.0)))
    return vt[rank:].T


def _primal_active_set(H, g, E, e, C, d, x, work, max_iter, tol):
    """Primal active-set for a semidefinite H from a feasible ``x``.

    Steps are computed in the null space of the working constraints; zero
    curvature directions with a descent component become ray steps.
    """
    n = len(g)
    neq = len(E)
    hscale = max(np.abs(H).max(initial=0), 1.0)
    work = list(work)
    it = 0
    while it < max_iter:
        it += 1
        grad = H @ x + g
        N = np.vstack([E, C[work]]) if work else E
        Z = _null_space(N, n)
        p = np.zeros(n)
        ray = False
        gscale = max(1.0, np.abs(g).max(initial=0), hscale * np.abs(x).max(initial=0))
        if Z.shape[1] and np.abs(Z.T @ grad).max() > 1e-13 * gscale:
            w, V = np.linalg.eigh(Z.T @ H @ Z)
            pos = w > 1e-10 * hscale
            gz = V.T @ (Z.T @ grad)
            gn = gz[~pos]
            if np.abs(gn).max(initial=0) > 1e-12 * gscale:
                p = -Z @ (V[:, ~pos] @ gn)
                ray = True
            else:
                p = -Z @ (V[:, pos] @ (gz[pos] / w[pos]))
        if np.abs(p).max(initial=0) <= 1e-14 * (1.0 + np.abs(x).max(initial=0)):
            u = np.linalg.lstsq(N.T, grad, rcond=None)[0] if len(N) else np.zeros(0)
            ui = u[neq:]
            if len(ui) == 0 or ui.min() >= -tol * max(1.0, np.abs(grad).max(initial=0)):
                return x, "optimal", it, work, u
            work.pop(int(np.argmin(ui)))
            continue
        cp = C @ p
        alpha, block = (np.inf if ray else 1.0), -1
        inwork = set(work)
        for k in np.where(cp < -1e-14 * np.abs(p).max())[0]:
            if k in inwork:
                continue
            a = max((d[k] - C[k] @ x) / cp[k], 0.0)
            if a < alpha:
                alpha, block = a, int(k)
        if not np.isfinite(alpha):
            return x, "unbounded", it, work, np.zeros(neq + len(work))
        x = x + alpha * p
        if block >= 0:
            work.append(block)
    return x, "max_iter", it, work, np.zeros(neq + len(work))


def solve_qp(problem: QPProblem, warm_start=None, *, max_iter: int = 200, tol: float = 1e-10,
             raise_on_failure: bool = False) -> QPResult:
    """Solve ``problem``; ``warm_start`` is a previous result or active-id set.

    Status is ``"optimal"``, ``"infeasible"``, ``"unbounded"`` or
    ``"max_iter"``; failures are never silent (see ``raise_on_failure``).
    """
    p = problem
    C, d, ids = _one_sided(p)
    x_warm = None
    if isinstance(warm_start, QPResult):
        x_warm = warm_start.x if len(warm_start.x) == p.n else None
        warm_start = warm_start.active
    id_pos = {int(c): k for k, c in enumerate(ids)}
    warm = [id_pos[c] for c in sorted(warm_start or ()) if c in id_pos]
    neq = len(p.A_eq)

    Hs = 0.5 * (p.H + p.H.T)
    ev = np.linalg.eigvalsh(Hs) if p.n else np.zeros(0)
    hmax = max(float(ev.max(initial=0.0)), 1.0)
    ev_min = float(ev.min(initial=1.0))
    if ev_min < -1e-9 * hmax:
        raise ValueError("Hessian is not positive semidefinite")

    if ev_min > 1e-10 * hmax:
        x, status, it, active, u = _goldfarb_idnani(Hs, p.g, p.A_eq, p.b_eq, C, d, warm, max_iter, tol)
        work = [a - neq for a in active if a >= neq]
        u_in = np.asarray(u)[neq:] if len(u) else np.zeros(0)
        u_eq = np.asarray(u)[:neq] if len(u) else np.zeros(neq)
    else:
        # phase 1: project the warm point (or 0) onto the feasible set
        x0 = np.zeros(p.n) if x_warm is None else x_warm
        x, status, it, active, _ = _goldfarb_idnani(np.eye(p.n), -x0, p.A_eq, p.b_eq, C, d, warm,
                                                    max_iter, tol)
        work = [a - neq for a in active if a >= neq]
        u_eq, u_in = np.zeros(neq), np.zeros(len(work))
        if status == "optimal":
            x, status, k, work, u = _primal_active_set(Hs, p.g, p.A_eq, p.b_eq, C, d, x, work,
                                                       max_iter, tol)
            it += k
            u_eq, u_in = u[:neq], u[neq:]
    y_in = np.zeros(len(p.A_in))
    for r, val in zip(work, np.maximum(u_in, 0.0)):
        cid = ids[r]
        y_in[cid // 2] += val if cid % 2 == 0 else -val
    res = QPResult(x=x, status=status, iterations=it,
                   active=frozenset(int(ids[r]) for r in work),
                   y_eq=np.asarray(u_eq, float).reshape(neq), y_in=y_in, objective=p.objective(x))
    res.kkt = kkt_residuals(p, x, res.y_eq, y_in)
    if raise_on_failure and status != "optimal":
        raise QPError(f"QP {status} after {it} iterations; kkt={res.kkt}", res)
    return res
