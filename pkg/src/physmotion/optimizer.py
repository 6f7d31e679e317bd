"""Ground reaction force estimation and the final torque/acceleration QP.

Both problems are posed on a :class:`~physmotion.dynamics.DynamicsQuantities`
bundle so the pipeline computes M, c and J once per inner iteration.

Torque QP. With the equation of motion ``M qdd - tau = J^T G lam - c`` the
torque is an affine function of the acceleration, ``tau = M qdd + c - J^T G
lam``, so it is eliminated and the QP runs in ``qdd`` alone::

    min |qdd - qdd_des|^2 + w_tau |M qdd + c - J^T G lam|^2
    s.t. contact rows on the post-step velocity  qdot + phi * qdd

The equality then holds exactly by construction. The Hessian ``2 (I + w M^2)``
is positive definite, so the fast dual solver applies every time.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsQuantities, contact_frame
from .qp import QPProblem, QPResult, solve_qp, QPError

log = logging.getLogger(__name__)

DEFAULT_MU = 0.8
DEFAULT_SIGMA = 0.02
DEFAULT_W_TAU = 1e-3
DEFAULT_RECOVERY_SPEED = 1.0
DEFAULT_LANDING_GAP = 1e-5


@dataclass(frozen=True)
class FrictionCone:
    """Inner pyramid of the Coulomb cone, ``|l_t|, |l_b| <= mu_bar * l_n``."""

    mu: float = DEFAULT_MU
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))  # columns n, t, b

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("friction coefficient must be positive")
        F = np.asarray(self.frame, dtype=float)
        if not np.allclose(F.T @ F, np.eye(3), atol=1e-9) or np.linalg.det(F) < 0:
            raise ValueError("contact frame must be orthonormal and right-handed")
        object.__setattr__(self, "frame", F)

    @classmethod
    def for_model(cls, model, mu: float | None = None) -> "FrictionCone":
        return cls(model.floor.mu if mu is None else mu, contact_frame(model))

    @property
    def mu_bar(self) -> float:
        return self.mu / np.sqrt(2.0)

    def constraint_rows(self, n_contacts: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A, lower, upper) for ``lower <= A lam <= upper``."""
        mb = self.mu_bar
        block = np.array([[1.0, 0.0, 0.0],
                          [-mb, 1.0, 0.0], [-mb, -1.0, 0.0],
                          [-mb, 0.0, 1.0], [-mb, 0.0, -1.0]])
        lo = np.array([0.0, -np.inf, -np.inf, -np.inf, -np.inf])
        hi = np.array([np.inf, 0.0, 0.0, 0.0, 0.0])
        A = np.kron(np.eye(n_contacts), block)
        return A, np.tile(lo, n_contacts), np.tile(hi, n_contacts)

    def violation(self, lam) -> float:
        """Largest violation of the pyramid inequalities (0 when inside)."""
        lam = np.asarray(lam, dtype=float).reshape(-1, 3)
        if lam.size == 0:
            return 0.0
        mb = self.mu_bar
        v = np.concatenate([-lam[:, 0], np.abs(lam[:, 1]) - mb * lam[:, 0],
                            np.abs(lam[:, 2]) - mb * lam[:, 0]])
        return float(max(v.max(), 0.0))


@dataclass
class GRFSolution:
    lam: np.ndarray  # (3 N_c,) per contact (l_n, l_t, l_b)
    residual: np.ndarray  # root wrench left unexplained, M1 qdd + c1 - J1^T G lam
    status: str
    qp: QPResult | None = field(default=None, repr=False)

    @property
    def per_contact(self) -> np.ndarray:
        return self.lam.reshape(-1, 3)


@dataclass
class TorqueSolution:
    qddot: np.ndarray
    tau: np.ndarray  # tau[:6] is the residual root actuation
    status: str
    fallback: int = 0  # 0 none, 1 tangential rows dropped, 2 all contact rows dropped
    qp: QPResult | None = field(default=None, repr=False)

    @property
    def tau_root(self) -> np.ndarray:
        return self.tau[:6]


def _root_system(dyn: DynamicsQuantities, qddot_des):
    b = dyn.M[:6] @ qddot_des + dyn.c[:6]
    A = (dyn.J.T @ dyn.G)[:6]
    return A, b


def estimate_grf(dyn: DynamicsQuantities, qddot_des, cone: FrictionCone) -> GRFSolution:
    """Contact forces in the cone that best explain the root rows.

    Solves ``min |M1 qdd_des + c1 - J1^T G lam|^2`` over the linearised cone.
    The Hessian is only semidefinite once several contacts share the load;
    the minimiser the solver picks is reached from ``lam = 0`` and is
    deterministic.
    """
    nc = dyn.n_contacts
    if nc == 0:
        raise ValueError("GRF estimation needs at least one active contact")
    A, b = _root_system(dyn, np.asarray(qddot_des, dtype=float))
    Ac, lo, hi = cone.constraint_rows(nc)
    prob = QPProblem(2.0 * A.T @ A, -2.0 * A.T @ b, A_in=Ac, lower=lo, upper=hi)
    res = solve_qp(prob)
    if not res.ok:
        raise QPError(f"GRF QP {res.status}", res)
    lam = res.x.copy()
    # clip round-off so the emitted force is inside the pyramid exactly
    lam3 = lam.reshape(-1, 3)
    lam3[:, 0] = np.maximum(lam3[:, 0], 0.0)
    cap = cone.mu_bar * lam3[:, 0]
    lam3[:, 1:] = np.clip(lam3[:, 1:], -cap[:, None], cap[:, None])
    return GRFSolution(lam, b - A @ lam, res.status, res)


def contact_velocity_rows(dyn: DynamicsQuantities, qdot, phi: float, sigma: float,
                          heights=None, recovery_speed: float = DEFAULT_RECOVERY_SPEED,
                          landing_gap: float = DEFAULT_LANDING_GAP, J_lin=None):
    """Rows bounding the post-step contact velocity ``J_lin (qdot + phi qdd)``.

    ``J_lin`` (3 N_c, m) defaults to the linear contact Jacobian of ``dyn``;
    the pipeline passes the one at the step midpoint ``q + phi qdot / 2`` so
    that one step moves each contact by ``phi * velocity`` to second order.

    A contact clear of the floor (height above ``landing_gap``) has its
    normal velocity held at zero: it may not sink, and letting it rise
    freely would ratchet a noisy reference off the floor. :class:`TorqueSolver`
    releases the hold to plain non-negativity when it makes the problem
    infeasible. A contact touching or inside the floor
    gets its normal velocity pinned to ``min((landing_gap - h) / phi,
    recovery_speed)``, which settles it just above the floor without
    rebounding. Tangential rows allow sliding up to ``sigma``. Returns
    (A, lower, upper, kind) with kind 0 for normal and 1 for tangential rows.
    """
    nc = dyn.n_contacts
    Rc = dyn.G[3:6, 0:3] if nc else np.eye(3)
    Jl = dyn.J_linear if J_lin is None else J_lin
    rows, lo, hi, kind = [], [], [], []
    h = np.full(nc, np.inf) if heights is None else np.asarray(heights, dtype=float)
    for j in range(nc):
        Jj = Rc.T @ Jl[3 * j:3 * j + 3]  # (n, t, b) components
        v0 = Jj @ qdot
        if h[j] <= landing_gap:
            v = min((landing_gap - h[j]) / phi, recovery_speed)
            lo_n, hi_n = v - v0[0], v - v0[0]
        else:
            lo_n, hi_n = -v0[0], -v0[0]
        rows.append(phi * Jj[0]), lo.append(lo_n), hi.append(hi_n), kind.append(0)
        for k in (1, 2):
            rows.append(phi * Jj[k]), lo.append(-sigma - v0[k]), hi.append(sigma - v0[k])
            kind.append(1)
    m = dyn.M.shape[0]
    return (np.array(rows).reshape(-1, m), np.array(lo), np.array(hi), np.array(kind, dtype=int))


class TorqueSolver:
    """Final QP with warm starts and fallback bookkeeping for one sequence."""

    def __init__(self, *, sigma: float = DEFAULT_SIGMA, w_tau: float = DEFAULT_W_TAU,
                 phi: float = 0.01, recovery_speed: float = DEFAULT_RECOVERY_SPEED,
                 landing_gap: float = DEFAULT_LANDING_GAP, max_iter: int = 200):
        if sigma < 0 or w_tau < 0 or not phi > 0:
            raise ValueError("sigma, w_tau must be >= 0 and phi > 0")
        self.sigma = sigma
        self.w_tau = w_tau
        self.phi = phi
        self.recovery_speed = recovery_speed
        self.landing_gap = landing_gap
        self.max_iter = max_iter
        self.warnings = 0
        self._warm: QPResult | None = None
        self._warm_key = None

    def reset(self):
        self._warm, self._warm_key = None, None
        self.warnings = 0

    def solve(self, dyn: DynamicsQuantities, qdot, qddot_des, lam=None, heights=None,
              J_lin=None) -> TorqueSolution:
        M, c = dyn.M, dyn.c
        m = M.shape[0]
        qdot = np.asarray(qdot, dtype=float)
        qddot_des = np.asarray(qddot_des, dtype=float)
        nc = dyn.n_contacts
        if nc and lam is None:
            raise ValueError("contact forces required when contacts are active")
        gen = dyn.J.T @ (dyn.G @ lam) if nc else np.zeros(m)
        r = c - gen  # tau = M qdd + r
        w = self.w_tau
        H = 2.0 * (np.eye(m) + w * M @ M)
        g = -2.0 * qddot_des + 2.0 * w * (M @ r)
        A, lo, hi, kind = contact_velocity_rows(dyn, qdot, self.phi, self.sigma, heights,
                                                self.recovery_speed, self.landing_gap, J_lin)
        key = (dyn.active,)
        warm = self._warm if self._warm_key == key else None
        # hovering contacts are held at zero normal velocity; if that is
        # infeasible, release the hold (plain non-negativity) before relaxing
        h = np.full(nc, np.inf) if heights is None else np.asarray(heights, dtype=float)
        hold = np.zeros(len(kind), bool)
        hold[kind == 0] = h > self.landing_gap
        hi_free = np.where(hold, np.inf, hi)
        res = None
        fallback = 0
        attempts = [(0, np.ones(len(kind), bool), hi)]
        if hold.any():
            attempts.append((0, np.ones(len(kind), bool), hi_free))
        attempts += [(1, kind == 0, hi_free), (2, np.zeros(len(kind), bool), hi_free)]
        for k, (level, keep, upper) in enumerate(attempts):
            if level == 1 and not keep.any():
                continue
            prob = QPProblem(H, g, A_in=A[keep], lower=lo[keep], upper=upper[keep])
            res = solve_qp(prob, warm if k == 0 else None, max_iter=self.max_iter)
            if res.ok:
                fallback = level
                break
            if k == 0 and hold.any():
                log.debug("releasing hover hold on %d contacts", int(hold.sum()))
                continue
            self.warnings += 1
            log.warning("torque QP %s with %d contacts; relaxing contact rows (level %d)",
                        res.status, nc, level + 1)
        if not res.ok:
            raise QPError(f"torque QP {res.status} without contact rows", res)
        if k == 0:
            self._warm, self._warm_key = res, key
        qdd = res.x
        return TorqueSolution(qdd, M @ qdd + r, res.status, fallback, res)


def solve_torques(dyn: DynamicsQuantities, qdot, qddot_des, lam=None, *,
                  sigma: float = DEFAULT_SIGMA, w_tau: float = DEFAULT_W_TAU, phi: float = 0.01,
                  heights=None) -> TorqueSolution:
    """One-shot form of :meth:`TorqueSolver.solve` (no warm start)."""
    return TorqueSolver(sigma=sigma, w_tau=w_tau, phi=phi).solve(dyn, qdot, qddot_des, lam, heights)


def eom_residual(dyn: DynamicsQuantities, sol: TorqueSolution, lam=None) -> float:
    """``|M qdd - tau - J^T G lam + c|_inf`` relative to the largest term."""
    gen = dyn.J.T @ (dyn.G @ lam) if dyn.n_contacts else 0.0
    Mq = dyn.M @ sol.qddot
    r = Mq - sol.tau - gen + dyn.c
    scale = max(1.0, np.abs(Mq).max(), np.abs(sol.tau).max(), np.abs(dyn.c).max())
    return float(np.abs(r).max() / scale)
