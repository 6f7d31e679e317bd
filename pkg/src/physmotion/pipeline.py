"""Per-frame physics filter.

Each frame: i) balance correction of the reference, then ``n`` inner
iterations of ii) PD desired accelerations, iii) contact force estimation
when a foot is in contact, iv) the torque QP and v) a semi-implicit step.
The reference, its derivatives and the refined contact flags are held fixed
over the inner iterations. The simulated state carries over between frames.
"""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .character import CharacterModel, ConfigError
from .contact import ContactState, ContactThresholds, label_contacts, refine_contacts
from .control import PDGains, ReferenceDerivatives, desired_acceleration
from .correction import BalanceCorrector
from .dynamics import PoseState, compute_dynamics, contact_jacobian, forward_kinematics, integrate
from .io import MotionSequence
from .optimizer import (DEFAULT_LANDING_GAP, DEFAULT_RECOVERY_SPEED, DEFAULT_SIGMA, DEFAULT_W_TAU, FrictionCone,
                        TorqueSolver, estimate_grf)

log = logging.getLogger(__name__)


class SimulationDiverged(RuntimeError):
    """The simulated state became non-finite."""


@dataclass(frozen=True)
class PipelineConfig:
    phi: float = 0.01
    n_iterations: int = 4
    gains: PDGains = field(default_factory=PDGains)
    thresholds: ContactThresholds = field(default_factory=ContactThresholds)
    sigma: float = DEFAULT_SIGMA
    w_tau: float = DEFAULT_W_TAU
    mu: float = 0.8
    gravity: float = 9.81
    recovery_speed: float = DEFAULT_RECOVERY_SPEED
    landing_gap: float = DEFAULT_LANDING_GAP
    derivative_method: str = "poly"
    derivative_window: int = 9
    balance_correction: bool = True
    diagnostics: bool = True
    allow_interval_mismatch: bool = False

    def __post_init__(self):
        if not self.phi > 0:
            raise ConfigError("phi must be positive")
        if self.n_iterations < 1:
            raise ConfigError("n_iterations must be >= 1")
        if self.sigma < 0 or self.w_tau < 0 or not self.mu > 0 or self.gravity < 0:
            raise ConfigError("sigma, w_tau, gravity must be >= 0 and mu > 0")
        if self.landing_gap < 0 or not self.recovery_speed > 0:
            raise ConfigError("landing_gap must be >= 0 and recovery_speed > 0")

    def check_frame_rate(self, fps: float) -> None:
        """The inner loop must advance exactly one frame interval."""
        span = self.phi * self.n_iterations
        if not self.allow_interval_mismatch and abs(span * fps - 1.0) > 1e-9:
            raise ConfigError(f"n * phi = {span:g} s does not match the frame interval "
                              f"{1.0 / fps:g} s; set allow_interval_mismatch to override")

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown pipeline config field(s): {sorted(unknown)}")
        if "gains" in d and isinstance(d["gains"], dict):
            g = dict(d["gains"])
            g["overrides"] = {int(k): tuple(v) for k, v in g.get("overrides", {}).items()}
            d["gains"] = PDGains(**g)
        if "thresholds" in d and isinstance(d["thresholds"], dict):
            d["thresholds"] = ContactThresholds(**d["thresholds"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        g = self.gains
        out["gains"] = {k: getattr(g, k) for k in g.__dataclass_fields__}
        out["gains"]["overrides"] = {str(k): list(v) for k, v in g.overrides.items()}
        t = self.thresholds
        out["thresholds"] = {k: getattr(t, k) for k in t.__dataclass_fields__}
        return out


@dataclass
class IterationDiagnostics:
    active: tuple
    lam: np.ndarray
    tau: np.ndarray
    qddot: np.ndarray
    grf_status: str
    qp_status: str
    fallback: int
    kkt: float  # worst scaled KKT residual of the torque QP
    grf_kkt: float
    contact_velocity: np.ndarray  # (N_c, 3) post-step (n, t, b) velocity of active contacts


@dataclass
class FrameResult:
    q_phys: np.ndarray
    qdot: np.ndarray
    contacts: ContactState  # refined b'
    correction_applied: bool
    q_ref: np.ndarray
    iterations: list = field(default_factory=list)
    wall_time: float = 0.0


@dataclass
class SimState:
    pose: PoseState
    corrector: BalanceCorrector
    derivs: ReferenceDerivatives
    solver: TorqueSolver
    frame: int = 0


class Pipeline:
    """One instance per sequence; not safe to share between threads."""

    def __init__(self, model: CharacterModel, config: PipelineConfig | None = None,
                 fps: float = 25.0):
        self.model = model
        self.config = config or PipelineConfig()
        self.config.check_frame_rate(fps)
        self.fps = fps
        self.cone = FrictionCone.for_model(model, self.config.mu)
        self.state: SimState | None = None

    def init_state(self, first_q_kin) -> SimState:
        c = self.config
        q0 = np.array(first_q_kin, dtype=float)
        if q0.shape != (self.model.dof_count,) or not np.all(np.isfinite(q0)):
            raise ValueError("first pose must be a finite vector of length dof_count")
        self.state = SimState(
            PoseState(q0, np.zeros_like(q0)),
            BalanceCorrector(self.model),
            ReferenceDerivatives(self.fps, c.derivative_method, c.derivative_window),
            TorqueSolver(sigma=c.sigma, w_tau=c.w_tau, phi=c.phi, recovery_speed=c.recovery_speed,
                         landing_gap=c.landing_gap))
        return self.state

    def process_frame(self, q_kin, contact: ContactState) -> FrameResult:
        if self.state is None:
            self.init_state(q_kin)
        t0 = time.perf_counter()
        c, model, st = self.config, self.model, self.state
        q_kin = np.asarray(q_kin, dtype=float)
        if c.balance_correction:
            q_ref, applied = st.corrector.step(q_kin, contact)
        else:
            q_ref, applied = q_kin, False
        v_ref, a_ref = st.derivs.update(q_ref)
        refined = refine_contacts(contact, model, st.pose.q, model.floor,
                                  c.thresholds.refine_height)
        refined = replace(refined, frame=st.frame)
        active = refined.active_links(model)
        ang = model.angular_mask()
        diags = []
        pose = st.pose
        for _ in range(c.n_iterations):
            dyn = compute_dynamics(model, pose.q, pose.qdot, active, c.gravity)
            qdd_des = desired_acceleration(q_ref, v_ref, a_ref, pose.q, pose.qdot, c.gains, ang)
            if active:
                grf = estimate_grf(dyn, qdd_des, self.cone)
                lam, grf_status, grf_kkt = grf.lam, grf.status, max(grf.qp.kkt.values())
                heights = model.floor.height(dyn.points)
                J_mid = contact_jacobian(model, pose.q + 0.5 * c.phi * pose.qdot, active)
                J_lin = np.vstack([J_mid[6 * j + 3:6 * j + 6] for j in range(len(active))])
            else:
                lam, grf_status, grf_kkt, heights, J_lin = np.zeros(0), "skipped", 0.0, None, None
            sol = st.solver.solve(dyn, pose.qdot, qdd_des, lam if active else None, heights, J_lin)
            new = integrate(model, pose, sol.qddot, c.phi)
            if c.diagnostics:
                Rc = dyn.G[3:6, 0:3] if active else np.eye(3)
                vel = (J_lin @ new.qdot).reshape(-1, 3) @ Rc if active else np.zeros((0, 3))
                diags.append(IterationDiagnostics(active, lam, sol.tau, sol.qddot, grf_status,
                                                  sol.status, sol.fallback,
                                                  max(sol.qp.kkt.values()), grf_kkt, vel))
            pose = new
        if not (np.all(np.isfinite(pose.q)) and np.all(np.isfinite(pose.qdot))):
            raise SimulationDiverged(f"non-finite state at frame {st.frame}")
        st.pose = pose
        st.frame += 1
        return FrameResult(pose.q.copy(), pose.qdot.copy(), refined, applied, q_ref, diags,
                           time.perf_counter() - t0)

    def process_sequence(self, motion: MotionSequence, contacts=None) -> tuple[MotionSequence, list]:
        """Filter a whole sequence. ``contacts=None`` labels them from the motion.

        Returns the filtered sequence (same length, fps and timestamps) and
        the per-frame :class:`FrameResult` list.
        """
        motion.check_binding(self.model)
        T = len(motion)
        if T == 0:
            return MotionSequence.from_model(self.model, np.zeros((0, self.model.dof_count)),
                                             motion.fps), []
        if contacts is None:
            contacts = auto_label(self.model, motion, self.config.thresholds)
        if len(contacts) != T:
            raise ValueError(f"{len(contacts)} contact states for {T} frames")
        self.init_state(motion.q[0])
        results = [self.process_frame(motion.q[t], contacts[t]) for t in range(T)]
        out = MotionSequence(motion.fps, np.array([r.q_phys for r in results]), motion.dof_names,
                             motion.joint_names, timestamps=motion.timestamps.copy())
        return out, results


def joint_positions(model: CharacterModel, qs) -> np.ndarray:
    """(T, S, 3) world joint positions for a (T, m) pose sequence."""
    return np.array([forward_kinematics(model, q).link_p for q in np.asarray(qs, dtype=float)])


def auto_label(model: CharacterModel, motion: MotionSequence,
               thresholds: ContactThresholds | None = None) -> list[ContactState]:
    """Label contacts from the motion's joint positions (or FK of its poses)."""
    names = [j.name for j in model.joints]
    if motion.positions is not None and tuple(motion.joint_names) == tuple(names):
        P = motion.positions
    else:
        P = joint_positions(model, motion.q)
    root = model.joints[0].name
    return label_contacts(P, names, motion.fps, thresholds, model.floor, root=root,
                          foot_joints=model.foot_links)


_DIAG_HEAD = ["frame", "iteration", "qp_status", "grf_status", "fallback", "n_contacts",
              "qp_kkt", "grf_kkt", "tau_root_norm"]


def write_diagnostics(model: CharacterModel, results, path: str | Path) -> None:
    """Per-iteration QP status, residuals, contact forces and torques as CSV."""
    feet = list(model.foot_links)
    lam_cols = [f"lam_{f}_{c}" for f in feet for c in "ntb"]
    tau_cols = [f"tau_{n}" for n in model.dof_names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_DIAG_HEAD + lam_cols + tau_cols)
        for fr in results:
            for k, d in enumerate(fr.iterations):
                lam = dict(zip(d.active, np.asarray(d.lam).reshape(-1, 3)))
                lrow = []
                for f in feet:
                    lrow += list(lam[f]) if f in lam else ["", "", ""]
                w.writerow([fr.contacts.frame, k, d.qp_status, d.grf_status, d.fallback,
                            len(d.active), f"{d.kkt:.3e}", f"{d.grf_kkt:.3e}",
                            float(np.linalg.norm(d.tau[:6]))] + lrow + list(d.tau))
