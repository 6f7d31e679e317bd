"""Balance correction of stationary, unbalanced kinematic poses.

A pose needs correcting when it is stationary and its centre of gravity
(CoG) projects outside the base of support (BoS). The character is then
turned about a horizontal axis through the root by an accumulated angle
``xi`` that grows by ``theta / 10`` per frame, where ``theta`` is the lean of
the spine from the floor normal. Once the lean is small and the pose is still
unbalanced, knee and hip flexion are reduced the same way.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.transform import Rotation

from .character import CharacterModel, FloorPlane
from .contact import ContactState
from .dynamics import (center_of_mass, forward_kinematics, root_euler_from_matrix,
                       root_rotation, _link_indices)

THETA_SMALL = 0.05
CORRECTION_RATE = 0.1
_DISK_SAMPLES = 16


@dataclass
class BalanceAssessment:
    cog: np.ndarray
    bos_polygon: np.ndarray  # (k, 2) hull vertices in floor (t, b) coordinates, ccw
    cog_inside: bool
    theta: float  # spine lean from the floor normal, rad
    spine_dir: np.ndarray = field(repr=False, default_factory=lambda: np.zeros(3))


@dataclass
class CorrectionAccumulators:
    xi: float = 0.0
    knee: dict = field(default_factory=dict)
    hip: dict = field(default_factory=dict)

    def reset(self):
        self.xi = 0.0
        self.knee.clear()
        self.hip.clear()

    @property
    def is_zero(self) -> bool:
        return self.xi == 0.0 and not any(self.knee.values()) and not any(self.hip.values())


def _floor_coords(floor: FloorPlane, pts) -> np.ndarray:
    t, b = floor.tangents()
    pts = np.asarray(pts)
    return np.stack([pts @ t, pts @ b], axis=-1)


def _footprint(model: CharacterModel, kin, link: int, floor: FloorPlane) -> np.ndarray:
    """Floor projection of a link's proxy extent as 2D points."""
    proxy = model.links[link].proxy
    c = _floor_coords(floor, kin.link_p[link].real)
    if proxy is None:
        return c[None]
    if proxy.shape == "sphere":
        a = np.linspace(0.0, 2 * np.pi, _DISK_SAMPLES, endpoint=False)
        return c + proxy.radius * np.stack([np.cos(a), np.sin(a)], axis=1)
    he = np.asarray(proxy.half_extents)
    corners = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]) * he
    world = kin.link_p[link].real + corners @ kin.link_R[link].real.T
    return _floor_coords(floor, world)


def support_polygon(model: CharacterModel, kin, active_links, floor: FloorPlane | None = None):
    """Convex BoS polygon, or None when degenerate.

    Support from fewer than two contact links is treated as a point support
    and is degenerate by rule, whatever the proxy footprint.
    """
    floor = floor or model.floor
    idx = _link_indices(model, active_links)
    if len(idx) < 2:
        return None
    pts = np.vstack([_footprint(model, kin, i, floor) for i in idx])
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    return hull


def spine_direction(model: CharacterModel, kin) -> np.ndarray:
    """Unit vector from the root joint to the top spine joint, world frame."""
    top = model.joint_index[model.roles.get("spine_top", model.joints[1].name)]
    v = kin.link_p[top].real - kin.link_p[0].real
    return v / np.linalg.norm(v)


def assess_balance(model: CharacterModel, q, contact: ContactState,
                   floor: FloorPlane | None = None) -> BalanceAssessment:
    floor = floor or model.floor
    kin = forward_kinematics(model, q)
    cog = center_of_mass(model, kin)
    vb = spine_direction(model, kin)
    theta = float(np.arccos(np.clip(vb @ floor.normal, -1.0, 1.0)))
    hull = support_polygon(model, kin, contact.active_links(model), floor)
    if hull is None:
        return BalanceAssessment(cog, np.zeros((0, 2)), False, theta, vb)
    c2 = _floor_coords(floor, cog)
    inside = bool(np.all(hull.equations[:, :2] @ c2 + hull.equations[:, 2] <= 1e-12))
    return BalanceAssessment(cog, hull.points[hull.vertices], inside, theta, vb)


def _pitch_dof(model: CharacterModel, joint: str) -> int:
    """Index of the joint DoF whose axis is closest to the lateral (y) axis."""
    j = model.joints[model.joint_index[joint]]
    k = int(np.argmax(np.abs(j.axes[:, 1])))
    return model.dof_slice(joint).start + k


def _leg_dofs(model: CharacterModel) -> dict[str, dict[str, int]]:
    roles = model.roles
    return {"knee": {n: _pitch_dof(model, n) for n in roles.get("knees", ())},
            "hip": {n: _pitch_dof(model, n) for n in roles.get("hips", ())}}


def apply_correction(model: CharacterModel, q_kin, acc: CorrectionAccumulators,
                     floor: FloorPlane | None = None) -> np.ndarray:
    """``q_kin`` with the accumulated corrections applied."""
    floor = floor or model.floor
    q = np.array(q_kin, dtype=float)
    if acc.xi:
        vb = spine_direction(model, forward_kinematics(model, q))
        n = floor.normal
        axis = np.cross(n, vb - (vb @ n) * n)
        norm = np.linalg.norm(axis)
        if norm > 1e-12:
            Rc = Rotation.from_rotvec(-acc.xi * axis / norm).as_matrix()
            q[3:6] = root_euler_from_matrix(model, Rc @ root_rotation(model, q))
    for kind, dofs in _leg_dofs(model).items():
        store = getattr(acc, kind)
        for name, d in dofs.items():
            k = store.get(name, 0.0)
            if k:
                q[d] = np.sign(q[d]) * max(abs(q[d]) - k, 0.0)
    return q


def correct_pose(model: CharacterModel, q_kin, assessment: BalanceAssessment,
                 acc: CorrectionAccumulators, stationary: bool, *,
                 theta_small: float = THETA_SMALL, q_current=None) -> tuple[np.ndarray, bool]:
    """One correction step. ``assessment`` is of the currently corrected pose.

    Returns the corrected pose and whether a correction step was taken. When
    the criteria do not hold the input is returned unchanged and the
    accumulators are reset.
    """
    if not stationary or assessment.cog_inside:
        acc.reset()
        return np.array(q_kin, dtype=float), False
    acc.xi += CORRECTION_RATE * assessment.theta
    if assessment.theta < theta_small:
        q_cur = apply_correction(model, q_kin, acc) if q_current is None else q_current
        for kind, dofs in _leg_dofs(model).items():
            store = getattr(acc, kind)
            for name, d in dofs.items():
                store[name] = store.get(name, 0.0) + CORRECTION_RATE * abs(q_cur[d])
    return apply_correction(model, q_kin, acc), True


class BalanceCorrector:
    """Per-sequence correction state.

    Each frame the input pose is checked first: if it is non-stationary or
    already balanced the accumulators reset and the pose passes through.
    Otherwise the accumulated correction is applied and re-assessed; the
    accumulators only grow while that corrected pose is still unbalanced.
    """

    def __init__(self, model: CharacterModel, floor: FloorPlane | None = None,
                 theta_small: float = THETA_SMALL):
        self.model = model
        self.floor = floor or model.floor
        self.theta_small = theta_small
        self.acc = CorrectionAccumulators()
        self.last: BalanceAssessment | None = None

    def reset(self):
        self.acc.reset()
        self.last = None

    def step(self, q_kin, contact: ContactState) -> tuple[np.ndarray, bool]:
        m = self.model
        raw = assess_balance(m, q_kin, contact, self.floor)
        self.last = raw
        if not contact.stationary or raw.cog_inside:
            self.acc.reset()
            return np.array(q_kin, dtype=float), False
        q_cur = apply_correction(m, q_kin, self.acc, self.floor) if not self.acc.is_zero \
            else np.array(q_kin, dtype=float)
        cur = raw if self.acc.is_zero else assess_balance(m, q_cur, contact, self.floor)
        self.last = cur
        if cur.cog_inside:
            return q_cur, False
        return correct_pose(m, q_kin, cur, self.acc, True, theta_small=self.theta_small,
                            q_current=q_cur)
