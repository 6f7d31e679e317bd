"""Floating-base rigid-body dynamics.

Every Euler DoF is a single-axis revolute joint and the root translation is
three prismatic joints, so the model is a tree of one-DoF joints plus fixed
attachments. Spatial vectors are expressed in world coordinates at the world
origin with ``[angular; linear]`` ordering, which lets the composite rigid
body algorithm and recursive Newton-Euler run as dense array operations over
the ancestor masks instead of Python-level recursion.

Equation of motion, with the sign convention used throughout::

    M(q) qddot - tau = J^T G lambda - c(q, qdot)
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .character import CharacterModel

GIMBAL_MARGIN = 1e-3


@dataclass
class PoseState:
    q: np.ndarray
    qdot: np.ndarray
    qddot: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qdot = np.asarray(self.qdot, dtype=float)
        if self.qddot is None:
            self.qddot = np.zeros_like(self.q)
        self.qddot = np.asarray(self.qddot, dtype=float)
        if not (self.q.shape == self.qdot.shape == self.qddot.shape and self.q.ndim == 1):
            raise ValueError("q, qdot and qddot must be vectors of equal length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))
                and np.all(np.isfinite(self.qddot))):
            raise ValueError("pose state must be finite")

    def copy(self) -> "PoseState":
        return PoseState(self.q.copy(), self.qdot.copy(), self.qddot.copy())


@dataclass
class Tree:
    """Flattened kinematic tree of a character (see :func:`tree`)."""

    frame_parent: np.ndarray
    frame_offset: np.ndarray
    frame_axis: np.ndarray
    frame_kind: list  # "P", "R" or "F"
    frame_dof: np.ndarray
    dof_frame: np.ndarray
    link_frame: np.ndarray
    link_last_dof: np.ndarray
    anc: np.ndarray  # (m, m) anc[d, e]: e is d or an ancestor of d
    link_dofs: np.ndarray  # (L, m) DoFs moving link l
    mass: np.ndarray
    com_local: np.ndarray
    inertia_local: np.ndarray
    foot_index: np.ndarray
    skew: np.ndarray = field(repr=False)
    skew2: np.ndarray = field(repr=False)


def tree(model: CharacterModel) -> Tree:
    cached = model.__dict__.get("_tree")
    if cached is not None:
        return cached
    parents, offsets, axes, kinds, dofs = [], [], [], [], []

    def add(parent, offset, axis, kind, dof):
        parents.append(parent)
        offsets.append(np.asarray(offset, float))
        axes.append(np.asarray(axis, float))
        kinds.append(kind)
        dofs.append(dof)
        return len(parents) - 1

    prev = -1
    for k in range(3):
        prev = add(prev, np.zeros(3), np.eye(3)[k], "P", k)
    from .character import euler_axes
    for k, ax in enumerate(euler_axes(model.root_euler)):
        prev = add(prev, np.zeros(3), ax, "R", 3 + k)
    link_frame = [prev]
    d = 6
    for j in model.joints[1:]:
        pf = link_frame[model.joint_index[j.parent]]
        if j.dof == 0:
            link_frame.append(add(pf, j.offset, np.zeros(3), "F", -1))
            continue
        f = pf
        for k, ax in enumerate(j.axes):
            f = add(f, j.offset if k == 0 else np.zeros(3), ax, "R", d)
            d += 1
        link_frame.append(f)
    m = d
    nf = len(parents)
    frame_parent = np.array(parents)
    frame_dof = np.array(dofs)
    dof_frame = np.array([int(np.where(frame_dof == k)[0][0]) for k in range(m)])

    # nearest DoF at or above each frame
    last_dof = np.full(nf, -1)
    for f in range(nf):
        last_dof[f] = frame_dof[f] if frame_dof[f] >= 0 else last_dof[frame_parent[f]]
    anc = np.zeros((m, m), dtype=bool)
    for k in range(m):
        f = dof_frame[k]
        while f >= 0:
            if frame_dof[f] >= 0:
                anc[k, frame_dof[f]] = True
            f = frame_parent[f]
    link_frame = np.array(link_frame)
    link_last_dof = last_dof[link_frame]
    link_dofs = anc[link_last_dof]

    axes_arr = np.array(axes)
    skew = np.array([_skew(a) for a in axes_arr])
    t = Tree(frame_parent=frame_parent, frame_offset=np.array(offsets), frame_axis=axes_arr,
             frame_kind=kinds, frame_dof=frame_dof, dof_frame=dof_frame,
             link_frame=link_frame, link_last_dof=link_last_dof, anc=anc,
             link_dofs=link_dofs,
             mass=np.array([l.mass for l in model.links]),
             com_local=np.array([l.com for l in model.links]),
             inertia_local=np.array([l.inertia for l in model.links]),
             foot_index=np.array([model.joint_index[n] for n in model.foot_links], dtype=int),
             skew=skew, skew2=skew @ skew)
    object.__setattr__(model, "_tree", t)  # derived data; the model stays logically immutable
    return t


def _skew(v) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


@dataclass
class Kinematics:
    """World poses of every frame plus per-link and per-DoF views."""

    R: np.ndarray  # (nf, 3, 3)
    p: np.ndarray  # (nf, 3)
    link_R: np.ndarray
    link_p: np.ndarray  # joint positions
    com: np.ndarray  # link COMs, world
    dof_axis: np.ndarray  # (m, 3)
    dof_origin: np.ndarray  # (m, 3)
    S: np.ndarray  # (m, 6) world spatial motion axes


def forward_kinematics(model: CharacterModel, q) -> Kinematics:
    """World transforms of all frames and links. Works for complex ``q`` too."""
    t = tree(model)
    q = np.asarray(q)
    dtype = np.result_type(q.dtype, float)
    nf = len(t.frame_parent)
    R = np.empty((nf, 3, 3), dtype=dtype)
    p = np.empty((nf, 3), dtype=dtype)
    eye = np.eye(3)
    for f in range(nf):
        par = t.frame_parent[f]
        Rp = eye if par < 0 else R[par]
        pp = np.zeros(3) if par < 0 else p[par]
        kind = t.frame_kind[f]
        if kind == "R":
            a = q[t.frame_dof[f]]
            rot = eye + np.sin(a) * t.skew[f] + (1.0 - np.cos(a)) * t.skew2[f]
            R[f] = Rp @ rot
            p[f] = pp + Rp @ t.frame_offset[f]
        elif kind == "P":
            R[f] = Rp
            p[f] = pp + Rp @ (t.frame_offset[f] + t.frame_axis[f] * q[t.frame_dof[f]])
        else:
            R[f] = Rp
            p[f] = pp + Rp @ t.frame_offset[f]
    link_R = R[t.link_frame]
    link_p = p[t.link_frame]
    com = link_p + np.einsum("lij,lj->li", link_R, t.com_local)
    df = t.dof_frame
    axis = np.einsum("dij,dj->di", R[df], t.frame_axis[df])
    origin = p[df]
    S = np.zeros((len(df), 6), dtype=dtype)
    rev = np.array([t.frame_kind[f] == "R" for f in df])
    S[rev, :3] = axis[rev]
    S[rev, 3:] = np.cross(origin[rev], axis[rev])
    S[~rev, 3:] = axis[~rev]
    return Kinematics(R, p, link_R, link_p, com, axis, origin, S)


def _kin(model, q_or_kin) -> Kinematics:
    return q_or_kin if isinstance(q_or_kin, Kinematics) else forward_kinematics(model, q_or_kin)


def spatial_inertias(model: CharacterModel, kin: Kinematics) -> np.ndarray:
    """(L, 6, 6) link spatial inertias about the world origin."""
    t = tree(model)
    m = t.mass
    Iw = np.einsum("lij,ljk,lmk->lim", kin.link_R, t.inertia_local, kin.link_R)
    cx = np.zeros((len(m), 3, 3), dtype=kin.com.dtype)
    c = kin.com
    cx[:, 0, 1], cx[:, 0, 2] = -c[:, 2], c[:, 1]
    cx[:, 1, 0], cx[:, 1, 2] = c[:, 2], -c[:, 0]
    cx[:, 2, 0], cx[:, 2, 1] = -c[:, 1], c[:, 0]
    out = np.zeros((len(m), 6, 6), dtype=kin.com.dtype)
    out[:, :3, :3] = Iw - m[:, None, None] * (cx @ cx)
    out[:, :3, 3:] = m[:, None, None] * cx
    out[:, 3:, :3] = -m[:, None, None] * cx
    out[:, 3:, 3:] = m[:, None, None] * np.eye(3)
    return out


def mass_matrix(model: CharacterModel, q_or_kin) -> np.ndarray:
    """Joint-space inertia matrix by the composite rigid body algorithm."""
    t = tree(model)
    kin = _kin(model, q_or_kin)
    Ic = np.einsum("ld,lab->dab", t.link_dofs.astype(float), spatial_inertias(model, kin))
    F = np.einsum("dab,db->da", Ic, kin.S)
    M = np.where(t.anc, F @ kin.S.T, 0.0)
    return M + M.T - np.diag(np.diag(M))


def _cross_motion(v, u):
    """Spatial motion cross product v x u (broadcast over leading axes)."""
    w, vo = v[..., :3], v[..., 3:]
    return np.concatenate([np.cross(w, u[..., :3]),
                           np.cross(w, u[..., 3:]) + np.cross(vo, u[..., :3])], axis=-1)


def _cross_force(v, f):
    w, vo = v[..., :3], v[..., 3:]
    return np.concatenate([np.cross(w, f[..., :3]) + np.cross(vo, f[..., 3:]),
                           np.cross(w, f[..., 3:])], axis=-1)


def gravity_vector(model: CharacterModel, gravity: float | None = None) -> np.ndarray:
    g = model.gravity if gravity is None else gravity
    return -g * model.floor.normal


def inverse_dynamics(model: CharacterModel, q_or_kin, qdot, qddot, gravity=None) -> np.ndarray:
    """Recursive Newton-Euler: generalized forces producing ``qddot``.

    ``qddot`` may be a batch of shape (k, m). ``gravity`` is a magnitude
    along the floor normal (default: model gravity) or a world 3-vector.
    """
    t = tree(model)
    kin = _kin(model, q_or_kin)
    S = kin.S
    qdot = np.asarray(qdot)
    qddot = np.asarray(qddot)
    g = np.asarray(gravity, float) if np.ndim(gravity) == 1 else gravity_vector(model, gravity)
    anc = t.anc.astype(float)
    V = anc @ (S * qdot[:, None])
    Vpre = V - S * qdot[:, None]
    bias = _cross_motion(Vpre, S) * qdot[:, None]
    a0 = np.concatenate([np.zeros(3), -g])
    A = np.einsum("de,...ea->...da", anc, S * qddot[..., :, None] + bias) + a0
    I = spatial_inertias(model, kin)
    Vl = V[t.link_last_dof]
    Al = A[..., t.link_last_dof, :]
    f = np.einsum("lab,...lb->...la", I, Al) + _cross_force(Vl, np.einsum("lab,lb->la", I, Vl))
    Fsub = np.einsum("ld,...la->...da", t.link_dofs.astype(float), f)
    return np.einsum("da,...da->...d", S, Fsub)


def bias_forces(model: CharacterModel, q_or_kin, qdot, gravity=None) -> np.ndarray:
    """Gravity, Coriolis and centripetal terms ``c(q, qdot)``."""
    return inverse_dynamics(model, q_or_kin, qdot, np.zeros(model.dof_count), gravity)


def forward_dynamics(model: CharacterModel, q, qdot, tau, gravity=None) -> np.ndarray:
    kin = forward_kinematics(model, q)
    M = mass_matrix(model, kin)
    return np.linalg.solve(M, np.asarray(tau) - bias_forces(model, kin, qdot, gravity))


def contact_points(model: CharacterModel, kin: Kinematics, links=None) -> np.ndarray:
    """Contact point of each (default: every foot) link proxy: the centre
    moved to the proxy surface against the floor normal."""
    idx = _link_indices(model, links)
    n = model.floor.normal
    out = np.empty((len(idx), 3), dtype=kin.link_p.dtype)
    for k, i in enumerate(idx):
        proxy = model.links[i].proxy
        depth = proxy.support(kin.link_R[i].real, n) if proxy is not None else 0.0
        out[k] = kin.link_p[i] - depth * n
    return out


def _link_indices(model, links) -> list[int]:
    if links is None:
        return list(tree(model).foot_index)
    return [l if isinstance(l, (int, np.integer)) else model.joint_index[l] for l in links]


def point_jacobian(model: CharacterModel, kin: Kinematics, link, point) -> np.ndarray:
    """(6, m) map from qdot to [angular velocity; velocity of ``point``]
    for a point rigidly attached to ``link``."""
    t = tree(model)
    i = _link_indices(model, [link])[0]
    mask = t.link_dofs[i]
    S = kin.S
    J = np.zeros((6, model.dof_count), dtype=S.dtype)
    J[:3, mask] = S[mask, :3].T
    J[3:, mask] = (S[mask, 3:] + np.cross(S[mask, :3], point)).T
    return J


def contact_jacobian(model: CharacterModel, q_or_kin, active_links) -> np.ndarray:
    """Stacked (6 N_c, m) Jacobians of the active contact points, mixed frame:
    world-aligned, linear part at the contact point."""
    kin = _kin(model, q_or_kin)
    idx = _link_indices(model, active_links)
    if not idx:
        return np.zeros((0, model.dof_count))
    pts = contact_points(model, kin, idx)
    return np.vstack([point_jacobian(model, kin, i, p) for i, p in zip(idx, pts)])


def contact_frame(model: CharacterModel) -> np.ndarray:
    """Columns (n, t, b) of the contact frame shared by all floor contacts."""
    t, b = model.floor.tangents()
    return np.column_stack([model.floor.normal, t, b])


def force_transform(model: CharacterModel, active_links) -> np.ndarray:
    """(6 N_c, 3 N_c) map from per-contact (lambda_n, lambda_t, lambda_b) to
    the [moment; force] wrench at each contact point."""
    nc = len(active_links)
    G = np.zeros((6 * nc, 3 * nc))
    Rc = contact_frame(model)
    for j in range(nc):
        G[6 * j + 3:6 * j + 6, 3 * j:3 * j + 3] = Rc
    return G


@dataclass
class DynamicsQuantities:
    M: np.ndarray
    c: np.ndarray
    J: np.ndarray
    G: np.ndarray
    active: tuple
    points: np.ndarray  # contact points of active links, world
    kin: Kinematics = field(repr=False)

    @property
    def n_contacts(self) -> int:
        return len(self.active)

    @property
    def J_linear(self) -> np.ndarray:
        """(3 N_c, m) contact point velocity Jacobian."""
        if not self.active:
            return np.zeros((0, self.M.shape[0]))
        return np.vstack([self.J[6 * j + 3:6 * j + 6] for j in range(len(self.active))])


def compute_dynamics(model: CharacterModel, q, qdot, active_links=(), gravity=None) -> DynamicsQuantities:
    kin = forward_kinematics(model, q)
    active = tuple(active_links)
    idx = _link_indices(model, active)
    return DynamicsQuantities(
        M=mass_matrix(model, kin), c=bias_forces(model, kin, qdot, gravity),
        J=contact_jacobian(model, kin, idx), G=force_transform(model, idx),
        active=active, points=contact_points(model, kin, idx) if idx else np.zeros((0, 3)),
        kin=kin)


def wrap_angle(a):
    """Wrap to (-pi, pi]; values already in range are returned unchanged."""
    a = np.asarray(a)
    inside = (a > -np.pi) & (a <= np.pi)
    return np.where(inside, a, np.pi - np.mod(np.pi - a, 2 * np.pi))


def integrate(model: CharacterModel | None, state: PoseState, qddot, phi: float = 0.01) -> PoseState:
    """One semi-implicit Euler step::

        qdot+ = qdot + phi * qddot
        q+    = q + phi * qdot+

    Angular coordinates are wrapped to (-pi, pi]. With a model, a root whose
    middle Euler angle is within 1e-3 of +-pi/2 is re-extracted from its
    rotation matrix.
    """
    if not phi > 0:
        raise ValueError("step size must be positive")
    qddot = np.asarray(qddot, dtype=float)
    if not np.all(np.isfinite(qddot)):
        raise FloatingPointError("non-finite acceleration")
    qdot = state.qdot + phi * qddot
    q = state.q + phi * qdot
    if model is not None:
        ang = model.angular_mask()
        q[ang] = wrap_angle(q[ang])
        if abs(abs(q[4]) - np.pi / 2) < GIMBAL_MARGIN:
            q[3:6] = root_euler_from_matrix(model, root_rotation(model, q))
    else:
        q[3:] = wrap_angle(q[3:])
    return PoseState(q, qdot, qddot)


def root_rotation(model: CharacterModel, q) -> np.ndarray:
    return Rotation.from_euler(model.root_euler, q[3:6]).as_matrix()


def root_euler_from_matrix(model: CharacterModel, R) -> np.ndarray:
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # gimbal lock notice
        return Rotation.from_matrix(R).as_euler(model.root_euler)


def center_of_mass(model: CharacterModel, kin: Kinematics) -> np.ndarray:
    m = tree(model).mass
    return (m @ kin.com.real) / m.sum()


def kinetic_energy(model: CharacterModel, q, qdot) -> float:
    M = mass_matrix(model, q)
    return 0.5 * float(qdot @ M @ qdot)
