"""Deterministic synthetic motions with exact contact labels.

Each generator returns the clean reference, the corrupted input (equal to
the clean one unless the kind corrupts it) and per-frame contact labels
known by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial.transform import Rotation

from .character import CharacterModel, ConfigError, standing_pose
from .contact import ContactState
from .dynamics import contact_points, forward_kinematics, root_euler_from_matrix
from .io import MotionSequence

KINDS = ("stand", "lean", "squat", "walk", "jitter-overlay", "drop-below-floor")


@dataclass(frozen=True)
class SyntheticMotionSpec:
    kind: str = "stand"
    frames: int = 100
    fps: float = 25.0
    amplitude: float = 0.4  # squat: hip flexion peak (rad); lean: angle (rad)
    frequency: float = 0.5  # squat cycles per second
    step_length: float = 0.4  # walk, m
    cycle_time: float = 1.6  # walk, s per full gait cycle
    step_height: float = 0.08  # walk swing clearance, m
    base: str = "squat"  # source motion for jitter-overlay / drop-below-floor
    angle_noise: float = 0.0  # rad, joint angles
    position_noise: float = 0.0  # m, root translation
    depth: float = 0.03  # drop-below-floor, m
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown synthetic kind {self.kind!r}; expected one of {KINDS}")
        if self.base not in KINDS[:4]:
            raise ConfigError(f"base must be one of {KINDS[:4]}")
        checks = {"frames": (0, 100000), "fps": (1e-6, 1000.0), "amplitude": (0.0, 1.2),
                  "frequency": (0.0, 5.0), "step_length": (0.0, 0.8), "cycle_time": (0.4, 10.0),
                  "step_height": (0.0, 0.3), "angle_noise": (0.0, 0.5),
                  "position_noise": (0.0, 0.1), "depth": (0.0, 0.2)}
        for k, (lo, hi) in checks.items():
            v = getattr(self, k)
            if not lo <= v <= hi:
                raise ConfigError(f"{k}={v} outside [{lo}, {hi}]")

    @classmethod
    def from_dict(cls, d) -> "SyntheticMotionSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown synthetic parameter(s): {sorted(unknown)}")
        return cls(**d)


@dataclass
class SyntheticMotion:
    clean: MotionSequence
    corrupted: MotionSequence
    contacts: list  # ContactState per frame
    spec: SyntheticMotionSpec


def _dof(model: CharacterModel, joint: str, k: int) -> int:
    return model.dof_slice(joint).start + k


def _plant(model: CharacterModel, q: np.ndarray, anchor_xy=None) -> np.ndarray:
    """Translate the root so the lowest contact point touches the floor and,
    when given, the mean of the contact points sits at ``anchor_xy``."""
    pts = contact_points(model, forward_kinematics(model, q))
    q = q.copy()
    n = model.floor.normal
    q[:3] -= n * float(np.min(model.floor.height(pts)))
    if anchor_xy is not None:
        c = pts.mean(axis=0)
        shift = np.asarray(anchor_xy) - c
        q[:3] += shift - (shift @ n) * n
    return q


def _stand(model, spec, t):
    q = standing_pose(model)
    return np.repeat(q[None], len(t), axis=0), np.ones((len(t), 4), bool), np.ones(len(t), bool)


def lean_pose(model: CharacterModel, angle: float) -> np.ndarray:
    """Standing pose pitched forward by ``angle`` about the ankle axis."""
    q = standing_pose(model)
    kin = forward_kinematics(model, q)
    ank = 0.5 * (kin.link_p[model.joint_index["left_ankle"]] + kin.link_p[model.joint_index["right_ankle"]])
    R = Rotation.from_rotvec([0.0, angle, 0.0]).as_matrix()
    q[3:6] = root_euler_from_matrix(model, R)
    q[:3] = ank + R @ (q[:3] - ank)
    return q


def _lean(model, spec, t):
    q = lean_pose(model, spec.amplitude)
    return np.repeat(q[None], len(t), axis=0), np.ones((len(t), 4), bool), np.ones(len(t), bool)


def _squat(model, spec, t):
    q0 = standing_pose(model)
    anchor = contact_points(model, forward_kinematics(model, q0)).mean(axis=0)
    a = 0.5 * spec.amplitude * (1.0 - np.cos(2 * np.pi * spec.frequency * t))
    out = []
    for ai in a:
        q = q0.copy()
        for s in ("left", "right"):
            q[_dof(model, f"{s}_hip", 1)] = -ai
            q[_dof(model, f"{s}_knee", 0)] = 2 * ai
            q[_dof(model, f"{s}_ankle", 0)] = -ai
        out.append(_plant(model, q, anchor))
    T = len(t)
    # root speed stays below 0.2 m/s only for gentle squats; label from the motion
    qs = np.array(out)
    v = np.gradient(qs[:, :3], 1.0 / spec.fps, axis=0) if T > 1 else np.zeros((T, 3))
    return qs, np.ones((T, 4), bool), np.linalg.norm(v, axis=1) < 0.2


def _smoothstep7(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 4 * (35 - 84 * s + 70 * s ** 2 - 20 * s ** 3)


def _leg_ik(hip, ankle, L1, L2):
    """Sagittal hip pitch and knee flexion placing the ankle at ``ankle``."""
    d = ankle - hip
    dx, dz = d[0], d[2]
    r = min(np.hypot(dx, dz), L1 + L2 - 1e-9)
    ck = (r * r - L1 * L1 - L2 * L2) / (2 * L1 * L2)
    k = float(np.arccos(np.clip(ck, -1.0, 1.0)))
    beta = np.arctan2(-dx, -dz)
    alpha = np.arctan2(L2 * np.sin(k), L1 + L2 * np.cos(k))
    return float(beta - alpha), k


def _foot_track(ti: float, first_swing: float, first_stride: float, stride: float,
                cycle: float, duration: float) -> tuple[float, float]:
    """Forward offset and swing parameter (0 stance, in (0, 1) swinging)."""
    if ti < first_swing:
        return 0.0, 0.0
    k, rem = divmod(ti - first_swing, cycle)
    x = first_stride + k * stride
    if rem < duration:
        s = rem / duration
        x0 = 0.0 if k == 0 else first_stride + (k - 1) * stride
        return x0 + (x - x0) * _smoothstep7(s), s
    return x, 0.0


def _walk(model, spec, t):
    """Straight gait along +x after a 10-frame double-support start.

    Each foot swings for 80% of a half cycle with a seventh-order smoothstep
    profile; the right foot makes a half stride first. The root follows the
    mean of the two feet and sinks 3 cm so the legs stay within reach.
    Contact labels are exact: a foot is down whenever it is not swinging.
    """
    q0 = standing_pose(model)
    kin0 = forward_kinematics(model, q0)
    L1 = abs(model.joints[model.joint_index["left_knee"]].offset[2])
    L2 = abs(model.joints[model.joint_index["left_ankle"]].offset[2])
    sides = ("left", "right")
    hip_off = {s: kin0.link_p[model.joint_index[f"{s}_hip"]] - q0[:3] for s in sides}
    ank0 = {s: kin0.link_p[model.joint_index[f"{s}_ankle"]].copy() for s in sides}
    C, H, L = spec.cycle_time, spec.cycle_time / 2, spec.step_length
    D = 0.8 * H
    T = len(t)
    tw = np.maximum(t - 10 / spec.fps, 0.0)
    qs, contact = [], np.ones((T, 4), bool)
    for i, ti in enumerate(tw):
        q = q0.copy()
        xf, sw = {}, {}
        xf["right"], sw["right"] = _foot_track(ti, 0.0, L, 2 * L, C, D)
        xf["left"], sw["left"] = _foot_track(ti, H, 2 * L, 2 * L, C, D)
        q[0] = q0[0] + 0.5 * (xf["left"] + xf["right"])
        q[2] = q0[2] - 0.03 * _smoothstep7(ti / H)
        for side, col in (("left", 0), ("right", 2)):
            s = sw[side]
            swinging = 0.0 < s < 1.0
            contact[i, col:col + 2] = not swinging
            z = spec.step_height * np.sin(np.pi * s) ** 2 if swinging else 0.0
            target = ank0[side] + np.array([xf[side], 0.0, z])
            h, k = _leg_ik(q[:3] + hip_off[side], target, L1, L2)
            q[_dof(model, f"{side}_hip", 1)] = h
            q[_dof(model, f"{side}_knee", 0)] = k
            q[_dof(model, f"{side}_ankle", 0)] = -(h + k)
        qs.append(q)
    qs = np.array(qs).reshape(-1, model.dof_count)
    v = np.gradient(qs[:, :3], 1.0 / spec.fps, axis=0) if T > 1 else np.zeros((T, 3))
    return qs, contact, np.linalg.norm(v, axis=1) < 0.2


_BASES = {"stand": _stand, "lean": _lean, "squat": _squat, "walk": _walk}


def generate_synthetic(spec: SyntheticMotionSpec, model: CharacterModel) -> SyntheticMotion:
    """Deterministic in ``spec`` (including ``spec.seed``)."""
    t = np.arange(spec.frames) / spec.fps
    kind = spec.kind if spec.kind in _BASES else spec.base
    qs, contact, stationary = _BASES[kind](model, spec, t)
    qs = qs.reshape(-1, model.dof_count)
    noisy = qs.copy()
    if spec.kind == "jitter-overlay":
        rng = np.random.default_rng(spec.seed)
        noisy[:, 6:] += rng.normal(0.0, spec.angle_noise, noisy[:, 6:].shape) if spec.angle_noise else 0.0
        noisy[:, :3] += rng.normal(0.0, spec.position_noise, noisy[:, :3].shape) if spec.position_noise else 0.0
    elif spec.kind == "drop-below-floor":
        noisy[:, :3] -= model.floor.normal * spec.depth
    clean = MotionSequence.from_model(model, qs, spec.fps)
    corrupted = MotionSequence.from_model(model, noisy, spec.fps)
    states = [ContactState(bool(stationary[i]), tuple(contact[i]), i) for i in range(len(qs))]
    return SyntheticMotion(clean, corrupted, states, spec)
