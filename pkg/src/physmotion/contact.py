"""Contact and motion-state labels.

A :class:`ContactState` holds five flags: ``stationary`` plus one contact
flag per foot link in the fixed order left heel, left forefoot, right heel,
right forefoot (:data:`~physmotion.character.FOOT_LINK_ORDER`).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .character import FOOT_LINK_ORDER, CharacterModel, FloorPlane
from .dynamics import Kinematics, forward_kinematics, _link_indices

CALIBRATION_FRAMES = 10


@dataclass(frozen=True)
class ContactState:
    stationary: bool
    contact: tuple[bool, bool, bool, bool]
    frame: int = 0

    def __post_init__(self):
        c = tuple(bool(x) for x in self.contact)
        if len(c) != 4:
            raise ValueError("contact state needs exactly 4 foot flags")
        object.__setattr__(self, "contact", c)
        object.__setattr__(self, "stationary", bool(self.stationary))

    def as_vector(self) -> np.ndarray:
        """The 5-vector ``(stationary, lh, lf, rh, rf)`` as 0/1."""
        return np.array((self.stationary,) + self.contact, dtype=int)

    @classmethod
    def from_vector(cls, b, frame: int = 0) -> "ContactState":
        b = np.asarray(b).astype(bool)
        return cls(bool(b[0]), tuple(b[1:5]), frame)

    @property
    def any_contact(self) -> bool:
        return any(self.contact)

    def active_links(self, model: CharacterModel) -> tuple[str, ...]:
        return tuple(l for l, on in zip(model.foot_links, self.contact) if on)


@dataclass(frozen=True)
class ContactThresholds:
    slide_velocity_max: float = 0.05  # m/s
    height_margin: float = 0.05  # m, above the calibrated foot height
    root_stationary_velocity: float = 0.2  # m/s, phi_v
    refine_height: float = 0.1  # m, psi

    def __post_init__(self):
        for k in ("slide_velocity_max", "height_margin", "root_stationary_velocity",
                  "refine_height"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")


def _speeds(tracks: np.ndarray, fps: float) -> np.ndarray:
    # central differences inside, one-sided at the ends
    v = np.gradient(tracks, 1.0 / fps, axis=0)
    return np.linalg.norm(v, axis=-1)


def label_contacts(joint_positions, joint_names, fps: float,
                   thresholds: ContactThresholds | None = None, floor: FloorPlane | None = None,
                   *, root: str = "pelvis", foot_joints=FOOT_LINK_ORDER) -> list[ContactState]:
    """Heuristic labels from 3D joint tracks of shape (T, S, 3).

    A foot joint is in contact when it moves slower than
    ``slide_velocity_max`` and is lower than its mean height over the first
    ten frames plus ``height_margin``; those frames are assumed to have both
    feet down. The pose is stationary when the root moves slower than
    ``root_stationary_velocity``.
    """
    th = thresholds or ContactThresholds()
    floor = floor or FloorPlane()
    P = np.asarray(joint_positions, dtype=float)
    if P.ndim != 3 or P.shape[2] != 3:
        raise ValueError("joint positions must have shape (T, S, 3)")
    if not fps > 0:
        raise ValueError("fps must be positive")
    T = P.shape[0]
    if T < CALIBRATION_FRAMES:
        raise ValueError(f"need at least {CALIBRATION_FRAMES} frames, got {T}")
    names = list(joint_names)
    missing = [j for j in (root, *foot_joints) if j not in names]
    if missing:
        raise KeyError(f"missing joint track(s): {missing}")
    feet = P[:, [names.index(j) for j in foot_joints]]
    h = floor.height(feet)
    h_thres = h[:CALIBRATION_FRAMES].mean(axis=0) + th.height_margin
    contact = (_speeds(feet, fps) < th.slide_velocity_max) & (h < h_thres)
    stationary = _speeds(P[:, names.index(root)], fps) < th.root_stationary_velocity
    return [ContactState(bool(stationary[t]), tuple(contact[t]), t) for t in range(T)]


@dataclass
class FloorCollision:
    colliding: np.ndarray  # (4,) bool
    depth: np.ndarray  # (4,) penetration depth >= 0
    distance: np.ndarray  # (4,) signed proxy-to-floor clearance (< 0 when penetrating)
    height: np.ndarray  # (4,) link origin height above the floor


def check_floor_collision(model: CharacterModel, q_or_kin, floor: FloorPlane | None = None) -> FloorCollision:
    """Proxy vs half-space test for the foot links.

    Touching (clearance exactly 0) counts as a collision with depth 0.
    """
    floor = floor or model.floor
    kin = q_or_kin if isinstance(q_or_kin, Kinematics) else forward_kinematics(model, q_or_kin)
    idx = _link_indices(model, None)
    n = floor.normal
    centre = kin.link_p[idx].real
    h = floor.height(centre)
    ext = np.array([model.links[i].proxy.support(kin.link_R[i].real, n)
                    if model.links[i].proxy is not None else 0.0 for i in idx])
    dist = h - ext
    return FloorCollision(dist <= 0.0, np.maximum(-dist, 0.0), dist, h)


def refine_contacts(predicted: ContactState, model: CharacterModel, q_or_kin,
                    floor: FloorPlane | None = None, psi: float = 0.1) -> ContactState:
    """``b'_j = (b_j and h_j < psi) or proxy j touches the floor``."""
    col = check_floor_collision(model, q_or_kin, floor)
    b = np.asarray(predicted.contact, dtype=bool)
    refined = (b & (col.height < psi)) | col.colliding
    return ContactState(predicted.stationary, tuple(refined), predicted.frame)
