"""Motion files and contact-label CSVs.

Motion file (JSON)::

    {"schema_version": 1, "fps": 25.0,
     "binding": {"dofs": [...DoF names...], "joints": [...joint names...]},
     "frames": [{"t": 0.0, "q": [...], "positions": [[x, y, z], ...],
                 "keypoints": {"cam0": [[u, v], ...]}}, ...]}

``positions`` and ``keypoints`` are optional but must be present on every
frame or on none. Floats are written with ``repr`` precision, so a write/read
round trip is bitwise lossless.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .character import ConfigError, CharacterModel
from .contact import ContactState

MOTION_SCHEMA_VERSION = 1


class MotionFormatError(ConfigError):
    pass


@dataclass
class MotionSequence:
    fps: float
    q: np.ndarray  # (T, m)
    dof_names: tuple[str, ...]
    joint_names: tuple[str, ...] = ()
    positions: np.ndarray | None = None  # (T, S, 3)
    keypoints: dict = field(default_factory=dict)  # camera -> (T, S, 2)
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise MotionFormatError(f"fps must be positive, got {self.fps}")
        self.q = np.asarray(self.q, dtype=float).reshape(-1, len(self.dof_names))
        self.dof_names = tuple(self.dof_names)
        self.joint_names = tuple(self.joint_names)
        T = len(self.q)
        if self.timestamps is None:
            self.timestamps = np.arange(T) / self.fps
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        if self.positions is not None:
            self.positions = np.asarray(self.positions, dtype=float)
            if self.positions.shape[:1] != (T,):
                raise MotionFormatError("positions must have one entry per frame")
        self.keypoints = {k: np.asarray(v, dtype=float) for k, v in self.keypoints.items()}

    def __len__(self) -> int:
        return len(self.q)

    def check_binding(self, model: CharacterModel) -> None:
        """Raise unless the DoF binding matches ``model`` exactly."""
        if self.q.shape[1] != model.dof_count:
            raise MotionFormatError(f"q has {self.q.shape[1]} entries, model has {model.dof_count}")
        extra = [n for n in self.dof_names if n not in model.dof_names]
        missing = [n for n in model.dof_names if n not in self.dof_names]
        if extra or missing or self.dof_names != model.dof_names:
            raise MotionFormatError(f"binding mismatch; unmatched in file: {extra}, "
                                    f"unmatched in model: {missing}")

    @classmethod
    def from_model(cls, model: CharacterModel, q, fps: float, **kw) -> "MotionSequence":
        return cls(fps, q, model.dof_names, tuple(j.name for j in model.joints), **kw)

    def equals(self, other: "MotionSequence") -> bool:
        """Exact equality of every field."""
        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)
        return (self.fps == other.fps and self.dof_names == other.dof_names
                and self.joint_names == other.joint_names and same(self.q, other.q)
                and same(self.timestamps, other.timestamps)
                and same(self.positions, other.positions)
                and self.keypoints.keys() == other.keypoints.keys()
                and all(same(self.keypoints[k], other.keypoints[k]) for k in self.keypoints))


def write_motion(seq: MotionSequence, path: str | Path) -> None:
    frames = []
    for t in range(len(seq)):
        f = {"t": float(seq.timestamps[t]), "q": seq.q[t].tolist()}
        if seq.positions is not None:
            f["positions"] = seq.positions[t].tolist()
        if seq.keypoints:
            f["keypoints"] = {k: v[t].tolist() for k, v in seq.keypoints.items()}
        frames.append(f)
    doc = {"schema_version": MOTION_SCHEMA_VERSION, "fps": seq.fps,
           "binding": {"dofs": list(seq.dof_names), "joints": list(seq.joint_names)},
           "frames": frames}
    Path(path).write_text(json.dumps(doc))


def read_motion(path: str | Path, model: CharacterModel | None = None) -> MotionSequence:
    """Parse and validate a motion file; bind against ``model`` when given."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise MotionFormatError(f"{path}: parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(doc, dict):
        raise MotionFormatError(f"{path}: top level must be an object")
    ver = doc.get("schema_version")
    if ver != MOTION_SCHEMA_VERSION:
        raise MotionFormatError(f"{path}: unsupported schema_version {ver!r}")
    for key in ("fps", "binding", "frames"):
        if key not in doc:
            raise MotionFormatError(f"{path}: missing field '{key}'")
    fps = doc["fps"]
    if not isinstance(fps, (int, float)) or not fps > 0:
        raise MotionFormatError(f"{path}: field 'fps' must be positive, got {fps!r}")
    dofs = tuple(doc["binding"].get("dofs", ()))
    joints = tuple(doc["binding"].get("joints", ()))
    frames = doc["frames"]
    m = len(dofs)
    q, pos, kps, ts = [], [], {}, []
    has_pos = bool(frames) and "positions" in frames[0]
    for i, f in enumerate(frames):
        qi = f.get("q")
        if not isinstance(qi, list) or len(qi) != m:
            raise MotionFormatError(f"{path}: frame {i}: q has length "
                                    f"{len(qi) if isinstance(qi, list) else 'n/a'}, expected {m}")
        q.append(qi)
        ts.append(f.get("t", i / fps))
        if ("positions" in f) != has_pos:
            raise MotionFormatError(f"{path}: frame {i}: positions present on some frames only")
        if has_pos:
            pos.append(f["positions"])
        for cam, kp in f.get("keypoints", {}).items():
            kps.setdefault(cam, []).append(kp)
    for cam, v in kps.items():
        if len(v) != len(frames):
            raise MotionFormatError(f"{path}: keypoints for '{cam}' missing on some frames")
    q = np.array(q, dtype=float).reshape(-1, m)
    if not np.all(np.isfinite(q)):
        bad = int(np.where(~np.isfinite(q).all(axis=1))[0][0])
        raise MotionFormatError(f"{path}: frame {bad}: non-finite q")
    seq = MotionSequence(float(fps), q, dofs, joints,
                         np.array(pos, dtype=float) if has_pos else None,
                         {k: np.array(v, dtype=float) for k, v in kps.items()},
                         np.array(ts, dtype=float))
    if model is not None:
        seq.check_binding(model)
    return seq


CONTACT_COLUMNS = ("frame", "stationary", "left_heel", "left_forefoot", "right_heel", "right_forefoot")


def write_contacts(states, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONTACT_COLUMNS)
        for s in states:
            w.writerow([s.frame, *s.as_vector().tolist()])


def read_contacts(path: str | Path) -> list[ContactState]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CONTACT_COLUMNS:
        raise MotionFormatError(f"{path}: header must be {','.join(CONTACT_COLUMNS)}")
    out = []
    for ln, r in enumerate(rows[1:], start=2):
        if len(r) != 6 or any(v not in ("0", "1") for v in r[1:]):
            raise MotionFormatError(f"{path}: line {ln}: expected frame and five 0/1 flags")
        out.append(ContactState.from_vector([int(v) for v in r[1:]], int(r[0])))
    return out
