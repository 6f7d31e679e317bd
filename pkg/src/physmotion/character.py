"""Articulated floating-base character, floor plane and camera.

A character is a tree of joints. Every joint owns exactly one link (the body
it moves) and contributes zero or more revolute degrees of freedom, one per
Euler axis. The root joint owns the floating base: three translations along
the world axes followed by three Euler rotations, so the generalized
coordinate vector is ``[root_xyz, root_euler, joint angles...]``.

Conventions: right-handed world, ``+z`` is up (the floor normal of the
default floor), SI units, radians.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

SCHEMA_VERSION = 1

FOOT_LINK_ORDER = ("left_heel", "left_forefoot", "right_heel", "right_forefoot")

_AXES = {"X": (1.0, 0.0, 0.0), "Y": (0.0, 1.0, 0.0), "Z": (0.0, 0.0, 1.0)}


class ConfigError(ValueError):
    """Raised when a character or pipeline configuration is invalid."""


class StructuralError(ConfigError):
    pass


class NumericError(ConfigError):
    pass


class DofCountError(ConfigError):
    pass


def euler_axes(order: str) -> np.ndarray:
    """Unit axes for an intrinsic Euler order such as ``"ZYX"``."""
    try:
        return np.array([_AXES[c] for c in order.upper()], dtype=float)
    except KeyError:
        raise ConfigError(f"bad Euler order {order!r}") from None


@dataclass(frozen=True)
class ContactProxy:
    """Collision proxy of a link, centred at the link origin."""

    shape: str  # "sphere" or "box"
    radius: float = 0.0
    half_extents: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def support(self, rotation: np.ndarray, normal: np.ndarray) -> float:
        """Extent of the proxy along ``-normal`` from its centre."""
        if self.shape == "sphere":
            return self.radius
        local_n = rotation.T @ normal
        return float(np.abs(local_n) @ np.asarray(self.half_extents))


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: str | None  # parent joint/link name; None for the root
    offset: np.ndarray  # in the parent link frame, metres
    axes: np.ndarray  # (k, 3) revolute axes applied in order (intrinsic)
    limits: np.ndarray | None = None  # (k, 2) lower/upper, radians

    @property
    def dof(self) -> int:
        return len(self.axes)


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    com: np.ndarray  # link frame
    inertia: np.ndarray  # about the COM, link frame
    proxy: ContactProxy | None = None


@dataclass(frozen=True)
class FloorPlane:
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    offset: float = 0.0
    mu: float = 0.8

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise NumericError("floor normal must be a unit 3-vector")
        if not self.mu > 0:
            raise NumericError("friction coefficient must be positive")
        object.__setattr__(self, "normal", n)

    def height(self, points: np.ndarray) -> np.ndarray:
        """Signed distance of ``points`` (..., 3) above the plane."""
        return np.asarray(points) @ self.normal - self.offset

    def tangents(self) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic tangent basis (t, b) such that (n, t, b) is right-handed."""
        n = self.normal
        axis = np.eye(3)[int(np.argmin(np.abs(n)))]
        t = axis - (axis @ n) * n
        t /= np.linalg.norm(t)
        return t, np.cross(n, t)


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))  # world -> camera
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = 1024
    height: int = 1024

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise NumericError("focal lengths must be positive")
        R = np.asarray(self.rotation, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-9) \
                or np.linalg.det(R) < 0:
            raise NumericError("camera rotation must be a proper rotation matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))

    @property
    def optical_axis(self) -> np.ndarray:
        """Viewing direction in world coordinates."""
        return self.rotation[2]

    def to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pinhole projection. Returns pixels and a mask of points in front."""
        pc = self.to_camera(points)
        z = pc[..., 2]
        front = z > 0
        zs = np.where(front, z, 1.0)
        uv = np.stack([self.fx * pc[..., 0] / zs + self.cx,
                       self.fy * pc[..., 1] / zs + self.cy], axis=-1)
        return uv, front

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "rotation": self.rotation.tolist(),
                "translation": self.translation.tolist(),
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CameraModel":
        return cls(fx=float(d["fx"]), fy=float(d["fy"]), cx=float(d["cx"]),
                   cy=float(d["cy"]), rotation=np.asarray(d.get("rotation", np.eye(3)), float),
                   translation=np.asarray(d.get("translation", np.zeros(3)), float),
                   width=int(d.get("width", 1024)), height=int(d.get("height", 1024)))


@dataclass(frozen=True, eq=False)
class CharacterModel:
    """Validated, immutable character. Build it with :func:`load_character`."""

    name: str
    joints: tuple[JointSpec, ...]
    links: tuple[LinkSpec, ...]
    root_euler: str
    foot_links: tuple[str, ...]
    floor: FloorPlane
    camera: CameraModel | None = None
    roles: Mapping[str, Any] = field(default_factory=dict)
    gravity: float = 9.81

    # all derived in __post_init__
    dof_count: int = field(init=False)
    dof_names: tuple[str, ...] = field(init=False)
    joint_index: Mapping[str, int] = field(init=False)

    def __post_init__(self):
        names = [j.name for j in self.joints]
        index = {n: i for i, n in enumerate(names)}
        dof_names = ["root_tx", "root_ty", "root_tz"] + \
            [f"root_r{c.lower()}" for c in self.root_euler]
        for j in self.joints[1:]:
            dof_names += [f"{j.name}_{k}" for k in range(j.dof)]
        object.__setattr__(self, "joint_index", index)
        object.__setattr__(self, "dof_names", tuple(dof_names))
        object.__setattr__(self, "dof_count", len(dof_names))

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def link(self, name: str) -> LinkSpec:
        return self.links[self.joint_index[name]]

    def dof_slice(self, joint: str) -> slice:
        """Slice of generalized coordinates driven by ``joint``."""
        start = 6
        for j in self.joints[1:]:
            if j.name == joint:
                return slice(start, start + j.dof)
            start += j.dof
        if joint == self.joints[0].name:
            return slice(0, 6)
        raise KeyError(joint)

    def angular_mask(self) -> np.ndarray:
        """True for every generalized coordinate that is an angle."""
        mask = np.ones(self.dof_count, dtype=bool)
        mask[:3] = False
        return mask

    def zero_q(self) -> np.ndarray:
        return np.zeros(self.dof_count)

    def __eq__(self, other):
        if not isinstance(other, CharacterModel):
            return NotImplemented
        return _documents_equal(dump_character(self), dump_character(other))

    __hash__ = object.__hash__


# --------------------------------------------------------------------------
# loading / validation


_TOP_KEYS = {"schema_version", "name", "root_euler", "joints", "links",
             "foot_links", "floor", "camera", "roles", "gravity", "dof_count"}
_JOINT_KEYS = {"name", "parent", "offset", "axes", "euler", "limits"}
_LINK_KEYS = {"name", "mass", "com", "inertia", "proxy"}


def _vec(x, n, what) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (n,) or not np.all(np.isfinite(a)):
        raise NumericError(f"{what}: expected {n} finite numbers, got {x!r}")
    return a


def _check_keys(d: Mapping, allowed: set, where: str, strict: bool):
    extra = set(d) - allowed
    if strict and extra:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(extra)}")


def _parse_proxy(p) -> ContactProxy | None:
    if p is None:
        return None
    shape = p.get("shape", "sphere")
    if shape == "sphere":
        r = float(p.get("radius", 0.02))
        if not r > 0:
            raise NumericError("sphere proxy radius must be positive")
        return ContactProxy("sphere", radius=r)
    if shape == "box":
        he = tuple(float(v) for v in _vec(p["half_extents"], 3, "box half_extents"))
        if min(he) <= 0:
            raise NumericError("box half extents must be positive")
        return ContactProxy("box", half_extents=he)
    raise ConfigError(f"unknown proxy shape {shape!r}")


def _check_inertia(name: str, mass: float, inertia: np.ndarray):
    if not mass > 0 or not np.isfinite(mass):
        raise NumericError(f"link {name!r}: mass must be positive, got {mass}")
    if inertia.shape != (3, 3) or not np.all(np.isfinite(inertia)):
        raise NumericError(f"link {name!r}: inertia must be a finite 3x3 matrix")
    if not np.allclose(inertia, inertia.T, atol=1e-12 * max(1.0, np.abs(inertia).max())):
        raise NumericError(f"link {name!r}: inertia is not symmetric")
    ev = np.linalg.eigvalsh(inertia)
    if ev[0] <= 0:
        raise NumericError(f"link {name!r}: inertia is not positive definite")
    tol = 1e-12 * ev.sum()
    if ev[2] > ev[0] + ev[1] + tol:
        raise NumericError(f"link {name!r}: principal moments violate the triangle inequality")


def load_character(document: Mapping[str, Any] | str | Path, *, strict: bool = False) -> CharacterModel:
    """Validate a character document (mapping, JSON string or file path).

    Raises :class:`StructuralError` for missing parents/cycles,
    :class:`NumericError` for bad masses or inertias and
    :class:`DofCountError` when a declared ``dof_count`` disagrees.
    """
    doc = _as_document(document)
    _check_keys(doc, _TOP_KEYS, "character", strict)
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported character schema_version {version}")

    root_euler = str(doc.get("root_euler", "ZYX")).upper()
    if sorted(root_euler) != ["X", "Y", "Z"]:
        raise ConfigError("root_euler must be a permutation of XYZ")

    raw_joints = doc.get("joints") or []
    if not raw_joints:
        raise StructuralError("character has no joints")
    joints: list[JointSpec] = []
    seen: set[str] = set()
    for k, jd in enumerate(raw_joints):
        _check_keys(jd, _JOINT_KEYS, f"joint {jd.get('name', k)}", strict)
        name = jd.get("name")
        if not name or name in seen:
            raise StructuralError(f"joint {k}: missing or duplicate name {name!r}")
        parent = jd.get("parent")
        if k == 0:
            if parent is not None:
                raise StructuralError("the first joint is the floating root and has no parent")
        elif parent is None:
            raise StructuralError(f"joint {name!r}: only the root may lack a parent")
        if "axes" in jd:
            axes = np.asarray(jd["axes"], dtype=float).reshape(-1, 3)
        else:
            axes = euler_axes(jd["euler"]) if jd.get("euler") else np.zeros((0, 3))
        if k == 0 and len(axes):
            raise StructuralError("the root joint's rotation is the floating base; give it no axes")
        norms = np.linalg.norm(axes, axis=1)
        if not np.allclose(norms, 1.0, atol=1e-9):
            raise NumericError(f"joint {name!r}: DoF axes must be unit vectors")
        limits = None
        if jd.get("limits") is not None:
            limits = np.asarray(jd["limits"], dtype=float).reshape(-1, 2)
            if len(limits) != len(axes) or np.any(limits[:, 0] >= limits[:, 1]):
                raise NumericError(f"joint {name!r}: limits must be (lower < upper) per DoF")
        offset = _vec(jd.get("offset", [0, 0, 0]), 3, f"joint {name!r} offset")
        joints.append(JointSpec(name, parent, offset, axes, limits))
        seen.add(name)

    # parents must exist; walking up from every joint must reach the root
    names = [j.name for j in joints]
    parent_of = {j.name: j.parent for j in joints}
    for j in joints[1:]:
        if j.parent not in parent_of:
            raise StructuralError(f"joint {j.name!r}: parent {j.parent!r} does not exist")
    for j in joints:
        hops, cur = 0, j.name
        while parent_of[cur] is not None:
            cur = parent_of[cur]
            hops += 1
            if hops > len(joints):
                raise StructuralError(f"cycle in joint graph through {j.name!r}")
    # topological order: parents before children
    order = {n: i for i, n in enumerate(names)}
    for j in joints[1:]:
        if order[j.parent] > order[j.name]:
            raise StructuralError(f"joint {j.name!r} listed before its parent {j.parent!r}")

    link_docs = {ld.get("name"): ld for ld in (doc.get("links") or [])}
    links = []
    for j in joints:
        ld = link_docs.pop(j.name, None)
        if ld is None:
            raise StructuralError(f"joint {j.name!r} has no link")
        _check_keys(ld, _LINK_KEYS, f"link {j.name}", strict)
        mass = float(ld.get("mass", 0.0))
        inertia = np.asarray(ld.get("inertia"), dtype=float)
        _check_inertia(j.name, mass, inertia)
        com = _vec(ld.get("com", [0, 0, 0]), 3, f"link {j.name!r} com")
        links.append(LinkSpec(j.name, mass, com, inertia, _parse_proxy(ld.get("proxy"))))
    if link_docs:
        raise StructuralError(f"links without joints: {sorted(link_docs)}")

    foot = doc.get("foot_links") or {}
    if isinstance(foot, Mapping):
        foot_links = tuple(foot[k] for k in FOOT_LINK_ORDER if k in foot)
        if foot and len(foot_links) != 4:
            raise StructuralError(f"foot_links must name all of {FOOT_LINK_ORDER}")
    else:
        foot_links = tuple(foot)
    if foot_links:
        if len(foot_links) != 4 or len(set(foot_links)) != 4:
            raise StructuralError("exactly 4 distinct foot links are required")
        for f in foot_links:
            if f not in order:
                raise StructuralError(f"foot link {f!r} does not exist")
            if links[order[f]].proxy is None:
                raise StructuralError(f"foot link {f!r} has no contact proxy")

    fd = doc.get("floor") or {}
    floor = FloorPlane(normal=np.asarray(fd.get("normal", [0, 0, 1]), float),
                       offset=float(fd.get("offset", 0.0)), mu=float(fd.get("mu", 0.8)))
    camera = CameraModel.from_dict(doc["camera"]) if doc.get("camera") else None
    gravity = float(doc.get("gravity", 9.81))

    model = CharacterModel(name=str(doc.get("name", "character")), joints=tuple(joints),
                           links=tuple(links), root_euler=root_euler,
                           foot_links=foot_links, floor=floor, camera=camera,
                           roles=dict(doc.get("roles") or {}), gravity=gravity)
    declared = doc.get("dof_count")
    if declared is not None and int(declared) != model.dof_count:
        raise DofCountError(f"declared dof_count {declared} but joints give {model.dof_count}")
    for role, target in model.roles.items():
        for t in (target if isinstance(target, list) else [target]):
            if isinstance(t, str) and t not in order:
                raise StructuralError(f"role {role!r} refers to unknown joint {t!r}")
    for a in (*(j.offset for j in joints), *(j.axes for j in joints),
              *(l.com for l in links), *(l.inertia for l in links)):
        a.setflags(write=False)
    return model


def dump_character(model: CharacterModel) -> dict:
    """Serialize to a document that :func:`load_character` accepts."""
    joints = []
    for j in model.joints:
        d = {"name": j.name, "parent": j.parent, "offset": j.offset.tolist(),
             "axes": j.axes.tolist()}
        if j.limits is not None:
            d["limits"] = j.limits.tolist()
        joints.append(d)
    links = []
    for l in model.links:
        d = {"name": l.name, "mass": l.mass, "com": l.com.tolist(),
             "inertia": l.inertia.tolist()}
        if l.proxy is not None:
            d["proxy"] = ({"shape": "sphere", "radius": l.proxy.radius}
                          if l.proxy.shape == "sphere"
                          else {"shape": "box", "half_extents": list(l.proxy.half_extents)})
        links.append(d)
    doc = {"schema_version": SCHEMA_VERSION, "name": model.name,
           "root_euler": model.root_euler, "dof_count": model.dof_count,
           "gravity": model.gravity, "joints": joints, "links": links,
           "foot_links": dict(zip(FOOT_LINK_ORDER, model.foot_links)),
           "floor": {"normal": model.floor.normal.tolist(), "offset": model.floor.offset,
                     "mu": model.floor.mu},
           "roles": copy.deepcopy(dict(model.roles))}
    if model.camera is not None:
        doc["camera"] = model.camera.to_dict()
    return doc


def _documents_equal(a, b, tol=1e-12) -> bool:
    if isinstance(a, Mapping) and isinstance(b, Mapping):
        return a.keys() == b.keys() and all(_documents_equal(a[k], b[k], tol) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(_documents_equal(x, y, tol) for x, y in zip(a, b))
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        return abs(a - b) <= tol * max(1.0, abs(a), abs(b))
    return a == b


def _as_document(document) -> dict:
    if isinstance(document, Mapping):
        return dict(document)
    if isinstance(document, Path) or (isinstance(document, str)
                                      and not document.lstrip().startswith("{")):
        text = Path(document).read_text()
    else:
        text = document
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"character document does not parse: line {exc.lineno}: {exc.msg}") from exc


# --------------------------------------------------------------------------
# reference human


# Fractions of total body mass per link. Segment groups follow Winter's
# anthropometric table; the split inside a group is ours. See
# docs/mass_fractions.md.
MASS_FRACTIONS: dict[str, dict[str, float]] = {
    "trunk": {"pelvis": 0.142, "spine_lower": 0.139, "spine_upper": 0.176,
              "left_clavicle": 0.020, "right_clavicle": 0.020},
    "head_neck": {"neck": 0.020, "head": 0.057, "head_top": 0.001, "nose": 0.001,
                  "left_ear": 0.001, "right_ear": 0.001},
    "upper_arm": {"left_shoulder": 0.028, "right_shoulder": 0.028},
    "forearm": {"left_elbow": 0.016, "right_elbow": 0.016},
    "hand": {f"{s}_{n}": f for s in ("left", "right")
             for n, f in (("wrist", 0.0054), ("hand", 0.0002), ("thumb", 0.0002),
                          ("fingertip", 0.0002))},
    "thigh": {"left_hip": 0.100, "right_hip": 0.100},
    "shank": {"left_knee": 0.0465, "right_knee": 0.0465},
    "foot": {f"{s}_{n}": f for s in ("left", "right")
             for n, f in (("ankle", 0.0129), ("heel", 0.0004), ("forefoot", 0.0004),
                          ("big_toe", 0.0004), ("small_toe", 0.0004))},
}

REFERENCE_HEIGHT = 1.75
CONTACT_RADIUS = 0.02

# name, parent, offset at 1.75 m, Euler order ("" = no DoF)
_SKELETON: list[tuple[str, str | None, tuple[float, float, float], str]] = [
    ("pelvis", None, (0, 0, 0), ""),
    ("spine_lower", "pelvis", (0, 0, 0.10), "ZYX"),
    ("spine_upper", "spine_lower", (0, 0, 0.20), "ZYX"),
    ("neck", "spine_upper", (0, 0, 0.25), "ZYX"),
    ("head", "neck", (0, 0, 0.10), ""),
    ("head_top", "head", (0, 0, 0.15), ""),
    ("nose", "head", (0.10, 0, 0.05), ""),
    ("left_ear", "head", (0, 0.08, 0.03), ""),
    ("right_ear", "head", (0, -0.08, 0.03), ""),
]
for _s, _y in (("left", 1.0), ("right", -1.0)):
    _SKELETON += [
        (f"{_s}_clavicle", "spine_upper", (0, 0.03 * _y, 0.20), "ZX"),
        (f"{_s}_shoulder", f"{_s}_clavicle", (0, 0.15 * _y, 0), "ZYX"),
        (f"{_s}_elbow", f"{_s}_shoulder", (0, 0, -0.28), "Y"),
        (f"{_s}_wrist", f"{_s}_elbow", (0, 0, -0.25), "YX"),
        (f"{_s}_hand", f"{_s}_wrist", (0, 0, -0.08), ""),
        (f"{_s}_thumb", f"{_s}_wrist", (0.04, 0, -0.05), ""),
        (f"{_s}_fingertip", f"{_s}_wrist", (0, 0, -0.18), ""),
    ]
for _s, _y in (("left", 1.0), ("right", -1.0)):
    _SKELETON += [
        (f"{_s}_hip", "pelvis", (0, 0.09 * _y, -0.05), "ZYX"),
        (f"{_s}_knee", f"{_s}_hip", (0, 0, -0.42), "Y"),
        (f"{_s}_ankle", f"{_s}_knee", (0, 0, -0.42), "YX"),
        (f"{_s}_heel", f"{_s}_ankle", (-0.05, 0, -0.05), ""),
        (f"{_s}_forefoot", f"{_s}_ankle", (0.13, 0, -0.05), ""),
        (f"{_s}_big_toe", f"{_s}_ankle", (0.20, 0.015 * _y, -0.05), ""),
        (f"{_s}_small_toe", f"{_s}_ankle", (0.17, 0.045 * _y, -0.05), ""),
    ]

# link shape: (segment end joint or None, radius at 1.75 m); None -> sphere
_SHAPES = {
    "pelvis": ("spine_lower", 0.12), "spine_lower": ("spine_upper", 0.12),
    "spine_upper": ("neck", 0.13), "neck": ("head", 0.05), "head": ("head_top", 0.09),
}
for _s in ("left", "right"):
    _SHAPES.update({
        f"{_s}_clavicle": (f"{_s}_shoulder", 0.04), f"{_s}_shoulder": (f"{_s}_elbow", 0.045),
        f"{_s}_elbow": (f"{_s}_wrist", 0.035), f"{_s}_wrist": (f"{_s}_hand", 0.03),
        f"{_s}_hip": (f"{_s}_knee", 0.07), f"{_s}_knee": (f"{_s}_ankle", 0.045),
        f"{_s}_ankle": (f"{_s}_forefoot", 0.035),
    })
_MARKER_RADIUS = 0.02

STANDING_ROOT_HEIGHT = 0.05 + 0.42 + 0.42 + 0.05 + CONTACT_RADIUS  # contact points on z=0


def _link_fraction_table() -> dict[str, float]:
    return {link: f for group in MASS_FRACTIONS.values() for link, f in group.items()}


def distribute_mass(total_mass: float, height: float = REFERENCE_HEIGHT,
                    groups: Iterable[str] | None = None) -> dict[str, dict[str, Any]]:
    """Per-link mass, COM and inertia of the reference human.

    Masses are ``fraction * total_mass`` from :data:`MASS_FRACTIONS`. Segment
    links are solid cylinders along the bone to their child joint; marker
    links are small spheres. Geometry scales with ``height / 1.75``.
    """
    if not total_mass > 0 or not height > 0:
        raise NumericError("total_mass and height must be positive")
    groups = list(MASS_FRACTIONS) if groups is None else list(groups)
    unknown = [g for g in groups if g not in MASS_FRACTIONS]
    if unknown:
        raise ConfigError(f"unknown link group(s): {unknown}")
    s = height / REFERENCE_HEIGHT
    offsets = {name: np.array(off, float) * s for name, _, off, _ in _SKELETON}
    out = {}
    for g in groups:
        for link, frac in MASS_FRACTIONS[g].items():
            m = frac * total_mass
            if link in _SHAPES:
                end, r = _SHAPES[link]
                seg = offsets[end]
                r = r * s
                L = float(np.linalg.norm(seg))
                u = seg / L
                i_ax = 0.5 * m * r * r
                i_perp = m * (3 * r * r + L * L) / 12.0
                inertia = i_perp * (np.eye(3) - np.outer(u, u)) + i_ax * np.outer(u, u)
                com = 0.5 * seg
            else:
                r = _MARKER_RADIUS * s
                inertia = 0.4 * m * r * r * np.eye(3)
                com = np.zeros(3)
            out[link] = {"group": g, "mass": m, "com": com, "inertia": inertia}
    return out


def reference_human_document(total_mass: float = 70.0, height: float = REFERENCE_HEIGHT) -> dict:
    """Character document of the 37-joint, 43-DoF reference human."""
    s = height / REFERENCE_HEIGHT
    masses = distribute_mass(total_mass, height)
    joints, links = [], []
    for name, parent, off, euler in _SKELETON:
        joints.append({"name": name, "parent": parent,
                       "offset": (np.array(off, float) * s).tolist(),
                       "axes": euler_axes(euler).tolist() if euler else []})
        md = masses[name]
        ld = {"name": name, "mass": md["mass"], "com": md["com"].tolist(),
              "inertia": md["inertia"].tolist()}
        if name.endswith("_heel") or name.endswith("_forefoot"):
            ld["proxy"] = {"shape": "sphere", "radius": CONTACT_RADIUS}
        links.append(ld)
    return {
        "schema_version": SCHEMA_VERSION, "name": "reference_human", "root_euler": "ZYX",
        "dof_count": 43, "gravity": 9.81, "joints": joints, "links": links,
        "foot_links": {"left_heel": "left_heel", "left_forefoot": "left_forefoot",
                       "right_heel": "right_heel", "right_forefoot": "right_forefoot"},
        "floor": {"normal": [0.0, 0.0, 1.0], "offset": 0.0, "mu": 0.8},
        "roles": {"spine_top": "spine_upper",
                  "hips": ["left_hip", "right_hip"], "knees": ["left_knee", "right_knee"]},
    }


def reference_human(total_mass: float = 70.0, height: float = REFERENCE_HEIGHT) -> CharacterModel:
    return load_character(reference_human_document(total_mass, height))


def standing_pose(model: CharacterModel, height: float | None = None) -> np.ndarray:
    """Zero joint angles with the root raised so foot contact points touch the floor."""
    q = model.zero_q()
    if height is None:
        from .dynamics import forward_kinematics, contact_points
        q[:3] = 0.0
        h = model.floor.height(contact_points(model, forward_kinematics(model, q)))
        height = -float(np.min(h))
    q[:3] = model.floor.normal * (height + model.floor.offset)
    return q


def save_character(model: CharacterModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(dump_character(model), indent=1))
