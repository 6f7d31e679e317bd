"""Plausibility and accuracy metrics.

Inputs in metres and pixels; reported errors in millimetres and pixels.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .character import CameraModel, FloorPlane

SIDE_VIEW_MIN_ANGLE = np.pi / 15
PCK_THRESHOLD_MM = 150.0


class ViewAngleWarning(UserWarning):
    pass


def _traj(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError("trajectories must have shape (T, S, 3)")
    return x


def _same_shape(a, b, what="trajectories"):
    if a.shape != b.shape:
        raise ValueError(f"{what} differ in shape: {a.shape} vs {b.shape}")


def e_smooth(pred, gt) -> tuple[float, float]:
    """Mean and std (mm) of ``| |p_gt(t) - p_gt(t-1)| - |p(t) - p(t-1)| |``
    over frames t >= 2 and all joints."""
    p, g = _traj(pred), _traj(gt)
    _same_shape(p, g)
    if len(p) < 2:
        raise ValueError("need at least 2 frames")
    jit_p = np.linalg.norm(np.diff(p, axis=0), axis=-1)
    jit_g = np.linalg.norm(np.diff(g, axis=0), axis=-1)
    d = np.abs(jit_g - jit_p) * 1000.0
    return float(d.mean()), float(d.std())


@dataclass
class PenetrationReport:
    mpe: float  # mm
    mpe_std: float
    pnp: float  # %
    penetrating_frames: int


def penetration_metrics(foot_positions, contact_labels, floor: FloorPlane | None = None) -> PenetrationReport:
    """MPE over in-contact (foot, frame) pairs; PNP over all frames.

    ``foot_positions`` is (T, F, 3); ``contact_labels`` is (T, F) ground truth.
    A foot in contact contributes its absolute distance to the floor, so a
    foot hovering while labelled in contact counts its height. A frame
    penetrates when any foot lies strictly below the floor.
    """
    if contact_labels is None:
        raise ValueError("ground-truth contact labels are required")
    floor = floor or FloorPlane()
    P = np.asarray(foot_positions, dtype=float)
    C = np.asarray(contact_labels, dtype=bool)
    if P.ndim != 3 or C.shape != P.shape[:2]:
        raise ValueError("labels must be (T, F) matching foot positions (T, F, 3)")
    h = floor.height(P)
    d = np.abs(h[C]) * 1000.0
    mpe, sd = (float(d.mean()), float(d.std())) if d.size else (0.0, 0.0)
    pen = np.any(h < 0.0, axis=1)
    T = len(P)
    pnp = 100.0 * float(np.sum(~pen)) / T if T else 100.0
    return PenetrationReport(mpe, sd, pnp, int(pen.sum()))


@dataclass
class ReprojectionReport:
    mean: float  # px
    std: float
    excluded: int  # joints behind the camera


def view_angle(a: CameraModel, b: CameraModel) -> float:
    return float(np.arccos(np.clip(a.optical_axis @ b.optical_axis, -1.0, 1.0)))


def reprojection_error(pred_3d, gt_2d, camera: CameraModel,
                       reference_camera: CameraModel | None = None) -> ReprojectionReport:
    """Per-frame mean joint pixel distance, then mean/std over frames.

    Pass the input camera as ``reference_camera`` when scoring a side view;
    views closer than pi/15 to it raise a :class:`ViewAngleWarning`.
    """
    P = _traj(pred_3d)
    G = np.asarray(gt_2d, dtype=float)
    if G.shape != P.shape[:2] + (2,):
        raise ValueError(f"2D keypoints must have shape {P.shape[:2] + (2,)}")
    if reference_camera is not None and view_angle(camera, reference_camera) < SIDE_VIEW_MIN_ANGLE:
        warnings.warn("side view is within pi/15 of the input view; its error is not "
                      "an independent check", ViewAngleWarning, stacklevel=2)
    uv, front = camera.project(P)
    err = np.linalg.norm(uv - G, axis=-1)
    per_frame = np.array([err[t][front[t]].mean() for t in range(len(P)) if front[t].any()])
    if per_frame.size == 0:
        return ReprojectionReport(float("nan"), float("nan"), int((~front).sum()))
    return ReprojectionReport(float(per_frame.mean()), float(per_frame.std()), int((~front).sum()))


def similarity_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Least-squares similarity transform of ``pred`` (S, 3) onto ``gt``."""
    mp, mg = pred.mean(axis=0), gt.mean(axis=0)
    X, Y = pred - mp, gt - mg
    U, s, Vt = np.linalg.svd(X.T @ Y)
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt))
    R = U @ D @ Vt
    var = (X ** 2).sum()
    scale = (s * np.diag(D)).sum() / var if var > 0 else 1.0
    return scale * X @ R + mg


@dataclass
class AccuracyReport:
    mpjpe: float  # mm
    pck: float  # %, error < 150 mm
    auc: float  # %, PCK averaged over thresholds 1..150 mm


def position_accuracy(pred_3d, gt_3d, mode: str = "raw", root: int = 0) -> AccuracyReport:
    """MPJPE/PCK/AUC.

    ``raw`` compares root-relative poses, ``procrustes`` aligns each
    predicted frame to the ground truth by a similarity transform first and
    ``global_root`` scores the world trajectory of the root joint alone.
    PCK counts errors strictly below the threshold; AUC averages PCK over
    thresholds 1, 2, ..., 150 mm.
    """
    P, G = _traj(pred_3d), _traj(gt_3d)
    _same_shape(P, G, "joint sets")
    if mode == "raw":
        P = P - P[:, root:root + 1]
        G = G - G[:, root:root + 1]
    elif mode == "procrustes":
        P = np.array([similarity_align(p, g) for p, g in zip(P, G)])
    elif mode == "global_root":
        P, G = P[:, root:root + 1], G[:, root:root + 1]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    err = np.linalg.norm(P - G, axis=-1).ravel() * 1000.0
    if err.size == 0:
        raise ValueError("empty trajectories")
    thresholds = np.arange(1, int(PCK_THRESHOLD_MM) + 1, dtype=float)
    pck_curve = (err[None, :] < thresholds[:, None]).mean(axis=1) * 100.0
    return AccuracyReport(float(err.mean()), float((err < PCK_THRESHOLD_MM).mean() * 100.0),
                          float(pck_curve.mean()))


@dataclass
class MetricReport:
    mpjpe: float = float("nan")
    pck: float = float("nan")
    auc: float = float("nan")
    e2d_input: float = float("nan")
    e2d_input_std: float = float("nan")
    e2d_side: float = float("nan")
    e2d_side_std: float = float("nan")
    e_smooth: float = float("nan")
    e_smooth_std: float = float("nan")
    mpe: float = float("nan")
    mpe_std: float = float("nan")
    pnp: float = float("nan")

    def as_dict(self) -> dict:
        return asdict(self)

    def table(self) -> str:
        rows = [("MPJPE [mm]", self.mpjpe), ("PCK@150 [%]", self.pck), ("AUC [%]", self.auc),
                ("e2D input [px]", self.e2d_input), ("  std", self.e2d_input_std),
                ("e2D side [px]", self.e2d_side), ("  std", self.e2d_side_std),
                ("e_smooth [mm]", self.e_smooth), ("  std", self.e_smooth_std),
                ("MPE [mm]", self.mpe), ("  std", self.mpe_std), ("PNP [%]", self.pnp)]
        return "\n".join(f"{k:<16}{v:>10.3f}" for k, v in rows)
