"""PD tracking of the kinematic reference.

``qdd_des = qdd_kin + kp (q_kin - q) + kd (qdot_kin - qdot)`` with gains set
per block: root translation, root orientation and joint angles. Angular
position errors are wrapped to (-pi, pi].

Reference derivatives come from :class:`ReferenceDerivatives`, which only
looks at past frames so the filter stays causal.
"""
from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .dynamics import wrap_angle

FEEDFORWARD_CLAMP = 500.0


class OverdampedGainsWarning(UserWarning):
    """kd^2 > 4 kp for some block; allowed, but worth knowing about."""


@dataclass(frozen=True)
class PDGains:
    joint_kp: float = 300.0
    joint_kd: float = 20.0
    root_angular_kp: float = 340.0
    root_angular_kd: float = 30.0
    root_linear_kp: float = 1000.0
    root_linear_kd: float = 80.0
    overrides: dict = field(default_factory=dict)  # DoF index -> (kp, kd)

    def __post_init__(self):
        pairs = [(self.joint_kp, self.joint_kd), (self.root_angular_kp, self.root_angular_kd),
                 (self.root_linear_kp, self.root_linear_kd), *self.overrides.values()]
        for kp, kd in pairs:
            if kp < 0 or kd < 0:
                raise ValueError("PD gains must be non-negative")
            if kd * kd > 4 * kp:
                warnings.warn(f"overdamped gains kp={kp}, kd={kd}", OverdampedGainsWarning, stacklevel=4)

    def vectors(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        kp = np.full(m, self.joint_kp)
        kd = np.full(m, self.joint_kd)
        kp[:3], kd[:3] = self.root_linear_kp, self.root_linear_kd
        kp[3:6], kd[3:6] = self.root_angular_kp, self.root_angular_kd
        for i, (p, d) in self.overrides.items():
            kp[int(i)], kd[int(i)] = p, d
        return kp, kd


def position_error(q_ref, q, angular_mask=None) -> np.ndarray:
    """``q_ref - q`` with angular entries wrapped; default: all but the first 3."""
    e = np.asarray(q_ref, dtype=float) - np.asarray(q, dtype=float)
    if angular_mask is None:
        angular_mask = np.arange(e.shape[-1]) >= 3
    e[..., angular_mask] = wrap_angle(e[..., angular_mask])
    return e


def desired_acceleration(q_kin, qdot_kin, qddot_kin, q, qdot, gains: PDGains,
                         angular_mask=None) -> np.ndarray:
    arrs = [np.asarray(a, dtype=float) for a in (q_kin, qdot_kin, qddot_kin, q, qdot)]
    m = arrs[0].shape[0]
    if any(a.shape != (m,) for a in arrs):
        raise ValueError("all state vectors must have the same length")
    q_kin, qdot_kin, qddot_kin, q, qdot = arrs
    kp, kd = gains.vectors(m)
    return qddot_kin + kp * position_error(q_kin, q, angular_mask) + kd * (qdot_kin - qdot)


class ReferenceDerivatives:
    """Causal velocity/acceleration estimates of the reference pose stream.

    ``method``:

    * ``"poly"`` (default): least-squares quadratic through the last
      ``window`` frames, differentiated at the newest frame. It cancels much
      of the per-frame noise a plain difference would amplify.
    * ``"backward"``: first and second backward differences.
    * ``"none"``: zero feedforward.

    Angular coordinates are unwrapped against the newest frame before
    fitting. Accelerations are clamped to +-``clamp``.
    """

    def __init__(self, fps: float, method: str = "poly", window: int = 9,
                 clamp: float = FEEDFORWARD_CLAMP, angular_mask=None):
        if method not in ("poly", "backward", "none"):
            raise ValueError(f"unknown derivative method {method!r}")
        if method == "poly" and window < 3:
            raise ValueError("poly window must be >= 3")
        self.fps = float(fps)
        self.method = method
        self.window = window if method == "poly" else 3
        self.clamp = clamp
        self.angular_mask = angular_mask
        self._hist: deque = deque(maxlen=self.window)
        self._coef = None

    def reset(self):
        self._hist.clear()

    def _weights(self, k: int):
        # rows: derivative weights at t = 0 for the last k samples at t = -(k-1)..0
        dt = 1.0 / self.fps
        t = (np.arange(k) - (k - 1)) * dt
        deg = min(2, k - 1)
        V = np.vander(t, deg + 1, increasing=True)
        P = np.linalg.pinv(V)
        wv = P[1] if deg >= 1 else np.zeros(k)
        wa = 2.0 * P[2] if deg >= 2 else np.zeros(k)
        return wv, wa

    def update(self, q_kin) -> tuple[np.ndarray, np.ndarray]:
        q = np.asarray(q_kin, dtype=float)
        self._hist.append(q.copy())
        m = len(q)
        k = len(self._hist)
        if self.method == "none" or k == 1:
            return np.zeros(m), np.zeros(m)
        H = np.array(self._hist)
        mask = np.arange(m) >= 3 if self.angular_mask is None else self.angular_mask
        H[:, mask] = H[-1, mask] - wrap_angle(H[-1, mask] - H[:, mask])
        if self.method == "backward":
            d = self.fps
            v = (H[-1] - H[-2]) * d
            a = (H[-1] - 2 * H[-2] + H[-3]) * d * d if k >= 3 else np.zeros(m)
        else:
            wv, wa = self._weights(k)
            v, a = wv @ H, wa @ H
        return v, np.clip(a, -self.clamp, self.clamp)


def reference_derivatives(qs, fps: float, method: str = "poly", window: int = 9,
                          clamp: float = FEEDFORWARD_CLAMP):
    """Run :class:`ReferenceDerivatives` over a whole (T, m) sequence."""
    est = ReferenceDerivatives(fps, method, window, clamp)
    out = [est.update(q) for q in np.asarray(qs, dtype=float)]
    if not out:
        m = np.asarray(qs).shape[-1] if np.ndim(qs) == 2 else 0
        return np.zeros((0, m)), np.zeros((0, m))
    v, a = zip(*out)
    return np.array(v), np.array(a)
