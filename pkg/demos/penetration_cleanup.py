"""Lift a standing motion that sinks 30 mm into the floor back onto it."""
import warnings

import numpy as np

from physmotion.character import reference_human
from physmotion.control import OverdampedGainsWarning
from physmotion.dynamics import contact_points, forward_kinematics
from physmotion.metrics import penetration_metrics
from physmotion.pipeline import Pipeline
from physmotion.synthetic import SyntheticMotionSpec, generate_synthetic


def feet(model, qs):
    return np.array([contact_points(model, forward_kinematics(model, q)) for q in qs])


def main():
    # the root-linear gains are overdamped by design
    warnings.simplefilter("ignore", OverdampedGainsWarning)
    model = reference_human()
    s = generate_synthetic(SyntheticMotionSpec("drop-below-floor", base="stand", depth=0.03), model)
    labels = np.array([c.contact for c in s.contacts])
    out, res = Pipeline(model).process_sequence(s.corrupted, s.contacts)
    for name, q in (("input", s.corrupted.q), ("filtered", out.q)):
        r = penetration_metrics(feet(model, q), labels)
        print(f"{name:>9}: MPE {r.mpe:7.3f} mm  PNP {r.pnp:5.1f} %")
    ms = 1000 * np.array([r.wall_time for r in res])
    print(f"process_frame: mean {ms.mean():.1f} ms, p95 {np.percentile(ms, 95):.1f} ms")


if __name__ == "__main__":
    main()
