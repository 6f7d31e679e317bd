"""Smooth a squat corrupted with 0.02 rad joint-angle noise."""
import warnings

from physmotion.character import reference_human
from physmotion.control import OverdampedGainsWarning
from physmotion.metrics import e_smooth, position_accuracy
from physmotion.pipeline import Pipeline, joint_positions
from physmotion.synthetic import SyntheticMotionSpec, generate_synthetic


def main():
    # the root-linear gains are overdamped by design
    warnings.simplefilter("ignore", OverdampedGainsWarning)
    model = reference_human()
    for seed in range(3):
        s = generate_synthetic(SyntheticMotionSpec("jitter-overlay", base="squat", angle_noise=0.02,
                                                   seed=seed), model)
        out, _ = Pipeline(model).process_sequence(s.corrupted, s.contacts)
        gt = joint_positions(model, s.clean.q)
        noisy, filt = joint_positions(model, s.corrupted.q), joint_positions(model, out.q)
        e_in, e_out = e_smooth(noisy, gt)[0], e_smooth(filt, gt)[0]
        acc_in, acc_out = position_accuracy(noisy, gt).mpjpe, position_accuracy(filt, gt).mpjpe
        print(f"seed {seed}: e_smooth {e_in:5.2f} -> {e_out:5.2f} mm (x{e_out / e_in:.2f}), "
              f"MPJPE {acc_in:5.1f} -> {acc_out:5.1f} mm")


if __name__ == "__main__":
    main()
