import copy
import threading

import numpy as np
import pytest

from physmotion.character import ConfigError, standing_pose
from physmotion.contact import ContactState
from physmotion.control import ReferenceDerivatives, desired_acceleration
from physmotion.dynamics import PoseState, contact_points, forward_kinematics, integrate
from physmotion.io import MotionSequence
from physmotion.metrics import e_smooth
from physmotion.pipeline import Pipeline, PipelineConfig, joint_positions, write_diagnostics
from physmotion.synthetic import SyntheticMotionSpec, generate_synthetic

DOWN = ContactState(True, (True,) * 4, 0)
AIR = ContactState(False, (False,) * 4, 0)


def test_fixed_point_standing(human):
    q0 = standing_pose(human)
    p = Pipeline(human)
    for _ in range(5):
        r = p.process_frame(q0, DOWN)
    assert np.abs(r.q_phys - q0).max() <= 1e-3
    assert len(r.iterations) == 4
    assert not r.correction_applied


def test_drop_below_floor_is_lifted(human):
    s = generate_synthetic(SyntheticMotionSpec("drop-below-floor", base="stand", frames=30), human)
    out, res = Pipeline(human).process_sequence(s.corrupted, s.contacts)
    for q in out.q:
        h = human.floor.height(contact_points(human, forward_kinematics(human, q)))
        assert h.min() >= -1e-3


def test_flight_is_pure_pd_tracking(human):
    cfg = PipelineConfig(w_tau=0.0, balance_correction=False)
    q0 = standing_pose(human)
    q0[2] += 2.0
    rng = np.random.default_rng(0)
    refs = q0 + 0.02 * rng.normal(size=(3, 43))
    p = Pipeline(human, cfg)
    p.init_state(refs[0])
    derivs = ReferenceDerivatives(25.0, cfg.derivative_method, cfg.derivative_window)
    pose = PoseState(refs[0].copy(), np.zeros(43))
    for q_ref in refs:
        r = p.process_frame(q_ref, AIR)
        v, a = derivs.update(q_ref)
        for _ in range(4):
            qdd = desired_acceleration(q_ref, v, a, pose.q, pose.qdot, cfg.gains, human.angular_mask())
            pose = integrate(human, pose, qdd, cfg.phi)
        np.testing.assert_allclose(r.q_phys, pose.q, atol=1e-9)


def test_init_state(human):
    q0 = standing_pose(human) + 0.01
    p = Pipeline(human)
    a = p.init_state(q0)
    assert np.array_equal(a.pose.q, q0) and not a.pose.qdot.any()
    b = Pipeline(human).init_state(q0)
    assert np.array_equal(a.pose.q, b.pose.q) and a.corrector.acc.is_zero and b.corrector.acc.is_zero
    with pytest.raises(ValueError):
        p.init_state(np.zeros(5))


def test_regulation_drift(human):
    q0 = standing_pose(human)
    p = Pipeline(human)
    worst = 0.0
    for t in range(100):
        r = p.process_frame(q0, ContactState(True, (True,) * 4, t))
        worst = max(worst, np.abs(r.q_phys - q0).max())
    assert worst <= 0.05


def test_empty_sequence(human):
    m = MotionSequence.from_model(human, np.zeros((0, 43)), 25.0)
    out, res = Pipeline(human).process_sequence(m, [])
    assert len(out) == 0 and res == []


def test_walk_shape_and_timestamps(human):
    s = generate_synthetic(SyntheticMotionSpec("walk", frames=100), human)
    out, res = Pipeline(human).process_sequence(s.clean, s.contacts)
    assert len(out) == 100 and out.fps == 25.0
    assert np.all(np.diff(out.timestamps) > 0)
    assert np.array_equal(out.timestamps, s.clean.timestamps)
    assert all(np.isfinite(r.q_phys).all() for r in res)


def test_jitter_is_reduced(human):
    s = generate_synthetic(SyntheticMotionSpec("jitter-overlay", base="squat", angle_noise=0.02,
                                               seed=1), human)
    out, _ = Pipeline(human).process_sequence(s.corrupted, s.contacts)
    gt = joint_positions(human, s.clean.q)
    e_in, _ = e_smooth(joint_positions(human, s.corrupted.q), gt)
    e_out, _ = e_smooth(joint_positions(human, out.q), gt)
    assert e_out < e_in


def test_auto_label_path(human):
    s = generate_synthetic(SyntheticMotionSpec("stand", frames=15), human)
    out, res = Pipeline(human).process_sequence(s.clean)
    assert all(all(r.contacts.contact) for r in res)


def test_causal(human):
    s = generate_synthetic(SyntheticMotionSpec("jitter-overlay", base="squat", frames=20,
                                               angle_noise=0.02), human)
    full, _ = Pipeline(human).process_sequence(s.corrupted, s.contacts)
    q = s.corrupted.q.copy()
    q[12:] += 0.1
    alt = MotionSequence.from_model(human, q, 25.0)
    part, _ = Pipeline(human).process_sequence(alt, s.contacts)
    assert np.array_equal(full.q[:12], part.q[:12])
    assert not np.array_equal(full.q[12:], part.q[12:])


def test_disabled_correction_matches_uncorrected_path(human):
    from physmotion.synthetic import lean_pose
    q = lean_pose(human, 0.3)
    a = Pipeline(human, PipelineConfig(balance_correction=False))
    r = a.process_frame(q, DOWN)
    assert not r.correction_applied and np.array_equal(r.q_ref, q)
    b = Pipeline(human)
    assert b.process_frame(q, DOWN).correction_applied


def test_independent_instances_in_threads(human):
    s = generate_synthetic(SyntheticMotionSpec("jitter-overlay", base="squat", frames=20,
                                               angle_noise=0.02), human)
    ref, _ = Pipeline(human).process_sequence(s.corrupted, s.contacts)
    outs = [None] * 3

    def work(i):
        outs[i] = Pipeline(human).process_sequence(s.corrupted, s.contacts)[0].q

    th = [threading.Thread(target=work, args=(i,)) for i in range(3)]
    for t in th:
        t.start()
    for t in th:
        t.join()
    assert all(np.array_equal(o, ref.q) for o in outs)


def test_config_validation():
    for bad in ({"phi": 0.0}, {"n_iterations": 0}, {"mu": 0.0}, {"sigma": -1.0}):
        with pytest.raises(ConfigError):
            PipelineConfig(**bad)
    with pytest.raises(ConfigError, match="frame interval"):
        PipelineConfig().check_frame_rate(30.0)
    PipelineConfig(allow_interval_mismatch=True).check_frame_rate(30.0)
    with pytest.raises(ConfigError):
        PipelineConfig.from_dict({"phy": 0.01})
    c = PipelineConfig.from_dict({"gains": {"overrides": {"7": [1.0, 2.0]}}})
    assert PipelineConfig.from_dict(c.to_dict()) == c


def test_contact_count_mismatch(human):
    s = generate_synthetic(SyntheticMotionSpec("stand", frames=5), human)
    with pytest.raises(ValueError):
        Pipeline(human).process_sequence(s.clean, s.contacts[:3])


def test_write_diagnostics(human, tmp_path):
    s = generate_synthetic(SyntheticMotionSpec("stand", frames=3), human)
    _, res = Pipeline(human).process_sequence(s.clean, s.contacts)
    p = tmp_path / "d.csv"
    write_diagnostics(human, res, p)
    lines = p.read_text().splitlines()
    assert len(lines) == 1 + 3 * 4
    head = lines[0].split(",")
    assert "lam_left_heel_n" in head and "tau_" + human.dof_names[0] in head
    row = dict(zip(head, lines[1].split(",")))
    assert row["qp_status"] == "optimal" and row["n_contacts"] == "4"
