import numpy as np
import pytest
from scipy.integrate import solve_ivp
from scipy.spatial.transform import Rotation

from physmotion.character import load_character
from physmotion.dynamics import (PoseState, bias_forces, compute_dynamics, contact_jacobian,
                                 contact_points, force_transform, forward_dynamics,
                                 forward_kinematics, integrate, inverse_dynamics,
                                 kinetic_energy, mass_matrix, point_jacobian, wrap_angle)
from conftest import pendulum_doc


def random_state(rng, m):
    q = rng.normal(0, 0.4, m)
    q[:3] = rng.normal(0, 1, 3)
    q[4] = np.clip(q[4], -1.2, 1.2)  # stay away from the Euler singularity
    return q, rng.normal(0, 1, m)


def link_energy_via_complex_step(model, q, qdot, h=1e-20):
    """Sum of per-link kinetic energies from link twists, no mass matrix involved."""
    kz = forward_kinematics(model, q + 1j * h * qdot)
    k0 = forward_kinematics(model, q)
    E = 0.0
    for i, link in enumerate(model.links):
        R = k0.link_R[i]
        Rdot = kz.link_R[i].imag / h
        W = Rdot @ R.T
        w = np.array([W[2, 1], W[0, 2], W[1, 0]])
        v = kz.com[i].imag / h
        Iw = R @ link.inertia @ R.T
        E += 0.5 * link.mass * v @ v + 0.5 * w @ Iw @ w
    return E


def test_zero_configuration(human):
    kin = forward_kinematics(human, human.zero_q())
    np.testing.assert_array_equal(kin.link_p[0], np.zeros(3))
    np.testing.assert_allclose(kin.link_R[0], np.eye(3), atol=1e-15)


def test_root_translation_shifts_every_link(human):
    q = np.random.default_rng(0).normal(0, 0.3, 43)
    k0 = forward_kinematics(human, q)
    q2 = q.copy()
    q2[:3] += [1.0, 2.0, 3.0]
    k1 = forward_kinematics(human, q2)
    np.testing.assert_allclose(k1.link_p - k0.link_p, np.tile([1.0, 2.0, 3.0], (37, 1)), atol=1e-12)


def test_hinge_quarter_turn_rotates_child():
    m = load_character(pendulum_doc(length=0.5, axis=(0, 0, 1)))
    q = m.zero_q()
    q[6] = np.pi / 2
    tip = forward_kinematics(m, q).link_p[2]
    # (0.5, 0, 0) rotated 90 degrees about z by hand
    np.testing.assert_allclose(tip, [0.0, 0.5, 0.0], atol=1e-15)


def test_free_body_translation_inertia():
    m = load_character(pendulum_doc())
    M = mass_matrix(m, m.zero_q())
    np.testing.assert_allclose(M[:3, :3], m.total_mass * np.eye(3), rtol=1e-12)


def test_kinetic_energy_matches_link_sum(human):
    rng = np.random.default_rng(1)
    for _ in range(20):
        q, qd = random_state(rng, 43)
        assert kinetic_energy(human, q, qd) == pytest.approx(
            link_energy_via_complex_step(human, q, qd), rel=1e-9)


def test_mass_matrix_symmetric_pd(human):
    rng = np.random.default_rng(2)
    for _ in range(20):
        q, _ = random_state(rng, 43)
        M = mass_matrix(human, q)
        assert np.abs(M - M.T).max() <= 1e-9 * np.abs(M).max()
        assert np.linalg.eigvalsh(M).min() > 0


def test_crba_matches_unit_acceleration_columns(human):
    rng = np.random.default_rng(3)
    q, _ = random_state(rng, 43)
    M = mass_matrix(human, q)
    z = np.zeros(43)
    cols = np.column_stack([inverse_dynamics(human, q, z, e, gravity=0.0) for e in np.eye(43)])
    assert np.abs(cols - M).max() <= 1e-9 * np.abs(M).max()


def test_static_bias_is_weight(human):
    q = np.random.default_rng(4).normal(0, 0.3, 43)
    c = bias_forces(human, q, np.zeros(43))
    # c = ID(q, 0, 0): holding the body still takes +m g along the normal at the root
    np.testing.assert_allclose(c[:3], [0.0, 0.0, human.total_mass * 9.81], rtol=1e-12)


def test_no_gravity_no_motion_no_bias(human):
    q = np.random.default_rng(5).normal(0, 0.3, 43)
    np.testing.assert_allclose(bias_forces(human, q, np.zeros(43), gravity=0.0), 0.0, atol=1e-12)


def test_forward_inverse_consistency(human):
    rng = np.random.default_rng(6)
    q, qd = random_state(rng, 43)
    tau = rng.normal(0, 10, 43)
    qdd = forward_dynamics(human, q, qd, tau)
    np.testing.assert_allclose(inverse_dynamics(human, q, qd, qdd), tau, atol=1e-9)


def test_pure_root_translation_velocity(human):
    q = np.random.default_rng(7).normal(0, 0.3, 43)
    J = contact_jacobian(human, q, human.foot_links)
    qd = np.zeros(43)
    qd[:3] = [0.3, -0.2, 0.5]
    v = (J @ qd).reshape(4, 6)
    np.testing.assert_allclose(v[:, 3:], np.tile(qd[:3], (4, 1)), atol=1e-14)
    np.testing.assert_allclose(v[:, :3], 0.0, atol=1e-14)


def test_zero_velocity_gives_zero_contact_velocity(human):
    J = contact_jacobian(human, np.random.default_rng(8).normal(0, 0.3, 43), human.foot_links)
    np.testing.assert_array_equal(J @ np.zeros(43), 0.0)


def test_empty_active_set(human):
    assert contact_jacobian(human, human.zero_q(), ()).shape == (0, 43)


def fd_jacobian(model, q, link, eps=1e-6):
    """Central differences of the link pose, evaluated at the body-fixed
    point that is the contact point at ``q``."""
    i = model.joint_index[link]
    k0 = forward_kinematics(model, q)
    local = k0.link_R[i].T @ (contact_points(model, k0, [link])[0] - k0.link_p[i])
    J = np.zeros((6, len(q)))
    for k in range(len(q)):
        dq = np.zeros(len(q))
        dq[k] = eps
        kp, km = forward_kinematics(model, q + dq), forward_kinematics(model, q - dq)
        pp = kp.link_p[i] + kp.link_R[i] @ local
        pm = km.link_p[i] + km.link_R[i] @ local
        J[3:, k] = (pp - pm) / (2 * eps)
        J[:3, k] = Rotation.from_matrix(kp.link_R[i] @ km.link_R[i].T).as_rotvec() / (2 * eps)
    return J


def test_contact_jacobian_vs_finite_differences(human):
    rng = np.random.default_rng(9)
    q, _ = random_state(rng, 43)
    J = contact_jacobian(human, q, human.foot_links)
    for j, link in enumerate(human.foot_links):
        assert np.abs(J[6 * j:6 * j + 6] - fd_jacobian(human, q, link)).max() <= 1e-5


def test_single_contact_at_root_origin():
    m = load_character(pendulum_doc())
    kin = forward_kinematics(m, m.zero_q())
    J = point_jacobian(m, kin, "base", np.zeros(3))
    G = np.zeros((6, 3))
    G[3:, :] = np.eye(3)
    f = J.T @ G @ np.array([0.0, 0.0, 5.0])
    np.testing.assert_allclose(f[:3], [0, 0, 5.0], atol=1e-15)
    np.testing.assert_allclose(f[3:6], 0.0, atol=1e-15)


def test_virtual_work_identity(human):
    rng = np.random.default_rng(10)
    for _ in range(20):
        q, qd = random_state(rng, 43)
        dyn = compute_dynamics(human, q, qd, human.foot_links)
        lam = rng.normal(0, 100, 12)
        lhs = (dyn.G @ lam) @ (dyn.J @ qd)
        Rc = dyn.G[3:6, :3]
        v = (dyn.J_linear @ qd).reshape(4, 3)
        rhs = sum((Rc @ lam[3 * j:3 * j + 3]) @ v[j] for j in range(4))
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
        # and generalized power equals the same
        assert qd @ (dyn.J.T @ dyn.G @ lam) == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_zero_force_zero_generalized_force(human):
    dyn = compute_dynamics(human, human.zero_q(), np.zeros(43), human.foot_links)
    np.testing.assert_array_equal(dyn.J.T @ dyn.G @ np.zeros(12), 0.0)
    assert force_transform(human, human.foot_links).shape == (24, 12)


def test_integrate_constant_acceleration_from_rest():
    s = PoseState(np.zeros(7), np.zeros(7))
    a = np.arange(7) * 0.1
    out = integrate(None, s, a, 0.01)
    np.testing.assert_allclose(out.q, 1e-4 * a, rtol=1e-15)
    a = np.zeros(7)
    a[0] = 1.0
    assert integrate(None, s, a, 0.01).q[0] == pytest.approx(1e-4, rel=1e-15)


def test_integrate_zero_acceleration():
    qd = np.array([0.1, -0.2, 0.3, 0.0, 0.01, 0.0, 0.5])
    out = integrate(None, PoseState(np.zeros(7), qd), np.zeros(7), 0.01)
    np.testing.assert_array_equal(out.qdot, qd)
    np.testing.assert_allclose(out.q, 0.01 * qd, rtol=1e-15)


def test_integrate_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        integrate(None, PoseState(np.zeros(3), np.zeros(3)), [np.nan, 0, 0], 0.01)


def test_wrap_angle_range():
    a = np.array([-np.pi, np.pi, 3 * np.pi, -3.5 * np.pi, 0.0])
    w = wrap_angle(a)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)


def energy_balance(model, T=1.0, seed=11):
    """Relative error of E(T) - E(0) = int qdot . tau over forced free flight."""
    rng = np.random.default_rng(seed)
    m = model.dof_count
    q0 = rng.normal(0, 0.2, m)
    qd0 = rng.normal(0, 0.5, m)
    amp = rng.normal(0, 5, m)
    freq = rng.uniform(0.5, 2.0, m)

    def tau(t):
        return amp * np.sin(2 * np.pi * freq * t)

    def rhs(t, y):
        q, qd = y[:m], y[m:2 * m]
        tt = tau(t)
        qdd = forward_dynamics(model, q, qd, tt, gravity=0.0)
        return np.concatenate([qd, qdd, [qd @ tt]])

    sol = solve_ivp(rhs, (0, T), np.concatenate([q0, qd0, [0.0]]), method="DOP853",
                    rtol=1e-10, atol=1e-10)
    y = sol.y[:, -1]
    E0 = kinetic_energy(model, q0, qd0)
    E1 = kinetic_energy(model, y[:m], y[m:2 * m])
    work = y[-1]
    return abs(E1 - E0 - work) / max(abs(E1 - E0), abs(work), E0)


def test_energy_rate_balance_pendulum():
    assert energy_balance(load_character(pendulum_doc())) <= 1e-4
