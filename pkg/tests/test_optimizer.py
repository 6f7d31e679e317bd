import numpy as np
import pytest

from physmotion.character import load_character, standing_pose
from physmotion.dynamics import compute_dynamics
from physmotion.optimizer import (FrictionCone, TorqueSolver, contact_velocity_rows, eom_residual,
                                  estimate_grf, solve_torques)
from conftest import pendulum_doc
from physmotion.synthetic import lean_pose


@pytest.fixture(scope="module")
def standing(human):
    q = standing_pose(human)
    return q, compute_dynamics(human, q, np.zeros(43), human.foot_links)


def test_mu_bar_exact():
    c = FrictionCone(0.8)
    assert c.mu_bar == 0.8 / np.sqrt(2.0)
    with pytest.raises(ValueError):
        FrictionCone(0.0)
    with pytest.raises(ValueError):
        FrictionCone(0.8, np.diag([1.0, 1.0, -1.0]))


def test_cone_for_model_frame_is_right_handed(human):
    F = FrictionCone.for_model(human).frame
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-15)
    assert np.linalg.det(F) == pytest.approx(1.0)
    np.testing.assert_array_equal(F[:, 0], human.floor.normal)


def test_standing_grf_carries_weight_symmetrically(human, standing):
    _, dyn = standing
    sol = estimate_grf(dyn, np.zeros(43), FrictionCone.for_model(human))
    lam = sol.per_contact
    W = human.total_mass * 9.81
    assert lam[:, 0].sum() == pytest.approx(W, rel=1e-6)
    # left/right mirror symmetry (order lh, lf, rh, rf)
    assert abs(lam[0, 0] - lam[2, 0]) <= 1e-6 * W
    assert abs(lam[1, 0] - lam[3, 0]) <= 1e-6 * W
    assert np.all(lam[:, 0] > 0)
    assert FrictionCone.for_model(human).violation(sol.lam) == 0.0


def test_zero_gravity_gives_zero_force(human, standing):
    q, _ = standing
    dyn = compute_dynamics(human, q, np.zeros(43), human.foot_links, gravity=0.0)
    sol = estimate_grf(dyn, np.zeros(43), FrictionCone.for_model(human))
    np.testing.assert_allclose(sol.lam, 0.0, atol=1e-12)
    assert sol.qp.objective == pytest.approx(0.0, abs=1e-12)


def test_grf_requires_contacts(human, standing):
    q, _ = standing
    with pytest.raises(ValueError):
        estimate_grf(compute_dynamics(human, q, np.zeros(43), ()), np.zeros(43),
                     FrictionCone.for_model(human))


def test_grf_saturates_cone_facet():
    # every mass at the origin, contact there too: the root rows ask for a pure force
    m = load_character(pendulum_doc(length=0.0))
    a, b = 9.0, 9.81  # tilted gravity: required tangential/normal = a/b > mu_bar
    dyn = compute_dynamics(m, m.zero_q(), np.zeros(7), ("base",), gravity=np.array([-a, 0.0, -b]))
    cone = FrictionCone(0.8)
    sol = estimate_grf(dyn, np.zeros(7), cone)
    M = m.total_mass
    A, B, mb = M * a, M * b, cone.mu_bar
    # projection of (n, t) = (B, A) onto the line t = mu_bar n
    ln = (B + mb * A) / (1 + mb * mb)
    np.testing.assert_allclose(sol.lam, [ln, mb * ln, 0.0], rtol=1e-9)
    assert np.linalg.norm(sol.residual) > 1.0


def test_no_contacts_equation_of_motion(human):
    rng = np.random.default_rng(0)
    q = rng.normal(0, 0.2, 43)
    qd = rng.normal(0, 0.5, 43)
    dyn = compute_dynamics(human, q, qd, ())
    des = rng.normal(0, 5, 43)
    sol = solve_torques(dyn, qd, des)
    r = dyn.M @ sol.qddot - sol.tau + dyn.c
    assert np.abs(r).max() <= 1e-8 * max(1.0, np.abs(sol.tau).max())
    tiny = solve_torques(dyn, qd, des, w_tau=1e-12)
    np.testing.assert_allclose(tiny.qddot, des, atol=1e-6)


def test_downward_reference_is_blocked(human, standing):
    q, _ = standing
    qd = np.zeros(43)
    qd[2] = -0.5  # sinking into the floor
    dyn = compute_dynamics(human, q, qd, human.foot_links)
    des = np.zeros(43)
    des[2] = -50.0
    lam = estimate_grf(dyn, des, FrictionCone.for_model(human)).lam
    phi = 0.01
    for heights in (np.zeros(4), np.full(4, 0.03)):
        sol = TorqueSolver(phi=phi).solve(dyn, qd, des, lam, heights)
        v = (dyn.J_linear @ (qd + phi * sol.qddot)).reshape(4, 3) @ human.floor.normal
        assert v.min() >= -1e-8
        assert sol.fallback == 0
        assert eom_residual(dyn, sol, lam) <= 1e-8


def test_w_tau_tradeoff_is_monotone(human, standing):
    q, _ = standing
    rng = np.random.default_rng(1)
    qd = rng.normal(0, 0.2, 43)
    dyn = compute_dynamics(human, q, qd, human.foot_links)
    des = rng.normal(0, 20, 43)
    lam = estimate_grf(dyn, des, FrictionCone.for_model(human)).lam
    prev = None
    for w in (1e-4, 2e-4, 4e-4, 8e-4, 1.6e-3):
        sol = TorqueSolver(w_tau=w).solve(dyn, qd, des, lam, np.full(4, 0.05))
        cur = (np.linalg.norm(sol.tau), np.linalg.norm(sol.qddot - des))
        if prev is not None:
            assert cur[0] <= prev[0] * (1 + 1e-9)
            assert cur[1] >= prev[1] * (1 - 1e-9)
        prev = cur


def test_velocity_rows_pin_touching_contacts(human, standing):
    _, dyn = standing
    A, lo, hi, kind = contact_velocity_rows(dyn, np.zeros(43), 0.01, 0.02,
                                            heights=np.array([0.0, -0.02, 0.05, 1e-6]))
    normal = kind == 0
    assert normal.sum() == 4 and (~normal).sum() == 8
    np.testing.assert_allclose(lo[normal], [1e-3, 1.0, 0.0, 9e-4], rtol=1e-12)
    np.testing.assert_allclose(hi[normal], [1e-3, 1.0, 0.0, 9e-4], rtol=1e-12)
    np.testing.assert_allclose(lo[~normal], -0.02)
    np.testing.assert_allclose(hi[~normal], 0.02)


def test_fallback_drops_tangential_rows_first(human, standing):
    _, dyn = standing
    dyn1 = compute_dynamics(human, standing[0], np.zeros(43), ("left_heel",))
    Jl = dyn1.J_linear.copy()
    Jl[0] = Jl[2]  # tangential t row equals the normal row
    solver = TorqueSolver()
    lam = np.array([300.0, 0.0, 0.0])
    sol = solver.solve(dyn1, np.zeros(43), np.zeros(43), lam, np.array([-1.0]), J_lin=Jl)
    # normal pinned to 1 m/s conflicts with |t| <= sigma on the same row
    assert sol.fallback == 1
    assert solver.warnings == 1


def test_fallback_drops_all_rows_when_normals_conflict(human, standing):
    dyn2 = compute_dynamics(human, standing[0], np.zeros(43), ("left_heel", "left_heel"))
    solver = TorqueSolver()
    lam = np.array([300.0, 0, 0, 300.0, 0, 0])
    sol = solver.solve(dyn2, np.zeros(43), np.zeros(43), lam, np.array([-1.0, 0.0]))
    assert sol.fallback == 2
    assert solver.warnings == 2
    assert eom_residual(dyn2, sol, lam) <= 1e-8


def test_contacts_need_forces(human, standing):
    _, dyn = standing
    with pytest.raises(ValueError):
        TorqueSolver().solve(dyn, np.zeros(43), np.zeros(43), None)


def test_hover_hold_released_when_infeasible(human):
    # pitching about the ankles sinks the forefeet and lifts the heels;
    # lifting the forefeet with the heels held still would make them slide
    q = lean_pose(human, 0.3)
    dyn = compute_dynamics(human, q, np.zeros(43), human.foot_links)
    h = human.floor.height(dyn.points)
    assert (h[[0, 2]] > 0).all() and (h[[1, 3]] < 0).all()
    lam = estimate_grf(dyn, np.zeros(43), FrictionCone.for_model(human)).lam
    solver = TorqueSolver()
    sol = solver.solve(dyn, np.zeros(43), np.zeros(43), lam, h, dyn.J_linear)
    assert sol.fallback == 0 and solver.warnings == 0
    v = (dyn.J_linear @ (0.01 * sol.qddot)).reshape(4, 3)
    assert v[:, 2].min() >= -1e-10
    assert np.abs(v[:, :2]).max() <= 0.02 + 1e-10
    assert v[[0, 2], 2].max() > 1e-6  # the heels had to rise
