import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnimav.dynamics import (DimensionError, EquilibriumPose, GenState, bias_forces,
                              equilibrium_input, equilibrium_state, forward_dynamics,
                              generalized_forces, in_equilibrium_set, input_jacobian,
                              mass_matrix, orientation_margin, potential_energy, total_energy,
                              validate_input)
from omnimav.params import preset

VEHICLES = [preset("report-nominal", "type1", 2), preset("report-nominal", "type1", 3),
            preset("report-nominal", "type2", 2), preset("main-paper", "type2", 3)]

angle = st.floats(-np.pi, np.pi)
rate = st.floats(-4.0, 4.0)


def _q(p, vals):
    return np.array(vals[:p.n_coords])


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(VEHICLES), st.lists(angle, min_size=6, max_size=6))
def test_mass_matrix_symmetric_positive_definite(p, vals):
    M = mass_matrix(p, _q(p, vals))
    assert np.allclose(M, M.T, atol=1e-12)
    assert np.linalg.eigvalsh(M).min() > 0


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(VEHICLES), st.lists(angle, min_size=6, max_size=6),
       st.floats(-50, 50), st.floats(-50, 50))
def test_translation_invariance(p, vals, dx, dy):
    q = _q(p, vals)
    q2 = q.copy()
    q2[:2] += (dx, dy)
    assert np.allclose(mass_matrix(p, q), mass_matrix(p, q2), atol=1e-12)
    _, g1 = bias_forces(p, GenState.at_rest(q))
    _, g2 = bias_forces(p, GenState.at_rest(q2))
    assert np.allclose(g1, g2, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(VEHICLES), st.lists(angle, min_size=6, max_size=6),
       st.lists(rate, min_size=6, max_size=6), st.floats(0, 60), st.floats(-1, 1))
def test_power_balance(p, qv, qdv, thrust, ratio):
    """d(T + U)/dt equals the power of thrusts, moments and friction."""
    q, qd = _q(p, qv), _q(p, qdv)
    u = np.full(p.n_inputs, thrust)
    if p.is_type2:
        u[-1] = ratio * thrust
    s = GenState(q, qd)
    qdd = forward_dynamics(p, s, u)
    eps = 1e-6

    def energy(k):
        return sum(total_energy(p, GenState(q + k * eps * qd, qd + k * eps * qdd)))

    dE = (energy(1) - energy(-1)) / (2 * eps)
    power = qd @ generalized_forces(p, s, u)
    assert dE == pytest.approx(power, rel=1e-5, abs=1e-5 * (1 + abs(power)))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(VEHICLES), st.floats(-20, 20), st.floats(-20, 20), angle)
def test_equilibrium_is_rest_point(p, x, y, phi):
    s = equilibrium_state(p, EquilibriumPose(x, y, phi))
    u = equilibrium_input(p)
    assert np.max(np.abs(forward_dynamics(p, s, u))) < 1e-11
    assert in_equilibrium_set(p, s, u)


def test_off_equilibrium_detected():
    p = VEHICLES[2]
    s = equilibrium_state(p, EquilibriumPose(0, 0, 0.3))
    u = equilibrium_input(p)
    assert not in_equilibrium_set(p, s, u * 1.01)
    assert not in_equilibrium_set(p, GenState(s.q, s.qd + 0.1), u)


@pytest.mark.parametrize("p", VEHICLES, ids=lambda p: f"{p.vehicle_type.value}-N{p.n_links}")
def test_input_jacobian_matches_affine_forces(p, rng):
    q = rng.uniform(-np.pi, np.pi, p.n_coords)
    s = GenState.at_rest(q)
    u = rng.uniform(0, 30, p.n_inputs)
    J = input_jacobian(p, q)
    Q0 = generalized_forces(p, s, np.zeros(p.n_inputs))
    assert np.allclose(generalized_forces(p, s, u) - Q0, J @ u, atol=1e-12)


def test_disturbance_adds_to_platform_acceleration(rng):
    p = VEHICLES[2]
    s = GenState(rng.normal(size=5), rng.normal(size=5))
    u = equilibrium_input(p)
    a = forward_dynamics(p, s, u)
    b = forward_dynamics(p, s, u, d_ext=np.full(3, 0.7))
    assert np.allclose(b[:3] - a[:3], 0.7) and np.allclose(b[3:], a[3:])


def test_servo_joint_follows_command(rng):
    p = preset("report-nominal", "type2", 2, "servo")
    s = GenState(rng.normal(size=5), rng.normal(size=5))
    u = np.array([40.0, 40.0, 2.5])
    assert forward_dynamics(p, s, u)[-1] == pytest.approx(2.5)


def test_free_fall():
    p = VEHICLES[1]
    s = GenState.at_rest(np.array([0, 0, 0.2, 0.1, -0.3, 0.5]))
    qdd = forward_dynamics(p, s, np.zeros(3))
    # no forces but gravity and a resting state: every body falls at g
    assert qdd[1] == pytest.approx(-p.gravity)
    assert np.allclose(qdd[[0, 2, 3, 4, 5]], 0.0, atol=1e-12)


def test_potential_energy_height():
    p = VEHICLES[2]
    q = equilibrium_state(p, EquilibriumPose(0, 2.0, 0.0)).q
    expected = p.gravity * (p.m_tot * 2.0 - p.m_p * sum(p.d))
    assert potential_energy(p, q) == pytest.approx(expected)


def test_shape_and_input_validation():
    p = VEHICLES[2]
    with pytest.raises(DimensionError):
        mass_matrix(p, np.zeros(4))
    with pytest.raises(DimensionError):
        GenState(np.zeros(5), np.zeros(4))
    with pytest.raises(ValueError):
        GenState(np.array([np.nan] * 5), np.zeros(5))
    with pytest.raises(ValueError):
        validate_input(p, [-1.0, 10.0, 0.0])
    with pytest.raises(ValueError):
        validate_input(p, [10.0, 5.0, 6.0])
    validate_input(p, [10.0, 5.0, -5.0])


def test_genstate_is_immutable():
    s = GenState(np.zeros(5), np.zeros(5))
    with pytest.raises(ValueError):
        s.q[0] = 1.0


def test_orientation_margin():
    assert orientation_margin(0.0) == pytest.approx(np.pi / 2)
    assert orientation_margin(np.pi / 2) == pytest.approx(0.0, abs=1e-15)
    assert orientation_margin(-np.pi / 2 + 0.1) == pytest.approx(0.1)
    assert not EquilibriumPose(0, 0, np.pi / 2).admissible()
