import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnimav import dual as D
from omnimav import oracle as orc
from omnimav.dynamics import GenState, forward_dynamics
from omnimav.params import preset

T1 = preset("report-nominal", "type1", 3)
T2 = preset("report-nominal", "type2", 2)
SERVO = preset("report-nominal", "type2", 2, "servo")


# dual numbers ----------------------------------------------------------------


@settings(max_examples=50, deadline=None)
@given(st.floats(-3, 3))
def test_dual_matches_calculus(x):
    f = lambda v: D.sin(v) * v * v + D.cos(v) / (2.0 + v * v)
    df = lambda v: (math.cos(v) * v * v + 2 * v * math.sin(v)
                    + (-math.sin(v) * (2 + v * v) - math.cos(v) * 2 * v) / (2 + v * v) ** 2)
    assert D.derivative(f, x) == pytest.approx(df(x), rel=1e-12, abs=1e-12)


def test_nested_derivatives_do_not_confuse_tags():
    # d/dx [x * d/dy (x + y)] = 1; the classic confusion bug yields 2
    val = D.derivative(lambda x: x * D.derivative(lambda y: x + y, 1.0), 1.0)
    assert D.real(val) == 1.0


def test_second_derivative():
    d2 = D.derivative(lambda s: D.derivative(lambda t: D.sin(t) * t, s), 0.7)
    assert D.real(d2) == pytest.approx(2 * math.cos(0.7) - 0.7 * math.sin(0.7))


def test_sqrt_and_gradient():
    g = D.gradient(lambda v: D.sqrt(v[0] * v[0] + v[1] * v[1]), [3.0, 4.0])
    assert [D.real(x) for x in g] == pytest.approx([0.6, 0.8])


# oracle against finite differences --------------------------------------------


def _fd_hessian_T(p, q, qd, h=1e-5):
    n = len(q)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            def T(a, b):
                v = np.array(qd, dtype=float)
                v[i] += a
                v[j] += b
                return D.real(orc.kinetic_energy(p, list(q), list(v)))
            H[i, j] = (T(h, h) - T(h, -h) - T(-h, h) + T(-h, -h)) / (4 * h * h)
    return H


@pytest.mark.parametrize("p", [T1, T2], ids=["type1", "type2"])
def test_mass_matrix_against_finite_differences(p, rng):
    q = rng.uniform(-np.pi, np.pi, p.n_coords)
    H = _fd_hessian_T(p, q, np.zeros(p.n_coords))
    assert np.allclose(orc.oracle_mass_matrix(p, q), H, rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("p", [T1, T2], ids=["type1", "type2"])
def test_gravity_against_finite_differences(p, rng):
    q = rng.uniform(-np.pi, np.pi, p.n_coords)
    h = 1e-6
    fd = []
    for i in range(p.n_coords):
        e = np.zeros(p.n_coords)
        e[i] = h
        fd.append((D.real(orc.potential_energy(p, list(q + e)))
                   - D.real(orc.potential_energy(p, list(q - e)))) / (2 * h))
    assert np.allclose(orc.oracle_gravity(p, q), fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("p", [T1, T2], ids=["type1", "type2"])
def test_newton_law_for_total_com(p, rng):
    """m_tot a_com = sum of propeller forces + weight; joints and friction are internal."""
    s = GenState(rng.uniform(-np.pi, np.pi, p.n_coords), rng.uniform(-2, 2, p.n_coords))
    u = rng.uniform(5, 40, p.n_inputs)
    if p.is_type2:
        u[-1] = 0.3 * u[-2]
    qdd = orc.oracle_forward_dynamics(p, s, u)
    force = np.zeros(2)
    for i in range(p.n_links):
        beta = s.q[2] + s.q[3 + i] + p.theta_l[i]
        thrust = u[i]
        force += thrust * np.array([-np.sin(beta), np.cos(beta)])
    force[1] -= p.gravity * p.m_tot
    assert np.allclose(p.m_tot * orc.com_acceleration(p, s, qdd), force, atol=1e-9)


def test_free_fall_com():
    s = GenState(np.array([0, 0, 0.4, 0.2, -0.1, 0.3]), np.array([1, -1, 0.5, 2, -2, 1.0]))
    qdd = orc.oracle_forward_dynamics(T1, s, np.zeros(3))
    assert np.allclose(orc.com_acceleration(T1, s, qdd), [0.0, -T1.gravity], atol=1e-10)


@pytest.mark.parametrize("p", [T1, T2, SERVO], ids=["type1", "type2", "servo"])
def test_oracle_agrees_with_closed_form(p, rng):
    for _ in range(5):
        s = GenState(rng.uniform(-np.pi, np.pi, p.n_coords), rng.uniform(-3, 3, p.n_coords))
        u = rng.uniform(0, 40, p.n_inputs)
        a = forward_dynamics(p, s, u)
        b = orc.oracle_forward_dynamics(p, s, u)
        assert np.allclose(a, b, rtol=1e-10, atol=1e-10)


def test_body_kinematics_at_equilibrium():
    q = [1.0, 2.0, 0.3, -0.3, -0.3, -0.3]
    bodies = orc.body_kinematics(T1, q)
    assert len(bodies) == 4
    for i, b in enumerate(bodies[1:]):
        jp = orc.joint_position(T1, q, i)
        # links hang straight down from their joints
        assert b.position[0] == pytest.approx(jp[0])
        assert b.position[1] == pytest.approx(jp[1] - T1.d[i])
