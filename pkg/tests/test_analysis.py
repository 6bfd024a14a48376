import numpy as np
import pytest

from omnimav import analysis as an
from omnimav.dynamics import EquilibriumPose, GenState, equilibrium_input, equilibrium_state
from omnimav.params import preset

T1 = preset("report-nominal", "type1", 2)
T2 = preset("report-nominal")


def _eq(p, phi):
    return equilibrium_state(p, EquilibriumPose(0.0, 0.0, phi))


def test_numerical_rank():
    assert an.numerical_rank(np.eye(3)) == 3
    assert an.numerical_rank(np.array([[1.0, 2.0], [2.0, 4.0 + 1e-14]])) == 1
    assert an.numerical_rank(np.zeros((2, 2))) == 0


@pytest.mark.parametrize("phi", [-1.0, 0.0, 0.7])
def test_type1_rank_deficient_at_equilibrium(phi):
    st = _eq(T1, phi)
    assert an.numerical_rank(an.wrench_jacobian(T1, st.q)) == 2
    assert an.numerical_rank(an.decoupling_matrix(T1, st)) == 2
    rep = an.omni_classify(T1, st.q)
    assert rep.classification is an.OmniClass.NOT and rep.rank == 2


def test_wrench_at_hover_balances_weight():
    st = _eq(T2, 0.3)
    w = an.wrench(T2, st.q, equilibrium_input(T2))
    assert (w.fx, w.fy) == pytest.approx((0.0, T2.gravity * T2.m_tot))
    assert w.m == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("phi", [0.0, 0.5, 1.0])
def test_type2_fully_omnidirectional(phi):
    rep = an.omni_classify(T2, _eq(T2, phi).q)
    assert rep.rank == 3
    assert rep.classification is an.OmniClass.FULL
    assert rep.n_feasible == rep.n_directions and rep.worst_margin >= 0


def test_type2_partial_near_right_angle():
    rep = an.omni_classify(T2, _eq(T2, 1.4).q)
    assert rep.classification is an.OmniClass.PARTIAL
    assert 0 < rep.n_feasible < rep.n_directions


def test_thrust_limit_matters():
    heavy = T2.replace(gravity=9.81e3)
    rep = an.omni_classify(heavy, _eq(heavy, 0.2).q, thrust_limit=4 * T2.hover_thrust)
    assert rep.classification is an.OmniClass.NOT


def test_classifier_report_serializes():
    d = an.omni_classify(T2, _eq(T2, 0.0).q, direction_grid_size=16).as_dict()
    assert d["classification"] == "fully-omnidirectional" and d["n_directions"] == 16
    with pytest.raises(ValueError):
        an.omni_classify(T2, _eq(T2, 0.0).q, direction_grid_size=4)


# zero dynamics ------------------------------------------------------------


def test_simplified_rhs_equilibrium_and_shape():
    z = an.zero_dynamics_simplified_rhs(None, 0.4, an.ZeroDynState(-0.4, 0.0), l=3.0)
    assert (z.eta1, z.eta2) == (0.0, pytest.approx(3.0 * (np.cos(-0.4) - np.cos(0.4))))
    z = an.zero_dynamics_simplified_rhs(None, 0.4, an.ZeroDynState(0.1, 0.2), l=2.0)
    assert z.eta1 == 0.2 and z.eta2 == pytest.approx(2.0 * (np.cos(0.1) - np.cos(0.4)))


@pytest.mark.parametrize("phi_d", [0.0, 0.5])
def test_general_rhs_matches_pendulum_form(phi_d):
    for z in an.perturbed_starts(phi_d, 4):
        g = an.zero_dynamics_general_rhs(T2, phi_d, z)
        p = an.pendulum_zero_dynamics_rhs(T2, phi_d, z)
        assert g.eta1 == z.eta2
        assert g.eta2 == pytest.approx(p.eta2, abs=1e-9)


def test_general_rhs_vanishes_at_equilibrium():
    g = an.zero_dynamics_general_rhs(T2, 0.6, an.ZeroDynState(-0.6, 0.0))
    assert abs(g.eta1) < 1e-12 and abs(g.eta2) < 1e-9


def test_pinned_state_holds_pose():
    from omnimav.control import output_derivatives
    ext = an.pinned_extended_state(T2, 0.3, an.ZeroDynState(-0.1, 0.2), pose_xy=(1.0, 2.0))
    Y = output_derivatives(T2, ext)
    assert np.allclose(Y[:, 0], [1.0, 2.0, 0.3]) and np.allclose(Y[:, 1:], 0.0, atol=1e-10)
    assert ext.plant.q[3] == -0.1 and ext.plant.qd[3] == 0.2


def test_fit_recovers_zero_gain_without_offset():
    flat = T2.replace(d=(0.0, 0.0), b_f=(0.0, 0.0))
    assert abs(an.fit_simplified_gain(flat, 0.5, an.perturbed_starts(0.5, 4))) < 1e-8


def test_rk4_integrator_on_oscillator():
    rhs = lambda z: an.ZeroDynState(z.eta2, -z.eta1)
    traj = an.integrate_zero_dynamics(rhs, an.ZeroDynState(1.0, 0.0), 6.0, 1e-2)
    assert traj.shape == (601, 2)
    assert np.allclose(traj[-1], [np.cos(6.0), -np.sin(6.0)], atol=1e-8)


def test_perturbed_starts_geometry():
    starts = an.perturbed_starts(0.3, 10, (0.2, 0.1))
    arr = np.array([z.as_array() for z in starts])
    assert len(starts) == 10
    assert np.allclose(((arr[:, 0] + 0.3) / 0.2) ** 2 + (arr[:, 1] / 0.1) ** 2, 1.0)
    assert np.all(np.abs(arr[:, 1]) > 0)


def test_zero_dyn_state_validation():
    with pytest.raises(ValueError):
        an.ZeroDynState(np.nan, 0.0)
