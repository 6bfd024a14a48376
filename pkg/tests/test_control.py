import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omnimav.control import (ExtendedState, FBLController, GainSet, ReferenceSpec,
                             SingularityError, circle_reference, consistent_extended_state,
                             design_gains, extended_decoupling, hover_extended_state,
                             output_derivatives, output_fourth_derivative,
                             sinusoidal_orientation_reference, singularity_margin)
from omnimav.dynamics import EquilibriumPose, GenState, forward_dynamics
from omnimav.params import preset

P = preset("report-nominal")
SERVO = preset("report-nominal", "type2", 2, "servo")


def _flow(p, x, w):
    """Extended vector field, assembled from the plant model directly."""
    u = np.array([x[10], x[11], w[2]])
    qdd = forward_dynamics(p, GenState(x[:5], x[5:10]), u)
    return np.concatenate([x[5:10], qdd, [x[12], x[13], w[0], w[1]]])


def _random_ext(rng, p):
    x = np.concatenate([rng.uniform(-1, 1, 5), rng.uniform(-1, 1, 5),
                        p.hover_thrust * rng.uniform(0.7, 1.3, 2), rng.uniform(-5, 5, 2)])
    x[2] = rng.uniform(-1.2, 1.2)
    return x


# gains ---------------------------------------------------------------------


def test_default_gains():
    assert np.array_equal(GainSet().k, np.tile([81.0, 108.0, 54.0, 12.0], (3, 1)))


def test_complex_poles_and_per_channel():
    g = design_gains([-1 + 2j, -1 - 2j, -4, -5])
    # (s^2 + 2s + 5)(s^2 + 9s + 20) = s^4 + 11 s^3 + 43 s^2 + 85 s + 100
    assert np.allclose(g.k[0], [100, 85, 43, 11])
    g3 = design_gains([[-1] * 4, [-2] * 4, [-3] * 4])
    assert np.allclose(g3.k[:, 0], [1, 16, 81])


@pytest.mark.parametrize("poles", [[-1, -2, -3, 0.5], [-1 + 1j, -1, -2, -3], [-1, -2, -3]])
def test_bad_poles_rejected(poles):
    with pytest.raises(ValueError):
        design_gains(poles)


def test_non_hurwitz_gains_rejected():
    with pytest.raises(ValueError):
        GainSet(np.array([1.0, -1.0, 1.0, 1.0]))


# references --------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 30), st.floats(0, 2), st.floats(0.1, 1.5), st.floats(0, 1.3),
       st.floats(0.1, 2))
def test_reference_derivatives_match_finite_differences(t, r, rate, amp, prate):
    spec = ReferenceSpec(center=(1.0, -2.0), radius=r, rate=rate, phi0=0.1, phi_amp=amp,
                         phi_rate=prate)
    h = 1e-4
    D = spec.at(t).derivs
    for k in range(4):
        fd = (spec.at(t + h).derivs[:, k] - spec.at(t - h).derivs[:, k]) / (2 * h)
        assert np.allclose(fd, D[:, k + 1], rtol=1e-6, atol=1e-6)
    assert np.allclose(spec.table([t])[0], D[:, 0])


def test_named_references():
    R = circle_reference(0.0)
    assert np.allclose(R.pose, [6.0, 5.0, 0.0])
    assert np.allclose(R.derivs[:2, 1], [0.0, 0.5])
    s = sinusoidal_orientation_reference(1.0, 0.5, 2.0)
    assert np.allclose(s[:3], [0.5 * np.sin(2.0), np.cos(2.0), -2.0 * np.sin(2.0)])


# outputs and the decoupling matrix ----------------------------------------


@pytest.mark.parametrize("p", [P, SERVO], ids=["coupled", "servo"])
def test_output_derivatives_against_flow(p, rng):
    for _ in range(5):
        x = _random_ext(rng, p)
        w = rng.uniform(-50, 50, 3)
        Y = output_derivatives(p, x)
        assert np.allclose(Y[:, 0], x[:3]) and np.allclose(Y[:, 1], x[5:8])
        f = _flow(p, x, w)
        assert np.allclose(Y[:, 2], f[5:8], atol=1e-10)
        h = 1e-5
        Yp = output_derivatives(p, x + h * f)
        Ym = output_derivatives(p, x - h * f)
        assert np.allclose((Yp[:, 2] - Ym[:, 2]) / (2 * h), Y[:, 3], rtol=1e-6, atol=1e-5)
        y4 = output_fourth_derivative(p, x, w)
        assert np.allclose((Yp[:, 3] - Ym[:, 3]) / (2 * h), y4, rtol=1e-5, atol=1e-4)


def test_fourth_derivative_affine_in_inputs(rng):
    x = _random_ext(rng, P)
    A, b = extended_decoupling(P, x)
    for _ in range(3):
        w = rng.uniform(-20, 20, 3)
        assert np.allclose(output_fourth_derivative(P, x, w), A @ w + b, rtol=1e-10, atol=1e-8)


def test_det_linear_in_z12(rng):
    x = _random_ext(rng, P)
    vals = []
    for z in (0.0, 10.0, 20.0, 30.0):
        x[11] = z
        vals.append(np.linalg.det(extended_decoupling(P, x)[0]))
    assert abs(vals[0]) < 1e-9 * abs(vals[-1])
    assert np.allclose(np.diff(vals), vals[1] - vals[0], rtol=1e-8)


def test_decoupling_singular_at_right_angle():
    x = hover_extended_state(P, EquilibriumPose(0, 0, np.pi / 2)).to_array()
    A, _ = extended_decoupling(P, x)
    assert abs(np.linalg.det(A)) < 1e-9


def test_type1_rejected():
    with pytest.raises(ValueError):
        FBLController(preset("report-nominal", "type1", 2))


# the linearizing law -------------------------------------------------------


def test_closed_loop_error_dynamics_are_linear(rng):
    ctrl = FBLController(P)
    ref = ReferenceSpec.circle(phi_amp=0.4, phi_rate=0.7).at(1.3)
    for _ in range(5):
        x = _random_ext(rng, P)
        w, u = ctrl.command(x, ref)
        Y = output_derivatives(P, x)
        R = ref.derivs
        expected = R[:, 4] + np.sum(ctrl.gains.k * (R[:, :4] - Y), axis=1)
        assert np.allclose(output_fourth_derivative(P, x, w), expected, rtol=1e-8, atol=1e-6)
        assert np.allclose(u, [x[10], x[11], w[2]])


def test_singularity_error_near_right_angle():
    ctrl = FBLController(P)
    ext = hover_extended_state(P, EquilibriumPose(0, 0, np.pi / 2 - 0.01))
    assert singularity_margin(P, ext) == pytest.approx(0.01)
    with pytest.raises(SingularityError) as info:
        ctrl.command(ext, ReferenceSpec().at(0.0))
    assert info.value.margin < info.value.threshold


def test_singularity_error_at_zero_thrust():
    x = hover_extended_state(P, EquilibriumPose(0, 0, 0.3)).to_array()
    x[11] = 0.0
    with pytest.raises(SingularityError):
        FBLController(P).command(x, ReferenceSpec().at(0.0))


@pytest.mark.parametrize("t", [0.0, 2.0, 7.5])
def test_consistent_state_matches_reference(t):
    ref = ReferenceSpec.circle(phi_amp=np.deg2rad(40), phi_rate=0.5).at(t)
    ext = consistent_extended_state(P, ref)
    Y = output_derivatives(P, ext)
    assert np.allclose(Y, ref.derivs[:, :4], atol=1e-10)


def test_hover_state_is_consistent_with_regulation():
    pose = EquilibriumPose(2.0, 3.0, 0.4)
    ext = hover_extended_state(P, pose)
    Y = output_derivatives(P, ext)
    assert np.allclose(Y[:, 0], [2.0, 3.0, 0.4]) and np.allclose(Y[:, 1:], 0.0, atol=1e-12)


def test_extended_state_round_trip():
    x = np.arange(14, dtype=float)
    e = ExtendedState.from_array(x)
    assert np.array_equal(e.to_array(), x)
    assert np.array_equal(e.physical_input, [10.0, 11.0])
    with pytest.raises(ValueError):
        ExtendedState.from_array(np.zeros(13))
