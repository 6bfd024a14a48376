"""Omnidirectionality, decoupling-rank and zero-dynamics analysis."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .control import (ExtendedState, NewtonError, PoseRef, consistent_extended_state,
                      extended_decoupling)
from .dynamics import GenState, forward_dynamics, input_jacobian, mass_matrix
from .params import VehicleParams


class OmniClass(str, enum.Enum):
    NOT = "not-omnidirectional"
    PARTIAL = "partially-omnidirectional"
    FULL = "fully-omnidirectional"


@dataclass(frozen=True)
class Wrench:
    fx: float
    fy: float
    m: float

    @classmethod
    def from_generalized(cls, Q) -> "Wrench":
        return cls(float(Q[0]), float(Q[1]), float(Q[2]))


@dataclass(frozen=True)
class OmniReport:
    classification: OmniClass
    rank: int
    n_directions: int
    n_feasible: int
    worst_margin: float  # min over directions of the smallest thrust slack (N)
    directions: np.ndarray  # grid angles (rad)
    feasible: np.ndarray  # per-direction flag

    def as_dict(self) -> dict:
        return dict(classification=self.classification.value, rank=self.rank,
                    n_directions=self.n_directions, n_feasible=self.n_feasible,
                    worst_margin=self.worst_margin)


def numerical_rank(A, rtol: float = 1e-9) -> int:
    s = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    return int(np.sum(s > rtol * max(1.0, s[0])))


def wrench(params: VehicleParams, q, u) -> Wrench:
    q = np.asarray(q, dtype=float)
    return Wrench.from_generalized(input_jacobian(params, q) @ np.asarray(u, dtype=float))


def wrench_jacobian(params: VehicleParams, q) -> np.ndarray:
    """dW/du, the platform rows of the generalized input map (3 x n_inputs)."""
    return input_jacobian(params, q)[:3]


def allocation_matrix(params: VehicleParams, q, u) -> np.ndarray:
    """Full allocation matrix of a Type 2 vehicle.

    Columns: dW/df_i for the passive links, dW/du_Ns, and dW/dtheta_N, the
    sensitivity to the actuated propeller orientation at thrust u_Ns.
    """
    if not params.is_type2:
        return wrench_jacobian(params, q)
    q = np.asarray(q, dtype=float)
    N = params.n_links
    Jw = wrench_jacobian(params, q)
    gam = q[3 + N - 1] + params.theta_l[-1]
    beta = q[2] + gam
    u_ns = float(u[N - 1])
    s_n = params.joint_offsets[-1]
    dtheta = u_ns * np.array([-np.cos(beta), -np.sin(beta), -s_n * np.sin(gam)])
    return np.column_stack([Jw[:, :N], dtheta])


def decoupling_matrix(params: VehicleParams, state: GenState) -> np.ndarray:
    """First three rows of M^-1 dQ/du: sensitivity of the pose accelerations to u."""
    q = np.asarray(state.q, dtype=float)
    return np.linalg.solve(mass_matrix(params, q), input_jacobian(params, q))[:3]


def _zero_moment_thrusts(params: VehicleParams, q, W_f):
    """Solve for thrusts giving platform force ``W_f`` and zero moment.

    The passive-link propellers keep the orientation in ``q``; the actuated
    propeller is re-oriented freely and supplies the residual force.  Returns
    (passive thrusts, u_Ns, nulling cosine of the actuated joint) or None.
    """
    N = params.n_links
    phi = q[2]
    gam = q[3:3 + N - 1] + np.asarray(params.theta_l[:-1])
    beta = phi + gam
    s = params.joint_offsets
    y_b = np.array([-np.sin(phi), np.cos(phi)])
    # moment balance, linear in the passive thrusts once F_N = W_f - sum u_i e_i
    w = np.cos(gam) * (s[:-1] - s[-1])
    rhs = -s[-1] * float(W_f @ y_b)
    if rhs == 0.0:
        u = np.zeros(N - 1)
    else:
        usable = np.where(np.sign(w) == np.sign(rhs), w, 0.0)
        if not np.any(usable):
            return None
        u = rhs * usable / float(usable @ usable)
    E = np.vstack([-np.sin(beta), np.cos(beta)])
    F_N = W_f - E @ u
    u_ns = float(np.hypot(*F_N))
    cos_null = float(F_N @ y_b) / u_ns if u_ns > 0 else np.nan
    return u, u_ns, cos_null


def omni_classify(params: VehicleParams, q, direction_grid_size: int = 64,
                  thrust_limit: float = np.inf, push_fraction: float = 0.25) -> OmniReport:
    """Classify omnidirectionality at configuration ``q``.

    Condition 1 is the rank of the allocation matrix (hover thrusts).  Condition 2
    asks, for every grid direction alpha, for non-negative thrusts below
    ``thrust_limit`` that hold the weight plus a push of ``push_fraction`` times
    the weight along alpha with zero net moment.
    """
    if direction_grid_size < 8:
        raise ValueError("direction_grid_size must be at least 8")
    q = np.asarray(q, dtype=float)
    u_hover = np.full(params.n_inputs, params.hover_thrust)
    if params.is_type2:
        u_hover[-1] = 0.0
    F = allocation_matrix(params, q, u_hover)
    rank = numerical_rank(F)
    alphas = 2 * np.pi * np.arange(direction_grid_size) / direction_grid_size
    feasible = np.zeros(direction_grid_size, dtype=bool)
    worst = np.inf
    if rank == 3 and params.is_type2:
        weight = params.gravity * params.m_tot
        for k, al in enumerate(alphas):
            W_f = np.array([0.0, weight]) + push_fraction * weight * np.array([np.cos(al), np.sin(al)])
            sol = _zero_moment_thrusts(params, q, W_f)
            if sol is None:
                worst = min(worst, -np.inf)
                continue
            u, u_ns, _ = sol
            thrusts = np.append(u, u_ns)
            slack = min(np.min(thrusts), thrust_limit - np.max(thrusts))
            worst = min(worst, slack)
            feasible[k] = slack >= 0 and u_ns > 0
    n_ok = int(feasible.sum())
    if rank < 3 or n_ok == 0:
        cls = OmniClass.NOT
    elif n_ok == direction_grid_size:
        cls = OmniClass.FULL
    else:
        cls = OmniClass.PARTIAL
    return OmniReport(cls, rank, direction_grid_size, n_ok,
                      float(worst) if np.isfinite(worst) else float("nan"), alphas, feasible)


# ---------------------------------------------------------------------------
# zero dynamics


@dataclass(frozen=True)
class ZeroDynState:
    eta1: float  # passive joint angle q4 (rad)
    eta2: float  # its rate (rad/s)

    def __post_init__(self):
        object.__setattr__(self, "eta1", float(self.eta1))
        object.__setattr__(self, "eta2", float(self.eta2))
        if not np.all(np.isfinite([self.eta1, self.eta2])):
            raise ValueError("zero-dynamics state must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.eta1, self.eta2])


def zero_dynamics_simplified_rhs(params: VehicleParams | None, phi_d: float,
                                 zstate: ZeroDynState, l: float) -> ZeroDynState:
    """eta1' = eta2,  eta2' = l (cos eta1 - cos phi_d)."""
    return ZeroDynState(zstate.eta2, l * (np.cos(zstate.eta1) - np.cos(phi_d)))


def pinned_extended_state(params: VehicleParams, phi_d: float, zstate: ZeroDynState,
                          pose_xy=(0.0, 0.0), tol: float = 1e-12, max_iter: int = 50,
                          guess=None) -> ExtendedState:
    """Extended state holding the pose at rest, with the given (eta1, eta2)."""
    target = np.zeros((3, 5))
    target[:, 0] = (pose_xy[0], pose_xy[1], phi_d)
    return consistent_extended_state(params, PoseRef(target), zstate.eta1, zstate.eta2,
                                     tol=tol, max_iter=max_iter, guess=guess)


def zero_dynamics_general_rhs(params: VehicleParams, phi_d: float,
                              zstate: ZeroDynState, **newton) -> ZeroDynState:
    """Internal dynamics with the outputs pinned at (x_d, y_d, phi_d)."""
    ext = pinned_extended_state(params, phi_d, zstate, **newton)
    x = ext.to_array()
    A, b = extended_decoupling(params, x)
    w = np.linalg.solve(A, -b)
    qdd = forward_dynamics(params, ext.plant, np.array([x[10], x[11], w[2]]))
    return ZeroDynState(zstate.eta2, float(qdd[3]))


def pendulum_zero_dynamics_rhs(params: VehicleParams, phi_d: float,
                               zstate: ZeroDynState) -> ZeroDynState:
    """Closed form of the pinned internal dynamics when the platform is held still.

    With the platform fixed the passive link is a damped pendulum about its
    joint: k2 eta2' = -g m_p d sin(phi_d + eta1 + theta_l) - b eta2.
    """
    k2 = params.k2[0]
    beta = phi_d + zstate.eta1 + params.theta_l[0]
    acc = (-params.gravity * params.m_p * params.d[0] * np.sin(beta)
           - params.b_f[0] * zstate.eta2) / k2
    return ZeroDynState(zstate.eta2, float(acc))


def integrate_zero_dynamics(rhs, z0: ZeroDynState, t_final: float, dt: float) -> np.ndarray:
    """RK4 integration of a zero-dynamics vector field; returns (n+1, 2)."""
    n = int(round(t_final / dt))
    out = np.empty((n + 1, 2))
    z = z0.as_array()
    out[0] = z

    def f(v):
        return rhs(ZeroDynState(*v)).as_array()

    for k in range(n):
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = z
    return out


def fit_simplified_gain(params: VehicleParams, phi_d: float, samples) -> float:
    """Least-squares l in eta2' = l (cos eta1 - cos phi_d) against the full model."""
    X, Y = [], []
    for z in samples:
        X.append(np.cos(z.eta1) - np.cos(phi_d))
        Y.append(zero_dynamics_general_rhs(params, phi_d, z).eta2)
    X, Y = np.asarray(X), np.asarray(Y)
    denom = float(X @ X)
    return float(X @ Y / denom) if denom > 0 else 0.0


def perturbed_starts(phi_d: float, n: int = 10, radius=(0.2, 0.2)) -> list[ZeroDynState]:
    """Deterministic starts on an ellipse around (-phi_d, 0), none with zero rate."""
    ang = (2 * np.arange(n) + 1) * np.pi / n
    return [ZeroDynState(-phi_d + radius[0] * np.cos(a), radius[1] * np.sin(a)) for a in ang]
