"""Closed-form Euler-Lagrange model of planar multi-link vehicles.

Generalized coordinates are ``q = (x, y, phi, theta_1, ..., theta_N)``: the
platform CoM position, the platform orientation and the relative joint angles.
The equations of motion read

    M(q) qdd + h(q, qd) + g(q) = Q(q, qd, u)

All terms are produced by one compiled kernel, :func:`eom_terms`, that works
on order-2 jets so the control layer can reuse it for exact time derivatives.
The public functions below evaluate the zeroth-order part only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import jets as J
from .params import VehicleParams


class DimensionError(ValueError):
    """An array has the wrong length for the vehicle it is used with."""


class SingularMassError(RuntimeError):
    """The mass matrix could not be factorized (never expected physically)."""


@dataclass(frozen=True)
class GenState:
    """Plant configuration and generalized velocity."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        qd = np.array(self.qd, dtype=float)
        if q.ndim != 1 or q.shape != qd.shape:
            raise DimensionError("q and qd must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("state must be finite")
        q.flags.writeable = False
        qd.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)

    @classmethod
    def at_rest(cls, q) -> "GenState":
        q = np.asarray(q, dtype=float)
        return cls(q, np.zeros_like(q))


@dataclass(frozen=True)
class EquilibriumPose:
    x: float
    y: float
    phi: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.phi])):
            raise ValueError("pose must be finite")

    def admissible(self, tol: float = 1e-9) -> bool:
        """False when phi sits on an odd multiple of pi/2 (Type 2 singularity)."""
        return orientation_margin(self.phi) > tol


def orientation_margin(phi: float) -> float:
    """Distance (rad) from ``phi`` to the nearest odd multiple of pi/2."""
    r = np.mod(phi - np.pi / 2, np.pi)
    return float(min(r, np.pi - r))


# ---------------------------------------------------------------------------
# compiled kernel


@njit(cache=True, error_model="numpy")
def eom_terms(pf, n_links, type2, servo, q, qd, thrust, moment):
    """Jet-valued M, h, g, Q.

    ``q`` and ``qd`` are (N+3, 3) jet arrays, ``thrust`` is (N, 3) holding the
    lift of each link (u_Ns for the coupled-rotor link), ``moment`` is a jet
    for u_Nd or tau_a.  Type 1 ignores ``moment``.
    """
    N = n_links
    n = N + 3
    m_b, m_p, I_b, I_p, a, a11, grav = pf[0], pf[1], pf[2], pf[3], pf[4], pf[5], pf[6]
    M = np.zeros((n, n, 3))
    h = np.zeros((n, 3))
    g = np.zeros((n, 3))
    Q = np.zeros((n, 3))

    phi = J.row(q, 2)
    dphi = J.row(qd, 2)
    sphi, cphi = J.sincos(phi)
    dphi2 = J.mul(dphi, dphi)
    m_tot = m_b + N * m_p
    M[0, 0, 0] = m_tot
    M[1, 1, 0] = m_tot
    M[2, 2, 0] = I_b
    g[1, 0] = grav * m_tot

    for i in range(N):
        r = 3 + i
        s = a * (1.0 - 2.0 * i / (N - 1)) if N > 1 else 0.0
        d = pf[7 + i]
        bf = pf[7 + N + i]
        inertia = 0.0 if (servo and i == N - 1) else I_p
        m = m_p
        gam = J.add(J.row(q, r), J.const(pf[7 + 2 * N + i]))
        beta = J.add(phi, gam)
        sb, cb = J.sincos(beta)
        sg, cg = J.sincos(gam)
        dth = J.row(qd, r)
        dbeta = J.add(dphi, dth)

        # mass matrix
        J.accumulate_sym(M, 0, 2, J.add(J.scale(sphi, -m * s), J.scale(cb, m * d)))
        J.accumulate_sym(M, 1, 2, J.add(J.scale(cphi, m * s), J.scale(sb, m * d)))
        J.accumulate_sym(M, 0, r, J.scale(cb, m * d))
        J.accumulate_sym(M, 1, r, J.scale(sb, m * d))
        J.accumulate_sym(M, 2, 2, J.add(J.const(inertia + m * (s * s + d * d)),
                                        J.scale(sg, 2.0 * m * s * d)))
        J.accumulate_sym(M, 2, r, J.add(J.const(inertia + m * d * d),
                                        J.scale(sg, m * s * d)))
        M[r, r, 0] += inertia + m * d * d

        # Coriolis / centrifugal
        dbeta2 = J.mul(dbeta, dbeta)
        J.accumulate(h, 0, J.sub(J.scale(J.mul(cphi, dphi2), -m * s),
                                 J.scale(J.mul(sb, dbeta2), m * d)))
        J.accumulate(h, 1, J.add(J.scale(J.mul(sphi, dphi2), -m * s),
                                 J.scale(J.mul(cb, dbeta2), m * d)))
        J.accumulate(h, 2, J.scale(J.mul(cg, J.mul(dth, J.add(J.scale(dphi, 2.0), dth))),
                                   m * s * d))
        J.accumulate(h, r, J.scale(J.mul(cg, dphi2), -m * s * d))

        # gravity
        J.accumulate(g, 2, J.add(J.scale(cphi, grav * m * s), J.scale(sb, grav * m * d)))
        J.accumulate(g, r, J.scale(sb, grav * m * d))

        # thrust through the joint along the link body y-axis
        T = J.row(thrust, i)
        J.accumulate(Q, 0, J.scale(J.mul(T, sb), -1.0))
        J.accumulate(Q, 1, J.mul(T, cb))
        J.accumulate(Q, 2, J.scale(J.mul(T, cg), s))
        if not (type2 and i == N - 1):
            J.accumulate(Q, r, J.scale(dth, -bf))

    if type2:
        mom = (moment[0], moment[1], moment[2])
        if servo:
            # kinematic joint: qdd_N = tau_a
            M[n - 1, n - 1, 0] = 1.0
            J.accumulate(Q, n - 1, mom)
        else:
            J.accumulate(Q, 2, J.scale(mom, a11))
            J.accumulate(Q, n - 1, J.scale(mom, a11))
    return M, h, g, Q


@njit(cache=True, error_model="numpy")
def solve_small(A, b):
    """Gaussian elimination with partial pivoting for small dense systems."""
    n = A.shape[0]
    U = A.copy()
    x = b.copy()
    for k in range(n):
        p = k
        for i in range(k + 1, n):
            if abs(U[i, k]) > abs(U[p, k]):
                p = i
        if p != k:
            for j in range(n):
                U[k, j], U[p, j] = U[p, j], U[k, j]
            x[k], x[p] = x[p], x[k]
        piv = U[k, k]
        for i in range(k + 1, n):
            f = U[i, k] / piv
            for j in range(k + 1, n):
                U[i, j] -= f * U[k, j]
            x[i] -= f * x[k]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= U[i, j] * x[j]
        x[i] = acc / U[i, i]
    return x


@njit(cache=True, error_model="numpy")
def split_input(n_links, type2, u):
    """Map an input vector to (per-link lift, moment channel)."""
    thrust = np.zeros(n_links)
    moment = 0.0
    if type2:
        for i in range(n_links):
            thrust[i] = u[i]
        moment = u[n_links]
    else:
        for i in range(n_links):
            thrust[i] = u[i]
    return thrust, moment


@njit(cache=True, error_model="numpy")
def plain_terms(pf, n_links, type2, servo, q, qd, u):
    n = q.shape[0]
    qj = np.zeros((n, 3))
    qdj = np.zeros((n, 3))
    qj[:, 0] = q
    qdj[:, 0] = qd
    thrust, moment = split_input(n_links, type2, u)
    tj = np.zeros((n_links, 3))
    tj[:, 0] = thrust
    mj = np.zeros(3)
    mj[0] = moment
    M, h, g, Q = eom_terms(pf, n_links, type2, servo, qj, qdj, tj, mj)
    return M[:, :, 0].copy(), h[:, 0].copy(), g[:, 0].copy(), Q[:, 0].copy()


@njit(cache=True, error_model="numpy")
def accel(pf, n_links, type2, servo, q, qd, u, d_ext):
    M, h, g, Q = plain_terms(pf, n_links, type2, servo, q, qd, u)
    qdd = solve_small(M, Q - h - g)
    for i in range(3):
        qdd[i] += d_ext[i]
    return qdd


# ---------------------------------------------------------------------------
# public API


def _coords(params: VehicleParams, v, name: str = "q") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (params.n_coords,):
        raise DimensionError(f"{name} must have {params.n_coords} entries, got shape {v.shape}")
    return v


def _inputs(params: VehicleParams, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (params.n_inputs,):
        raise DimensionError(
            f"{params.vehicle_type.value} input needs {params.n_inputs} entries, got shape {u.shape}")
    return u


def _state(params: VehicleParams, state: GenState) -> tuple[np.ndarray, np.ndarray]:
    return _coords(params, state.q, "q"), _coords(params, state.qd, "qd")


def _terms(params, q, qd, u):
    t2, sv = params.kind_code()
    return plain_terms(params.pack(), params.n_links, t2, sv, q, qd, u)


def mass_matrix(params: VehicleParams, q) -> np.ndarray:
    q = _coords(params, q)
    M, _, _, _ = _terms(params, q, np.zeros_like(q), np.zeros(params.n_inputs))
    return M


def bias_forces(params: VehicleParams, state: GenState) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(h, g)``: velocity-product forces and gravity."""
    q, qd = _state(params, state)
    _, h, g, _ = _terms(params, q, qd, np.zeros(params.n_inputs))
    return h, g


def generalized_forces(params: VehicleParams, state: GenState, u) -> np.ndarray:
    q, qd = _state(params, state)
    _, _, _, Q = _terms(params, q, qd, _inputs(params, u))
    return Q


def forward_dynamics(params: VehicleParams, state: GenState, u, d_ext=None) -> np.ndarray:
    """Generalized accelerations; ``d_ext`` is added to the pose accelerations only."""
    q, qd = _state(params, state)
    u = _inputs(params, u)
    d = np.zeros(3) if d_ext is None else np.asarray(d_ext, dtype=float)
    if d.shape != (3,):
        raise DimensionError("d_ext must be a 3-vector")
    M, h, g, Q = _terms(params, q, qd, u)
    try:
        qdd = np.linalg.solve(M, Q - h - g)
    except np.linalg.LinAlgError as exc:
        raise SingularMassError(str(exc)) from exc
    qdd[:3] += d
    return qdd


def input_jacobian(params: VehicleParams, q) -> np.ndarray:
    """dQ/du, an (N+3) x n_inputs matrix (Q is affine in u)."""
    q = _coords(params, q)
    N = params.n_links
    offsets = params.joint_offsets
    beta = q[2] + q[3:] + np.asarray(params.theta_l)
    gam = q[3:] + np.asarray(params.theta_l)
    JQ = np.zeros((params.n_coords, params.n_inputs))
    JQ[0, :N] = -np.sin(beta)
    JQ[1, :N] = np.cos(beta)
    JQ[2, :N] = offsets * np.cos(gam)
    if params.is_type2:
        if params.is_servo:
            JQ[-1, N] = 1.0
        else:
            JQ[2, N] = params.a11
            JQ[-1, N] = params.a11
    return JQ


def equilibrium_input(params: VehicleParams) -> np.ndarray:
    """Hover input: every lift channel at g m_tot / N, moment channel zero."""
    u = np.full(params.n_inputs, params.hover_thrust)
    if params.is_type2:
        u[-1] = 0.0
    return u


def equilibrium_state(params: VehicleParams, pose: EquilibriumPose) -> GenState:
    """All propellers vertical under the given platform pose, at rest."""
    q = np.concatenate([[pose.x, pose.y, pose.phi],
                        -pose.phi - np.asarray(params.theta_l)])
    return GenState.at_rest(q)


def in_equilibrium_set(params: VehicleParams, state: GenState, u, tol: float = 1e-9) -> bool:
    """Membership test for the equilibrium state set D_x (with its input)."""
    q, qd = _state(params, state)
    u = _inputs(params, u)
    expected = equilibrium_state(params, EquilibriumPose(*q[:3])).q
    joints = np.angle(np.exp(1j * (q[3:] - expected[3:])))
    return bool(np.max(np.abs(qd)) <= tol and np.max(np.abs(joints)) <= tol
                and np.max(np.abs(u - equilibrium_input(params))) <= tol * max(1.0, params.hover_thrust))


def static_balance_residual(params: VehicleParams, q, u) -> np.ndarray:
    """g(q) - Q(q, 0, u); zero exactly at static equilibria."""
    q = _coords(params, q)
    _, _, g, Q = _terms(params, q, np.zeros_like(q), _inputs(params, u))
    return g - Q


def potential_energy(params: VehicleParams, q) -> float:
    q = _coords(params, q)
    beta = q[2] + q[3:] + np.asarray(params.theta_l)
    heights = params.joint_offsets * np.sin(q[2]) - np.asarray(params.d) * np.cos(beta)
    return params.gravity * (params.m_tot * q[1] + params.m_p * np.sum(heights))


def total_energy(params: VehicleParams, state: GenState) -> tuple[float, float]:
    """Return ``(kinetic, potential)``."""
    q, qd = _state(params, state)
    M = mass_matrix(params, q)
    if params.is_servo:
        M[-1, -1] = 0.0  # the kinematic joint row carries no kinetic energy
    return 0.5 * float(qd @ M @ qd), potential_energy(params, q)


def validate_input(params: VehicleParams, u, tol: float = 0.0) -> None:
    """Raise ``ValueError`` unless thrusts are unidirectional and admissible."""
    u = _inputs(params, u)
    N = params.n_links
    thrusts = u[:N]
    if np.any(thrusts < -tol):
        raise ValueError("thrusts must be non-negative")
    if params.is_type2 and not params.is_servo and abs(u[N]) > u[N - 1] + tol:
        raise ValueError("coupled rotor requires |u_Nd| <= u_Ns")
