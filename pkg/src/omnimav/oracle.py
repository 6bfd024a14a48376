"""Reference equations of motion built from first principles.

Nothing here reuses the closed-form model.  Body positions and orientations
come from explicit planar frame kinematics, energies are summed per body, and
every matrix entry is obtained by exact nested forward-mode differentiation of
the Lagrangian (see :mod:`omnimav.dual`).  Generalized forces come from the
virtual power of each propeller force applied at its physical location.

It is slow and meant for tests and the ``validate`` command only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as D
from .dynamics import GenState
from .params import VehicleParams


@dataclass(frozen=True)
class BodyKinematics:
    mass: float
    inertia: float
    position: tuple  # CoM in the world frame
    angle: object  # orientation of the body frame


def _rot(angle, v):
    c, s = D.cos(angle), D.sin(angle)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def _offsets(params: VehicleParams):
    return [float(v) for v in params.joint_offsets]


def link_angle(params: VehicleParams, q, i: int):
    return q[2] + q[3 + i] + params.theta_l[i]


def joint_position(params: VehicleParams, q, i: int):
    r = _rot(q[2], (_offsets(params)[i], 0.0))
    return (q[0] + r[0], q[1] + r[1])


def body_kinematics(params: VehicleParams, q) -> list[BodyKinematics]:
    """Platform first, then links 1..N (q entries may be duals)."""
    bodies = [BodyKinematics(params.m_b, params.I_b, (q[0], q[1]), q[2])]
    inertias = params.link_inertias
    for i in range(params.n_links):
        beta = link_angle(params, q, i)
        jp = joint_position(params, q, i)
        r = _rot(beta, (0.0, -params.d[i]))
        bodies.append(BodyKinematics(params.m_p, float(inertias[i]),
                                     (jp[0] + r[0], jp[1] + r[1]), beta))
    return bodies


def body_jacobians(params: VehicleParams, q) -> list[np.ndarray]:
    """Per body, the 3 x (N+3) Jacobian of (x_com, y_com, angle) w.r.t. q."""
    n = params.n_coords
    out = []
    for k in range(params.n_links + 1):
        def f(qv, k=k):
            b = body_kinematics(params, qv)[k]
            return [b.position[0], b.position[1], b.angle]
        cols = D.gradient(f, list(q))
        out.append(np.array([[float(D.real(c[r])) for c in cols] for r in range(3)]).reshape(3, n))
    return out


def _along(q, qd, t):
    return [qi + t * vi for qi, vi in zip(q, qd)]


def kinetic_energy(params: VehicleParams, q, qd):
    def motion(t):
        out = []
        for b in body_kinematics(params, _along(q, qd, t)):
            out.extend([b.position[0], b.position[1], b.angle])
        return out

    rates = D.derivative(motion, 0.0)
    bodies = body_kinematics(params, q)
    T = 0.0
    for k, b in enumerate(bodies):
        vx, vy, w = rates[3 * k: 3 * k + 3]
        T = T + 0.5 * b.mass * (vx * vx + vy * vy) + 0.5 * b.inertia * w * w
    return T


def potential_energy(params: VehicleParams, q):
    U = 0.0
    for b in body_kinematics(params, q):
        U = U + b.mass * params.gravity * b.position[1]
    return U


def lagrangian(params: VehicleParams, q, qd):
    return kinetic_energy(params, q, qd) - potential_energy(params, q)


def _unit(n, i):
    return [1.0 if j == i else 0.0 for j in range(n)]


def oracle_mass_matrix(params: VehicleParams, q) -> np.ndarray:
    """Hessian of the kinetic energy with respect to the velocities."""
    q = [float(v) for v in q]
    n = len(q)
    zero = [0.0] * n
    M = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            val = D.derivative(
                lambda w: D.derivative(lambda v: kinetic_energy(params, q, v), w, _unit(n, i)),
                zero, _unit(n, j))
            M[i, j] = M[j, i] = D.real(val)
    if params.is_servo:
        # kinematic joint convention: the massless link obeys qdd_N = tau_a
        M[-1, -1] = 1.0
    return M


def oracle_bias(params: VehicleParams, state: GenState) -> np.ndarray:
    """h + g from  d/dt dL/dqd - dL/dq  with the qdd contribution removed."""
    q = [float(v) for v in state.q]
    qd = [float(v) for v in state.qd]
    n = len(q)
    out = np.empty(n)
    for i in range(n):
        def momentum(qv, i=i):
            return D.derivative(lambda w: lagrangian(params, qv, w), qd, _unit(n, i))

        convective = D.derivative(momentum, q, qd)
        force = D.derivative(lambda qv: lagrangian(params, qv, qd), q, _unit(n, i))
        out[i] = D.real(convective) - D.real(force)
    return out


def oracle_gravity(params: VehicleParams, q) -> np.ndarray:
    q = [float(v) for v in q]
    return np.array([D.real(D.derivative(lambda qv: potential_energy(params, qv), q,
                                         _unit(len(q), i))) for i in range(len(q))])


def _point_forces(params: VehicleParams, q, u):
    """(application-point function, world force) for every propeller."""
    N = params.n_links
    u = [float(v) for v in u]
    forces = []
    for i in range(N):
        beta = float(link_angle(params, q, i))
        axis = _rot(beta, (0.0, 1.0))
        if params.is_type2 and i == N - 1 and not params.is_servo:
            f_a = 0.5 * (u[N - 1] + u[N])
            f_b = 0.5 * (u[N - 1] - u[N])
            for side, f in ((1.0, f_a), (-1.0, f_b)):
                def point(qv, i=i, side=side):
                    jp = joint_position(params, qv, i)
                    r = _rot(link_angle(params, qv, i), (side * params.a11, 0.0))
                    return (jp[0] + r[0], jp[1] + r[1])
                forces.append((point, (f * axis[0], f * axis[1])))
        else:
            forces.append((lambda qv, i=i: joint_position(params, qv, i),
                           (u[i] * axis[0], u[i] * axis[1])))
    return forces


def oracle_generalized_forces(params: VehicleParams, state: GenState, u) -> np.ndarray:
    """Virtual power of thrusts, servo torque and joint friction."""
    q = [float(v) for v in state.q]
    qd = [float(v) for v in state.qd]
    n = len(q)
    N = params.n_links
    u = np.asarray(u, dtype=float)
    forces = _point_forces(params, q, u)

    def virtual_work(qv):
        W = 0.0
        for point, F in forces:
            p = point(qv)
            W = W + p[0] * F[0] + p[1] * F[1]
        if params.is_servo:
            # equal and opposite torque on link N and the platform
            W = W + u[N] * (link_angle(params, qv, N - 1) - qv[2])
        return W

    def dissipation(w):
        R = 0.0
        for i in range(N):
            R = R + 0.5 * params.b_f[i] * w[3 + i] * w[3 + i]
        return R

    Q = np.empty(n)
    for j in range(n):
        e = _unit(n, j)
        Q[j] = D.real(D.derivative(virtual_work, q, e)) - D.real(D.derivative(dissipation, qd, e))
    return Q


def oracle_forward_dynamics(params: VehicleParams, state: GenState, u) -> np.ndarray:
    M = oracle_mass_matrix(params, state.q)
    return np.linalg.solve(M, oracle_generalized_forces(params, state, u) - oracle_bias(params, state))


def com_acceleration(params: VehicleParams, state: GenState, qdd) -> np.ndarray:
    """Acceleration of the total centre of mass for given generalized accelerations."""
    q = [float(v) for v in state.q]
    qd = [float(v) for v in state.qd]
    qdd = [float(v) for v in qdd]

    def com(t):
        qt = [qi + t * vi + 0.5 * t * t * ai for qi, vi, ai in zip(q, qd, qdd)]
        cx = cy = 0.0
        for b in body_kinematics(params, qt):
            cx = cx + b.mass * b.position[0]
            cy = cy + b.mass * b.position[1]
        return [cx / params.m_tot, cy / params.m_tot]

    acc = D.derivative(lambda s: D.derivative(com, s), 0.0)
    return np.array([D.real(a) for a in acc])
