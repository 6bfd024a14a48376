"""Fixed-step closed-loop simulation, disturbance injection and error metrics."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .control import (N_EXT, ExtendedState, FBLController, ReferenceSpec, SingularityError,
                      fbl_kernel, hover_extended_state, margin_kernel, reference_kernel)
from .dynamics import EquilibriumPose, plain_terms, solve_small
from .params import VehicleParams

STATE_LIMIT = 1e6
POSE_ERROR_LIMIT = 1e3


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    SINGULARITY = "singularity"
    DIVERGED = "diverged"


_CODES = (Termination.COMPLETED, Termination.SINGULARITY, Termination.DIVERGED)


@dataclass(frozen=True)
class DisturbanceSpec:
    """d(t) = A sin(omega t + psi), added to each platform acceleration."""

    A: float = 0.0
    omega: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.A, self.omega, self.psi])):
            raise ValueError("disturbance parameters must be finite")
        if self.A < 0:
            raise ValueError("disturbance amplitude must be non-negative")

    def value(self, t):
        return self.A * np.sin(self.omega * np.asarray(t) + self.psi)

    def pack(self) -> np.ndarray:
        return np.array([self.A, self.omega, self.psi], dtype=float)


# ---------------------------------------------------------------------------
# compiled closed loop


@njit(cache=True, error_model="numpy")
def closed_loop_rhs(pf_plant, pf_ctrl, servo, gains, refp, distp, x, t):
    """Extended vector field; returns (xdot, w, qdd, power, dist)."""
    ref = reference_kernel(refp, t)
    w, _, _, _ = fbl_kernel(pf_ctrl, servo, gains, x, ref)
    q = x[0:5].copy()
    qd = x[5:10].copy()
    u = np.empty(3)
    u[0] = x[10]
    u[1] = x[11]
    u[2] = w[2]
    M, h, g, Q = plain_terms(pf_plant, 2, 1, servo, q, qd, u)
    qdd = solve_small(M, Q - h - g)
    dist = distp[0] * math.sin(distp[1] * t + distp[2])
    for i in range(3):
        qdd[i] += dist
    # power of non-conservative forces, including the injected disturbance
    power = 0.0
    rows = 4 if servo else 5
    for i in range(rows):
        f = Q[i]
        for j in range(3):
            f += M[i, j] * dist
        power += qd[i] * f
    xdot = np.empty(N_EXT)
    xdot[0:5] = qd
    xdot[5:10] = qdd
    xdot[10] = x[12]
    xdot[11] = x[13]
    xdot[12] = w[0]
    xdot[13] = w[1]
    return xdot, w, qdd, power, dist


@njit(cache=True, error_model="numpy")
def _bad(x, refpose):
    for v in x:
        if not math.isfinite(v):
            return True
    for i in range(10):
        if abs(x[i]) > STATE_LIMIT:
            return True
    e = math.hypot(x[0] - refpose[0], x[1] - refpose[1])
    return e > POSE_ERROR_LIMIT


@njit(cache=True, error_model="numpy")
def simulate_kernel(pf_plant, pf_ctrl, servo, gains, refp, distp, x0, t0, dt, n_steps,
                    thrust_scale, margin_min):
    X = np.full((n_steps + 1, N_EXT), np.nan)
    W = np.full((n_steps + 1, 3), np.nan)
    QDD = np.full((n_steps + 1, 5), np.nan)
    P = np.full(n_steps + 1, np.nan)
    DIST = np.full(n_steps + 1, np.nan)
    WORK = np.full(n_steps + 1, np.nan)
    x = x0.copy()
    work = 0.0
    status = 0
    n_log = 0
    for k in range(n_steps + 1):
        t = t0 + k * dt
        X[k] = x
        WORK[k] = work
        n_log = k + 1
        if _bad(x, reference_kernel(refp, t)[:, 0]):
            status = 2
            break
        if margin_kernel(x, thrust_scale) < margin_min:
            status = 1
            break
        k1, w, qdd, p1, dist = closed_loop_rhs(pf_plant, pf_ctrl, servo, gains, refp, distp, x, t)
        W[k] = w
        QDD[k] = qdd
        P[k] = p1
        DIST[k] = dist
        if k == n_steps:
            break
        x2 = x + 0.5 * dt * k1
        if margin_kernel(x2, thrust_scale) < margin_min:
            status = 1
            break
        k2, _, _, p2, _ = closed_loop_rhs(pf_plant, pf_ctrl, servo, gains, refp, distp, x2,
                                          t + 0.5 * dt)
        x3 = x + 0.5 * dt * k2
        if margin_kernel(x3, thrust_scale) < margin_min:
            status = 1
            break
        k3, _, _, p3, _ = closed_loop_rhs(pf_plant, pf_ctrl, servo, gains, refp, distp, x3,
                                          t + 0.5 * dt)
        x4 = x + dt * k3
        if margin_kernel(x4, thrust_scale) < margin_min:
            status = 1
            break
        k4, _, _, p4, _ = closed_loop_rhs(pf_plant, pf_ctrl, servo, gains, refp, distp, x4,
                                          t + dt)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        work += (dt / 6.0) * (p1 + 2.0 * p2 + 2.0 * p3 + p4)
    return status, n_log, X, W, QDD, P, DIST, WORK


# ---------------------------------------------------------------------------
# logs and metrics


@dataclass
class SimLog:
    """Uniformly sampled closed-loop record.

    ``x`` holds extended states, ``u`` the physical inputs (u1, u_Ns, u_Nd),
    ``w`` the extended inputs (v1, v2, u_Nd), ``ref`` the reference pose.
    Samples after a singular or diverged state carry NaN inputs.
    """

    t: np.ndarray
    x: np.ndarray
    w: np.ndarray
    qdd: np.ndarray
    ref: np.ndarray
    dist: np.ndarray
    work: np.ndarray
    power: np.ndarray
    termination: Termination
    meta: dict = field(default_factory=dict)

    @property
    def u(self) -> np.ndarray:
        return np.column_stack([self.x[:, 10], self.x[:, 11], self.w[:, 2]])

    @property
    def e_pos(self) -> np.ndarray:
        return np.hypot(self.x[:, 0] - self.ref[:, 0], self.x[:, 1] - self.ref[:, 1])

    @property
    def e_phi(self) -> np.ndarray:
        return np.abs(self.x[:, 2] - self.ref[:, 2])

    @property
    def completed(self) -> bool:
        return self.termination is Termination.COMPLETED

    def final_state(self) -> ExtendedState:
        return ExtendedState.from_array(self.x[-1])

    def columns(self) -> list[str]:
        q = ["x", "y", "phi", "theta1", "theta2"]
        return (["t"] + q + ["d" + c for c in q] + ["z11", "z12", "z13", "z14"]
                + ["u1", "u_Ns", "u_Nd", "e_pos", "e_phi", "x_ref", "y_ref", "phi_ref", "dist"])

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.x, self.u, self.e_pos, self.e_phi, self.ref,
                                self.dist])

    def to_csv(self, path, stride: int = 1) -> None:
        with open(path, "w", newline="") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for row in self.table()[::stride]:
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class Metrics:
    E_pos: float
    E_phi: float
    ss_pos: float
    ss_phi: float

    def as_dict(self) -> dict:
        return dict(E_pos=self.E_pos, E_phi=self.E_phi, ss_pos=self.ss_pos, ss_phi=self.ss_phi)


def metrics(log: SimLog, window: float = 0.2, t_range: tuple[float, float] | None = None) -> Metrics:
    """L-infinity error norms and mean errors over the final ``window`` fraction.

    With a constant zero orientation reference e_phi is simply |phi|.
    ``t_range`` restricts the L-infinity norms to a time interval.
    """
    if len(log.t) == 0:
        raise ValueError("empty log")
    e_pos, e_phi = log.e_pos, log.e_phi
    sel = slice(None)
    if t_range is not None:
        sel = (log.t >= t_range[0] - 1e-12) & (log.t <= t_range[1] + 1e-12)
        if not np.any(sel):
            raise ValueError("no samples inside t_range")
    n_ss = max(1, int(round(window * len(log.t))))
    return Metrics(float(np.max(e_pos[sel])), float(np.max(e_phi[sel])),
                   float(np.mean(e_pos[-n_ss:])), float(np.mean(e_phi[-n_ss:])))


# ---------------------------------------------------------------------------
# entry points


def _initial(controller: FBLController, ref: ReferenceSpec, x0) -> np.ndarray:
    if x0 is None:
        pose = ref.at(0.0).pose
        x0 = hover_extended_state(controller.params, EquilibriumPose(*pose))
    x0 = x0.to_array() if isinstance(x0, ExtendedState) else np.asarray(x0, dtype=float)
    if x0.shape != (N_EXT,):
        raise ValueError(f"initial extended state needs {N_EXT} entries")
    return x0


def _check_plant(plant: VehicleParams, controller: FBLController):
    if plant.kind_code() != controller.params.kind_code() or plant.n_links != 2:
        raise ValueError("plant and controller model must describe the same vehicle type")


def step_rk4(plant: VehicleParams, controller: FBLController, ext, t: float, dt: float,
             dist: DisturbanceSpec = DisturbanceSpec(),
             ref: ReferenceSpec = ReferenceSpec()) -> ExtendedState:
    """One classical Runge-Kutta step of plant plus compensator."""
    _check_plant(plant, controller)
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = _initial(controller, ref, ext)
    status, n_log, X, *_ = simulate_kernel(
        plant.pack(), controller.params.pack(), plant.kind_code()[1], controller.gains.k,
        ref.pack(), dist.pack(), x, float(t), float(dt), 1, controller.params.hover_thrust,
        controller.margin_min)
    if status == 1:
        m = float(margin_kernel(X[n_log - 1], controller.params.hover_thrust))
        raise SingularityError(m, controller.margin_min)
    if status == 2 or n_log < 2:
        raise FloatingPointError("state left the finite domain during the step")
    return ExtendedState.from_array(X[1])


def run(plant: VehicleParams, controller: FBLController, ref: ReferenceSpec,
        dist: DisturbanceSpec = DisturbanceSpec(), t_final: float = 10.0, dt: float = 1e-3,
        x0=None, meta: dict | None = None) -> SimLog:
    """Integrate the closed loop from ``x0`` (default: hover on the reference at t=0)."""
    _check_plant(plant, controller)
    if not (dt > 0 and t_final > 0):
        raise ValueError("dt and t_final must be positive")
    n_steps = int(round(t_final / dt))
    x0 = _initial(controller, ref, x0)
    status, n_log, X, W, QDD, P, DIST, WORK = simulate_kernel(
        plant.pack(), controller.params.pack(), plant.kind_code()[1], controller.gains.k,
        ref.pack(), dist.pack(), x0, 0.0, float(dt), n_steps, controller.params.hover_thrust,
        controller.margin_min)
    t = np.arange(n_log) * dt
    info = dict(plant_hash=plant.digest(), controller_hash=controller.params.digest(),
                dt=dt, t_final=t_final)
    info.update(meta or {})
    return SimLog(t=t, x=X[:n_log], w=W[:n_log], qdd=QDD[:n_log], ref=ref.table(t),
                  dist=DIST[:n_log], work=WORK[:n_log], power=P[:n_log],
                  termination=_CODES[status], meta=info)
