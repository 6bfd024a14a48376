"""Dynamic feedback-linearizing pose controller for the two-link Type 2 vehicle.

The two lift channels are extended by double integrators
(z11' = z13, z12' = z14, z13' = v1, z14' = v2) while the moment channel is
commanded directly.  The extended state is

    x_E = (q (5), qd (5), z11, z12, z13, z14)

and the pose output y = (x, y, phi) then has vector relative degree (4, 4, 4):

    y^(4) = b(x_E) + A(x_E) (v1, v2, u_Nd)

Output derivatives, ``A`` and ``b`` are exact.  They come from a truncated
Taylor expansion of the plant in time, obtained by evaluating the equations
of motion on jets (see :mod:`omnimav.jets`): no finite differences anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamics import (EquilibriumPose, GenState, eom_terms, equilibrium_state,
                       orientation_margin, solve_small)
from .params import VehicleParams

N_EXT = 14
_FACT = np.array([1.0, 1.0, 2.0, 6.0, 24.0])


class SingularityError(RuntimeError):
    """The extended state left the region where the decoupling matrix is invertible."""

    def __init__(self, margin: float, threshold: float):
        super().__init__(f"singularity margin {margin:.3g} below threshold {threshold:.3g}")
        self.margin = margin
        self.threshold = threshold


def _require_controllable(params: VehicleParams):
    if not params.is_type2 or params.n_links != 2:
        raise ValueError("the tracking controller is defined for Type 2 vehicles with N = 2")


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, error_model="numpy")
def ext_taylor(pf, servo, x, w):
    """Taylor coefficients q_0..q_4 of the plant under the extended inputs.

    Returns the (5, 5) coefficient array and the mass matrix at x.
    """
    N = 2
    n = 5
    qc = np.zeros((n, 5))
    for i in range(n):
        qc[i, 0] = x[i]
        qc[i, 1] = x[n + i]
    thrust = np.zeros((N, 3))
    thrust[0, 0] = x[2 * n]
    thrust[0, 1] = x[2 * n + 2]
    thrust[0, 2] = 0.5 * w[0]
    thrust[1, 0] = x[2 * n + 1]
    thrust[1, 1] = x[2 * n + 3]
    thrust[1, 2] = 0.5 * w[1]
    moment = np.zeros(3)
    moment[0] = w[2]
    acc = np.zeros((n, 3))
    qj = np.zeros((n, 3))
    qdj = np.zeros((n, 3))
    M0 = np.zeros((n, n))
    for k in range(3):
        for i in range(n):
            for m in range(3):
                qj[i, m] = qc[i, m]
                qdj[i, m] = (m + 1) * qc[i, m + 1]
        M, h, g, Q = eom_terms(pf, N, 1, servo, qj, qdj, thrust, moment)
        rhs = np.empty(n)
        for i in range(n):
            r = Q[i, k] - h[i, k] - g[i, k]
            for j in range(1, k + 1):
                for c in range(n):
                    r -= M[i, c, j] * acc[c, k - j]
            rhs[i] = r
        if k == 0:
            M0[:, :] = M[:, :, 0]
        a = solve_small(M0, rhs)
        for i in range(n):
            acc[i, k] = a[i]
            qc[i, k + 2] = a[i] / ((k + 1) * (k + 2))
    return qc, M0


@njit(cache=True, error_model="numpy")
def extended_terms(pf, servo, x):
    """Output derivatives Y (3, 4), decoupling matrix A (3, 3) and drift b (3,)."""
    w = np.zeros(3)
    qc0, M0 = ext_taylor(pf, servo, x, w)
    Y = np.empty((3, 4))
    b = np.empty(3)
    for c in range(3):
        for k in range(4):
            Y[c, k] = _FACT[k] * qc0[c, k]
        b[c] = 24.0 * qc0[c, 4]
    A = np.zeros((3, 3))
    # thrust channels: y^(4) depends on v exactly as qdd depends on u
    a = pf[4]
    for i in range(2):
        s = a if i == 0 else -a
        gam = x[3 + i] + pf[7 + 4 + i]
        beta = x[2] + gam
        col = np.zeros(5)
        col[0] = -math.sin(beta)
        col[1] = math.cos(beta)
        col[2] = s * math.cos(gam)
        sol = solve_small(M0, col)
        for c in range(3):
            A[c, i] = sol[c]
    # moment channel: y^(4) is affine in u_Nd
    w[2] = 1.0
    qc1, _ = ext_taylor(pf, servo, x, w)
    for c in range(3):
        A[c, 2] = 24.0 * (qc1[c, 4] - qc0[c, 4])
    return Y, A, b


@njit(cache=True, error_model="numpy")
def margin_kernel(x, thrust_scale):
    r = (x[2] - 0.5 * math.pi) % math.pi
    ang = min(r, math.pi - r)
    return min(abs(x[11]) / thrust_scale, ang)


@njit(cache=True, error_model="numpy")
def reference_kernel(refp, t):
    """(3, 5) array of reference values and derivatives through order 4.

    refp = (cx, cy, radius, rate, phi0, phi_amp, phi_rate).
    """
    out = np.zeros((3, 5))
    cx, cy, r, om, phi0, amp, om2 = refp[0], refp[1], refp[2], refp[3], refp[4], refp[5], refp[6]
    for k in range(5):
        sh = 0.5 * math.pi * k
        out[0, k] = r * om ** k * math.cos(om * t + sh)
        out[1, k] = r * om ** k * math.sin(om * t + sh)
        out[2, k] = amp * om2 ** k * math.sin(om2 * t + sh)
    out[0, 0] += cx
    out[1, 0] += cy
    out[2, 0] += phi0
    return out


@njit(cache=True, error_model="numpy")
def fbl_kernel(pf, servo, gains, x, ref):
    """Outer linear law and its inversion; returns (w, Y, A, b)."""
    Y, A, b = extended_terms(pf, servo, x)
    nu = np.empty(3)
    for c in range(3):
        acc = ref[c, 4] - b[c]
        for k in range(4):
            acc += gains[c, k] * (ref[c, k] - Y[c, k])
        nu[c] = acc
    w = solve_small(A, nu)
    return w, Y, A, b


# ---------------------------------------------------------------------------
# states and references


@dataclass(frozen=True)
class ExtendedState:
    """Plant state plus the four compensator integrators."""

    plant: GenState
    z: np.ndarray  # (z11, z12, z13, z14)

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        if z.shape != (4,) or not np.all(np.isfinite(z)):
            raise ValueError("compensator state must be 4 finite numbers")
        if self.plant.q.shape != (5,):
            raise ValueError("the extended state is defined for N = 2")
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.plant.q, self.plant.qd, self.z])

    @classmethod
    def from_array(cls, x) -> "ExtendedState":
        x = np.asarray(x, dtype=float)
        if x.shape != (N_EXT,):
            raise ValueError(f"extended state needs {N_EXT} entries")
        return cls(GenState(x[:5], x[5:10]), x[10:])

    @property
    def physical_input(self) -> np.ndarray:
        """(u1, u_Ns) currently applied by the compensator."""
        return self.z[:2].copy()


def hover_extended_state(params: VehicleParams, pose: EquilibriumPose) -> ExtendedState:
    """Equilibrium plant state with the compensator initialized at hover thrust."""
    _require_controllable(params)
    t = params.hover_thrust
    return ExtendedState(equilibrium_state(params, pose), np.array([t, t, 0.0, 0.0]))


@dataclass(frozen=True)
class PoseRef:
    """Reference pose and its time derivatives: ``derivs[channel, order]``."""

    derivs: np.ndarray

    def __post_init__(self):
        d = np.array(self.derivs, dtype=float)
        if d.shape != (3, 5):
            raise ValueError("PoseRef needs a (3, 5) derivative table")
        d.flags.writeable = False
        object.__setattr__(self, "derivs", d)

    @property
    def pose(self) -> np.ndarray:
        return self.derivs[:, 0].copy()


@dataclass(frozen=True)
class ReferenceSpec:
    """Circle in position plus sinusoid in orientation.

    x_d = cx + radius cos(rate t),  y_d = cy + radius sin(rate t),
    phi_d = phi0 + phi_amp sin(phi_rate t).
    Pose regulation is the special case radius = phi_amp = 0.
    """

    center: tuple[float, float] = (0.0, 0.0)
    radius: float = 0.0
    rate: float = 0.0
    phi0: float = 0.0
    phi_amp: float = 0.0
    phi_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        vals = self.pack()
        if not np.all(np.isfinite(vals)):
            raise ValueError("reference parameters must be finite")
        if self.radius < 0:
            raise ValueError("radius must be non-negative")

    @classmethod
    def regulation(cls, x: float, y: float, phi: float) -> "ReferenceSpec":
        return cls(center=(x, y), phi0=phi)

    @classmethod
    def circle(cls, radius: float = 1.0, center=(5.0, 5.0), rate: float = 0.5,
               phi_amp: float = 0.0, phi_rate: float = 0.0) -> "ReferenceSpec":
        return cls(center=center, radius=radius, rate=rate, phi_amp=phi_amp, phi_rate=phi_rate)

    @property
    def constant_orientation(self) -> bool:
        return self.phi_amp == 0.0 or self.phi_rate == 0.0

    def pack(self) -> np.ndarray:
        return np.array([*self.center, self.radius, self.rate, self.phi0, self.phi_amp,
                         self.phi_rate], dtype=float)

    def at(self, t: float) -> PoseRef:
        return PoseRef(reference_kernel(self.pack(), float(t)))

    def table(self, times) -> np.ndarray:
        """Reference poses (len(times), 3) at many times."""
        t = np.asarray(times, dtype=float)
        return np.column_stack([self.center[0] + self.radius * np.cos(self.rate * t),
                                self.center[1] + self.radius * np.sin(self.rate * t),
                                self.phi0 + self.phi_amp * np.sin(self.phi_rate * t)])


def circle_reference(t: float, r1: float = 1.0, center=(5.0, 5.0), rate: float = 0.5) -> PoseRef:
    return ReferenceSpec.circle(r1, center, rate).at(t)


def sinusoidal_orientation_reference(t: float, r2: float, r3: float) -> np.ndarray:
    """phi_d = r2 sin(r3 t) and its derivatives through order 4 (radians)."""
    return ReferenceSpec(phi_amp=r2, phi_rate=r3).at(t).derivs[2].copy()


# ---------------------------------------------------------------------------
# gains


@dataclass(frozen=True)
class GainSet:
    """Per-channel error gains (k0, k1, k2, k3) on (e, e', e'', e''')."""

    k: np.ndarray = field(default_factory=lambda: design_gains([-3.0] * 4).k)

    def __post_init__(self):
        k = np.array(self.k, dtype=float)
        if k.shape == (4,):
            k = np.tile(k, (3, 1))
        if k.shape != (3, 4):
            raise ValueError("gains must be (4,) or (3, 4)")
        for row in k:
            roots = np.roots(np.concatenate([[1.0], row[::-1]]))
            if np.any(roots.real >= 0):
                raise ValueError("gains do not give a Hurwitz characteristic polynomial")
        k.flags.writeable = False
        object.__setattr__(self, "k", k)


def design_gains(poles) -> GainSet:
    """Expand prod (s - p_i) into gains; one pole set for all channels or one per channel."""
    poles = np.asarray(poles, dtype=complex)
    sets = poles.reshape(1, 4) if poles.shape == (4,) else poles
    if sets.shape != (3, 4) and sets.shape != (1, 4):
        raise ValueError("need 4 poles, or 3 x 4 poles")
    rows = []
    for p in sets:
        if np.any(p.real >= 0):
            raise ValueError("poles must have strictly negative real part")
        if not np.allclose(np.sort_complex(p), np.sort_complex(p.conj())):
            raise ValueError("complex poles must come in conjugate pairs")
        c = np.real(np.poly(p))  # [1, k3, k2, k1, k0]
        rows.append(c[1:][::-1])
    k = np.array(rows)
    return GainSet(np.tile(k, (3, 1)) if k.shape[0] == 1 else k)


# ---------------------------------------------------------------------------
# analysis entry points


def _ext_array(ext) -> np.ndarray:
    return ext.to_array() if isinstance(ext, ExtendedState) else np.asarray(ext, dtype=float)


def output_derivatives(params: VehicleParams, ext) -> np.ndarray:
    """(3, 4) array: y, y', y'', y''' for the channels x, y, phi."""
    _require_controllable(params)
    Y, _, _ = extended_terms(params.pack(), params.kind_code()[1], _ext_array(ext))
    return Y


def extended_decoupling(params: VehicleParams, ext) -> tuple[np.ndarray, np.ndarray]:
    """(A, b) with y^(4) = b + A (v1, v2, u_Nd)."""
    _require_controllable(params)
    _, A, b = extended_terms(params.pack(), params.kind_code()[1], _ext_array(ext))
    return A, b


def output_fourth_derivative(params: VehicleParams, ext, w) -> np.ndarray:
    """y^(4) for explicit extended inputs (independent of ``A`` and ``b``)."""
    _require_controllable(params)
    qc, _ = ext_taylor(params.pack(), params.kind_code()[1], _ext_array(ext),
                       np.asarray(w, dtype=float))
    return 24.0 * qc[:3, 4]


def singularity_margin(params: VehicleParams, ext, thrust_scale: float | None = None) -> float:
    """min(|z12| / thrust_scale, distance of phi to the nearest odd multiple of pi/2)."""
    x = _ext_array(ext)
    scale = params.hover_thrust if thrust_scale is None else float(thrust_scale)
    return float(min(abs(x[11]) / scale, orientation_margin(x[2])))


class NewtonError(RuntimeError):
    """Output pinning failed; carries the final residual."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(f"output pinning did not converge: residual {residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


def consistent_extended_state(params: VehicleParams, ref: PoseRef, eta1: float | None = None,
                              eta2: float | None = None, tol: float = 1e-12,
                              max_iter: int = 50, guess=None) -> ExtendedState:
    """Extended state whose outputs and first three derivatives equal ``ref``.

    The passive joint (eta1, eta2) is free data; by default the link hangs
    vertically and counter-rotates with the platform.  The other unknowns,
    theta_2 with its rate and z11..z14, are found by damped Newton from the
    equilibrium fiber with a central-difference Jacobian of the exact output
    derivatives.
    """
    _require_controllable(params)
    R = ref.derivs
    if eta1 is None:
        eta1 = -R[2, 0] - params.theta_l[0]
    if eta2 is None:
        eta2 = -R[2, 1]
    t_hover = params.hover_thrust
    pf = params.pack()
    servo = params.kind_code()[1]

    def assemble(p):
        q = np.array([R[0, 0], R[1, 0], R[2, 0], eta1, p[0]])
        qd = np.array([R[0, 1], R[1, 1], R[2, 1], eta2, p[1]])
        return np.concatenate([q, qd, p[2:]])

    def residual(p):
        Y, _, _ = extended_terms(pf, servo, assemble(p))
        return np.concatenate([Y[:, 2] - R[:, 2], Y[:, 3] - R[:, 3]])

    if guess is None:
        p = np.array([-R[2, 0] - params.theta_l[-1], -R[2, 1], t_hover, t_hover, 0.0, 0.0])
    else:
        p = np.array(guess, dtype=float)
    r = residual(p)
    steps = np.array([1e-6, 1e-6] + [1e-6 * t_hover] * 4)
    for _ in range(max_iter):
        nr = float(np.max(np.abs(r)))
        if nr < tol:
            break
        J = np.empty((6, 6))
        for j in range(6):
            e = np.zeros(6)
            e[j] = steps[j]
            J[:, j] = (residual(p + e) - residual(p - e)) / (2 * steps[j])
        dp = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while True:
            trial = p + lam * dp
            rt = residual(trial)
            if np.max(np.abs(rt)) < nr or lam < 1e-4:
                break
            lam *= 0.5
        p, r = trial, rt
    nr = float(np.max(np.abs(r)))
    if not nr < tol:
        raise NewtonError(nr, max_iter)
    return ExtendedState.from_array(assemble(p))


@dataclass(frozen=True)
class FBLController:
    """Feedback-linearizing law built on a (possibly mismatched) model."""

    params: VehicleParams
    gains: GainSet = field(default_factory=GainSet)
    margin_min: float = 0.02

    def __post_init__(self):
        _require_controllable(self.params)
        if not self.margin_min >= 0:
            raise ValueError("margin_min must be non-negative")

    def command(self, ext, ref: PoseRef) -> tuple[np.ndarray, np.ndarray]:
        """Return (v1, v2, u_Nd) and the physical input (u1, u_Ns, u_Nd)."""
        x = _ext_array(ext)
        m = singularity_margin(self.params, x)
        if m < self.margin_min:
            raise SingularityError(m, self.margin_min)
        w, _, _, _ = fbl_kernel(self.params.pack(), self.params.kind_code()[1], self.gains.k, x,
                                ref.derivs)
        return w, np.array([x[10], x[11], w[2]])


def fbl_control(params: VehicleParams, gains: GainSet, ext, ref: PoseRef):
    return FBLController(params, gains).command(ext, ref)
