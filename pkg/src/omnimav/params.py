"""Vehicle parameters, presets and their JSON representation."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

GRAVITY = 9.81


class VehicleType(str, enum.Enum):
    TYPE1 = "type1"  # all joints passive
    TYPE2 = "type2"  # link N attached through a moment-actuated joint


class Actuation(str, enum.Enum):
    SERVO = "servo"  # option 1, m = 1
    COUPLED = "coupled-rotor"  # option 2, m = 0


class ParameterError(ValueError):
    """Raised for physically invalid or malformed vehicle parameters."""


def _as_tuple(value, n: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * n
    out = tuple(float(v) for v in value)
    if len(out) != n:
        raise ParameterError(f"{name} needs {n} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of a planar multi-link vehicle (SI units).

    Joints sit on the platform body x-axis, evenly spaced from ``+a`` (link 1)
    to ``-a`` (link N).  Link CoMs hang a distance ``d[i]`` below their joint
    at zero joint angle, and every propeller thrusts along its link's body
    y-axis through the joint.
    """

    vehicle_type: VehicleType = VehicleType.TYPE2
    actuation: Actuation = Actuation.COUPLED
    n_links: int = 2
    m_b: float = 5.0
    m_p: float = 2.0
    I_b: float = 9.5e-3
    I_p: float = 1.86e-3
    a: float = 0.5
    d: tuple[float, ...] = field(default=(0.5, 0.0))
    a11: float = 0.1
    b_f: tuple[float, ...] = field(default=(0.9, 0.0))
    theta_l: tuple[float, ...] = field(default=(0.0, 0.0))
    gravity: float = GRAVITY

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "vehicle_type", VehicleType(self.vehicle_type))
        set_(self, "actuation", Actuation(self.actuation))
        n = int(self.n_links)
        set_(self, "n_links", n)
        if n < 1:
            raise ParameterError("n_links must be >= 1")
        if self.vehicle_type is VehicleType.TYPE2 and n < 2:
            raise ParameterError("a Type 2 vehicle needs at least two links")
        for name in ("d", "b_f", "theta_l"):
            set_(self, name, _as_tuple(getattr(self, name), n, name))
        for name in ("m_b", "m_p", "I_b", "I_p", "a", "a11", "gravity"):
            set_(self, name, float(getattr(self, name)))
        values = [self.m_b, self.m_p, self.I_b, self.I_p, self.a, self.a11,
                  self.gravity, *self.d, *self.b_f, *self.theta_l]
        if not np.all(np.isfinite(values)):
            raise ParameterError("parameters must be finite")
        for name in ("m_b", "m_p", "I_b", "I_p"):
            if getattr(self, name) <= 0.0:
                raise ParameterError(f"{name} must be positive")
        if self.a < 0.0 or self.a11 < 0.0:
            raise ParameterError("a and a11 must be non-negative")
        if min(self.d) < 0.0:
            raise ParameterError("link CoM offsets d must be non-negative")
        if min(self.b_f) < 0.0:
            raise ParameterError("friction coefficients must be non-negative")
        if self.is_type2:
            if self.d[-1] != 0.0:
                raise ParameterError("Type 2 requires d[N] = 0")
            if self.b_f[-1] != 0.0:
                raise ParameterError("the moment-actuated joint is frictionless")

    @property
    def is_type2(self) -> bool:
        return self.vehicle_type is VehicleType.TYPE2

    @property
    def is_servo(self) -> bool:
        return self.is_type2 and self.actuation is Actuation.SERVO

    @property
    def n_coords(self) -> int:
        return self.n_links + 3

    @property
    def n_inputs(self) -> int:
        return self.n_links + (1 if self.is_type2 else 0)

    @property
    def m_tot(self) -> float:
        return self.m_b + self.n_links * self.m_p

    @property
    def hover_thrust(self) -> float:
        return self.gravity * self.m_tot / self.n_links

    @property
    def joint_offsets(self) -> np.ndarray:
        if self.n_links == 1:
            return np.zeros(1)
        return self.a * np.linspace(1.0, -1.0, self.n_links)

    @property
    def link_inertias(self) -> np.ndarray:
        inertia = np.full(self.n_links, self.I_p)
        if self.is_servo:
            # the servo-driven link is a kinematic joint: no rotational inertia
            inertia[-1] = 0.0
        return inertia

    # k-constants of the closed-form model, per link
    @property
    def k1(self) -> np.ndarray:
        return np.asarray(self.d) * self.m_p

    @property
    def k2(self) -> np.ndarray:
        return self.link_inertias + np.asarray(self.d) ** 2 * self.m_p

    @property
    def k4(self) -> np.ndarray:
        return self.joint_offsets * np.asarray(self.d) * self.m_p

    def kind_code(self) -> tuple[int, int]:
        """Integer flags (type2, servo) consumed by the compiled kernels."""
        return int(self.is_type2), int(self.is_servo)

    def pack(self) -> np.ndarray:
        """Flat float vector layout shared with the compiled kernels."""
        return np.array(
            [self.m_b, self.m_p, self.I_b, self.I_p, self.a, self.a11, self.gravity,
             *self.d, *self.b_f, *self.theta_l],
            dtype=np.float64,
        )

    def replace(self, **changes) -> "VehicleParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["vehicle_type"] = self.vehicle_type.value
        out["actuation"] = self.actuation.value
        for name in ("d", "b_f", "theta_l"):
            out[name] = list(out[name])
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "VehicleParams":
        data = dict(data)
        base = data.pop("preset", None)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown parameter keys: {sorted(unknown)}")
        if base is not None:
            return preset(base, **data)
        return cls(**data)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


PRESETS = {
    # reference simulation vehicle: m_tot = 10 kg, a = c = 0.5 m, a11 = 0.1 m
    "main-paper": dict(m_tot=10.0, m_p=2.0, I_b=0.0095, I_p=0.002, a=0.5, c=0.5,
                       a11=0.1, b=0.9),
    # nominal values used for the robustness study
    "report-nominal": dict(m_b=5.0, m_p=2.0, I_b=9.5e-3, I_p=1.86e-3, a=0.5, c=0.5,
                           a11=0.1, b=0.9),
}


def preset(name: str, vehicle_type: str | VehicleType = VehicleType.TYPE2,
           n_links: int = 2, actuation: str | Actuation = Actuation.COUPLED,
           **overrides) -> VehicleParams:
    """Build a shipped parameter preset for any vehicle type and link count.

    ``main-paper`` keeps m_tot = 10 kg by adjusting the platform mass;
    ``report-nominal`` keeps m_b = 5 kg.
    """
    try:
        spec = dict(PRESETS[name])
    except KeyError:
        raise ParameterError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    vehicle_type = VehicleType(vehicle_type)
    n = int(n_links)
    m_p = spec["m_p"]
    m_b = spec["m_tot"] - n * m_p if "m_tot" in spec else spec["m_b"]
    d = [spec["c"]] * n
    b_f = [spec["b"]] * n
    if vehicle_type is VehicleType.TYPE2:
        d[-1] = 0.0
        b_f[-1] = 0.0
    fields = dict(vehicle_type=vehicle_type, actuation=actuation, n_links=n, m_b=m_b,
                  m_p=m_p, I_b=spec["I_b"], I_p=spec["I_p"], a=spec["a"], d=tuple(d),
                  a11=spec["a11"], b_f=tuple(b_f), theta_l=(0.0,) * n)
    fields.update(overrides)
    return VehicleParams(**fields)


def load_params(path: str | Path) -> VehicleParams:
    """Load parameters from a JSON file (keys mirror ``VehicleParams`` fields)."""
    with open(path) as fh:
        return VehicleParams.from_dict(json.load(fh))
