"""Parametric-uncertainty and disturbance-tolerance studies.

Perturbed parameters enter the plant only; the controller keeps the nominal
model.  Searches work on integer grids (delta = k * resolution) so that the
returned value and its neighbour one resolution step further are exactly the
success/failure pair the bisection saw.
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .control import FBLController, GainSet, ReferenceSpec, consistent_extended_state, \
    hover_extended_state
from .dynamics import EquilibriumPose
from .params import ParameterError, VehicleParams
from .simulate import DisturbanceSpec, Metrics, SimLog, metrics, run

PARAM_IDS = ("a", "c", "m_p", "m_b", "b2", "I_p", "I_b")
INERTIAS = ("I_p", "I_b")
INERTIA_FLOOR = 0.1  # -900 % maps to a tenfold reduction, mirroring +900 %
MAX_UP = 9.0  # +900 %
MAX_DOWN = {"I_p": -9.0, "I_b": -9.0}  # clamped, see apply_perturbation
MAX_DOWN_DEFAULT = -0.99


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationBox:
    """Relative ranges [lo, hi] per parameter id; lo <= 0 <= hi."""

    lo: dict
    hi: dict

    def __post_init__(self):
        for k in PARAM_IDS:
            lo, hi = float(self.lo.get(k, 0.0)), float(self.hi.get(k, 0.0))
            if not (lo <= 0.0 <= hi):
                raise ValueError(f"box for {k} must satisfy lo <= 0 <= hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", {k: float(self.lo.get(k, 0.0)) for k in PARAM_IDS})
        object.__setattr__(self, "hi", {k: float(self.hi.get(k, 0.0)) for k in PARAM_IDS})

    @property
    def lo_vec(self) -> np.ndarray:
        return np.array([self.lo[k] for k in PARAM_IDS])

    @property
    def hi_vec(self) -> np.ndarray:
        return np.array([self.hi[k] for k in PARAM_IDS])

    @classmethod
    def point(cls, delta) -> "PerturbationBox":
        """Degenerate box at ``delta`` (still has to contain zero per axis)."""
        d = _as_delta(delta)
        return cls({k: min(v, 0.0) for k, v in zip(PARAM_IDS, d)},
                   {k: max(v, 0.0) for k, v in zip(PARAM_IDS, d)})

    def to_dict(self) -> dict:
        return {k: [self.lo[k], self.hi[k]] for k in PARAM_IDS}


def default_box() -> PerturbationBox:
    """Admissible ranges found for the nominal vehicle with its original gains."""
    ranges = {"a": (-0.208, 0.211), "c": (-0.1028, 1.41), "m_p": (-0.00149, 0.0274),
              "m_b": (-0.0315, 0.00149), "b2": (-0.35, 0.0715),
              "I_p": (-9.0, 9.0), "I_b": (-9.0, 9.0)}
    return PerturbationBox({k: v[0] for k, v in ranges.items()},
                           {k: v[1] for k, v in ranges.items()})


def _as_delta(delta) -> np.ndarray:
    if isinstance(delta, dict):
        unknown = set(delta) - set(PARAM_IDS)
        if unknown:
            raise ValueError(f"unknown perturbation ids {sorted(unknown)}")
        return np.array([float(delta.get(k, 0.0)) for k in PARAM_IDS])
    d = np.asarray(delta, dtype=float)
    if d.shape != (len(PARAM_IDS),):
        raise ValueError(f"perturbation needs {len(PARAM_IDS)} entries")
    return d


def perturbation_clamps(nominal: VehicleParams, delta) -> list[str]:
    """Ids of inertias whose (1 + delta) scaling would fall under the floor."""
    d = dict(zip(PARAM_IDS, _as_delta(delta)))
    return [k for k in INERTIAS if 1.0 + d[k] < INERTIA_FLOOR]


def apply_perturbation(nominal: VehicleParams, delta) -> VehicleParams:
    """Scale each parameter p to (1 + delta_p) p.

    ``c`` scales the CoM offsets of the passive links, ``b2`` their friction.
    Inertias are clamped to ``INERTIA_FLOOR`` times nominal (see
    :func:`perturbation_clamps`); any other non-physical result raises
    :class:`ParameterError`.
    """
    d = dict(zip(PARAM_IDS, _as_delta(delta)))
    f = {k: 1.0 + v for k, v in d.items()}
    for k in INERTIAS:
        f[k] = max(f[k], INERTIA_FLOOR)
    n_passive = nominal.n_links - 1 if nominal.is_type2 else nominal.n_links
    dd = list(nominal.d)
    bf = list(nominal.b_f)
    for i in range(n_passive):
        dd[i] *= f["c"]
        bf[i] *= f["b2"]
    for k in ("a", "c", "m_p", "m_b", "b2"):
        if f[k] < 0:
            raise ParameterError(f"perturbation of {k} makes it negative")
    return nominal.replace(a=nominal.a * f["a"], d=tuple(dd), m_p=nominal.m_p * f["m_p"],
                           m_b=nominal.m_b * f["m_b"], b_f=tuple(bf),
                           I_p=nominal.I_p * f["I_p"], I_b=nominal.I_b * f["I_b"])


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class Scenario:
    """Closed-loop experiment run for each perturbed plant.

    ``start="consistent"`` begins exactly on the reference (zero nominal
    error); ``start="hover"`` begins at rest on the reference pose.
    """

    ref: ReferenceSpec = field(default_factory=ReferenceSpec.circle)
    t_final: float = 20.0
    dt: float = 2e-3
    dist: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    gains: GainSet = field(default_factory=GainSet)
    start: str = "consistent"
    margin_min: float = 0.02

    def __post_init__(self):
        if self.start not in ("consistent", "hover"):
            raise ValueError("start must be 'consistent' or 'hover'")

    def initial_state(self, nominal: VehicleParams) -> np.ndarray:
        if self.start == "hover":
            return hover_extended_state(nominal, EquilibriumPose(*self.ref.at(0.0).pose)).to_array()
        return consistent_extended_state(nominal, self.ref.at(0.0)).to_array()

    def simulate(self, plant: VehicleParams, nominal: VehicleParams, x0=None,
                 dist: DisturbanceSpec | None = None) -> SimLog:
        ctrl = FBLController(nominal, self.gains, self.margin_min)
        x0 = self.initial_state(nominal) if x0 is None else x0
        return run(plant, ctrl, self.ref, self.dist if dist is None else dist,
                   self.t_final, self.dt, x0=x0)

    def with_(self, **changes) -> "Scenario":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return dict(ref=dict(center=list(self.ref.center), radius=self.ref.radius,
                             rate=self.ref.rate, phi0=self.ref.phi0, phi_amp=self.ref.phi_amp,
                             phi_rate=self.ref.phi_rate),
                    t_final=self.t_final, dt=self.dt,
                    dist=dict(A=self.dist.A, omega=self.dist.omega, psi=self.dist.psi),
                    gains=self.gains.k.tolist(), start=self.start, margin_min=self.margin_min)


def scenario_succeeds(nominal: VehicleParams, scenario: Scenario, delta) -> bool:
    try:
        plant = apply_perturbation(nominal, delta)
    except ParameterError:
        return False
    return scenario.simulate(plant, nominal).completed


# ---------------------------------------------------------------------------
# grid bisection


@dataclass(frozen=True)
class SearchResult:
    value: float  # largest surviving value on the grid
    resolution: float
    saturated: bool  # no failure found up to the cap
    evaluations: int
    direction: int = 1

    @property
    def first_failure(self) -> float | None:
        """Smallest failing grid value, or None when the cap was reached."""
        return None if self.saturated else self.value + self.direction * self.resolution


def grid_bisect(ok: Callable[[int], bool], k_cap: int) -> tuple[int, bool, int]:
    """Largest k in [0, k_cap] with ok(k) on a success-then-failure boundary.

    Assumes ok(0).  A doubling search brackets the first failure, then
    bisection keeps ok(lo) and not ok(hi) until hi = lo + 1.
    Returns (lo, saturated, evaluations).
    """
    evals = 0
    lo, step = 0, 1
    hi = None
    while True:
        k = min(lo + step, k_cap)
        evals += 1
        if ok(k):
            lo = k
            if k == k_cap:
                return lo, True, evals
            step *= 2
        else:
            hi = k
            break
    while hi - lo > 1:
        mid = (lo + hi) // 2
        evals += 1
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo, False, evals


def param_range_search(nominal: VehicleParams, param_id: str, direction: int,
                       scenario: Scenario | None = None, resolution: float = 1e-3,
                       predicate: Callable[[float], bool] | None = None,
                       cap: float | None = None) -> SearchResult:
    """Largest |delta| along one parameter (sign ``direction``) keeping the run successful.

    ``predicate(delta) -> bool`` overrides the simulation-based success test.
    """
    if param_id not in PARAM_IDS:
        raise ValueError(f"unknown parameter id {param_id!r}")
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if predicate is None:
        sc = scenario or Scenario()
        idx = PARAM_IDS.index(param_id)

        def predicate(dv):
            delta = np.zeros(len(PARAM_IDS))
            delta[idx] = dv
            return scenario_succeeds(nominal, sc, delta)

    if cap is None:
        cap = MAX_UP if direction > 0 else -MAX_DOWN.get(param_id, MAX_DOWN_DEFAULT)
    k_cap = int(np.floor(abs(cap) / resolution + 1e-9))
    if not predicate(0.0):
        raise RuntimeError("the nominal scenario does not complete")
    lo, sat, evals = grid_bisect(lambda k: bool(predicate(direction * k * resolution)), k_cap)
    return SearchResult(direction * lo * resolution, resolution, sat, evals + 1, direction)


# ---------------------------------------------------------------------------
# worst-case search


def _uniform_sample(box: PerturbationBox, seed: int, i: int) -> np.ndarray:
    rng = np.random.default_rng([seed, i])
    return box.lo_vec + (box.hi_vec - box.lo_vec) * rng.random(len(PARAM_IDS))


def extreme_samples(box: PerturbationBox) -> list[np.ndarray]:
    """Single-parameter extremes: (lo, hi) for each id in order; 14 vectors."""
    out = []
    for j in range(len(PARAM_IDS)):
        for v in (box.lo_vec[j], box.hi_vec[j]):
            d = np.zeros(len(PARAM_IDS))
            d[j] = v
            out.append(d)
    return out


@dataclass(frozen=True)
class LatticeSampler:
    """Enumerates a ``levels``-point grid per listed parameter, other ids at zero."""

    params: tuple = ("a", "c", "m_b")
    levels: int = 3

    def cells(self, box: PerturbationBox) -> list[np.ndarray]:
        axes = []
        for k in self.params:
            axes.append(np.linspace(box.lo[k], box.hi[k], self.levels))
        out = []
        for combo in itertools.product(*axes):
            d = np.zeros(len(PARAM_IDS))
            for k, v in zip(self.params, combo):
                d[PARAM_IDS.index(k)] = v
            out.append(d)
        return out


def draw_samples(box: PerturbationBox, n: int, seed: int, include_extremes: bool = True,
                 sampler: LatticeSampler | None = None) -> np.ndarray:
    """Sample i depends only on (seed, i): streams are counter-derived."""
    if n < 1:
        raise ValueError("need at least one sample")
    if sampler is not None:
        cells = sampler.cells(box)
        return np.array([cells[i % len(cells)] for i in range(n)])
    rows = []
    extremes = extreme_samples(box) if include_extremes else []
    for i in range(n):
        rows.append(extremes[i] if i < len(extremes) else _uniform_sample(box, seed, i))
    return np.array(rows)


def _evaluate(args):
    nominal_dict, scenario, delta = args
    nominal = VehicleParams.from_dict(nominal_dict)
    clamps = perturbation_clamps(nominal, delta)
    try:
        plant = apply_perturbation(nominal, delta)
    except ParameterError:
        return "invalid", None, clamps
    log = scenario.simulate(plant, nominal)
    m = metrics(log)
    return log.termination.value, (m.E_pos, m.E_phi, m.ss_pos, m.ss_phi), clamps


def evaluate_samples(nominal: VehicleParams, scenario: Scenario, deltas: np.ndarray,
                     workers: int = 1) -> list:
    jobs = [(nominal.to_dict(), scenario, d) for d in deltas]
    if workers <= 1 or len(jobs) <= 1:
        return [_evaluate(j) for j in jobs]
    ctx = mp.get_context("spawn")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


@dataclass
class RobustnessReport:
    seed: int
    n_samples: int
    box: dict
    scenario: dict
    nominal_hash: str
    deltas: np.ndarray
    status: list
    values: np.ndarray  # (n, 4): E_pos, E_phi, ss_pos, ss_phi (NaN if failed)
    clamps: list
    ranges: dict = field(default_factory=dict)
    tolerance: dict = field(default_factory=dict)

    @property
    def ok(self) -> np.ndarray:
        return np.array([s == "completed" for s in self.status])

    def _argmax(self, col: int) -> int:
        v = np.where(self.ok, self.values[:, col], -np.inf)
        return int(np.argmax(v))  # first index on ties

    @property
    def worst_pos(self) -> int:
        return self._argmax(0)

    @property
    def worst_phi(self) -> int:
        return self._argmax(1)

    @property
    def E_pos_bar(self) -> float:
        return float(self.values[self.worst_pos, 0])

    @property
    def E_phi_bar(self) -> float:
        return float(self.values[self.worst_phi, 1])

    def summary(self) -> dict:
        def delta_dict(i):
            return {k: float(v) for k, v in zip(PARAM_IDS, self.deltas[i])}

        return dict(
            seed=int(self.seed), n_samples=int(self.n_samples), nominal_hash=self.nominal_hash,
            box=self.box, scenario=self.scenario,
            n_failed=int(np.sum(~self.ok)),
            worst_pos=dict(index=self.worst_pos, delta=delta_dict(self.worst_pos),
                           E_pos_bar=self.E_pos_bar),
            worst_phi=dict(index=self.worst_phi, delta=delta_dict(self.worst_phi),
                           E_phi_bar=self.E_phi_bar),
            n_clamped=int(sum(1 for c in self.clamps if c)),
            ranges=self.ranges, tolerance=self.tolerance)

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", *PARAM_IDS, "status", "E_pos", "E_phi", "ss_pos", "ss_phi", "clamped"])
        for i in range(self.n_samples):
            w.writerow([i, *[repr(float(v)) for v in self.deltas[i]], self.status[i],
                        *[repr(float(v)) for v in self.values[i]], ";".join(self.clamps[i])])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256((self.to_json() + self.to_csv()).encode()).hexdigest()


def worst_case_search(nominal: VehicleParams, box: PerturbationBox | None = None,
                      n_samples: int = 1000, seed: int = 0, scenario: Scenario | None = None,
                      workers: int = 1, include_extremes: bool = True,
                      sampler: LatticeSampler | None = None) -> RobustnessReport:
    """Monte-Carlo search for the combined perturbation maximizing each error norm.

    Failed runs are recorded but excluded from the argmax; ties go to the
    lowest sample index.
    """
    box = box or default_box()
    scenario = scenario or Scenario()
    deltas = draw_samples(box, n_samples, seed, include_extremes, sampler)
    results = evaluate_samples(nominal, scenario, deltas, workers)
    status = [r[0] for r in results]
    values = np.array([r[1] if r[1] is not None else (np.nan,) * 4 for r in results], dtype=float)
    report = RobustnessReport(seed=int(seed), n_samples=int(n_samples), box=box.to_dict(),
                              scenario=scenario.to_dict(), nominal_hash=nominal.digest(),
                              deltas=deltas, status=status, values=values,
                              clamps=[r[2] for r in results])
    if not np.any(report.ok):
        raise RuntimeError("every sample failed; no worst case is defined")
    return report


# ---------------------------------------------------------------------------
# disturbance tolerance


@dataclass
class ToleranceResult:
    omega: float
    A_max: float
    resolution: float
    saturated: bool
    log: SimLog
    evaluations: int


def disturbance_tolerance(nominal: VehicleParams, omegas: Sequence[float], psi: float = np.pi / 2,
                          scenario: Scenario | None = None, A_resolution: float = 0.01,
                          A_cap: float = 1e4, plant: VehicleParams | None = None
                          ) -> dict[float, ToleranceResult]:
    """Largest amplitude A (on the grid k * A_resolution) the loop survives, per omega."""
    scenario = scenario or Scenario(ref=ReferenceSpec.circle(), t_final=320.0, dt=5e-3)
    plant = plant or nominal
    x0 = scenario.initial_state(nominal)

    def sim(A, om):
        return scenario.simulate(plant, nominal, x0=x0, dist=DisturbanceSpec(A, om, psi))

    if not sim(0.0, 0.0).completed:
        raise RuntimeError("the undisturbed scenario does not complete")
    out = {}
    k_cap = int(np.floor(A_cap / A_resolution + 1e-9))
    for om in omegas:
        om = float(om)
        lo, sat, evals = grid_bisect(lambda k: sim(k * A_resolution, om).completed, k_cap)
        out[om] = ToleranceResult(om, lo * A_resolution, A_resolution, sat,
                                  sim(lo * A_resolution, om), evals + 1)
    return out


def steady_state_errors(nominal: VehicleParams, omegas: Sequence[float], A: float,
                        psi: float = np.pi / 2, scenario: Scenario | None = None
                        ) -> dict[float, Metrics]:
    """Metrics of fixed-amplitude runs, one per frequency."""
    scenario = scenario or Scenario(ref=ReferenceSpec.circle(), t_final=320.0, dt=5e-3)
    x0 = scenario.initial_state(nominal)
    out = {}
    for om in omegas:
        log = scenario.simulate(nominal, nominal, x0=x0, dist=DisturbanceSpec(A, float(om), psi))
        if not log.completed:
            raise RuntimeError(f"run at omega={om} terminated: {log.termination.value}")
        out[float(om)] = metrics(log)
    return out
