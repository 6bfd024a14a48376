"""Command-line front end.

Every command reads an optional JSON scenario file (``--config``), applies
command-line overrides, and writes its outputs plus ``manifest.json`` to
``--out``.  All outputs embed the resolved-config hash and the seed, and
contain no timestamps, so re-running a command reproduces them byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import oracle as orc
from .control import (GainSet, ReferenceSpec, design_gains, extended_decoupling,
                      hover_extended_state)
from .dynamics import (EquilibriumPose, GenState, bias_forces, equilibrium_input,
                       equilibrium_state, generalized_forces, mass_matrix,
                       static_balance_residual)
from .params import ParameterError, VehicleParams
from .robustness import (PARAM_IDS, PerturbationBox, Scenario, apply_perturbation, default_box,
                         disturbance_tolerance, param_range_search, worst_case_search)
from .simulate import DisturbanceSpec, SimLog, metrics
from .svg import timeseries_svg


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration

COMMAND_DEFAULTS = {
    "regulate": dict(params={"preset": "main-paper"},
                     reference={"kind": "regulate", "x": 10.0, "y": 8.0, "phi_deg": 60.0},
                     start={"kind": "hover", "x": 0.0, "y": 0.0, "phi_deg": 0.0},
                     t_final=10.0, dt=1e-3),
    "track": dict(params={"preset": "main-paper"},
                  reference={"kind": "circle", "radius": 1.0, "center": [5.0, 5.0], "rate": 0.5},
                  start={"kind": "hover"}, t_final=20.0, dt=1e-3),
    "analyze": dict(params={"preset": "report-nominal"},
                    reference={"kind": "regulate", "x": 0.0, "y": 0.0, "phi_deg": 60.0},
                    t_final=10.0, dt=1e-3),
    "validate": dict(params={"preset": "report-nominal"}),
    "param-range": dict(params={"preset": "report-nominal"},
                        reference={"kind": "circle", "radius": 1.0, "center": [5.0, 5.0],
                                   "rate": 0.5},
                        start={"kind": "consistent"}, t_final=20.0, dt=2e-3),
    "worst-case": dict(params={"preset": "report-nominal"},
                       reference={"kind": "circle", "radius": 1.0, "center": [5.0, 5.0],
                                  "rate": 0.5},
                       start={"kind": "consistent"}, t_final=20.0, dt=2e-3),
    "disturbance-sweep": dict(params={"preset": "report-nominal"},
                              reference={"kind": "circle", "radius": 1.0, "center": [5.0, 5.0],
                                         "rate": 0.5},
                              start={"kind": "consistent"}, t_final=320.0, dt=5e-3),
}

TOP_KEYS = {"params", "reference", "start", "poles", "disturbance", "t_final", "dt", "seed",
            "samples", "robustness", "validate"}
REF_KEYS = {"kind", "x", "y", "phi_deg", "phi_rad", "radius", "center", "rate", "phi_amp_deg",
            "phi_amp_rad", "phi_rate_deg_s", "phi_rate_rad_s"}
START_KEYS = {"kind", "x", "y", "phi_deg", "phi_rad"}
DIST_KEYS = {"A", "omega", "psi"}
ROB_KEYS = {"params", "directions", "resolution", "box", "workers", "omegas", "psi",
            "A_resolution", "A_cap", "include_extremes"}
VAL_KEYS = {"n_states"}


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _angle(d: dict, stem: str, default: float = 0.0, rate: bool = False) -> float:
    deg, rad = (f"{stem}_deg_s", f"{stem}_rad_s") if rate else (f"{stem}_deg", f"{stem}_rad")
    if deg in d and rad in d:
        raise ConfigError(f"give either {deg} or {rad}, not both")
    if deg in d:
        return float(np.deg2rad(d[deg]))
    return float(d.get(rad, default))


def resolve_config(command: str, path: str | None, args) -> dict:
    cfg = copy.deepcopy(COMMAND_DEFAULTS[command])
    cfg.setdefault("seed", 0)
    if path:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        _check_keys(user, TOP_KEYS, "config")
        cfg.update(user)
    for key, attr in (("seed", "seed"), ("samples", "samples"), ("dt", "dt"),
                      ("t_final", "t_final")):
        v = getattr(args, attr, None)
        if v is not None:
            cfg[key] = v
    _check_keys(cfg, TOP_KEYS, "config")
    for key in ("reference", "start", "disturbance", "robustness", "validate"):
        allowed = dict(reference=REF_KEYS, start=START_KEYS, disturbance=DIST_KEYS,
                       robustness=ROB_KEYS, validate=VAL_KEYS)[key]
        if key in cfg:
            _check_keys(cfg[key], allowed, key)
    if getattr(args, "sinusoid", False):
        cfg["reference"] = dict(cfg["reference"], phi_amp_deg=80.0, phi_rate_deg_s=30.0)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def build_params(cfg: dict) -> VehicleParams:
    try:
        return VehicleParams.from_dict(cfg.get("params", {"preset": "report-nominal"}))
    except (ParameterError, TypeError) as exc:
        raise ConfigError(f"invalid params: {exc}") from exc


def build_reference(cfg: dict) -> ReferenceSpec:
    r = cfg.get("reference", {"kind": "regulate"})
    kind = r.get("kind", "regulate")
    amp = _angle(r, "phi_amp")
    rate = _angle(r, "phi_rate", rate=True)
    if kind == "regulate":
        return ReferenceSpec(center=(float(r.get("x", 0.0)), float(r.get("y", 0.0))),
                             phi0=_angle(r, "phi"), phi_amp=amp, phi_rate=rate)
    if kind == "circle":
        return ReferenceSpec(center=tuple(r.get("center", (5.0, 5.0))),
                             radius=float(r.get("radius", 1.0)), rate=float(r.get("rate", 0.5)),
                             phi0=_angle(r, "phi"), phi_amp=amp, phi_rate=rate)
    raise ConfigError(f"unknown reference kind {kind!r}")


def build_gains(cfg: dict) -> GainSet:
    try:
        return design_gains(cfg["poles"]) if "poles" in cfg else GainSet()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_dist(cfg: dict) -> DisturbanceSpec:
    d = cfg.get("disturbance", {})
    try:
        return DisturbanceSpec(float(d.get("A", 0.0)), float(d.get("omega", 0.0)),
                               float(d.get("psi", np.pi / 2)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_scenario(cfg: dict) -> tuple[Scenario, np.ndarray | None, VehicleParams]:
    params = build_params(cfg)
    ref = build_reference(cfg)
    start = cfg.get("start", {"kind": "consistent"})
    kind = start.get("kind", "consistent")
    dt, t_final = float(cfg.get("dt", 1e-3)), float(cfg.get("t_final", 10.0))
    if not (dt > 0 and t_final > 0):
        raise ConfigError("dt and t_final must be positive")
    sc = Scenario(ref=ref, t_final=t_final, dt=dt, dist=build_dist(cfg), gains=build_gains(cfg),
                  start="consistent" if kind == "consistent" else "hover")
    x0 = None
    if kind == "hover" and any(k in start for k in ("x", "y", "phi_deg", "phi_rad")):
        pose = EquilibriumPose(float(start.get("x", 0.0)), float(start.get("y", 0.0)),
                               _angle(start, "phi"))
        x0 = hover_extended_state(params, pose).to_array()
    elif kind not in ("hover", "consistent"):
        raise ConfigError(f"unknown start kind {kind!r}")
    return sc, x0, params


# ---------------------------------------------------------------------------
# output helpers


class Output:
    def __init__(self, directory: str, command: str, cfg: dict):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.meta = dict(command=command, config_hash=config_hash(cfg), seed=int(cfg["seed"]))
        self.cfg = cfg
        self.files: list[str] = []

    def _register(self, name: str):
        if name not in self.files:
            self.files.append(name)

    def json(self, name: str, payload: dict):
        body = dict(payload, meta=self.meta)
        (self.dir / name).write_text(json.dumps(_plain(body), indent=2, sort_keys=True) + "\n")
        self._register(name)

    def text(self, name: str, body: str, header: bool = True):
        if header:
            body = "".join(f"# {k}={self.meta[k]}\n" for k in sorted(self.meta)) + body
        (self.dir / name).write_text(body)
        self._register(name)

    def log(self, stem: str, log: SimLog, title: str):
        log.meta.update(self.meta)
        log.to_csv(self.dir / f"{stem}.csv")
        self._register(f"{stem}.csv")
        self.text(f"{stem}.svg", log_svg(log, title, self.meta), header=False)

    def manifest(self):
        entries = {}
        for name in sorted(self.files):
            entries[name] = hashlib.sha256((self.dir / name).read_bytes()).hexdigest()
        body = dict(self.meta, config=self.cfg, files=entries)
        (self.dir / "manifest.json").write_text(json.dumps(_plain(body), indent=2,
                                                           sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def log_svg(log: SimLog, title: str, meta: dict) -> str:
    x = log.x
    panels = [
        ("position (m)", [("x", x[:, 0]), ("y", x[:, 1]), ("x_ref", log.ref[:, 0]),
                          ("y_ref", log.ref[:, 1])]),
        ("angles (rad)", [("phi", x[:, 2]), ("theta1", x[:, 3]), ("theta2", x[:, 4]),
                          ("phi_ref", log.ref[:, 2])]),
        ("velocities", [("dx", x[:, 5]), ("dy", x[:, 6]), ("dphi", x[:, 7])]),
        ("inputs (N)", [("u1", log.u[:, 0]), ("u_Ns", log.u[:, 1]), ("u_Nd", log.u[:, 2])]),
        ("errors", [("e_pos (m)", log.e_pos), ("e_phi (rad)", log.e_phi)]),
    ]
    return timeseries_svg(log.t, panels, title, meta)


# ---------------------------------------------------------------------------
# commands


def _run_log(cfg) -> tuple[SimLog, VehicleParams, Scenario]:
    sc, x0, params = build_scenario(cfg)
    log = sc.simulate(params, params, x0=x0)
    return log, params, sc


def _thrust_report(log: SimLog) -> dict:
    u = log.u[np.all(np.isfinite(log.u), axis=1)]
    return dict(min_u1=float(u[:, 0].min()), min_u_Ns=float(u[:, 1].min()),
                max_abs_u_Nd_minus_u_Ns=float(np.max(np.abs(u[:, 2]) - u[:, 1])),
                unidirectional=bool(np.all(u[:, 0] >= 0) and np.all(u[:, 1] > 0)
                                    and np.all(np.abs(u[:, 2]) <= u[:, 1])))


def cmd_regulate(cfg, out: Output) -> int:
    log, _, _ = _run_log(cfg)
    m = metrics(log)
    final = dict(e_pos=float(log.e_pos[-1]), e_phi=float(log.e_phi[-1]))
    out.log("regulate", log, "pose regulation")
    out.json("regulate.json", dict(termination=log.termination.value, metrics=m.as_dict(),
                                   final_error=final, thrusts=_thrust_report(log)))
    print(f"regulate: {log.termination.value}, final e_pos={final['e_pos']:.3e} m, "
          f"e_phi={final['e_phi']:.3e} rad")
    return 0 if log.completed else 1


def cmd_track(cfg, out: Output) -> int:
    log, _, sc = _run_log(cfg)
    t_end = sc.t_final
    m = metrics(log)
    late = metrics(log, t_range=(t_end / 2, t_end)) if log.completed else None
    out.log("track", log, "trajectory tracking")
    out.json("track.json", dict(termination=log.termination.value, metrics=m.as_dict(),
                                second_half=late.as_dict() if late else None,
                                thrusts=_thrust_report(log)))
    if late:
        print(f"track: {log.termination.value}, E_pos over [{t_end / 2:g}, {t_end:g}] s = "
              f"{late.E_pos:.3e} m")
    else:
        print(f"track: {log.termination.value}")
    return 0 if log.completed else 1


def cmd_analyze(cfg, out: Output) -> int:
    params = build_params(cfg)
    ref = build_reference(cfg)
    pose = EquilibriumPose(*ref.at(0.0).pose)
    st = equilibrium_state(params, pose)
    u = equilibrium_input(params)
    report = dict(params=params.to_dict(), pose=[pose.x, pose.y, pose.phi])
    report["wrench_jacobian_rank"] = an.numerical_rank(an.wrench_jacobian(params, st.q))
    report["decoupling_rank"] = an.numerical_rank(an.decoupling_matrix(params, st))
    report["omni"] = an.omni_classify(params, st.q).as_dict()
    if params.is_type2 and params.n_links == 2:
        ext = hover_extended_state(params, pose)
        A, b = extended_decoupling(params, ext)
        report["extended_decoupling"] = dict(det=float(np.linalg.det(A)),
                                             cond=float(np.linalg.cond(A)), A=A, b=b)
        starts = an.perturbed_starts(pose.phi)
        dt, t_final = float(cfg.get("dt", 1e-3)) * 10, float(cfg.get("t_final", 10.0))
        trajs = [an.integrate_zero_dynamics(
            lambda z: an.pendulum_zero_dynamics_rhs(params, pose.phi, z), z0, t_final, dt)
            for z0 in starts]
        t = np.arange(trajs[0].shape[0]) * dt
        final = [np.abs(tr[-1] - [-pose.phi, 0.0]).max() for tr in trajs]
        report["zero_dynamics"] = dict(equilibrium=[-pose.phi, 0.0],
                                       max_final_deviation=float(max(final)),
                                       starts=[[z.eta1, z.eta2] for z in starts])
        rows = ["t," + ",".join(f"eta1_{k},eta2_{k}" for k in range(len(trajs)))]
        for i in range(len(t)):
            rows.append(repr(float(t[i])) + "," + ",".join(
                f"{tr[i, 0]!r},{tr[i, 1]!r}" for tr in trajs))
        out.text("zero_dynamics.csv", "\n".join(rows) + "\n")
        out.text("zero_dynamics.svg", timeseries_svg(
            t, [("eta1 (rad)", [(f"#{k}", tr[:, 0]) for k, tr in enumerate(trajs)]),
                ("eta2 (rad/s)", [(f"#{k}", tr[:, 1]) for k, tr in enumerate(trajs)])],
            "zero dynamics", out.meta), header=False)
    report["static_balance_residual"] = float(np.max(np.abs(
        static_balance_residual(params, st.q, u))))
    out.json("analysis.json", report)
    print(json.dumps(_plain({k: report[k] for k in ("wrench_jacobian_rank", "decoupling_rank",
                                                     "omni")}), sort_keys=True))
    return 0


def oracle_deviation(params: VehicleParams, n_states: int, seed: int) -> dict:
    rng = np.random.default_rng([seed, params.n_links, int(params.is_type2)])
    worst = dict(M=0.0, bias=0.0, Q=0.0)
    for _ in range(n_states):
        q = rng.uniform(-np.pi, np.pi, params.n_coords)
        qd = rng.uniform(-3, 3, params.n_coords)
        u = rng.uniform(0, 2 * params.hover_thrust, params.n_inputs)
        if params.is_type2 and not params.is_servo:
            u[-1] = rng.uniform(-1, 1) * u[-2]
        s = GenState(q, qd)
        M, Mo = mass_matrix(params, q), orc.oracle_mass_matrix(params, q)
        h, g = bias_forces(params, s)
        bo = orc.oracle_bias(params, s)
        Q, Qo = generalized_forces(params, s, u), orc.oracle_generalized_forces(params, s, u)
        for key, a, b in (("M", M, Mo), ("bias", h + g, bo), ("Q", Q, Qo)):
            dev = np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b)))
            worst[key] = max(worst[key], float(dev))
    return worst


def cmd_validate(cfg, out: Output) -> int:
    n = int(cfg.get("validate", {}).get("n_states", 100))
    base = cfg.get("params", {"preset": "report-nominal"})
    name = base.get("preset", "report-nominal") if isinstance(base, dict) else "report-nominal"
    cases = {"type1-N3": dict(preset=name, vehicle_type="type1", n_links=3),
             "type2-N2": dict(preset=name, vehicle_type="type2", n_links=2),
             "type2-N2-servo": dict(preset=name, vehicle_type="type2", n_links=2,
                                    actuation="servo")}
    results = {}
    for key, spec in cases.items():
        results[key] = oracle_deviation(VehicleParams.from_dict(spec), n, int(cfg["seed"]))
        print(f"{key}: max relative deviation M={results[key]['M']:.2e} "
              f"h+g={results[key]['bias']:.2e} Q={results[key]['Q']:.2e}")
    worst = max(max(r.values()) for r in results.values())
    out.json("validate.json", dict(n_states=n, deviations=results, max_deviation=worst,
                                   passed=worst < 1e-9))
    return 0 if worst < 1e-9 else 1


def _rob(cfg) -> dict:
    return cfg.get("robustness", {})


def cmd_param_range(cfg, out: Output) -> int:
    sc, _, params = build_scenario(cfg)
    r = _rob(cfg)
    ids = r.get("params", list(PARAM_IDS))
    dirs = r.get("directions", [-1, 1])
    res = float(r.get("resolution", 1e-3))
    ranges = {}
    for pid in ids:
        ranges[pid] = {}
        for d in dirs:
            sr = param_range_search(params, pid, int(d), sc, res)
            ranges[pid]["lower" if d < 0 else "upper"] = dict(
                delta=sr.value, saturated=sr.saturated, evaluations=sr.evaluations)
            print(f"{pid} {'-' if d < 0 else '+'}: {sr.value:+.4f}"
                  f"{' (cap reached)' if sr.saturated else ''}")
    out.json("param_range.json", dict(resolution=res, scenario=sc.to_dict(), ranges=ranges))
    return 0


def _box(r: dict) -> PerturbationBox:
    if "box" not in r:
        return default_box()
    b = r["box"]
    _check_keys(b, set(PARAM_IDS), "robustness.box")
    return PerturbationBox({k: v[0] for k, v in b.items()}, {k: v[1] for k, v in b.items()})


def cmd_worst_case(cfg, out: Output) -> int:
    sc, _, params = build_scenario(cfg)
    r = _rob(cfg)
    n = int(cfg.get("samples", 1000))
    workers = int(r.get("workers", os.cpu_count() or 1))
    rep = worst_case_search(params, _box(r), n, int(cfg["seed"]), sc, workers=workers,
                            include_extremes=bool(r.get("include_extremes", True)))
    out.json("worst_case.json", rep.summary())
    out.text("samples.csv", rep.to_csv())
    for key, idx in (("worst_pos", rep.worst_pos), ("worst_phi", rep.worst_phi)):
        log = sc.simulate(apply_perturbation(params, rep.deltas[idx]), params)
        out.log(key, log, f"worst case ({key}), sample {idx}")
    print(f"worst-case: E_pos_bar={rep.E_pos_bar:.4e} (sample {rep.worst_pos}), "
          f"E_phi_bar={rep.E_phi_bar:.4e} (sample {rep.worst_phi}), "
          f"failed={int(np.sum(~rep.ok))}/{n}")
    return 0


def cmd_disturbance_sweep(cfg, out: Output) -> int:
    sc, _, params = build_scenario(cfg)
    r = _rob(cfg)
    omegas = [float(w) for w in r.get("omegas", [0.0, 0.1, 1.0, 10.0])]
    tol = disturbance_tolerance(params, omegas, float(r.get("psi", np.pi / 2)), sc,
                                float(r.get("A_resolution", 0.01)), float(r.get("A_cap", 1e4)))
    table = {}
    for om, res in tol.items():
        m = metrics(res.log)
        table[repr(om)] = dict(A_max=res.A_max, saturated=res.saturated,
                               evaluations=res.evaluations, metrics_at_A_max=m.as_dict())
        out.log(f"dist_omega_{om:g}", res.log, f"disturbance at A_max, omega={om:g} rad/s")
        print(f"omega={om:g} rad/s: A_max={res.A_max:.4g}{' (cap)' if res.saturated else ''}")
    out.json("disturbance.json", dict(scenario=sc.to_dict(), tolerance=table))
    return 0


COMMANDS = {
    "regulate": cmd_regulate, "track": cmd_track, "analyze": cmd_analyze,
    "validate": cmd_validate, "param-range": cmd_param_range, "worst-case": cmd_worst_case,
    "disturbance-sweep": cmd_disturbance_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="omnimav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON scenario file")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("--dt", type=float)
        s.add_argument("--t-final", dest="t_final", type=float)
        if name == "track":
            s.add_argument("--circle", action="store_true", help="circle reference (default)")
            s.add_argument("--sinusoid", action="store_true",
                           help="add phi_d = 80 deg * sin(30 deg/s * t)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args.config, args)
        out = Output(args.out, args.command, cfg)
        code = COMMANDS[args.command](cfg, out)
        out.manifest()
        return code
    except (ConfigError, ParameterError, ValueError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 2
    except (RuntimeError, OSError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
