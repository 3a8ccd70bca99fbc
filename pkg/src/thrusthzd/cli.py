"""Command-line front end: ``thrusthzd <command> --config run.json --out DIR``.

Outputs are plain files (CSV for orbits, JSON for reports, JSONL for impact
records) written in a fixed order so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .control import Gains
from .errors import ConfigError, HZDError
from .gait import DesignSpec, GaitParams, design_nominal_gait, nominal_gait
from .model import ModelParams

log = logging.getLogger("thrusthzd")

EXIT_OK = 0
EXIT_DOMAIN = 2
EXIT_NUMERICAL = 3
EXIT_CONFIG = 64

SWEEP_COLUMNS = ["sweep_value", "alpha", "alpha_dot", "zeta", "sigma_N", "t", "step", "F_T"]


# -- configuration -------------------------------------------------------------

def _finite_list(values, what: str) -> list[float]:
    try:
        out = [float(v) for v in values]
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of numbers") from None
    if not all(np.isfinite(out)):
        raise ConfigError(f"{what} must be finite")
    return out


@dataclass
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    gait: GaitParams | str = "nominal"
    design: DesignSpec = field(default_factory=DesignSpec)
    gains: Gains = field(default_factory=Gains.from_epsilon)
    thrust: dict = field(default_factory=lambda: {"type": "constant", "value": 0.0})
    sweep: dict = field(default_factory=lambda: {"values": [0.0, -10.0, -20.0, -30.0, -40.0, -50.0],
                                                 "mode": "constant"})
    simulate: dict = field(default_factory=lambda: {"steps": 10, "perturbation": 0.0})
    shape: dict = field(default_factory=lambda: {"k": [0.0, 10.0, 20.0, 30.0, 40.0, 50.0]})
    forces: dict = field(default_factory=lambda: {"degree": 8, "residual_bound": 0.5})
    check: dict = field(default_factory=dict)
    out: Path = Path("out")
    seed: int = 0

    KEYS = ("model", "gait", "design", "gains", "thrust", "sweep", "simulate", "shape", "forces",
            "check", "out", "seed")

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path(".")) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(cls.KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        try:
            if "model" in d:
                cfg.model = ModelParams.from_dict(d["model"])
            if "design" in d:
                cfg.design = DesignSpec.from_dict(d["design"])
            if "gains" in d:
                cfg.gains = Gains.from_dict(d["gains"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from None
        gait = d.get("gait", "nominal")
        if isinstance(gait, dict):
            cfg.gait = GaitParams.from_dict(gait)
        elif gait in ("nominal", "design"):
            cfg.gait = gait
        elif isinstance(gait, str):
            path = base / gait
            if not path.is_file():
                raise ConfigError(f"gait file not found: {path}")
            cfg.gait = GaitParams.load(path)
        else:
            raise ConfigError("gait must be 'nominal', 'design', a path or an object")
        for key in ("thrust", "sweep", "simulate", "shape", "forces", "check"):
            if key in d:
                if not isinstance(d[key], dict):
                    raise ConfigError(f"{key} must be an object")
                setattr(cfg, key, {**getattr(cfg, key), **d[key]} if key != "thrust" else dict(d[key]))
        cfg.sweep["values"] = _finite_list(cfg.sweep.get("values", []), "sweep values")
        if "k" in cfg.shape:
            cfg.shape["k"] = _finite_list(cfg.shape["k"], "shape k values")
        fit_path = cfg.check.get("fit")
        if fit_path is not None and not (base / fit_path).is_file():
            raise ConfigError(f"force fit file not found: {base / fit_path}")
        if fit_path is not None:
            cfg.check["fit"] = str(base / fit_path)
        if "out" in d:
            cfg.out = Path(d["out"])
        if "seed" in d:
            cfg.seed = _seed(d["seed"])
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(d, base=path.parent)


def _seed(value) -> int:
    try:
        s = int(value)
    except (TypeError, ValueError):
        raise ConfigError("seed must be an unsigned 64-bit integer") from None
    if not 0 <= s < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return s


def _threads() -> int:
    raw = os.environ.get("HZD_THREADS", "")
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError("HZD_THREADS must be a positive integer") from None
    if n < 1:
        raise ConfigError("HZD_THREADS must be a positive integer")
    return n


# -- shared pieces -------------------------------------------------------------

class _Context:
    """Gait, zero dynamics and fits resolved lazily from a config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._gait = None
        self._funcs = None
        self._fit = None

    @property
    def gait(self) -> GaitParams:
        if self._gait is None:
            g = self.cfg.gait
            if g == "nominal":
                g = nominal_gait()
            elif g == "design":
                g = design_nominal_gait(self.cfg.model, self.cfg.design, seed=self.cfg.seed)
            self._gait = g
        return self._gait

    @property
    def funcs(self):
        from .zerodyn import build_zero_dynamics

        if self._funcs is None:
            self._funcs = build_zero_dynamics(self.gait, self.cfg.model)
        return self._funcs

    @property
    def fit(self):
        from .forces import SwingForceFit, fit_force_polynomials

        if self._fit is None:
            path = self.cfg.check.get("fit")
            if path:
                self._fit = SwingForceFit.load(path)
            else:
                f = self.cfg.forces
                self._fit = fit_force_polynomials(
                    self.gait, self.cfg.model, degree=int(f.get("degree", 8)), k=self.cfg.gains,
                    funcs=self.funcs, residual_bound=float(f.get("residual_bound", 0.5)))
        return self._fit

    def step_time(self) -> float:
        from .zerodyn import restricted_limit_cycle

        return float(restricted_limit_cycle(None, self.funcs).t[-1])

    def thrust_source(self, spec: dict):
        from .hybrid import ConstantThrust, ScheduleThrust, SecondOrderThrust, ThrusterLinModel
        from .zerodyn import ThrusterSchedule

        kind = spec.get("type", "constant")
        try:
            if kind == "constant":
                return ConstantThrust(float(spec.get("value", 0.0)), channel=bool(spec.get("channel", False)))
            if kind == "schedule":
                sched = ThrusterSchedule(spec["breakpoints"], spec["values"],
                                         physical=bool(spec.get("physical", False)))
                return ScheduleThrust(sched)
            if kind == "second_order":
                if "natural_frequency" in spec:
                    model = ThrusterLinModel(float(spec["natural_frequency"]),
                                             float(spec.get("damping_ratio", 0.9)),
                                             float(spec.get("steady_state", 0.0)))
                else:
                    model = ThrusterLinModel.preset(spec.get("preset", "slow"), self.step_time(),
                                                    float(spec.get("steady_state", 0.0)),
                                                    float(spec.get("damping_ratio", 0.9)))
                return SecondOrderThrust(model)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid thrust source: {exc}") from None
        raise ConfigError(f"unknown thrust source type {kind!r}")


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else (str(v) if isinstance(v, (int, np.integer))
                                                     else _fmt(v)) for v in row])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else str(v)
    return x


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------

def cmd_design_gait(cfg: RunConfig) -> int:
    """Design the nominal gait and write it with a design report."""
    from .forces import impact_feasibility
    from .zerodyn import build_zero_dynamics

    g = design_nominal_gait(cfg.model, cfg.design, seed=cfg.seed)
    funcs = build_zero_dynamics(g, cfg.model)
    imp = impact_feasibility(g, cfg.model)
    g.save(cfg.out / "nominal.json")
    report = {
        "zeta_star_nominal": funcs.zeta_star_nominal,
        "delta_zd": funcs.delta_zd,
        "impact": {"feasible": imp.feasible, "vertical_impulse_per_sigma": imp.margin_v,
                   "friction_margin": imp.margin_friction, "ratio": imp.ratio},
        "design": cfg.design.to_dict(),
        "seed": cfg.seed,
    }
    _write_json(cfg.out / "design_report.json", report)
    print(f"designed gait: zeta*_0={funcs.zeta_star_nominal:.6g} delta_zd={funcs.delta_zd:.6g}")
    return EXIT_OK


def _initial_state(ctx: _Context, src, perturbation: float = 0.0, F0: float = 0.0):
    from .hybrid import SecondOrderThrust, _restricted_guess, on_manifold_state

    x0, fp = _restricted_guess(src, ctx.gait, ctx.cfg.model, ctx.funcs)
    sigma = float(np.sqrt(2.0 * fp.zeta_star) * ctx.funcs.delta_zd) * (1.0 + perturbation)
    thr = (F0, 0.0) if isinstance(src, SecondOrderThrust) else None
    return on_manifold_state(ctx.gait.alpha_i, sigma, ctx.gait, ctx.cfg.model, F_T_state=thr)


def _steady_for_guess(src):
    from .hybrid import _steady_source

    return _steady_source(src)


def cmd_simulate(cfg: RunConfig) -> int:
    """Simulate full-order steps from the nominal fixed point."""
    from .hybrid import simulate_step

    ctx = _Context(cfg)
    g, p, k = ctx.gait, cfg.model, cfg.gains
    src = ctx.thrust_source(cfg.thrust)
    steps = int(cfg.simulate.get("steps", 10))
    if steps < 1:
        raise ConfigError("simulate.steps must be at least 1")
    x = _initial_state(ctx, _steady_for_guess(src), float(cfg.simulate.get("perturbation", 0.0)),
                       float(cfg.simulate.get("initial_thrust", 0.0)))
    rows, impacts = [], []
    status, failure = EXIT_OK, None
    n = g.c.size
    for i in range(steps):
        r = simulate_step(x, src, g, k, p)
        ad = r.qdot @ g.c
        for j in range(r.t.size):
            rows.append([i, r.t[j], r.alpha[j], ad[j], r.zeta[j], r.sigma[j], r.F_T[j],
                         *r.q[j], *r.qdot[j], *r.u[j], *r.y[j]])
        if r.termination != "impact":
            failure = {"step": i, "termination": r.termination, "alpha": float(r.alpha[-1])}
            status = EXIT_DOMAIN if r.termination == "step-failure" else EXIT_NUMERICAL
            break
        imp = dict(r.impact)
        F2 = np.asarray(imp["F2"])
        imp["friction_ratio"] = float(abs(F2[0]) / F2[1]) if F2[1] > 0 else float("inf")
        imp["sigma_minus"] = float(r.sigma[-1])
        impacts.append(imp)
        x = r.next_state
    header = (["step", "t", "alpha", "alpha_dot", "zeta", "sigma_N", "F_T"]
              + [f"q{i + 1}" for i in range(n)] + [f"qdot{i + 1}" for i in range(n)]
              + [f"u{i + 1}" for i in range(n - 1)] + [f"y{i + 1}" for i in range(n - 1)])
    _write_csv(cfg.out / "orbit.csv", header, rows)
    with open(cfg.out / "impacts.jsonl", "w") as fh:
        for imp in impacts:
            fh.write(json.dumps(_jsonable(imp), sort_keys=True) + "\n")
    _write_json(cfg.out / "simulate_report.json",
                {"steps_completed": len(impacts), "failure": failure, "thrust": cfg.thrust})
    print(f"simulated {len(impacts)} step(s)" + (f"; failed: {failure['termination']}" if failure else ""))
    return status


def _sweep_member(ctx: _Context, value: float, mode: dict):
    """One sweep value; returns ``(rows, summary)`` and never raises domain errors."""
    from .hybrid import find_limit_cycle, simulate_gait

    g, p, k = ctx.gait, ctx.cfg.model, ctx.cfg.gains
    kind = mode.get("mode", "constant")
    try:
        if kind == "constant":
            src = ctx.thrust_source({"type": "constant", "value": value,
                                     "channel": bool(mode.get("channel", False))})
            lc = find_limit_cycle(src, g, k, p)
            F = np.full(lc.alpha.size, value)
            rows = [[value, a, ad, z, s, t, 0, f] for a, ad, z, s, t, f in
                    zip(lc.alpha, lc.alpha_dot, lc.zeta, lc.sigma, lc.t, F)]
            summary = {"status": "ok", "zeta_star": lc.zeta_star,
                       "alpha_dot_minus": float(lc.alpha_dot[-1]),
                       "enclosed_area": lc.enclosed_area(), "newton_steps": lc.steps}
        elif kind == "second_order":
            src = ctx.thrust_source({"type": "second_order", "preset": mode.get("preset", "slow"),
                                     "steady_state": value})
            x = _initial_state(ctx, ctx.thrust_source({"type": "constant", "value": 0.0}))
            x = type(x)(x.q, x.qdot, (0.0, 0.0))
            res = simulate_gait(x, src, g, k, p, int(mode.get("steps", 10)))
            lc = find_limit_cycle(value, g, k, p)
            rows = []
            dist = []
            for i, r in enumerate(res):
                ad = r.qdot @ g.c
                rows.extend([value, a, b, z, s, t, i, f] for a, b, z, s, t, f in
                            zip(r.alpha, ad, r.zeta, r.sigma, r.t, r.F_T))
                dist.append(float(np.linalg.norm(r.next_state.vector() - lc.x_plus)))
            summary = {"status": "ok", "zeta_star": lc.zeta_star, "orbit_distance": dist,
                       "alpha_dot_minus": float((res[-1].qdot @ g.c)[-1])}
        else:
            raise ConfigError(f"unknown sweep mode {kind!r}")
    except ConfigError:
        raise
    except HZDError as exc:
        return [], {"status": "failed", "error": type(exc).__name__, "reason": str(exc)}
    return rows, summary


def cmd_sweep(cfg: RunConfig) -> int:
    """Limit cycles (or thruster transients) over a list of thrust values."""
    ctx = _Context(cfg)
    values = cfg.sweep["values"]
    results = []
    if values:
        ctx.funcs  # resolve shared state before fanning out
        if cfg.sweep.get("mode", "constant") == "second_order":
            ctx.step_time()
        workers = min(_threads(), len(values))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda v: _sweep_member(ctx, v, cfg.sweep), values))
        else:
            results = [_sweep_member(ctx, v, cfg.sweep) for v in values]
    _write_csv(cfg.out / "sweep.csv", SWEEP_COLUMNS, (row for rows, _ in results for row in rows))
    summary = [{"sweep_value": v, **s} for v, (_, s) in zip(values, results)]
    _write_json(cfg.out / "sweep_report.json", {"mode": cfg.sweep.get("mode", "constant"),
                                                "members": summary})
    failed = sum(s["status"] != "ok" for s in summary)
    print(f"sweep: {len(values) - failed} ok, {failed} failed")
    return EXIT_OK


def cmd_shape(cfg: RunConfig) -> int:
    """Orbit shaping with piecewise-constant thrust schedules."""
    from .forces import check_constraints, optimize_schedule
    from .hybrid import find_limit_cycle
    from .zerodyn import (ThrusterSchedule, cancelling_breakpoints, fixed_point,
                          restricted_limit_cycle, zeta_profile)

    ctx = _Context(cfg)
    funcs, g, p, k = ctx.funcs, ctx.gait, cfg.model, cfg.gains
    sh = cfg.shape
    full = bool(sh.get("full_order", True))
    z0 = funcs.zeta_star_nominal
    grid = np.linspace(g.alpha_i, g.alpha_f, 401)
    _, nominal = zeta_profile(funcs.delta_zd**2 * z0, None, funcs, grid)
    schedules = []
    if "shift" in sh:
        bp = sh.get("breakpoints") or list(cancelling_breakpoints(funcs))
        sched = optimize_schedule(float(sh["shift"]), bp, funcs, ctx.fit, sh.get("mu"), p,
                                  physical=bool(sh.get("physical", False)))
        schedules.append((float(sh["shift"]), sched))
    else:
        bp = sh.get("breakpoints") or cancelling_breakpoints(funcs, float(sh.get("fraction", 1 / 3)))
        pattern = np.asarray(sh.get("pattern", [-1.0, 0.0, 1.0]), dtype=float)
        if pattern.size != len(bp) - 1:
            raise ConfigError("shape.pattern needs one value per segment")
        for kv in sh["k"]:
            schedules.append((kv, ThrusterSchedule(bp, kv * pattern)))
    rows, members = [], []
    for label, sched in schedules:
        fp = fixed_point(sched, funcs)
        lc = restricted_limit_cycle(sched, funcs)
        _, prof = zeta_profile(funcs.delta_zd**2 * fp.zeta_star, sched, funcs, grid)
        rep = check_constraints(sched, fp.zeta_star, ctx.fit, sh.get("mu"), p, g)
        rows.extend([label, "restricted", a, ad, z, s, t] for a, ad, z, s, t in
                    zip(lc.alpha, lc.alpha_dot, lc.zeta, lc.sigma, lc.t))
        m = {"label": label, "schedule": sched.to_dict(), "zeta_star": fp.zeta_star,
             "shift": fp.shift, "max_deviation": float(np.abs(prof - nominal).max()),
             "constraints": rep.to_dict()}
        if full:
            flc = find_limit_cycle(sched, g, k, p)
            rows.extend([label, "full", a, ad, z, s, t] for a, ad, z, s, t in
                        zip(flc.alpha, flc.alpha_dot, flc.zeta, flc.sigma, flc.t))
            m["zeta_star_full_order"] = flc.zeta_star
        if not rep.feasible:
            log.warning("schedule %s violates %s at alpha=%.4f", label, rep.binding, rep.worst_alpha)
        members.append(m)
    _write_csv(cfg.out / "shape.csv", ["label", "model", "alpha", "alpha_dot", "zeta", "sigma_N", "t"],
               rows)
    _write_json(cfg.out / "schedules.json", {"zeta_star_nominal": z0, "members": members})
    for m in members:
        print(f"{m['label']}: zeta*={m['zeta_star']:.10g} shift={m['shift']:.3g} "
              f"feasible={m['constraints']['feasible']}")
    return EXIT_OK


def cmd_fit_forces(cfg: RunConfig) -> int:
    """Fit the stance-force polynomial surrogates."""
    ctx = _Context(cfg)
    fit = ctx.fit
    fit.save(cfg.out / "force_fit.json")
    print(f"max_fit_residual={fit.max_fit_residual!r}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    """Check ground-force admissibility for a thrust source."""
    from .forces import check_constraints
    from .hybrid import ConstantThrust, ScheduleThrust
    from .zerodyn import ThrusterSchedule, fixed_point

    ctx = _Context(cfg)
    g, p = ctx.gait, cfg.model
    src = ctx.thrust_source(cfg.thrust)
    if isinstance(src, ConstantThrust):
        sched = ThrusterSchedule.constant(src.value, g, physical=not src.channel)
    elif isinstance(src, ScheduleThrust):
        sched = src.schedule
    else:
        raise ConfigError("check needs a constant or scheduled thrust")
    zs = cfg.check.get("zeta_star")
    if zs is None:
        try:
            zs = fixed_point(sched, ctx.funcs).zeta_star
        except HZDError as exc:
            _write_json(cfg.out / "check_report.json", {"feasible": False, "binding": "fixed_point",
                                                        "reason": str(exc)})
            print(f"infeasible: {exc}")
            return EXIT_DOMAIN
    rep = check_constraints(sched, float(zs), ctx.fit, cfg.check.get("mu"), p, g)
    _write_json(cfg.out / "check_report.json",
                {**rep.to_dict(), "zeta_star": float(zs), "max_fit_residual": ctx.fit.max_fit_residual})
    print(("feasible" if rep.feasible else f"infeasible: {rep.binding} at alpha={rep.worst_alpha:.4f}")
          + f" (min vertical force {rep.min_vertical_margin:.4g} N)")
    return EXIT_OK if rep.feasible else EXIT_DOMAIN


COMMANDS = {
    "design-gait": cmd_design_gait,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "shape": cmd_shape,
    "fit-forces": cmd_fit_forces,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="thrusthzd", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").strip() or None)
        sp.add_argument("--config", type=Path, help="run configuration (JSON)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", help="seed for randomized steps (u64)")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(args.config) if args.config else RunConfig()
        if args.out is not None:
            cfg.out = args.out
        if args.seed is not None:
            cfg.seed = _seed(args.seed)
        _threads()
        cfg.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg)
    except HZDError as exc:
        code = exc.exit_code
        reason = {"error": type(exc).__name__, "reason": str(exc)}
        for attr in ("condition", "binding", "alpha"):
            if getattr(exc, attr, None) is not None:
                reason[attr] = getattr(exc, attr)
        print(json.dumps(_jsonable(reason), sort_keys=True), file=sys.stderr)
        return code
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError) as exc:
        print(json.dumps({"error": type(exc).__name__, "reason": str(exc)}), file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, TypeError) as exc:
        # malformed config values that slipped past RunConfig validation
        print(json.dumps({"error": "ConfigError", "reason": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(json.dumps({"error": type(exc).__name__, "reason": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
