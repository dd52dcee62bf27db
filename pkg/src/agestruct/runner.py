"""Scenario execution: simulations, verification checks and artifacts."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import general as gen
from .comparison import order_probe, sandwich_verify
from .config import Scenario, sample
from .errors import ConfigError, DivergenceError, NoRootError, PreconditionError, StepSizeError
from .grid import AgeGrid, AgeProfile
from .hiv import HivModel, HivParams, HivState, hiv_bounds, hiv_frozen_simulate, hiv_simulate
from .invariance import Region, a_star, invariance_check
from .operators import SurvivalFactors
from .sir import SirModel, SirParams, SirState, sir_bounds, sir_frozen_simulate, sir_simulate
from .spectral import conservation_residual, functional_series, spectral_hiv, spectral_sir
from .trajectory import Trajectory

ENV_OUTPUT_DIR = "AGESTRUCT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "agestruct-out"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3

COMMAND_CHECKS = {
    "compare": {"sir": ["sandwich"], "hiv": ["sandwich"], "general": ["monotone_pairs"]},
    "invariance": {"sir": ["invariance"], "hiv": ["invariance"]},
    "probe": {"sir": ["assumption_probe"], "hiv": ["assumption_probe"], "general": ["assumption_probe"]},
    "convergence": {"sir": ["convergence"], "hiv": ["convergence"], "general": ["convergence"]},
}
SOLVER_ERRORS = (StepSizeError, NoRootError, DivergenceError, PreconditionError)


# --------------------------------------------------------------------------
# model construction


def build_sir(sc: Scenario):
    g, prm = sc.grid, sc.params
    p = SirParams.build(
        g, prm["gamma_in"], prm["nu_S"], prm["eta"], sample(g, prm["beta"]), sample(g, prm["nu_I"]), prm.get("delta_floor")
    )
    return p, SirState(float(sc.initial["S"]), sample(g, sc.initial["i"]))


def build_hiv(sc: Scenario):
    g, prm = sc.grid, sc.params
    p = HivParams.build(
        g, prm["s"], prm["d"], prm["k"], prm["c"], sample(g, prm["p"]), sample(g, prm["delta"]), prm.get("delta0")
    )
    ini = sc.initial
    return p, HivState(float(ini["T"]), float(ini["V"]), sample(g, ini["i"]))


def build_general(sc: Scenario):
    g, prm = sc.grid, sc.params
    node = lambda key: sample(g, prm[key]).scalar
    mm, bm = prm["mu_mod"], prm["beta_mod"]
    p = gen.scalar_params(
        g, node("mu0"), node("beta0"), node("alpha"), node("sigma"),
        mu_mod=gen.modulation(mm["kind"], mm["rate"]),
        beta_mod=gen.modulation(bm["kind"], bm["rate"]),
        gamma_hint=prm.get("gamma"),
    )
    return p, gen.GeneralState(sample(g, sc.initial["u"]))


# --------------------------------------------------------------------------
# shared helpers


def _truncate(traj: Trajectory, steps: int) -> Trajectory:
    return Trajectory(
        traj.grid,
        traj.times[: steps + 1],
        traj.profiles[: steps + 1],
        heads={k: np.asarray(v)[: steps + 1] for k, v in traj.heads.items()},
        diagnostics={k: np.asarray(v)[: steps + 1] for k, v in traj.diagnostics.items()},
        meta=dict(traj.meta),
    )


def _sub_horizon(grid: AgeGrid, horizon: float, cap: float) -> int:
    return min(grid.steps_for(horizon), int(math.floor(cap / grid.dt + 1e-9)))


def random_ordered_pair(rng, grid: AgeGrid, scale: float = 1.0, dim: int = 1, knots: int = 8):
    """Two nonnegative piecewise-linear profiles ``x <= y`` with L1 norm near ``scale``."""
    x = gen._random_profile(rng, grid, dim, knots)
    bump = gen._random_profile(rng, grid, dim, knots)
    norm = float(grid.weights @ (x + bump).sum(axis=1))
    f = scale / norm if norm > 0 else 0.0
    return AgeProfile(grid, f * x), AgeProfile(grid, f * (x + bump))


def _initial_mass(ctx) -> float:
    prof = ctx.state.u if ctx.sc.model == "general" else ctx.state.i
    return float(ctx.sc.grid.weights @ prof.scalar)


def _loc_time(traj, k):
    return float(traj.times[k])


# --------------------------------------------------------------------------
# context: everything computed once per run


@dataclass
class Context:
    sc: Scenario
    p: object = None
    state: object = None
    traj: Trajectory | None = None
    lower: Trajectory | None = None
    upper: Trajectory | None = None
    bounds: dict = field(default_factory=dict)
    spectral: dict = field(default_factory=dict)
    sd: dict = field(default_factory=dict)
    frozen: dict = field(default_factory=dict)


def _bounds(ctx: Context):
    sc = ctx.sc
    if sc.model == "sir":
        ctx.p, ctx.state = build_sir(sc)
        b = sir_bounds(ctx.state, ctx.p)
        ctx.bounds = {"S_minus": b.S_minus, "S_plus": b.S_plus, "M": b.M}
        ctx.frozen = {"minus": b.S_minus, "plus": b.S_plus}
    elif sc.model == "hiv":
        ctx.p, ctx.state = build_hiv(sc)
        b = hiv_bounds(ctx.state, ctx.p)
        ctx.bounds = {"T_minus": b.T_minus, "T_plus": b.T_plus, "V_cap": b.V_cap, "d_1": b.d_1}
        ctx.frozen = {"minus": b.T_minus, "plus": b.T_plus}
    else:
        ctx.p, ctx.state = build_general(sc)
        ctx.bounds = {}
        ctx.frozen = {}


def _spectral(ctx: Context):
    solver = {"sir": spectral_sir, "hiv": spectral_hiv}.get(ctx.sc.model)
    if solver is None:
        return
    for side, level in ctx.frozen.items():
        try:
            sd = solver(level, ctx.p, ctx.sc.grid)
        except NoRootError as exc:
            ctx.spectral[f"lambda_{side}"] = None
            ctx.spectral[f"error_{side}"] = str(exc)
            continue
        ctx.sd[side] = sd
        ctx.spectral[f"lambda_{side}"] = sd.lam
        ctx.spectral[f"gamma_profile_0_{side}"] = float(sd.gamma_profile.scalar[0])
        if ctx.sc.model == "hiv":
            ctx.spectral[f"head_coeff_{side}"] = sd.head_coeff


def _simulate(ctx: Context):
    sc, g, p, st = ctx.sc, ctx.sc.grid, ctx.p, ctx.state
    if sc.model == "sir":
        ctx.traj = sir_simulate(st, p, g, sc.horizon)
        ctx.lower = sir_frozen_simulate(st.i, ctx.frozen["minus"], p, g, sc.horizon)
        ctx.upper = sir_frozen_simulate(st.i, ctx.frozen["plus"], p, g, sc.horizon)
    elif sc.model == "hiv":
        ctx.traj = hiv_simulate(st, p, g, sc.horizon)
        ctx.lower = hiv_frozen_simulate(st.i, st.V, ctx.frozen["minus"], p, g, sc.horizon)
        ctx.upper = hiv_frozen_simulate(st.i, st.V, ctx.frozen["plus"], p, g, sc.horizon)
    else:
        ctx.traj = gen.general_simulate(st, p, g, sc.horizon)


# --------------------------------------------------------------------------
# checks


def check_sandwich(ctx: Context) -> dict:
    sc = ctx.sc
    tol = sc.options["sandwich_tol"]
    if tol is None:
        tol = 1e-6 + 5.0 * sc.grid.dt
    rep = sandwich_verify(ctx.lower, ctx.traj, ctx.upper, tol)
    lower_worse = rep.lower_margin >= rep.upper_margin
    return {
        "pass": rep.ok,
        "tol": tol,
        "worst_margin": rep.worst_margin,
        "location": {"side": "lower" if lower_worse else "upper", "at": rep.lower_location if lower_worse else rep.upper_location},
        "lower_margin": rep.lower_margin,
        "upper_margin": rep.upper_margin,
    }


def check_conservation(ctx: Context) -> dict:
    sc = ctx.sc
    steps = _sub_horizon(sc.grid, sc.horizon, sc.options["conservation_horizon"])
    out = {"tol": sc.options["conservation_tol"], "horizon": steps * sc.grid.dt}
    worst, where = -math.inf, None
    for side, traj in (("minus", ctx.lower), ("plus", ctx.upper)):
        sd = ctx.sd.get(side)
        if sd is None:
            out[f"residual_{side}"] = None
            continue
        part = _truncate(traj, steps)
        out[f"residual_{side}"] = conservation_residual(part, sd)
        r = conservation_residual(part, sd, growth_normalized=True)
        out[f"relative_residual_{side}"] = r
        if r > worst:
            f = functional_series(part, sd)
            growth = np.exp(sd.lam * part.times)
            k = int(np.argmax(np.abs(f / growth - f[0])))
            worst, where = r, {"side": side, "t": _loc_time(part, k)}
    out["worst_margin"] = worst
    out["location"] = where
    out["pass"] = bool(ctx.sd) and worst <= out["tol"]
    return out


def check_invariance(ctx: Context) -> dict:
    sc, p, g = ctx.sc, ctx.p, ctx.sc.grid
    if sc.model == "sir":
        kernel, rate, delta = p.beta, p.nu_I, p.delta_floor
    else:
        kernel, rate, delta = p.p_prod, p.delta_a, p.delta0
    astar = a_star(kernel)
    rep = invariance_check(
        ctx.traj, astar,
        tol_mass=sc.tol_mass,
        kernel=kernel,
        delta=delta,
        surv=SurvivalFactors.from_rate(g, rate),
        spectral=ctx.sd.get("minus"),
        cert_slack=sc.options["cert_slack"],
    )
    if rep.region is Region.INTERIOR:
        k = int(np.argmin(rep.levels))
        margin = rep.tol_mass - rep.min_level
    else:
        k = int(np.argmax(rep.levels))
        margin = float(rep.levels[k]) - rep.tol_mass
    if rep.flip_step is not None:
        k = rep.flip_step
    out = {
        "pass": rep.ok,
        "a_star": astar,
        "region": rep.region.value,
        "constant": rep.constant,
        "flip_step": rep.flip_step,
        "tol_mass": rep.tol_mass,
        "min_level": rep.min_level,
        "worst_margin": margin,
        "location": {"t": _loc_time(ctx.traj, k), "step": k},
        "sub_checks": dict(sorted(rep.checks.items())),
    }
    if rep.region is Region.BOUNDARY:
        out.update(max_inflow=rep.max_inflow, decay_margin=rep.decay_margin, explicit_error=rep.explicit_error)
    elif rep.certificate is not None:
        out["certificate_min"] = float(np.min(rep.certificate))
    return out


def _frozen_pair_runner(ctx: Context):
    sc, p, g = ctx.sc, ctx.p, ctx.sc.grid
    level = ctx.frozen["plus"]
    if sc.model == "sir":
        model = SirModel(p, g, S_frozen=level)
        run = lambda x, V, h: sir_frozen_simulate(x, level, p, g, h)
    else:
        model = HivModel(p, g, T_frozen=level)
        run = lambda x, V, h: hiv_frozen_simulate(x, V, level, p, g, h)
    return model, run


def check_monotone_pairs(ctx: Context) -> dict:
    sc, g = ctx.sc, ctx.sc.grid
    steps = _sub_horizon(g, sc.horizon, sc.options["pairs_horizon"])
    h = steps * g.dt
    rng = np.random.default_rng(sc.seed)
    scale = max(_initial_mass(ctx), 1e-3)
    out = {"pairs": sc.options["pairs"], "horizon": h}
    if sc.model == "general":
        probe = gen.assumption_probe(ctx.p, sc.options["probe_norm"] or 4.0 * scale, sc.options["probe_samples"], sc.seed)
        out["certified"] = probe.certified
        out["gamma"] = probe.gamma
        tol = sc.tol_order + 5.0 * g.dt
        run = lambda x, V: gen.general_simulate(gen.GeneralState(x), ctx.p, g, h)
    else:
        model, frozen_run = _frozen_pair_runner(ctx)
        gamma = model.default_gamma()
        out["certified"] = order_probe(model, gamma, 4.0 * (scale + 1.0), sc.options["probe_samples"], sc.seed)
        out["gamma"] = gamma
        tol = sc.tol_order
        run = lambda x, V: frozen_run(x, V, h)
    worst, where = -math.inf, None
    for n in range(sc.options["pairs"]):
        x, y = random_ordered_pair(rng, g, scale)
        Vx = float(rng.uniform(0.0, scale))
        Vy = Vx + float(rng.uniform(0.0, scale))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a, b = run(x, Vx), run(y, Vy)
        d = a.profiles - b.profiles
        k, j, c = np.unravel_index(int(np.argmax(d)), d.shape)
        if d[k, j, c] > worst:
            worst, where = float(d[k, j, c]), {"pair": n, "t": _loc_time(a, k), "a": float(g.nodes[j])}
        if "V" in a.heads:
            dv = np.asarray(a.heads["V"]) - np.asarray(b.heads["V"])
            kv = int(np.argmax(dv))
            if dv[kv] > worst:
                worst, where = float(dv[kv]), {"pair": n, "t": _loc_time(a, kv), "head": "V"}
    out.update(tol=tol, worst_margin=worst, location=where)
    out["pass"] = bool(out["certified"]) and worst <= tol
    return out


def check_trajectory_monotone(ctx: Context) -> dict:
    sc = ctx.sc
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        v = gen.trajectory_monotone_check(ctx.state, ctx.p, sc.grid, sc.horizon, tol=None)
    expect = sc.options["expect"]
    ok = v.result.value == expect if expect else v.verified
    where = None
    if v.trajectory is not None and v.trajectory.n_steps > 0:
        steps = np.diff(v.trajectory.profiles, axis=0)
        if v.claimed is gen.Monotonicity.DECREASING:
            steps = -steps
        k, j, c = np.unravel_index(int(np.argmin(steps)), steps.shape)
        where = {"t": _loc_time(v.trajectory, k + 1), "a": float(sc.grid.nodes[j]), "component": int(c)}
    return {
        "pass": ok,
        "result": v.result.value,
        "claimed": v.claimed.value,
        "verified": v.verified,
        "expect": expect,
        "interior": list(v.interior),
        "boundary": list(v.boundary),
        "worst_margin": -v.step_margin if v.step_margin is not None else None,
        "location": where,
    }


def check_assumption_probe(ctx: Context) -> dict:
    sc, g = ctx.sc, ctx.sc.grid
    samples = sc.options["probe_samples"]
    if sc.model == "general":
        norm = sc.options["probe_norm"] or 4.0 * max(_initial_mass(ctx), 1.0)
        v = gen.assumption_probe(ctx.p, norm, samples, sc.seed)
        cex = v.counterexample
        return {
            "pass": v.certified,
            "gamma": v.gamma,
            "gammas_tried": v.gammas_tried,
            "norm_bound": norm,
            "counterexample": cex,
            "worst_margin": cex["margin"] if cex else None,
            "location": cex["location"] if cex else None,
        }
    out = {"pass": True, "location": None, "worst_margin": None}
    scale = _initial_mass(ctx) + 1.0
    for side, level in ctx.frozen.items():
        model = SirModel(ctx.p, g, S_frozen=level) if sc.model == "sir" else HivModel(ctx.p, g, T_frozen=level)
        gamma = model.default_gamma()
        ok = order_probe(model, gamma, 4.0 * scale, samples, sc.seed)
        out[f"gamma_{side}"] = gamma
        out[f"verified_{side}"] = ok
        out["pass"] = out["pass"] and ok
    return out


def _series(sc: Scenario, traj: Trajectory) -> np.ndarray:
    if sc.model == "sir":
        return np.asarray(traj.heads["S"])
    if sc.model == "hiv":
        return np.asarray(traj.heads["V"])
    return np.asarray(traj.diagnostics["mass"])


def _orders(values):
    out = []
    for a, b in zip(values[:-1], values[1:]):
        out.append(math.log2(a / b) if a is not None and b is not None and a > 0 and b > 0 else None)
    return out


def convergence_study(sc: Scenario, levels: int = 3) -> dict:
    """Rerun on grids refined by ``2**k`` and estimate observed orders.

    Solution differences compare successive levels at the coarse time
    levels (``S`` for SIR, ``V`` for HIV, total mass otherwise); the order
    is ``log2(d_k / d_{k+1})``. ``profile_diff`` compares the age profiles
    at the coarse (t, a) nodes the same way. For SIR and HIV the conservation residual
    of the upper bounding run over ``conservation_horizon`` is reported too.
    """
    if levels < 2:
        raise ConfigError("levels must be at least 2", "/options/levels")
    n0 = sc.grid.n_cells
    series, profiles, residuals, cells = [], [], [], []
    for k in range(levels):
        sk = sc.with_grid(n0 * 2**k)
        ctx = Context(sk)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _bounds(ctx)
            _spectral(ctx)
            _simulate(ctx)
        cells.append(sk.grid.n_cells)
        series.append(_series(sk, ctx.traj)[:: 2**k])
        profiles.append(ctx.traj.profiles[:: 2**k, :: 2**k])
        if sk.model in ("sir", "hiv") and "plus" in ctx.sd:
            steps = _sub_horizon(sk.grid, sk.horizon, sk.options["conservation_horizon"])
            residuals.append(conservation_residual(_truncate(ctx.upper, steps), ctx.sd["plus"]))
    diffs = [float(np.max(np.abs(a - b))) for a, b in zip(series[:-1], series[1:])]
    floor = 1e-12 * max(1.0, float(np.max(np.abs(series[-1]))))
    exact = all(d <= floor for d in diffs)
    pdiffs = [float(np.max(np.abs(a - b))) for a, b in zip(profiles[:-1], profiles[1:])]
    pfloor = 1e-12 * max(1.0, float(np.max(np.abs(profiles[-1]))))
    table = {
        "n_cells": cells,
        "dt": [sc.grid.a_max / n for n in cells],
        "solution_quantity": {"sir": "S", "hiv": "V", "general": "mass"}[sc.model],
        "solution_diff": diffs,
        "solution_order": _orders([d if d > floor else None for d in diffs]),
        "exact": exact,
        "profile_diff": pdiffs,
        "profile_exact": all(d <= pfloor for d in pdiffs),
    }
    if residuals:
        table["conservation_residual"] = residuals
        table["conservation_order"] = _orders(residuals)
    return table


def check_convergence(ctx: Context) -> dict:
    table = convergence_study(ctx.sc, ctx.sc.options["levels"])
    orders = [o for o in table["solution_order"] if o is not None] + [o for o in table.get("conservation_order", []) if o is not None]
    ok = table["exact"] or (bool(orders) and min(orders) >= 0.8)
    where = None
    if orders:
        sol = [o if o is not None else math.inf for o in table["solution_order"]]
        cons = [o if o is not None else math.inf for o in table.get("conservation_order", [])]
        k = int(np.argmin(sol + cons))
        where = {"quantity": "solution" if k < len(sol) else "conservation", "levels": [k % len(sol), k % len(sol) + 1]}
    return {**table, "pass": ok, "worst_margin": (0.8 - min(orders)) if orders else None, "location": where}


CHECKS = {
    "sandwich": check_sandwich,
    "conservation": check_conservation,
    "invariance": check_invariance,
    "monotone_pairs": check_monotone_pairs,
    "trajectory_monotone": check_trajectory_monotone,
    "assumption_probe": check_assumption_probe,
    "convergence": check_convergence,
}


# --------------------------------------------------------------------------
# artifacts


def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def timeseries_columns(ctx: Context) -> dict:
    sc, traj = ctx.sc, ctx.traj
    cols = {"t": traj.times}
    if sc.model == "sir":
        S, I = np.asarray(traj.heads["S"]), traj.diagnostics["I"]
        cols.update(S=S, I=I, Lambda=traj.diagnostics["Lambda"], removal=traj.diagnostics["removal"])
        b = ctx.bounds
        cols.update(S_lower_margin=S - b["S_minus"], S_upper_margin=b["S_plus"] - S, M_margin=b["M"] - S - I)
    elif sc.model == "hiv":
        T, V = np.asarray(traj.heads["T"]), np.asarray(traj.heads["V"])
        cols.update(T=T, V=V, I=traj.diagnostics["I"], P=traj.diagnostics["P"])
        b = ctx.bounds
        cols.update(
            T_lower_margin=T - b["T_minus"], T_upper_margin=b["T_plus"] - T,
            TI_margin=traj.diagnostics["TI_margin"], V_margin=traj.diagnostics["V_margin"],
        )
    else:
        cols["mass"] = traj.diagnostics["mass"]
        for k in range(ctx.p.dim):
            cols[f"G_{k}"] = traj.diagnostics["G"][:, k]
            cols[f"Sigma_{k}"] = traj.diagnostics["Sigma"][:, k]
    if ctx.lower is not None:
        for side, tr in (("minus", ctx.lower), ("plus", ctx.upper)):
            cols[f"I_{side}"] = tr.masses()
            if "V" in tr.heads:
                cols[f"V_{side}"] = np.asarray(tr.heads["V"])
            if side in ctx.sd:
                cols[f"F_{side}"] = functional_series(tr, ctx.sd[side])
    cols["dropped_mass"] = traj.diagnostics["dropped_mass"]
    return cols


def write_csv(path: Path, cols: dict):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(cols)
    w.writerow(names)
    rows = np.column_stack([np.asarray(cols[n], float) for n in names])
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def write_json(path: Path, obj):
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def resolve_output_dir(sc: Scenario, override: str | None = None) -> Path:
    return Path(override or sc.output_dir or os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR)


@dataclass
class RunResult:
    exit_code: int
    report: dict
    output_dir: Path | None
    files: list

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def run(sc: Scenario, command: str = "simulate", output_dir: str | None = None, levels: int | None = None, write: bool = True) -> RunResult:
    """Execute ``command`` for ``sc``; exit code 0 iff every requested check passes.

    ``simulate`` runs the checks listed in the scenario; ``compare``,
    ``invariance``, ``probe`` and ``convergence`` run their own check;
    ``bounds`` and ``spectral`` only compute the a priori quantities.
    """
    if command in COMMAND_CHECKS:
        if sc.model not in COMMAND_CHECKS[command]:
            raise ConfigError(f"command {command!r} is not available for model {sc.model!r}", "/model")
        checks = COMMAND_CHECKS[command][sc.model]
    elif command in ("simulate", "bounds", "spectral"):
        checks = list(sc.checks) if command == "simulate" else []
    else:
        raise ConfigError(f"unknown command {command!r}")
    if levels is not None:
        sc.options["levels"] = int(levels)
        sc.config["options"]["levels"] = int(levels)

    ctx = Context(sc)
    report = {
        "command": command,
        "model": sc.model,
        "config": sc.config,
        "grid": {"a_max": sc.grid.a_max, "n_cells": sc.grid.n_cells, "da": sc.grid.da},
        "checks": {},
    }
    out_dir = resolve_output_dir(sc, output_dir) if write else None
    files = []
    captured = []
    code = EXIT_OK
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            _bounds(ctx)
            report["bounds"] = ctx.bounds
            if sc.model != "general":
                _spectral(ctx)
                report["spectral"] = ctx.spectral
            if command not in ("bounds", "spectral"):
                _simulate(ctx)
                report["dropped_mass"] = ctx.traj.dropped_mass
                for name in checks:
                    report["checks"][name] = CHECKS[name](ctx)
            captured = [str(w.message) for w in caught]
    except SOLVER_ERRORS as exc:
        code = EXIT_SOLVER
        report["error"] = {"type": type(exc).__name__, "message": str(exc), "step": getattr(exc, "step", None)}
    report["warnings"] = sorted(set(captured))
    if code == EXIT_OK and not all(c["pass"] for c in report["checks"].values()):
        code = EXIT_CHECK_FAILED
    report["status"] = {EXIT_OK: "pass", EXIT_CHECK_FAILED: "fail", EXIT_SOLVER: "error"}[code]
    report["exit_code"] = code

    if write:
        out_dir.mkdir(parents=True, exist_ok=True)
        if ctx.traj is not None:
            write_csv(out_dir / "timeseries.csv", timeseries_columns(ctx))
            files.append(out_dir / "timeseries.csv")
        write_json(out_dir / "report.json", report)
        files.append(out_dir / "report.json")
    return RunResult(code, report, out_dir, files)


def summary_lines(res: RunResult) -> list:
    r = res.report
    lines = [f"{r['command']} ({r['model']}): {r['status']}"]
    for k, v in sorted(r.get("bounds", {}).items()):
        lines.append(f"  {k} = {v:.10g}")
    for k, v in sorted(r.get("spectral", {}).items()):
        if k.startswith("lambda"):
            lines.append(f"  {k} = {v:.12g}" if v is not None else f"  {k} = none")
    for name, c in sorted(r["checks"].items()):
        m = c.get("worst_margin")
        mtxt = f", worst margin {m:.3g}" if isinstance(m, (int, float)) and m is not None else ""
        lines.append(f"  check {name}: {'pass' if c['pass'] else 'FAIL'}{mtxt}")
    if "error" in r:
        lines.append(f"  error: {r['error']['type']}: {r['error']['message']}")
    if res.files:
        lines.append("  wrote " + ", ".join(str(f) for f in res.files))
    return lines
