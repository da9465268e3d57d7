"""Experiment registry: parameter sets, runners, expectations and CSV output.

Every experiment maps a flat parameter dictionary to a list of result rows
(plain dicts with a fixed column order).  ``check`` functions turn rows into
pass/fail records.  Rows never depend on the worker count; only the
``wall_time`` column varies between runs.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .complexity import optimal_coarsening, serial_steps, v_cycle_steps
from .core import ConfigurationError, LevelSpec, MethodConfig, as_levels
from .parareal import solve_multilevel
from .problems import (DecayProblem, OscillatoryProblem, SwingingSpringProblem,
                       ThreeTimescaleProblem, reference_solution)
from .spectral import RsweProblem, relative_linf

WALL = "wall_time"

DECAY_EXPECTED = {
    2: 1.2566212807763046e-05,
    3: 1.9562958164422008e-05,
    4: 1.9807099440426344e-05,
    5: 1.9809587023590493e-05,
    6: 1.9809615854133382e-05,
    7: 1.9809616125891306e-05,
    8: 1.980961620086837e-05,
}

OSCILLATORY_EXPECTED = {
    (100, 2): 2.169750591733674e-4,
    (100, 3): 1.9811199764541986e-4,
    (1000, 2): 2.1847140061040485e-06,
    (1000, 3): 2.106413305540747e-06,
    (1000, 4): 2.251750942815333e-06,
    (10000, 2): 3.0668862104273734e-07,
    (10000, 3): 3.0480547757705495e-07,
    (10000, 4): 3.0357016877934065e-07,
    (10000, 5): 2.7011063136189545e-07,
}
OSCILLATORY_FINE_DT = {100: 1e-3, 1000: 1e-4, 10000: 2.5e-5}

RSWE_TWO_LEVEL_EXPECTED = 1.7963565539455182e-05
RSWE_FINE_DT = 1.0 / 2000.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass(frozen=True)
class ExperimentDef:
    """One registered experiment.

    Attributes:
        id: registry key.
        description: one-line summary.
        columns: output column order (``wall_time`` is appended when timed).
        defaults: parameter defaults; ``--set`` overrides are coerced to the
            default's type.
        run: ``run(params, workers) -> rows``.
        check: ``check(rows, params) -> list[CheckResult]``.
        heavy: overrides applied by ``--heavy``.
        plot: ``(x, series, y)`` column names for long-format plot data.
        series_label: formats the series value for plot data.
        plan: builds a representative ``MethodConfig`` for ``mlp plan``.
    """

    id: str
    description: str
    columns: tuple
    defaults: dict
    run: Callable
    check: Callable
    heavy: dict = field(default_factory=dict)
    plot: tuple | None = None
    series_label: Callable = str
    plan: Callable | None = None


# --------------------------------------------------------------------------- #
# Parameters
# --------------------------------------------------------------------------- #


def _coerce(default, text: str):
    if isinstance(default, bool):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if isinstance(default, tuple):
        parts = [part.strip() for part in text.split(",") if part.strip()]
        if default:
            return tuple(type(default[0])(part) for part in parts)
        return tuple(_number(part) for part in parts)
    return type(default)(text)


def _number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def resolve_params(exp: ExperimentDef, overrides: dict | None = None,
                   heavy: bool = False) -> dict:
    """Defaults, then ``heavy`` overrides, then user overrides (strings coerced).

    Raises:
        ConfigurationError: for unknown keys or values of the wrong type.
    """
    params = dict(exp.defaults)
    if heavy:
        params.update(exp.heavy)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ConfigurationError(f"{exp.id}: unknown parameter {key!r}")
        if isinstance(value, str):
            try:
                value = _coerce(params[key], value)
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"{exp.id}: bad value for {key!r}: {exc}") from exc
        params[key] = value
    return params


def _ladder(fine_dt: float, coarsen: int, count: int):
    return [fine_dt * coarsen ** l for l in range(count)]


# --------------------------------------------------------------------------- #
# Decay
# --------------------------------------------------------------------------- #


def _decay_config(L, p, workers=1):
    prob = DecayProblem(t_end=p["t_end"])
    dts = [p["coarse_dt"] / p["coarsen"] ** (L - 1 - l) for l in range(L)]
    levels = [LevelSpec(l, dts[l], None, p["iterations"]) for l in range(L)]
    return prob, MethodConfig(as_levels(levels), 0.0, p["t_end"], prob.initial_condition,
                              workers=workers)


def nodal_mean_error(run, exact) -> float:
    """Mean absolute error over the nodes of the final top-level trajectory."""
    traj = run.final
    return float(np.mean(np.abs(traj.states - exact(traj.times))))


def _run_decay(p, workers):
    rows = []
    for L in p["levels"]:
        prob, cfg = _decay_config(L, p, workers)
        run = solve_multilevel(cfg, prob.spec())
        rows.append({"levels": L, "error": nodal_mean_error(run, prob.exact),
                     "serial_steps": run.serial_steps, WALL: run.wall_time})
    return rows


def _check_decay(rows, p):
    out = []
    for row in rows:
        ref = DECAY_EXPECTED.get(row["levels"])
        if ref is None or p["coarse_dt"] != 0.25 or p["coarsen"] != 10:
            continue
        rel = abs(row["error"] / ref - 1.0)
        out.append(CheckResult(f"levels={row['levels']}", rel <= 1e-2,
                               f"error {row['error']:.6e} vs {ref:.6e} (rel {rel:.1e})"))
    deep = [r["error"] for r in rows if r["levels"] >= 3]
    if len(deep) > 1:
        spread = (max(deep) - min(deep)) / min(deep)
        out.append(CheckResult("levels>=3 spread", spread < 0.02, f"{spread:.2%}"))
    return out


# --------------------------------------------------------------------------- #
# Scalar oscillatory problem
# --------------------------------------------------------------------------- #


def oscillatory_config(r: float, L: int, fine_dt: float, coarsen: int = 10,
                       workers: int = 1):
    """Windows grow by ``coarsen`` per level; the finest averaged window is ``20 / r``."""
    prob = OscillatoryProblem(r=r)
    dts = _ladder(fine_dt, coarsen, L)
    eta1 = 20.0 / r
    levels = [LevelSpec(l, dts[l], eta1 * coarsen ** (l - 1) if l else None, 1)
              for l in range(L)]
    cfg = MethodConfig(as_levels(levels), 0.0, prob.t_end, prob.initial_condition,
                       averaging_enabled=True, workers=workers)
    return prob, cfg


def _oscillatory_cells(p):
    cells = []
    for r in p["r"]:
        r = int(r)
        levels = p["levels"] or tuple(L for (rr, L) in OSCILLATORY_EXPECTED if rr == r)
        cells += [(r, L) for L in levels]
    return cells


def _run_oscillatory(p, workers):
    rows = []
    for r, L in _oscillatory_cells(p):
        fine_dt = OSCILLATORY_FINE_DT.get(r, 0.1 / r)
        prob, cfg = oscillatory_config(r, L, fine_dt, workers=workers)
        run = solve_multilevel(cfg, prob.spec())
        rows.append({"r": r, "levels": L, "error": nodal_mean_error(run, prob.exact),
                     "serial_steps": run.serial_steps, WALL: run.wall_time})
    return rows


def _check_oscillatory(rows, p):
    out = []
    for row in rows:
        ref = OSCILLATORY_EXPECTED.get((row["r"], row["levels"]))
        if ref is None:
            continue
        ratio = row["error"] / ref
        out.append(CheckResult(f"r={row['r']} levels={row['levels']}", 0.5 <= ratio <= 2.0,
                               f"error {row['error']:.6e} vs {ref:.6e} (ratio {ratio:.4f})"))
    return out


# --------------------------------------------------------------------------- #
# Three time scales
# --------------------------------------------------------------------------- #


def three_scale_configs(coarse_dt: float, p, iterations: int, workers: int = 1):
    """The three-level method and the two-level method embedded in it."""
    prob = ThreeTimescaleProblem()
    N = p["coarsen"]
    eta1, eta2 = p["eta"]
    fine = LevelSpec(0, coarse_dt / N ** 2)
    mid = LevelSpec(1, coarse_dt / N, eta1, p["k1"])
    three = MethodConfig(as_levels([fine, mid, LevelSpec(2, coarse_dt, eta2, iterations)]),
                         0.0, prob.t_end, prob.initial_condition, averaging_enabled=True,
                         workers=workers)
    two = MethodConfig(as_levels([fine, mid]), 0.0, prob.t_end, prob.initial_condition,
                       averaging_enabled=True, workers=workers)
    return prob, three, two


def _component_error(state, exact, j):
    return float(abs(state[j] - exact[j]) / abs(exact[j]))


def _with_iterations(cfg: MethodConfig, k: int) -> MethodConfig:
    top = cfg.levels[0]
    levels = (LevelSpec(top.level, top.dt, top.eta, k, top.integrator),) + cfg.levels[1:]
    return MethodConfig(levels, cfg.t0, cfg.t_end, cfg.initial_condition,
                        cfg.averaging_enabled, cfg.quadrature_nodes, cfg.workers)


def _run_three_scale(p, workers):
    rows = []
    j = p["component"]
    for dT in p["dts"]:
        prob, three, two = three_scale_configs(dT, p, p["k2_max"], workers)
        exact = prob.exact(prob.t_end)
        spec = prob.spec()
        run2 = solve_multilevel(two, spec)
        e2 = _component_error(run2.final.final, exact, j)
        run = solve_multilevel(three, spec)
        for k in range(1, p["k2_max"] + 1):
            rows.append({"dt": dT, "k2": k,
                         "error": _component_error(run.iterations[k].final, exact, j),
                         "two_level_error": e2,
                         "serial_steps": serial_steps(_with_iterations(three, k)).total,
                         WALL: run.wall_time})
    return rows


def saturation_ok(errors, plateau, band=0.05) -> bool:
    """Each step shrinks the error or lands in the band; the last is in the band."""
    def inside(e):
        return abs(e / plateau - 1.0) <= band
    steps = all(b < a or inside(b) for a, b in zip(errors, errors[1:]))
    return steps and inside(errors[-1])


def _check_three_scale(rows, p):
    out = []
    for dT in p["dts"]:
        sub = [r for r in rows if r["dt"] == dT]
        if not sub:
            continue
        errors = [r["error"] for r in sub]
        plateau = sub[0]["two_level_error"]
        ok = saturation_ok(errors, plateau)
        detail = (f"errors {', '.join(f'{e:.3e}' for e in errors)}; "
                  f"two-level {plateau:.3e}")
        # Only the largest step is required to saturate within k2_max; smaller
        # steps converge more slowly and are reported for information.
        if dT == max(p["dts"]):
            out.append(CheckResult(f"dt={dT} saturates", ok, detail))
        else:
            decreased = errors[-1] < errors[0]
            out.append(CheckResult(f"dt={dT} improves", decreased, detail))
    return out


# --------------------------------------------------------------------------- #
# Swinging spring
# --------------------------------------------------------------------------- #


def spring_problem(p) -> SwingingSpringProblem:
    return SwingingSpringProblem(omega_R=p["omega_R"], omega_Z=p["omega_Z"], lam=p["lam"],
                                 initial_state=tuple(p["initial_state"]), t_end=p["t_end"])


def spring_configs(p, workers: int = 1):
    """Two-level and three-level configurations with ``k_max`` top iterations."""
    prob = spring_problem(p)
    dt0, dt1, dt2 = p["dts"]
    eta_top = p["eta_top"]
    u0 = prob.initial_condition
    two = MethodConfig(as_levels([LevelSpec(0, dt0), LevelSpec(1, dt2, eta_top, p["k_max"])]),
                       0.0, prob.t_end, u0, averaging_enabled=True, workers=workers)
    threes = {}
    for eta1 in p["eta1"]:
        levels = [LevelSpec(0, dt0), LevelSpec(1, dt1, eta1, p["k1"]),
                  LevelSpec(2, dt2, eta_top, p["k_max"])]
        threes[eta1] = MethodConfig(as_levels(levels), 0.0, prob.t_end, u0,
                                    averaging_enabled=True, workers=workers)
    return prob, two, threes


def spring_reference(prob: SwingingSpringProblem, dt_ref: float):
    """First component at the final time from a serial RK2 reference."""
    spec = prob.spec()
    ref = reference_solution(spec, prob.initial_condition,
                             np.array([0.0, prob.t_end]), dt_ref)
    return _spring_x1(prob, spec, ref.final)


def _spring_x1(prob, spec, w):
    return complex(prob.from_scaled(spec.to_physical(prob.t_end, w))[0])


def _run_spring(p, workers):
    prob, two, threes = spring_configs(p, workers)
    spec = prob.spec()
    x_ref = spring_reference(prob, p["dt_ref"])
    rows = []

    def emit(method, cfg, run):
        for k in range(1, p["k_max"] + 1):
            err = abs(_spring_x1(prob, spec, run.iterations[k].final) - x_ref)
            rows.append({"method": method, "iteration": k, "error": float(err),
                         "serial_steps": serial_steps(_with_iterations(cfg, k)).total,
                         WALL: run.wall_time})

    emit("2-level", two, solve_multilevel(two, spec))
    for eta1, cfg in threes.items():
        emit(f"eta1={eta1:g}", cfg, solve_multilevel(cfg, spec))
    return rows


def _check_spring(rows, p):
    out = []
    by = {}
    for r in rows:
        by.setdefault(r["method"], []).append(r["error"])
    two = by.get("2-level")
    largest = max(p["eta1"])
    match = f"eta1={largest:g}"
    if two and match in by:
        ratios = [a / b for a, b in zip(by[match], two)]
        ok = all(abs(q - 1.0) <= 0.2 for q in ratios)
        out.append(CheckResult(f"{match} tracks 2-level", ok,
                               "ratios " + ", ".join(f"{q:.3f}" for q in ratios)))
    order = sorted(p["eta1"])
    at2 = [by[f"eta1={e:g}"][1] for e in order if f"eta1={e:g}" in by and p["k_max"] >= 2]
    if len(at2) == len(order) and len(order) > 1:
        ok = all(a > b for a, b in zip(at2, at2[1:]))
        out.append(CheckResult("iteration 2 ordering", ok,
                               ", ".join(f"eta1={e:g}: {v:.3e}" for e, v in zip(order, at2))))
    return out


# --------------------------------------------------------------------------- #
# Rotating shallow water
# --------------------------------------------------------------------------- #


def rswe_config(prob: RsweProblem, coarsen: int, iterations, fine_dt: float = RSWE_FINE_DT,
                workers: int = 1) -> MethodConfig:
    """Strang on every level; each averaging window equals its level's step.

    ``iterations`` lists ``k_l`` for levels ``1 .. L-1``.
    """
    levels = [LevelSpec(0, fine_dt, None, 1, "strang")]
    for l, k in enumerate(iterations, start=1):
        dt = fine_dt * coarsen ** l
        levels.append(LevelSpec(l, dt, dt, k, "strang"))
    return MethodConfig(as_levels(levels), 0.0, prob.t_end, prob.initial_condition,
                        averaging_enabled=True, workers=workers)


def rswe_reference(prob: RsweProblem, fine_dt: float = RSWE_FINE_DT):
    spec = prob.spec()
    ref = reference_solution(spec, prob.initial_condition, np.array([0.0, prob.t_end]),
                             fine_dt, integrator="strang")
    return ref.final


def _run_rswe(p, workers):
    prob = RsweProblem(F=p["F"], t_end=p["t_end"], modes=p["modes"])
    spec = prob.spec()
    ref = rswe_reference(prob)
    cfg = rswe_config(prob, p["coarsen"], (p["k1"], p["k2_max"]), workers=workers)
    run = solve_multilevel(cfg, spec)
    rows = []
    for k in range(1, p["k2_max"] + 1):
        rows.append({"method": "3-level", "k": k,
                     "error": relative_linf(run.iterations[k].final, ref, prob.modes),
                     "serial_steps": serial_steps(_with_iterations(cfg, k)).total,
                     WALL: run.wall_time})
    if p["two_level_coarsen"]:
        cfg2 = rswe_config(prob, p["two_level_coarsen"], (p["two_level_k"],), workers=workers)
        run2 = solve_multilevel(cfg2, spec)
        rows.append({"method": "2-level", "k": p["two_level_k"],
                     "error": relative_linf(run2.final.final, ref, prob.modes),
                     "serial_steps": run2.serial_steps, WALL: run2.wall_time})
    return rows


def _rswe_full_size(p) -> bool:
    return p["modes"] == 128 and p["t_end"] >= 45


def _check_rswe(rows, p):
    three = [r["error"] for r in rows if r["method"] == "3-level"]
    out = []
    first = three[:5]
    if p["F"] == 1.0:
        ok = all(b < a for a, b in zip(first, first[1:]))
        out.append(CheckResult("monotone decrease", ok,
                               ", ".join(f"{e:.3e}" for e in first)))
    else:
        out.append(CheckResult("converges", three[-1] < three[0],
                               f"{three[0]:.3e} -> {three[-1]:.3e}"))
    out.append(CheckResult("finite", all(math.isfinite(e) for e in three), "all errors finite"))
    two = [r for r in rows if r["method"] == "2-level"]
    if two and _rswe_full_size(p) and p["F"] == 1.0:
        ratio = two[0]["error"] / RSWE_TWO_LEVEL_EXPECTED
        out.append(CheckResult("2-level N=40 k=2", 1 / 3 <= ratio <= 3,
                               f"error {two[0]['error']:.4e} (ratio {ratio:.3f})"))
    return out


# --------------------------------------------------------------------------- #
# Complexity tables
# --------------------------------------------------------------------------- #


def _spring_step_configs(k):
    u0 = np.zeros(6)
    two = MethodConfig(as_levels([LevelSpec(0, 0.05), LevelSpec(1, 5.0, 2.0, k)]),
                       0.0, 50.0, u0, averaging_enabled=True)
    three = MethodConfig(as_levels([LevelSpec(0, 0.05), LevelSpec(1, 0.5, 2.0, 2),
                                    LevelSpec(2, 5.0, 2.0, k)]),
                         0.0, 50.0, u0, averaging_enabled=True)
    return two, three


def _rswe_steps(coarsen, iterations, t_end):
    prob = RsweProblem(t_end=t_end, modes=2)
    return serial_steps(rswe_config(prob, coarsen, iterations)).total


def _run_complexity(p, workers):
    rows = []

    def row(table, param, value, expected=""):
        rows.append({"table": table, "param": param, "value": value, "expected": expected})

    for k in range(1, 6):
        two, three = _spring_step_configs(k)
        row("two_level", f"k={k}", serial_steps(two).total, 10 + k * 110)
        row("three_level", f"k2={k}", serial_steps(three).total, 10 + k * 60)
    row("rswe_two_level", "N=40 k=2 T=48", _rswe_steps(40, (2,), 48.0), 7280)
    for k in range(1, 6):
        row("rswe_three_level", f"N=30 k1=3 k2={k} T=45", _rswe_steps(30, (3, k), 45.0),
            310 * k + 100)
    X = p["fine_steps"]
    for L in range(2, p["max_levels"] + 1):
        opt = optimal_coarsening(L, X)
        row("n_opt", f"L={L} X={X}", opt.n_opt)
        row("f_L", f"L={L} N={opt.lower}", opt.cost_lower)
        row("f_L", f"L={L} N={opt.upper}", opt.cost_upper)
    for L, N, Xv, expected in ((1, 10, 1000, 1000), (2, 10, 1000, 210), (3, 10, 1000, 50)):
        row("v_cycle", f"L={L} N={N} X={Xv}", v_cycle_steps(L, N, Xv), expected)
    return rows


def _check_complexity(rows, p):
    out = []
    for r in rows:
        if r["expected"] == "":
            continue
        out.append(CheckResult(f"{r['table']} {r['param']}", r["value"] == r["expected"],
                               f"{r['value']} vs {r['expected']}"))
    return out


# --------------------------------------------------------------------------- #
# Registry
# --------------------------------------------------------------------------- #

_SPRING_DEFAULTS = {
    "omega_R": math.pi, "omega_Z": 2 * math.pi, "lam": 1.0,
    "initial_state": (0.1, 0.0, 0.1, 0.0, 0.1, 0.0), "t_end": 50.0,
    "dts": (0.05, 0.5, 5.0), "eta_top": 2.0, "eta1": (0.2, 0.75, 2.0),
    "k1": 2, "k_max": 5, "dt_ref": 0.001,
}


def _plan_decay(p):
    return _decay_config(max(p["levels"]), p)[1]


def _plan_oscillatory(p):
    r, L = _oscillatory_cells(p)[-1]
    return oscillatory_config(r, L, OSCILLATORY_FINE_DT.get(r, 0.1 / r))[1]


def _plan_three(p):
    return three_scale_configs(max(p["dts"]), p, p["k2_max"])[1]


def _plan_spring(p):
    return spring_configs(p)[2][max(p["eta1"])]


def _plan_rswe(p):
    prob = RsweProblem(F=p["F"], t_end=p["t_end"], modes=p["modes"])
    return rswe_config(prob, p["coarsen"], (p["k1"], p["k2_max"]))


REGISTRY = {e.id: e for e in (
    ExperimentDef(
        "decay_levels", "x' = -x on [0, 2]: error vs number of levels (no averaging)",
        ("levels", "error", "serial_steps"),
        {"levels": (2, 3, 4, 5, 6, 7, 8), "coarse_dt": 0.25, "coarsen": 10,
         "iterations": 1, "t_end": 2.0},
        _run_decay, _check_decay, plan=_plan_decay),
    ExperimentDef(
        "oscillatory_sweep", "w' = -exp(irt) w^2: averaged V-cycle error vs levels",
        ("r", "levels", "error", "serial_steps"),
        {"r": (100, 1000), "levels": ()},
        _run_oscillatory, _check_oscillatory,
        heavy={"r": (100, 1000, 10000)}, plan=_plan_oscillatory),
    ExperimentDef(
        "three_scale_iters", "three time scales: error vs top-level iterations",
        ("dt", "k2", "error", "two_level_error", "serial_steps"),
        {"dts": (0.3, 0.2, 0.1), "k2_max": 6, "k1": 3, "coarsen": 10,
         "eta": (0.1, 1.0), "component": 1},
        _run_three_scale, _check_three_scale,
        plot=("k2", "dt", "error"), series_label=lambda v: f"ΔT={v:g}", plan=_plan_three),
    ExperimentDef(
        "spring_windows", "swinging spring: error vs iterations for several windows",
        ("method", "iteration", "error", "serial_steps"),
        dict(_SPRING_DEFAULTS),
        _run_spring, _check_spring,
        plot=("iteration", "method", "error"), plan=_plan_spring),
    ExperimentDef(
        "rswe_f1", "RSWE, F = 1: three-level error vs top-level iterations",
        ("method", "k", "error", "serial_steps"),
        {"F": 1.0, "modes": 32, "t_end": 4.8, "coarsen": 20, "k1": 3, "k2_max": 5,
         "two_level_coarsen": 0, "two_level_k": 2},
        _run_rswe, _check_rswe,
        heavy={"modes": 128, "t_end": 48.0, "two_level_coarsen": 40},
        plot=("k", "method", "error"), plan=_plan_rswe),
    ExperimentDef(
        "rswe_f100", "RSWE, F = 1/100: three-level error vs top-level iterations",
        ("method", "k", "error", "serial_steps"),
        {"F": 0.01, "modes": 32, "t_end": 4.5, "coarsen": 30, "k1": 3, "k2_max": 5,
         "two_level_coarsen": 0, "two_level_k": 2},
        _run_rswe, _check_rswe,
        heavy={"modes": 128, "t_end": 45.0},
        plot=("k", "method", "error"), plan=_plan_rswe),
    ExperimentDef(
        "complexity_tables", "serial-step counts and optimal coarsening",
        ("table", "param", "value", "expected"),
        {"fine_steps": 96000, "max_levels": 4},
        _run_complexity, _check_complexity,
        plan=lambda p: _spring_step_configs(1)[1]),
)}

HEAVY_ONLY = {"rswe_f1", "rswe_f100"}


def get_experiment(exp_id: str) -> ExperimentDef:
    try:
        return REGISTRY[exp_id]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigurationError(f"unknown experiment {exp_id!r} (known: {known})") from None


def run_experiment(exp_id: str, overrides: dict | None = None, workers: int = 1,
                   heavy: bool = False):
    """Run a registered experiment and return ``(params, rows)``."""
    exp = get_experiment(exp_id)
    params = resolve_params(exp, overrides, heavy)
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    start = time.perf_counter()
    rows = exp.run(params, workers)
    if exp.columns[-1] != WALL and rows and WALL not in rows[0]:
        total = time.perf_counter() - start
        for r in rows:
            r[WALL] = total
    return params, rows


def check_experiment(exp_id: str, overrides: dict | None = None, workers: int = 1,
                     heavy: bool = False):
    """Run and compare against expectations; returns ``(rows, results)``."""
    exp = get_experiment(exp_id)
    params, rows = run_experiment(exp_id, overrides, workers, heavy)
    return rows, exp.check(rows, params)


# --------------------------------------------------------------------------- #
# CSV
# --------------------------------------------------------------------------- #


def format_value(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def rows_to_csv(columns, rows, timed: bool = True) -> str:
    """CSV text with a header row; floats carry 17 significant digits."""
    cols = list(columns) + ([WALL] if timed else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow([format_value(r.get(c, "")) for c in cols])
    return buf.getvalue()


def plot_data(exp: ExperimentDef, rows) -> list:
    """Long-format ``(x, series, y)`` records for error-vs-iteration plots."""
    if exp.plot is None:
        raise ConfigurationError(f"{exp.id} has no plot data")
    x, series, y = exp.plot
    return [{"x": r[x], "series": exp.series_label(r[series]), "y": r[y]} for r in rows]


def plot_csv(exp: ExperimentDef, rows) -> str:
    return rows_to_csv(("x", "series", "y"), plot_data(exp, rows), timed=False)
