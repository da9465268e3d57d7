"""Two-level and recursive multi-level Parareal, with optional averaging.

Level ``L-1`` is the coarsest.  The propagator that advances one slice of
level ``l`` is either a plain fixed-step integration (``l - 1 == 0``) or a
complete Parareal solve on levels ``l-1, ..., 0`` over that slice.

All slices that a level has to treat at the same logical moment are advanced
together as one numpy batch, so the number of Python-level steps equals the
serial step count.  Batches are cut into chunks whose boundaries depend only
on the batch itself; worker threads pick up chunks of the innermost fine
sweep.  Every row is computed independently, which keeps results bitwise
identical for any worker count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .averaging import AveragedRhs
from .core import (
    ConfigurationError,
    MethodConfig,
    ProblemSpec,
    Trajectory,
    modulation_rhs,
    step_count,
    uniform_grid,
    validate_config,
)
from .integrators import SplitRhs, rk2_step, strang_step

# Complex entries per chunk (rows * dim); small enough to stay in cache.
CHUNK_ENTRIES = 1 << 14


class SliceError(RuntimeError):
    """A propagator failed on one slice of a fine sweep."""

    def __init__(self, index: int, cause: BaseException | str):
        super().__init__(f"fine propagation failed on slice {index}: {cause!r}")
        self.index = index


@dataclass(frozen=True)
class PropagatorHandle:
    """Advances states across exactly one slice of length ``slice_length``.

    ``fn(t0s, U)`` takes slice start times of shape ``(B,)`` and states of
    shape ``(B, dim)`` and returns ``(states, serial_steps)``.  Calling the
    handle on a single state returns the advanced state only.
    """

    fn: Callable[[np.ndarray, np.ndarray], tuple]
    level: int
    dt: float
    slice_length: float

    @classmethod
    def from_function(cls, f, level: int, dt: float, slice_length: float, steps: int = 1):
        """Wrap a single-state map ``f(t0, u0) -> u1`` that costs ``steps`` serial steps."""

        def fn(t0s, U):
            return np.stack([np.asarray(f(float(t), u), dtype=complex)
                             for t, u in zip(t0s, U)]), steps

        return cls(fn, level, dt, slice_length)

    def apply(self, t0s, U):
        """Batched propagation; returns ``(states, serial_steps)``."""
        return self.fn(np.asarray(t0s, dtype=float), np.asarray(U, dtype=complex))

    def propagate(self, t0: float, u0):
        u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
        U, steps = self.apply(np.array([t0], dtype=float), u0[None, :])
        return U[0], steps

    def __call__(self, t0: float, u0):
        return self.propagate(t0, u0)[0]


@dataclass
class PararealRun:
    """Iterates of a Parareal solve on the coarsest grid.

    ``iterations[0]`` is the coarse initial guess, ``iterations[k]`` the
    result after ``k`` corrections.
    """

    iterations: list
    serial_steps: int
    slices_solved: int
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def final(self) -> Trajectory:
        return self.iterations[-1]

    @property
    def count(self) -> int:
        return len(self.iterations) - 1


@dataclass(frozen=True)
class CycleStep:
    level: int
    action: str  # "guess", "fine" or "correct"
    parallel: bool

    def __str__(self):
        suffix = " (parallel)" if self.parallel else ""
        return f"{self.action}@{self.level}{suffix}"


# --------------------------------------------------------------------------- #
# Batched building blocks.  Times have shape (n + 1, B), states (n + 1, B, dim).
# --------------------------------------------------------------------------- #


def _chunks(rows: int, dim: int):
    size = max(1, CHUNK_ENTRIES // max(dim, 1))
    return [(lo, min(lo + size, rows)) for lo in range(0, rows, size)]


def _slice_times(t0s, span: float, n: int):
    return t0s[None, :] + span * (np.arange(n + 1) / n)[:, None]


def _sweep(G, times, U0):
    n = times.shape[0] - 1
    states = np.empty((n + 1,) + U0.shape, dtype=complex)
    states[0] = U0
    steps = 0
    for i in range(n):
        states[i + 1], s = G.apply(times[i], states[i])
        steps += s
    return states, steps


def _correct_batch(G, fine, times, U0, gprev):
    n = times.shape[0] - 1
    states = np.empty((n + 1,) + U0.shape, dtype=complex)
    states[0] = U0
    gnew = np.empty_like(fine)
    steps = 0
    for i in range(n):
        gnew[i], s = G.apply(times[i], states[i])
        steps += s
        # gnew - gprev vanishes exactly on converged nodes.
        np.subtract(gnew[i], gprev[i], out=states[i + 1])
        states[i + 1] += fine[i]
    return states, gnew, steps


def _run_chunk(P, t0s, U, offset):
    try:
        out, steps = P.apply(t0s, U)
    except SliceError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with slice index
        raise SliceError(offset + _first_failure(P, t0s, U), exc) from exc
    bad = ~np.all(np.isfinite(out), axis=-1)
    if np.any(bad):
        raise SliceError(offset + int(np.argmax(bad)), "non-finite state")
    return out, steps


def _first_failure(P, t0s, U):
    for i in range(len(t0s)):
        try:
            P.apply(t0s[i:i + 1], U[i:i + 1])
        except Exception:  # noqa: BLE001
            return i
    return 0


def _fine_batch(P, t0s, U, workers=1, executor=None):
    """Apply ``P`` to rows of ``U``; chunks fan out to threads for level-0 sweeps."""
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    spans = _chunks(len(t0s), U.shape[-1])
    run = lambda b: _run_chunk(P, t0s[b[0]:b[1]], U[b[0]:b[1]], b[0])  # noqa: E731
    if workers > 1 and P.level == 0 and len(spans) > 1:
        if executor is None:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, spans))
        else:
            parts = list(executor.map(run, spans))
    else:
        parts = [run(b) for b in spans]
    if not parts:
        return np.empty_like(U), 0
    out = parts[0][0] if len(parts) == 1 else np.concatenate([p[0] for p in parts])
    return out, max(p[1] for p in parts)


# --------------------------------------------------------------------------- #
# Single-trajectory operations
# --------------------------------------------------------------------------- #


def coarse_sweep(G: PropagatorHandle, t0: float, t_end: float, u0) -> Trajectory:
    """Serial application of ``G`` over every slice of ``[t0, t_end]``."""
    n = step_count(t0, t_end, G.slice_length)
    times = uniform_grid(t0, t_end, n)
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
    states, _ = _sweep(G, times[:, None], u0[None, :])
    return Trajectory(times, states[:, 0])


def parareal_correct(G: PropagatorHandle, fine_results, prev: Trajectory, u0,
                     coarse_prev=None) -> Trajectory:
    """One Parareal update ``U[n+1] = G(U[n]) + F[n] - G(prev[n])``.

    ``coarse_prev[n]`` may hold ``G(prev[n])`` from the previous sweep; it is
    recomputed when omitted.
    """
    n = len(prev) - 1
    if len(fine_results) != n:
        raise RuntimeError(f"{len(fine_results)} fine results for a trajectory with {n} slices")
    times = prev.times[:, None]
    if coarse_prev is None:
        coarse_prev, _ = G.apply(prev.times[:-1], prev.states[:-1])
    fine = np.asarray(fine_results, dtype=complex).reshape(n, 1, -1)
    gprev = np.asarray(coarse_prev, dtype=complex).reshape(n, 1, -1)
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
    states, _, _ = _correct_batch(G, fine, times, u0[None, :], gprev)
    return Trajectory(prev.times, states[:, 0])


def fine_sweep_parallel(P: PropagatorHandle, trajectory: Trajectory, workers: int = 1,
                        executor: ThreadPoolExecutor | None = None) -> list:
    """Apply ``P`` to every slice start of ``trajectory``.

    Slices are independent, so the result does not depend on ``workers``.

    Raises:
        SliceError: if propagation fails or produces non-finite values on a
            slice; ``index`` names the slice.
    """
    out, _ = _fine_batch(P, trajectory.times[:-1], trajectory.states[:-1], workers, executor)
    return list(out)


# --------------------------------------------------------------------------- #
# Level hierarchy
# --------------------------------------------------------------------------- #


def _diffusion_flow(problem: ProblemSpec):
    d = problem.diffusion_symbol
    if d is None:
        return lambda t0, t1, y: y

    def flow(t0, t1, y):
        dt = np.asarray(t1, dtype=float) - np.asarray(t0, dtype=float)
        return np.exp(d * dt[..., None]) * y

    return flow


class Hierarchy:
    """Per-level right-hand sides, steppers and propagators for one solve."""

    def __init__(self, cfg: MethodConfig, problem: ProblemSpec, executor=None):
        self.cfg = cfg
        self.problem = problem
        self.executor = executor
        self.L = cfg.num_levels
        self._steppers = [self._make_stepper(l) for l in range(self.L)]
        self._coarse = {}
        self._fine = {}

    def rhs(self, l: int, include_diffusion: bool = True):
        """Right-hand side solved on level ``l`` (averaged for ``l >= 1`` when enabled)."""
        spec = self.cfg.level(l)
        if l > 0 and self.cfg.averaging_enabled:
            return AveragedRhs(self.problem, spec.eta, self.cfg.quadrature_nodes,
                               include_diffusion=include_diffusion)
        problem = self.problem
        return lambda t, w: modulation_rhs(problem, t, w, include_diffusion)

    def _make_stepper(self, l: int):
        spec = self.cfg.level(l)
        if spec.integrator == "strang":
            split = SplitRhs(_diffusion_flow(self.problem), self.rhs(l, include_diffusion=False))
            return lambda t, y, h: strang_step(split, t, y, h)
        f = self.rhs(l)
        return lambda t, y, h: rk2_step(f, t, y, h)

    def stepper(self, l: int):
        """``step(t, y, h)`` for level ``l``; ``t`` and ``y`` may be batched."""
        return self._steppers[l]

    def coarse(self, l: int) -> PropagatorHandle:
        """``G^l``: one step of size ``dt_l``."""
        if l not in self._coarse:
            step, dt = self._steppers[l], self.cfg.level(l).dt
            self._coarse[l] = PropagatorHandle(lambda t0s, U: (step(t0s, U, dt), 1), l, dt, dt)
        return self._coarse[l]

    def fine(self, l: int) -> PropagatorHandle:
        """``P^{l-1}``: the propagator across one slice of level ``l``."""
        if l in self._fine:
            return self._fine[l]
        span = self.cfg.level(l).dt
        sub = l - 1
        if sub == 0:
            step, dt = self._steppers[0], self.cfg.level(0).dt
            m = step_count(0.0, span, dt)
            h = span / m

            def fn(t0s, U):
                for i in range(m):
                    U = step(t0s + i * h, U, h)
                return U, m
        else:
            def fn(t0s, U):
                return self._parareal_batch(sub, t0s, span, U)

        handle = PropagatorHandle(fn, sub, self.cfg.level(sub).dt, span)
        self._fine[l] = handle
        return handle

    def _parareal_batch(self, l, t0s, span, U0, k=None, history=None):
        """Parareal on level ``l`` over ``[t0s, t0s + span]`` for every row of ``U0``."""
        k = self.cfg.level(l).iterations if k is None else k
        G, P = self.coarse(l), self.fine(l)
        n = step_count(0.0, span, G.slice_length)
        if n == 1:
            # A single slice: the fine propagator alone is the answer.
            U1, steps = _fine_batch(P, t0s, U0, self.cfg.workers, self.executor)
            if history is not None:
                history.extend([np.stack([U0, U1])] * (k + 1))
            return U1, steps
        if history is None and len(t0s) > 1:
            # Rows are independent; treat them in chunks to bound memory.
            spans = _chunks(len(t0s), U0.shape[-1])
            if len(spans) > 1:
                parts = [self._parareal_batch(l, t0s[a:b], span, U0[a:b], k) for a, b in spans]
                return np.concatenate([p[0] for p in parts]), parts[0][1]
        times = _slice_times(t0s, span, n)
        states, steps = _sweep(G, times, U0)
        gprev = states[1:]
        if history is not None:
            history.append(states)
        starts = times[:-1].reshape(-1)
        shape = gprev.shape
        for _ in range(k):
            fine, fsteps = _fine_batch(P, starts, states[:-1].reshape(-1, shape[-1]),
                                       self.cfg.workers, self.executor)
            states, gprev, csteps = _correct_batch(G, fine.reshape(shape), times, U0, gprev)
            steps += fsteps + csteps
            if history is not None:
                history.append(states)
        return states[-1], steps

    def parareal(self, l: int, t0: float, t1: float, u0, keep_history: bool = True,
                 iterations: int | None = None) -> PararealRun:
        """Parareal on level ``l`` over ``[t0, t1]`` with ``k_l`` corrections."""
        k = self.cfg.level(l).iterations if iterations is None else iterations
        n = step_count(t0, t1, self.cfg.level(l).dt)
        u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
        history = []
        _, steps = self._parareal_batch(l, np.array([t0], dtype=float), t1 - t0,
                                        u0[None, :], k, history)
        times = uniform_grid(t0, t1, n)
        trajs = [Trajectory(times, s[:, 0]) for s in history]
        if not keep_history:
            trajs = trajs[-1:]
        return PararealRun(trajs, steps, n * k if n > 1 else 1)


# --------------------------------------------------------------------------- #
# Drivers
# --------------------------------------------------------------------------- #


def _check(cfg: MethodConfig, problem: ProblemSpec):
    violations = validate_config(cfg, problem)
    if violations:
        raise ConfigurationError("; ".join(violations))


def solve_multilevel(cfg: MethodConfig, problem: ProblemSpec) -> PararealRun:
    """Multi-level Parareal over ``[cfg.t0, cfg.t_end]``.

    Raises:
        ConfigurationError: if ``cfg`` violates any constraint or has fewer
            than two levels.
    """
    _check(cfg, problem)
    if cfg.num_levels < 2:
        raise ConfigurationError("Parareal needs at least two levels")
    start = time.perf_counter()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            run = Hierarchy(cfg, problem, pool).parareal(
                cfg.num_levels - 1, cfg.t0, cfg.t_end, cfg.initial_condition)
    else:
        run = Hierarchy(cfg, problem).parareal(
            cfg.num_levels - 1, cfg.t0, cfg.t_end, cfg.initial_condition)
    run.wall_time = time.perf_counter() - start
    return run


def solve_two_level(cfg: MethodConfig, problem: ProblemSpec) -> PararealRun:
    """Classical (optionally averaged) two-level Parareal."""
    if cfg.num_levels != 2:
        raise ConfigurationError(f"two-level solve needs 2 levels, got {cfg.num_levels}")
    return solve_multilevel(cfg, problem)


def cycle_plan(cfg: MethodConfig) -> list:
    """Logical order of guesses, fine sweeps and corrections for ``cfg``.

    Steps nested below the coarsest level run once per enclosing slice, all
    slices concurrently; they are marked ``parallel``.
    """
    top = cfg.num_levels - 1

    def below(l):
        if l == 0:
            return [CycleStep(0, "fine", True)]
        steps = [CycleStep(l, "guess", True)]
        for _ in range(cfg.level(l).iterations):
            steps += below(l - 1) + [CycleStep(l, "correct", True)]
        return steps

    plan = [CycleStep(top, "guess", False)]
    for _ in range(cfg.level(top).iterations):
        plan += below(top - 1) + [CycleStep(top, "correct", False)]
    return plan
