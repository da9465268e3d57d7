"""Fixed-step serial time steppers: explicit midpoint and Strang splitting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import Trajectory, step_count, uniform_grid

RhsFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SplitRhs:
    """Right-hand side split into an exactly solvable part and a remainder.

    ``linear_flow(t0, t1, y)`` propagates the exact part from ``t0`` to ``t1``;
    ``nonlinear_rhs(t, y)`` is integrated with the explicit midpoint rule.
    """

    linear_flow: Callable[[float, float, np.ndarray], np.ndarray]
    nonlinear_rhs: RhsFn


def rk2_step(f: RhsFn, t: float, y, h: float):
    """One explicit midpoint step."""
    k = _owned(f(t, y), y)
    k *= 0.5 * h
    k += y
    k = _owned(f(t + 0.5 * h, k), y)
    k *= h
    k += y
    return k


def _owned(k, y):
    # The stages are updated in place; never write into the caller's state.
    k = np.asarray(k)
    if k.dtype != complex or k.shape != np.shape(y) or np.may_share_memory(k, y):
        return np.array(np.broadcast_to(k, np.broadcast_shapes(k.shape, np.shape(y))),
                        dtype=complex)
    return k


def strang_step(f: SplitRhs, t: float, y, h: float):
    """One Strang step, exact half-flows outside a midpoint step of the remainder."""
    half = t + 0.5 * h
    y = f.linear_flow(t, half, y)
    y = rk2_step(f.nonlinear_rhs, t, y, h)
    return f.linear_flow(half, t + h, y)


def advance(stepper, f, t0: float, t1: float, h: float, y0):
    """Integrate from ``t0`` to ``t1`` and return only the final state.

    Returns ``(y, steps)``.
    """
    n = step_count(t0, t1, h)
    times = uniform_grid(t0, t1, n)
    y = np.asarray(y0, dtype=complex)
    for i in range(n):
        y = stepper(f, times[i], y, times[i + 1] - times[i])
    return y, n


def integrate(stepper, f, t0: float, t1: float, h: float, y0) -> Trajectory:
    """Integrate with a fixed step and keep every state.

    Raises:
        ConfigurationError: if ``(t1 - t0) / h`` is not an integer.
    """
    n = step_count(t0, t1, h)
    times = uniform_grid(t0, t1, n)
    y = np.asarray(y0, dtype=complex)
    states = np.empty((n + 1,) + np.shape(np.atleast_1d(y)), dtype=complex)
    states[0] = y
    for i in range(n):
        y = stepper(f, times[i], y, times[i + 1] - times[i])
        states[i + 1] = y
    return Trajectory(times, states)
