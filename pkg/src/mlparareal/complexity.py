"""Serial-step accounting, optimal coarsening and a-priori error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ConfigurationError, MethodConfig, step_count


@dataclass(frozen=True)
class StepCount:
    """Serial steps on the critical path, split by level (index 0 = finest).

    ``total_steps`` counts every time step on every level, serial or not;
    each is one evaluation of that level's right-hand side in the usual
    complexity accounting.
    """

    per_level: tuple
    total: int
    total_steps: int


def _slices(cfg: MethodConfig):
    """Number of level-``l`` slices per run of level ``l`` (top: whole interval)."""
    L = cfg.num_levels
    n = [0] * L
    n[L - 1] = step_count(cfg.t0, cfg.t_end, cfg.level(L - 1).dt)
    for l in range(L - 2, -1, -1):
        n[l] = step_count(0.0, cfg.level(l + 1).dt, cfg.level(l).dt)
    return n


def serial_steps(cfg: MethodConfig) -> StepCount:
    """Serial steps of the recursive solver.

    A Parareal stage on level ``l`` costs ``n_l + k_l (P + n_l)`` where
    ``P`` is the serial cost of its fine propagator; a stage with a single
    slice costs ``P`` only.
    """
    L = cfg.num_levels
    n = _slices(cfg)
    if L == 1:
        return StepCount((n[0],), n[0], n[0])
    per_level = [0] * L
    weight = 1  # how many times the stage at this level lies on the critical path
    runs = 1  # how many times the stage at this level is executed in total
    total_steps = 0
    for l in range(L - 1, 0, -1):
        k = cfg.level(l).iterations
        if n[l] == 1:
            # Degenerate stage: only its fine propagator runs, once.
            continue
        per_level[l] = weight * n[l] * (1 + k)
        total_steps += runs * n[l] * (1 + k)
        weight *= k
        runs *= k * n[l]
    per_level[0] = weight * n[0]
    total_steps += runs * n[0]
    return StepCount(tuple(per_level), sum(per_level), total_steps)


def v_cycle_cost(L: int, N: float, X: float) -> float:
    """``f_L(N) = 2 (L - 2) N + N + 2 X / N^(L - 1)`` for real ``N`` (``f_1 = X``)."""
    if L < 1:
        raise ConfigurationError("need at least one level")
    if L == 1:
        return float(X)
    return 2.0 * (L - 2) * N + N + 2.0 * X / N ** (L - 1)


def v_cycle_steps(L: int, N: int, X: int) -> int:
    """Serial steps of a V-cycle with coarsening ``N`` and ``X`` fine steps in total.

    Raises:
        ConfigurationError: if ``X`` is not divisible by ``N^(L-1)``.
    """
    if L < 1:
        raise ConfigurationError("need at least one level")
    if L == 1:
        return int(X)
    if N < 2 or X % N ** (L - 1):
        raise ConfigurationError(f"X = {X} is not divisible by N^(L-1) = {N ** (L - 1)}")
    return 2 * (L - 2) * N + N + 2 * X // N ** (L - 1)


@dataclass(frozen=True)
class OptimalCoarsening:
    n_opt: float
    lower: int
    upper: int
    cost_lower: float
    cost_upper: float


def optimal_coarsening(L: int, X: float) -> OptimalCoarsening:
    """Minimizer ``N_opt = (X + X / (2L - 3))^(1/L)`` of ``f_L`` and its integer neighbours."""
    if L < 2:
        raise ConfigurationError("optimal coarsening needs at least two levels")
    if not X > 0:
        raise ConfigurationError("X must be positive")
    n_opt = (X + X / (2 * L - 3)) ** (1.0 / L)
    lo = max(1, math.floor(n_opt))
    hi = max(lo + 1, math.ceil(n_opt))
    return OptimalCoarsening(n_opt, lo, hi, v_cycle_cost(L, lo, X), v_cycle_cost(L, hi, X))


# --------------------------------------------------------------------------- #
# Error bounds
# --------------------------------------------------------------------------- #


def _unit_kappa(epsilon, eta, omega):
    return 1.0


def _per_level(value, L: int, name: str):
    if np.ndim(value) == 0:
        return (float(value),) * L
    value = tuple(float(v) for v in value)
    if len(value) != L:
        raise ConfigurationError(f"{name} needs {L} entries, got {len(value)}")
    return value


@dataclass(frozen=True)
class BoundParams:
    """Constants of the multi-level error bound.

    Per-level sequences are indexed by level with 0 the finest; scalars apply
    to every level.  ``dts[l]`` is the step on level ``l``; ``iterations[l]``
    is ``k_l`` (entry 0 unused).  ``C1`` is the local truncation constant,
    ``C2`` the Lipschitz constant, ``C3`` the constant of the coarse error,
    ``c`` the fine-solver constant and ``orders[l]`` the order ``p_l``.

    The averaging terms use ``C_avg``, the windows ``etas``, ``epsilon``, a
    caller-supplied ``kappa(epsilon, eta, omega)`` (default 1), a frequency
    floor ``omega0`` and the scale factors ``M0_norm`` and ``M1_norm``.
    """

    dts: Sequence[float]
    iterations: Sequence[int]
    T: float
    C1: Sequence[float] | float = 1.0
    C2: Sequence[float] | float = 0.0
    C3: Sequence[float] | float = 1.0
    c: float = 1.0
    orders: Sequence[int] | int = 2
    etas: Sequence[float] | None = None
    epsilon: float = 1.0
    kappa: Callable = field(default=_unit_kappa, repr=False)
    omega0: float = 1.0
    C_avg: float = 1.0
    M0_norm: float = 1.0
    M1_norm: float = 1.0

    def __post_init__(self):
        L = len(self.dts)
        if L < 2:
            raise ConfigurationError("bounds need at least two levels")
        if len(self.iterations) != L:
            raise ConfigurationError("iterations needs one entry per level")
        for name in ("C1", "C2", "C3", "orders"):
            object.__setattr__(self, name, _per_level(getattr(self, name), L, name))
        if self.etas is not None:
            object.__setattr__(self, "etas", _per_level(self.etas, L, "etas"))
        if min(self.dts) <= 0 or self.T <= 0:
            raise ConfigurationError("steps and horizon must be positive")
        if min(self.C1 + self.C2 + self.C3 + (self.c,)) < 0:
            raise ConfigurationError("constants must be non-negative")

    @property
    def num_levels(self) -> int:
        return len(self.dts)

    def slices(self):
        """Slices per Parareal stage on each level (top: the whole horizon)."""
        L = self.num_levels
        n = [0] * L
        n[L - 1] = round(self.T / self.dts[L - 1])
        for l in range(L - 1):
            n[l] = round(self.dts[l + 1] / self.dts[l])
        return n


@dataclass(frozen=True)
class BoundReport:
    """Itemized bound: ``total = sum(terms) + fine_term``.

    ``terms[l]`` is ``E_l * prod_{j>l} A_j`` (entry 0 unused and zero).
    """

    total: float
    terms: tuple
    fine_term: float
    E: tuple
    A: tuple
    delta0: float


def _max_over_frequencies(p: BoundParams, eta: float, points: int = 400) -> float:
    omegas = p.omega0 * np.geomspace(1.0, 1e8, points)
    return max(abs(p.epsilon / w) * float(p.kappa(p.epsilon, eta, w)) for w in omegas)


def multilevel_bound(p: BoundParams, averaged: bool = False) -> BoundReport:
    """Evaluate ``sum_l E_l prod_{j>l} A_j + delta0 prod_l A_l`` on the top level.

    ``alpha_{0N,l}`` is taken at its upper end ``alpha_l``.  With
    ``averaged`` the contraction terms gain the averaging error.
    """
    L = p.num_levels
    n = p.slices()
    alpha, gamma, beta = [0.0] * L, [0.0] * L, [1.0] * L
    for l in range(1, L):
        dt, order = p.dts[l], p.orders[l]
        beta[l] = 1.0 + p.C2[l] * dt
        if averaged:
            if p.etas is None:
                raise ConfigurationError("averaged bound needs etas")
            eta = p.etas[l]
            osc = p.C_avg * dt ** (order + 1) * _max_over_frequencies(p, eta)
            alpha[l] = p.C_avg * eta * p.epsilon + osc
            gamma[l] = p.C_avg * eta * p.epsilon * p.M1_norm + osc * p.M0_norm
        else:
            alpha[l] = p.C1[l] * dt ** (order + 1)
            gamma[l] = p.C3[l] * dt ** (order + 1)
    E, A = [0.0] * L, [1.0] * L
    for l in range(1, L):
        k, nl = p.iterations[l], n[l]
        if nl >= k + 1:
            E[l] = math.comb(nl, k + 1) * gamma[l] * alpha[l] ** k * beta[l] ** (nl - k - 1)
        A[l] = nl * beta[l] ** (nl - 1) * (1.0 + alpha[l]) ** (nl - 1)
    delta0 = p.c * p.dts[1] * p.dts[0] ** p.orders[0]
    terms = [0.0] * L
    for l in range(1, L):
        terms[l] = E[l] * math.prod(A[l + 1:])
    fine_term = delta0 * math.prod(A[1:])
    return BoundReport(sum(terms) + fine_term, tuple(terms), fine_term,
                       tuple(E), tuple(A), delta0)


def corollary_bound(p: BoundParams) -> float:
    """Closed-form bound for a uniform coarsening ``N`` and uniform ``k``.

    ``dT`` below is the coarsest step; the constants are maxima over levels
    and ``p_c`` the minimum coarse order::

        c T dt0^p0 exp(C2 T (1 - N^-L)/(1 - 1/N)
                       + C1 T dT^pc (1 - N^-L(pc+1))/(1 - N^-(pc+1)))
        + exp(C2 T/(1 - 1/N) + C1 T dT^pc/(1 - N^-(pc+1)))
          C3 C1^k binom(N, k+1) dT^(k pc + k + pc + 1) / (1 - N^-(k pc + k + pc))

    The top level is split into ``N`` slices as well, so ``T = N dT``.

    Raises:
        ConfigurationError: if the coarsening factor or ``k`` vary by level, or
            the horizon is not ``N`` coarsest steps.
    """
    L = p.num_levels
    ratios = [p.dts[l + 1] / p.dts[l] for l in range(L - 1)]
    N = round(ratios[0])
    if any(abs(r - N) > 1e-9 * N for r in ratios) or N < 2:
        raise ConfigurationError("corollary needs one integer coarsening factor")
    if abs(p.T / p.dts[L - 1] - N) > 1e-9 * N:
        raise ConfigurationError("corollary needs T equal to N coarsest steps")
    ks = set(p.iterations[1:])
    if len(ks) != 1:
        raise ConfigurationError("corollary needs the same iteration count on every level")
    k = ks.pop()
    C1, C2, C3 = max(p.C1[1:]), max(p.C2[1:]), max(p.C3[1:])
    pc, p0 = min(p.orders[1:]), p.orders[0]
    T, dT, dt0 = p.T, p.dts[L - 1], p.dts[0]
    q = 1.0 / N ** (pc + 1)
    fine = p.c * T * dt0 ** p0 * math.exp(
        C2 * T * (1 - N ** -L) / (1 - 1 / N) + C1 * T * dT ** pc * (1 - q ** L) / (1 - q))
    m = k * pc + k + pc
    coarse = (math.exp(C2 * T / (1 - 1 / N) + C1 * T * dT ** pc / (1 - q))
              * C3 * C1 ** k * math.comb(N, k + 1) * dT ** (m + 1) / (1 - N ** -m))
    return fine + coarse
