"""Smooth compactly supported averaging kernel and averaged right-hand sides.

The averaged modulation right-hand side over a window ``eta`` is

    (1/eta) * int_{-eta/2}^{eta/2} rho(s/eta) F(t + s, w) ds

with ``F`` the modulation right-hand side and ``w`` held fixed in ``s``.  The
integral is discretized by Gauss-Legendre quadrature on the window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from .core import ConfigurationError, ProblemSpec, modulation_rhs

MIN_NODES = 16
DEFAULT_NORMALIZATION_NODES = 64
# Node-count rule, M = BASE + SLOPE * (frequency * eta): keeps the quadrature of
# rho(s) exp(i K s) on (-1/2, 1/2) accurate to ~1e-12 for K up to a few 1e3.
AUTO_NODES_BASE = 48
AUTO_NODES_SLOPE = 0.3
# Upper bound on nodes * dim * batch elements evaluated at once.
CHUNK_ELEMENTS = 1 << 21


def _bump(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    inside = np.abs(s) < 0.5
    si = s[inside]
    out[inside] = np.exp(1.0 / ((si - 0.5) * (si + 0.5)))
    return out


@lru_cache(maxsize=None)
def _gauss_legendre_half(M: int):
    """Gauss-Legendre nodes and weights on (-1/2, 1/2)."""
    x, w = roots_legendre(M)
    return 0.5 * x, 0.5 * w


def normalize_kernel(M: int = DEFAULT_NORMALIZATION_NODES) -> float:
    """Integral of the unnormalized bump over (-1/2, 1/2) with an M-node rule."""
    if M < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} quadrature nodes, got {M}")
    s, w = _gauss_legendre_half(M)
    return float(np.sum(w * _bump(s)))


RHO0 = normalize_kernel(128)


def kernel_eval(s, rho0: float = RHO0):
    """Normalized kernel ``rho(s)``; zero outside the open interval (-1/2, 1/2)."""
    out = _bump(s) / rho0
    return out if np.ndim(s) else float(out)


@dataclass(frozen=True)
class Kernel:
    rho0: float = RHO0
    eval: Callable = field(default=kernel_eval, repr=False)

    def __call__(self, s):
        return self.eval(s, self.rho0)


def auto_nodes(frequency: float, eta: float, minimum: int = 32) -> int:
    """Quadrature node count for a window ``eta`` and angular frequency bound."""
    k = abs(frequency) * eta
    return max(minimum, int(math.ceil(AUTO_NODES_BASE + AUTO_NODES_SLOPE * k)))


def window_rule(eta: float, M: int):
    """Nodes ``s_m`` in (-eta/2, eta/2) and weights with ``rho(s/eta)/eta`` folded in.

    The weights are rescaled to sum to one, so averaging a constant is exact.
    """
    if M < MIN_NODES:
        raise ConfigurationError(f"need at least {MIN_NODES} quadrature nodes, got {M}")
    if not eta > 0:
        raise ConfigurationError("averaging window must be positive")
    x, w = _gauss_legendre_half(M)
    weights = w * _bump(x)
    weights = weights / weights.sum()
    return eta * x, weights


def damping_factor(r: float, eta: float, M: int | None = None) -> complex:
    """``(1/eta) int rho(s/eta) exp(i r s) ds`` by quadrature."""
    if M is None:
        M = auto_nodes(r, eta)
    nodes, weights = window_rule(eta, M)
    return complex(np.sum(weights * np.exp(1j * r * nodes)))


class AveragedRhs:
    """Windowed average of the modulation right-hand side of ``problem``.

    Instances are immutable after construction and safe to call from several
    threads.
    """

    def __init__(self, problem: ProblemSpec, eta: float, nodes: int | None = None,
                 include_diffusion: bool = True):
        if nodes is None:
            nodes = auto_nodes(problem.frequency_bound, eta)
        self.problem = problem
        self.eta = float(eta)
        self.nodes = int(nodes)
        self.include_diffusion = include_diffusion
        self.offsets, self.weights = window_rule(self.eta, self.nodes)
        op = problem.linear_operator
        self.eigen_frequencies = op.frequencies()
        self.node_phases = np.exp((1j / problem.epsilon) * self.offsets[:, None]
                                  * self.eigen_frequencies)

    def __call__(self, t: float, w):
        return averaged_rhs_eval(self, t, w)

    def __repr__(self):
        return f"AveragedRhs(eta={self.eta}, nodes={self.nodes})"


def averaged_rhs_eval(a: AveragedRhs, t, w):
    """Evaluate the averaged right-hand side at ``(t, w)``.

    Batched like ``modulation_rhs``: ``t`` of shape ``S`` and ``w`` of shape
    ``S + (dim,)``.  Large batches are processed in chunks to bound memory.

    The flow is applied in the eigenbasis of ``L``, where
    ``exp((t + s) L / eps)`` factors into a per-row and a per-node phase, so
    the basis change happens once per row instead of once per node.  Node
    contributions are accumulated in a fixed order, so each row's result does
    not depend on how the batch is split.
    """
    problem = a.problem
    w = np.asarray(w, dtype=complex)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(t.shape + (w.shape[-1],), w.shape)
    dim = shape[-1]
    wf = np.broadcast_to(w, shape).reshape(-1, dim)
    tf = np.broadcast_to(t, shape[:-1]).ravel()
    out = np.empty_like(wf)
    if problem.linear_operator.is_zero:
        _average_plain(a, tf, wf, out)
    else:
        _average_eigen(a, tf, wf, out)
    out = out.reshape(shape)
    if a.include_diffusion and problem.diffusion_symbol is not None:
        out = out + problem.diffusion_symbol * w
    return out


def _chunk_rows(a: AveragedRhs, dim: int) -> int:
    return max(1, CHUNK_ELEMENTS // (a.nodes * dim))


def _accumulate(weights, values):
    acc = weights[0] * values[:, 0]
    for m in range(1, len(weights)):
        acc += weights[m] * values[:, m]
    return acc


def _average_plain(a, tf, wf, out):
    chunk = _chunk_rows(a, wf.shape[-1])
    for lo in range(0, len(wf), chunk):
        hi = lo + chunk
        values = modulation_rhs(a.problem, tf[lo:hi, None] + a.offsets,
                                wf[lo:hi, None, :], include_diffusion=False)
        out[lo:hi] = _accumulate(a.weights, values)


def _average_eigen(a, tf, wf, out):
    problem = a.problem
    op, eps = problem.linear_operator, problem.epsilon
    freqs = a.eigen_frequencies
    node_phase = a.node_phases  # (M, dim): exp(i f s_m / eps)
    weighted = a.weights[:, None] * node_phase
    chunk = _chunk_rows(a, wf.shape[-1])
    for lo in range(0, len(wf), chunk):
        hi = lo + chunk
        t_rows = tf[lo:hi]
        row_phase = np.exp((1j / eps) * t_rows[:, None] * freqs)
        z = op.to_eigen(wf[lo:hi]) * np.conj(row_phase)
        u = op.from_eigen(z[:, None, :] * np.conj(node_phase))
        times = t_rows[:, None] + a.offsets
        n = _nonlinearity(problem, times, u)
        acc = _accumulate(weighted, op.to_eigen(n))
        out[lo:hi] = op.from_eigen(acc * row_phase)


def _nonlinearity(problem, times, u):
    if problem.vectorized:
        return problem.nonlinearity(times, u)
    flat_t = times.ravel()
    flat_u = u.reshape(-1, u.shape[-1])
    res = np.empty_like(flat_u)
    for i in range(len(flat_t)):
        res[i] = problem.nonlinearity(float(flat_t[i]), flat_u[i])
    return res.reshape(u.shape)
