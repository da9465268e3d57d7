"""Problem model, the modulation transform, and solver configuration types.

The stiff systems handled here have the form

    du/dt + (1/eps) L u = N(u) [+ D u]

with ``L`` skew-Hermitian.  Writing ``w = exp(t L / eps) u`` removes the
stiff linear term and leaves the modulation equation

    dw/dt = exp(t L / eps) N(exp(-t L / eps) w) [+ D w]

which is what every propagator in this package integrates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

SKEW_TOL_DIAGONAL = 1e-14
SKEW_TOL_BLOCK = 1e-12

INTEGRATORS = ("rk2", "strang")


class ConfigurationError(ValueError):
    """Invalid problem or solver configuration."""


class NumericalError(ArithmeticError):
    """A numerical precondition (e.g. skew-Hermitian structure) is violated."""


# --------------------------------------------------------------------------- #
# Linear operator
# --------------------------------------------------------------------------- #


class _BlockGroup:
    """Blocks of one size, stacked so the flow can be applied with einsum."""

    def __init__(self, indices, matrices):
        self.indices = np.asarray(indices, dtype=np.intp)  # (nb, b)
        mats = np.asarray(matrices, dtype=complex)  # (nb, b, b)
        # i*B is Hermitian for skew-Hermitian B, so eigh gives a unitary basis.
        theta, vecs = np.linalg.eigh(1j * mats)
        # B = V diag(-i theta) V^H
        self.freqs = -theta  # exp(tau B) = V diag(exp(i freqs tau)) V^H
        self.vecs = vecs
        self.vecs_h = np.conj(np.swapaxes(vecs, -1, -2))
        # When every block column is a contiguous index range, the group can be
        # read and written through slices, avoiding gathers.
        nb = self.indices.shape[0]
        starts = self.indices[0]
        if np.array_equal(self.indices, starts[None, :] + np.arange(nb)[:, None]):
            self.slices = tuple(slice(int(s0), int(s0) + nb) for s0 in starts)
            # (b, b, nb) so that each coefficient row is contiguous
            self.vecs_cols = np.ascontiguousarray(np.transpose(self.vecs, (1, 2, 0)))
            self.vecs_h_cols = np.ascontiguousarray(np.transpose(self.vecs_h, (1, 2, 0)))
        else:
            self.slices = None

    def apply(self, v, out, adjoint: bool = False):
        """Write ``V v`` (or ``V^H v``) for this group's indices into ``out``."""
        if self.slices is None:
            mats = self.vecs_h if adjoint else self.vecs
            out[..., self.indices] = _block_apply(mats, v[..., self.indices])
            return
        cols = self.vecs_h_cols if adjoint else self.vecs_cols
        parts = [v[..., s] for s in self.slices]
        for i, target in enumerate(self.slices):
            acc = cols[i, 0] * parts[0]
            for j in range(1, len(parts)):
                acc += cols[i, j] * parts[j]
            out[..., target] = acc


def _block_apply(mats, vb):
    """``out[..., n, i] = sum_j mats[n, i, j] * vb[..., n, j]`` in fixed order."""
    out = mats[:, :, 0] * vb[..., :, None, 0]
    for j in range(1, mats.shape[-1]):
        out += mats[:, :, j] * vb[..., :, None, j]
    return out


@dataclass(frozen=True, eq=False)
class LinearOperator:
    """Skew-Hermitian operator in diagonal or block-diagonal form.

    Exactly one of ``diagonal`` (eigenvalues ``i*omega_j``) or ``blocks``
    (pairs of index array and dense square matrix) is given.
    """

    diagonal: np.ndarray | None = None
    blocks: tuple | None = None
    _dim: int = field(default=0, repr=False)
    _groups: tuple = field(default=(), repr=False)
    _zero: bool = field(default=False, repr=False)
    _freqs: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if (self.diagonal is None) == (self.blocks is None):
            raise ConfigurationError("give exactly one of diagonal or blocks")
        if self.diagonal is not None:
            diag = np.asarray(self.diagonal, dtype=complex).ravel()
            if diag.size == 0:
                raise ConfigurationError("linear operator must have dim >= 1")
            if np.max(np.abs(diag.real)) > SKEW_TOL_DIAGONAL:
                raise NumericalError(
                    "diagonal operator is not skew-Hermitian: max |Re| = "
                    f"{np.max(np.abs(diag.real)):.3e}"
                )
            diag = diag.copy()
            diag.flags.writeable = False
            object.__setattr__(self, "diagonal", diag)
            object.__setattr__(self, "_dim", diag.size)
            object.__setattr__(self, "_zero", not np.any(diag))
            return

        by_size: dict[int, tuple[list, list]] = {}
        seen = []
        normalized = []
        for idx, mat in self.blocks:
            idx = np.asarray(idx, dtype=np.intp).ravel()
            mat = np.asarray(mat, dtype=complex)
            if mat.shape != (idx.size, idx.size):
                raise ConfigurationError(
                    f"block matrix shape {mat.shape} does not match {idx.size} indices"
                )
            defect = np.linalg.norm(mat + mat.conj().T, 2)
            if defect > SKEW_TOL_BLOCK:
                raise NumericalError(
                    f"block is not skew-Hermitian: ||B + B^H|| = {defect:.3e}"
                )
            seen.append(idx)
            normalized.append((idx, mat))
            group = by_size.setdefault(idx.size, ([], []))
            group[0].append(idx)
            group[1].append(mat)
        allidx = np.concatenate(seen) if seen else np.array([], dtype=np.intp)
        dim = allidx.size
        if dim == 0:
            raise ConfigurationError("linear operator must have dim >= 1")
        if not np.array_equal(np.sort(allidx), np.arange(dim)):
            raise ConfigurationError(
                "block index sets must be disjoint and cover 0..dim-1"
            )
        groups = tuple(_BlockGroup(i, m) for i, m in by_size.values())
        object.__setattr__(self, "blocks", tuple(normalized))
        object.__setattr__(self, "_dim", dim)
        object.__setattr__(self, "_groups", groups)
        freqs = np.empty(dim)
        for g in groups:
            freqs[g.indices.ravel()] = g.freqs.ravel()
        freqs.flags.writeable = False
        object.__setattr__(self, "_freqs", freqs)

    @classmethod
    def from_frequencies(cls, omegas) -> "LinearOperator":
        """Diagonal operator ``diag(i*omega)``."""
        return cls(diagonal=1j * np.asarray(omegas, dtype=float))

    @property
    def dim(self) -> int:
        return self._dim

    def frequencies(self) -> np.ndarray:
        """Real frequencies ``omega`` such that the spectrum is ``i*omega``.

        For block operators entry ``j`` belongs to the eigenvector stored at
        position ``j`` by ``to_eigen``.
        """
        if self.diagonal is not None:
            return self.diagonal.imag.copy()
        return self._freqs.copy()

    @property
    def is_zero(self) -> bool:
        return self._zero

    def to_eigen(self, v):
        """Coordinates of ``v`` in the eigenbasis (``V^H v``, same index layout)."""
        v = np.asarray(v, dtype=complex)
        if self.diagonal is not None:
            return v
        out = np.empty(v.shape, dtype=complex)
        for g in self._groups:
            g.apply(v, out, adjoint=True)
        return out

    def from_eigen(self, z):
        """Inverse of ``to_eigen`` (``V z``)."""
        z = np.asarray(z, dtype=complex)
        if self.diagonal is not None:
            return z
        out = np.empty(z.shape, dtype=complex)
        for g in self._groups:
            g.apply(z, out)
        return out

    def exp_apply(self, tau, v):
        """Return ``exp(tau * L) v``.

        ``tau`` has any shape ``S``; ``v`` must broadcast to ``S + (dim,)``.
        Every vector is transformed independently, so results do not depend on
        how a batch is split.
        """
        v = np.asarray(v, dtype=complex)
        tau = np.asarray(tau, dtype=float)
        shape = np.broadcast_shapes(tau.shape + (self._dim,), v.shape)
        if self.is_zero:
            return v if v.shape == shape else np.array(np.broadcast_to(v, shape))
        if self.diagonal is not None:
            return np.exp(tau[..., None] * self.diagonal) * v
        phase = np.exp(1j * tau[..., None] * self._freqs)
        return self.from_eigen(self.to_eigen(np.broadcast_to(v, shape)) * phase)


def apply_linear_flow(op: LinearOperator, epsilon: float, t, v, sign: int = 1):
    """Apply ``exp(sign * t * L / epsilon)`` to ``v``.

    Scalar ``t`` returns a vector; an array of times returns one row per time.
    """
    if sign not in (1, -1):
        raise ConfigurationError("sign must be +1 or -1")
    v = np.asarray(v)
    if v.shape[-1] != op.dim:
        raise ConfigurationError(
            f"vector of length {v.shape[-1]} does not match operator dim {op.dim}"
        )
    return op.exp_apply(sign * np.asarray(t, dtype=float) / epsilon, v)


# --------------------------------------------------------------------------- #
# Problem specification
# --------------------------------------------------------------------------- #

Nonlinearity = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A stiff oscillatory system in physical variables.

    Attributes:
        linear_operator: skew-Hermitian ``L``.
        nonlinearity: ``N(t, u)``.  When ``vectorized`` is true it must also
            accept ``t`` of shape ``(M,)`` with ``u`` of shape ``(M, dim)``.
        epsilon: stiffness parameter.
        diffusion_symbol: diagonal of a dissipative term commuting with ``L``.
        frequency_bound: largest angular frequency present in the modulation
            right-hand side; used to size the averaging quadrature.  Defaults
            to ``3 max|omega| / epsilon`` (worst case for a quadratic ``N``).
        key: stable text identifying the problem (used for on-disk caches).
    """

    linear_operator: LinearOperator
    nonlinearity: Nonlinearity
    epsilon: float = 1.0
    diffusion_symbol: np.ndarray | None = None
    frequency_bound: float | None = None
    vectorized: bool = False
    key: str = ""

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.diffusion_symbol is not None:
            d = np.asarray(self.diffusion_symbol, dtype=complex).ravel()
            if d.size != self.dim:
                raise ConfigurationError("diffusion_symbol length must equal dim")
            object.__setattr__(self, "diffusion_symbol", d)
        if self.frequency_bound is None:
            bound = 3.0 * float(np.max(np.abs(self.linear_operator.frequencies()))) / self.epsilon
            object.__setattr__(self, "frequency_bound", bound)

    @property
    def dim(self) -> int:
        return self.linear_operator.dim

    def to_modulation(self, t, u):
        """Physical state ``u(t)`` to modulation variable ``w(t)``."""
        return apply_linear_flow(self.linear_operator, self.epsilon, t, u, +1)

    def to_physical(self, t, w):
        """Modulation variable ``w(t)`` back to the physical state ``u(t)``."""
        return apply_linear_flow(self.linear_operator, self.epsilon, t, w, -1)


def modulation_rhs(problem: ProblemSpec, t, w, include_diffusion: bool = True):
    """Right-hand side of the modulation equation at time ``t``.

    ``t`` may be an array of shape ``S`` with ``w`` broadcasting to
    ``S + (dim,)``; each row is evaluated at its own time.
    ``include_diffusion=False`` drops the ``D w`` term, which a splitting
    integrator handles exactly.
    """
    w = np.asarray(w, dtype=complex)
    if w.shape[-1] != problem.dim:
        raise ConfigurationError(
            f"state of length {w.shape[-1]} does not match problem dim {problem.dim}"
        )
    op, eps = problem.linear_operator, problem.epsilon
    t_arr = np.asarray(t, dtype=float)
    if op.is_zero and (problem.vectorized or t_arr.ndim == 0):
        # No fast rotation: the modulation equation is the physical one.
        out = problem.nonlinearity(t if t_arr.ndim == 0 else t_arr, w)
        if include_diffusion and problem.diffusion_symbol is not None:
            out = out + problem.diffusion_symbol * w
        return out
    u = op.exp_apply(-t_arr / eps, w)
    if t_arr.ndim == 0:
        n = problem.nonlinearity(float(t_arr), u)
    elif problem.vectorized:
        n = problem.nonlinearity(t_arr, u)
    else:
        flat_t = np.broadcast_to(t_arr, u.shape[:-1]).ravel()
        flat_u = u.reshape(-1, u.shape[-1])
        n = np.stack([problem.nonlinearity(float(tm), um) for tm, um in zip(flat_t, flat_u)])
        n = n.reshape(u.shape)
    out = op.exp_apply(t_arr / eps, n)
    if include_diffusion and problem.diffusion_symbol is not None:
        out = out + problem.diffusion_symbol * w
    return out


# --------------------------------------------------------------------------- #
# Levels, configuration, trajectories
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class LevelSpec:
    """One level of the hierarchy; level 0 is the finest."""

    level: int
    dt: float
    eta: float | None = None
    iterations: int = 1
    integrator: str = "rk2"


@dataclass(frozen=True, eq=False)
class MethodConfig:
    """Full multi-level solver configuration.

    ``levels`` is ordered coarse to fine, i.e. ``levels[0]`` is level ``L-1``.
    ``quadrature_nodes=None`` sizes the averaging quadrature per level from
    the problem's frequency bound and the window.
    """

    levels: tuple
    t0: float
    t_end: float
    initial_condition: np.ndarray
    averaging_enabled: bool = False
    quadrature_nodes: int | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        ic = np.atleast_1d(np.asarray(self.initial_condition, dtype=complex))
        object.__setattr__(self, "initial_condition", ic)

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def level(self, l: int) -> LevelSpec:
        """LevelSpec for level index ``l`` (0 = finest)."""
        return self.levels[len(self.levels) - 1 - l]


def _is_integer_ratio(a: float, b: float, tol: float = 1e-9) -> tuple[bool, int]:
    ratio = a / b
    n = int(round(ratio))
    return abs(ratio - n) <= tol * max(1.0, abs(ratio)), n


def validate_config(cfg: MethodConfig, problem: ProblemSpec | None = None) -> list[str]:
    """Return a list of human-readable constraint violations (empty if valid)."""
    out: list[str] = []
    L = cfg.num_levels
    if L < 1:
        return ["levels: at least one level is required"]
    expected = list(range(L - 1, -1, -1))
    if [lv.level for lv in cfg.levels] != expected:
        out.append(f"levels: level indices must be {expected} (coarse to fine)")
    if not cfg.workers >= 1:
        out.append("workers: must be >= 1")
    if cfg.quadrature_nodes is not None and cfg.quadrature_nodes < 16:
        out.append("quadrature_nodes: must be >= 16")
    if not cfg.t_end > cfg.t0:
        out.append("t_end: must exceed t0")
    for lv in cfg.levels:
        if not lv.dt > 0:
            out.append(f"levels[{lv.level}].dt: must be positive")
        if lv.integrator not in INTEGRATORS:
            out.append(f"levels[{lv.level}].integrator: must be one of {INTEGRATORS}")
        if lv.level > 0 and not lv.iterations >= 0:
            out.append(f"levels[{lv.level}].iterations: must be >= 0")
        if cfg.averaging_enabled:
            if lv.level == 0 and lv.eta is not None:
                out.append("levels[0].eta: level 0 is never averaged")
            if lv.level > 0 and (lv.eta is None or not lv.eta > 0):
                out.append(f"levels[{lv.level}].eta: required (positive) when averaging")
    if out:
        return out

    for l in range(1, L):
        fine, coarse = cfg.level(l - 1), cfg.level(l)
        if not coarse.dt > fine.dt:
            out.append(f"levels[{l}].dt: dt must increase with level")
            continue
        ok, n = _is_integer_ratio(coarse.dt, fine.dt)
        if not ok or n < 2:
            out.append(
                f"levels[{l}].dt: dt[{l}]/dt[{l - 1}] must be an integer >= 2"
            )
    if cfg.averaging_enabled:
        for l in range(2, L):
            if cfg.level(l).eta < cfg.level(l - 1).eta:
                out.append(f"levels[{l}].eta: eta must increase with level")
    ok, _ = _is_integer_ratio(cfg.t_end - cfg.t0, cfg.levels[0].dt)
    if not ok:
        out.append("t_end: coarse grid does not tile interval")
    if problem is not None and cfg.initial_condition.size != problem.dim:
        out.append(
            f"initial_condition: length {cfg.initial_condition.size} != problem dim {problem.dim}"
        )
    return out


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on a uniform time grid; ``states[i]`` belongs to ``times[i]``."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=complex)
        if states.ndim == 1:
            states = states[:, None]
        if times.ndim != 1 or len(times) != len(states):
            raise ConfigurationError("times and states must have equal length")
        if len(times) > 1:
            h = np.diff(times)
            if np.any(h <= 0):
                raise ConfigurationError("times must be strictly increasing")
            if np.max(np.abs(h - h[0])) > 1e-12 * max(abs(h[0]), 1.0) * len(times):
                raise ConfigurationError("time grid must be uniform")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def uniform_grid(t0: float, t1: float, n: int) -> np.ndarray:
    """``n + 1`` equispaced points with exact endpoints."""
    return t0 + (t1 - t0) * np.arange(n + 1) / n


def step_count(t0: float, t1: float, h: float) -> int:
    """Number of steps of size ``h`` tiling ``[t0, t1]``; raises if not integral."""
    ok, n = _is_integer_ratio(t1 - t0, h)
    if not ok or n < 1:
        raise ConfigurationError(
            f"interval length {t1 - t0!r} is not an integer multiple of step {h!r}"
        )
    return n


def as_levels(specs: Sequence[LevelSpec]) -> tuple:
    """Sort level specs coarse to fine."""
    return tuple(sorted(specs, key=lambda lv: -lv.level))
