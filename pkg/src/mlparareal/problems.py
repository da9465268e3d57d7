"""Model problems with closed-form or cached reference solutions.

Every problem is packaged as a ``ProblemSpec`` in physical variables; the
solvers work with the modulation variable ``w = exp(t L / eps) u``, which
coincides with ``u`` at ``t = 0``.
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from filelock import FileLock

from .core import (
    ConfigurationError,
    LinearOperator,
    NumericalError,
    ProblemSpec,
    Trajectory,
    modulation_rhs,
)
from .integrators import SplitRhs, advance, rk2_step, strang_step

SINGULAR_TOL = 1e-12


def _negate(t, u):
    # -1.0 * u is bitwise equal to -u and faster for complex arrays.
    return -1.0 * u


def _neg_square(t, u):
    return -1.0 * (u * u)


@dataclass(frozen=True)
class DecayProblem:
    """``x' = -x``, ``x(0) = 1`` on ``[0, 2]``."""

    u0: complex = 1.0
    t_end: float = 2.0

    @property
    def initial_condition(self):
        return np.array([self.u0], dtype=complex)

    def spec(self) -> ProblemSpec:
        return ProblemSpec(LinearOperator.from_frequencies([0.0]), _negate,
                           vectorized=True, key=f"decay(u0={complex(self.u0)!r})")

    def exact(self, t):
        """Exact solution in modulation variables, shape ``t.shape + (1,)``."""
        return (self.u0 * np.exp(-np.asarray(t, dtype=float)))[..., None]


def exact_oscillatory(r: float, w0: complex, t):
    """Closed-form solution of ``w' = -exp(i r t) w^2``.

    Raises:
        NumericalError: where the denominator is numerically zero.
    """
    t = np.asarray(t, dtype=float)
    w0 = complex(w0)
    den = -1j * w0 * np.exp(1j * r * t) + 1j * w0 + r
    if w0 != 0 and np.any(np.abs(den) < SINGULAR_TOL):
        raise NumericalError("oscillatory solution is singular at the requested time")
    if w0 == 0:
        return np.zeros(t.shape, dtype=complex)
    out = r * w0 / den
    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class OscillatoryProblem:
    """``w' = -exp(i r t) w^2``: a fast phase in a scalar modulation equation."""

    r: float = 100.0
    w0: complex = 1.0
    t_end: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ConfigurationError("r must be positive")

    @property
    def initial_condition(self):
        return np.array([self.w0], dtype=complex)

    def spec(self) -> ProblemSpec:
        # u' + L u = -u^2 with L = -i r gives w' = -exp(i r t) w^2.
        return ProblemSpec(LinearOperator.from_frequencies([-self.r]), _neg_square,
                           frequency_bound=self.r, vectorized=True,
                           key=f"oscillatory(r={float(self.r)!r},w0={complex(self.w0)!r})")

    def exact(self, t):
        return np.asarray(exact_oscillatory(self.r, self.w0, t))[..., None]


@dataclass(frozen=True)
class ThreeTimescaleProblem:
    """``u' + i diag(omega) u + u*u = 0``: three decoupled scales."""

    omegas: tuple = (2.0, 20.0, 200.0)
    u0: tuple = (1.0, 1.0, 1.0)
    t_end: float = 6.0

    def __post_init__(self):
        if len(self.omegas) != 3 or len(self.u0) != 3:
            raise ConfigurationError("three frequencies and three initial values required")
        if min(self.omegas) <= 0:
            raise ConfigurationError("frequencies must be positive")

    @property
    def initial_condition(self):
        return np.asarray(self.u0, dtype=complex)

    def spec(self) -> ProblemSpec:
        omegas = np.asarray(self.omegas, dtype=float)
        return ProblemSpec(LinearOperator.from_frequencies(omegas), _neg_square,
                           frequency_bound=float(np.max(omegas)), vectorized=True,
                           key=f"three_scale(omegas={tuple(map(float, self.omegas))!r},"
                               f"u0={tuple(map(complex, self.u0))!r})")

    def exact(self, t):
        """``w_j(t) = w_j(0) / (1 + w_j(0) (1 - exp(-i omega_j t)) / (i omega_j))``."""
        t = np.asarray(t, dtype=float)[..., None]
        om = np.asarray(self.omegas, dtype=float)
        w0 = self.initial_condition
        return w0 / (1.0 + w0 * (1.0 - np.exp(-1j * om * t)) / (1j * om))


@dataclass(frozen=True)
class SwingingSpringProblem:
    """Elastic pendulum near the 2:1 resonance.

    The original variables ``(x1, x2, y1, y2, z1, z2)`` obey
    ``x1' = x2, x2' = -omega_R^2 x1 + lam x1 z1`` and likewise for ``y`` and
    ``z``.  Internally the velocities are divided by their frequency,
    ``(x1, x2 / omega_R, ...)``, which turns each linear block into a
    rotation ``[[0, omega], [-omega, 0]]`` and makes the operator
    skew-symmetric.  ``to_scaled``/``from_scaled`` convert between the two.
    """

    omega_R: float = 1.0
    omega_Z: float = 2.0
    lam: float = 0.1
    initial_state: tuple = (0.1, 0.0, 0.1, 0.0, 0.1, 0.0)
    t_end: float = 50.0

    def __post_init__(self):
        if not (self.omega_R > 0 and self.omega_Z > 0):
            raise ConfigurationError("frequencies must be positive")
        if len(self.initial_state) != 6:
            raise ConfigurationError("initial state must have six entries")

    @property
    def _scale(self):
        r, z = self.omega_R, self.omega_Z
        return np.array([1.0, r, 1.0, r, 1.0, z])

    def to_scaled(self, x):
        return np.asarray(x, dtype=complex) / self._scale

    def from_scaled(self, x):
        return np.asarray(x, dtype=complex) * self._scale

    @property
    def initial_condition(self):
        return self.to_scaled(self.initial_state)

    def spec(self) -> ProblemSpec:
        r, z, lam = float(self.omega_R), float(self.omega_Z), float(self.lam)

        def block(om):
            # du/dt + L u = N(u), so L is minus the rotation generator.
            return -np.array([[0.0, om], [-om, 0.0]])

        op = LinearOperator(blocks=((np.array([0, 1]), block(r)),
                                    (np.array([2, 3]), block(r)),
                                    (np.array([4, 5]), block(z))))

        def nonlinearity(t, u):
            x1, y1, z1 = u[..., 0], u[..., 2], u[..., 4]
            out = np.zeros(np.shape(u), dtype=complex)
            out[..., 1] = (lam / r) * (x1 * z1)
            out[..., 3] = (lam / r) * (y1 * z1)
            out[..., 5] = (0.5 * lam / z) * (x1 * x1 + y1 * y1)
            return out

        return ProblemSpec(op, nonlinearity, vectorized=True,
                           key=f"spring(R={r!r},Z={z!r},lam={lam!r},"
                               f"x0={tuple(map(float, self.initial_state))!r})")

    def energy(self, x):
        """Quadratic energy of the linear part in original variables."""
        x = np.real(np.asarray(x))
        return 0.5 * (x[..., 1] ** 2 + self.omega_R ** 2 * x[..., 0] ** 2
                      + x[..., 3] ** 2 + self.omega_R ** 2 * x[..., 2] ** 2
                      + x[..., 5] ** 2 + self.omega_Z ** 2 * x[..., 4] ** 2)


PROBLEMS = {
    "decay": DecayProblem,
    "oscillatory": OscillatoryProblem,
    "three_scale": ThreeTimescaleProblem,
    "swinging_spring": SwingingSpringProblem,
}


def make_problem(problem_id: str, **params):
    """Instantiate a model problem; ``.spec()`` gives its ``ProblemSpec``.

    The RSWE lives in ``mlparareal.spectral``.

    Raises:
        ConfigurationError: for unknown ids or invalid parameters.
    """
    if problem_id == "rswe":
        from .spectral import RsweProblem
        cls = RsweProblem
    elif problem_id in PROBLEMS:
        cls = PROBLEMS[problem_id]
    else:
        raise ConfigurationError(f"unknown problem {problem_id!r}")
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


# --------------------------------------------------------------------------- #
# Reference solutions with an on-disk cache
# --------------------------------------------------------------------------- #

_MAGIC = b"MLPREF01"
_HEADER = struct.Struct("<8s32sdQ")


def cache_dir() -> Path:
    root = os.environ.get("MLP_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "mlparareal"


def _cache_key(problem, u0, t_grid, dt_ref, integrator):
    h = hashlib.sha256()
    h.update(problem.key.encode())
    h.update(np.ascontiguousarray(u0, dtype="<c16").tobytes())
    h.update(np.ascontiguousarray(t_grid, dtype="<f8").tobytes())
    h.update(struct.pack("<d", dt_ref))
    h.update(integrator.encode())
    return h.digest()


def _read_cache(path, digest, dt_ref, n, dim):
    data = path.read_bytes()
    magic, stored, stored_dt, stored_n = _HEADER.unpack_from(data)
    body = data[_HEADER.size:]
    if (magic != _MAGIC or stored != digest or stored_dt != dt_ref or stored_n != n
            or len(body) != n * dim * 16):
        raise ValueError("cache header or size mismatch")
    pairs = np.frombuffer(body, dtype="<f8").reshape(n, dim, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def _write_cache(path, digest, dt_ref, states):
    pairs = np.stack([states.real, states.imag], axis=-1).astype("<f8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, digest, dt_ref, len(states)))
        fh.write(pairs.tobytes())
    os.replace(tmp, path)


def _integrate_serial(problem, u0, t_grid, dt_ref, integrator):
    if integrator == "strang":
        d = problem.diffusion_symbol
        flow = ((lambda a, b, y: y) if d is None
                else (lambda a, b, y: np.exp(d * (b - a)) * y))
        f = SplitRhs(flow, lambda t, w: modulation_rhs(problem, t, w, False))
        stepper = strang_step
    elif integrator == "rk2":
        f = lambda t, w: modulation_rhs(problem, t, w)  # noqa: E731
        stepper = rk2_step
    else:
        raise ConfigurationError(f"unknown integrator {integrator!r}")
    states = np.empty((len(t_grid), len(u0)), dtype=complex)
    states[0] = y = u0
    for i in range(len(t_grid) - 1):
        y, _ = advance(stepper, f, t_grid[i], t_grid[i + 1], dt_ref, y)
        states[i + 1] = y
    return states


def reference_solution(problem: ProblemSpec, u0, t_grid, dt_ref: float,
                       integrator: str = "rk2", use_cache: bool = True) -> Trajectory:
    """Serial fine integration of the modulation equation sampled on ``t_grid``.

    Results are cached under ``MLP_CACHE_DIR`` (default ``~/.cache/mlparareal``)
    when the problem has a ``key``.  A damaged cache file is recomputed with a
    warning.

    Raises:
        ConfigurationError: if ``dt_ref`` does not divide the grid spacing.
    """
    u0 = np.atleast_1d(np.asarray(u0, dtype=complex))
    t_grid = np.asarray(t_grid, dtype=float)
    if not (use_cache and problem.key):
        return Trajectory(t_grid, _integrate_serial(problem, u0, t_grid, dt_ref, integrator))
    digest = _cache_key(problem, u0, t_grid, dt_ref, integrator)
    folder = cache_dir()
    folder.mkdir(parents=True, exist_ok=True)
    path = folder / f"{digest.hex()[:32]}.ref"
    with FileLock(str(path) + ".lock"):
        if path.exists():
            try:
                return Trajectory(t_grid, _read_cache(path, digest, dt_ref, len(t_grid), len(u0)))
            except (ValueError, struct.error, OSError) as exc:
                warnings.warn(f"recomputing damaged reference cache {path.name}: {exc}",
                              RuntimeWarning, stacklevel=2)
        states = _integrate_serial(problem, u0, t_grid, dt_ref, integrator)
        _write_cache(path, digest, dt_ref, states)
    return Trajectory(t_grid, states)
