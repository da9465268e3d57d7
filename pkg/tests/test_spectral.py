import numpy as np
import pytest

from mlparareal.core import ConfigurationError
from mlparareal.integrators import SplitRhs, advance, strang_step
from mlparareal.spectral import (OVERSAMPLE, RsweParams, RsweProblem, SpectralGrid, _bump,
                                 build_rswe, relative_linf, rswe_initial_condition,
                                 spectral_derivative, to_physical_fields)


def _fd_weights(offsets):
    """First-derivative finite-difference weights on integer offsets."""
    n = len(offsets)
    A = np.vander(np.asarray(offsets, dtype=float), n, increasing=True).T
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(A, rhs)


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ConfigurationError):
        SpectralGrid(12)


def test_derivative_of_constant_is_zero():
    g = SpectralGrid(64)
    assert np.max(np.abs(spectral_derivative(g, np.fft.fft(np.full(64, 3.0))))) < 1e-12


def test_derivative_of_sine():
    g = SpectralGrid(64)
    d = np.fft.ifft(spectral_derivative(g, np.fft.fft(np.sin(3 * g.x)))).real
    np.testing.assert_allclose(d, 3 * np.cos(3 * g.x), atol=1e-12)


def test_second_derivative_keeps_nyquist():
    g = SpectralGrid(16)
    f = np.cos(8 * g.x)
    d2 = np.fft.ifft(spectral_derivative(g, np.fft.fft(f), order=2)).real
    np.testing.assert_allclose(d2, -64 * f, atol=1e-10)


def test_derivative_against_finite_differences():
    g = SpectralGrid(128)
    f = lambda x: np.exp(-4 * (x - np.pi) ** 2)
    d = np.fft.ifft(spectral_derivative(g, np.fft.fft(f(g.x)))).real
    h = 2 * np.pi / 4096
    offsets = [-5, -4, -3, -2, -1, 1, 2, 3, 4, 5]
    w = _fd_weights(offsets)
    fd = sum(wi * f(g.x + o * h) for wi, o in zip(w, offsets)) / h
    np.testing.assert_allclose(d, fd, atol=1e-6)


def test_zero_mode_block():
    op = build_rswe(RsweParams(), SpectralGrid(8)).linear_operator
    idx, block = op.blocks[0]
    assert list(idx) == [0, 8, 16]
    np.testing.assert_array_equal(block, [[0, -1, 0], [1, 0, 0], [0, 0, 0]])


@pytest.mark.parametrize("F", [1.0, 0.01])
def test_blocks_are_skew_hermitian(F):
    op = build_rswe(RsweParams(F=F), SpectralGrid(32)).linear_operator
    for _, b in op.blocks:
        assert np.max(np.abs(b + b.conj().T)) < 1e-13


def test_block_frequencies():
    F = 0.25
    g = SpectralGrid(16)
    freqs = np.sort(build_rswe(RsweParams(F=F), g).linear_operator.frequencies().real)
    k = g.k_odd
    expected = np.sort(np.concatenate([np.zeros(16), np.sqrt(1 + k ** 2 / F),
                                       -np.sqrt(1 + k ** 2 / F)]))
    np.testing.assert_allclose(np.abs(freqs), np.abs(expected), atol=1e-12)


def test_nonlinearity_of_zero_state():
    spec = build_rswe(RsweParams(), SpectralGrid(16))
    assert np.all(spec.nonlinearity(0.0, np.zeros(48, dtype=complex)) == 0)


def test_nonlinearity_single_mode():
    g = SpectralGrid(32)
    spec = build_rswe(RsweParams(), g)
    u = np.zeros(96, dtype=complex)
    u[:32] = np.fft.fft(np.cos(g.x))
    out = to_physical_fields(spec.nonlinearity(0.0, u), 32)
    np.testing.assert_allclose(out[0], 0.5 * np.sin(2 * g.x), atol=1e-12)
    np.testing.assert_allclose(out[1:], 0.0, atol=1e-12)


def test_nonlinearity_height_flux():
    g = SpectralGrid(32)
    spec = build_rswe(RsweParams(), g)
    u = np.zeros(96, dtype=complex)
    u[:32] = np.fft.fft(np.cos(g.x))
    u[64:] = np.fft.fft(np.sin(2 * g.x))
    out = to_physical_fields(spec.nonlinearity(0.0, u), 32)
    # -(h v1)' with h v1 = sin 2x cos x
    expected = -(2 * np.cos(2 * g.x) * np.cos(g.x) - np.sin(2 * g.x) * np.sin(g.x))
    np.testing.assert_allclose(out[2], expected, atol=1e-12)


def test_nonlinearity_batched_rows():
    spec = build_rswe(RsweParams(), SpectralGrid(16))
    rng = np.random.default_rng(3)
    u = rng.standard_normal((4, 48)) + 1j * rng.standard_normal((4, 48))
    batched = spec.nonlinearity(0.0, u)
    for i in range(4):
        np.testing.assert_array_equal(batched[i], spec.nonlinearity(0.0, u[i]))


def test_initial_condition_properties():
    g = SpectralGrid(128)
    u0 = rswe_initial_condition(g)
    assert np.all(u0[:256] == 0)
    hh = u0[256:]
    assert hh[0] == 0
    # real field: conjugate-symmetric coefficients
    np.testing.assert_allclose(hh[1:], np.conj(hh[1:][::-1]), atol=1e-12)
    h = np.fft.ifft(hh).real
    assert abs(np.mean(h)) < 1e-12
    mean = np.mean(_bump(g.x))
    c1 = h[5] / (_bump(g.x[5]) - mean)
    fine = 2 * np.pi * np.arange(OVERSAMPLE * 128) / (OVERSAMPLE * 128)
    assert np.max(np.abs(c1 * (_bump(fine) - mean))) == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(h)) <= 1.0 + 1e-12


def _linear_split(spec, mu_on):
    diff = spec.diffusion_symbol if mu_on else 0 * spec.diffusion_symbol

    def flow(t0, t1, y):
        return np.exp(diff * (t1 - t0)) * spec.to_physical(t1 - t0, y)

    return SplitRhs(flow, lambda t, u: 0 * u)


def test_linear_flow_conserves_norm():
    prob = RsweProblem(modes=32, mu=0.0)
    spec = prob.spec()
    u0 = prob.initial_condition
    u, _ = advance(strang_step, _linear_split(spec, False), 0.0, 1.0, 1e-3, u0)
    assert np.linalg.norm(u) == pytest.approx(np.linalg.norm(u0), rel=1e-12)


def test_hyperviscosity_dissipates():
    prob = RsweProblem(modes=32, mu=1e-4)
    spec = prob.spec()
    split = _linear_split(spec, True)
    u = prob.initial_condition
    norms = [np.linalg.norm(u)]
    for i in range(50):
        u = strang_step(split, 0.02 * i, u, 0.02)
        norms.append(np.linalg.norm(u))
    assert np.all(np.diff(norms) <= 1e-12 * norms[0])
    assert norms[-1] < norms[0]


def test_relative_linf():
    u = rswe_initial_condition(SpectralGrid(16))
    assert relative_linf(u, u, 16) == 0.0
    assert relative_linf(1.1 * u, u, 16) == pytest.approx(0.1)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        RsweParams(F=0.0)
    with pytest.raises(ConfigurationError):
        RsweParams(mu=-1.0)


def test_short_fine_solve_is_stable():
    from mlparareal.problems import reference_solution
    prob = RsweProblem(modes=32)
    spec = prob.spec()
    ref = reference_solution(spec, prob.initial_condition, np.array([0.0, 2.0]), 1 / 2000,
                             use_cache=False)
    fields = to_physical_fields(spec.to_physical(2.0, ref.final), 32)
    assert np.all(np.isfinite(fields)) and np.max(np.abs(fields)) < 10
