import warnings

import numpy as np
import pytest

from mlparareal.averaging import AveragedRhs
from mlparareal.core import ConfigurationError, NumericalError, modulation_rhs
from mlparareal.experiments import three_scale_configs
from mlparareal.integrators import SplitRhs, advance, integrate, rk2_step, strang_step
from mlparareal.parareal import solve_multilevel
from mlparareal.problems import (DecayProblem, OscillatoryProblem, SwingingSpringProblem,
                                 ThreeTimescaleProblem, cache_dir, exact_oscillatory,
                                 make_problem, reference_solution)
import mlparareal.problems as problems_mod


def test_oscillatory_rhs_at_zero():
    spec = OscillatoryProblem(r=100.0).spec()
    assert modulation_rhs(spec, 0.0, np.array([1.0]))[0] == pytest.approx(-1.0)


def test_exact_oscillatory_initial_value():
    assert exact_oscillatory(100.0, 0.3 + 0.2j, 0.0) == pytest.approx(0.3 + 0.2j)


def test_exact_oscillatory_zero_data():
    assert np.all(exact_oscillatory(50.0, 0.0, np.linspace(0, 1, 7)) == 0)


def test_exact_oscillatory_singularity():
    # -i w0 exp(i r t) + i w0 + r = 0 for r = 1, t = pi, w0 = i / 2.
    with pytest.raises(NumericalError):
        exact_oscillatory(1.0, 0.5j, np.pi)


def _richardson(problem, u0, t, dt):
    a = reference_solution(problem, u0, np.array([0.0, t]), dt, use_cache=False).final
    b = reference_solution(problem, u0, np.array([0.0, t]), dt / 2, use_cache=False).final
    return (4 * b - a) / 3, a, b


def test_oscillatory_exact_against_fine_integration():
    prob = OscillatoryProblem(r=100.0)
    extrap, coarse, fine = _richardson(prob.spec(), prob.initial_condition, 1.0, 1e-4)
    exact = exact_oscillatory(100.0, 1.0, 1.0)
    assert abs(fine[0] - exact) < 1e-7
    assert abs(extrap[0] - exact) < 1e-9
    assert abs(coarse[0] - exact) / abs(fine[0] - exact) == pytest.approx(4.0, rel=0.02)


def test_three_scale_exact_against_fine_integration():
    prob = ThreeTimescaleProblem()
    extrap, _, fine = _richardson(prob.spec(), prob.initial_condition, 1.0, 1e-4)
    exact = prob.exact(1.0)
    assert np.max(np.abs(fine - exact)) < 1e-6
    assert np.max(np.abs(extrap - exact)) < 1e-8


def test_three_scale_exact_solves_modulation_equation():
    prob = ThreeTimescaleProblem()
    spec = prob.spec()
    t, h = 0.77, 1e-5
    deriv = (prob.exact(t + h) - prob.exact(t - h)) / (2 * h)
    np.testing.assert_allclose(deriv, modulation_rhs(spec, t, prob.exact(t)), atol=1e-6)


def test_three_scale_averaging_suppresses_fast_components():
    # eta = 1 lies between 2 pi / 20 and 2 pi / 2.
    prob = ThreeTimescaleProblem()
    spec = prob.spec()
    h = 1e-3
    fine = integrate(rk2_step, lambda t, w: modulation_rhs(spec, t, w), 0.0, 6.0, h,
                     prob.initial_condition)
    avg = integrate(rk2_step, AveragedRhs(spec, 1.0), 0.0, 6.0, h, prob.initial_condition)

    def fluctuation(x, period):
        win = int(round(period / h))
        mean = np.convolve(x, np.ones(win) / win, mode="same")
        return np.max(np.abs(x - mean)[win:-win])

    for j, om in ((1, 20.0), (2, 200.0)):
        period = 2 * np.pi / om
        ratio = fluctuation(avg.states[:, j], period) / fluctuation(fine.states[:, j], period)
        assert ratio < 0.2


def test_three_scale_phase_recovery():
    prob, three, _ = three_scale_configs(0.1, {"coarsen": 10, "eta": (0.1, 1.0), "k1": 3}, 3)
    run = solve_multilevel(three, prob.spec())
    exact = prob.exact(run.final.times)[:, 1]
    guess = run.iterations[0].states[:, 1]
    assert np.std(guess) < 0.2 * np.std(exact)
    third = run.iterations[3].states[:, 1]
    assert np.linalg.norm(third - exact) / np.linalg.norm(exact) < 0.1


def test_spring_scaled_operator_matches_original_system():
    prob = SwingingSpringProblem(omega_R=1.3, omega_Z=2.1, lam=0.7)
    spec = prob.spec()
    r2, z2 = 1.3 ** 2, 2.1 ** 2
    A = np.zeros((6, 6))
    A[0, 1] = A[2, 3] = A[4, 5] = 1.0
    A[1, 0] = A[3, 2] = -r2
    A[5, 4] = -z2
    x = np.array([0.2, -0.1, 0.05, 0.3, -0.4, 0.25])
    lam = 0.7
    N = np.array([0, lam * x[0] * x[4], 0, lam * x[2] * x[4], 0, 0.5 * lam * (x[0] ** 2 + x[2] ** 2)])
    u = prob.to_scaled(x)
    # du/dt = -L u + N(u) in scaled variables, mapped back to the original ones
    dense = np.zeros((6, 6), dtype=complex)
    for idx, m in spec.linear_operator.blocks:
        dense[np.ix_(idx, idx)] = m
    rhs_scaled = -dense @ u + spec.nonlinearity(0.0, u)
    np.testing.assert_allclose(prob.from_scaled(rhs_scaled), A @ x + N, atol=1e-14)


def test_spring_linear_energy_conserved():
    prob = SwingingSpringProblem(lam=0.0)
    spec = prob.spec()
    split = SplitRhs(lambda t0, t1, y: spec.to_physical(t1 - t0, y), lambda t, u: 0 * u)
    u, _ = advance(strang_step, split, 0.0, 20.0, 0.02, prob.initial_condition)
    e0 = prob.energy(prob.from_scaled(prob.initial_condition))
    e1 = prob.energy(prob.from_scaled(u))
    assert abs(e1 - e0) <= 1e-10 * e0
    assert np.max(np.abs(u.imag)) < 1e-10


def test_spring_modulation_stays_real_in_physical_variables():
    prob = SwingingSpringProblem()
    spec = prob.spec()
    ref = reference_solution(spec, prob.initial_condition, np.array([0.0, 5.0]), 0.01,
                             use_cache=False)
    assert np.max(np.abs(spec.to_physical(5.0, ref.final).imag)) < 1e-10


def test_make_problem():
    assert make_problem("oscillatory", r=10.0).r == 10.0
    assert make_problem("rswe", modes=8).modes == 8
    with pytest.raises(ConfigurationError):
        make_problem("unknown")
    with pytest.raises(ConfigurationError):
        make_problem("swinging_spring", omega_R=-1.0)
    with pytest.raises(ConfigurationError):
        make_problem("three_scale", omegas=(2.0, 0.0, 1.0))
    with pytest.raises(ConfigurationError):
        make_problem("decay", nonsense=1)


def test_reference_decay_second_order():
    prob = DecayProblem()
    errs = []
    for dt in (0.02, 0.01):
        ref = reference_solution(prob.spec(), prob.initial_condition,
                                 np.linspace(0, 2, 5), dt, use_cache=False)
        errs.append(np.max(np.abs(ref.states - prob.exact(ref.times))))
    assert errs[1] < 2e-5
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_reference_grid_must_be_divisible():
    prob = DecayProblem()
    with pytest.raises(ConfigurationError):
        reference_solution(prob.spec(), prob.initial_condition, np.array([0.0, 1.0]), 0.3,
                           use_cache=False)


def test_reference_cache_roundtrip(monkeypatch, tmp_path):
    monkeypatch.setenv("MLP_CACHE_DIR", str(tmp_path))
    prob = OscillatoryProblem(r=20.0)
    grid = np.linspace(0, 1, 11)
    first = reference_solution(prob.spec(), prob.initial_condition, grid, 1e-3)
    assert len(list(tmp_path.glob("*.ref"))) == 1

    def boom(*args, **kwargs):
        raise AssertionError("cache was not used")

    monkeypatch.setattr(problems_mod, "_integrate_serial", boom)
    second = reference_solution(prob.spec(), prob.initial_condition, grid, 1e-3)
    assert np.array_equal(first.states, second.states)


def test_reference_cache_layout(monkeypatch, tmp_path):
    import struct
    monkeypatch.setenv("MLP_CACHE_DIR", str(tmp_path))
    prob = ThreeTimescaleProblem()
    grid = np.array([0.0, 0.5, 1.0])
    ref = reference_solution(prob.spec(), prob.initial_condition, grid, 1e-2)
    raw = next(tmp_path.glob("*.ref")).read_bytes()
    magic, digest, dt_ref, n = struct.unpack_from("<8s32sdQ", raw)
    assert dt_ref == 1e-2 and n == 3 and len(digest) == 32
    body = np.frombuffer(raw[struct.calcsize("<8s32sdQ"):], dtype="<f8").reshape(3, 3, 2)
    assert np.array_equal(body[..., 0] + 1j * body[..., 1], ref.states)


def test_reference_cache_recovers_from_damage(monkeypatch, tmp_path):
    monkeypatch.setenv("MLP_CACHE_DIR", str(tmp_path))
    prob = OscillatoryProblem(r=20.0)
    grid = np.linspace(0, 1, 3)
    first = reference_solution(prob.spec(), prob.initial_condition, grid, 1e-2)
    path = next(tmp_path.glob("*.ref"))
    path.write_bytes(b"garbage")
    with pytest.warns(RuntimeWarning):
        again = reference_solution(prob.spec(), prob.initial_condition, grid, 1e-2)
    assert np.array_equal(first.states, again.states)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reference_solution(prob.spec(), prob.initial_condition, grid, 1e-2)


def test_cache_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("MLP_CACHE_DIR", str(tmp_path / "x"))
    assert cache_dir() == tmp_path / "x"
