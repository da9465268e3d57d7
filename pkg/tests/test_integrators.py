import numpy as np
import pytest

from mlparareal.core import ConfigurationError
from mlparareal.integrators import SplitRhs, advance, integrate, rk2_step, strang_step
from mlparareal.problems import exact_oscillatory

R = 10.0


def decay(t, y):
    return -y


def oscillatory_modulation(t, w):
    return -np.exp(1j * R * t) * w * w


def test_rk2_zero_rhs():
    y = np.array([1.0 + 2j, -3.0])
    np.testing.assert_array_equal(rk2_step(lambda t, y: 0 * y, 0.0, y, 0.1), y)


def test_rk2_decay_one_step():
    assert rk2_step(decay, 0.0, np.array([1.0]), 0.1)[0] == pytest.approx(0.905, abs=1e-15)


def test_rk2_does_not_modify_input():
    y = np.array([1.0 + 0j])
    rk2_step(lambda t, y: y, 0.0, y, 0.5)
    assert y[0] == 1.0


def test_rk2_coarse_decay_closed_form():
    # Eight midpoint steps multiply by (1 - h + h^2/2)^8.
    y, n = advance(rk2_step, decay, 0.0, 2.0, 0.25, np.array([1.0]))
    assert n == 8
    assert y[0].real == pytest.approx(0.78125 ** 8, rel=1e-14)
    assert abs(y[0] - np.exp(-2.0)) == pytest.approx(3.4426e-3, rel=1e-3)


def test_strang_without_nonlinearity_is_exact_flow():
    flow = SplitRhs(lambda t0, t1, y: np.exp(5j * (t1 - t0)) * y, lambda t, y: 0 * y)
    y = np.array([0.3 - 0.4j])
    np.testing.assert_allclose(strang_step(flow, 0.0, y, 0.01), np.exp(0.05j) * y,
                               rtol=0, atol=1e-14)


def test_strang_with_identity_flow_is_rk2():
    split = SplitRhs(lambda t0, t1, y: y, oscillatory_modulation)
    y = np.array([0.7 + 0.1j])
    np.testing.assert_array_equal(strang_step(split, 0.3, y, 0.05),
                                  rk2_step(oscillatory_modulation, 0.3, y, 0.05))


def test_integrate_zero_rhs_grid():
    traj = integrate(rk2_step, lambda t, y: 0 * y, 0.0, 1.0, 0.25, np.array([2.0]))
    assert len(traj) == 5
    assert traj.times[-1] == 1.0
    assert np.all(traj.states == 2.0)


def test_integrate_decay_fine():
    traj = integrate(rk2_step, decay, 0.0, 2.0, 2e-4, np.array([1.0]))
    assert abs(traj.final[0] - np.exp(-2.0)) < 1e-7


def test_integrate_rejects_fractional_steps():
    with pytest.raises(ConfigurationError):
        integrate(rk2_step, decay, 0.0, 7.5, 1.0, np.array([1.0]))


def test_integrate_deterministic():
    a = integrate(rk2_step, oscillatory_modulation, 0.0, 1.0, 1e-3, np.array([1.0]))
    b = integrate(rk2_step, oscillatory_modulation, 0.0, 1.0, 1e-3, np.array([1.0]))
    assert np.array_equal(a.states, b.states)


STEPS = (1e-2, 5e-3, 2.5e-3, 1.25e-3)


def _slope(errors):
    return np.polyfit(np.log(STEPS), np.log(errors), 1)[0]


def _errors(stepper, f, y0, exact, t1=1.0):
    return [abs(advance(stepper, f, 0.0, t1, h, y0)[0][0] - exact) for h in STEPS]


def test_rk2_order_decay():
    assert abs(_slope(_errors(rk2_step, decay, np.array([1.0]), np.exp(-1.0))) - 2) < 0.1


def test_rk2_order_oscillatory():
    exact = exact_oscillatory(R, 1.0, 1.0)
    errs = _errors(rk2_step, oscillatory_modulation, np.array([1.0 + 0j]), exact)
    assert abs(_slope(errs) - 2) < 0.1


def test_strang_order_decay():
    # x' = -x split into an exact half and an explicit half.
    split = SplitRhs(lambda t0, t1, y: np.exp(-0.5 * (t1 - t0)) * y, lambda t, y: -0.5 * y)
    errs = _errors(strang_step, split, np.array([1.0]), np.exp(-1.0))
    assert abs(_slope(errs) - 2) < 0.1


def test_strang_order_oscillatory():
    # Physical variable u = exp(i r t) w solves u' = i r u - u^2.
    split = SplitRhs(lambda t0, t1, y: np.exp(1j * R * (t1 - t0)) * y, lambda t, u: -u * u)
    exact = np.exp(1j * R) * exact_oscillatory(R, 1.0, 1.0)
    errs = _errors(strang_step, split, np.array([1.0 + 0j]), exact)
    assert abs(_slope(errs) - 2) < 0.1
