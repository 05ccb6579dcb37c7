import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phdaegp.errors import ContractError, OptimizationDiverged
from phdaegp.optim import AdamConfig, maximize


def quadratic(theta):
    return -float((theta[0] - 3.0) ** 2), np.array([-2.0 * (theta[0] - 3.0)])


def reference_adam(grad_fn, x0, lr=0.1, steps=200, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook ADAM descent on the negated objective, scalar case."""
    x, m, v = x0, 0.0, 0.0
    for t in range(1, steps + 1):
        g = -grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return x


def test_config_defaults_and_validation():
    c = AdamConfig()
    assert (c.learning_rate, c.iterations, c.beta1, c.beta2, c.eps) == (0.1, 200, 0.9, 0.999, 1e-8)
    for bad in ({"learning_rate": 0.0}, {"beta1": 1.0}, {"beta2": -0.1}, {"iterations": 0}):
        with pytest.raises(ContractError):
            AdamConfig(**bad)


def test_zero_gradient_is_fixed_point():
    init = np.array([1.5, -2.0])
    theta, trace = maximize(lambda x: (0.0, np.zeros(2)), init, AdamConfig(iterations=37))
    np.testing.assert_array_equal(theta, init)
    assert len(trace.values) == 38


def test_quadratic_converges():
    theta, trace = maximize(quadratic, np.array([0.0]), AdamConfig())
    assert abs(theta[0] - 3.0) <= 1e-3
    assert len(trace.values) == 201


def test_quadratic_matches_reference_recursion():
    theta, _ = maximize(quadratic, np.array([0.0]), AdamConfig())
    ref = reference_adam(lambda x: -2.0 * (x - 3.0), 0.0)
    assert theta[0] == pytest.approx(ref, rel=1e-14, abs=1e-14)


def test_single_nan_halves_learning_rate():
    calls = {"n": 0}

    def objective(theta):
        calls["n"] += 1
        if calls["n"] == 6:
            return math.nan, np.array([math.nan])
        return quadratic(theta)

    theta, trace = maximize(objective, np.array([0.0]), AdamConfig(iterations=50))
    assert trace.reverted_steps == [4]
    assert trace.learning_rates[4] == 0.1
    assert trace.learning_rates[5] == 0.05
    assert trace.learning_rates[-1] == 0.05
    assert len(trace.values) == 51
    assert all(np.isfinite(trace.values))


def test_two_consecutive_nans_diverge():
    calls = {"n": 0}

    def objective(theta):
        calls["n"] += 1
        if calls["n"] in (4, 5):
            return math.nan, np.array([0.0])
        return quadratic(theta)

    with pytest.raises(OptimizationDiverged):
        maximize(objective, np.array([0.0]), AdamConfig(iterations=20))


def test_non_finite_initial_point():
    with pytest.raises(OptimizationDiverged):
        maximize(lambda x: (math.inf, np.zeros(1)), np.zeros(1), AdamConfig())


def test_return_best_option():
    # a bumpy objective where the last iterate is not the best one
    def objective(theta):
        x = theta[0]
        return float(-(x - 1.0) ** 2 + 0.3 * math.cos(25 * x)), np.array(
            [-2 * (x - 1.0) - 7.5 * math.sin(25 * x)])

    best, trace = maximize(objective, np.array([0.0]), AdamConfig(iterations=60,
                                                                  return_best=True))
    last, trace2 = maximize(objective, np.array([0.0]), AdamConfig(iterations=60))
    assert objective(best)[0] == pytest.approx(max(trace.values))
    np.testing.assert_array_equal(last, trace2.final_params)
    np.testing.assert_array_equal(best, trace.best_params)


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_deterministic_and_running_max(seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(3, 3))
    Q = Q @ Q.T + np.eye(3)
    b = rng.normal(size=3)

    def objective(x):
        return float(-0.5 * x @ Q @ x + b @ x), -Q @ x + b

    init = rng.normal(size=3)
    t1, tr1 = maximize(objective, init, AdamConfig(iterations=40))
    t2, tr2 = maximize(objective, init, AdamConfig(iterations=40))
    np.testing.assert_array_equal(t1, t2)
    assert tr1.values == tr2.values
    rm = tr1.running_max()
    assert np.all(np.diff(rm) >= 0)
    assert np.all(rm >= np.asarray(tr1.values))


def test_likelihood_improves_on_circuit_data(circuit):
    from phdaegp.deriv import DerivativeMethod, build_derivatives
    from phdaegp.gp import MtGpModel, optimize_hyperparameters
    from phdaegp.harness import nested_subsets
    from phdaegp.phdae import build_outputs

    system, traj = circuit
    traj = build_derivatives(traj, DerivativeMethod("finite_difference"))
    (idx,) = nested_subsets(np.arange(len(traj)), [32], seed=0)
    data = build_outputs(traj.subset(idx), system)
    m0 = MtGpModel.with_default_init(data.inputs, data.targets, system.structure)
    _, trace = optimize_hyperparameters(m0, AdamConfig())
    assert trace.values[-1] >= trace.values[0]
