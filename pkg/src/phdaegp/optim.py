"""ADAM ascent on an objective with analytic gradient."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, OptimizationDiverged

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.1
    iterations: int = 200
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    # False: return the last iterate; True: the best objective seen
    return_best: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ContractError("beta1 and beta2 must lie in [0, 1)")
        if self.iterations < 1:
            raise ContractError("iterations must be >= 1")


@dataclass
class OptimTrace:
    """Objective per iteration (index 0 is the initial point).

    ``converged`` flags a stagnating objective over the last ten steps.
    """

    values: list = field(default_factory=list)
    learning_rates: list = field(default_factory=list)
    best_params: np.ndarray | None = None
    final_params: np.ndarray | None = None
    best_value: float = -np.inf
    converged: bool = False
    reverted_steps: list = field(default_factory=list)

    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(np.asarray(self.values))


def _finite(value, grad) -> bool:
    return bool(np.isfinite(value) and np.all(np.isfinite(grad)))


def maximize(objective_and_gradient: Callable, init_params, config: AdamConfig
             ) -> tuple[np.ndarray, OptimTrace]:
    """Run exactly ``config.iterations`` ADAM ascent steps.

    The update is ADAM descent on the negated objective. A non-finite
    evaluation reverts the step and halves the learning rate; a second one
    in a row raises `OptimizationDiverged`. Returns the last accepted iterate,
    or the best one seen when ``config.return_best`` is set.
    """
    theta = np.array(init_params, dtype=float)
    value, grad = objective_and_gradient(theta)
    if not _finite(value, grad):
        raise OptimizationDiverged("objective is not finite at the initial point")
    grad = np.asarray(grad, dtype=float)

    lr = config.learning_rate
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    trace = OptimTrace(values=[float(value)], learning_rates=[lr],
                       best_params=theta.copy(), best_value=float(value))
    last_failed = False
    t = 0
    for k in range(config.iterations):
        t += 1
        g = -grad
        m_new = config.beta1 * m + (1 - config.beta1) * g
        v_new = config.beta2 * v + (1 - config.beta2) * g * g
        m_hat = m_new / (1 - config.beta1 ** t)
        v_hat = v_new / (1 - config.beta2 ** t)
        candidate = theta - lr * m_hat / (np.sqrt(v_hat) + config.eps)

        new_value, new_grad = objective_and_gradient(candidate)
        if not _finite(new_value, new_grad):
            if last_failed:
                raise OptimizationDiverged(
                    f"optimization diverged: two consecutive non-finite "
                    f"evaluations at iteration {k}")
            last_failed = True
            lr *= 0.5
            t -= 1
            trace.reverted_steps.append(k)
            trace.values.append(float(value))
            trace.learning_rates.append(lr)
            log.debug("non-finite objective at step %d; lr -> %g", k, lr)
            continue

        last_failed = False
        theta, value, grad = candidate, float(new_value), np.asarray(new_grad, dtype=float)
        m, v = m_new, v_new
        trace.values.append(value)
        trace.learning_rates.append(lr)
        if value > trace.best_value:
            trace.best_value = value
            trace.best_params = theta.copy()

    # informational only: the run length is fixed
    tail = trace.values[-11:]
    trace.converged = abs(tail[-1] - tail[0]) <= 1e-4 * (1.0 + abs(tail[-1]))
    trace.final_params = theta.copy()
    chosen = trace.best_params if config.return_best else theta
    return chosen.copy(), trace
