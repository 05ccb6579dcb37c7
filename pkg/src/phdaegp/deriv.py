"""Derivative data from sampled trajectories.

Three routes: second-order finite differences on (possibly non-uniform)
grids, the analytic time derivative of a per-component scalar GP fit, and an
exact oracle supplied by a benchmark.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError
from .gp import ScalarGpModel, median_distance, optimize_hyperparameters
from .kernels import GaussianKernelParams
from .optim import AdamConfig
from .system import Trajectory

log = logging.getLogger(__name__)

KINDS = ("finite_difference", "gp_full", "gp_train_only", "exact_oracle")
# CLI spellings
ALIASES = {"fd": "finite_difference", "gp-full": "gp_full",
           "gp-train": "gp_train_only", "exact": "exact_oracle"}


@dataclass(frozen=True)
class DerivativeMethod:
    """How to obtain state derivatives.

    ``gp_full`` and ``gp_train_only`` differ only in which samples the caller
    hands over: the whole dataset or the selected training subset.
    """

    kind: str = "gp_full"
    adam: AdamConfig = field(default_factory=AdamConfig)
    phi_init: Optional[float] = None

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ContractError(f"unknown derivative method {self.kind!r}")
        object.__setattr__(self, "kind", kind)

    @property
    def uses_gp(self) -> bool:
        return self.kind in ("gp_full", "gp_train_only")


def finite_difference(times, values) -> np.ndarray:
    """Three-point differences: central inside, one-sided at both ends.

    Exact for quadratics on any strictly increasing grid.
    """
    times = np.asarray(times, dtype=float).ravel()
    values = np.asarray(values, dtype=float)
    if times.shape[0] < 3:
        raise ContractError("finite differences need at least 3 samples")
    if np.any(np.diff(times) <= 0):
        raise ContractError("times must be strictly increasing")
    if values.shape[0] != times.shape[0]:
        raise ContractError("times and values have different lengths")
    return np.gradient(values, times, axis=0, edge_order=2)


def time_scale(times) -> float:
    """Initial length scale for a GP over time.

    Geometric mean of the median pairwise distance and the median sample
    spacing. The pairwise median alone is far too smooth for densely sampled
    series and stalls ADAM at a large noise variance.
    """
    times = np.asarray(times, dtype=float).ravel()
    if times.shape[0] < 2:
        return 1.0
    spacing = float(np.median(np.diff(np.sort(times))))
    return float(np.sqrt(median_distance(times) * spacing))


def fit_time_gp(times, values, method: DerivativeMethod | None = None
                ) -> ScalarGpModel:
    method = method or DerivativeMethod()
    times = np.asarray(times, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if times.shape[0] < 2:
        raise ContractError("GP derivative needs at least 2 samples")
    model = ScalarGpModel.with_default_init(times[:, None], values)
    phi0 = method.phi_init if method.phi_init is not None else time_scale(times)
    model = ScalarGpModel(model.inputs, model.targets,
                          GaussianKernelParams(phi0), model.noise_var)
    fitted, _ = optimize_hyperparameters(model, method.adam)
    return fitted


def gp_derivative(times, values, method: DerivativeMethod | None = None,
                  eval_times=None) -> np.ndarray:
    """Derivative of the posterior mean of a GP fitted to ``(t, value)``.

    Hyperparameters are optimized with ADAM; ``eval_times`` defaults to the
    sample times.
    """
    model = fit_time_gp(times, values, method)
    ts = model.inputs[:, 0] if eval_times is None else np.asarray(eval_times, float)
    return model.mean_derivative(ts[:, None])


def build_derivatives(traj: Trajectory, method: DerivativeMethod,
                      components=None) -> Trajectory:
    """Fill ``traj.derivs`` component by component.

    ``components`` restricts the expensive GP route to the listed state
    indices; the remaining columns get finite differences (or zeros when the
    trajectory is too short). Callers pass the differential states, since
    algebraic columns are masked by ``E`` downstream.
    """
    n, d = traj.states.shape
    if method.kind == "exact_oracle":
        derivs = traj.oracle_derivs()
        return traj.with_derivs(derivs, derivative_method=method.kind)

    selected = list(range(d)) if components is None else [int(c) for c in components]
    derivs = np.zeros((n, d))
    for k in range(d):
        col = traj.states[:, k]
        if method.kind == "finite_difference" or k not in selected:
            if n >= 3:
                derivs[:, k] = finite_difference(traj.times, col)
            continue
        if np.ptp(col) == 0:
            continue
        derivs[:, k] = gp_derivative(traj.times, col, method)
        log.debug("GP derivative for state %d on %d samples", k, n)
    return traj.with_derivs(derivs, derivative_method=method.kind,
                            derivative_components=selected)
