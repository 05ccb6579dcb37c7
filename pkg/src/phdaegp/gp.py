"""Exact GP inference for scalar and (transformed) multi-task models.

Both model types share one factorization routine with a fixed jitter
escalation, a log marginal likelihood evaluated from the Cholesky factor and
an analytic gradient in the unconstrained parameterization
``phi = exp(theta_phi)``, ``sigma^2 = exp(theta_sigma)``, ``v`` free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import lapack, solve_triangular
from scipy.spatial.distance import pdist

from . import kernels
from .errors import ContractError, NonPSDKernelError
from .kernels import GaussianKernelParams, IntertaskParams
from .optim import AdamConfig, OptimTrace, maximize

LOG_2PI = math.log(2.0 * math.pi)
# Relative to mean(diag); 0.0 is the unjittered first attempt.
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def cholesky_with_jitter(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, adding escalating diagonal jitter.

    Returns the factor and the absolute jitter added (0.0 if none).
    """
    if not np.all(np.isfinite(K)):
        raise NonPSDKernelError("kernel system contains non-finite entries")
    scale = float(np.mean(np.diag(K)))
    n = K.shape[0]
    for eps in JITTER_LADDER:
        jitter = eps * scale
        Kj = K + jitter * np.eye(n) if jitter > 0 else K
        L, info = lapack.dpotrf(Kj, lower=1, clean=1)
        if info == 0:
            return L, jitter
    raise NonPSDKernelError(
        f"non-PSD kernel system: factorization failed at jitter "
        f"{JITTER_LADDER[-1]:g} * mean(diag)")


def _inverse_from_cholesky(L: np.ndarray) -> np.ndarray:
    inv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise NonPSDKernelError("could not invert factorized kernel system")
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T


def _cho_solve(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    tmp = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, tmp, lower=False, check_finite=False)


def median_distance(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(points)))
    return med if med > 0 else 1.0


def _noise_init(values: np.ndarray) -> float:
    # 1e-2 * variance of the targets; zero-variance targets get a floor
    return 1e-2 * max(float(np.var(values)), 1e-8)


@dataclass
class PosteriorSummary:
    mean: np.ndarray
    covariance: Optional[np.ndarray] = None


@dataclass
class ScalarGpModel:
    """Zero-mean GP with a Gaussian kernel and homoscedastic noise."""

    inputs: np.ndarray
    targets: np.ndarray
    kernel: GaussianKernelParams
    noise_var: float
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    jitter: float = 0.0
    # pairwise squared distances of the inputs, shared across parameter updates
    sq_dists: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.inputs = kernels._as_points(self.inputs)
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if self.targets.shape[0] != self.inputs.shape[0]:
            raise ContractError("targets and inputs have different lengths")
        if not self.noise_var >= 0:
            raise ContractError("noise variance must be non-negative")

    @property
    def n(self) -> int:
        return self.targets.shape[0]

    def _sq_dists(self) -> np.ndarray:
        if self.sq_dists is None:
            self.sq_dists = kernels.sq_dists(self.inputs, self.inputs)
        return self.sq_dists

    def prior_matrix(self) -> np.ndarray:
        return np.exp(self._sq_dists() * (-0.5 / self.kernel.phi ** 2))

    def fit_cache(self) -> "ScalarGpModel":
        K = self.prior_matrix()
        K[np.diag_indices_from(K)] += self.noise_var
        self.chol, self.jitter = cholesky_with_jitter(K)
        self.alpha = _cho_solve(self.chol, self.targets)
        return self

    def _require_cache(self):
        if self.chol is None:
            self.fit_cache()

    def log_marginal_likelihood(self) -> float:
        self._require_cache()
        return _lml(self.chol, self.alpha, self.targets)

    def lml_gradient(self) -> np.ndarray:
        """Gradient with respect to ``(log phi, log sigma^2)``."""
        self._require_cache()
        # 0.5 * (alpha^T dK alpha - tr(K^-1 dK)) without forming alpha alpha^T
        k_inv = _inverse_from_cholesky(self.chol)
        d2 = self._sq_dists()
        dk = self.prior_matrix()
        dk *= d2
        dk /= self.kernel.phi ** 2
        g_phi = 0.5 * (float(self.alpha @ (dk @ self.alpha)) - float(np.vdot(k_inv, dk)))
        g_noise = 0.5 * self.noise_var * (float(self.alpha @ self.alpha)
                                          - float(np.trace(k_inv)))
        return np.array([g_phi, g_noise])

    def posterior(self, eval_inputs, want_covariance: bool = False
                  ) -> PosteriorSummary:
        self._require_cache()
        xs = kernels._as_points(eval_inputs)
        ks = kernels.gram(xs, self.inputs, self.kernel)
        mean = ks @ self.alpha
        cov = None
        if want_covariance:
            V = solve_triangular(self.chol, ks.T, lower=True)
            cov = kernels.gram(xs, xs, self.kernel) - V.T @ V
        return PosteriorSummary(mean, cov)

    def mean_derivative(self, eval_inputs) -> np.ndarray:
        """Time derivative of the posterior mean for 1-D inputs."""
        self._require_cache()
        if self.inputs.shape[1] != 1:
            raise ContractError("mean_derivative needs one-dimensional inputs")
        ts = kernels._as_points(eval_inputs)
        ks = kernels.gram(ts, self.inputs, self.kernel)
        diff = ts[:, 0, None] - self.inputs[None, :, 0]
        return (ks * (-diff / self.kernel.phi ** 2)) @ self.alpha

    # unconstrained parameterization
    def get_theta(self) -> np.ndarray:
        return np.array([math.log(self.kernel.phi), math.log(self.noise_var)])

    def with_theta(self, theta) -> "ScalarGpModel":
        theta = np.asarray(theta, dtype=float)
        return ScalarGpModel(self.inputs, self.targets,
                             GaussianKernelParams(float(np.exp(theta[0]))),
                             float(np.exp(theta[1])), sq_dists=self._sq_dists())

    @classmethod
    def with_default_init(cls, inputs, targets) -> "ScalarGpModel":
        inputs = kernels._as_points(inputs)
        targets = np.asarray(targets, dtype=float)
        return cls(inputs, targets, GaussianKernelParams(median_distance(inputs)),
                   _noise_init(targets))


@dataclass
class MtGpModel:
    """Multi-task GP over ``A z`` with ``z ~ GP(0, k(x, x') * K_T)``.

    ``transform`` is the constant matrix ``A``; the identity gives a plain
    multi-task GP through the same code path. Targets are stored task-major.
    """

    inputs: np.ndarray
    stacked_targets: np.ndarray
    scalar: GaussianKernelParams
    tasks: IntertaskParams
    noise_vars: np.ndarray
    transform: Optional[np.ndarray] = None
    chol: Optional[np.ndarray] = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)
    jitter: float = 0.0

    def __post_init__(self):
        self.inputs = kernels._as_points(self.inputs)
        D = self.tasks.n_tasks
        N = self.inputs.shape[0]
        self.stacked_targets = np.asarray(self.stacked_targets, dtype=float).ravel()
        if self.stacked_targets.shape[0] != N * D:
            raise ContractError(
                f"expected {N * D} stacked targets, got {self.stacked_targets.shape[0]}")
        self.noise_vars = np.atleast_1d(np.asarray(self.noise_vars, dtype=float))
        if self.noise_vars.shape != (D,) or np.any(~(self.noise_vars >= 0)):
            raise ContractError("noise_vars must be D non-negative values")
        if self.transform is None:
            self.transform = np.eye(D)
        self.transform = np.asarray(self.transform, dtype=float)
        if self.transform.shape != (D, D):
            raise ContractError("transform must be D x D")

    @classmethod
    def from_targets(cls, inputs, targets, scalar, tasks, noise_vars,
                     transform=None) -> "MtGpModel":
        """Build from an ``(N, D)`` target matrix."""
        targets = np.asarray(targets, dtype=float)
        return cls(inputs, targets.T.ravel(), scalar, tasks, noise_vars, transform)

    @property
    def n_points(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_tasks(self) -> int:
        return self.tasks.n_tasks

    @property
    def target_matrix(self) -> np.ndarray:
        return self.stacked_targets.reshape(self.n_tasks, self.n_points).T

    def task_covariance(self) -> np.ndarray:
        A = self.transform
        return A @ self.tasks.matrix() @ A.T

    def noise_diagonal(self) -> np.ndarray:
        return np.repeat(self.noise_vars, self.n_points)

    def prior_matrix(self) -> np.ndarray:
        return np.kron(self.task_covariance(),
                       kernels.gram(self.inputs, self.inputs, self.scalar))

    def fit_cache(self) -> "MtGpModel":
        K = self.prior_matrix()
        K[np.diag_indices_from(K)] += self.noise_diagonal()
        self.chol, self.jitter = cholesky_with_jitter(K)
        self.alpha = _cho_solve(self.chol, self.stacked_targets)
        return self

    def _require_cache(self):
        if self.chol is None:
            self.fit_cache()

    def log_marginal_likelihood(self) -> float:
        self._require_cache()
        return _lml(self.chol, self.alpha, self.stacked_targets)

    def lml_gradient(self) -> np.ndarray:
        """Gradient with respect to `get_theta` ordering.

        Uses ``dL = 1/2 sum((alpha alpha^T - K^-1) * dK)`` with the
        Kronecker structure reduced to D x D block inner products.
        """
        self._require_cache()
        N, D = self.n_points, self.n_tasks
        A = self.transform
        P = self.task_covariance()
        W = np.outer(self.alpha, self.alpha) - _inverse_from_cholesky(self.chol)
        W4 = W.reshape(D, N, D, N)
        d2 = kernels.sq_dists(self.inputs, self.inputs)
        kx = np.exp(-d2 / (2.0 * self.scalar.phi ** 2))
        dkx = kx * d2 / self.scalar.phi ** 2
        M = np.einsum("aibj,ij->ab", W4, kx)
        M_phi = np.einsum("aibj,ij->ab", W4, dkx)

        g_phi = 0.5 * float(np.sum(P * M_phi))
        AtMA = A.T @ M @ A
        g_v = AtMA @ self.tasks.v
        parts = [np.array([g_phi]), g_v]
        if self.tasks.kappa is not None:
            parts.append(0.5 * self.tasks.kappa * np.diag(AtMA))
        g_noise = 0.5 * self.noise_vars * np.einsum("aiai->a", W4)
        parts.append(g_noise)
        return np.concatenate(parts)

    def cross_matrix(self, eval_inputs) -> np.ndarray:
        return np.kron(self.task_covariance(),
                       kernels.gram(eval_inputs, self.inputs, self.scalar))

    def posterior(self, eval_inputs, want_covariance: bool = False
                  ) -> PosteriorSummary:
        """Posterior of the stacked outputs at ``eval_inputs`` (task-major)."""
        self._require_cache()
        xs = kernels._as_points(eval_inputs)
        P = self.task_covariance()
        ks = kernels.gram(xs, self.inputs, self.scalar)
        alpha_mat = self.alpha.reshape(self.n_tasks, self.n_points)
        mean = (P @ alpha_mat @ ks.T).ravel()
        cov = None
        if want_covariance:
            cross = np.kron(P, ks)
            V = solve_triangular(self.chol, cross.T, lower=True)
            cov = np.kron(P, kernels.gram(xs, xs, self.scalar)) - V.T @ V
        return PosteriorSummary(mean, cov)

    # unconstrained parameterization: [log phi, v, (log kappa), log sigma^2]
    def get_theta(self) -> np.ndarray:
        parts = [np.array([math.log(self.scalar.phi)]), self.tasks.v]
        if self.tasks.kappa is not None:
            parts.append(np.log(self.tasks.kappa))
        parts.append(np.log(self.noise_vars))
        return np.concatenate(parts)

    def with_theta(self, theta) -> "MtGpModel":
        theta = np.asarray(theta, dtype=float)
        D = self.n_tasks
        phi = float(np.exp(theta[0]))
        v = theta[1:1 + D]
        off = 1 + D
        kappa = None
        if self.tasks.kappa is not None:
            kappa = np.exp(theta[off:off + D])
            off += D
        noise = np.exp(theta[off:off + D])
        return replace(self, scalar=GaussianKernelParams(phi),
                       tasks=IntertaskParams(v.copy(), kappa),
                       noise_vars=noise, chol=None, alpha=None, jitter=0.0)

    @classmethod
    def with_default_init(cls, inputs, targets, transform=None,
                          task_diagonal: bool = True) -> "MtGpModel":
        """Median-distance length scale, unit loadings, 1% noise per task."""
        inputs = kernels._as_points(inputs)
        targets = np.asarray(targets, dtype=float)
        D = targets.shape[1]
        kappa = np.ones(D) if task_diagonal else None
        noise = np.array([_noise_init(targets[:, j]) for j in range(D)])
        return cls.from_targets(inputs, targets,
                                GaussianKernelParams(median_distance(inputs)),
                                IntertaskParams(np.ones(D), kappa), noise,
                                transform)


def _lml(L: np.ndarray, alpha: np.ndarray, y: np.ndarray) -> float:
    n = y.shape[0]
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


def optimize_hyperparameters(model, config: AdamConfig | None = None):
    """Maximize the log marginal likelihood with ADAM.

    Returns the model at the parameters chosen by ``config`` (final iterate
    unless ``return_best``) and the trace.
    """
    config = config or AdamConfig()

    def objective(theta):
        try:
            m = model.with_theta(theta).fit_cache()
            return m.log_marginal_likelihood(), m.lml_gradient()
        except (NonPSDKernelError, FloatingPointError, OverflowError, ValueError):
            return math.nan, np.full_like(theta, math.nan)

    theta, trace = maximize(objective, model.get_theta(), config)
    return model.with_theta(theta).fit_cache(), trace


__all__ = [
    "MtGpModel", "PosteriorSummary", "ScalarGpModel", "cholesky_with_jitter",
    "median_distance", "optimize_hyperparameters", "OptimTrace",
]
