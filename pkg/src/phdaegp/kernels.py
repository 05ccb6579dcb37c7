"""Kernel algebra for scalar, multi-task and linearly transformed GPs.

All block layouts are task-major: for N points and D tasks, row index
``j * N + i`` belongs to task ``j`` at point ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class GaussianKernelParams:
    """Isotropic Gaussian kernel ``exp(-|x - x'|^2 / (2 phi^2))``."""

    phi: float

    def __post_init__(self):
        if not np.isfinite(self.phi) or self.phi <= 0:
            raise ContractError(f"length scale phi must be positive, got {self.phi}")


@dataclass(frozen=True)
class IntertaskParams:
    """Intertask covariance ``v v^T + diag(kappa)``.

    With ``kappa`` left at ``None`` the covariance is the pure rank-1 outer
    product. The optional diagonal keeps independent per-task variance.
    """

    v: np.ndarray
    kappa: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if v.ndim != 1:
            raise ContractError("task loadings v must be a vector")
        object.__setattr__(self, "v", v)
        if self.kappa is not None:
            kappa = np.atleast_1d(np.asarray(self.kappa, dtype=float))
            if kappa.shape != v.shape:
                raise ContractError("kappa must have the same length as v")
            if np.any(kappa < 0):
                raise ContractError("kappa must be non-negative")
            object.__setattr__(self, "kappa", kappa)

    @property
    def n_tasks(self) -> int:
        return self.v.shape[0]

    def matrix(self) -> np.ndarray:
        kt = np.outer(self.v, self.v)
        if self.kappa is not None:
            kt = kt + np.diag(self.kappa)
        return kt


@dataclass
class KernelMatrix:
    """Dense kernel matrix with its task-major block layout."""

    entries: np.ndarray
    n_rows: int
    n_cols: int
    n_tasks: int
    row_blocks: list = field(default_factory=list)
    col_blocks: list = field(default_factory=list)

    def block(self, j: int, jp: int) -> np.ndarray:
        return self.entries[
            j * self.n_rows:(j + 1) * self.n_rows,
            jp * self.n_cols:(jp + 1) * self.n_cols,
        ]


def _pair(x, x_prime):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape:
        raise ContractError(
            f"input dimensions disagree: {x.shape} vs {x_prime.shape}")
    return x, x_prime


def gaussian_kernel(x, x_prime, params: GaussianKernelParams) -> float:
    x, x_prime = _pair(x, x_prime)
    d2 = float(np.sum((x - x_prime) ** 2))
    return float(np.exp(-d2 / (2.0 * params.phi ** 2)))


def gaussian_kernel_dphi(x, x_prime, params: GaussianKernelParams) -> float:
    """Derivative of the Gaussian kernel with respect to ``phi``."""
    x, x_prime = _pair(x, x_prime)
    d2 = float(np.sum((x - x_prime) ** 2))
    return float(np.exp(-d2 / (2.0 * params.phi ** 2)) * d2 / params.phi ** 3)


def sq_dists(rows, cols) -> np.ndarray:
    """Pairwise squared distances, accumulated over input dimensions."""
    rows = _as_points(rows)
    cols = _as_points(cols)
    if rows.shape[1] != cols.shape[1]:
        raise ContractError("row and column inputs have different dimensions")
    d2 = np.zeros((rows.shape[0], cols.shape[0]))
    for k in range(rows.shape[1]):
        diff = rows[:, k, None] - cols[None, :, k]
        d2 += diff * diff
    return d2


def gram(rows, cols, params: GaussianKernelParams) -> np.ndarray:
    """Scalar Gaussian kernel matrix ``k(rows, cols)``."""
    return np.exp(-sq_dists(rows, cols) / (2.0 * params.phi ** 2))


def mt_kernel_block(x, x_prime, scalar: GaussianKernelParams,
                    tasks: IntertaskParams) -> np.ndarray:
    return gaussian_kernel(x, x_prime, scalar) * tasks.matrix()


def _check_transform(A, tasks: IntertaskParams) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    D = tasks.n_tasks
    if A.shape != (D, D):
        raise ContractError(f"transform must be {D}x{D}, got {A.shape}")
    return A


def transformed_kernel_block(x, x_prime, scalar: GaussianKernelParams,
                             tasks: IntertaskParams, A) -> np.ndarray:
    """``A k(x, x') A^T`` for the covariance of the process ``A z``."""
    A = _check_transform(A, tasks)
    return A @ mt_kernel_block(x, x_prime, scalar, tasks) @ A.T


def mixing_kernel_block(x, x_prime, scalar: GaussianKernelParams,
                        tasks: IntertaskParams, A, side: str) -> np.ndarray:
    """Cross covariance between ``A z`` and ``z``.

    ``side="left"`` gives ``A k`` (cov of ``A z`` with ``z``), ``side="right"``
    gives ``k A^T`` (cov of ``z`` with ``A z``).
    """
    A = _check_transform(A, tasks)
    block = mt_kernel_block(x, x_prime, scalar, tasks)
    if side == "left":
        return A @ block
    if side == "right":
        return block @ A.T
    raise ContractError(f"side must be 'left' or 'right', got {side!r}")


def _as_points(points) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] == 0:
        raise ContractError("input set must be a non-empty (N, d) array")
    return points


def assemble(rows, cols, block_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
             ) -> KernelMatrix:
    """Assemble a block kernel matrix by calling ``block_fn`` per point pair.

    This is the reference (slow) path; `assemble_separable` is the
    Kronecker-structured equivalent used during fitting.
    """
    rows = _as_points(rows)
    cols = _as_points(cols)
    if rows.shape[1] != cols.shape[1]:
        raise ContractError("row and column inputs have different dimensions")
    n_r, n_c = rows.shape[0], cols.shape[0]
    first = np.atleast_2d(block_fn(rows[0], cols[0]))
    D = first.shape[0]
    out = np.empty((n_r * D, n_c * D))
    for i in range(n_r):
        for ip in range(n_c):
            blk = first if (i == 0 and ip == 0) else np.atleast_2d(
                block_fn(rows[i], cols[ip]))
            out[i::n_r, ip::n_c] = blk
    return KernelMatrix(out, n_r, n_c, D,
                        row_blocks=[n_r] * D, col_blocks=[n_c] * D)


def assemble_separable(rows, cols, scalar: GaussianKernelParams,
                       task_cov: np.ndarray) -> KernelMatrix:
    """``task_cov ⊗ k(rows, cols)`` in task-major order.

    For a transformed kernel pass ``task_cov = A (v v^T) A^T``; for the mixing
    kernels pass ``A (v v^T)`` or ``(v v^T) A^T``.
    """
    task_cov = np.atleast_2d(np.asarray(task_cov, dtype=float))
    kx = gram(rows, cols, scalar)
    D = task_cov.shape[0]
    return KernelMatrix(np.kron(task_cov, kx), kx.shape[0], kx.shape[1], D,
                        row_blocks=[kx.shape[0]] * D,
                        col_blocks=[kx.shape[1]] * D)
