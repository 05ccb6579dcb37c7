"""Effort identification for constant-matrix pH-DAEs.

Pipeline: derivative data, outputs ``y_i = E x'(t_i) - B u(t_i)``, an ADAM
fit of the multi-task GP over ``z_JR = (J - R) z``, prediction of ``z_JR`` and
recovery of ``z`` by conditioning. Also subsystem coupling and structural
validators (DAE residual, dissipativity, compatibility).
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.linalg import block_diag, solve_triangular

from . import kernels
from .deriv import DerivativeMethod, build_derivatives
from .errors import ContractError, NotIdentifiableError
from .gp import (MtGpModel, PosteriorSummary, cholesky_with_jitter,
                 optimize_hyperparameters)
from .kernels import GaussianKernelParams, IntertaskParams
from .optim import AdamConfig
from .system import PhDaeSystem, Trajectory, check_skew

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
# kernel-conditioning recovery is cross-checked against the pointwise solve
# when J - R is at least this well conditioned
CHECK_COND = 1e8


@dataclass
class TrainingData:
    inputs: np.ndarray
    targets: np.ndarray  # (N, D)

    @property
    def stacked(self) -> np.ndarray:
        """Task-major stacking: all first components, then all second, ..."""
        return self.targets.T.ravel()


def build_outputs(traj: Trajectory, system: PhDaeSystem) -> TrainingData:
    """Inputs ``x(t_i)`` and outputs ``E x'(t_i) - B u(t_i)``.

    Only derivative columns of differential states enter, so the content of
    algebraic columns is irrelevant.
    """
    if traj.state_dim != system.state_dim or traj.input_dim != system.input_dim:
        raise ContractError("trajectory and system dimensions disagree")
    diff = system.differential
    if diff.size and traj.derivs is None:
        raise ContractError(
            "trajectory has no derivative data; run the derivative construction "
            "step (deriv.build_derivatives) first")
    flow = np.zeros_like(traj.states, dtype=float)
    if diff.size:
        flow = traj.derivs[:, diff] @ system.E[:, diff].T
    targets = flow - traj.inputs @ system.B.T
    return TrainingData(traj.states.copy(), targets)


@dataclass(frozen=True)
class IdentifyConfig:
    """Settings for `identify_effort`.

    ``derivative=None`` means the trajectory already carries derivatives.
    ``task_diagonal`` adds ``diag(kappa)`` to the rank-1 intertask matrix.
    """

    adam: AdamConfig = field(default_factory=AdamConfig)
    derivative: Optional[DerivativeMethod] = None
    task_diagonal: bool = True
    seed: int = 0


@dataclass
class EffortModel:
    gp: MtGpModel
    system: PhDaeSystem
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.array_equal(self.gp.transform, self.system.structure):
            raise ContractError("GP transform must equal J - R of the system")

    @property
    def transform(self) -> np.ndarray:
        return self.gp.transform

    def predict_transformed(self, eval_points, want_covariance: bool = False
                            ) -> PosteriorSummary:
        """Posterior of ``z_JR``; ``mean`` is returned as an ``(N, D)`` array."""
        xs = kernels._as_points(eval_points)
        post = self.gp.posterior(xs, want_covariance)
        mean = post.mean.reshape(self.gp.n_tasks, xs.shape[0]).T
        return PosteriorSummary(mean, post.covariance)

    def recover_effort(self, eval_points, method: str = "solve") -> np.ndarray:
        """Mean effort ``z`` at ``eval_points`` as an ``(N, D)`` array.

        ``method="kernel"`` conditions the joint prior of ``(z_JR, z)`` at the
        evaluation points on the predicted ``z_JR``; ``"solve"`` uses the
        equivalent pointwise solve with ``J - R``.
        """
        xs = kernels._as_points(eval_points)
        y_star = self.predict_transformed(xs).mean
        A = self.transform
        solved = np.linalg.solve(A, y_star.T).T
        if method == "solve":
            return solved
        if method != "kernel":
            raise ContractError(f"unknown recovery method {method!r}")
        z = recover_by_conditioning(xs, y_star, self.gp.scalar, self.gp.tasks, A)
        if np.linalg.cond(A) < CHECK_COND:
            scale = max(float(np.max(np.abs(solved))), 1e-300)
            gap = float(np.max(np.abs(z - solved))) / scale
            self.metadata["recovery_identity_gap"] = gap
            if gap > 1e-6:
                log.warning("kernel recovery differs from pointwise solve by %.3g", gap)
        return z

    def to_dict(self) -> dict:
        g = self.gp
        return {
            "system": self.system.to_dict(),
            "inputs": g.inputs.tolist(),
            "targets": g.target_matrix.tolist(),
            "phi": g.scalar.phi,
            "v": g.tasks.v.tolist(),
            "kappa": None if g.tasks.kappa is None else g.tasks.kappa.tolist(),
            "noise_vars": g.noise_vars.tolist(),
            "metadata": self.metadata,
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=_jsonable))

    @classmethod
    def from_dict(cls, doc: dict, system: PhDaeSystem | None = None) -> "EffortModel":
        stored = PhDaeSystem.from_dict(doc["system"])
        system = stored if system is None else stored.with_oracles(system)
        kappa = doc.get("kappa")
        gp = MtGpModel.from_targets(
            np.asarray(doc["inputs"]), np.asarray(doc["targets"]),
            GaussianKernelParams(doc["phi"]),
            IntertaskParams(np.asarray(doc["v"]),
                            None if kappa is None else np.asarray(kappa)),
            np.asarray(doc["noise_vars"]), system.structure).fit_cache()
        return cls(gp, system, dict(doc.get("metadata", {})))

    @classmethod
    def from_json(cls, path, system: PhDaeSystem | None = None) -> "EffortModel":
        return cls.from_dict(json.loads(Path(path).read_text()), system)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def recover_by_conditioning(eval_points, y_star: np.ndarray,
                            scalar: GaussianKernelParams, tasks: IntertaskParams,
                            A: np.ndarray) -> np.ndarray:
    """``k_{I,JR}(X*, X*) k_JR(X*, X*)^-1 Y*`` with dense task-major matrices."""
    xs = kernels._as_points(eval_points)
    T = tasks.matrix()
    kx = kernels.gram(xs, xs, scalar)
    k_jr = np.kron(A @ T @ A.T, kx)
    k_mix = np.kron(T @ A.T, kx)
    L, _ = cholesky_with_jitter(k_jr)
    stacked = np.asarray(y_star, dtype=float).T.ravel()
    coef = solve_triangular(L.T, solve_triangular(L, stacked, lower=True), lower=False)
    z = k_mix @ coef
    return z.reshape(A.shape[0], xs.shape[0]).T


def check_identifiable(system: PhDaeSystem) -> float:
    cond = float(np.linalg.cond(system.structure))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NotIdentifiableError(
            f"effort not identifiable: J - R is singular or near-singular "
            f"(condition number {cond:.3g}); z is recoverable only if J - R is regular")
    return cond


def identify_effort(traj: Trajectory, system: PhDaeSystem,
                    config: IdentifyConfig | None = None) -> EffortModel:
    """Fit the transformed multi-task GP to one trajectory (or subset)."""
    config = config or IdentifyConfig()
    if len(traj) == 0:
        raise ContractError("trajectory is empty")
    cond = check_identifiable(system)
    started = time.perf_counter()
    if config.derivative is not None:
        traj = build_derivatives(traj, config.derivative,
                                 components=system.differential)
    data = build_outputs(traj, system)
    model0 = MtGpModel.with_default_init(data.inputs, data.targets,
                                         transform=system.structure,
                                         task_diagonal=config.task_diagonal)
    fitted, trace = optimize_hyperparameters(model0, config.adam)
    meta = {
        "n_train": len(traj),
        "seed": config.seed,
        "derivative_method": traj.metadata.get(
            "derivative_method",
            None if config.derivative is None else config.derivative.kind),
        "cond_J_minus_R": cond,
        "jitter": fitted.jitter,
        "phi": fitted.scalar.phi,
        "v": fitted.tasks.v.tolist(),
        "kappa": None if fitted.tasks.kappa is None else fitted.tasks.kappa.tolist(),
        "noise_vars": fitted.noise_vars.tolist(),
        "lml_initial": trace.values[0],
        "lml_final": trace.values[-1],
        "reverted_steps": list(trace.reverted_steps),
        "fit_seconds": time.perf_counter() - started,
    }
    return EffortModel(fitted, system, meta)


# --------------------------------------------------------------------------
# coupling


@dataclass
class CouplingSpec:
    """Subsystems joined by ``u_hat + C_hat y_hat = 0``.

    ``coupling_widths[i]`` is the number of leading input columns of
    subsystem ``i`` that are coupling ports; the rest stay external.
    """

    subsystems: list
    C_hat: np.ndarray
    coupling_widths: list

    def __post_init__(self):
        self.C_hat = np.atleast_2d(np.asarray(self.C_hat, dtype=float)) \
            if np.size(self.C_hat) else np.zeros((0, 0))
        if len(self.coupling_widths) != len(self.subsystems):
            raise ContractError("need one coupling width per subsystem")
        for s, w in zip(self.subsystems, self.coupling_widths):
            if not 0 <= w <= s.input_dim:
                raise ContractError("coupling width exceeds subsystem input size")
        n_hat = sum(self.coupling_widths)
        if self.C_hat.shape != (n_hat, n_hat):
            raise ContractError(f"C_hat must be {n_hat}x{n_hat}")
        if not check_skew(self.C_hat):
            raise ContractError("C_hat must be skew-symmetric")


def _blocks(mats, rows):
    """Block diagonal that tolerates zero-width blocks."""
    cols = [m.shape[1] for m in mats]
    out = np.zeros((sum(rows), sum(cols)))
    r = c = 0
    for m, nr, nc in zip(mats, rows, cols):
        out[r:r + nr, c:c + nc] = m
        r += nr
        c += nc
    return out


def couple(spec: CouplingSpec) -> PhDaeSystem:
    """Condense coupled subsystems into one pH-DAE.

    ``J~ = J - B_hat C_hat B_hat^T``; the remaining ports form ``B_bar``.
    """
    subs = spec.subsystems
    dims = [s.state_dim for s in subs]
    E = block_diag(*[s.E for s in subs])
    J = block_diag(*[s.J for s in subs])
    R = block_diag(*[s.R for s in subs])
    B_hat = _blocks([s.B[:, :w] for s, w in zip(subs, spec.coupling_widths)], dims)
    B_bar = _blocks([s.B[:, w:] for s, w in zip(subs, spec.coupling_widths)], dims)
    J_tilde = J - B_hat @ spec.C_hat @ B_hat.T
    J_tilde = 0.5 * (J_tilde - J_tilde.T)  # exact skewness against round-off

    offsets = np.cumsum([0] + dims)

    def stacked(attr):
        fns = [getattr(s, attr) for s in subs]
        if any(f is None for f in fns):
            return None

        def fn(x):
            x = np.atleast_2d(x)
            return np.hstack([np.atleast_2d(f(x[:, offsets[i]:offsets[i + 1]]))
                              .reshape(x.shape[0], -1)
                              for i, f in enumerate(fns)])
        return fn

    ham = None
    if all(s.hamiltonian is not None for s in subs):
        def ham(x):
            x = np.atleast_2d(x)
            return sum(s.hamiltonian(x[:, offsets[i]:offsets[i + 1]])
                       for i, s in enumerate(subs))

    labels = tuple(f"{s.name}[{i}].{lab}" for i, s in enumerate(subs) for lab in s.labels)
    return PhDaeSystem(E, J_tilde, R, B_bar, labels=labels, name="coupled",
                       effort=stacked("effort"), hamiltonian=ham,
                       hamiltonian_gradient=stacked("hamiltonian_gradient"),
                       metadata={"subsystems": [s.name for s in subs]})


# --------------------------------------------------------------------------
# validators


@dataclass
class DissipativityReport:
    max_violation: float
    tolerance: float
    step: float
    passed: bool
    violations: np.ndarray = field(repr=False)


def check_dissipativity(traj: Trajectory, system: PhDaeSystem, efforts=None,
                        C: float = 10.0) -> DissipativityReport:
    """Compare ``Delta H / Delta t`` with the supplied power ``y^T u``.

    Power is taken at the left sample of each interval; the pass threshold
    is ``C * h`` with ``h`` the largest step.
    """
    if system.hamiltonian is None:
        raise ContractError("dissipativity check needs a Hamiltonian oracle")
    if len(traj) < 2:
        raise ContractError("need at least two samples")
    z = system.efforts(traj.states) if efforts is None else np.asarray(efforts, float)
    H = np.asarray(system.hamiltonian(traj.states), dtype=float).ravel()
    dt = np.diff(traj.times)
    y = z @ system.B
    power = np.sum(y * traj.inputs, axis=1)
    viol = np.diff(H) / dt - power[:-1]
    h = float(np.max(dt))
    worst = float(np.max(viol))
    return DissipativityReport(worst, C * h, h, worst <= C * h, viol)


def check_compatibility(system: PhDaeSystem, points) -> float:
    """Max over points of ``|E^T z(x) - grad H(x)|_inf``."""
    if system.effort is None or system.hamiltonian_gradient is None:
        raise ContractError("compatibility check needs effort and gradient oracles")
    x = np.atleast_2d(np.asarray(points, dtype=float))
    lhs = system.efforts(x) @ system.E
    rhs = np.asarray(system.hamiltonian_gradient(x), dtype=float)
    return float(np.max(np.abs(lhs - rhs)))


def dae_residual(traj: Trajectory, system: PhDaeSystem, derivs=None) -> np.ndarray:
    """Row-wise ``|E x' - (J - R) z(x) - B u|_inf``."""
    if derivs is None:
        derivs = traj.derivs if traj.derivs is not None else traj.oracle_derivs()
    derivs = np.asarray(derivs, dtype=float)
    diff = system.differential
    flow = derivs[:, diff] @ system.E[:, diff].T
    res = flow - system.transformed_efforts(traj.states) - traj.inputs @ system.B.T
    return np.max(np.abs(res), axis=1)
