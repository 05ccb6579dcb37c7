"""Constant-matrix pH-DAE systems and sampled trajectories."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ContractError

SKEW_TOL = 1e-12
PSD_TOL = 1e-10


def _matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ContractError(f"{name} must be a 2-D matrix")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    return a


def check_skew(J: np.ndarray, tol: float = SKEW_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(J)))) if J.size else 1.0
    return bool(np.max(np.abs(J + J.T), initial=0.0) <= tol * scale)


def check_psd(R: np.ndarray, tol: float = PSD_TOL) -> bool:
    if R.size == 0:
        return True
    if np.max(np.abs(R - R.T)) > SKEW_TOL * max(1.0, float(np.max(np.abs(R)))):
        return False
    eig = np.linalg.eigvalsh(R)
    return bool(eig[0] >= -tol * max(float(eig[-1]), 1.0))


def differential_indices(E: np.ndarray) -> np.ndarray:
    """State indices whose row or column of ``E`` is non-zero."""
    nz = np.any(E != 0, axis=1) | np.any(E != 0, axis=0)
    return np.flatnonzero(nz)


@dataclass(frozen=True)
class PhDaeSystem:
    """``E x' = (J - R) z(x) + B u`` with constant matrices.

    The flow matrix must be ``diag(D_reg, 0)`` up to a permutation of the
    states, with ``D_reg`` regular. Analytic oracles are optional and used
    only for validation and as ground truth in experiments.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    B: np.ndarray
    labels: tuple = ()
    name: str = "system"
    effort: Optional[Callable] = field(default=None, compare=False, repr=False)
    hamiltonian: Optional[Callable] = field(default=None, compare=False, repr=False)
    hamiltonian_gradient: Optional[Callable] = field(default=None, compare=False,
                                                     repr=False)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("E", "J", "R", "B"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        d = self.E.shape[0]
        if self.E.shape != (d, d) or self.J.shape != (d, d) or self.R.shape != (d, d):
            raise ContractError("E, J, R must all be square with the same size")
        if self.B.shape[0] != d:
            raise ContractError(f"B must have {d} rows, got {self.B.shape[0]}")
        if not check_skew(self.J):
            raise ContractError("J must be skew-symmetric")
        if not check_psd(self.R):
            raise ContractError("R must be symmetric positive semi-definite")
        self._check_flow_matrix()
        labels = tuple(self.labels) if self.labels else tuple(
            f"z{i + 1}" for i in range(d))
        if len(labels) != d:
            raise ContractError("need one label per effort component")
        object.__setattr__(self, "labels", labels)

    def _check_flow_matrix(self):
        idx = differential_indices(self.E)
        mask = np.zeros(self.state_dim, dtype=bool)
        mask[idx] = True
        if np.any(self.E[~mask][:, ~mask] != 0) or np.any(self.E[mask][:, ~mask] != 0) \
                or np.any(self.E[~mask][:, mask] != 0):
            raise ContractError("E must have block structure diag(D_reg, 0)")
        if idx.size:
            D_reg = self.E[np.ix_(idx, idx)]
            if not np.isfinite(np.linalg.cond(D_reg)) or \
                    np.linalg.matrix_rank(D_reg) < idx.size:
                raise ContractError("regular block of E is singular")

    @property
    def state_dim(self) -> int:
        return self.E.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B.shape[1]

    @property
    def effort_dim(self) -> int:
        return self.state_dim

    @property
    def structure(self) -> np.ndarray:
        """The transform ``J - R``."""
        return self.J - self.R

    @property
    def differential(self) -> np.ndarray:
        return differential_indices(self.E)

    def efforts(self, states: np.ndarray) -> np.ndarray:
        if self.effort is None:
            raise ContractError(f"system {self.name!r} has no effort oracle")
        return np.asarray(self.effort(np.atleast_2d(states)), dtype=float)

    def transformed_efforts(self, states: np.ndarray) -> np.ndarray:
        return self.efforts(states) @ self.structure.T

    def to_dict(self) -> dict:
        out = {
            "E": self.E.tolist(), "J": self.J.tolist(), "R": self.R.tolist(),
            "B": self.B.tolist(), "labels": list(self.labels),
        }
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def from_dict(cls, doc: dict) -> "PhDaeSystem":
        try:
            B = np.asarray(doc["B"], dtype=float)
            d = len(doc["E"])
            if B.size == 0:
                B = np.zeros((d, 0))
            return cls(doc["E"], doc["J"], doc["R"], B,
                       labels=tuple(doc.get("labels", ())),
                       metadata=dict(doc.get("metadata", {})))
        except KeyError as exc:
            raise ContractError(f"system document is missing key {exc}") from None

    @classmethod
    def from_json(cls, path) -> "PhDaeSystem":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_oracles(self, other: "PhDaeSystem") -> "PhDaeSystem":
        """Copy of this system carrying the analytic oracles of ``other``."""
        return replace(self, effort=other.effort, hamiltonian=other.hamiltonian,
                       hamiltonian_gradient=other.hamiltonian_gradient,
                       name=other.name)


@dataclass
class Trajectory:
    """Time samples of states, inputs and (optionally) state derivatives."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    derivs: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)
    derivative_oracle: Optional[Callable] = field(default=None, repr=False,
                                                  compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).ravel()
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        n = self.times.shape[0]
        if self.states.shape[0] != n or self.inputs.shape[0] != n:
            raise ContractError("times, states and inputs must have equal row counts")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ContractError("times must be strictly increasing")
        if self.derivs is not None:
            self.derivs = np.atleast_2d(np.asarray(self.derivs, dtype=float))
            if self.derivs.shape != self.states.shape:
                raise ContractError("derivs must have the same shape as states")

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "Trajectory":
        """Rows ``index`` in increasing time order."""
        index = np.sort(np.asarray(index, dtype=int))
        return Trajectory(
            self.times[index], self.states[index], self.inputs[index],
            None if self.derivs is None else self.derivs[index],
            dict(self.metadata), self.derivative_oracle)

    def with_derivs(self, derivs, **meta) -> "Trajectory":
        md = dict(self.metadata)
        md.update(meta)
        return Trajectory(self.times, self.states, self.inputs, derivs, md,
                          self.derivative_oracle)

    def oracle_derivs(self) -> np.ndarray:
        if self.derivative_oracle is None:
            raise ContractError("trajectory carries no exact derivative oracle")
        return np.asarray(
            self.derivative_oracle(self.times, self.states, self.inputs), dtype=float)
