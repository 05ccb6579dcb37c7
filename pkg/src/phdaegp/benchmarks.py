"""Benchmark pH-DAE systems, trajectory generators and CSV dataset I/O.

Two systems are provided: an index-1 electrical network (nonlinear capacitor,
resistor with conductance ``G``, voltage source) and the index-3 planar
pendulum in Cartesian coordinates with a Lagrange multiplier. Both carry
analytic effort, Hamiltonian and derivative oracles.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataFormatError
from .system import PhDaeSystem, Trajectory


# --------------------------------------------------------------------------
# electrical network


@dataclass(frozen=True)
class CircuitParams:
    G: float = 1.0
    a: float = 1.0
    omega: float = 1.0
    x1_0: float = 2.0
    n_steps: int = 3000

    def __post_init__(self):
        if self.G == 0:
            raise ContractError("J - R is singular for G = 0")
        if self.n_steps < 1:
            raise ContractError("n_steps must be >= 1")
        if self.omega <= 0:
            raise ContractError("omega must be positive")

    @property
    def t_end(self) -> float:
        return 10.0 * math.pi / self.omega

    @property
    def step(self) -> float:
        return self.t_end / self.n_steps

    def input(self, t):
        return self.a * (1.0 + np.sin(self.omega * np.asarray(t, dtype=float)))


def circuit_system(params: CircuitParams = CircuitParams()) -> PhDaeSystem:
    G = params.G
    E = np.diag([1.0, 0.0, 0.0])
    J = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    R = np.array([[G, -G, 0.0], [-G, G, 0.0], [0.0, 0.0, 0.0]])
    B = np.array([[0.0], [0.0], [1.0]])

    def effort(x):
        x = np.atleast_2d(x)
        return np.column_stack([np.sqrt(2.0 * x[:, 0]), x[:, 1], x[:, 2]])

    def hamiltonian(x):
        x = np.atleast_2d(x)
        return (2.0 / 3.0) * math.sqrt(2.0) * x[:, 0] ** 1.5

    def hamiltonian_gradient(x):
        x = np.atleast_2d(x)
        g = np.zeros_like(x, dtype=float)
        g[:, 0] = math.sqrt(2.0) * np.sqrt(x[:, 0])
        return g

    return PhDaeSystem(
        E, J, R, B, labels=("sqrt(2 q_C)", "u_2", "I_V"), name="circuit",
        effort=effort, hamiltonian=hamiltonian,
        hamiltonian_gradient=hamiltonian_gradient,
        metadata={"benchmark": "circuit", "params": dataclasses.asdict(params),
                  "differential_index": 1})


def _circuit_oracle(params: CircuitParams):
    def oracle(times, states, inputs):
        d = np.zeros_like(states, dtype=float)
        d[:, 0] = params.G * (inputs[:, 0] - np.sqrt(2.0 * states[:, 0]))
        return d
    return oracle


def generate_circuit(params: CircuitParams = CircuitParams()) -> Trajectory:
    """Explicit Euler on ``x1' = G (u - sqrt(2 x1))``, algebraic rows filled in.

    ``x3`` comes from the algebraic constraint ``x3 = G (u - sqrt(2 x1))``,
    which keeps every row of the DAE residual at round-off level.
    """
    h = params.step
    n = params.n_steps
    times = h * np.arange(n + 1)
    u = params.input(times)
    x1 = np.empty(n + 1)
    x1[0] = params.x1_0
    for i in range(n):
        if x1[i] < 0:
            raise ContractError(
                f"negative charge x1={x1[i]:g} at t={times[i]:g}; sqrt undefined")
        x1[i + 1] = x1[i] + h * params.G * (u[i] - math.sqrt(2.0 * x1[i]))
    if x1[n] < 0:
        raise ContractError("negative charge at final step; sqrt undefined")
    x2 = u.copy()
    x3 = params.G * (u - np.sqrt(2.0 * x1))
    states = np.column_stack([x1, x2, x3])
    meta = {
        "benchmark": "circuit", "params": dataclasses.asdict(params),
        "integrator": "explicit_euler", "step": h,
        "x3_definition": "G*(u - sqrt(2*x1)) (DAE-consistent algebraic constraint)",
    }
    return Trajectory(times, states, u[:, None], None, meta, _circuit_oracle(params))


# --------------------------------------------------------------------------
# constrained pendulum


@dataclass(frozen=True)
class PendulumParams:
    m: float = 1.0
    l: float = 1.0
    g_tilde: float = 1.0
    tau: float = 1.0
    beta: float = 1.0
    alpha_0: float = math.pi / 4
    alpha_dot_0: float = 0.0
    h: float = 0.01
    t_end: float = 30.0

    def __post_init__(self):
        if self.m <= 0 or self.l <= 0:
            raise ContractError("mass and length must be positive")
        if self.h <= 0 or self.t_end <= 0:
            raise ContractError("step size and end time must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.h))

    def input(self, t):
        t = np.asarray(t, dtype=float)
        return self.beta * self.g_tilde * np.cos(2.0 * math.pi / self.tau * t)


def pendulum_system(params: PendulumParams = PendulumParams()) -> PhDaeSystem:
    """State ``(q1, q2, p1, p2, lambda)``; constraint ``q^T q = l^2``."""
    m, l, g = params.m, params.l, params.g_tilde
    E = np.diag([1.0, 1.0, 1.0, 1.0, 0.0])
    J = np.zeros((5, 5))
    J[0:2, 2:4] = np.eye(2)
    J[2:4, 0:2] = -np.eye(2)
    R = np.diag([0.0, 0.0, 0.0, 0.0, 1.0])
    B = np.array([[0.0], [0.0], [0.0], [m], [0.0]])

    def constraint(q):
        return np.sum(q * q, axis=1) - l * l

    def effort(x):
        x = np.atleast_2d(x)
        q, p, lam = x[:, 0:2], x[:, 2:4], x[:, 4]
        zq = np.column_stack([np.zeros(len(x)), np.full(len(x), g * m)]) \
            - 2.0 * q * lam[:, None]
        return np.column_stack([zq, p / m, -constraint(q)])

    def hamiltonian(x):
        x = np.atleast_2d(x)
        q, p, lam = x[:, 0:2], x[:, 2:4], x[:, 4]
        return 0.5 * np.sum(p * p, axis=1) / m + g * m * q[:, 1] - constraint(q) * lam

    def hamiltonian_gradient(x):
        return effort(x)

    return PhDaeSystem(
        E, J, R, B, labels=("H_q1", "H_q2", "H_p1", "H_p2", "H_lambda"),
        name="pendulum", effort=effort, hamiltonian=hamiltonian,
        hamiltonian_gradient=hamiltonian_gradient,
        metadata={"benchmark": "pendulum", "params": dataclasses.asdict(params),
                  "differential_index": 3})


def _pendulum_oracle(params: PendulumParams):
    m, g = params.m, params.g_tilde

    def oracle(times, states, inputs):
        q, p, lam = states[:, 0:2], states[:, 2:4], states[:, 4]
        d = np.zeros_like(states, dtype=float)
        d[:, 0:2] = p / m
        d[:, 2:4] = 2.0 * q * lam[:, None]
        d[:, 3] += -m * g + m * inputs[:, 0]
        return d
    return oracle


def generate_pendulum(params: PendulumParams = PendulumParams()) -> Trajectory:
    """Explicit Euler in the angle, mapped to Cartesian DAE coordinates."""
    m, l, g, h = params.m, params.l, params.g_tilde, params.h
    n = params.n_steps
    times = h * np.arange(n + 1)
    u = params.input(times)
    alpha = np.empty(n + 1)
    alpha_dot = np.empty(n + 1)
    alpha[0], alpha_dot[0] = params.alpha_0, params.alpha_dot_0
    for i in range(n):
        acc = -(g - u[i]) * math.sin(alpha[i]) / l
        alpha[i + 1] = alpha[i] + h * alpha_dot[i]
        alpha_dot[i + 1] = alpha_dot[i] + h * acc
    if not (np.all(np.isfinite(alpha)) and np.all(np.isfinite(alpha_dot))):
        raise ContractError("pendulum integration produced non-finite values")
    s, c = np.sin(alpha), np.cos(alpha)
    q = l * np.column_stack([s, -c])
    p = m * l * alpha_dot[:, None] * np.column_stack([c, s])
    lam = m / (2.0 * l) * (c * (u - g) - l * alpha_dot ** 2)
    states = np.column_stack([q, p, lam])
    meta = {
        "benchmark": "pendulum", "params": dataclasses.asdict(params),
        "integrator": "explicit_euler", "step": h,
    }
    return Trajectory(times, states, u[:, None], None, meta, _pendulum_oracle(params))


# --------------------------------------------------------------------------
# registry


BENCHMARKS = {
    "circuit": (CircuitParams, circuit_system, generate_circuit, _circuit_oracle),
    "pendulum": (PendulumParams, pendulum_system, generate_pendulum, _pendulum_oracle),
}


def make_params(benchmark: str, overrides: dict | None = None):
    if benchmark not in BENCHMARKS:
        raise ContractError(f"unknown benchmark {benchmark!r}")
    cls = BENCHMARKS[benchmark][0]
    fields = {f.name: f.type for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in (overrides or {}).items():
        if key not in fields:
            raise ContractError(f"unknown parameter {key!r} for {benchmark}")
        kind = int if fields[key] in (int, "int") else float
        kwargs[key] = kind(value)
    return cls(**kwargs)


def load_benchmark(benchmark: str, overrides: dict | None = None
                   ) -> tuple[PhDaeSystem, Trajectory]:
    params = make_params(benchmark, overrides)
    _, system_fn, gen_fn, _ = BENCHMARKS[benchmark]
    return system_fn(params), gen_fn(params)


def system_from_metadata(metadata: dict) -> PhDaeSystem | None:
    """Rebuild the benchmark system (with oracles) named in file metadata."""
    name = metadata.get("benchmark")
    if name not in BENCHMARKS:
        return None
    params = make_params(name, metadata.get("params"))
    return BENCHMARKS[name][1](params)


def attach_oracle(traj: Trajectory) -> Trajectory:
    name = traj.metadata.get("benchmark")
    if name in BENCHMARKS and traj.derivative_oracle is None:
        params = make_params(name, traj.metadata.get("params"))
        traj.derivative_oracle = BENCHMARKS[name][3](params)
    return traj


# --------------------------------------------------------------------------
# dataset files


def metadata_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_trajectory(traj: Trajectory, path) -> None:
    """CSV ``t, x1..xd, u1..um[, dx1..dxd]`` plus a JSON metadata sidecar."""
    path = Path(path)
    d, m = traj.state_dim, traj.input_dim
    header = ["t"] + [f"x{i + 1}" for i in range(d)] + [f"u{i + 1}" for i in range(m)]
    blocks = [traj.times[:, None], traj.states, traj.inputs]
    if traj.derivs is not None:
        header += [f"dx{i + 1}" for i in range(d)]
        blocks.append(traj.derivs)
    data = np.hstack(blocks)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in data:
            writer.writerow([format(v, ".17g") for v in row])
    metadata_path(path).write_text(json.dumps(traj.metadata, indent=2, default=float))


def _parse_header(header: list[str]) -> tuple[int, int, bool]:
    header = [h.strip() for h in header]
    if not header or header[0] != "t":
        raise DataFormatError("line 1: header must start with 't'")
    names = header[1:]
    d = 0
    while d < len(names) and names[d] == f"x{d + 1}":
        d += 1
    m = 0
    while d + m < len(names) and names[d + m] == f"u{m + 1}":
        m += 1
    rest = names[d + m:]
    if d == 0:
        raise DataFormatError("line 1: no state columns x1..xd")
    if rest and rest != [f"dx{i + 1}" for i in range(d)]:
        raise DataFormatError(
            f"line 1: unexpected columns {rest}; expected dx1..dx{d} or nothing")
    return d, m, bool(rest)


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("line 1: empty file") from None
        d, m, has_derivs = _parse_header(header)
        width = 1 + d + m + (d if has_derivs else 0)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"line {lineno}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from None
    if not rows:
        raise DataFormatError("no data rows")
    data = np.array(rows)
    meta_file = metadata_path(path)
    metadata = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    traj = Trajectory(
        data[:, 0], data[:, 1:1 + d], data[:, 1 + d:1 + d + m],
        data[:, 1 + d + m:] if has_derivs else None, metadata)
    return attach_oracle(traj)
