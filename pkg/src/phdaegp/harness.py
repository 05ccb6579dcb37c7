"""Experiment orchestration: splits, nested subsets, learning curves,
extrapolation, derivative ablation and result files.

One master seed fixes everything: the test split uses ``seed``; repetition
``r`` draws its nested training permutation with ``seed + r``.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import platform
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import benchmarks
from .deriv import DerivativeMethod, build_derivatives
from .errors import ContractError, NonPSDKernelError, OptimizationDiverged
from .optim import AdamConfig
from .phdae import IdentifyConfig, identify_effort
from .system import PhDaeSystem, Trajectory

log = logging.getLogger(__name__)

TARGETS = ("zjr", "z")
DEFAULT_SIZES = tuple(2 ** k for k in range(1, 9))
# default derivative route per benchmark
DEFAULT_DERIVATIVE = {"circuit": "gp_full", "pendulum": "finite_difference"}
# errors that mark a learning-curve cell as missing instead of aborting the run
CELL_ERRORS = (NonPSDKernelError, OptimizationDiverged, np.linalg.LinAlgError,
               FloatingPointError)


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by all experiment runners.

    ``benchmark`` is ``"circuit"``, ``"pendulum"`` or the path of a dataset
    CSV; for a file, ``system`` names the system JSON (defaults to the
    benchmark recorded in the file's metadata). ``derivative=None`` picks the
    benchmark default.
    """

    benchmark: str = "circuit"
    n_test: int = 200
    sizes: tuple = DEFAULT_SIZES
    repetitions: int = 5
    seed: int = 0
    derivative: Optional[DerivativeMethod] = None
    window: Optional[tuple] = None
    adam: AdamConfig = field(default_factory=AdamConfig)
    params: dict = field(default_factory=dict)
    system: Optional[str] = None
    task_diagonal: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if not sizes or sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ContractError("sizes must be positive and strictly increasing")
        object.__setattr__(self, "sizes", sizes)
        if self.repetitions < 1:
            raise ContractError("repetitions must be at least 1")
        if self.n_test < 0:
            raise ContractError("n_test must be non-negative")
        if self.window is not None:
            lo, hi = (float(w) for w in self.window)
            if not hi >= lo:
                raise ContractError("window must satisfy t_lo <= t_hi")
            object.__setattr__(self, "window", (lo, hi))
        if self.derivative is None:
            kind = DEFAULT_DERIVATIVE.get(self.benchmark, "finite_difference")
            object.__setattr__(self, "derivative", DerivativeMethod(kind, adam=self.adam))
        elif isinstance(self.derivative, str):
            object.__setattr__(self, "derivative",
                               DerivativeMethod(self.derivative, adam=self.adam))

    @property
    def repetition_seeds(self) -> list:
        return [self.seed + r for r in range(self.repetitions)]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark, "n_test": self.n_test,
            "sizes": list(self.sizes), "repetitions": self.repetitions,
            "seed": self.seed,
            "derivative": {"kind": self.derivative.kind,
                           "phi_init": self.derivative.phi_init,
                           "adam": dataclasses.asdict(self.derivative.adam)},
            "window": None if self.window is None else list(self.window),
            "adam": dataclasses.asdict(self.adam), "params": dict(self.params),
            "system": self.system, "task_diagonal": self.task_diagonal,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        adam = AdamConfig(**doc.pop("adam", {}) or {})
        deriv = doc.pop("derivative", None)
        if isinstance(deriv, dict):
            deriv = dict(deriv)
            d_adam = deriv.pop("adam", None)
            deriv = DerivativeMethod(
                deriv.pop("kind", "gp_full"),
                adam=AdamConfig(**d_adam) if d_adam else adam, **deriv)
        elif isinstance(deriv, str):
            deriv = DerivativeMethod(deriv, adam=adam)
        if doc.get("sizes") is not None:
            doc["sizes"] = tuple(doc["sizes"])
        if doc.get("window") is not None:
            doc["window"] = tuple(doc["window"])
        return cls(adam=adam, derivative=deriv, **doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ContractError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)


# --------------------------------------------------------------------------
# data access


def load_data(config: ExperimentConfig) -> tuple[PhDaeSystem, Trajectory]:
    """System and trajectory named by ``config.benchmark``."""
    if config.benchmark in benchmarks.BENCHMARKS:
        return benchmarks.load_benchmark(config.benchmark, config.params)
    path = Path(config.benchmark)
    if not path.exists():
        raise ContractError(f"unknown benchmark or missing dataset {config.benchmark!r}")
    traj = benchmarks.attach_oracle(benchmarks.read_trajectory(path))
    oracle_system = benchmarks.system_from_metadata(traj.metadata)
    if config.system is not None:
        system = PhDaeSystem.from_json(config.system)
        if oracle_system is not None:
            system = system.with_oracles(oracle_system)
    elif oracle_system is not None:
        system = oracle_system
    else:
        raise ContractError("dataset carries no benchmark metadata; pass a system file")
    return system, traj


class DerivativeCache:
    """Full-dataset derivative data, computed at most once per trajectory.

    ``computations`` counts actual derivative constructions, so callers can
    check that an experiment did not redo the expensive full-data GP fits;
    ``seconds`` accumulates the time spent on them.
    """

    def __init__(self):
        self._store = {}
        self.computations = 0
        self.seconds = 0.0

    def get(self, traj: Trajectory, system: PhDaeSystem,
            method: DerivativeMethod) -> Trajectory:
        key = (id(traj), method)
        if key not in self._store:
            self.computations += 1
            started = time.perf_counter()
            out = build_derivatives(traj, method, components=system.differential)
            elapsed = time.perf_counter() - started
            self.seconds += elapsed
            log.info("derivative data (%s) on %d samples in %.1fs", method.kind,
                     len(traj), elapsed)
            # keep traj alive so id() stays unique for the cache lifetime
            self._store[key] = (traj, out)
        return self._store[key][1]


# --------------------------------------------------------------------------
# splits and metrics


def _n_rows(data) -> int:
    return len(data) if isinstance(data, Trajectory) else int(data)


def split_test(data, n_test: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random test set and remaining training pool, both as sorted indices.

    ``data`` is a trajectory or a row count.
    """
    n = _n_rows(data)
    if n_test < 0 or n_test >= n:
        raise ContractError(f"n_test must lie in [0, {n}), got {n_test}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_test]), np.sort(perm[n_test:])


def nested_subsets(pool, sizes, seed: int) -> list:
    """Prefixes of one seeded permutation of ``pool``; hence nested."""
    pool = np.asarray(pool, dtype=int).ravel()
    sizes = [int(s) for s in sizes]
    if any(s < 0 for s in sizes):
        raise ContractError("subset sizes must be non-negative")
    if sizes and max(sizes) > pool.shape[0]:
        raise ContractError(
            f"subset size {max(sizes)} exceeds pool size {pool.shape[0]}")
    perm = np.random.default_rng(seed).permutation(pool)
    return [perm[:s].copy() for s in sizes]


def rmse(predictions, truth) -> np.ndarray:
    """Per-component root mean square error of ``(N, D)`` arrays."""
    pred = np.asarray(predictions, dtype=float)
    ref = np.asarray(truth, dtype=float)
    if pred.shape != ref.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {ref.shape}")
    if pred.ndim == 1:
        pred, ref = pred[:, None], ref[:, None]
    return np.sqrt(np.mean((pred - ref) ** 2, axis=0))


# --------------------------------------------------------------------------
# results


@dataclass
class LearningCurveResult:
    """Test RMSE per repetition, size and component for ``z_JR`` and ``z``.

    ``raw[target]`` has shape ``(repetitions, len(sizes), D)``; missing cells
    are NaN.
    """

    sizes: tuple
    labels: tuple
    raw: dict
    metadata: dict = field(default_factory=dict)

    @property
    def repetitions(self) -> int:
        return self.raw[TARGETS[0]].shape[0]

    def mean(self, target: str) -> np.ndarray:
        """``(len(sizes), D)`` mean over repetitions, ignoring missing cells."""
        values = self.raw[target]
        counts = np.sum(np.isfinite(values), axis=0)
        total = np.nansum(values, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, total / np.maximum(counts, 1), np.nan)

    def curve(self, target: str, component: int) -> np.ndarray:
        """Mean RMSE over sizes for one zero-based component."""
        return self.mean(target)[:, component]

    def at(self, target: str, size: int) -> np.ndarray:
        return self.mean(target)[self.sizes.index(size)]


@dataclass
class ExtrapolationReport:
    """RMSE on all samples inside and outside the training window.

    ``inside[target]`` and ``outside[target]`` have shape
    ``(repetitions, len(sizes), D)``.
    """

    window: tuple
    sizes: tuple
    labels: tuple
    inside: dict
    outside: dict
    metadata: dict = field(default_factory=dict)

    def mean(self, region: str, target: str) -> np.ndarray:
        values = getattr(self, region)[target]
        return np.nanmean(values, axis=0)

    def ratio(self, target: str = "z") -> np.ndarray:
        """Outside-to-inside ratio of mean RMSE, ``(len(sizes), D)``."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.mean("outside", target) / self.mean("inside", target)


@dataclass
class DerivativeStudyResult:
    curves: dict  # derivative kind -> LearningCurveResult

    def first_size_below(self, kind: str, threshold: float, target: str = "z",
                         component: int = 0) -> Optional[int]:
        curve = self.curves[kind].curve(target, component)
        for size, value in zip(self.curves[kind].sizes, curve):
            if np.isfinite(value) and value <= threshold:
                return size
        return None


# --------------------------------------------------------------------------
# runners


def _identify_cell(train: Trajectory, system: PhDaeSystem, config: ExperimentConfig,
                   seed: int, eval_states: list) -> tuple[list, dict]:
    """Fit one model; return ``[(zjr_pred, z_pred), ...]`` per evaluation set."""
    model = identify_effort(train, system, IdentifyConfig(
        adam=config.adam, task_diagonal=config.task_diagonal, seed=seed))
    preds = []
    for states in eval_states:
        zjr = model.predict_transformed(states).mean
        preds.append((zjr, np.linalg.solve(model.transform, zjr.T).T))
    return preds, model.metadata


def _training_trajectory(traj_full: Trajectory, traj_deriv: Optional[Trajectory],
                         idx: np.ndarray, system: PhDaeSystem,
                         method: DerivativeMethod) -> Trajectory:
    if method.kind == "gp_train_only":
        return build_derivatives(traj_full.subset(idx), method,
                                 components=system.differential)
    return traj_deriv.subset(idx)


def _prepare(config: ExperimentConfig, data, cache: Optional[DerivativeCache]):
    system, traj = data if data is not None else load_data(config)
    if config.n_test + max(config.sizes) > len(traj):
        raise ContractError(
            f"max(sizes) + n_test = {config.n_test + max(config.sizes)} exceeds "
            f"dataset size {len(traj)}")
    method = config.derivative
    cache = cache if cache is not None else DerivativeCache()
    traj_deriv = None if method.kind == "gp_train_only" else cache.get(traj, system, method)
    return system, traj, traj_deriv, cache


def _window_pool(traj: Trajectory, pool: np.ndarray, window) -> np.ndarray:
    if window is None:
        return pool
    lo, hi = window
    if lo < traj.times[0] - 1e-12 or hi > traj.times[-1] + 1e-12:
        raise ContractError(
            f"window [{lo}, {hi}] is outside the data span "
            f"[{traj.times[0]}, {traj.times[-1]}]")
    t = traj.times[pool]
    kept = pool[(t >= lo) & (t <= hi)]
    if kept.size == 0:
        raise ContractError(f"no training candidates in window [{lo}, {hi}]")
    return kept


def _fit_record(rep: int, size: int, meta: dict) -> dict:
    keep = ("phi", "v", "kappa", "noise_vars", "jitter", "lml_final",
            "reverted_steps", "derivative_method")
    return {"repetition": rep, "size": size, **{k: meta.get(k) for k in keep}}


def run_learning_curve(config: ExperimentConfig, data=None,
                       cache: Optional[DerivativeCache] = None) -> LearningCurveResult:
    """Test RMSE of ``z_JR`` and recovered ``z`` over nested training sizes.

    ``data`` optionally supplies ``(system, trajectory)``; ``cache`` lets
    several experiments on the same trajectory share full-data derivatives.
    """
    system, traj, traj_deriv, cache = _prepare(config, data, cache)
    if traj.derivative_oracle is None and system.effort is None:
        raise ContractError("learning curves need the system's effort oracle")
    test_idx, pool = split_test(traj, config.n_test, config.seed)
    pool = _window_pool(traj, pool, config.window)
    if max(config.sizes) > pool.size:
        raise ContractError(f"largest size {max(config.sizes)} exceeds the "
                            f"{pool.size} training candidates")
    test_states = traj.states[test_idx]
    truth = {"zjr": system.transformed_efforts(test_states),
             "z": system.efforts(test_states)}
    R, S, D = config.repetitions, len(config.sizes), system.effort_dim
    raw = {t: np.full((R, S, D), np.nan) for t in TARGETS}
    fits, failures = [], []
    started = time.perf_counter()
    for r, rep_seed in enumerate(config.repetition_seeds):
        subsets = nested_subsets(pool, config.sizes, rep_seed)
        for s, idx in enumerate(subsets):
            assert not np.intersect1d(idx, test_idx).size
            try:
                train = _training_trajectory(traj, traj_deriv, idx, system,
                                             config.derivative)
                [(zjr, z)], meta = _identify_cell(train, system, config, rep_seed,
                                                  [test_states])
            except CELL_ERRORS as exc:
                log.warning("cell (rep %d, size %d) failed: %s", r, config.sizes[s], exc)
                failures.append({"repetition": r, "size": config.sizes[s],
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            raw["zjr"][r, s] = rmse(zjr, truth["zjr"])
            raw["z"][r, s] = rmse(z, truth["z"])
            fits.append(_fit_record(r, config.sizes[s], meta))
    metadata = {
        "config": config.to_dict(),
        "seeds": {"split": config.seed, "repetitions": config.repetition_seeds},
        "n_samples": len(traj), "test_indices": test_idx.tolist(),
        "fits": fits, "failures": failures,
        "jitter_events": [f for f in fits if f["jitter"]],
        "derivative_computations": cache.computations,
        "seconds": time.perf_counter() - started,
    }
    return LearningCurveResult(config.sizes, system.labels, raw, metadata)


def run_extrapolation(config: ExperimentConfig, window=(0.0, 20.0), data=None,
                      cache: Optional[DerivativeCache] = None) -> ExtrapolationReport:
    """Train inside ``window`` only; evaluate on every sample of the dataset.

    ``inside`` covers samples with ``t`` in the closed window, ``outside``
    the rest of the trajectory after it.
    """
    window = tuple(float(w) for w in (config.window or window))
    config = config.replace(window=window)
    system, traj, traj_deriv, cache = _prepare(config, data, cache)
    test_idx, pool = split_test(traj, config.n_test, config.seed)
    pool = _window_pool(traj, pool, window)
    if max(config.sizes) > pool.size:
        raise ContractError(f"window holds only {pool.size} training candidates")
    lo, hi = window
    inside = (traj.times >= lo) & (traj.times <= hi)
    outside = traj.times > hi
    regions = {"inside": np.flatnonzero(inside), "outside": np.flatnonzero(outside)}
    truth = {"zjr": system.transformed_efforts(traj.states), "z": system.efforts(traj.states)}
    R, S, D = config.repetitions, len(config.sizes), system.effort_dim
    out = {reg: {t: np.full((R, S, D), np.nan) for t in TARGETS} for reg in regions}
    fits, failures = [], []
    for r, rep_seed in enumerate(config.repetition_seeds):
        for s, idx in enumerate(nested_subsets(pool, config.sizes, rep_seed)):
            try:
                train = _training_trajectory(traj, traj_deriv, idx, system,
                                             config.derivative)
                [(zjr, z)], meta = _identify_cell(train, system, config, rep_seed,
                                                  [traj.states])
            except CELL_ERRORS as exc:
                failures.append({"repetition": r, "size": config.sizes[s],
                                 "error": f"{type(exc).__name__}: {exc}"})
                continue
            pred = {"zjr": zjr, "z": z}
            for reg, rows in regions.items():
                if rows.size == 0:
                    continue
                for t in TARGETS:
                    out[reg][t][r, s] = rmse(pred[t][rows], truth[t][rows])
            fits.append(_fit_record(r, config.sizes[s], meta))
    metadata = {
        "config": config.to_dict(),
        "seeds": {"split": config.seed, "repetitions": config.repetition_seeds},
        "region_sizes": {reg: int(rows.size) for reg, rows in regions.items()},
        "fits": fits, "failures": failures,
        "derivative_computations": cache.computations,
    }
    return ExtrapolationReport(window, config.sizes, system.labels,
                               out["inside"], out["outside"], metadata)


STUDY_KINDS = ("exact_oracle", "gp_full", "gp_train_only")


def run_derivative_study(config: ExperimentConfig, data=None,
                         cache: Optional[DerivativeCache] = None,
                         kinds=STUDY_KINDS) -> DerivativeStudyResult:
    """Learning curves with identical seeds for each derivative route."""
    system, traj = data if data is not None else load_data(config)
    if traj.derivative_oracle is None:
        raise ContractError("derivative study needs a trajectory with an exact oracle")
    cache = cache if cache is not None else DerivativeCache()
    curves = {}
    for kind in kinds:
        method = dataclasses.replace(config.derivative, kind=kind)
        curves[kind] = run_learning_curve(config.replace(derivative=method),
                                          (system, traj), cache)
    return DerivativeStudyResult(curves)


# --------------------------------------------------------------------------
# output files


def _versions() -> dict:
    import scipy
    from importlib import metadata as md
    try:
        pkg = md.version("artifact")
    except md.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "phdaegp": pkg}


def _fmt(x: float) -> str:
    return repr(float(x))


def write_curve_csv(result: LearningCurveResult, path) -> Path:
    path = Path(path)
    R = result.repetitions
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "component", "target", "mean_rmse"]
                   + [f"rep{r + 1}" for r in range(R)])
        for target in TARGETS:
            means = result.mean(target)
            for s, size in enumerate(result.sizes):
                for j in range(len(result.labels)):
                    w.writerow([size, j + 1, target, _fmt(means[s, j])]
                               + [_fmt(v) for v in result.raw[target][:, s, j]])
    return path


def read_curve_csv(path) -> dict:
    """``{(size, component, target): (mean, [rep values])}`` from a curve CSV."""
    out = {}
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            key = (int(row[0]), int(row[1]), row[2])
            out[key] = (float(row[3]), [float(v) for v in row[4:]])
    return out


def _manifest(result, extra: dict | None = None) -> dict:
    meta = dict(result.metadata)
    doc = {
        "config": meta.pop("config", None),
        "seeds": meta.pop("seeds", None),
        "versions": _versions(),
        "hyperparameters": meta.pop("fits", []),
        "jitter_events": meta.pop("jitter_events", []),
        "labels": list(result.labels),
        "sizes": list(result.sizes),
    }
    doc.update(meta)
    if extra:
        doc.update(extra)
    return doc


def _write_json(doc: dict, path) -> Path:
    path = Path(path)

    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    path.write_text(json.dumps(doc, indent=2, default=default))
    return path


SVG_NS = "http://www.w3.org/2000/svg"
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def learning_curve_svg(sizes, curves: dict, title: str = "",
                       width: int = 480, height: int = 360) -> str:
    """Log-log plot, one polyline per entry of ``curves`` (label -> values)."""
    ET.register_namespace("", SVG_NS)
    margin = 50
    xs = np.log10(np.asarray(sizes, dtype=float))
    finite = [v for vals in curves.values() for v in vals if np.isfinite(v) and v > 0]
    lo = math.floor(math.log10(min(finite))) if finite else -6
    hi = math.ceil(math.log10(max(finite))) if finite else 0
    if hi == lo:
        hi = lo + 1
    x_lo, x_hi = float(xs.min()), float(xs.max()) if xs.max() > xs.min() else xs.min() + 1

    def px(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def py(y):
        return height - margin - (y - lo) / (hi - lo) * (height - 2 * margin)

    svg = ET.Element(f"{{{SVG_NS}}}svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}")
    ET.SubElement(svg, f"{{{SVG_NS}}}rect", x="0", y="0", width=str(width),
                  height=str(height), fill="white")
    axis = {"stroke": "black", "stroke-width": "1"}
    ET.SubElement(svg, f"{{{SVG_NS}}}line", x1=str(margin), y1=str(height - margin),
                  x2=str(width - margin), y2=str(height - margin), **axis)
    ET.SubElement(svg, f"{{{SVG_NS}}}line", x1=str(margin), y1=str(margin),
                  x2=str(margin), y2=str(height - margin), **axis)
    for e in range(lo, hi + 1):
        t = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(margin - 6), y=f"{py(e):.1f}",
                          **{"text-anchor": "end", "font-size": "10"})
        t.text = f"1e{e}"
    for size, x in zip(sizes, xs):
        t = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=f"{px(x):.1f}",
                          y=str(height - margin + 14),
                          **{"text-anchor": "middle", "font-size": "10"})
        t.text = str(size)
    if title:
        t = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(width // 2), y="20",
                          **{"text-anchor": "middle", "font-size": "12"})
        t.text = title
    for k, (label, values) in enumerate(curves.items()):
        pts = [f"{px(x):.2f},{py(math.log10(v)):.2f}"
               for x, v in zip(xs, values) if np.isfinite(v) and v > 0]
        colour = PALETTE[k % len(PALETTE)]
        ET.SubElement(svg, f"{{{SVG_NS}}}polyline", points=" ".join(pts), fill="none",
                      stroke=colour, **{"stroke-width": "1.5"})
        t = ET.SubElement(svg, f"{{{SVG_NS}}}text", x=str(width - margin + 4),
                          y=str(margin + 14 * k), fill=colour, **{"font-size": "10"})
        t.text = str(label)
    return ET.tostring(svg, encoding="unicode")


def _out_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ContractError(f"cannot create output directory {path}: {exc}") from None
    return path


def emit_results(result: LearningCurveResult, path, svg: bool = True,
                 prefix: str = "learning_curve") -> list:
    """Write the curve CSV, JSON manifest and optional SVG plots into ``path``."""
    out = _out_dir(path)
    try:
        files = [write_curve_csv(result, out / f"{prefix}.csv"),
                 _write_json(_manifest(result), out / f"{prefix}.manifest.json")]
        if svg:
            for target in TARGETS:
                means = result.mean(target)
                curves = {f"{target} {j + 1}": means[:, j]
                          for j in range(len(result.labels))}
                p = out / f"{prefix}_{target}.svg"
                p.write_text(learning_curve_svg(result.sizes, curves,
                                                title=f"{target} test RMSE"))
                files.append(p)
    except OSError as exc:
        raise ContractError(f"cannot write results to {out}: {exc}") from None
    return files


def emit_extrapolation(report: ExtrapolationReport, path) -> list:
    out = _out_dir(path)
    csv_path = out / "extrapolation.csv"
    R = report.inside[TARGETS[0]].shape[0]
    try:
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["size", "component", "target", "region", "mean_rmse"]
                       + [f"rep{r + 1}" for r in range(R)])
            for region in ("inside", "outside"):
                for target in TARGETS:
                    means = report.mean(region, target)
                    for s, size in enumerate(report.sizes):
                        for j in range(len(report.labels)):
                            w.writerow([size, j + 1, target, region, _fmt(means[s, j])]
                                       + [_fmt(v) for v in
                                          getattr(report, region)[target][:, s, j]])
        man = _write_json(_manifest(report, {"window": list(report.window)}),
                          out / "extrapolation.manifest.json")
    except OSError as exc:
        raise ContractError(f"cannot write results to {out}: {exc}") from None
    return [csv_path, man]


def emit_derivative_study(study: DerivativeStudyResult, path) -> list:
    """Per-variant curve files plus one side-by-side CSV for component 1."""
    out = _out_dir(path)
    files = []
    for kind, curve in study.curves.items():
        files += emit_results(curve, out, svg=False, prefix=f"curve_{kind}")
    kinds = list(study.curves)
    sizes = study.curves[kinds[0]].sizes
    side = out / "deriv_study.csv"
    with side.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size"] + [f"{k}_{t}1" for t in TARGETS for k in kinds])
        for s, size in enumerate(sizes):
            w.writerow([size] + [_fmt(study.curves[k].curve(t, 0)[s])
                                 for t in TARGETS for k in kinds])
    files.append(side)
    curves = {f"{k} z1": study.curves[k].curve("z", 0) for k in kinds}
    svg = out / "deriv_study.svg"
    svg.write_text(learning_curve_svg(sizes, curves, title="z1 test RMSE"))
    files.append(svg)
    return files


__all__ = [
    "DerivativeCache", "DerivativeStudyResult", "ExperimentConfig",
    "ExtrapolationReport", "LearningCurveResult", "emit_derivative_study",
    "emit_extrapolation", "emit_results", "learning_curve_svg", "load_data",
    "nested_subsets", "read_curve_csv", "rmse", "run_derivative_study",
    "run_extrapolation", "run_learning_curve", "split_test",
]
