"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure (kernel
factorization, optimizer divergence, singular ``J - R``, failed checks).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import benchmarks, harness
from .deriv import ALIASES, DerivativeMethod, build_derivatives
from .errors import (ContractError, DataFormatError, NonPSDKernelError,
                     NotIdentifiableError, OptimizationDiverged)
from .optim import AdamConfig
from .phdae import (IdentifyConfig, check_compatibility, check_dissipativity,
                    dae_residual, identify_effort)
from .system import PhDaeSystem

log = logging.getLogger("phdaegp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
RESIDUAL_TOL = 1e-8
COMPAT_TOL = 1e-10


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _key_values(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"expected k=v, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _window(text: str) -> tuple:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"window must look like LO:HI, got {text!r}") from None
    return lo, hi


def _load_system(path, traj) -> PhDaeSystem:
    system = PhDaeSystem.from_json(path)
    oracle = benchmarks.system_from_metadata(traj.metadata)
    return system.with_oracles(oracle) if oracle is not None else system


def cmd_generate(args) -> int:
    params = benchmarks.make_params(args.benchmark, _key_values(args.param))
    _, system_fn, gen_fn, _ = benchmarks.BENCHMARKS[args.benchmark]
    traj = gen_fn(params)
    out = Path(args.out)
    benchmarks.write_trajectory(traj, out)
    system_out = Path(args.system_out) if args.system_out else \
        out.with_name(out.stem + ".system.json")
    system_fn(params).to_json(system_out)
    print(json.dumps({"data": str(out), "metadata": str(benchmarks.metadata_path(out)),
                      "system": str(system_out), "samples": len(traj)}))
    return EXIT_OK


def cmd_identify(args) -> int:
    traj = benchmarks.read_trajectory(args.data)
    system = _load_system(args.system, traj)
    adam = AdamConfig(learning_rate=args.lr, iterations=args.iterations)
    method = DerivativeMethod(ALIASES.get(args.deriv, args.deriv), adam=adam)
    (idx,) = harness.nested_subsets(np.arange(len(traj)), [args.ntrain], args.seed)
    if method.kind == "gp_train_only":
        train = build_derivatives(traj.subset(idx), method, system.differential)
    else:
        train = build_derivatives(traj, method, system.differential).subset(idx)
    model = identify_effort(train, system, IdentifyConfig(adam=adam, seed=args.seed))
    model.metadata["train_indices"] = np.sort(idx).tolist()
    model.to_json(args.out)
    print(json.dumps({k: model.metadata[k] for k in
                      ("n_train", "derivative_method", "phi", "lml_final", "jitter")}))
    return EXIT_OK


def _config(args) -> harness.ExperimentConfig:
    config = harness.ExperimentConfig.from_json(args.config)
    if getattr(args, "window", None):
        config = config.replace(window=_window(args.window))
    return config


def cmd_learning_curve(args) -> int:
    result = harness.run_learning_curve(_config(args))
    files = harness.emit_results(result, args.out_dir, svg=not args.no_svg)
    _report(result.metadata, files)
    return EXIT_OK


def cmd_extrapolate(args) -> int:
    config = _config(args)
    report = harness.run_extrapolation(config, config.window or (0.0, 20.0))
    files = harness.emit_extrapolation(report, args.out_dir)
    _report(report.metadata, files)
    return EXIT_OK


def cmd_deriv_study(args) -> int:
    study = harness.run_derivative_study(_config(args))
    files = harness.emit_derivative_study(study, args.out_dir)
    print(json.dumps({"files": [str(f) for f in files]}))
    return EXIT_OK


def _report(metadata: dict, files) -> None:
    print(json.dumps({"files": [str(f) for f in files],
                      "failed_cells": len(metadata.get("failures", []))}))


def cmd_validate(args) -> int:
    traj = benchmarks.read_trajectory(args.data)
    system = _load_system(args.system, traj)
    report = {"samples": len(traj)}
    ok = True
    if system.effort is None:
        raise ContractError("validation needs the benchmark's effort oracle; the "
                            "dataset metadata names no known benchmark")
    source = "file" if traj.derivs is not None else (
        "exact_oracle" if traj.derivative_oracle is not None else "finite_difference")
    derivs = traj.derivs
    if derivs is None:
        derivs = build_derivatives(
            traj, DerivativeMethod(source)).derivs
    res = dae_residual(traj, system, derivs)
    report["dae_residual"] = {"max": float(np.max(res)), "derivatives": source}
    if source != "finite_difference":
        report["dae_residual"]["passed"] = bool(np.max(res) <= RESIDUAL_TOL)
        ok &= report["dae_residual"]["passed"]
    if system.hamiltonian is not None:
        diss = check_dissipativity(traj, system)
        report["dissipativity"] = {"max_violation": diss.max_violation,
                                   "tolerance": diss.tolerance, "passed": diss.passed}
        ok &= diss.passed
    if system.hamiltonian_gradient is not None:
        gap = check_compatibility(system, traj.states)
        report["compatibility"] = {"max": gap, "passed": gap <= COMPAT_TOL}
        ok &= gap <= COMPAT_TOL
    report["passed"] = bool(ok)
    print(json.dumps(report, indent=2))
    return EXIT_OK if ok else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phdaegp", description="Effort identification for pH-DAEs "
                "with transformed multi-task Gaussian processes.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a benchmark trajectory")
    g.add_argument("--benchmark", required=True, choices=sorted(benchmarks.BENCHMARKS))
    g.add_argument("--param", action="append", metavar="K=V")
    g.add_argument("--out", required=True)
    g.add_argument("--system-out", help="system JSON (default: <out>.system.json)")
    g.set_defaults(func=cmd_generate)

    i = sub.add_parser("identify", help="fit the effort model to a dataset")
    i.add_argument("--data", required=True)
    i.add_argument("--system", required=True)
    i.add_argument("--ntrain", type=int, required=True)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--deriv", default="gp-full",
                   choices=sorted(ALIASES) + sorted(ALIASES.values()))
    i.add_argument("--iterations", type=int, default=200)
    i.add_argument("--lr", type=float, default=0.1)
    i.add_argument("--out", required=True)
    i.set_defaults(func=cmd_identify)

    for name, func, help_text in (
            ("learning-curve", cmd_learning_curve, "test RMSE over training sizes"),
            ("extrapolate", cmd_extrapolate, "train inside a time window only"),
            ("deriv-study", cmd_deriv_study, "compare derivative routes")):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", required=True)
        c.add_argument("--out-dir", required=True)
        if name == "extrapolate":
            c.add_argument("--window", default="0:20", help="LO:HI (default 0:20)")
        if name == "learning-curve":
            c.add_argument("--no-svg", action="store_true")
        c.set_defaults(func=func)

    v = sub.add_parser("validate", help="residual, dissipativity and compatibility")
    v.add_argument("--data", required=True)
    v.add_argument("--system", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonPSDKernelError, OptimizationDiverged, NotIdentifiableError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ContractError, DataFormatError, FileNotFoundError, OSError,
            json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
