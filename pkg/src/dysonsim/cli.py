"""Command-line experiment runner.

    dysonsim run --preset amplitude-damping --output out/
    dysonsim list-presets
    dysonsim validate --config my.yaml

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 a --check
threshold was breached.  The worker count comes from ``DYSONSIM_WORKERS``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import io
import json
import math
import sys
import traceback
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import bounds
from .config import ExperimentConfig, list_presets, load, load_preset
from .errors import BudgetError, DimensionError, DysonSimError, ValidationError
from .estimator import EstimateReport, SamplingBudget, default_workers, estimate_observable, split_budgets
from .model import NonHermitianModel, check_nonmarkovian_validity, normalize_lindblads
from .oracle import oracle_trajectory
from .pauli import decompose, embed_dimension

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_CHECK = 0, 1, 2, 3
REPORT_FORMAT = "dysonsim-report/1"
DEFAULT_SAMPLES = 10_000
QUADRATURE_MARGIN = 1e-6


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    out = io.StringIO()
    _write(obj, out)
    out.write("\n")
    return out.getvalue()


def _write(obj, out):
    if obj is None or isinstance(obj, bool):
        out.write(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        out.write(format(x, ".17g") if math.isfinite(x) else "null")
    elif isinstance(obj, str):
        out.write(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.write("{")
        for i, key in enumerate(sorted(obj, key=str)):
            out.write(", " if i else "")
            out.write(json.dumps(str(key), ensure_ascii=False) + ": ")
            _write(obj[key], out)
        out.write("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        out.write("[")
        for i, item in enumerate(obj):
            out.write(", " if i else "")
            _write(item, out)
        out.write("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv_header(K: int) -> list[str]:
    return (
        ["time", "oracle_value", "order0"]
        + [f"cum_order{k}" for k in range(1, K + 1)]
        + ["mc_estimate", "truncation_bound", "observable_bound", "delta_total"]
    )


def resolve_orders(cfg: ExperimentConfig) -> int:
    if cfg.orders is not None:
        return cfg.orders
    inputs = _inputs(cfg, max(cfg.times))
    return bounds.truncation_order(inputs, cfg.c * cfg.epsilon)


def _inputs(cfg: ExperimentConfig, t: float) -> bounds.BoundInputs:
    return bounds.BoundInputs.from_model(normalize_lindblads(cfg.build_model()), cfg.observable_matrix(), t)


def budgets_for(cfg: ExperimentConfig, inputs: bounds.BoundInputs, K: int):
    """Per-order budgets: explicit samples, then a per-order delta, then the epsilon split."""
    if not cfg.sampled:
        return ()
    if cfg.samples is not None:
        return tuple(SamplingBudget.for_samples(inputs, n, cfg.samples, cfg.beta) for n in range(1, K + 1))
    if cfg.delta is not None:
        return tuple(SamplingBudget.for_delta(inputs, n, cfg.delta, cfg.beta) for n in range(1, K + 1))
    if cfg.epsilon is not None:
        return split_budgets(inputs, K, cfg.epsilon, cfg.c, cfg.beta)
    return tuple(SamplingBudget.for_samples(inputs, n, DEFAULT_SAMPLES, cfg.beta) for n in range(1, K + 1))


def validity_summary(cfg: ExperimentConfig) -> dict:
    model = cfg.build_model()
    horizon = max(cfg.times)
    flags = [check_nonmarkovian_validity(c.rate, horizon).flag for c in model.channels]
    if "invalid" in flags:
        overall = "invalid"
    elif "valid-non-markovian" in flags:
        overall = "valid-non-markovian"
    else:
        overall = "markovian"
    return {"channels": flags, "flag": overall, "horizon": horizon}


def header(cfg: ExperimentConfig, K: int) -> dict:
    model = cfg.build_model()
    norm = normalize_lindblads(model)
    O = cfg.observable_matrix()
    t_max = max(cfg.times)
    inputs = _inputs(cfg, t_max)
    out = {
        "qubits": cfg.qubits,
        "dim": model.dim,
        "N": inputs.N,
        "channel_kind": "anticommutator" if isinstance(model, NonHermitianModel) else "lindblad",
        "M": inputs.M,
        "M_O": inputs.M_O,
        "gamma_bar": inputs.gamma_bar,
        "K": K,
        "bounds_time": t_max,
        "observable_norm": float(np.linalg.norm(O, 2)),
        "dissipator_adjoint_norm": bounds.dissipator_adjoint_norm(norm, O, t_max),
        "pauli_observable": decompose(embed_dimension(O)).to_dict(),
        "validity": validity_summary(cfg),
    }
    if cfg.epsilon is not None:
        tot = bounds.total_measurements(inputs, cfg.epsilon, cfg.c, cfg.beta)
        out["measurement_scaling"] = {"K": tot.K, "exact_sum": tot.exact_sum, "closed_form": tot.closed_form}
    return out


def check_tolerance(rep: EstimateReport) -> float:
    """Allowed |estimate - oracle|: truncation (observable units) plus sampling deltas."""
    return 2.0 * rep.observable_norm * rep.truncation.mean_abs + rep.delta_total + QUADRATURE_MARGIN


def _order_dict(o) -> dict:
    return {
        "order": o.order,
        "mode": o.mode,
        "value": o.value,
        "stderr": o.stderr,
        "samples": o.samples,
        "prefactor": o.prefactor,
        "chain_evaluations": o.chain_evaluations,
        "delta": o.delta,
        "beta": o.beta,
    }


def _result_dict(rep: EstimateReport) -> dict:
    return {
        "time": rep.t,
        "oracle_value": rep.oracle_value,
        "orders": [_order_dict(o) for o in rep.orders],
        "cumulative": rep.cumulative,
        "mc_estimate": rep.total,
        "truncation_bound": {"mean_abs": rep.truncation.mean_abs, "coarse": rep.truncation.coarse},
        "observable_bound": rep.observable_bound,
        "delta_total": rep.delta_total,
        "failure_probability": rep.failure_probability,
        "tallies": rep.tallies,
        "check_tolerance": check_tolerance(rep),
        "abs_error": None if rep.oracle_value is None else abs(rep.total - rep.oracle_value),
    }


@dataclass
class RunResult:
    config: ExperimentConfig
    document: dict
    reports: list[EstimateReport]
    breaches: list[float]

    @property
    def passed(self) -> bool:
        return not self.breaches

    def canonical(self) -> str:
        return canonical_json(self.document)

    def csv_rows(self) -> list[list]:
        K = self.document["header"]["K"]
        rows = []
        for rep in self.reports:
            cum = rep.cumulative
            rows.append(
                [rep.t, rep.oracle_value, cum[0], *cum[1 : K + 1], rep.total, rep.truncation.mean_abs, rep.observable_bound, rep.delta_total]
            )
        return rows

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(csv_header(self.document["header"]["K"]))
        for row in self.csv_rows():
            w.writerow(["" if v is None else format(float(v), ".17g") for v in row])
        return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunResult:
    K = resolve_orders(cfg)
    if cfg.mode == "deterministic-quadrature" and K > 4:
        raise ValidationError("deterministic-quadrature supports orders up to 4")
    model = cfg.build_model()
    rho0 = cfg.rho0()
    O = cfg.observable_matrix()
    states = oracle_trajectory(model, rho0, cfg.times, cfg.oracle_steps)
    reports, breaches = [], []
    for i, (t, rho_t) in enumerate(zip(cfg.times, states)):
        oracle_value = float(np.einsum("ij,ji->", O, rho_t).real)
        rep = estimate_observable(
            model,
            rho0,
            O,
            t,
            K,
            budgets_for(cfg, _inputs(cfg, t), K),
            cfg.mode,
            seed=cfg.seed,
            workers=workers,
            oracle_value=oracle_value,
            stream_id=i,
        )
        reports.append(rep)
        if abs(rep.total - oracle_value) > check_tolerance(rep):
            breaches.append(t)
    totals: dict[str, int] = {}
    for rep in reports:
        for k, v in rep.tallies.items():
            totals[k] = totals.get(k, 0) + v
    document = {
        "format": REPORT_FORMAT,
        "config": cfg.to_dict(),
        "header": header(cfg, K),
        "results": [_result_dict(r) for r in reports],
        "tallies": totals,
        "seed": cfg.seed,
        "check": {"passed": not breaches, "breach_times": breaches},
    }
    return RunResult(cfg, document, reports, breaches)


def write_outputs(result: RunResult, output: Path, workers: int) -> dict[str, Path]:
    output.mkdir(parents=True, exist_ok=True)
    paths = {"report": output / "report.json", "csv": output / "timeseries.csv", "run_info": output / "run_info.json"}
    paths["report"].write_text(result.canonical(), encoding="utf-8")
    paths["csv"].write_text(result.csv_text(), encoding="utf-8")
    info = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "workers": workers,
        "version": _version(),
        "argv": sys.argv[1:],
    }
    paths["run_info"].write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def provenance(exc: BaseException) -> str:
    """Innermost package module in the traceback, e.g. ``dysonsim.oracle``."""
    mod = "dysonsim"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = Path(frame.filename)
        if path.parent.name == "dysonsim":
            mod = f"dysonsim.{path.stem}"
    return mod


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dysonsim", description="Open-system observables from a sampled dissipative series.")
    p.add_argument("command", nargs="?", default="run", choices=["run", "list-presets", "validate"])
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="YAML experiment file")
    src.add_argument("--preset", help="bundled preset name (see list-presets)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--mode", choices=["shots", "exact-mean", "deterministic-quadrature"])
    p.add_argument("--orders", type=int, metavar="K", help="maximum series order")
    p.add_argument("--epsilon", type=float, help="target total error; chooses K and the budgets")
    p.add_argument("--output", type=Path, help="directory for report.json, timeseries.csv, run_info.json")
    p.add_argument("--oracle-steps", type=int, help="RK4 steps per unit time for the reference solution")
    p.add_argument("--check", action="store_true", help="exit 3 if |estimate - oracle| exceeds the bound anywhere")
    p.add_argument("--quiet", action="store_true")
    return p


def _load(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load(args.config)
    elif args.preset is not None:
        cfg = load_preset(args.preset)
    else:
        raise ValidationError("give --config PATH or --preset NAME")
    changes = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ValidationError("--seed must be an unsigned 64-bit integer")
        changes["seed"] = args.seed
    if args.mode is not None:
        changes["mode"] = args.mode
    if args.orders is not None:
        if args.orders < 0:
            raise ValidationError("--orders must be >= 0")
        changes.update(orders=args.orders, epsilon=None)
    if args.epsilon is not None:
        if not 0.0 < args.epsilon < 1.0:
            raise ValidationError("--epsilon must lie in (0, 1)")
        changes.update(epsilon=args.epsilon, orders=None, samples=None, delta=None)
    if args.oracle_steps is not None:
        if args.oracle_steps < 1:
            raise ValidationError("--oracle-steps must be >= 1")
        changes["oracle_steps"] = args.oracle_steps
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _summary(result: RunResult) -> str:
    lines = [f"{'time':>8} {'oracle':>13} {'estimate':>13} {'|error|':>10} {'allowed':>10}"]
    for rep in result.reports:
        err = abs(rep.total - rep.oracle_value)
        lines.append(f"{rep.t:8.4f} {rep.oracle_value:13.8f} {rep.total:13.8f} {err:10.2e} {check_tolerance(rep):10.2e}")
    h = result.document["header"]
    lines.append(f"K = {h['K']}, ||L_D^+ O|| = {h['dissipator_adjoint_norm']:.6g}, validity: {h['validity']['flag']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    try:
        if args.command == "list-presets":
            for name, desc in list_presets():
                out.write(f"{name:24s} {desc}\n")
            return EXIT_OK
        cfg = _load(args)
        if args.command == "validate":
            model = cfg.build_model()
            out.write(
                f"ok: {cfg.name}, {cfg.qubits} qubit(s), {model.N} channel(s), "
                f"{len(cfg.times)} time(s), mode {cfg.mode}, K = {resolve_orders(cfg)}\n"
            )
            return EXIT_OK
        workers = default_workers()
        result = run_experiment(cfg, workers=workers)
        if args.output is not None:
            write_outputs(result, args.output, workers)
        if not args.quiet:
            out.write(_summary(result) + "\n")
        if args.check and not result.passed:
            sys.stderr.write(f"check failed at times {result.breaches}\n")
            return EXIT_CHECK
        return EXIT_OK
    except (ValidationError, DimensionError, BudgetError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INVALID
    except (DysonSimError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure [{provenance(exc)}]: {exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
