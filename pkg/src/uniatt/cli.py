"""
Command-line front end.

    uniatt solve --input set.json --out DIR [--handeye-only] [--projection svd|cayley]
    uniatt sweep [--input scenario.json] --out DIR [--trials K] [--seed S] [--jobs J]
    uniatt filter [--input study.json] --out DIR [--seed S]
    uniatt oracle-check [--trials K] [--seed S]

Exit codes: 0 success, 1 property failure, 2 input error, 3 precondition
error. Artifacts are written with sorted keys and no timestamps so that a
re-run with the same seed reproduces them byte for byte. ``ATT_LOG`` sets
the log level (e.g. ``ATT_LOG=debug``).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import rotation_covariance, solution_covariance
from .measurements import MeasurementSet, NoiseSpec, SchemaError, check_orthonormal
from .projection import CayleySingularityError, project_cayley, project_svd, rotation_error
from .simulation import (
    ScenarioSpec,
    TrajectorySpec,
    run_monte_carlo,
    summarize,
    summary_csv,
    sweep_csv,
)
from .solver import PreconditionError, solve_handeye_only, solve_unified

log = logging.getLogger("uniatt")

EXIT_OK, EXIT_PROPERTY, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2, 3
DEFAULT_SEED = 20240501


class InputError(Exception):
    """Bad command-line input or configuration document."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dump(path, doc):
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text)


def _metadata(command, seed, config):
    return {"tool": "uniatt", "version": __version__, "command": command,
            "seed": seed, "config": config}


def _read_json(path, what):
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {what} {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("<json>", f"{path} is not valid JSON ({exc})") from None


def _outdir(path):
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _rowmajor(M):
    return None if M is None else np.asarray(M).tolist()


# solve

def cmd_solve(args):
    doc = _read_json(args.input, "measurement file")
    if doc is None:
        raise InputError("solve needs --input")
    ms = MeasurementSet.from_dict(doc)
    R_true = None
    if isinstance(doc, dict) and doc.get("R_true") is not None:
        try:
            R_true = check_orthonormal(np.asarray(doc["R_true"], dtype=float), "R_true")
        except ValueError as exc:
            raise SchemaError("R_true", str(exc)) from None

    sol = solve_handeye_only(ms) if args.handeye_only else solve_unified(ms)
    xm = sol.R_tilde
    R_svd = project_svd(xm)
    R_cay = None
    try:
        R_cay = project_cayley(xm)
    except CayleySingularityError as exc:
        log.warning("Cayley projection unavailable: %s", exc)

    sigma_xx = sigma_R = sigma_g = None
    if sol.mode == "unified":
        sigma_xx = solution_covariance(ms, sol).sigma_xx
        try:
            rc = rotation_covariance(sol, sigma_xx,
                                     R=R_cay.R if args.projection == "cayley" and R_cay else R_svd.R)
            sigma_R, sigma_g = rc.sigma_R, rc.sigma_g
        except CayleySingularityError as exc:
            log.warning("rotation covariance unavailable: %s", exc)

    chosen = R_cay if (args.projection == "cayley" and R_cay is not None) else R_svd
    eta = None
    if R_true is not None:
        eta = {"svd": rotation_error(R_svd.R, R_true),
               "cayley": None if R_cay is None else rotation_error(R_cay.R, R_true)}
    result = {
        "metadata": _metadata("solve", None, {
            "input": Path(args.input).name, "handeye_only": bool(args.handeye_only),
            "projection": args.projection, "measurements": ms.to_dict(),
        }),
        "mode": sol.mode,
        "x": sol.x,
        "R": _rowmajor(chosen.R),
        "projection": chosen.method,
        "R_svd": _rowmajor(R_svd.R),
        "R_cayley": _rowmajor(None if R_cay is None else R_cay.R),
        "g": None if R_cay is None else R_cay.g,
        "eta": eta,
        "sigma_xx": _rowmajor(sigma_xx),
        "sigma_R": _rowmajor(sigma_R),
        "sigma_g": _rowmajor(sigma_g),
        "flags": {
            "rank": sol.rank,
            "degenerate": sol.degenerate,
            "ambiguous": sol.ambiguous,
            "eigenspace_dim": sol.eigenspace_dim,
            "ill_conditioned": R_svd.ill_conditioned,
        },
        "loss": sol.loss,
    }
    out = _outdir(args.out)
    _dump(out / "solution.json", result)
    log.info("wrote %s", out / "solution.json")
    return EXIT_OK


# sweep

def _scenario_from_args(args):
    doc = _read_json(args.input, "scenario file") or {}
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "scenario must be a JSON object")
    doc = dict(doc)
    if args.trials is not None:
        doc["trials"] = args.trials
    if args.seed is not None:
        doc["seed"] = args.seed
    doc.setdefault("seed", DEFAULT_SEED)
    if args.projection is not None:
        doc["projection"] = args.projection
    known = set(ScenarioSpec.__dataclass_fields__) | {"symmetric_eig_range", "reference_vectors"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise SchemaError(unknown[0], "unknown scenario field")
    try:
        return ScenarioSpec.from_dict(doc)
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError("scenario", str(exc)) from None


def cmd_sweep(args):
    scenario = _scenario_from_args(args)
    log.info("sweep %s: %d cells x %d trials", scenario.scenario_id,
             len(scenario.cells()), scenario.trials)
    records = run_monte_carlo(scenario, jobs=args.jobs)
    out = _outdir(args.out)
    (out / "sweep.csv").write_text(sweep_csv(records))
    (out / "summary.csv").write_text(summary_csv(summarize(records)))
    _dump(out / "metadata.json", _metadata("sweep", scenario.seed, scenario.to_dict()))
    return EXIT_OK


# filter

def _filter_study(args):
    from .estimation import FilterConfig

    doc = _read_json(args.input, "filter study file")
    if doc is None:
        doc = {"trajectory": {"kind": "quat_sinusoid_44", "length": 20000, "period": 1e-3}}
    if not isinstance(doc, dict):
        raise SchemaError("<root>", "filter study must be a JSON object")
    if "trajectory" not in doc or not isinstance(doc["trajectory"], dict):
        raise SchemaError("trajectory", "missing trajectory specification")
    try:
        traj = TrajectorySpec(**doc["trajectory"])
    except (TypeError, ValueError) as exc:
        raise SchemaError("trajectory", str(exc)) from None
    try:
        cfg = FilterConfig(**doc.get("config", {}))
    except (TypeError, ValueError) as exc:
        raise SchemaError("config", str(exc)) from None
    meas = dict(doc.get("measurement", {}))
    meas.setdefault("N", [6])
    meas.setdefault("M", [1])
    meas.setdefault("noise", {"eps_vector": 1e-4, "eps_handeye": 1e-6})
    try:
        meas_spec = ScenarioSpec(
            n=3, N=tuple(meas["N"]), M=tuple(meas["M"]),
            handeye_kind=meas.get("handeye_kind", "rigid"),
            noise=NoiseSpec.from_dict(meas["noise"], "measurement.noise"),
        )
    except SchemaError:
        raise
    except (TypeError, ValueError) as exc:
        raise SchemaError("measurement", str(exc)) from None
    bias = doc.get("bias_true", [1e-3, -2e-3, 5e-4])
    try:
        bias = np.asarray(bias, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("bias_true", "expected three numbers") from None
    if bias.shape != (3,) or not np.all(np.isfinite(bias)):
        raise SchemaError("bias_true", "expected three finite numbers")
    settle = float(doc.get("settle_time", 1.0))
    return cfg, traj, bias, meas_spec, settle


def cmd_filter(args):
    from .estimation import filter_csv, run_filter_study

    cfg, traj, bias, meas_spec, settle = _filter_study(args)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    result = run_filter_study(cfg, traj, bias, meas_spec, seed=seed, settle_time=settle)
    out = _outdir(args.out)
    (out / "filter.csv").write_text(filter_csv(result))
    config = {
        "filter": cfg.to_dict(),
        "trajectory": {"kind": traj.kind, "length": traj.length, "period": traj.period,
                       "freq": None if traj.freq is None else list(traj.freq),
                       "phase": None if traj.phase is None else list(traj.phase)},
        "bias_true": bias.tolist(),
        "measurement": meas_spec.to_dict(),
        "settle_time": settle,
    }
    summary = result.summary()
    summary["metadata"] = _metadata("filter", seed, config)
    _dump(out / "filter_summary.json", summary)
    log.info("bias error %.3e, NIS consistency %.3f", result.bias_error, result.nis_consistency)
    return EXIT_OK


# oracle-check

def cmd_oracle_check(args):
    from .checks import MIN_COVARIANCE_TRIALS, run_all

    seed = DEFAULT_SEED if args.seed is None else args.seed
    trials = MIN_COVARIANCE_TRIALS if args.trials is None else args.trials
    results = run_all(trials=trials, seed=seed)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {r.status.upper():<4}  {r.detail}")
    if args.out:
        out = _outdir(args.out)
        _dump(out / "oracle_check.json", {
            "metadata": _metadata("oracle-check", seed, {"trials": trials}),
            "results": [{"name": r.name, "status": r.status, "detail": r.detail,
                         "metrics": r.metrics} for r in results],
        })
    return EXIT_OK if all(r.ok for r in results) else EXIT_PROPERTY


def build_parser():
    p = argparse.ArgumentParser(prog="uniatt", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one measurement set")
    s.add_argument("--input", required=True)
    s.add_argument("--out", default=".")
    s.add_argument("--handeye-only", action="store_true")
    s.add_argument("--projection", choices=("svd", "cayley"), default="svd")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="Monte Carlo sweep over (N, M)")
    s.add_argument("--input")
    s.add_argument("--out", default=".")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--projection", choices=("svd", "cayley"))
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("filter", help="gyro fusion filter study")
    s.add_argument("--input")
    s.add_argument("--out", default=".")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_filter)

    s = sub.add_parser("oracle-check", help="run the self-check oracle suites")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle_check)
    return p


def _configure_logging():
    level = os.environ.get("ATT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
