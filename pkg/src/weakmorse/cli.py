"""Command-line entry point: ``weakmorse {check,continuation,limit-sweep,blowup}``.

Exit codes: 0 when every scientific check passes, 1 on a scientific
failure, 2 on a usage or configuration error. Every flag can also be set
through an environment variable ``WEAKMORSE_<FLAG>`` (flags win).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from importlib import resources

import jsonschema
import numpy as np

from .exceptions import ConfigError, WeakMorseError

log = logging.getLogger("weakmorse")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
ENV_PREFIX = "WEAKMORSE_"

FLAGSHIP = {
    "system": {"d": 3, "masses": [1.0, 1.0], "alpha": 1.0},
    "qa": [[-50.0, 0.0, 0.0], [50.0, 0.0, 0.0]],
    "qb": [[-50.0, 0.0, 0.0], [50.0, 0.0, 0.0]],
    "t1": 0.0,
    "t2": 1000.0,
    "M": 256,
    "grid": "graded",
    "kappa": 0.05,
    "eps_schedule": [4.0 ** -n for n in range(1, 9)],
    "tol": 1e-8,
    "tail": 4,
    "max_iter": 60,
    "seed_strategy": {"loop": {"L": 100.0, "delta0": 2.0}},
}

DEFAULTS = {
    "check": {"d": 3, "alpha": 1.0, "eps": 0.01, "bodies": [2, 3, 4], "n_samples": 5,
              "M": 16, "rel_tol": 1e-6},
    "continuation": FLAGSHIP,
    "limit-sweep": {"alphas": [1.0, 1.5], "lambdas": [0.0, 1.0, 3.0], "L": 200.0,
                    "mesh": 4000, "R": 1e6, "mass_sum": 1.0, "check_convergence": True},
    "blowup": {"last": 4, "case": None, "bump_width": 2.0},
}

SCHEMAS = {"check": "check_config.json", "continuation": "continuation_config.json",
           "limit-sweep": "limit_sweep_config.json", "blowup": "blowup_config.json"}

FAULTS = {"check": ("corrupt-gradient",), "continuation": ("break-solver",),
          "limit-sweep": (), "blowup": ()}


class ScientificFailure(Exception):
    """Raised by a command body to request exit code 1 with a message."""


# -- io helpers --------------------------------------------------------------------

def load_schema(name: str) -> dict:
    text = resources.files("weakmorse").joinpath("schemas", name).read_text()
    return json.loads(text)


def validate(instance, schema_name: str):
    try:
        jsonschema.validate(instance, load_schema(schema_name))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"{schema_name}: {exc.message}") from exc


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=1, allow_nan=False) + "\n"


def write_atomic(path: str, text: str):
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# -- configuration -------------------------------------------------------------------

def _env(name):
    return os.environ.get(ENV_PREFIX + name.upper())


def _int_option(value, name):
    if value is None:
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None


def resolve(args) -> dict:
    """Merge defaults, config file, environment and flags into run settings."""
    cmd = args.command
    config_path = args.config or _env("config")
    cfg = dict(DEFAULTS[cmd])
    if config_path:
        try:
            with open(config_path) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("the config file must hold a JSON object")
        if cmd == "continuation":
            cfg = {k: v for k, v in FLAGSHIP.items()
                   if k not in ("system", "qa", "qb", "eps_schedule", "seed_strategy")}
        cfg.update(user)
    seed = _int_option(args.seed, "--seed")
    if seed is None:
        seed = _int_option(_env("seed"), "WEAKMORSE_SEED")
    if seed is None:
        seed = int(cfg.get("seed", 1 if cmd == "continuation" else 0))
    cfg.pop("seed", None)
    validate(cfg, SCHEMAS[cmd])
    workers = _int_option(args.workers if args.workers is not None else _env("workers"),
                          "--workers")
    workers = 1 if workers is None else workers
    if workers < 1:
        raise ConfigError("--workers must be at least 1")
    fault = args.fault_inject or _env("fault_inject")
    if fault and fault not in FAULTS[cmd]:
        raise ConfigError(f"unknown fault {fault!r} for {cmd}; known: {list(FAULTS[cmd])}")
    out = args.out or _env("out") or os.path.join("weakmorse-out", cmd)
    return {"config": cfg, "seed": seed, "workers": workers, "fault": fault, "out": out}


# -- commands ------------------------------------------------------------------------

def cmd_check(run) -> tuple:
    from .checks import run_checks
    rng = np.random.default_rng(run["seed"])
    results = run_checks(run["config"], rng, run["fault"])
    failed = [f"{r['suite']}.{r['name']}" for r in results if not r["passed"]]
    msg = "all invariants hold" if not failed else "failed: " + ", ".join(failed)
    return not failed, {"checks": results}, msg


def _prepare_continuation(cfg):
    from .core import MassSystem
    from ._validation import check_configuration
    try:
        s = cfg["system"]
        system = MassSystem(s["d"], tuple(s["masses"]), s["alpha"])
        qa = check_configuration(system, cfg["qa"], "qa")
        qb = check_configuration(system, cfg["qb"], "qb")
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    sched = cfg["eps_schedule"]
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ConfigError("eps_schedule must be strictly decreasing")
    if cfg.get("t2", 1.0) <= cfg.get("t1", 0.0):
        raise ConfigError("t2 must exceed t1")
    return system, qa, qb


def _seed_strategy(spec):
    from .critical import two_body_loop_seed
    if isinstance(spec, dict):
        loop = spec["loop"]
        return two_body_loop_seed(loop["L"], loop["delta0"], loop.get("plane_normal"))
    return spec


def cmd_continuation(run) -> tuple:
    from .collision import detect_collisions
    from .critical import continuation, verify_index_bound
    from .exceptions import ContinuationBroke, InsufficientData
    cfg = run["config"]
    system, qa, qb = _prepare_continuation(cfg)
    out = run["out"]
    try:
        seq = continuation(
            system, qa, qb, cfg["eps_schedule"], tol=cfg.get("tol", 1e-8),
            seed_strategy=_seed_strategy(cfg.get("seed_strategy", "linear")),
            M=cfg.get("M", 64), t1=cfg.get("t1", 0.0), t2=cfg.get("t2", 1.0),
            grid=cfg.get("grid", "uniform"), kappa=cfg.get("kappa", 0.05), seed=run["seed"],
            tail=cfg.get("tail", 4),
            max_iter=0 if run["fault"] == "break-solver" else cfg.get("max_iter", 60),
            max_substeps=0 if run["fault"] == "break-solver" else 4)
    except ContinuationBroke as exc:
        partial = exc.partial
        if partial is not None and partial.records:
            _emit_sequence(out, partial)
        return False, {"sequence": partial.summary() if partial else None}, str(exc)
    try:
        events = detect_collisions(seq)
    except InsufficientData:
        events = []
    bound = verify_index_bound(seq, events)
    _emit_sequence(out, seq)
    results = {"sequence": seq.summary(), "events": [e.to_dict() for e in events],
               "index_bound": bound}
    ok = bool(bound["holds"] and seq.flags.get("all_converged", False))
    msg = (f"{len(seq.records)} records, index liminf {seq.index_liminf}, "
           f"{bound['B']} binary event(s), bound {'holds' if bound['holds'] else 'FAILS'}")
    return ok, results, msg


def _emit_sequence(out, seq):
    full = seq.to_dict()
    validate(_clean(full), "sequence.json")
    write_atomic(os.path.join(out, "sequence.json"), dumps(full))
    for n, rec in enumerate(seq.records):
        d = rec.to_dict()
        validate(_clean(d), "record.json")
        write_atomic(os.path.join(out, "records", f"record_{n:03d}.json"), dumps(d))
    rows = []
    for n, rec in enumerate(seq.records):
        for (i, j), series in sorted(seq.separations.items()):
            _, delta, t_star = series[n]
            rows.append([n, rec.eps, rec.action.total, rec.residual_h1dual, rec.morse_index,
                         f"{i}-{j}", delta, t_star])
    write_atomic(os.path.join(out, "series.csv"),
                 csv_text(["n", "eps", "action", "residual_h1dual", "morse_index", "pair",
                           "delta", "t_star"], rows))


def _sweep_job(args):
    from .limitprob import sweep_point
    return sweep_point(*args)


SWEEP_COLUMNS = ["alpha", "lambda", "theory_angle", "numeric_angle", "angle_error",
                 "i_alpha_lambda", "transverse_count", "count_2L", "swept_angle_L",
                 "converged", "bound_holds", "L", "mesh"]


def cmd_limit_sweep(run) -> tuple:
    cfg = run["config"]
    jobs = [(a, lam, cfg["R"], cfg["L"], cfg["mesh"], cfg["mass_sum"], cfg["check_convergence"])
            for a in cfg["alphas"] for lam in cfg["lambdas"]]
    if run["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=run["workers"]) as pool:
            rows = list(pool.map(_sweep_job, jobs))
    else:
        rows = [_sweep_job(j) for j in jobs]
    write_atomic(os.path.join(run["out"], "sweep.csv"),
                 csv_text(SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows]))
    violations = [r for r in rows if r["converged"] and not r["bound_holds"]]
    unresolved = [r for r in rows if not r["converged"]]
    msg = f"{len(rows)} point(s), {len(violations)} bound violation(s)"
    if unresolved:
        msg += f", {len(unresolved)} not resolved by the truncation"
    return not violations, {"rows": rows}, msg


def cmd_blowup(run) -> tuple:
    from .collision import (blow_up, bump, collision_direction, detect_collisions,
                            direction_angle, restricted_quadform_convergence)
    from .critical import WeakCriticalSequence
    from .exceptions import InsufficientData
    cfg = run["config"]
    src = cfg.get("sequence") or os.path.join(os.path.dirname(os.path.abspath(run["out"])),
                                              "continuation", "sequence.json")
    try:
        with open(src) as fh:
            data = json.load(fh)
        validate(data, "sequence.json")
        seq = WeakCriticalSequence.from_dict(data)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot load sequence {src}: {exc}") from exc
    try:
        events = detect_collisions(seq)
    except InsufficientData as exc:
        return False, {"events": []}, f"no collision events: {exc}"
    binary = [e for e in events if e.kind == "binary"]
    if not binary:
        return False, {"events": [e.to_dict() for e in events]}, "no binary collision events"
    out = run["out"]
    results = {"events": [e.to_dict() for e in events], "blowups": []}
    N = len(seq.records)
    last = range(max(0, N - cfg["last"]), N)
    for k, ev in enumerate(binary):
        entry = {"event": k, "lambda_fit": ev.lambda_fit, "lambda_info": ev.lambda_info,
                 "profiles": []}
        for n in last:
            prof = blow_up(seq, ev, n, cfg.get("case"), cfg.get("window"))
            name = f"event{k}_n{n:03d}.csv"
            write_atomic(os.path.join(out, "profiles", name), prof.to_csv())
            entry["profiles"].append({"n": n, "file": f"profiles/{name}", **prof.source,
                                      "pre_asymptotic": prof.pre_asymptotic})
        um, dm = collision_direction(seq, ev, "before", return_diagnostics=True)
        up, dp = collision_direction(seq, ev, "after", return_diagnostics=True)
        entry["directions"] = {"u_minus": um, "u_plus": up, "angle": direction_angle(um, up),
                               "before": dm, "after": dp}
        if math.isfinite(ev.lambda_fit):
            qf = restricted_quadform_convergence(seq, ev, bump(cfg["bump_width"]),
                                                 records=list(last))
            write_atomic(os.path.join(out, f"quadform_event{k}.csv"),
                         csv_text(["n", "value", "limit", "rel_diff"],
                                  [[n, v, qf["limit"], r] for n, v, r in
                                   zip(qf["records"], qf["values"], qf["rel_diff"])]))
            entry["quadform"] = qf
        results["blowups"].append(entry)
    return True, results, f"{len(binary)} binary event(s), profiles for {len(last)} record(s)"


COMMANDS = {"check": cmd_check, "continuation": cmd_continuation,
            "limit-sweep": cmd_limit_sweep, "blowup": cmd_blowup}


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON config file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--seed", metavar="INT", help="RNG seed")
    common.add_argument("--workers", metavar="INT", help="worker processes for sweeps")
    common.add_argument("--fault-inject", metavar="NAME", help=argparse.SUPPRESS)
    parser = argparse.ArgumentParser(
        prog="weakmorse", description="Morse-index experiments for weak-force N-body actions.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"check": "finite-difference and identity invariant suites",
             "continuation": "critical points along a decreasing eps schedule",
             "limit-sweep": "asymptotic angles and transverse counts of the limit problem",
             "blowup": "blow-up profiles and directions of a stored sequence"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(ENV_PREFIX + "LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        run = resolve(args)
        ok, results, msg = COMMANDS[args.command](run)
    except ConfigError as exc:
        print(f"weakmorse {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WeakMorseError, ScientificFailure) as exc:
        ok, results, msg = False, {}, f"{type(exc).__name__}: {exc}"
    code = EXIT_OK if ok else EXIT_FAIL
    summary = {"command": args.command, "exit_code": code, "passed": bool(ok),
               "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
               "config": run["config"], "seed": run["seed"], "message": msg,
               "results": results}
    summary = _clean(summary)
    validate(summary, "summary.json")
    write_atomic(os.path.join(run["out"], "summary.json"), dumps(summary))
    print(f"weakmorse {args.command}: {'PASS' if ok else 'FAIL'}: {msg}")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
