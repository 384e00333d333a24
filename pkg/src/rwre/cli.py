"""Command-line front end: calibration, self-validation, experiment dispatch.

Three subcommands:

``rwre calibrate --config cfg.json``
    Estimate the tail constants for the configured environment law and print
    the report as JSON.

``rwre validate``
    Run the oracle-equivalence suite: the closed-form quenched formulas
    against an independent tridiagonal solve on random finite windows.

``rwre experiment NAME --config cfg.json``
    Run one of the named statistical experiments and write its result files.

All randomness flows from the single ``seed`` field; a config without a seed
is rejected rather than silently seeded from the clock. Result JSON is byte
identical across reruns and worker counts; wall-clock facts (timestamps,
runtimes) go to a ``*.meta.json`` sidecar.

Exit codes: 0 pass, 1 experiment or validation failure, 2 usage or config
error, 3 estimation failure, 4 censoring breach.
"""

import argparse
import csv
import datetime
import io
import json
import os
import sys
import time

from . import env as env_mod
from . import limits, quenched
from .errors import (
    BudgetExhaustedError,
    CensoringError,
    EnvSpecError,
    EstimationError,
    RwreError,
)
from .experiments import EXPERIMENTS, ExperimentConfig
from .seeding import stream

SCHEMA_VERSION = 1

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_ESTIMATION = 3
EXIT_CENSORING = 4


class ConfigError(RwreError, ValueError):
    """Bad config file: unknown keys, wrong schema, missing fields."""


# ---------------------------------------------------------------------------
# config plumbing

_SPEC_FAMILIES = {
    "beta": ("alpha", "beta"),
    "two-point": ("omega_hi", "omega_lo", "p_hi"),
    "tabulated": ("omegas", "weights"),
}

# every key a config file may carry; anything else is rejected
_EXPERIMENT_KEYS = (
    "n",
    "n_ladder",
    "heights",
    "env_replicas",
    "walk_replicas",
    "excursion_samples",
    "reference_samples",
    "g_samples",
    "kappa_override",
    "lambda_override",
    "w1_threshold",
    "self_w1_tolerance",
    "ratio_bound",
    "height_band",
    "trim",
    "censor_ceiling",
    "gamma",
    "fit_window",
    "n_boot",
    "route",
    "workers",
)
_COMMON_KEYS = ("schema_version", "seed", "spec")
_VALIDATE_KEYS = ("schema_version", "seed", "cases", "max_window",
                  "tolerance_prob", "tolerance_mean", "tolerance_variance")


def parse_spec(node):
    """Build an environment law from its JSON description."""
    if not isinstance(node, dict):
        raise ConfigError("spec must be an object with a 'family' key")
    family = node.get("family")
    if family not in _SPEC_FAMILIES:
        raise ConfigError(
            "unknown spec family %r (expected one of %s)"
            % (family, ", ".join(sorted(_SPEC_FAMILIES)))
        )
    fields = _SPEC_FAMILIES[family]
    extra = set(node) - set(fields) - {"family"}
    if extra:
        raise ConfigError("unknown spec keys: %s" % ", ".join(sorted(extra)))
    missing = [f for f in fields if f not in node]
    if missing:
        raise ConfigError("spec family %r needs keys: %s" % (family, ", ".join(missing)))
    if family == "beta":
        return env_mod.BetaEnv(float(node["alpha"]), float(node["beta"]))
    if family == "two-point":
        return env_mod.TwoPointEnv(
            float(node["omega_hi"]), float(node["omega_lo"]), float(node["p_hi"])
        )
    return env_mod.TabulatedEnv(tuple(node["omegas"]), tuple(node["weights"]))


def load_config(path, allowed):
    """Read a JSON config, enforcing the schema version and the key whitelist."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("cannot read config file %s: %s" % (path, exc))
    except json.JSONDecodeError as exc:
        raise ConfigError("config file %s is not valid JSON: %s" % (path, exc))
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(
            "config schema_version must be %d (got %r)"
            % (SCHEMA_VERSION, raw.get("schema_version"))
        )
    unknown = set(raw) - set(allowed)
    if unknown:
        raise ConfigError("unknown config keys: %s" % ", ".join(sorted(unknown)))
    return raw


def _require_seed(raw, args):
    if args.seed is not None:
        return int(args.seed)
    if "seed" not in raw:
        raise ConfigError("config has no 'seed' field and --seed was not given; "
                          "seeds are never auto-generated")
    return int(raw["seed"])


def canonical_json(obj):
    """Deterministic JSON text: sorted keys, repr floats, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def _write_text(directory, name, text):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _write_meta(directory, name, runtime, args):
    meta = {
        "timestamp_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "runtime_seconds": runtime,
        "argv": list(sys.argv[1:]),
        "workers": getattr(args, "workers", None),
    }
    return _write_text(directory, name, canonical_json(meta))


def _checks_csv(checks):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "kind", "observed", "bound", "passed"])
    for check in checks:
        writer.writerow([check.name, check.kind, repr(check.observed),
                         check.bound, check.passed])
    return buf.getvalue()


def _say(args, text):
    if args.verbose:
        print(text, file=sys.stderr)


# ---------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args):
    raw = load_config(args.config, _COMMON_KEYS + ("excursion_samples",))
    seed = _require_seed(raw, args)
    if "spec" not in raw:
        raise ConfigError("calibrate config needs a 'spec' object")
    spec = parse_spec(raw["spec"])
    samples = int(raw.get("excursion_samples", 1_000_000))
    _say(args, "calibrating constants on %d excursions" % samples)
    t0 = time.perf_counter()
    report = limits.estimate_constants(spec, stream(seed, "calibrate"), samples)
    runtime = time.perf_counter() - t0
    payload = report.to_dict()
    payload["seed"] = seed
    text = canonical_json(payload)
    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["constant", "value"])
        for key in sorted(payload):
            writer.writerow([key, repr(payload[key])])
        text = buf.getvalue()
    sys.stdout.write(text)
    if args.output:
        ext = "csv" if args.format == "csv" else "json"
        _write_text(args.output, "constants.%s" % ext, text)
        _write_meta(args.output, "constants.meta.json", runtime, args)
    return EXIT_PASS


# ---------------------------------------------------------------------------
# validate: quenched formulas against the tridiagonal oracle

def _validate_cases(seed, cases, max_window, fault_scale):
    rng = stream(seed, "validate")
    rows = []
    for index in range(cases):
        n = int(rng.integers(8, max_window + 1))
        omegas = rng.uniform(0.05, 0.95, n)
        offset = -int(rng.integers(0, n - 2))
        environment = env_mod.Environment(offset, omegas, regime="plain")
        right = environment.right_edge
        a = int(rng.integers(offset, right))
        b = int(rng.integers(a + 1, right + 2))
        x = int(rng.integers(a, b + 1))
        oracle = quenched.oracle_solve(environment, x, a, b)
        closed_prob = quenched.exit_prob(environment, x, a, b)
        closed_mean = quenched.expected_hitting(environment, a, b, left_tail="window")
        with quenched.inject_fault(fault_scale):
            closed_var = quenched.variance_hitting(environment, a, b, left_tail="window")
        rows.append({
            "case": index,
            "window": n,
            "offset": offset,
            "a": a,
            "b": b,
            "x": x,
            "err_exit_prob": _rel_err(closed_prob, oracle.exit_prob),
            "err_expected_hitting": _rel_err(closed_mean, oracle.expected),
            "err_variance_hitting": _rel_err(closed_var, oracle.variance),
        })
    return rows


def _rel_err(value, reference):
    scale = max(abs(reference), 1e-300)
    return abs(value - reference) / scale


_VALIDATE_OPS = (
    ("exit_prob", "err_exit_prob", "tolerance_prob", 1e-9),
    ("expected_hitting", "err_expected_hitting", "tolerance_mean", 1e-9),
    ("variance_hitting", "err_variance_hitting", "tolerance_variance", 1e-8),
)


def cmd_validate(args):
    raw = {}
    if args.config:
        raw = load_config(args.config, _VALIDATE_KEYS)
    seed = args.seed if args.seed is not None else int(raw.get("seed", 0))
    cases = args.cases if args.cases is not None else int(raw.get("cases", 200))
    max_window = int(raw.get("max_window", 60))
    if cases < 1 or max_window < 8:
        raise ConfigError("validate needs cases >= 1 and max_window >= 8")
    _say(args, "validating on %d random windows (max %d sites)" % (cases, max_window))
    t0 = time.perf_counter()
    rows = _validate_cases(seed, cases, max_window, args.inject_fault)
    runtime = time.perf_counter() - t0

    failures = []
    summary = {"schema_version": SCHEMA_VERSION, "seed": seed, "cases": cases}
    for op, key, tol_key, default_tol in _VALIDATE_OPS:
        tol = float(raw.get(tol_key, default_tol))
        worst = max(rows, key=lambda row: row[key])
        summary[op] = {
            "max_rel_err": worst[key],
            "tolerance": tol,
            "worst_case": worst["case"],
            "passed": worst[key] <= tol,
        }
        line = "%-18s max rel err %.3g (tol %.1g) at case %d" % (
            op, worst[key], tol, worst["case"])
        print(("PASS " if worst[key] <= tol else "FAIL ") + line)
        if worst[key] > tol:
            failures.append((op, worst))
    summary["passed"] = not failures

    if args.output:
        _write_text(args.output, "validate.json", canonical_json(summary))
        if args.format == "csv":
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\n")
            header = list(rows[0])
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(row[k]) if isinstance(row[k], float) else row[k]
                                 for k in header])
            _write_text(args.output, "validate.csv", buf.getvalue())
        _write_meta(args.output, "validate.meta.json", runtime, args)

    if failures:
        for op, worst in failures:
            print("validation failed for %s: rel err %.3g at case %d "
                  "(window %d sites at offset %d)"
                  % (op, worst[_err_key(op)], worst["case"],
                     worst["window"], worst["offset"]),
                  file=sys.stderr)
        return EXIT_FAIL
    return EXIT_PASS


def _err_key(op):
    return "err_%s" % op


# ---------------------------------------------------------------------------
# experiment dispatch

def cmd_experiment(args):
    if args.name not in EXPERIMENTS:
        print("unknown experiment %r; choose from %s"
              % (args.name, ", ".join(sorted(EXPERIMENTS))), file=sys.stderr)
        return EXIT_USAGE
    raw = load_config(args.config, _COMMON_KEYS + _EXPERIMENT_KEYS)
    seed = _require_seed(raw, args)
    if "spec" not in raw:
        raise ConfigError("experiment config needs a 'spec' object")
    spec = parse_spec(raw["spec"])
    fields = {key: raw[key] for key in _EXPERIMENT_KEYS if key in raw}
    if args.workers is not None:
        fields["workers"] = int(args.workers)
    for key in ("n_ladder", "heights", "fit_window"):
        if key in fields:
            fields[key] = tuple(fields[key])
    try:
        config = ExperimentConfig(spec=spec, seed=seed, **fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError("bad experiment config: %s" % exc)

    if env_mod.is_discrete(spec):
        print("warning: discrete environment law; potentials live on a "
              "lattice and tail fits may show step artifacts", file=sys.stderr)
    _say(args, "running %s (seed %d)" % (args.name, seed))

    result = EXPERIMENTS[args.name](config)

    for check in result.checks:
        print("%s %-28s %s observed %.6g, needs %s"
              % ("PASS" if check.passed else "FAIL",
                 check.name, check.kind, check.observed, check.bound))
    print("%s: %s (%d checks, %d censored of %d walks)"
          % (args.name, result.verdict, len(result.checks),
             result.censored, result.total_walks))

    if args.output:
        _write_text(args.output, "%s.json" % args.name,
                    canonical_json(result.to_dict()))
        _write_text(args.output, "%s.checks.csv" % args.name,
                    _checks_csv(result.checks))
        _write_meta(args.output, "%s.meta.json" % args.name,
                    result.runtime, args)

    return EXIT_PASS if result.hard_pass else EXIT_FAIL


# ---------------------------------------------------------------------------
# entry point

def build_parser():
    parser = argparse.ArgumentParser(
        prog="rwre",
        description="Transient random walks in random environment on Z: "
                    "exact quenched formulas, valley decompositions, and "
                    "heavy-tail limit experiments.",
    )
    sub = parser.add_subparsers(dest="command")

    par_cal = sub.add_parser("calibrate", help="estimate tail constants for a law")
    par_cal.add_argument("--config", required=True, help="JSON config with a spec")
    par_cal.add_argument("--seed", type=int, default=None, help="override config seed")
    par_cal.add_argument("--output", default=None, help="directory for result files")
    par_cal.add_argument("--format", choices=("json", "csv"), default="json")
    par_cal.add_argument("-v", "--verbose", action="store_true")
    par_cal.set_defaults(func=cmd_calibrate)

    par_val = sub.add_parser("validate", help="closed forms against the oracle")
    par_val.add_argument("--config", default=None, help="optional JSON config")
    par_val.add_argument("--seed", type=int, default=None)
    par_val.add_argument("--cases", type=int, default=None)
    par_val.add_argument("--inject-fault", type=float, default=1.0,
                         metavar="SCALE",
                         help="scale variance_hitting by SCALE to prove the "
                              "suite catches a seeded discrepancy")
    par_val.add_argument("--output", default=None)
    par_val.add_argument("--format", choices=("json", "csv"), default="json")
    par_val.add_argument("-v", "--verbose", action="store_true")
    par_val.set_defaults(func=cmd_validate)

    par_exp = sub.add_parser("experiment", help="run a named experiment")
    par_exp.add_argument("name", help="one of: %s" % ", ".join(sorted(EXPERIMENTS)))
    par_exp.add_argument("--config", required=True)
    par_exp.add_argument("--seed", type=int, default=None)
    par_exp.add_argument("--workers", type=int, default=None)
    par_exp.add_argument("--output", default=None)
    par_exp.add_argument("--format", choices=("json", "csv"), default="json")
    par_exp.add_argument("-v", "--verbose", action="store_true")
    par_exp.set_defaults(func=cmd_experiment)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, EnvSpecError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except CensoringError as exc:
        print("censoring breach: %s" % exc, file=sys.stderr)
        return EXIT_CENSORING
    except (EstimationError, BudgetExhaustedError) as exc:
        print("estimation failure: %s" % exc, file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
