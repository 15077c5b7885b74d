"""Command-line front end: ``dipoleid <subcommand> ...``.

Exit codes: 0 on success, 1 for usage errors (bad flags, unreadable or
inconsistent files), 2 when a numerical routine fails.
"""
import argparse
import dataclasses
import json
import logging
import sys
import time

import numpy as np

from . import harness
from .optimizers import MonotonicityError

log = logging.getLogger("dipoleid")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, *names):
    opts = {
        "seed": dict(type=int, help="random seed"),
        "beta": dict(type=float, help="field-energy penalty weight"),
        "theta": dict(type=float, help="relaxation of the monotonic update"),
        "steps": dict(type=int, help="number of time steps M"),
        "noise_sigma": dict(type=float, help="measurement noise per real component"),
        "restarts": dict(type=int, help="restarts of the least-squares solver"),
    }
    p.add_argument("--config", help="JSON file with default values for the flags")
    for name in names:
        p.add_argument("--" + name.replace("_", "-"), dest=name, **opts[name])


def build_parser():
    parser = _Parser(prog="dipoleid", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate-problem", help="write a problem file and its oracle file")
    p.add_argument("--out", required=True, help="problem file (public)")
    p.add_argument("--oracle", help="oracle file holding mu_star (default: <out>.oracle.json)")
    p.add_argument("--paper", action="store_true", help="the three-level test case")
    p.add_argument("--dim", type=int, help="number of levels (random problems)")
    p.add_argument("--L", type=int, dest="L", help="basis size (default dim**2)")
    p.add_argument("--final-time", type=float, dest="final_time", help="horizon T")
    _common(p, "seed", "beta", "theta", "steps", "noise_sigma", "restarts")

    p = sub.add_parser("precompute", help="compute the selective fields")
    p.add_argument("problem")
    p.add_argument("--out", required=True, help="field archive")
    _common(p, "seed", "beta", "theta", "restarts")

    p = sub.add_parser("measure", help="simulate the laboratory measurements")
    p.add_argument("problem")
    p.add_argument("archive")
    p.add_argument("--oracle", required=True)
    p.add_argument("--out", required=True)
    _common(p, "seed", "noise_sigma")

    p = sub.add_parser("identify", help="recover the dipole operator from measurements")
    p.add_argument("problem")
    p.add_argument("archive")
    p.add_argument("measurements")
    p.add_argument("--truth", help="oracle file; adds the relative error to the report")
    p.add_argument("--out", required=True)
    _common(p, "seed", "restarts")

    p = sub.add_parser("export-fields", help="write the fields as CSV tables")
    p.add_argument("archive")
    p.add_argument("--out", required=True, help="output directory")
    _common(p)
    return parser


def _apply_config(args):
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {args.config} must hold a JSON object")
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if not hasattr(args, key) or key in ("command", "config"):
            raise UsageError(f"config key {key!r} is not a flag of {args.command}")
        if getattr(args, key) in (None, False):
            setattr(args, key, value)
    return args


def _with_overrides(spec, args):
    """Copy of ``spec`` with the optimizer flags of ``args`` applied."""
    mono, ms = spec.monotonic, spec.multistart
    changes = {}
    if getattr(args, "theta", None) is not None:
        mono = dataclasses.replace(mono, theta=args.theta)
    if getattr(args, "restarts", None) is not None:
        ms = dataclasses.replace(ms, restarts=args.restarts)
    if getattr(args, "beta", None) is not None:
        changes["beta"] = args.beta
    if getattr(args, "noise_sigma", None) is not None:
        changes["noise_sigma"] = args.noise_sigma
    return dataclasses.replace(spec, monotonic=mono, multistart=ms, **changes)


def cmd_generate_problem(args):
    seed = args.seed if args.seed is not None else 0
    overrides = {}
    if args.steps is not None:
        overrides["M"] = args.steps
    if args.final_time is not None:
        overrides["T"] = args.final_time
    if args.paper:
        if args.dim not in (None, 3) or args.L not in (None, 9):
            raise UsageError("--paper fixes --dim 3 and --L 9")
        spec = harness.paper_problem(basis_seed=seed, field_seed=seed, **overrides)
    else:
        spec = harness.random_problem(args.dim or 3, args.L, seed, **overrides)
    spec = _with_overrides(spec, args)
    oracle = args.oracle or f"{args.out}.oracle.json"
    harness.write_problem(spec, args.out)
    harness.write_oracle(spec.mu_star, oracle)
    log.info("wrote %s and %s", args.out, oracle)


def cmd_precompute(args):
    spec = _with_overrides(harness.read_problem(args.problem), args)
    if args.seed is not None:
        spec = dataclasses.replace(spec, field_seed=args.seed)
    fs = harness.precompute(spec)
    harness.write_archive(fs, args.out)
    log.info("wrote %d fields to %s", len(fs.fields), args.out)


def cmd_measure(args):
    spec = _with_overrides(harness.read_problem(args.problem), args)
    fs = harness.read_archive(args.archive)
    mu_star = harness.read_oracle(args.oracle)
    if mu_star.shape != (spec.dim, spec.dim):
        raise UsageError(f"oracle operator has shape {mu_star.shape}, problem has dimension {spec.dim}")
    seed = args.seed if args.seed is not None else 0
    records = harness.simulate_measurements(spec, fs, mu_star, seed=seed)
    harness.write_measurements(records, args.out, spec.noise_sigma, seed)


def cmd_identify(args):
    spec = _with_overrides(harness.read_problem(args.problem), args)
    if args.seed is not None:
        spec = dataclasses.replace(spec, multistart=dataclasses.replace(spec.multistart, seed=args.seed))
    fs = harness.read_archive(args.archive)
    records = harness.read_measurements(args.measurements)
    truth = harness.read_oracle(args.truth) if args.truth else None
    start = time.perf_counter()
    result = harness.run_identification(spec, fs, records, truth)
    harness.write_report(result, args.out, wall_time=time.perf_counter() - start)
    msg = f"residual {result.residual:.3e}"
    if result.relative_error is not None:
        msg += f", relative error {result.relative_error:.3e}"
    print(msg)


def cmd_export_fields(args):
    fs = harness.read_archive(args.archive)
    for path in harness.export_fields(fs, args.out):
        log.info("wrote %s", path)


COMMANDS = {
    "generate-problem": cmd_generate_problem,
    "precompute": cmd_precompute,
    "measure": cmd_measure,
    "identify": cmd_identify,
    "export-fields": cmd_export_fields,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _apply_config(args)
        COMMANDS[args.command](args)
    except (UsageError, harness.InputError) as exc:
        print(f"dipoleid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"dipoleid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MonotonicityError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"dipoleid: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining ValueErrors come from validating user-supplied values
        print(f"dipoleid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
