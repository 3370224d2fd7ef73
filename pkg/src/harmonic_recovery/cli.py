"""Command line entry point: ``harmonic-recovery {table,conv,recover,bundle}``.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures in ``recover`` and ``bundle``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings

from .errors import ConfigurationError, IllConditionedGramianWarning, RecoveryError, SolverError
from .lab import ExperimentConfig, run_representer_convergence, run_single_recovery, run_table

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _float_list(text):
    if text.startswith("@"):
        with open(text[1:]) as fh:
            return [float(v) for v in json.load(fh)]
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from exc


def _common(p):
    p.add_argument("--config", help="JSON config file; CLI flags override it")
    p.add_argument("--out", help="output path")
    p.add_argument("--functional", choices=("gaussian", "point"))
    p.add_argument("--radius", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="harmonic-recovery",
                                     description="Recover harmonic-type fields from linear measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table", help="recovery error table over mesh levels and sensor counts")
    _common(p)
    p.add_argument("--m", dest="m_list", type=_int_list, help="sensor counts, e.g. 4,9,16")
    p.add_argument("--n", dest="n_list", type=_int_list, help="mesh levels, e.g. 4,5,6")
    p.add_argument("--long-run", action="store_true", default=None, help="allow levels above 7")
    p.add_argument("--data-source", choices=("exact", "fine_mesh"))
    p.add_argument("--no-timing", dest="timing", action="store_false", default=None,
                   help="write wall_ms as 0 so output is byte-reproducible")

    p = sub.add_parser("conv", help="representer convergence against a fine reference")
    _common(p)
    p.add_argument("--n", dest="n_list", type=_int_list)
    p.add_argument("--reference-n", type=int)
    p.add_argument("--center", type=lambda s: [float(v) for v in s.split(",")])

    p = sub.add_parser("recover", help="single recovery with a JSON report")
    _common(p)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--data", type=_float_list, help="comma-separated data or @file.json")
    p.add_argument("--noise", dest="noise_linf", type=float, help="sup norm of added uniform noise")
    p.add_argument("--bundle", help="use a stored offline bundle instead of recomputing")
    p.add_argument("--data-source", choices=("exact", "fine_mesh"))

    p = sub.add_parser("bundle", help="write or inspect offline bundles")
    bsub = p.add_subparsers(dest="action", required=True)
    w = bsub.add_parser("write", help="run the offline phase and store it")
    _common(w)
    w.add_argument("--m", type=int)
    w.add_argument("--n", type=int)
    w.add_argument("--no-multipliers", action="store_true")
    r = bsub.add_parser("read", help="print a bundle summary as JSON")
    r.add_argument("path")
    r.add_argument("-v", "--verbose", action="store_true")
    return parser


_NON_CONFIG = {"command", "action", "config", "verbose", "no_multipliers", "path"}


def _config(args, experiment) -> ExperimentConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    overrides["experiment"] = experiment
    return ExperimentConfig.load(getattr(args, "config", None), overrides)


def _bundle(args) -> int:
    from .bundle_io import read_bundle, write_bundle
    from .mesh import build_mesh
    from .recovery import offline

    if args.action == "read":
        b = read_bundle(args.path)
        print(json.dumps({"n": b.mesh.n, "m": b.m, "functionals": b.sensors.to_list(),
                          "diagnostics": b.diagnostics.to_dict()}, indent=2, sort_keys=True))
        return 0
    cfg = _config(args, "single_recovery")
    if not cfg.out:
        raise ConfigurationError("bundle write needs --out")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedGramianWarning)
        b = offline(build_mesh(cfg.n), None, cfg.sensors(cfg.m), cfg.tol, cfg.threads, cfg.load_order)
    write_bundle(b, cfg.out, include_multipliers=not args.no_multipliers)
    print(cfg.out)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "table":
            table = run_table(_config(args, "table"))
            sys.stdout.write(table.to_csv() if not table.config.out else table.pretty() + "\n")
        elif args.command == "conv":
            res = run_representer_convergence(_config(args, "representer_convergence"))
            sys.stdout.write(res.to_csv())
        elif args.command == "recover":
            report = run_single_recovery(_config(args, "single_recovery"))
            print(json.dumps(report, indent=2, sort_keys=True))
        else:
            return _bundle(args)
    except (ConfigurationError, OSError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RecoveryError, SolverError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
