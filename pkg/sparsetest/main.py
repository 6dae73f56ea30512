"""
Property testers for sparse real functions under approximate queries.

Commands:
  test        run one tester on one instance (exit 0 on accept, 1 on reject)
  experiment  run a seeded Monte Carlo experiment from a config file
  generate    write YES/NO instance fixtures
  reference   brute-force and closed-form reference oracles
"""
import argparse
import importlib.metadata
import json
import logging
import os.path
import pathlib
import sys

import numpy as np

from . import SparseTestException
from . import config
from . import harness
from . import hankel
from . import reference
from .oracle import (
    NoiseModel,
    OracleHandle,
    dump_instance,
    load_instance,
    to_polynomial,
)


def _index_list(value: str):
    """Comma-separated 0-based coordinates, e.g. '0,3,7'."""
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers")


def _add_test_parser(subparsers):
    p = subparsers.add_parser("test", help="Run one tester on one instance.")
    p.add_argument("tester", choices=config.TESTERS)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument(
        "--noise",
        default="exact",
        help="exact, uniform:ETA, offset:ETA or round:BITS (default: %(default)s).",
    )
    p.add_argument(
        "--eta", type=float, help="Assumed noise level (default: from --noise)."
    )
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--instance", help="Instance JSON file.")
    source.add_argument("--generate", choices=("yes", "no"))
    p.add_argument(
        "--n", type=int, default=16, help="Dimension for --generate (default: 16)."
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--json", action="store_true", help="Print the verdict as JSON.")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", default=[])


def _add_experiment_parser(subparsers):
    p = subparsers.add_parser("experiment", help="Run an experiment config.")
    p.add_argument(
        "-c", "--config", required=True, help="YAML, JSON or TOML experiment config."
    )
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument(
        "--out",
        help="Output directory (default: config 'out', ${} or '{}').".format(
            config.OUTPUT_DIR_ENV, config.DEFAULT_OUTPUT_DIR
        ),
    )
    p.add_argument("--json", action="store_true", help="Print the run record.")
    p.add_argument("--set", action="append", metavar="NAME=VALUE", default=[])


def _add_generate_parser(subparsers):
    p = subparsers.add_parser("generate", help="Write YES/NO instance fixtures.")
    p.add_argument("tester", choices=config.TESTERS)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")


def _add_reference_parser(subparsers):
    p = subparsers.add_parser("reference", help="Reference oracles.")
    oracles = p.add_subparsers(dest="oracle", required=True)

    r = oracles.add_parser("l1", help="Monte Carlo l1 distance of two instances.")
    r.add_argument("--f", required=True)
    r.add_argument("--g", required=True)
    r.add_argument("--samples", type=int)

    r = oracles.add_parser("l0", help="Exact l0 distance of two parities over F_2^n.")
    r.add_argument("--f-support", type=_index_list, required=True)
    r.add_argument("--g-support", type=_index_list, required=True)
    r.add_argument("--n", type=int, required=True)

    r = oracles.add_parser("influential", help="Coordinates an instance depends on.")
    r.add_argument("--f", required=True)

    r = oracles.add_parser("vandermonde", help="Vandermonde determinant of nodes.")
    r.add_argument("nodes", type=float, nargs="+")

    r = oracles.add_parser("hard", help="sum_A x_i - sum_B x_i as an instance.")
    r.add_argument("--a", type=_index_list, required=True)
    r.add_argument("--b", type=_index_list, required=True)
    r.add_argument("--n", type=int, required=True)
    r.add_argument("--out", help="Write the instance JSON here instead of stdout.")

    r = oracles.add_parser("anticoncentration", help="Pr[|f(x) - t| <= eps].")
    r.add_argument("--f", required=True)
    r.add_argument("--t", type=float, default=0.0)
    r.add_argument("--eps", type=float, required=True)
    r.add_argument("--samples", type=int)

    r = oracles.add_parser("sigma-bound", help="sigma_max bound violation trials.")
    r.add_argument("--f", required=True)
    r.add_argument("--t", type=int, required=True)
    r.add_argument("--gamma", type=float, required=True)
    r.add_argument("--trials", type=int, default=1000)

    r = oracles.add_parser("fmoment", help="E|u|^s for a standard normal u.")
    r.add_argument("s", type=int)

    for parser in oracles.choices.values():
        parser.add_argument("--seed", type=int, default=0)


def _parser():
    parser = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument(
        "--debug", action="store_const", dest="log_level", const="DEBUG"
    )
    parser.add_argument(
        "-v", "--verbose", action="store_const", dest="log_level", const="INFO"
    )
    parser.add_argument(
        "--log-file",
        help="Log to file (append) instead of stderr.",
    )
    parser.add_argument(
        "--no-log-timestamp",
        action="store_false",
        dest="log_timestamp",
        help="Don't include timestamp in log format.",
    )
    parser.add_argument(
        "-V",
        "--version",
        action="version",
        version="%(prog)s {}".format(importlib.metadata.version(__package__)),
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    _add_test_parser(subparsers)
    _add_experiment_parser(subparsers)
    _add_generate_parser(subparsers)
    _add_reference_parser(subparsers)
    return parser


def _setup_logging(args, conf_level=None):
    log_level = args.log_level or (conf_level or "warning").upper()
    fmt_timestamp = "%(asctime)s " if args.log_timestamp else ""
    if log_level == "DEBUG":
        log_format = (
            f"{fmt_timestamp}%(levelname)-8s %(pathname)s:%(lineno)s "
            "[%(funcName)s]: %(message)s"
        )
    else:
        log_format = f"{fmt_timestamp}%(levelname)-8s %(message)s"

    logging_kwargs = {}
    if args.log_file:
        logging_kwargs["filename"] = os.path.expanduser(args.log_file)
    else:
        logging_kwargs["stream"] = sys.stderr
    logging.basicConfig(level=log_level, format=log_format, **logging_kwargs)


def _print(data, as_json: bool):
    if as_json:
        print(json.dumps(data, indent=4, default=str))
    else:
        for key, value in data.items():
            print("{}: {}".format(key, value))


def _cmd_test(args) -> bool:
    constants = config.resolve_constants(config.parse_assignments(args.set))
    noise = NoiseModel.parse(args.noise)
    eta = args.eta if args.eta is not None else config.default_eta(noise)
    stream = np.random.default_rng(args.seed)
    if args.instance:
        instance = load_instance(args.instance)
    else:
        instance = harness.generate(
            args.generate, args.tester, args.k, args.d, args.n, stream
        )
    oracle = OracleHandle(instance, noise, seed=args.seed)
    verdict = harness.run_tester(
        args.tester, oracle, args.k, args.d, args.epsilon, eta, stream, constants
    )
    logging.info(
        "%s: %s after %d queries", args.tester, verdict.decision, verdict.queries_used
    )
    result = {"tester": args.tester, "seed": args.seed, **verdict.to_dict()}
    _print(result, args.json)
    return bool(verdict.accept)


def _experiment_config(args) -> dict:
    conf = config.get_config(pathlib.Path(args.config).expanduser().resolve())
    if args.trials is not None:
        if args.trials < 1:
            raise SparseTestException("--trials must be >= 1", retcode=2)
        conf["trials"] = args.trials
    if args.seed is not None:
        conf["seed"] = args.seed
    if args.out:
        conf["out"] = os.path.abspath(os.path.expanduser(args.out))
    if args.set:
        conf["constants"] = config.resolve_constants(
            {**conf["constants"], **config.parse_assignments(args.set)}
        )
    return conf


def _cmd_experiment(args, conf) -> bool:
    record = harness.run_experiment(conf)
    if args.json:
        _print(record.to_dict(), True)
    else:
        _print(
            {
                "name": conf["name"],
                "accept_rate": record.accept_rate,
                "ci": "{:.3f}-{:.3f}".format(*record.ci),
                "queries": "{}/{}/{}".format(*record.queries),
                "budget": record.budget,
                "csv": os.path.join(conf["out"], conf["name"] + ".csv"),
            },
            False,
        )
    return True


def _cmd_generate(args) -> bool:
    out = config.output_dir(args.out)
    manifest = harness.generate_fixtures(
        args.tester, args.k, args.d, args.n, args.count, args.seed, out
    )
    print(manifest)
    return True


def _cmd_reference(args) -> bool:
    constants = config.DEFAULT_CONSTANTS
    stream = np.random.default_rng(args.seed)
    if args.oracle == "l1":
        est = reference.mc_l1_distance(
            load_instance(args.f),
            load_instance(args.g),
            args.samples or constants["distance_samples"],
            stream,
        )
        _print(est._asdict(), True)
    elif args.oracle == "l0":
        dist = reference.l0_distance_f2(args.f_support, args.g_support, args.n)
        _print({"distance": str(dist), "value": float(dist)}, True)
    elif args.oracle == "influential":
        coords = reference.brute_force_influential_coords(load_instance(args.f))
        _print({"influential": sorted(coords)}, True)
    elif args.oracle == "vandermonde":
        _print({"det": reference.vandermonde_det(args.nodes)}, True)
    elif args.oracle == "hard":
        instance = reference.hard_instance_disjointness(args.a, args.b, args.n)
        if args.out:
            dump_instance(instance, args.out)
        else:
            _print(instance.to_dict(), True)
    elif args.oracle == "anticoncentration":
        prob = reference.anti_concentration_probe(
            load_instance(args.f),
            args.t,
            args.eps,
            args.samples or constants["probe_samples"],
            stream,
        )
        _print({"probability": prob}, True)
    elif args.oracle == "sigma-bound":
        poly = to_polynomial(load_instance(args.f))
        rows = list(
            hankel.sigma_bound_trials(poly, args.t, args.gamma, args.trials, stream)
        )
        violations = sum(row.violated for row in rows)
        _print(
            {
                "bound": rows[0].bound if rows else None,
                "trials": len(rows),
                "violations": violations,
                "violation_rate": violations / len(rows) if rows else 0.0,
                "max_sigma": max((row.sigma_max for row in rows), default=None),
            },
            True,
        )
    elif args.oracle == "fmoment":
        _print({"s": args.s, "moment": hankel.folded_normal_abs_moment(args.s)}, True)
    return True


def _main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "experiment":
        conf = _experiment_config(args)
        _setup_logging(args, conf.get("log_level"))
        return _cmd_experiment(args, conf)
    _setup_logging(args)
    if args.command == "test":
        return _cmd_test(args)
    if args.command == "generate":
        return _cmd_generate(args)
    return _cmd_reference(args)


def main(argv=None):
    try:
        if _main(argv) is True:
            sys.exit(0)
        sys.exit(1)
    except SparseTestException as exc:
        logging.error(exc._message, *exc._args)
        sys.exit(exc.retcode)
    except Exception:
        logging.debug("", exc_info=True)
        raise
