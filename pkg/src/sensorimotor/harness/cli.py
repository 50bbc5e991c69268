"""Command-line entry point: ``sensorimotor {collect,train,servo,compare}``."""

import argparse
import sys

import numpy as np

from ..distributed import DistributedJacobianEstimator, save_network
from ..exceptions import SensorimotorError
from .config import ESTIMATORS, config_from_dict, load_config
from .data import collect_dataset, load_dataset, save_dataset
from .episode import build_estimator, build_plant, compare, export_csv, format_table, run_servo_episode
from .scenarios import scenario_defaults, scenario_ids

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(sub):
    sub.add_argument("--config", help="JSON experiment config")
    sub.add_argument("--plant", choices=scenario_ids(), help="use the built-in scenario for this plant")
    sub.add_argument("--estimator", choices=ESTIMATORS, help="override the configured estimator")
    sub.add_argument("--seed", type=int, help="override the configured seed")
    sub.add_argument("--out", help="output path")


def build_parser():
    parser = _Parser(
        prog="sensorimotor",
        description="Collect data, train Jacobian estimators and run closed-loop servo episodes.",
    )
    subs = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = subs.add_parser("collect", help="collect an excitation dataset to CSV")
    _common(p)
    p = subs.add_parser("train", help="train an estimator and write a snapshot")
    _common(p)
    p.add_argument("--data", help="dataset CSV from `collect` (collected on the fly if omitted)")
    p = subs.add_parser("servo", help="run one closed-loop episode and write its CSV log")
    _common(p)
    p = subs.add_parser("compare", help="run every estimator on one scenario")
    _common(p)
    return parser


def _config(args):
    if args.config:
        config = load_config(args.config)
    elif args.plant:
        config = config_from_dict({"plant": {"id": args.plant}})
    else:
        raise UsageError("either --config or --plant is required")
    if args.plant and args.config and args.plant != config.plant_id:
        raise UsageError("--plant conflicts with the plant in --config")
    if args.estimator and args.estimator != config.estimator_id:
        config = config.with_estimator(args.estimator)
    if args.seed is not None:
        config.seed = args.seed
    return config


def _write_matrix(path, A):
    A = np.atleast_2d(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        fh.write(" ".join(repr(float(v)) for v in A.ravel()) + "\n")


def cmd_collect(args):
    config = _config(args)
    plant = build_plant(config)
    T = config.T or 100
    data = collect_dataset(plant, config.policy, T, config.amplitude, config.seed)
    out = args.out or "dataset.csv"
    save_dataset(data, out)
    print(f"collected {len(data)} transitions -> {out}")


def cmd_train(args):
    config = _config(args)
    plant = build_plant(config)
    kind = config.estimator_id
    out = args.out or f"{kind}.snapshot"
    if kind == "oracle":
        raise SensorimotorError("the oracle estimator has nothing to train")
    if args.data:
        data = load_dataset(args.data)
        if kind == "distributed":
            defaults = scenario_defaults(config.plant_id).get("distributed", {})
            params = dict(config.estimator_params)
            params.setdefault("domain", defaults.get("domain"))
            params.setdefault("count", defaults.get("count", 3))
            est = DistributedJacobianEstimator(seed=config.seed, **params).fit(data.x, data.u, data.delta)
        else:
            est = build_estimator(config, plant)
            if kind == "structured":
                est.fit(data.x, data.y)
            else:
                for x, u, d in zip(data.x, data.u, data.delta):
                    est.partial_fit(x, u, d)
    else:
        est = build_estimator(config, plant)

    if kind == "distributed":
        save_network(est.network_, out)
        print(f"trained {len(est.network_)} units ({len(est.untrained_)} untrained) -> {out}")
    elif kind == "structured":
        with open(out, "w") as fh:
            fh.write("\n".join(repr(float(v)) for v in est.pi_) + "\n")
        print(f"fitted {est.pi_.shape[0]} parameters (cost_U={est.cost_:.6g}) -> {out}")
    else:
        _write_matrix(out, est.jacobian(plant.x0))
        print(f"estimated {plant.m}x{plant.n} Jacobian -> {out}")


def cmd_servo(args):
    config = _config(args)
    log = run_servo_episode(config)
    out = args.out or config.output or "trajectory.csv"
    export_csv(log, out)
    print(f"{log.status} steps={log.steps} err={log.final_error:.6g}")


def cmd_compare(args):
    config = _config(args)
    table = format_table(compare(config))
    print(table)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table + "\n")


COMMANDS = {"collect": cmd_collect, "train": cmd_train, "servo": cmd_servo, "compare": cmd_compare}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SensorimotorError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
