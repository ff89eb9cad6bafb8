"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 verification failure,
3 infeasibility or wrapper/instance incompatibility.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import fields
from typing import List, Optional

from .algorithms import parse_algorithm
from .batching import adversarial_batches, build_batched_instance, build_batched_instance_stochastic, preview_rows
from .benchmarks import ScopeError
from .engine import InfeasibleActionError, run
from .experiments import (
    ExperimentConfig,
    IncompatibleError,
    algorithm_factory,
    check_compatible,
    cmd_run,
    instances_for,
    resolve_algorithm,
    rows_to_csv,
)
from .instances import FAMILIES, GeneratorParams, generate
from .io import load_instance, serialize
from .lp import LpError, build_lp, solve_lp
from .model import InstanceError
from .verify import SUITES

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_INCOMPATIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write(text: str, path: Optional[str]):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _read_instance(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return load_instance(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _add_generator_flags(p: argparse.ArgumentParser, family_positional: bool):
    if family_positional:
        p.add_argument("family", choices=FAMILIES)
    else:
        p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--c", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--arrivals", choices=("adversarial", "onehot", "stochastic"))
    p.add_argument("--replenishment", choices=("adversarial", "regular", "stochastic", "none"))
    p.add_argument("--repl-ratio", dest="repl_ratio", type=float)
    p.add_argument("--M", dest="M", type=float)
    p.add_argument("--types", type=int)


def _generator_params(ns) -> dict:
    names = [f.name for f in fields(GeneratorParams)]
    return {k: getattr(ns, k) for k in names if getattr(ns, k, None) is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="replenish", description="Online allocation with exogenous replenishment.")
    parser.add_argument("--config", help="JSON file whose keys override command-line flags")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate an instance")
    _add_generator_flags(g, family_positional=True)
    g.add_argument("-o", "--output")

    r = sub.add_parser("run", help="simulate an algorithm or run a capacity sweep")
    r.add_argument("--instance", dest="instance_path")
    _add_generator_flags(r, family_positional=False)
    r.add_argument("--alg", dest="algorithm", default="greedy")
    r.add_argument("--wrapper", choices=("none", "adversarial", "stochastic"), default="none")
    r.add_argument("--benchmark", choices=("lp", "exact", "both"), default="lp")
    r.add_argument("--trials", type=int, default=100)
    r.add_argument("--sweep", help="comma-separated capacities")
    r.add_argument("--epsilon", type=float)
    r.add_argument("--exact", action="store_true", help="evaluate the algorithm by exact enumeration")
    r.add_argument("--lp-method", dest="lp_method", choices=("auto", "simplex", "highs"), default="auto")
    r.add_argument("--trace", help="write the RunResult JSON of trial 0 (no sweep) to this path")
    r.add_argument("-o", "--output")

    lp = sub.add_parser("lp", help="expected LP")
    lp_sub = lp.add_subparsers(dest="lp_command", parser_class=_Parser)
    solve = lp_sub.add_parser("solve")
    solve.add_argument("instance")
    solve.add_argument("--dump", help="write x* as CSV (j,k,z,x)")
    solve.add_argument("--method", choices=("auto", "simplex", "highs"), default="auto")

    b = sub.add_parser("batch", help="batched replenishment schedule")
    b_sub = b.add_subparsers(dest="batch_command", parser_class=_Parser)
    prev = b_sub.add_parser("preview")
    prev.add_argument("instance")
    prev.add_argument("--epsilon", type=float)
    prev.add_argument("-o", "--output")
    build = b_sub.add_parser("build", help="write the batched instance as JSON")
    build.add_argument("instance")
    build.add_argument("--epsilon", type=float)
    build.add_argument("-o", "--output")

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=sorted(SUITES) + ["all"])
    return parser


def _apply_config(ns, parser):
    if not ns.config:
        return ns
    try:
        with open(ns.config, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {ns.config}: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("config must be a JSON object")
    for key, value in data.items():
        attr = key.replace("-", "_")
        if attr in ("alg",):
            attr = "algorithm"
        if attr == "instance" and hasattr(ns, "instance_path"):
            attr = "instance_path"
        if not hasattr(ns, attr):
            raise UsageError(f"unknown config key {key!r} for command {ns.command!r}")
        setattr(ns, attr, value)
    return ns


def _cmd_gen(ns) -> int:
    params = GeneratorParams(**_generator_params(ns))
    _write(serialize(generate(params), indent=2) + "\n", ns.output)
    return EXIT_OK


def _sweep(value) -> List[float]:
    if value in (None, ""):
        return []
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad sweep {value!r}") from exc


def _cmd_run(ns) -> int:
    gen = _generator_params(ns)
    if ns.instance_path and gen.get("family"):
        raise UsageError("give either --instance or --family, not both")
    try:
        parse_algorithm(resolve_algorithm(ns.algorithm, 1.0))
        config = ExperimentConfig(
            algorithm=ns.algorithm, instance_path=ns.instance_path, generator=gen, wrapper=ns.wrapper,
            benchmark=ns.benchmark, trials=ns.trials, seed=ns.seed if ns.seed is not None else 0,
            sweep=_sweep(ns.sweep), epsilon=ns.epsilon, exact=ns.exact, lp_method=ns.lp_method,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if ns.trace:
        _write_trace(config, ns.trace)
    _write(rows_to_csv(cmd_run(config)), ns.output)
    return EXIT_OK


def _write_trace(config: ExperimentConfig, path: str):
    c, inst = next(iter(instances_for(config)))
    check_compatible(inst, config.wrapper)
    res = run(inst, algorithm_factory(config, inst, c)(), seed=config.seed)
    _write(res.to_json() + "\n", path)


def _cmd_lp(ns) -> int:
    if ns.lp_command != "solve":
        raise UsageError("usage: replenish lp solve <instance.json> [--dump x.csv]")
    inst = _read_instance(ns.instance)
    sol = solve_lp(build_lp(inst), method=ns.method)
    print(repr(sol.value))
    if ns.dump:
        _write(sol.to_csv(), ns.dump)
    return EXIT_OK


def _batched(ns):
    inst = _read_instance(ns.instance)
    if inst.replenishment.stochastic and not inst.arrivals.stochastic and ns.epsilon is None:
        raise IncompatibleError("stochastic replenishment with adversarial arrivals is batched online; "
                                "there is no precomputed schedule")
    return inst


def _cmd_batch(ns) -> int:
    if ns.batch_command == "preview":
        inst = _batched(ns)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "j", "zeta_B", "new_resource_id"])
        for i, j, amount, rid in preview_rows(inst, ns.epsilon):
            w.writerow([i, j, repr(amount), rid])
        _write(buf.getvalue(), ns.output)
        return EXIT_OK
    if ns.batch_command == "build":
        inst = _batched(ns)
        if inst.replenishment.stochastic:
            hb = build_batched_instance_stochastic(inst, ns.epsilon).instance
        else:
            hb = build_batched_instance(inst, adversarial_batches(inst))
        _write(serialize(hb, indent=2) + "\n", ns.output)
        return EXIT_OK
    raise UsageError("usage: replenish batch {preview,build} <instance.json>")


def _cmd_verify(ns) -> int:
    names = sorted(SUITES) if ns.suite == "all" else [ns.suite]
    ok = True
    for name in names:
        report = SUITES[name]()
        for line in report.lines():
            print(line)
        ok = ok and report.passed
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"gen": _cmd_gen, "run": _cmd_run, "lp": _cmd_lp, "batch": _cmd_batch, "verify": _cmd_verify}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if ns.command is None:
            raise UsageError(parser.format_usage().strip())
        ns = _apply_config(ns, parser)
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (IncompatibleError, InfeasibleActionError, ScopeError, LpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except (InstanceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
