"""Competitive-ratio experiments over a capacity sweep."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List, Optional

from .algorithms import parse_algorithm
from .batching import BatchAdversarial, BatchStochastic, build_batched_instance_stochastic
from .benchmarks import ScopeError, enumerate_scenarios, exact_opt, exact_performance
from .engine import expected_performance, run
from .instances import GeneratorParams, generate, with_params
from .io import load_instance
from .lp import build_lp, solve_lp
from .model import Instance

WRAPPERS = ("none", "adversarial", "stochastic")
BENCHMARKS = ("lp", "exact", "both")
COLUMNS = ("c", "alg_mean", "alg_se", "lp_value", "exact_opt", "ratio", "fallback_rate")


class IncompatibleError(ValueError):
    """Wrapper and instance modes admit no lossless batching."""


@dataclass
class ExperimentConfig:
    """One experiment: where the instance comes from, what runs on it, and against which benchmark.

    ``generator`` holds :class:`GeneratorParams` fields; ``sweep`` replaces
    its ``c`` in turn.  An instance file ignores the sweep.
    """

    algorithm: str = "greedy"
    instance_path: Optional[str] = None
    generator: Dict[str, Any] = field(default_factory=dict)
    wrapper: str = "none"
    benchmark: str = "lp"
    trials: int = 100
    seed: int = 0
    sweep: List[float] = field(default_factory=list)
    epsilon: Optional[float] = None
    exact: bool = False
    lp_method: str = "auto"

    def __post_init__(self):
        if self.wrapper not in WRAPPERS:
            raise ValueError(f"wrapper must be one of {WRAPPERS}")
        if self.benchmark not in BENCHMARKS:
            raise ValueError(f"benchmark must be one of {BENCHMARKS}")
        if self.instance_path is None and "family" not in self.generator:
            raise ValueError("need an instance file or a generator family")
        if self.trials < 1 and not self.exact:
            raise ValueError("trials must be >= 1")
        known = {f.name for f in fields(GeneratorParams)}
        extra = set(self.generator) - known
        if extra:
            raise ValueError(f"unknown generator parameter(s) {sorted(extra)}")


def check_compatible(instance: Instance, wrapper: str) -> None:
    """Refuse wrapper/instance combinations without a lossless transformation."""
    if wrapper == "none":
        return
    arr_stoch = instance.arrivals.stochastic
    rep_stoch = instance.replenishment.stochastic
    if arr_stoch and not rep_stoch:
        raise IncompatibleError(
            "no lossless batching exists for stochastic arrivals with adversarial replenishment: "
            "a single replenishment as large as the starting inventory already forces a constant-factor loss")
    if wrapper == "stochastic" and not (arr_stoch and rep_stoch):
        raise IncompatibleError("stochastic batching needs stochastic arrivals and stochastic replenishment")
    if wrapper == "adversarial" and arr_stoch:
        raise IncompatibleError("adversarial batching needs adversarial arrivals; use the stochastic wrapper")


_C_MULT = re.compile(r"^\s*([0-9.eE+-]*)\s*c\s*$")


def resolve_algorithm(spec: str, c: float) -> str:
    """Replace option values written as ``c`` or ``<k>c`` by multiples of the capacity."""
    head, sep, rest = spec.partition(":")
    if not sep:
        return spec
    parts = []
    for part in rest.split(","):
        key, eq, val = part.partition("=")
        hit = _C_MULT.match(val) if eq else None
        if hit:
            k = float(hit.group(1)) if hit.group(1) else 1.0
            val = repr(k * c)
        parts.append(f"{key}{eq}{val}")
    return f"{head}:{','.join(parts)}"


def algorithm_factory(config: ExperimentConfig, instance: Instance, c: float):
    base = parse_algorithm(resolve_algorithm(config.algorithm, c))
    if config.wrapper == "adversarial":
        return lambda: BatchAdversarial(base())
    if config.wrapper == "stochastic":
        batched = build_batched_instance_stochastic(instance, config.epsilon)
        return lambda: BatchStochastic(base(), batched)
    return base


def instances_for(config: ExperimentConfig):
    if config.instance_path is not None:
        with open(config.instance_path, encoding="utf-8") as fh:
            inst = load_instance(fh.read())
        yield inst.c_min, inst
        return
    params = GeneratorParams(**config.generator)
    for c in (config.sweep or [params.c]):
        yield c, generate(with_params(params, c=c))


def run_point(config: ExperimentConfig, c: float, instance: Instance) -> Dict[str, Any]:
    check_compatible(instance, config.wrapper)
    make = algorithm_factory(config, instance, c)
    if config.exact:
        mean, se = exact_performance(instance, make), 0.0
        rate = 0.0
        if config.wrapper == "stochastic":
            rate = exact_fallback_rate(instance, make)
    else:
        perf = expected_performance(instance, make, config.trials, config.seed)
        mean, se, rate = perf.mean, perf.se, perf.fallback_rate
    lp = opt = None
    if config.benchmark in ("lp", "both"):
        lp = solve_lp(build_lp(instance), method=config.lp_method).value
    if config.benchmark in ("exact", "both"):
        try:
            opt = exact_opt(instance)
        except ScopeError:
            opt = None
    bench = opt if opt is not None else lp
    ratio = mean / bench if bench else None
    return {"c": c, "alg_mean": mean, "alg_se": se, "lp_value": lp, "exact_opt": opt,
            "ratio": ratio, "fallback_rate": rate}


def exact_fallback_rate(instance: Instance, make) -> float:
    total = 0.0
    for scen in enumerate_scenarios(instance):
        res = run(instance, make(), scenario=scen)
        total += scen.weight * res.fallback_count / instance.horizon
    return total


def cmd_run(config: ExperimentConfig) -> List[Dict[str, Any]]:
    """One row per capacity in the sweep; deterministic given the seed."""
    return [run_point(config, c, inst) for c, inst in instances_for(config)]


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isfinite(v) and v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return str(v)


def rows_to_csv(rows: List[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_cell(row[col]) for col in COLUMNS])
    return buf.getvalue()
