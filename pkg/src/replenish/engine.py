"""Simulation engine: runs an online algorithm against an instance.

Each request is processed in a fixed order: replenish, release expired holds,
reveal the type, ask the algorithm, commit.  All randomness for one trial is
collected in a :class:`Scenario` drawn up front from independent labelled
streams, so two instances with the same horizon (for example an instance and
its batched transform) see identical consumption coins under the same seed.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import WILDCARD, Action, Instance, InstanceError

FEAS_TOL = 1e-9
STREAMS = ("types", "consumption", "reward", "replenishment", "algorithm")


class InfeasibleActionError(RuntimeError):
    """The algorithm asked for an action that cannot be implemented."""


def stream(seed: int, trial: int, label: str) -> np.random.Generator:
    """Generator for one (trial, label) pair; independent of every other pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), STREAMS.index(label)))
    return np.random.Generator(np.random.PCG64(ss))


# ----------------------------------------------------------------------------
# Scenarios
# ----------------------------------------------------------------------------


@dataclass
class Scenario:
    """Everything random about one trial.

    ``coin[j-1]`` and ``release_draw[j-1]`` are the uniforms that drive the
    Bernoulli outcomes and release delays of the decision at request ``j``;
    ``replenishment`` holds realized amounts keyed by (resource, request).
    """

    types: List[str]
    replenishment: Dict[Tuple[str, int], float]
    coin: np.ndarray
    release_draw: np.ndarray
    alg_rng: Optional[np.random.Generator] = None
    weight: float = 1.0

    def replenished_at(self, j: int, resources: Sequence[str]) -> Dict[str, float]:
        return {i: self.replenishment.get((i, j), 0.0) for i in resources}


def sample_types(instance: Instance, u: np.ndarray) -> List[str]:
    arr = instance.arrivals
    if not arr.stochastic:
        return list(arr.types)
    cum = np.cumsum(np.asarray(arr.type_probs, dtype=float), axis=1)
    idx = (u[:, None] >= cum).sum(axis=1)
    # guard against cumulative sums that end slightly below 1
    out = []
    for j, k in enumerate(idx):
        k = min(int(k), len(arr.types) - 1)
        while arr.type_probs[j][k] == 0:
            k -= 1
        out.append(arr.types[k])
    return out


def sample_replenishment(instance: Instance, u: np.ndarray) -> Dict[Tuple[str, int], float]:
    """Realized amounts; stochastic entries use ``u`` in sorted (j, i) order."""
    rep = instance.replenishment
    if not rep.stochastic:
        return {key: v for key, v in rep.fixed.items() if v != 0}
    out = {}
    keys = sorted(rep.entries, key=lambda ij: (ij[1], ij[0]))
    for n, key in enumerate(keys):
        w, q = rep.entries[key]
        if w > 0 and u[n] * w < q:
            out[key] = w
    return out


def sample_scenario(instance: Instance, seed: int, trial: int = 0) -> Scenario:
    m = instance.horizon
    arr = instance.arrivals
    if arr.stochastic:
        types = sample_types(instance, stream(seed, trial, "types").random(m))
    else:
        types = list(arr.types)
    rep = instance.replenishment
    if rep.stochastic:
        u = stream(seed, trial, "replenishment").random(len(rep.entries))
    else:
        u = np.empty(0)
    cons = stream(seed, trial, "consumption")
    coin = cons.random(m)
    release = cons.random(m)
    return Scenario(types, sample_replenishment(instance, u), coin, release,
                    alg_rng=stream(seed, trial, "algorithm"))


# ----------------------------------------------------------------------------
# Realization of a single decision
# ----------------------------------------------------------------------------


def success_flags(action: Action, u: float) -> Dict[str, bool]:
    """Bernoulli outcome per used resource from the decision's coin ``u``."""
    if action.coin == "exclusive":
        flags, lo = {}, 0.0
        for rid, prof in action.uses.items():
            hi = lo + prof.success_prob
            flags[rid] = lo <= u < hi
            lo = hi
        return flags
    return {rid: u < prof.success_prob for rid, prof in action.uses.items()}


def realized_rewards(instance: Instance, action: Action, j: int, z: str,
                     flags: Dict[str, bool]) -> Dict[str, float]:
    """Reward credited to each root resource (nonzero entries only)."""
    if j < action.activation or not action.rewards:
        return {}
    out: Dict[str, float] = {}
    any_flag = any(flags.values()) if flags else True
    rindex = instance.root_index
    for (rid, zz), spec in action.rewards.items():
        if zz != z and zz != WILDCARD:
            continue
        if spec.kind == "coupled":
            hit = flags[rid] if rid in flags else any_flag
            value = spec.value if hit else 0.0
        else:
            value = spec.value
        if value == 0:
            continue
        for t in (instance.roots if rid == WILDCARD else (rindex[rid],)):
            out[t] = out.get(t, 0.0) + value
    return out


# ----------------------------------------------------------------------------
# Inventory ledger
# ----------------------------------------------------------------------------


class InventoryLedger:
    """Available stock, active holds and cumulative flows per resource."""

    def __init__(self, instance: Instance):
        self.initial = {r.id: r.initial_inventory for r in instance.resources}
        self.available = dict(self.initial)
        self.held = {rid: 0.0 for rid in self.initial}
        self.consumed = {rid: 0.0 for rid in self.initial}
        self.replenished = {rid: 0.0 for rid in self.initial}
        self._holds: List[Tuple[int, int, str, float]] = []
        self._seq = 0

    def add_resource(self, rid: str, amount: float):
        self.initial[rid] = amount
        self.available[rid] = amount
        self.held[rid] = 0.0
        self.consumed[rid] = 0.0
        self.replenished[rid] = 0.0

    def replenish(self, amounts: Dict[str, float]):
        for rid, v in amounts.items():
            if v < 0:
                raise InstanceError("negative replenishment")
            if v:
                self.available[rid] += v
                self.replenished[rid] += v

    def release(self, j: int):
        while self._holds and self._holds[0][0] <= j:
            _, _, rid, amount = heapq.heappop(self._holds)
            self.available[rid] += amount
            self.held[rid] -= amount

    def feasible(self, action: Action) -> bool:
        avail = self.available
        return all(avail[rid] >= prof.peak - FEAS_TOL for rid, prof in action.uses.items())

    def debit(self, action: Action, j: int, flags: Dict[str, bool], v: float):
        for rid, prof in action.uses.items():
            if not flags[rid] or prof.peak == 0:
                continue
            # clamp tolerance-level overdraws so stock never goes negative
            amount = prof.peak
            self.available[rid] = max(0.0, self.available[rid] - amount)
            delay = prof.release.sample(v)
            if math.isinf(delay):
                self.consumed[rid] += amount
            else:
                self.held[rid] += amount
                heapq.heappush(self._holds, (j + int(delay), self._seq, rid, amount))
                self._seq += 1

    def conservation_gap(self) -> float:
        """Largest violation of available + held + consumed = initial + replenished."""
        gap = 0.0
        for rid in self.initial:
            lhs = self.available[rid] + self.held[rid] + self.consumed[rid]
            rhs = self.initial[rid] + self.replenished[rid]
            gap = max(gap, abs(lhs - rhs))
        return gap

    def capacity(self, rid: str) -> float:
        return self.initial[rid] + self.replenished[rid]


# ----------------------------------------------------------------------------
# Algorithm protocol
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Choice:
    """Decision returned by wrapped algorithms: what was chosen vs implemented."""

    chosen: str
    implemented: str
    fallback: bool = False


@dataclass
class Context:
    """What an online algorithm observes when request ``j`` is revealed."""

    instance: Instance
    j: int
    z: str
    ledger: InventoryLedger
    history: List[str]
    replenishment: Dict[str, float]
    rng: Optional[np.random.Generator] = None

    @property
    def available(self) -> Dict[str, float]:
        return self.ledger.available

    def feasible(self, k: str) -> bool:
        return self.ledger.feasible(self.instance.action_map[k])

    def fill(self, rid: str) -> float:
        cap = self.ledger.capacity(rid)
        if cap <= 0:
            return 1.0
        return (cap - self.ledger.available[rid]) / cap


@dataclass(frozen=True)
class Outcome:
    j: int
    z: str
    action: str
    coin: float
    release_draw: float


class OnlineAlgorithm:
    """Base class; subclasses override :meth:`decide`."""

    name = "algorithm"

    def reset(self, instance: Instance, rng: Optional[np.random.Generator] = None):
        pass

    def decide(self, ctx: Context):
        raise NotImplementedError

    def observe(self, outcome: Outcome):
        pass


# ----------------------------------------------------------------------------
# Runs
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    j: int
    z: str
    chosen: str
    implemented: str
    rewards: Tuple[Tuple[str, float], ...]


@dataclass
class RunResult:
    rewards: Dict[str, float]
    objective: float
    action_trace: List[TraceEntry]
    fallback_count: int
    final_available: Dict[str, float] = field(default_factory=dict)

    def recompute_objective(self) -> float:
        totals = {i: 0.0 for i in self.rewards}
        for entry in self.action_trace:
            for i, v in entry.rewards:
                totals[i] += v
        return min(totals.values()) if totals else 0.0

    def to_dict(self) -> dict:
        return {
            "rewards": self.rewards,
            "objective": self.objective,
            "fallback_count": self.fallback_count,
            "action_trace": [
                {"j": e.j, "z": e.z, "chosen": e.chosen, "implemented": e.implemented,
                 "rewards": dict(e.rewards)} for e in self.action_trace
            ],
            "final_available": self.final_available,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def run(instance: Instance, algorithm: OnlineAlgorithm, seed: int = 0, trial: int = 0,
        scenario: Optional[Scenario] = None, check_conservation: bool = False) -> RunResult:
    """Execute ``algorithm`` on one sampled (or supplied) scenario."""
    scen = scenario if scenario is not None else sample_scenario(instance, seed, trial)
    ledger = InventoryLedger(instance)
    roots = instance.roots
    totals = {i: 0.0 for i in roots}
    history: List[str] = []
    trace: List[TraceEntry] = []
    fallbacks = 0
    algorithm.reset(instance, scen.alg_rng)
    amap = instance.action_map

    for j in range(1, instance.horizon + 1):
        repl = scen.replenished_at(j, roots)
        ledger.replenish(repl)
        ledger.release(j)
        z = scen.types[j - 1]
        ctx = Context(instance, j, z, ledger, history, repl, scen.alg_rng)
        out = algorithm.decide(ctx)
        choice = out if isinstance(out, Choice) else Choice(out, out)
        action = amap.get(choice.implemented)
        if action is None:
            raise InfeasibleActionError(f"request {j}: unknown action {choice.implemented!r}")
        if not ledger.feasible(action):
            raise InfeasibleActionError(
                f"request {j}: action {action.id!r} is not implementable with available "
                f"{ {rid: ledger.available[rid] for rid in action.uses} }")
        u, v = float(scen.coin[j - 1]), float(scen.release_draw[j - 1])
        flags = success_flags(action, u)
        ledger.debit(action, j, flags, v)
        gained = realized_rewards(instance, action, j, z, flags)
        for i, val in gained.items():
            totals[i] += val
        if choice.fallback:
            fallbacks += 1
        history.append(choice.chosen)
        trace.append(TraceEntry(j, z, choice.chosen, choice.implemented, tuple(sorted(gained.items()))))
        algorithm.observe(Outcome(j, z, choice.implemented, u, v))
        if check_conservation and ledger.conservation_gap() > FEAS_TOL:
            raise AssertionError(f"inventory conservation violated at request {j}")

    return RunResult(totals, min(totals.values()), trace, fallbacks, dict(ledger.available))


# ----------------------------------------------------------------------------
# Monte Carlo
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Performance:
    mean: float
    se: float
    fallback_rate: float
    trials: int
    fallback_se: float = 0.0

    def csv_row(self, instance_id: str, algorithm_id: str) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [instance_id, algorithm_id, self.trials, repr(self.mean), repr(self.se), repr(self.fallback_rate)])
        return buf.getvalue()


PERFORMANCE_HEADER = "instance_id,algorithm_id,trials,mean,se,fallback_rate\n"


def summarize(values: Sequence[float], fallback_rates: Sequence[float]) -> Performance:
    arr = np.asarray(values, dtype=float)
    rates = np.asarray(fallback_rates, dtype=float)
    n = len(arr)
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    rate_se = float(rates.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Performance(float(arr.mean()), se, float(rates.mean()), n, rate_se)


def expected_performance(instance: Instance, algorithm, trials: int, seed: int = 0) -> Performance:
    """Mean objective and its standard error over independent trials.

    ``algorithm`` is either an :class:`OnlineAlgorithm` (reset before every
    trial) or a zero-argument factory called once per trial.  The per-request
    fallback rate is averaged over trials.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    make = (lambda: algorithm) if isinstance(algorithm, OnlineAlgorithm) else algorithm
    values, rates = [], []
    for t in range(trials):
        res = run(instance, make(), seed=seed, trial=t)
        values.append(res.objective)
        rates.append(res.fallback_count / instance.horizon)
    return summarize(values, rates)
