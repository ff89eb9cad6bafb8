"""Offline benchmarks and exact evaluators.

* :func:`exact_opt` computes the clairvoyant optimum for instances whose
  consumption is deterministic, averaging over every realization of the
  arrival types and replenishment coins.
* :func:`enumerate_scenarios` / :func:`exact_performance` evaluate an online
  algorithm exactly on the same class of instances.
* :class:`AttenuatedRounding` is the randomized policy that serves each
  request independently according to a scaled-down LP solution.
* :func:`chernoff_check` compares a multiplicative tail bound for sums of
  two-point variables with exact and Monte Carlo tails.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .engine import Context, OnlineAlgorithm, Scenario, run
from .lp import LpSolution
from .model import Instance

MAX_COINS = 12
MAX_SCENARIOS = 1 << 16
MAX_STATES = 2_000_000


class ScopeError(ValueError):
    """The instance is outside the scope of an exact method."""


def _require_deterministic(instance: Instance):
    if not instance.deterministic:
        raise ScopeError("exact methods need deterministic consumption (success_prob in {0, 1}, "
                         "deterministic release)")


def enumerate_scenarios(instance: Instance, alg_seed: int = 0) -> List[Scenario]:
    """Every (type sequence, replenishment outcome) pair with its probability.

    Consumption must be deterministic, so the consumption uniforms are
    irrelevant and fixed at 0.5.
    """
    _require_deterministic(instance)
    m = instance.horizon
    arr = instance.arrivals
    supports = [arr.support(j) for j in range(1, m + 1)]
    n_type_seq = math.prod(len(s) for s in supports)
    rep = instance.replenishment
    if rep.stochastic:
        coins = rep.coins()
        sure = {(i, j): w for (i, j), (w, q) in rep.entries.items() if q >= w and w > 0}
    else:
        coins = []
        sure = {key: v for key, v in rep.fixed.items() if v}
    if len(coins) > MAX_COINS:
        raise ScopeError(f"{len(coins)} random replenishment coins exceed the limit of {MAX_COINS}")
    if n_type_seq * (1 << len(coins)) > MAX_SCENARIOS:
        raise ScopeError("too many scenarios to enumerate")

    half = np.full(m, 0.5)
    out = []
    for combo in itertools.product(*supports):
        types = [z for z, _ in combo]
        p_types = math.prod(p for _, p in combo)
        for bits in itertools.product((0, 1), repeat=len(coins)):
            repl = dict(sure)
            weight = p_types
            for bit, (i, j, w, q) in zip(bits, coins):
                if bit:
                    repl[(i, j)] = w
                    weight *= q / w
                else:
                    weight *= 1.0 - q / w
            if weight == 0:
                continue
            out.append(Scenario(types, repl, half, half,
                                alg_rng=np.random.default_rng(alg_seed), weight=weight))
    return out


def exact_performance(instance: Instance, algorithm_factory) -> float:
    """Expected objective of a deterministic online algorithm, by enumeration."""
    total = 0.0
    for scen in enumerate_scenarios(instance):
        total += scen.weight * run(instance, algorithm_factory(), scenario=scen).objective
    return total


# ----------------------------------------------------------------------------
# Clairvoyant optimum
# ----------------------------------------------------------------------------


def _pareto(vectors):
    """Non-dominated reward vectors (maximization)."""
    vecs = sorted(set(vectors), reverse=True)
    if vecs and len(vecs[0]) == 1:
        return [vecs[0]]
    kept = []
    for v in vecs:
        if not any(all(a >= b for a, b in zip(w, v)) for w in kept):
            kept.append(v)
    return kept


def _scenario_opt(instance: Instance, scen: Scenario, max_states: int) -> float:
    m = instance.horizon
    roots = instance.roots
    rids = [r.id for r in instance.resources]
    pos = {rid: n for n, rid in enumerate(rids)}
    start = tuple(r.initial_inventory for r in instance.resources)
    repl = [[scen.replenishment.get((rid, j), 0.0) for rid in rids] for j in range(1, m + 1)]

    # per request: candidate moves (consumption vector, release steps, reward vector)
    moves_at = []
    zero_reward = tuple(0.0 for _ in roots)
    for j in range(1, m + 1):
        z = scen.types[j - 1]
        moves = [((), zero_reward)]
        for action, _ in instance.rewarding_actions(j, z):
            rew = instance.objective_rewards(action.id, j, z)
            vec = tuple(rew.get(i, 0.0) for i in roots)
            use = tuple((pos[rid], prof.peak, prof.peak if prof.success_prob >= 1 else 0.0,
                         prof.release.steps if prof.release.kind == "det" else None)
                        for rid, prof in action.uses.items())
            moves.append((use, vec))
        moves_at.append(moves)

    memo: Dict[tuple, list] = {}

    def key_of(avail, holds):
        return (tuple(round(a, 9) for a in avail), holds)

    def solve(j: int, avail: tuple, holds: tuple):
        # avail/holds describe stock just before request j's replenishment
        if j > m:
            return [zero_reward]
        key = (j,) + key_of(avail, holds)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) > max_states:
            raise ScopeError(f"exact optimum exceeded {max_states} DP states")
        cur = [a + r for a, r in zip(avail, repl[j - 1])]
        rest = []
        for h in holds:
            if h[0] <= j:
                cur[h[1]] += h[2]
            else:
                rest.append(h)
        base_holds = tuple(rest)
        candidates = []
        for use, vec in moves_at[j - 1]:
            if any(cur[r] < peak - 1e-9 for r, peak, _, _ in use):
                continue
            nxt = list(cur)
            new_holds = list(base_holds)
            for r, _, used, steps in use:
                if used == 0:
                    continue
                nxt[r] = max(0.0, nxt[r] - used)
                if steps is not None:
                    new_holds.append((j + steps, r, used))
            for tail in solve(j + 1, tuple(nxt), tuple(sorted(new_holds))):
                candidates.append(tuple(a + b for a, b in zip(vec, tail)))
        front = _pareto(candidates)
        memo[key] = front
        return front

    front = solve(1, start, ())
    return max(min(v) for v in front)


def exact_opt(instance: Instance, max_states: int = MAX_STATES) -> float:
    """Expected clairvoyant optimum over all arrival/replenishment realizations.

    Each realization is solved by dynamic programming over (request, stock,
    active holds) keeping Pareto fronts of per-resource reward vectors.
    """
    _require_deterministic(instance)
    total = 0.0
    for scen in enumerate_scenarios(instance):
        total += scen.weight * _scenario_opt(instance, scen, max_states)
    return total


# ----------------------------------------------------------------------------
# Attenuated independent rounding
# ----------------------------------------------------------------------------


def default_delta(c_min: float, d: int) -> float:
    """``sqrt(3 log(c_min d) / c_min)``."""
    if c_min * d <= 1:
        raise ScopeError("need c_min * d > 1 for the default delta")
    return math.sqrt(3.0 * math.log(c_min * d) / c_min)


class AttenuatedRounding(OnlineAlgorithm):
    """Serve (j, z) with action k with probability ``x*_jkz / ((1 + delta) p_jz)``.

    One uniform from the algorithm stream is drawn per request; a sampled
    action that is not implementable is replaced by the trivial action.
    """

    def __init__(self, instance: Instance, solution: LpSolution, delta: float):
        if not (0 < delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        self.delta = delta
        self.name = f"rounding:delta={delta:g}"
        table: Dict[Tuple[int, str], List[Tuple[str, float]]] = {}
        for (j, k, z), x in solution.primal().items():
            p = instance.arrivals.prob(j, z)
            table.setdefault((j, z), []).append((k, x / ((1.0 + delta) * p)))
        for (j, z), rows in table.items():
            rows.sort()
            s = sum(prob for _, prob in rows)
            if s > 1.0 + 1e-9:
                raise ValueError(f"rounding probabilities sum to {s} > 1 at request {j}, type {z}")
        self.table = table
        self.rng = None

    def reset(self, instance: Instance, rng=None):
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def probabilities(self, j: int, z: str) -> List[Tuple[str, float]]:
        return self.table.get((j, z), [])

    def decide(self, ctx: Context):
        u = self.rng.random()
        acc = 0.0
        for k, prob in self.table.get((ctx.j, ctx.z), ()):
            acc += prob
            if u < acc:
                return k if ctx.feasible(k) else ctx.instance.trivial
        return ctx.instance.trivial


# ----------------------------------------------------------------------------
# Chernoff bound check
# ----------------------------------------------------------------------------


@dataclass
class ChernoffReport:
    bound: float
    mc_tail: float
    mc_se: float
    exact_tail: Optional[float]
    samples: int

    @property
    def passed(self) -> bool:
        ok = self.mc_tail <= self.bound + 3.0 * self.mc_se
        if self.exact_tail is not None:
            ok = ok and self.exact_tail <= self.bound + 1e-12
        return ok


def exact_tail(variables: Sequence[Tuple[float, float]], gamma: float, max_support: int = 200_000,
               digits: int = 12) -> Optional[float]:
    """P(sum X_t >= gamma) by convolution; None if the support grows too large."""
    dist = {0.0: 1.0}
    for x, p in variables:
        if p == 0 or x == 0:
            continue
        nxt: Dict[float, float] = {}
        for s, w in dist.items():
            for val, q in ((s, 1.0 - p), (round(s + x, digits), p)):
                if q:
                    nxt[val] = nxt.get(val, 0.0) + w * q
        dist = nxt
        if len(dist) > max_support:
            return None
    return math.fsum(w for s, w in dist.items() if s >= gamma - 10.0 ** (-digits + 2))


def binomial_tail(n: int, p: float, k: int) -> float:
    """Exact P(Bin(n, p) >= k) in rational arithmetic, rounded once."""
    pf = Fraction(p)
    total = sum(Fraction(math.comb(n, t)) * pf ** t * (1 - pf) ** (n - t) for t in range(k, n + 1))
    return float(total)


def chernoff_check(variables: Sequence[Tuple[float, float]], gamma: float, delta: float,
                   samples: int = 100_000, seed: int = 0, chunk: int = 20_000) -> ChernoffReport:
    """Bound ``exp(-delta^2 gamma / 3)`` against the tail ``P(sum X_t >= gamma)``.

    ``variables`` lists ``(x_t, p_t)`` with ``X_t = x_t`` w.p. ``p_t`` and 0 otherwise.
    """
    if not (0 < delta <= 1):
        raise ValueError("delta must lie in (0, 1]")
    for x, p in variables:
        if not (0 <= x <= 1) or not (0 <= p <= 1):
            raise ValueError("need 0 <= x_t <= 1 and 0 <= p_t <= 1")
    mean = math.fsum(x * p for x, p in variables)
    if mean > gamma / (1.0 + delta) + 1e-12:
        raise ValueError(f"precondition violated: total mean {mean} exceeds gamma/(1+delta) = {gamma / (1 + delta)}")
    bound = math.exp(-delta * delta * gamma / 3.0)
    xs = np.array([x for x, _ in variables], dtype=float)
    ps = np.array([p for _, p in variables], dtype=float)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        draws = rng.random((n, len(xs))) < ps
        sums = draws @ xs if len(xs) else np.zeros(n)
        hits += int(np.count_nonzero(sums >= gamma - 1e-12))
        done += n
    tail = hits / samples
    se = math.sqrt(tail * (1 - tail) / samples)
    return ChernoffReport(bound, tail, se, exact_tail(variables, gamma), samples)
