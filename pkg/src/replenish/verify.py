"""Verification suites.

Each suite runs a family of checks with fixed seeds and returns a
:class:`SuiteReport` listing measured versus target values.  The CLI's
``verify`` command prints these reports; the acceptance tests assert on them.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional

import numpy as np

from .algorithms import FixedSplit, Greedy, InventoryBalancing, Scripted, greedy_maximizers
from .batching import (
    BatchAdversarial,
    BatchStochastic,
    adversarial_batches,
    batch_schedule,
    build_batched_instance,
    build_batched_instance_stochastic,
    epsilon_for,
)
from .benchmarks import (
    AttenuatedRounding,
    binomial_tail,
    chernoff_check,
    default_delta,
    enumerate_scenarios,
    exact_opt,
    exact_tail,
    exact_performance,
)
from .engine import Context, run
from .instances import GeneratorParams, generate
from .lp import build_lp, solve_lp
from .model import (
    WILDCARD,
    Action,
    Arrivals,
    ConsumptionProfile,
    Instance,
    Release,
    Replenishment,
    Resource,
    RewardSpec,
)
from .montecarlo import fallback_performance, rounding_performance


@dataclass
class Check:
    name: str
    passed: bool
    measured: object = None
    target: object = None


@dataclass
class SuiteReport:
    suite: str
    checks: List[Check] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, passed, measured=None, target=None):
        self.checks.append(Check(name, bool(passed), measured, target))

    def lines(self) -> List[str]:
        out = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            out.append(f"{status} {self.suite}/{c.name}: measured={c.measured} target={c.target}")
        out.append(f"{'PASS' if self.passed else 'FAIL'} {self.suite}: {len(self.checks)} checks "
                   f"in {self.seconds:.2f}s")
        return out


# ----------------------------------------------------------------------------
# Random instances
# ----------------------------------------------------------------------------


def random_small_instance(rng: np.random.Generator, max_m: int = 6, max_k: int = 3, max_n: int = 3,
                          max_coins: int = 6, max_scenarios: int = 256) -> Instance:
    """Small instance with deterministic consumption, inside the exact-optimum scope."""
    n = int(rng.integers(1, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    rids = [f"r{i + 1}" for i in range(n)]
    resources = tuple(Resource(r, float(rng.integers(1, 4))) for r in rids)

    stochastic = bool(rng.random() < 0.5)
    if stochastic:
        types = ("a", "b")
        rows = []
        for j in range(m):
            if rng.random() < 0.5:
                z = int(rng.integers(0, 2))
                rows.append((1.0, 0.0) if z == 0 else (0.0, 1.0))
            else:
                p = float(rng.choice([0.25, 0.5, 0.75]))
                rows.append((p, 1.0 - p))
        arrivals = Arrivals("stochastic", m, types, tuple(rows))
    else:
        types = ("a", "b")
        arrivals = Arrivals("adversarial", m, tuple(str(rng.choice(types)) for _ in range(m)))

    k = int(rng.integers(1, max_k + 1))
    actions = []
    for t in range(k):
        size = int(rng.integers(1, n + 1))
        used = sorted(rng.choice(n, size=size, replace=False))
        uses = {}
        for u in used:
            if rng.random() < 0.25:
                release = Release("det", steps=int(rng.integers(1, 3)))
            else:
                release = Release()
            uses[rids[u]] = ConsumptionProfile(float(rng.choice([0.5, 1.0])), 1.0, release)
        rewards = {}
        present = sorted(arrivals.type_set())
        for z in present:
            if rng.random() < 0.8:
                target = WILDCARD if rng.random() < 0.4 else rids[int(rng.integers(0, n))]
                rewards[(target, z)] = RewardSpec("det", float(rng.integers(1, 4)))
        if not rewards:
            rewards[(WILDCARD, present[0])] = RewardSpec("det", 1.0)
        actions.append(Action(f"k{t + 1}", uses, rewards))
    actions.append(Action("k0"))

    type_scen = 1
    for j in range(1, m + 1):
        type_scen *= len(arrivals.support(j))
    coins_allowed = max_coins
    while coins_allowed > 0 and type_scen * (1 << coins_allowed) > max_scenarios:
        coins_allowed -= 1
    if rng.random() < 0.7:
        entries = {}
        for _ in range(int(rng.integers(0, coins_allowed + 1))):
            key = (rids[int(rng.integers(0, n))], int(rng.integers(1, m + 1)))
            w = float(rng.integers(1, 3))
            entries[key] = (w, w * float(rng.choice([0.25, 0.5, 0.75])))
        rep = Replenishment("stochastic", 2.0, entries=entries)
    else:
        fixed = {}
        for _ in range(int(rng.integers(0, 4))):
            key = (rids[int(rng.integers(0, n))], int(rng.integers(1, m + 1)))
            fixed[key] = float(rng.integers(1, 3))
        rep = Replenishment("adversarial", 2.0, fixed=fixed)
    return Instance(resources, arrivals, tuple(actions), rep, name="random-small")


COUPLING_FAMILIES = ("BMatching", "Adwords", "StochasticRewards", "ReusableMatching", "Hypergraph")


def random_adversarial_instance(rng: np.random.Generator, replenishment: str = "adversarial") -> Instance:
    """Random instance from a settings family with adversarial arrivals."""
    family = COUPLING_FAMILIES[int(rng.integers(0, len(COUPLING_FAMILIES)))]
    params = GeneratorParams(
        family=family,
        n=int(rng.integers(2, 5)),
        c=float(rng.integers(4, 40)),
        d=int(rng.integers(1, 3)),
        seed=int(rng.integers(0, 2**31)),
        arrivals="adversarial",
        replenishment=replenishment,
        repl_ratio=float(rng.uniform(0.2, 1.5)),
        M=float(rng.uniform(1.0, 12.0)),
    )
    return generate(params)


# ----------------------------------------------------------------------------
# Suites
# ----------------------------------------------------------------------------


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        report = fn(*args, **kwargs)
        report.seconds = time.perf_counter() - t0
        return report
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


GRID = 1000  # amounts live on a 1/GRID lattice


def check_sandwich(process: Dict[str, List[int]], c_B: int, lower_shift: int) -> Optional[str]:
    """Exact prefix inequalities for one process; returns a failure message or None.

    Amounts are integer numerators over a common denominator, so every
    comparison is exact.
    """
    batches = batch_schedule(process, c_B)
    emitted = {i: [0] * len(seq) for i, seq in process.items()}
    for b in batches:
        if b.amount < c_B:
            return f"batch {b.resource} of {b.amount} below threshold {c_B}"
        emitted[b.i][b.j - 1] = b.amount
    for i, seq in process.items():
        total = 0
        batched = 0
        for j, (z, zb) in enumerate(zip(seq, emitted[i]), start=1):
            total += z
            batched += zb
            if not (total - lower_shift <= batched <= total):
                return f"prefix violated for {i} at {j}: {total} vs {batched}"
    return None


def random_sandwich_process(rng: np.random.Generator, fluid: bool):
    """(process, threshold) as integer numerators over a shared denominator."""
    n = int(rng.integers(1, 6))
    m = int(rng.integers(1, 201))
    c_min = Fraction(int(rng.integers(GRID, 400 * GRID)), GRID)
    if not fluid:
        # raw amounts, threshold sqrt(c_min)
        c_B = Fraction(math.sqrt(c_min)).limit_denominator(GRID)
        scale = float(rng.choice([0.1, 1.0, 5.0, 30.0]))
        raw = [rng.exponential(scale, size=m) * (rng.random(m) < rng.uniform(0.1, 1.0)) for _ in range(n)]
        amounts = [[Fraction(int(v * GRID), GRID) for v in row] for row in raw]
    else:
        # fluid amounts (1 - eps) q, threshold eps c_min
        M = float(rng.uniform(0.5, 20.0))
        d = int(rng.integers(1, 4))
        eps = Fraction(epsilon_for(M, float(c_min), d)).limit_denominator(GRID)
        c_B = eps * c_min
        raw = [rng.uniform(0.0, M, size=m) * (rng.random(m) < rng.uniform(0.1, 1.0)) for _ in range(n)]
        amounts = [[(1 - eps) * Fraction(int(q * GRID), GRID) for q in row] for row in raw]
    denom = math.lcm(c_B.denominator, *(v.denominator for row in amounts for v in row))
    scale_int = lambda v: v.numerator * (denom // v.denominator)
    process = {f"r{i}": [scale_int(v) for v in row] for i, row in enumerate(amounts)}
    return process, scale_int(c_B)


@_timed
def suite_sandwich(processes: int = 1000, seed: int = 0) -> SuiteReport:
    """Batched prefix sums stay within one threshold below the raw (or fluid) prefix sums."""
    rep = SuiteReport("sandwich")
    rng = np.random.default_rng(seed)
    failures = []
    for p in range(processes):
        process, c_B = random_sandwich_process(rng, fluid=bool(p % 2))
        msg = check_sandwich(process, c_B, c_B)
        if msg:
            failures.append(f"process {p}: {msg}")
    rep.add("prefix-inequalities", not failures, f"{len(failures)} failures", f"0 of {processes}")
    if failures:
        rep.add("first-failure", False, failures[0])
    return rep


def _trace_signature(result, chosen=True):
    return [(e.j, e.z, e.chosen if chosen else e.implemented, e.rewards) for e in result.action_trace]


@_timed
def suite_coupling(instances: int = 100, seed: int = 1) -> SuiteReport:
    """The adversarial wrapper on H behaves exactly like the base algorithm on the final batched instance."""
    rep = SuiteReport("coupling")
    rng = np.random.default_rng(seed)
    mismatches = []
    for t in range(instances):
        inst = random_adversarial_instance(rng)
        batched = build_batched_instance(inst, adversarial_batches(inst))
        bases = [("greedy", Greedy)]
        if inst.d <= 1:
            bases.append(("ib", InventoryBalancing))
        for label, make in bases:
            s = int(rng.integers(0, 2**31))
            wrapped = BatchAdversarial(make())
            on_h = run(inst, wrapped, seed=s)
            on_hb = run(batched, make(), seed=s)
            same = (_trace_signature(on_h) == _trace_signature(on_hb)
                    and on_h.rewards == on_hb.rewards and on_h.objective == on_hb.objective
                    and [e.implemented for e in on_h.action_trace]
                    == [batched.action_map[e.chosen].root for e in on_hb.action_trace]
                    and wrapped.batched_instance.resources == batched.resources
                    and wrapped.batched_instance.actions == batched.actions)
            if not same:
                mismatches.append(f"instance {t} ({inst.name}, {label})")
    rep.add("trace-and-reward-identity", not mismatches, f"{len(mismatches)} mismatches", "0")
    if mismatches:
        rep.add("first-mismatch", False, mismatches[0])
    return rep


@_timed
def suite_identity(instances: int = 50, seed: int = 2) -> SuiteReport:
    """With no replenishment the adversarial wrapper reproduces the base run byte for byte."""
    rep = SuiteReport("identity")
    rng = np.random.default_rng(seed)
    bad = []
    for t in range(instances):
        inst = random_adversarial_instance(rng, replenishment="none")
        make = InventoryBalancing if inst.d <= 1 and t % 2 else Greedy
        s = int(rng.integers(0, 2**31))
        a = run(inst, BatchAdversarial(make()), seed=s).to_json()
        b = run(inst, make(), seed=s).to_json()
        if a != b:
            bad.append(t)
    rep.add("byte-identical-traces", not bad, f"{len(bad)} differing", "0")
    return rep


@_timed
def suite_lemma41(instances: int = 200, seed: int = 3) -> SuiteReport:
    """The expected LP upper-bounds the clairvoyant optimum."""
    rep = SuiteReport("lemma41")
    rng = np.random.default_rng(seed)
    worst = math.inf
    bad = []
    for t in range(instances):
        inst = random_small_instance(rng)
        lp = solve_lp(build_lp(inst), method="simplex").value
        opt = exact_opt(inst)
        worst = min(worst, lp - opt)
        if lp < opt - 1e-6:
            bad.append((t, lp, opt))
    rep.add("lp-above-opt", not bad, f"min(LP-OPT)={worst:.6g}", ">= -1e-6")
    return rep


def random_rounding_instance(rng: np.random.Generator) -> Instance:
    family = ("BMatching", "Adwords", "Hypergraph")[int(rng.integers(0, 3))]
    c = float(rng.choice([50, 100, 200, 400]))
    n = int(rng.integers(1, 4)) if family != "Hypergraph" else int(rng.integers(2, 4))
    params = GeneratorParams(
        family=family, n=n, c=c, d=min(2, n), seed=int(rng.integers(0, 2**31)),
        m=int(1.5 * n * c), arrivals="adversarial", replenishment="adversarial",
        repl_ratio=float(rng.uniform(0.0, 0.5)), M=float(rng.uniform(1.0, 10.0)), types=2,
    )
    return generate(params)


@_timed
def suite_lemma42(instances: int = 50, trials: int = 10_000, seed: int = 4) -> SuiteReport:
    """Attenuated rounding of the LP optimum earns at least (1 - 3 delta) LP."""
    rep = SuiteReport("lemma42")
    rng = np.random.default_rng(seed)
    worst = math.inf
    bad = []
    for t in range(instances):
        inst = random_rounding_instance(rng)
        sol = solve_lp(build_lp(inst))
        delta = default_delta(inst.c_min, max(inst.d, 1))
        if delta >= 1:
            delta = 0.999
        policy = AttenuatedRounding(inst, sol, delta)
        perf = rounding_performance(inst, policy, trials, seed=int(rng.integers(0, 2**31)))
        target = (1.0 - 3.0 * delta) * sol.value
        margin = perf.mean - target
        worst = min(worst, margin)
        if perf.mean < target:
            bad.append(t)
    rep.add("rounding-vs-lp", not bad, f"min(mean-(1-3δ)LP)={worst:.6g}", ">= 0")
    return rep


CHERNOFF_EXAMPLES = (
    ("all-zero", [(1.0, 0.0)] * 10, 5.0, 0.5),
    ("binomial-100-0.45", [(1.0, 0.45)] * 100, 50.0, 1.0 / 9.0),
    ("halves-200-0.4", [(0.5, 0.4)] * 200, 48.0, 0.2),
)


@_timed
def suite_chernoff(samples: int = 100_000, seed: int = 5) -> SuiteReport:
    """Tail of a sum of two-point variables against exp(-delta^2 gamma / 3)."""
    rep = SuiteReport("chernoff")
    for n, (name, variables, gamma, delta) in enumerate(CHERNOFF_EXAMPLES):
        r = chernoff_check(variables, gamma, delta, samples=samples, seed=seed + n)
        rep.add(f"{name}-mc", r.mc_tail <= r.bound + 3 * r.mc_se,
                f"tail={r.mc_tail:.5f}±{r.mc_se:.5f}", f"<= {r.bound:.5f}")
        if r.exact_tail is not None:
            rep.add(f"{name}-exact", r.exact_tail <= r.bound, f"{r.exact_tail:.6g}", f"<= {r.bound:.5f}")
    closed = binomial_tail(100, 0.45, 50)
    conv = exact_tail([(1.0, 0.45)] * 100, 50.0)
    rep.add("binomial-closed-form", abs(conv - closed) <= 1e-12, f"{conv!r}", f"{closed!r} ± 1e-12")
    return rep


def fallback_instances(c_values=(200, 1000), ratios=(0.01, 0.05), seed: int = 6):
    """(label, instance) pairs: hard single-resource instances and random matchings."""
    out = []
    rng = np.random.default_rng(seed)
    for c in c_values:
        for ratio in ratios:
            M = ratio * c
            gamma = M / c
            out.append((f"GS-c{c}-M{ratio}", generate(GeneratorParams("HardGS", c=c, gamma=gamma))))
            params = GeneratorParams(
                family="BMatching", n=3, c=float(c), m=3 * c, seed=int(rng.integers(0, 2**31)),
                arrivals="onehot", replenishment="stochastic", repl_ratio=3.0, M=M,
            )
            out.append((f"bmatching-c{c}-M{ratio}", generate(params)))
    return out


@_timed
def suite_fallback(trials: int = 10_000, seed: int = 7, c_values=(200, 1000), ratios=(0.01, 0.05)) -> SuiteReport:
    """Per-request fallback rate of the stochastic wrapper stays below 1/c_min."""
    rep = SuiteReport("fallback")
    for label, inst in fallback_instances(c_values, ratios):
        hb = build_batched_instance_stochastic(inst)
        perf = fallback_performance(hb, Greedy, trials, seed=seed)
        target = 1.0 / inst.c_min
        rep.add(label, perf.fallback_rate <= target + 3 * perf.fallback_se,
                f"{perf.fallback_rate:.3g}±{perf.fallback_se:.2g} (eps={hb.epsilon:.3f}, "
                f"{len(hb.batches)} batches)", f"<= {target:.3g}")
    return rep


def fixed_split_grid(c: int, gamma: float, points: int = 21) -> Dict[float, float]:
    inst = generate(GeneratorParams("HardGS", c=c, gamma=gamma))
    out = {}
    for t in range(points):
        x = c * t / (points - 1)
        out[x] = exact_performance(inst, lambda x=x: FixedSplit(x))
    return out


@_timed
def suite_hard_instance(gammas=(0.5, 1.0), cs=(4, 8, 16)) -> SuiteReport:
    """Exact optimum, best fixed split and their ratio on the single-resource hard instance."""
    rep = SuiteReport("hard_instance")
    for gamma in gammas:
        for c in cs:
            inst = generate(GeneratorParams("HardGS", c=c, gamma=gamma))
            opt = exact_opt(inst)
            best = max(fixed_split_grid(c, gamma).values())
            lp = solve_lp(build_lp(inst)).value
            rep.add(f"opt-g{gamma}-c{c}", opt == (1 + 1.5 * gamma) * c, opt, (1 + 1.5 * gamma) * c)
            rep.add(f"online-g{gamma}-c{c}", best == (1 + gamma) * c, best, (1 + gamma) * c)
            ratio = best / opt
            target = (2 + 2 * gamma) / (2 + 3 * gamma)
            rep.add(f"ratio-g{gamma}-c{c}", abs(ratio - target) <= 1e-9, ratio, target)
            rep.add(f"lp-g{gamma}-c{c}", abs(lp - (1 + 1.5 * gamma) * c) <= 1e-7, lp, (1 + 1.5 * gamma) * c)
            # the LP conditioned on each refill outcome, averaged
            per_outcome = [solve_lp(build_lp(generate(GeneratorParams(fam, c=c, gamma=gamma)))).value
                           for fam in ("HardG1", "HardG2")]
            lp_real = 0.5 * sum(per_outcome)
            rep.add(f"lp-realized-g{gamma}-c{c}", abs(lp_real - (1 + 1.5 * gamma) * c) <= 1e-7, lp_real,
                    (1 + 1.5 * gamma) * c)
    return rep


TREND_CS = (25, 100, 400, 1600)
TREND_SEEDS = (0, 1, 2, 3, 4)


def trend_instance(c: int, seed: int) -> Instance:
    return generate(GeneratorParams("Adwords", n=4, c=float(c), seed=seed, arrivals="adversarial",
                                    replenishment="adversarial", repl_ratio=0.5, M=3.0))


def trend_ratios(cs=TREND_CS, seeds=TREND_SEEDS) -> Dict[int, List[float]]:
    """Ratio of balancing plus adversarial batching to the LP, per capacity and instance seed."""
    out: Dict[int, List[float]] = {}
    for c in cs:
        row = []
        for seed in seeds:
            inst = trend_instance(c, seed)
            res = run(inst, BatchAdversarial(InventoryBalancing()), seed=seed)
            lp = solve_lp(build_lp(inst), method="highs").value
            row.append(res.objective / lp)
        out[c] = row
    return out


@_timed
def suite_trend(cs=TREND_CS, seeds=TREND_SEEDS) -> SuiteReport:
    """Adwords ratio against the LP, averaged over instance seeds, grows with c."""
    rep = SuiteReport("trend")
    table = trend_ratios(cs, seeds)
    means = [float(np.mean(table[c])) for c in cs]
    for c, mean in zip(cs, means):
        rep.add(f"ratio-c{c}", True, f"{mean:.4f} (per seed {[round(r, 4) for r in table[c]]})", "reported")
    per_seed = sum(all(table[b][n] >= table[a][n] for a, b in zip(cs, cs[1:])) for n in range(len(seeds)))
    rep.add("monotone-seeds", True, f"{per_seed} of {len(seeds)}", "reported")
    mono = all(b >= a for a, b in zip(means, means[1:]))
    rep.add("non-decreasing", mono, [round(r, 4) for r in means], "non-decreasing")
    rep.add("final-ratio", means[-1] >= 0.55, f"{means[-1]:.4f}", ">= 0.55")
    return rep


@_timed
def suite_appendix() -> SuiteReport:
    """Replays of the two worked examples."""
    rep = SuiteReport("appendix")
    inst = generate(GeneratorParams("AppendixExample1"))
    wrapper = BatchAdversarial(Scripted(["AB@B@1", "AB@B@1@A@2"]))
    seen = {}

    class Probe(Scripted):
        def decide(self, ctx: Context):
            seen[ctx.j] = ([a.id for a in ctx.instance.actions],
                           {r.id: r.initial_inventory for r in ctx.instance.resources})
            return super().decide(ctx)

    wrapper.base = Probe(["AB@B@1", "AB@B@1@A@2"])
    res = run(inst, wrapper, seed=0)
    k1 = sorted(seen[1][0])
    k2 = sorted(seen[2][0])
    rep.add("K(1)", k1 == sorted(["AB", "AB@B@1", "A", "B", "B@B@1", "k0"]), k1, 6)
    rep.add("K(2)", len(k2) == 9 and "AB@B@1@A@2" in k2, k2, 9)
    rep.add("B1-inventory", seen[1][1].get("B@1") == 10.0, seen[1][1].get("B@1"), 10.0)
    rep.add("A2-inventory", seen[2][1].get("A@2") == 11.0, seen[2][1].get("A@2"), 11.0)
    rep.add("implements-AB", [e.implemented for e in res.action_trace] == ["AB", "AB"],
            [e.implemented for e in res.action_trace], ["AB", "AB"])

    inst2 = generate(GeneratorParams("AppendixExample2"))
    hb = build_batched_instance_stochastic(inst2, epsilon=0.03)
    caps = {r.id: r.initial_inventory for r in hb.instance.resources}
    rep.add("A1-B1-inventory", abs(caps["A@1"] - 4.85) <= 1e-12 and abs(caps["B@1"] - 4.85) <= 1e-12,
            (caps["A@1"], caps["B@1"]), 4.85)
    rep.add("K(1)-size", len(hb.instance.actions) == 9, len(hb.instance.actions), 9)
    prob = 0.0
    for scen in enumerate_scenarios(inst2):
        r = run(inst2, BatchStochastic(Scripted(["AB@A@1@B@1"]), hb), scenario=scen)
        if r.action_trace[0].implemented == "AB":
            prob += scen.weight
    rep.add("implement-probability", prob == 0.25, prob, 0.25)
    return rep


SUITES: Dict[str, Callable[[], SuiteReport]] = {
    "sandwich": suite_sandwich,
    "coupling": suite_coupling,
    "lemma41": suite_lemma41,
    "lemma42": suite_lemma42,
    "chernoff": suite_chernoff,
    "fallback": suite_fallback,
    "hard_instance": suite_hard_instance,
    "trend": suite_trend,
    "appendix": suite_appendix,
    "identity": suite_identity,
}


def example1_greedy_ties() -> Dict[int, List[str]]:
    """Greedy's tied maximizers on the virtual instance at each request of the first worked example."""
    inst = generate(GeneratorParams("AppendixExample1"))
    ties: Dict[int, List[str]] = {}

    class Recorder(Scripted):
        def decide(self, ctx: Context):
            ties[ctx.j] = greedy_maximizers(ctx)
            return super().decide(ctx)

    run(inst, BatchAdversarial(Recorder(["AB@B@1", "AB@B@1@A@2"])), seed=0)
    return ties
