"""Parameterized instance generators.

Every generator is a pure function of :class:`GeneratorParams`.  Random
families draw from ``numpy.random.default_rng(seed)``; adversarial
replenishment is drawn once from the seed and then frozen into the instance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from .model import (
    WILDCARD,
    Action,
    Arrivals,
    ConsumptionProfile,
    Instance,
    InstanceError,
    Release,
    Replenishment,
    Resource,
    RewardSpec,
)

FAMILIES = (
    "BMatching", "Adwords", "StochasticRewards", "Assortment", "Hypergraph", "ReusableMatching",
    "UpperTriangular", "AppendixExample1", "AppendixExample2", "HardG", "HardGS", "HardG1", "HardG2",
)


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs shared by all families; each family reads the ones it needs.

    ``repl_ratio`` is the total replenishment per resource as a multiple of
    ``c``; ``M`` bounds a single replenishment (defaults to ``max(1, c/10)``).
    ``types`` is the number of request types for families with a type pool.
    """

    family: str
    n: int = 3
    m: Optional[int] = None
    c: float = 10
    d: int = 2
    gamma: float = 1.0
    seed: int = 0
    arrivals: str = "adversarial"
    replenishment: str = "adversarial"
    repl_ratio: float = 0.5
    M: Optional[float] = None
    types: Optional[int] = None

    def bound(self) -> float:
        return float(self.M) if self.M is not None else max(1.0, self.c / 10.0)


TRIVIAL = Action("k0")
UNIT = ConsumptionProfile(1.0)


def _det(value: float) -> RewardSpec:
    return RewardSpec("det", float(value))


def _ids(prefix: str, n: int) -> List[str]:
    width = len(str(n))
    return [f"{prefix}{t:0{width}d}" for t in range(1, n + 1)]


def _arrivals(p: GeneratorParams, rng, type_ids: List[str], m: int) -> Arrivals:
    """Adversarial: a frozen random type sequence.  Stochastic: random i.i.d. laws.

    ``onehot`` is stochastic mode with point-mass laws (a known type sequence).
    """
    if p.arrivals == "adversarial":
        seq = rng.integers(0, len(type_ids), size=m)
        return Arrivals("adversarial", m, tuple(type_ids[t] for t in seq))
    if p.arrivals == "onehot":
        # stochastic mode whose laws are point masses on a frozen random sequence
        seq = rng.integers(0, len(type_ids), size=m)
        probs = tuple(tuple(1.0 if t == s else 0.0 for t in range(len(type_ids))) for s in seq)
        return Arrivals("stochastic", m, tuple(type_ids), probs)
    if p.arrivals == "stochastic":
        w = rng.random(len(type_ids)) + 0.2
        w = w / w.sum()
        row = tuple(float(x) for x in w[:-1]) + (float(1.0 - w[:-1].sum()),)
        return Arrivals("stochastic", m, tuple(type_ids), tuple(row for _ in range(m)))
    raise InstanceError(f"unknown arrival mode {p.arrivals!r}")


def _present(actions, arrivals: Arrivals) -> Tuple[Action, ...]:
    """Drop rewards for types a short adversarial sequence never produces."""
    seen = set(arrivals.type_set())
    out = []
    for a in actions:
        kept = {key: spec for key, spec in a.rewards.items() if key[1] == WILDCARD or key[1] in seen}
        out.append(a if len(kept) == len(a.rewards) else replace(a, rewards=kept))
    return tuple(out)


def random_replenishment(p: GeneratorParams, rng, resources: List[str], m: int,
                         windows: Optional[Dict[str, int]] = None) -> Replenishment:
    """Replenishment totalling about ``repl_ratio * c`` per resource, single amounts <= M.

    ``windows[i]`` limits the replenishment of ``i`` to requests ``1 .. windows[i]``.
    """
    span = lambda i: (windows or {}).get(i, m)
    M = p.bound()
    target = p.repl_ratio * p.c
    if p.replenishment == "adversarial":
        fixed: Dict[Tuple[str, int], float] = {}
        for i in resources:
            last = span(i)
            total = 0.0
            while total < target - 1e-12:
                amount = min(float(rng.uniform(0.0, M)), target - total)
                j = int(rng.integers(1, last + 1))
                fixed[(i, j)] = fixed.get((i, j), 0.0) + amount
                total += amount
        # merged events may exceed M; split the excess across later requests
        for key in list(fixed):
            if fixed[key] > M:
                i, j = key
                last = span(i)
                extra = fixed[key] - M
                fixed[key] = M
                jj = j
                while extra > 1e-12:
                    jj = jj % last + 1
                    room = M - fixed.get((i, jj), 0.0)
                    if room > 0:
                        take = min(room, extra)
                        fixed[(i, jj)] = fixed.get((i, jj), 0.0) + take
                        extra -= take
        return Replenishment("adversarial", M, fixed=dict(sorted(fixed.items(), key=lambda kv: (kv[0][1], kv[0][0]))))
    if p.replenishment == "regular":
        # frozen schedule: amounts of M at evenly spaced requests, remainder last
        fixed = {}
        events = int(np.ceil(target / M - 1e-12)) if target > 0 else 0
        for i in resources:
            last = span(i)
            if events > last:
                raise InstanceError("regular replenishment needs at most one event per request; raise M")
            left = target
            for e in range(events):
                j = min(last, 1 + (e * last) // events)
                amount = min(M, left)
                fixed[(i, j)] = fixed.get((i, j), 0.0) + amount
                left -= amount
        return Replenishment("adversarial", M, fixed=dict(sorted(fixed.items(), key=lambda kv: (kv[0][1], kv[0][0]))))
    if p.replenishment == "stochastic":
        # two-point {0, M} coins with mean M/2 at distinct random requests
        entries: Dict[Tuple[str, int], Tuple[float, float]] = {}
        for i in resources:
            last = span(i)
            events = min(last, int(np.ceil(target / (M / 2.0)))) if target > 0 else 0
            for j in sorted(rng.choice(np.arange(1, last + 1), size=events, replace=False)):
                entries[(i, int(j))] = (M, M / 2.0)
        ordered = sorted(entries.items(), key=lambda kv: (kv[0][1], kv[0][0]))
        return Replenishment("stochastic", M, entries=dict(ordered))
    if p.replenishment == "none":
        return Replenishment("adversarial", M)
    raise InstanceError(f"unknown replenishment mode {p.replenishment!r}")


# ----------------------------------------------------------------------------
# Families from the settings list
# ----------------------------------------------------------------------------


def b_matching(p: GeneratorParams) -> Instance:
    rng = np.random.default_rng(p.seed)
    m = p.m or int(2 * p.n * p.c)
    res = _ids("r", p.n)
    ntypes = p.types or max(2, p.n)
    zs = _ids("z", ntypes)
    weights = rng.uniform(0.5, 1.5, size=p.n)
    compat = {z: sorted(rng.choice(p.n, size=int(rng.integers(1, min(3, p.n) + 1)), replace=False))
              for z in zs}
    actions = []
    for t, rid in enumerate(res):
        rewards = {(WILDCARD, z): _det(round(float(weights[t]), 6)) for z in zs if t in compat[z]}
        actions.append(Action(f"k_{rid}", {rid: UNIT}, rewards))
    arrivals = _arrivals(p, rng, zs, m)
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m),
                    name="bmatching")


def adwords(p: GeneratorParams, triangular: bool = True) -> Instance:
    """Advertisers bid on queries; the bid is both the budget spent and the reward.

    With ``triangular`` arrivals come in ``n`` phases of equal length: phase
    ``t`` queries interest advertisers ``1 .. n-t+1``, the classical hard
    ordering for greedy budget allocation.  Phase length covers starting
    budget plus replenishment.
    """
    rng = np.random.default_rng(p.seed)
    res = _ids("a", p.n)
    zs = _ids("q", p.n)
    bids = np.round(rng.uniform(0.5, 1.0, size=(p.n, p.n)), 3)
    phase = int(round(p.c * (1.0 + p.repl_ratio)))
    m = p.m or p.n * phase
    actions = []
    for i, rid in enumerate(res):
        for t, z in enumerate(zs):
            if i <= p.n - 1 - t:
                b = float(bids[i, t])
                actions.append(Action(f"{rid}_{z}", {rid: ConsumptionProfile(b)}, {(WILDCARD, z): _det(b)}))
    if triangular and p.arrivals == "adversarial":
        types = tuple(zs[min(j // phase, p.n - 1)] for j in range(m))
        arrivals = Arrivals("adversarial", m, types)
    else:
        arrivals = _arrivals(p, rng, zs, m)
    windows = None
    if triangular and p.arrivals == "adversarial":
        # advertiser i is only asked for in phases 1 .. n-i+1
        windows = {rid: min(m, phase * (p.n - i)) for i, rid in enumerate(res)}
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m, windows),
                    name="adwords")


def stochastic_rewards(p: GeneratorParams) -> Instance:
    """Matching where each proposed match succeeds with a known probability."""
    rng = np.random.default_rng(p.seed)
    m = p.m or int(2 * p.n * p.c)
    res = _ids("r", p.n)
    zs = _ids("z", p.types or max(2, p.n))
    actions = []
    for i, rid in enumerate(res):
        for z in zs:
            if rng.random() < 0.7:
                prob = round(float(rng.uniform(0.3, 1.0)), 3)
                actions.append(Action(f"{rid}_{z}", {rid: ConsumptionProfile(1.0, prob)},
                                      {(WILDCARD, z): RewardSpec("coupled", 1.0)}))
    arrivals = _arrivals(p, rng, zs, m)
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m),
                    name="stochastic-rewards")


def assortment(p: GeneratorParams, no_purchase: float = 1.0) -> Instance:
    """Offer a set of at most ``d`` products; the customer picks uniformly or leaves.

    Product ``i`` in offered set ``S`` is bought with probability
    ``1 / (|S| + no_purchase)``; each sale pays one unit.
    """
    rng = np.random.default_rng(p.seed)
    m = p.m or int(2 * p.n * p.c)
    res = _ids("r", p.n)
    zs = _ids("z", p.types or 2)
    actions = []
    for size in range(1, min(p.d, p.n) + 1):
        for subset in itertools.combinations(res, size):
            prob = 1.0 / (size + no_purchase)
            uses = {rid: ConsumptionProfile(1.0, prob) for rid in subset}
            actions.append(Action("S_" + "_".join(subset), uses,
                                  {(WILDCARD, WILDCARD): RewardSpec("coupled", 1.0)}, coin="exclusive"))
    arrivals = _arrivals(p, rng, zs, m)
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m),
                    name="assortment")


def hypergraph(p: GeneratorParams) -> Instance:
    """Bundles of up to ``d`` resources; each type accepts a few bundles at its own prices."""
    if p.d > p.n:
        raise InstanceError(f"hypergraph needs d <= n, got d={p.d}, n={p.n}")
    if p.d < 1:
        raise InstanceError("hypergraph needs d >= 1")
    rng = np.random.default_rng(p.seed)
    m = p.m or int(p.n * p.c)
    res = _ids("r", p.n)
    zs = _ids("z", p.types or max(2, p.n))
    nb = max(p.n, 4)
    bundles = []
    for b in range(nb):
        size = p.d if b == 0 else int(rng.integers(1, p.d + 1))
        bundles.append(sorted(rng.choice(p.n, size=size, replace=False)))
    actions = []
    for b, members in enumerate(bundles):
        rewards = {}
        for z in zs:
            if rng.random() < 0.6:
                rewards[(WILDCARD, z)] = _det(round(float(rng.uniform(0.5, 2.0)) * len(members), 3))
        if not rewards:
            rewards[(WILDCARD, zs[b % len(zs)])] = _det(float(len(members)))
        uses = {res[t]: UNIT for t in members}
        actions.append(Action(f"b{b + 1}", uses, rewards))
    arrivals = _arrivals(p, rng, zs, m)
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m),
                    name="hypergraph")


def reusable_matching(p: GeneratorParams) -> Instance:
    """Unit rentals returned after a geometric number of arrivals."""
    rng = np.random.default_rng(p.seed)
    m = p.m or int(3 * p.n * p.c)
    res = _ids("r", p.n)
    zs = _ids("z", p.types or max(2, p.n))
    actions = []
    for i, rid in enumerate(res):
        ret = round(float(rng.uniform(0.02, 0.2)), 4)
        rewards = {(WILDCARD, z): _det(1.0) for z in zs if rng.random() < 0.6}
        if not rewards:
            rewards[(WILDCARD, zs[i % len(zs)])] = _det(1.0)
        actions.append(Action(f"k_{rid}", {rid: ConsumptionProfile(1.0, 1.0, Release("geom", p=ret))}, rewards))
    arrivals = _arrivals(p, rng, zs, m)
    return Instance(tuple(Resource(r, float(p.c)) for r in res), arrivals,
                    _present(actions, arrivals) + (TRIVIAL,), random_replenishment(p, rng, res, m),
                    name="reusable")


def upper_triangular(p: GeneratorParams) -> Instance:
    """``n`` phases of ``c`` unit requests; phase ``t`` can use resources ``1 .. n-t+1``.

    Resource ids sort in index order, so lexicographic tie-breaking steers
    greedy to the resource every later phase still needs.
    """
    c = int(p.c)
    res = _ids("r", p.n)
    zs = _ids("p", p.n)
    actions = []
    for i, rid in enumerate(res):
        rewards = {(WILDCARD, zs[t]): _det(1.0) for t in range(p.n) if i <= p.n - 1 - t}
        actions.append(Action(f"k_{rid}", {rid: UNIT}, rewards))
    m = p.n * c
    arrivals = Arrivals("adversarial", m, tuple(zs[j // c] for j in range(m)))
    rng = np.random.default_rng(p.seed)
    if p.replenishment == "adversarial" and p.repl_ratio > 0:
        rep = random_replenishment(p, rng, res, m)
    else:
        rep = Replenishment("adversarial", p.bound())
    return Instance(tuple(Resource(r, float(c)) for r in res), arrivals, tuple(actions) + (TRIVIAL,),
                    rep, name="upper-triangular")


# ----------------------------------------------------------------------------
# Worked examples and hard instances
# ----------------------------------------------------------------------------


def _power_set_actions() -> Tuple[Action, ...]:
    """Actions AB, A, B, k0: one unit of each used resource, one reward unit per resource used."""
    out = []
    for subset in (("A", "B"), ("A",), ("B",)):
        out.append(Action("".join(subset), {rid: UNIT for rid in subset},
                          {(rid, WILDCARD): _det(1.0) for rid in subset}))
    return tuple(out) + (TRIVIAL,)


def appendix_example_1(p: GeneratorParams) -> Instance:
    c = 100.0
    fixed = {("A", 1): 1.0, ("B", 1): 10.0, ("A", 2): 10.0, ("B", 2): 1.0}
    return Instance((Resource("A", c), Resource("B", c)), Arrivals("adversarial", 2, ("q", "q")),
                    _power_set_actions(), Replenishment("adversarial", 10.0, fixed=fixed), name="appendix-example-1")


def appendix_example_2(p: GeneratorParams) -> Instance:
    c = 100.0
    entries = {("A", 1): (10.0, 5.0), ("B", 1): (10.0, 5.0)}
    return Instance((Resource("A", c), Resource("B", c)), Arrivals("stochastic", 1, ("q",), ((1.0,),)),
                    _power_set_actions(), Replenishment("stochastic", 10.0, entries=entries),
                    name="appendix-example-2")


def _hard_base(c: float, gamma: float):
    c_units = int(round(c))
    late = int(round(gamma * c))
    if c_units != c or late != gamma * c or c_units < 1 or not (0 < gamma <= 1):
        raise InstanceError("hard instances need integer c >= 1, 0 < gamma <= 1 and integer gamma*c")
    m = c_units + late
    res = (Resource("1", float(c)),)
    action = Action("k", {"1": UNIT}, {(WILDCARD, "1"): _det(1.0), (WILDCARD, "2"): _det(2.0)})
    return res, m, c_units, (action, TRIVIAL)


def _hard_arrivals(m: int, c: int) -> Arrivals:
    probs = tuple((1.0, 0.0) if j <= c else (0.0, 1.0) for j in range(1, m + 1))
    return Arrivals("stochastic", m, ("1", "2"), probs)


def hard_g(p: GeneratorParams) -> Instance:
    res, m, c, actions = _hard_base(p.c, p.gamma)
    return Instance(res, _hard_arrivals(m, c), actions,
                    Replenishment("stochastic", p.gamma * p.c), name="G")


def hard_gs(p: GeneratorParams) -> Instance:
    """One resource, ``c`` type-1 then ``gamma c`` type-2 requests, one coin at ``c + 1``."""
    res, m, c, actions = _hard_base(p.c, p.gamma)
    M = p.gamma * p.c
    entries = {("1", c + 1): (M, M / 2.0)}
    return Instance(res, _hard_arrivals(m, c), actions,
                    Replenishment("stochastic", M, entries=entries), name="GS")


def hard_g1(p: GeneratorParams) -> Instance:
    res, m, c, actions = _hard_base(p.c, p.gamma)
    return Instance(res, _hard_arrivals(m, c), actions,
                    Replenishment("adversarial", p.gamma * p.c), name="G1")


def hard_g2(p: GeneratorParams) -> Instance:
    res, m, c, actions = _hard_base(p.c, p.gamma)
    M = p.gamma * p.c
    return Instance(res, _hard_arrivals(m, c), actions,
                    Replenishment("adversarial", M, fixed={("1", c + 1): M}), name="G2")


GENERATORS = {
    "BMatching": b_matching,
    "Adwords": adwords,
    "StochasticRewards": stochastic_rewards,
    "Assortment": assortment,
    "Hypergraph": hypergraph,
    "ReusableMatching": reusable_matching,
    "UpperTriangular": upper_triangular,
    "AppendixExample1": appendix_example_1,
    "AppendixExample2": appendix_example_2,
    "HardG": hard_g,
    "HardGS": hard_gs,
    "HardG1": hard_g1,
    "HardG2": hard_g2,
}


def generate(params: GeneratorParams) -> Instance:
    if params.n < 1 or params.c <= 0 or (params.m is not None and params.m < 1):
        raise InstanceError("sizes must be positive")
    try:
        gen = GENERATORS[params.family]
    except KeyError:
        raise InstanceError(f"unknown family {params.family!r}; choose from {', '.join(FAMILIES)}") from None
    return gen(params)


def with_params(params: GeneratorParams, **changes) -> GeneratorParams:
    return replace(params, **changes)
