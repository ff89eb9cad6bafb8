import pytest
from hypothesis import given
from hypothesis import strategies as st

from replenish.algorithms import (
    FixedSplit,
    Greedy,
    InventoryBalancing,
    Scripted,
    Trivial,
    greedy_maximizers,
    parse_algorithm,
)
from replenish.benchmarks import exact_performance
from replenish.engine import Context, run
from replenish.instances import GeneratorParams, generate
from replenish.lp import lp_value
from replenish.model import (
    Action,
    Arrivals,
    ConsumptionProfile,
    Instance,
    Replenishment,
    Resource,
    RewardSpec,
    expected_reward,
)

UNIT = ConsumptionProfile(1.0)


def det(v):
    return RewardSpec("det", v)


def adversarial(types):
    return Arrivals("adversarial", len(types), tuple(types))


def first_choice(inst, alg):
    return run(inst, alg).action_trace[0].chosen


def test_greedy_prefers_the_two_resource_action():
    inst = generate(GeneratorParams("AppendixExample1"))
    assert first_choice(inst, Greedy()) == "AB"


def test_zero_rewards_pick_trivial():
    acts = (Action("k1", {"r": UNIT}), Action("k0"))
    inst = Instance((Resource("r", 5.0),), adversarial(["z"]), acts, Replenishment("adversarial", 1.0))
    for alg in (Greedy(), InventoryBalancing(), Trivial()):
        assert first_choice(inst, alg) == "k0"


def test_lexicographic_tie_break():
    acts = (Action("k2", {"r": UNIT}, {("r", "z"): det(1.0)}),
            Action("k1", {"r": UNIT}, {("r", "z"): det(1.0)}), Action("k0"))
    inst = Instance((Resource("r", 5.0),), adversarial(["z"]), acts, Replenishment("adversarial", 1.0))
    assert first_choice(inst, Greedy()) == "k1"
    assert first_choice(inst, InventoryBalancing()) == "k1"


@given(st.integers(0, 5000))
def test_fresh_inventory_ib_first_choice_matches_greedy(seed):
    inst = generate(GeneratorParams("BMatching", n=4, c=20, seed=seed, replenishment="none"))
    assert first_choice(inst, InventoryBalancing()) == first_choice(inst, Greedy())


def fill_instance():
    # 9 of r1's 10 units go first, then 1 of r2's; the last request can use either
    a1 = Action("a1", {"r1": UNIT}, {("r1", "x"): det(1.0), ("r1", "both"): det(1.0)})
    a2 = Action("a2", {"r2": UNIT}, {("r2", "y"): det(1.0), ("r2", "both"): det(1.0)})
    types = ["x"] * 9 + ["y", "both"]
    return Instance((Resource("r1", 10.0), Resource("r2", 10.0)), adversarial(types), (a1, a2, Action("k0")),
                    Replenishment("adversarial", 1.0))


def test_ib_prefers_the_emptier_resource():
    inst = fill_instance()
    assert run(inst, InventoryBalancing()).action_trace[-1].chosen == "a2"
    assert run(inst, Greedy()).action_trace[-1].chosen == "a1"


@pytest.mark.parametrize("psi", ["exp", "linear"])
def test_ib_ranks_by_fill_for_every_increasing_penalty(psi):
    assert run(fill_instance(), InventoryBalancing(psi)).action_trace[-1].chosen == "a2"


def test_ib_on_upper_triangular_beats_threshold():
    inst = generate(GeneratorParams("UpperTriangular", n=10, c=100, replenishment="none"))
    ratio = run(inst, InventoryBalancing()).objective / lp_value(inst)
    assert ratio >= 0.60


def test_greedy_on_upper_triangular_is_worse_than_ib():
    inst = generate(GeneratorParams("UpperTriangular", n=10, c=100, replenishment="none"))
    assert run(inst, Greedy()).objective < run(inst, InventoryBalancing()).objective


def test_ib_refuses_bundles():
    inst = generate(GeneratorParams("AppendixExample1"))
    with pytest.raises(ValueError, match="d=1"):
        run(inst, InventoryBalancing())


def test_never_consumes_for_nothing():
    inst = generate(GeneratorParams("Adwords", n=3, c=10, seed=2))
    for alg in (Greedy(), InventoryBalancing()):
        for e in run(inst, alg).action_trace:
            action = {a.id: a for a in inst.actions}[e.chosen]
            assert not action.uses or sum(expected_reward(inst, i, e.j, e.chosen, e.z) for i in inst.roots) > 0


@pytest.mark.parametrize("x, expect", [(0, 200.0), (100, 200.0), (50, 200.0), (25, 200.0)])
def test_fixed_split_expected_reward(x, expect):
    inst = generate(GeneratorParams("HardGS", c=100, gamma=1.0))
    assert exact_performance(inst, lambda: FixedSplit(x)) == expect


@pytest.mark.parametrize("gamma", [0.5, 1.0])
def test_fixed_split_closed_form(gamma):
    c = 8
    inst = generate(GeneratorParams("HardGS", c=c, gamma=gamma))
    for x in range(c + 1):
        # gamma*c type-2 requests; without the refill only c - x of them fit
        low = x + 2 * min(gamma * c, c - x)
        high = x + 2 * gamma * c
        assert exact_performance(inst, lambda: FixedSplit(x)) == pytest.approx(0.5 * (low + high), abs=1e-12)


def test_scripted_replays():
    inst = generate(GeneratorParams("AppendixExample1"))
    res = run(inst, Scripted(["A", "B"]))
    assert [e.chosen for e in res.action_trace] == ["A", "B"]


def test_greedy_maximizers_lists_every_tie():
    inst = generate(GeneratorParams("BMatching", n=3, c=5, seed=0, replenishment="none"))
    seen = []

    class Probe(Greedy):
        def decide(self, ctx: Context):
            seen.append((greedy_maximizers(ctx), super().decide(ctx)))
            return seen[-1][1]

    run(inst, Probe())
    for ties, chosen in seen:
        assert not ties or chosen == min(ties)


@pytest.mark.parametrize("spec, name", [("greedy", "greedy"), ("trivial", "trivial"), ("ib", "ib:psi=exp"),
                                        ("ib:psi=linear", "ib:psi=linear"), ("fixed_split:x=3", "fixed_split:x=3")])
def test_parse_algorithm(spec, name):
    assert parse_algorithm(spec)().name == name


@pytest.mark.parametrize("spec", ["nope", "greedy:x=1", "ib:psi=cubic", "fixed_split", "fixed_split:x=-1",
                                  "ib:psi"])
def test_parse_algorithm_errors(spec):
    with pytest.raises(ValueError):
        parse_algorithm(spec)
