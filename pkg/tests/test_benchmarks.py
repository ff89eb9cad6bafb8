import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_opt
from replenish.algorithms import FixedSplit, Greedy
from replenish.benchmarks import (
    AttenuatedRounding,
    ScopeError,
    binomial_tail,
    chernoff_check,
    default_delta,
    enumerate_scenarios,
    exact_opt,
    exact_performance,
    exact_tail,
)
from replenish.engine import expected_performance
from replenish.instances import GeneratorParams, generate
from replenish.lp import LpSolution, build_lp, solve_lp
from replenish.model import (
    WILDCARD,
    Action,
    Arrivals,
    ConsumptionProfile,
    Instance,
    Replenishment,
    Resource,
    RewardSpec,
)
from replenish.verify import random_small_instance


def one_request():
    act = Action("k", {"r": ConsumptionProfile(1.0)}, {(WILDCARD, "z"): RewardSpec("det", 1.0)})
    return Instance((Resource("r", 1.0),), Arrivals("adversarial", 1, ("z",)), (act, Action("k0")),
                    Replenishment("adversarial", 1.0))


# -- exact OPT ---------------------------------------------------------------------

@pytest.mark.parametrize("gamma, c", [(1.0, 2), (1.0, 4), (0.5, 4), (0.5, 8), (1.0, 16)])
def test_hard_instance_opt(gamma, c):
    assert exact_opt(generate(GeneratorParams("HardGS", c=c, gamma=gamma))) == (1 + 1.5 * gamma) * c


def test_hard_instance_online_sup():
    for gamma, c in [(0.5, 8), (1.0, 8)]:
        inst = generate(GeneratorParams("HardGS", c=c, gamma=gamma))
        grid = np.linspace(0, c, 21)
        best = max(exact_performance(inst, lambda: FixedSplit(float(x))) for x in grid)
        assert best == (1 + gamma) * c


def test_zero_reward_opt():
    act = Action("k", {"r": ConsumptionProfile(1.0)})
    inst = Instance((Resource("r", 2.0),), Arrivals("adversarial", 2, ("z", "z")), (act, Action("k0")),
                    Replenishment("adversarial", 1.0))
    assert exact_opt(inst) == 0.0


@settings(max_examples=40)
@given(st.integers(0, 2**31))
def test_exact_opt_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    inst = random_small_instance(rng, max_m=4, max_k=3, max_n=2, max_coins=3)
    assert exact_opt(inst) == pytest.approx(brute_force_opt(inst), abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 2**31))
def test_lp_upper_bounds_opt(seed):
    inst = random_small_instance(np.random.default_rng(seed))
    assert solve_lp(build_lp(inst)).value >= exact_opt(inst) - 1e-6


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_opt_beats_greedy(seed):
    inst = random_small_instance(np.random.default_rng(seed))
    assert exact_opt(inst) >= exact_performance(inst, Greedy) - 1e-9


def test_scenario_weights_sum_to_one():
    inst = generate(GeneratorParams("AppendixExample2"))
    assert math.fsum(s.weight for s in enumerate_scenarios(inst)) == pytest.approx(1.0, abs=1e-12)


def test_scope_errors():
    with pytest.raises(ScopeError):
        exact_opt(generate(GeneratorParams("StochasticRewards", n=2, c=2, m=3, seed=0)))
    many = generate(GeneratorParams("BMatching", n=2, c=20, m=40, seed=0, arrivals="stochastic",
                                    replenishment="stochastic", repl_ratio=1.0, M=1.0))
    with pytest.raises(ScopeError):
        exact_opt(many)
    with pytest.raises(ScopeError):
        exact_opt(generate(GeneratorParams("BMatching", n=3, c=40, seed=0, replenishment="none")), max_states=100)


# -- attenuated rounding ----------------------------------------------------------

def test_zero_solution_always_skips():
    inst = one_request()
    sol = LpSolution(0.0, np.zeros(2), build_lp(inst).keys)
    perf = expected_performance(inst, lambda: AttenuatedRounding(inst, sol, 0.5), trials=50)
    assert perf.mean == 0.0


def test_one_request_rounding():
    inst = one_request()
    policy = AttenuatedRounding(inst, solve_lp(build_lp(inst)), 0.5)
    assert policy.probabilities(1, "z") == [("k", pytest.approx(2 / 3, abs=1e-15))]
    perf = expected_performance(inst, lambda: AttenuatedRounding(inst, solve_lp(build_lp(inst)), 0.5), trials=4000)
    assert abs(perf.mean - 2 / 3) <= 4 * perf.se


def test_rounding_rejects_bad_inputs():
    inst = one_request()
    sol = solve_lp(build_lp(inst))
    with pytest.raises(ValueError):
        AttenuatedRounding(inst, sol, 1.0)
    over = LpSolution(2.0, np.array([2.0, 2.0]), sol.keys)
    with pytest.raises(ValueError, match="sum"):
        AttenuatedRounding(inst, over, 0.5)


def test_default_delta():
    assert default_delta(100, 2) == math.sqrt(3 * math.log(200) / 100)
    with pytest.raises(ScopeError):
        default_delta(1, 1)


# -- Chernoff check -----------------------------------------------------------------

def test_binomial_tail_matches_convolution():
    assert exact_tail([(1.0, 0.45)] * 100, 50.0) == pytest.approx(binomial_tail(100, 0.45, 50), abs=1e-12)


@pytest.mark.parametrize("n, p, k", [(10, 0.3, 4), (25, 0.5, 13), (40, 0.1, 0)])
def test_binomial_tail_against_scipy(n, p, k):
    from scipy.stats import binom

    assert binomial_tail(n, p, k) == pytest.approx(float(binom.sf(k - 1, n, p)), abs=1e-12)


def test_all_zero_probabilities():
    r = chernoff_check([(1.0, 0.0)] * 10, 5.0, 0.5, samples=1000)
    assert r.mc_tail == 0.0 and r.exact_tail == 0.0 and r.passed


def test_binomial_example():
    r = chernoff_check([(1.0, 0.45)] * 100, 50.0, 1 / 9, samples=20_000)
    assert r.bound == pytest.approx(math.exp(-50 / 243), rel=1e-15)
    assert r.passed and r.exact_tail == pytest.approx(binomial_tail(100, 0.45, 50), abs=1e-12)


def test_halves_example():
    r = chernoff_check([(0.5, 0.4)] * 200, 48.0, 0.2, samples=20_000)
    assert r.bound == pytest.approx(math.exp(-0.64), rel=1e-15)
    assert r.passed


def test_chernoff_preconditions():
    with pytest.raises(ValueError, match="precondition"):
        chernoff_check([(1.0, 0.5)] * 100, 50.0, 0.5)
    with pytest.raises(ValueError):
        chernoff_check([(1.5, 0.1)], 5.0, 0.5)
    with pytest.raises(ValueError):
        chernoff_check([(1.0, 0.1)], 5.0, 0.0)
