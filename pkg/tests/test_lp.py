import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import vertex_lp_max
from replenish.batching import (
    adversarial_batches,
    batched_process,
    build_batched_instance,
    build_batched_instance_stochastic,
)
from replenish.instances import GeneratorParams, generate
from replenish.lp import (
    LpError,
    build_lp,
    is_finite_model,
    lp_value,
    max_violation,
    simplex_max,
    solve_lp,
    transfer_point,
)
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


def one_request():
    act = Action("k", {"r": ConsumptionProfile(1.0)}, {(WILDCARD, "z"): RewardSpec("det", 1.0)})
    return Instance((Resource("r", 1.0),), Arrivals("adversarial", 1, ("z",)), (act, Action("k0")),
                    Replenishment("adversarial", 1.0))


def test_trivial_only_instance_has_zero_lp():
    inst = Instance((Resource("r", 3.0),), Arrivals("adversarial", 2, ("z", "z")), (Action("k0"),),
                    Replenishment("adversarial", 1.0))
    assert lp_value(inst) == 0.0


def test_one_request_lp():
    sol = solve_lp(build_lp(one_request()))
    assert sol.value == 1.0
    assert sol.primal() == {(1, "k", "z"): 1.0}
    assert sol.to_csv() == "j,k,z,x\n1,k,z,1.0\n"


def test_lambda_bounded_by_constant():
    x, value, _ = simplex_max(np.array([1.0]), np.array([[1.0]]), np.array([3.0]))
    assert value == 3.0 and x[0] == 3.0


@pytest.mark.parametrize("gamma, c", [(1.0, 4), (0.5, 4), (1.0, 8), (0.5, 8)])
def test_hard_instance_lp(gamma, c):
    inst = generate(GeneratorParams("HardGS", c=c, gamma=gamma))
    assert lp_value(inst) == pytest.approx((1 + 1.5 * gamma) * c, abs=1e-9)


def test_lp_rows_are_finite_and_nonnegative():
    model = build_lp(generate(GeneratorParams("ReusableMatching", n=3, c=5, seed=1)))
    assert is_finite_model(model)
    body = model.A[:, 1:]
    caps = [n for n, lab in enumerate(model.row_labels) if lab[0] != "reward"]
    assert (body[caps].toarray() >= 0).all() and (model.b >= 0).all()


@st.composite
def small_lp(draw):
    n = draw(st.integers(1, 4))
    rows = draw(st.integers(1, 3))
    A = np.array(draw(st.lists(st.lists(st.integers(0, 5), min_size=n, max_size=n), min_size=rows, max_size=rows)),
                 dtype=float)
    A = np.vstack([A, np.ones(n)])  # keeps the region bounded
    b = np.array(draw(st.lists(st.integers(0, 9), min_size=rows + 1, max_size=rows + 1)), dtype=float)
    c = np.array(draw(st.lists(st.integers(-3, 6), min_size=n, max_size=n)), dtype=float)
    return c, A, b


@given(small_lp())
def test_simplex_matches_vertex_enumeration(lp):
    c, A, b = lp
    x, value, _ = simplex_max(c, A, b)
    assert value == pytest.approx(vertex_lp_max(c, A, b), abs=1e-6)
    assert np.all(A @ x <= b + 1e-9) and np.all(x >= 0)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.sampled_from(["BMatching", "Adwords", "ReusableMatching", "Hypergraph"]))
def test_simplex_matches_highs(seed, family):
    inst = generate(GeneratorParams(family, n=3, c=4, m=6, d=2, seed=seed, replenishment="adversarial",
                                    repl_ratio=0.5, M=1.0))
    model = build_lp(inst)
    a = solve_lp(model, method="simplex")
    b = solve_lp(model, method="highs")
    assert a.value == pytest.approx(b.value, abs=1e-7)
    assert max_violation(model, a.x) <= 1e-9


def test_simplex_is_deterministic():
    model = build_lp(generate(GeneratorParams("Adwords", n=3, c=6, seed=4)))
    a, b = solve_lp(model, method="simplex"), solve_lp(model, method="simplex")
    assert a.iterations == b.iterations and np.array_equal(a.x, b.x)


def test_variable_cap():
    with pytest.raises(LpError, match="variables"):
        build_lp(generate(GeneratorParams("BMatching", n=3, c=4, seed=0)), var_cap=3)


def test_pivot_cap():
    model = build_lp(generate(GeneratorParams("BMatching", n=3, c=4, seed=0)))
    with pytest.raises(LpError, match="pivot cap"):
        simplex_max(model.objective, model.A.toarray(), model.b, max_pivots=1)


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_lp_monotone_in_capacity(seed, extra):
    inst = generate(GeneratorParams("BMatching", n=3, c=4, seed=seed))
    more = generate(GeneratorParams("BMatching", n=3, c=4 + extra, seed=seed))
    assert lp_value(more) >= lp_value(inst) - 1e-9


@settings(max_examples=25)
@given(st.integers(0, 10_000), st.floats(0.0, 2.0))
def test_lp_monotone_in_replenishment(seed, bump):
    inst = generate(GeneratorParams("Adwords", n=3, c=4, seed=seed, replenishment="adversarial",
                                    repl_ratio=0.5, M=1.0))
    base = inst.replenishment_mean_matrix()
    bumped = {i: [v + (bump if j == 2 else 0.0) for j, v in enumerate(row)] for i, row in base.items()}
    assert lp_value(inst, bumped) >= lp_value(inst, base) - 1e-9
    assert lp_value(inst, base) == pytest.approx(lp_value(inst), abs=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 10_000), st.sampled_from(["BMatching", "Adwords"]))
def test_batched_lp_lower_bound_adversarial(seed, family):
    inst = generate(GeneratorParams(family, n=2, c=9, m=12, seed=seed, replenishment="adversarial",
                                    repl_ratio=1.0, M=2.0))
    hb = build_batched_instance(inst, adversarial_batches(inst))
    assert lp_value(hb) >= (1 - 1 / math.sqrt(inst.c_min)) * lp_value(inst) - 1e-9


def scaled_point_gap(inst, factor, batches):
    """Violation of the factor-scaled optimum of LP(H) under the batched replenishment."""
    model = build_lp(inst)
    sol = solve_lp(model, method="highs")
    override = batched_process(batches, inst.roots, inst.horizon)
    target = build_lp(inst, override)
    x = transfer_point(model, sol, target) * factor
    return max_violation(target, x)


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_scaled_point_feasible_adversarial(seed):
    inst = generate(GeneratorParams("Adwords", n=3, c=16, m=24, seed=seed, replenishment="adversarial",
                                    repl_ratio=1.0, M=3.0))
    assert scaled_point_gap(inst, 1 - 1 / math.sqrt(16), adversarial_batches(inst)) <= 1e-9


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_scaled_point_feasible_stochastic(seed):
    inst = generate(GeneratorParams("BMatching", n=2, c=1000, m=60, seed=seed, arrivals="stochastic",
                                    replenishment="stochastic", repl_ratio=1.0, M=40.0))
    hb = build_batched_instance_stochastic(inst)
    assert 0 < hb.epsilon < 1
    assert scaled_point_gap(inst, 1 - hb.epsilon, hb.batches) <= 1e-9
