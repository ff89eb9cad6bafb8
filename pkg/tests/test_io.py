import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from replenish.algorithms import Greedy
from replenish.batching import BatchAdversarial, adversarial_batches, build_batched_instance
from replenish.engine import run
from replenish.instances import FAMILIES, GeneratorParams, generate
from replenish.io import instance_to_dict, load_instance, serialize
from replenish.model import InstanceError

MINIMAL = {
    "resources": [{"id": "r", "initial_inventory": 1}],
    "arrivals": {"mode": "adversarial", "horizon": 1, "types": ["1"]},
    "actions": [{"id": "k0", "uses": {}, "rewards": {}}],
    "replenishment": {"mode": "adversarial", "bound_M": 0, "fixed": []},
}


def test_minimal_instance_loads():
    inst = load_instance(json.dumps(MINIMAL))
    assert inst.c_min == 1 and inst.d == 0 and inst.trivial == "k0"


def test_adversarial_types_default_to_request_index():
    data = json.loads(json.dumps(MINIMAL))
    data["arrivals"] = {"mode": "adversarial", "horizon": 3}
    assert load_instance(json.dumps(data)).arrivals.types == ("1", "2", "3")


def test_example_one_round_trip():
    inst = generate(GeneratorParams("AppendixExample1"))
    again = load_instance(serialize(inst))
    assert again == inst and again.c_min == 100 and again.d == 2


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.update(extra=1), "schema"),
    (lambda d: d["resources"][0].update(colour="red"), "schema"),
    (lambda d: d["resources"][0].pop("initial_inventory"), "schema"),
    (lambda d: d["resources"][0].update(initial_inventory="3"), "schema"),
    (lambda d: d["actions"][0].update(uses={"zz": {"peak": 1}}), "dangling"),
    (lambda d: d["actions"][0].update(rewards={"r1": {"kind": "det", "value": 1}}), "resource/type"),
])
def test_bad_documents_are_rejected(mutate, message):
    data = json.loads(json.dumps(MINIMAL))
    mutate(data)
    with pytest.raises(InstanceError, match=message):
        load_instance(json.dumps(data))


def test_unnormalized_type_distribution():
    data = json.loads(json.dumps(MINIMAL))
    data["arrivals"] = {"mode": "stochastic", "horizon": 1, "types": ["a", "b"], "type_probs": [[0.5, 0.4]]}
    data["replenishment"] = {"mode": "stochastic", "bound_M": 0, "entries": []}
    with pytest.raises(InstanceError, match="type distribution not normalized"):
        load_instance(json.dumps(data))


def test_malformed_json():
    with pytest.raises(InstanceError, match="malformed"):
        load_instance("{")


@given(st.sampled_from([f for f in FAMILIES if not f.startswith(("Hard", "Appendix"))]),
       st.integers(0, 10_000), st.sampled_from(["adversarial", "stochastic", "none"]))
def test_generated_instances_round_trip(family, seed, repl):
    params = GeneratorParams(family, n=3, c=5, d=2, seed=seed, replenishment=repl, M=2.0,
                             arrivals="stochastic" if repl == "stochastic" else "adversarial")
    inst = generate(params)
    text = serialize(inst)
    assert load_instance(text) == inst
    assert serialize(load_instance(text)) == text


def test_batched_instance_round_trip():
    inst = generate(GeneratorParams("AppendixExample1"))
    hb = build_batched_instance(inst, adversarial_batches(inst))
    again = load_instance(serialize(hb))
    assert again == hb
    assert [r.parent for r in again.resources] == [None, None, "B", "A"]
    doc = instance_to_dict(hb)
    assert doc["actions"][1]["id"] == "AB@A@2"
    assert doc["actions"][1]["origin"] == {"action": "AB", "resource": "A@2"}
    assert doc["actions"][1]["activation"] == 2


def test_wrapper_built_instance_matches_offline_build():
    inst = generate(GeneratorParams("AppendixExample1"))
    wrapper = BatchAdversarial(Greedy())
    run(inst, wrapper)
    assert serialize(wrapper.batched_instance) == serialize(
        build_batched_instance(inst, adversarial_batches(inst)))
