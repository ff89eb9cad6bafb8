"""JSON (de)serialization of instances.

The on-disk format is validated against :data:`INSTANCE_SCHEMA` before any
model invariant is checked, so structural mistakes (missing or unknown fields,
wrong types) are reported separately from semantic ones.
"""

from __future__ import annotations

import json
import math
from typing import Any, Dict

import jsonschema

from .model import (
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

_number = {"type": "number"}
_nonneg = {"type": "number", "minimum": 0}
_index = {"type": "integer", "minimum": 1}

_release = {
    "oneOf": [
        {"type": "object", "properties": {"kind": {"const": "inf"}},
         "required": ["kind"], "additionalProperties": False},
        {"type": "object", "properties": {"kind": {"const": "det"}, "steps": _index},
         "required": ["kind", "steps"], "additionalProperties": False},
        {"type": "object", "properties": {"kind": {"const": "geom"}, "p": _number},
         "required": ["kind", "p"], "additionalProperties": False},
    ]
}

INSTANCE_SCHEMA: Dict[str, Any] = {
    "type": "object",
    "properties": {
        "name": {"type": "string"},
        "resources": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string"},
                    "initial_inventory": _nonneg,
                    "origin": {
                        "type": "object",
                        "properties": {"parent": {"type": "string"}, "created_at": _index},
                        "required": ["parent", "created_at"],
                        "additionalProperties": False,
                    },
                },
                "required": ["id", "initial_inventory"],
                "additionalProperties": False,
            },
        },
        "arrivals": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["adversarial", "stochastic"]},
                "horizon": _index,
                "types": {"type": "array", "items": {"type": "string"}},
                "type_probs": {"type": "array", "items": {"type": "array", "items": _nonneg}},
            },
            "required": ["mode", "horizon"],
            "additionalProperties": False,
        },
        "actions": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "string"},
                    "uses": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "properties": {
                                "peak": _nonneg,
                                "success_prob": _nonneg,
                                "release": _release,
                            },
                            "required": ["peak"],
                            "additionalProperties": False,
                        },
                    },
                    "rewards": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "properties": {
                                "kind": {"enum": ["det", "coupled"]},
                                "value": _nonneg,
                            },
                            "required": ["kind", "value"],
                            "additionalProperties": False,
                        },
                    },
                    "coin": {"enum": ["shared", "exclusive"]},
                    "origin": {
                        "type": "object",
                        "properties": {"action": {"type": "string"}, "resource": {"type": "string"}},
                        "required": ["action", "resource"],
                        "additionalProperties": False,
                    },
                    "activation": _index,
                },
                "required": ["id", "uses", "rewards"],
                "additionalProperties": False,
            },
        },
        "replenishment": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["adversarial", "stochastic"]},
                "bound_M": _nonneg,
                "entries": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"i": {"type": "string"}, "j": _index, "w": _nonneg, "q": _nonneg},
                        "required": ["i", "j", "w", "q"],
                        "additionalProperties": False,
                    },
                },
                "fixed": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {"i": {"type": "string"}, "j": _index, "amount": _nonneg},
                        "required": ["i", "j", "amount"],
                        "additionalProperties": False,
                    },
                },
            },
            "required": ["mode", "bound_M"],
            "additionalProperties": False,
        },
    },
    "required": ["resources", "arrivals", "actions", "replenishment"],
    "additionalProperties": False,
}


def _split_key(key: str):
    parts = key.split("/")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise InstanceError(f"reward key {key!r} must look like 'resource/type'")
    return parts[0], parts[1]


def instance_from_dict(data: Dict[str, Any]) -> Instance:
    try:
        jsonschema.validate(data, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InstanceError(f"schema violation at {where}: {exc.message}") from None

    resources = []
    for r in data["resources"]:
        origin = r.get("origin")
        resources.append(Resource(
            id=r["id"],
            initial_inventory=float(r["initial_inventory"]),
            parent=origin["parent"] if origin else None,
            created_at=origin["created_at"] if origin else None,
        ))

    arr = data["arrivals"]
    m = arr["horizon"]
    if arr["mode"] == "stochastic":
        if "types" not in arr or "type_probs" not in arr:
            raise InstanceError("stochastic arrivals need types and type_probs")
        arrivals = Arrivals("stochastic", m, tuple(arr["types"]),
                            tuple(tuple(float(p) for p in row) for row in arr["type_probs"]))
    else:
        if "type_probs" in arr:
            raise InstanceError("adversarial arrivals take no type_probs")
        types = arr.get("types", [str(j) for j in range(1, m + 1)])
        arrivals = Arrivals("adversarial", m, tuple(types))

    actions = []
    for a in data["actions"]:
        uses = {}
        for rid, prof in a["uses"].items():
            rel = prof.get("release", {"kind": "inf"})
            uses[rid] = ConsumptionProfile(
                peak=float(prof["peak"]),
                success_prob=float(prof.get("success_prob", 1.0)),
                release=Release(rel["kind"], rel.get("steps"),
                                float(rel["p"]) if "p" in rel else None),
            )
        rewards = {_split_key(key): RewardSpec(spec["kind"], float(spec["value"]))
                   for key, spec in a["rewards"].items()}
        origin = a.get("origin")
        actions.append(Action(
            id=a["id"], uses=uses, rewards=rewards, coin=a.get("coin", "shared"),
            original=origin["action"] if origin else None,
            substituted=origin["resource"] if origin else None,
            activation=a.get("activation", 1),
        ))

    rep = data["replenishment"]
    fixed, entries = {}, {}
    for e in rep.get("fixed", []):
        key = (e["i"], e["j"])
        if key in fixed:
            raise InstanceError(f"duplicate replenishment entry {key}")
        fixed[key] = float(e["amount"])
    for e in rep.get("entries", []):
        key = (e["i"], e["j"])
        if key in entries:
            raise InstanceError(f"duplicate replenishment entry {key}")
        entries[key] = (float(e["w"]), float(e["q"]))
    replenishment = Replenishment(rep["mode"], float(rep["bound_M"]), fixed, entries)

    return Instance(tuple(resources), arrivals, tuple(actions), replenishment,
                    name=data.get("name", "instance"))


def load_instance(json_text: str) -> Instance:
    """Parse and validate an instance from JSON text."""
    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"malformed JSON: {exc}") from None
    return instance_from_dict(data)


def _num(x: float):
    if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
        return int(x)
    return x


def instance_to_dict(inst: Instance) -> Dict[str, Any]:
    resources = []
    for r in inst.resources:
        item = {"id": r.id, "initial_inventory": _num(r.initial_inventory)}
        if r.parent is not None:
            item["origin"] = {"parent": r.parent, "created_at": r.created_at}
        resources.append(item)

    arr = inst.arrivals
    arrivals = {"mode": arr.mode, "horizon": arr.horizon, "types": list(arr.types)}
    if arr.stochastic:
        arrivals["type_probs"] = [[_num(p) for p in row] for row in arr.type_probs]

    actions = []
    for a in inst.actions:
        uses = {}
        for rid, prof in a.uses.items():
            uses[rid] = {"peak": _num(prof.peak), "success_prob": _num(prof.success_prob),
                         "release": prof.release.to_json()}
        rewards = {f"{rid}/{z}": {"kind": spec.kind, "value": _num(spec.value)}
                   for (rid, z), spec in a.rewards.items()}
        item = {"id": a.id, "uses": uses, "rewards": rewards}
        if a.coin != "shared":
            item["coin"] = a.coin
        if a.original is not None:
            item["origin"] = {"action": a.original, "resource": a.substituted}
        if a.activation != 1:
            item["activation"] = a.activation
        actions.append(item)

    rep = inst.replenishment
    replenishment = {"mode": rep.mode, "bound_M": _num(rep.bound_M)}
    if rep.stochastic:
        replenishment["entries"] = [{"i": i, "j": j, "w": _num(w), "q": _num(q)}
                                    for (i, j), (w, q) in rep.entries.items()]
    else:
        replenishment["fixed"] = [{"i": i, "j": j, "amount": _num(v)}
                                  for (i, j), v in rep.fixed.items()]

    return {"name": inst.name, "resources": resources, "arrivals": arrivals,
            "actions": actions, "replenishment": replenishment}


def serialize(inst: Instance, indent=None) -> str:
    """Canonical JSON text; ``load_instance(serialize(h)) == h``."""
    return json.dumps(instance_to_dict(inst), indent=indent)
