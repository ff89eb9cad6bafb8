"""Instance data model for online allocation with exogenous replenishment.

An :class:`Instance` bundles resources, the arrival model, the action set with
its consumption and reward laws, and the replenishment process.  Everything
here is immutable; the engine and the batching wrappers build new instances
rather than mutating old ones.

Consumption of resource ``i`` by action ``k`` chosen for request ``j`` is
``peak * X * 1[l < j + D]`` at every later request ``l``, where ``X`` is a
Bernoulli(success_prob) coin and ``D`` a release delay (``inf`` for
non-reusable resources).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Tuple

WILDCARD = "*"
PROB_TOL = 1e-12


class InstanceError(ValueError):
    """Raised when instance data violates the model's invariants."""


@dataclass(frozen=True)
class Release:
    """Distribution of the number of arrivals after which a held unit returns.

    ``kind`` is ``"inf"`` (never returned), ``"det"`` (exactly ``steps``) or
    ``"geom"`` (geometric on {1, 2, ...} with success probability ``p``).
    """

    kind: str = "inf"
    steps: Optional[int] = None
    p: Optional[float] = None

    def __post_init__(self):
        if self.kind == "inf":
            return
        if self.kind == "det":
            if self.steps is None or int(self.steps) != self.steps or self.steps < 1:
                raise InstanceError(f"deterministic release needs integer steps >= 1, got {self.steps!r}")
        elif self.kind == "geom":
            if self.p is None or not (0.0 < self.p <= 1.0):
                raise InstanceError(f"geometric release needs p in (0, 1], got {self.p!r}")
        else:
            raise InstanceError(f"unknown release kind {self.kind!r}")

    @property
    def reusable(self) -> bool:
        return self.kind != "inf"

    @property
    def deterministic(self) -> bool:
        return self.kind in ("inf", "det")

    def survival(self, s: int) -> float:
        """P(D > s) for an integer lag ``s >= 0``."""
        if self.kind == "inf":
            return 1.0
        if self.kind == "det":
            return 1.0 if s < self.steps else 0.0
        return (1.0 - self.p) ** s

    def sample(self, v: float) -> float:
        """Inverse-CDF draw from a uniform ``v`` in [0, 1)."""
        if self.kind == "inf":
            return math.inf
        if self.kind == "det":
            return self.steps
        if self.p >= 1.0:
            return 1
        return max(1, math.ceil(math.log1p(-v) / math.log1p(-self.p)))

    def to_json(self) -> dict:
        if self.kind == "inf":
            return {"kind": "inf"}
        if self.kind == "det":
            return {"kind": "det", "steps": self.steps}
        return {"kind": "geom", "p": self.p}


NON_REUSABLE = Release()


@dataclass(frozen=True)
class ConsumptionProfile:
    peak: float
    success_prob: float = 1.0
    release: Release = NON_REUSABLE

    def __post_init__(self):
        if not (0.0 <= self.peak <= 1.0):
            raise InstanceError(f"consumption peak must lie in [0, 1], got {self.peak}")
        if not (0.0 <= self.success_prob <= 1.0):
            raise InstanceError(f"success_prob must lie in [0, 1], got {self.success_prob}")

    def expected(self, lag: int) -> float:
        return self.peak * self.success_prob * self.release.survival(lag)

    @property
    def deterministic(self) -> bool:
        return self.success_prob in (0.0, 1.0) and self.release.deterministic


@dataclass(frozen=True)
class RewardSpec:
    """``det`` pays ``value``; ``coupled`` pays ``value * X`` with the decision's coin."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in ("det", "coupled"):
            raise InstanceError(f"unknown reward kind {self.kind!r}")
        if self.value < 0 or not math.isfinite(self.value):
            raise InstanceError(f"rewards must be finite and nonnegative, got {self.value}")


@dataclass(frozen=True)
class Resource:
    id: str
    initial_inventory: float
    parent: Optional[str] = None
    created_at: Optional[int] = None

    @property
    def batched(self) -> bool:
        return self.parent is not None


@dataclass(frozen=True)
class Action:
    """An action ``k``: the resources it uses and what it pays.

    ``rewards`` maps ``(resource_id, type_id)`` to a :class:`RewardSpec`; either
    side may be ``"*"``.  A resource wildcard credits every root resource.
    ``coin`` selects how the per-resource Bernoulli outcomes are coupled: with
    ``"shared"`` one uniform ``U`` drives ``X_i = 1[U < p_i]``; with
    ``"exclusive"`` the resources occupy disjoint segments of [0, 1) in the
    order of ``uses`` (at most one succeeds, as in a customer choice).
    """

    id: str
    uses: Dict[str, ConsumptionProfile] = field(default_factory=dict)
    rewards: Dict[Tuple[str, str], RewardSpec] = field(default_factory=dict)
    coin: str = "shared"
    original: Optional[str] = None
    substituted: Optional[str] = None
    activation: int = 1

    @property
    def trivial(self) -> bool:
        return not self.uses and not self.rewards

    @property
    def root(self) -> str:
        return self.original or self.id

    def any_success_prob(self) -> float:
        probs = [p.success_prob for p in self.uses.values()]
        if not probs:
            return 1.0
        if self.coin == "exclusive":
            return min(1.0, sum(probs))
        return max(probs)

    def coin_prob(self, rid: str) -> float:
        """Success probability of the coin a coupled reward keyed on ``rid`` uses."""
        if rid in self.uses:
            return self.uses[rid].success_prob
        return self.any_success_prob()


@dataclass(frozen=True)
class Arrivals:
    """Arrival model.

    Adversarial mode: ``types`` is the realized type sequence (one per request).
    Stochastic mode: ``types`` is the type set Z and ``type_probs[j-1][z]`` is
    ``p_{jz}``.
    """

    mode: str
    horizon: int
    types: Tuple[str, ...]
    type_probs: Optional[Tuple[Tuple[float, ...], ...]] = None

    @property
    def stochastic(self) -> bool:
        return self.mode == "stochastic"

    def type_set(self) -> List[str]:
        if self.stochastic:
            return list(self.types)
        return list(dict.fromkeys(self.types))

    def support(self, j: int) -> List[Tuple[str, float]]:
        """Types request ``j`` can take, with their probabilities (p > 0 only)."""
        if not self.stochastic:
            return [(self.types[j - 1], 1.0)]
        return [(z, p) for z, p in zip(self.types, self.type_probs[j - 1]) if p > 0]

    def prob(self, j: int, z: str) -> float:
        if not self.stochastic:
            return 1.0 if self.types[j - 1] == z else 0.0
        try:
            return self.type_probs[j - 1][self.types.index(z)]
        except ValueError:
            return 0.0


@dataclass(frozen=True)
class Replenishment:
    """Exogenous replenishment ``zeta_i(j)``.

    Adversarial mode stores fixed amounts; stochastic mode stores two-point
    laws on {0, w} with mean q.  Pairs not listed replenish nothing.
    """

    mode: str
    bound_M: float
    fixed: Dict[Tuple[str, int], float] = field(default_factory=dict)
    entries: Dict[Tuple[str, int], Tuple[float, float]] = field(default_factory=dict)

    @property
    def stochastic(self) -> bool:
        return self.mode == "stochastic"

    def mean(self, i: str, j: int) -> float:
        if self.stochastic:
            wq = self.entries.get((i, j))
            return wq[1] if wq else 0.0
        return self.fixed.get((i, j), 0.0)

    def coins(self) -> List[Tuple[str, int, float, float]]:
        """Stochastic entries with genuine randomness (0 < q < w), sorted by (i, j)."""
        return [(i, j, w, q) for (i, j), (w, q) in sorted(self.entries.items(), key=_entry_key)
                if 0.0 < q < w]

    def is_zero(self) -> bool:
        if self.stochastic:
            return all(q == 0 for _, q in self.entries.values())
        return all(a == 0 for a in self.fixed.values())

    def empty_like(self) -> "Replenishment":
        return Replenishment(mode=self.mode, bound_M=self.bound_M)


def _entry_key(item):
    (i, j), _ = item
    return (j, i)


@dataclass(frozen=True)
class Instance:
    resources: Tuple[Resource, ...]
    arrivals: Arrivals
    actions: Tuple[Action, ...]
    replenishment: Replenishment
    name: str = "instance"

    def __post_init__(self):
        validate(self)

    # -- lookups -------------------------------------------------------------
    @cached_property
    def resource_map(self) -> Dict[str, Resource]:
        return {r.id: r for r in self.resources}

    @cached_property
    def action_map(self) -> Dict[str, Action]:
        return {a.id: a for a in self.actions}

    @cached_property
    def roots(self) -> List[str]:
        """Resources carrying an objective: the original (non-batched) ones."""
        return [r.id for r in self.resources if not r.batched]

    @cached_property
    def trivial(self) -> str:
        ids = [a.id for a in self.actions if a.trivial]
        return "k0" if "k0" in ids else ids[0]

    @property
    def horizon(self) -> int:
        return self.arrivals.horizon

    @cached_property
    def c_min(self) -> float:
        return min(self.resource_map[r].initial_inventory for r in self.roots)

    @cached_property
    def d(self) -> int:
        return max((len(a.uses) for a in self.actions), default=0)

    def root_of(self, rid: str) -> str:
        res = self.resource_map[rid]
        while res.parent is not None:
            res = self.resource_map[res.parent]
        return res.id

    @cached_property
    def root_index(self) -> Dict[str, str]:
        return {r.id: self.root_of(r.id) for r in self.resources}

    # -- reward tables -------------------------------------------------------
    @cached_property
    def _reward_table(self) -> Dict[str, Dict[str, Dict[str, float]]]:
        """action -> type (or "*") -> root -> expected reward, before activation."""
        roots = self.roots
        rindex = self.root_index
        table: Dict[str, Dict[str, Dict[str, float]]] = {}
        for a in self.actions:
            per_type: Dict[str, Dict[str, float]] = {}
            for (rid, z), spec in a.rewards.items():
                value = spec.value if spec.kind == "det" else spec.value * a.coin_prob(rid)
                if value == 0:
                    continue
                bucket = per_type.setdefault(z, {})
                targets = roots if rid == WILDCARD else [rindex[rid]]
                for t in targets:
                    bucket[t] = bucket.get(t, 0.0) + value
            table[a.id] = per_type
        return table

    def objective_rewards(self, k: str, j: int, z: str) -> Dict[str, float]:
        """Expected reward credited to each root objective for action ``k`` on (j, z)."""
        action = self.action_map[k]
        if j < action.activation:
            return {}
        per_type = self._reward_table[k]
        exact = per_type.get(z)
        wild = per_type.get(WILDCARD)
        if wild is None:
            return dict(exact) if exact else {}
        out = dict(wild)
        if exact:
            for t, v in exact.items():
                out[t] = out.get(t, 0.0) + v
        return out

    def total_reward(self, k: str, j: int, z: str) -> float:
        return sum(self.objective_rewards(k, j, z).values())

    @cached_property
    def _rewarding_by_type(self) -> Dict[str, List[Tuple[Action, float]]]:
        amap = self.action_map
        wild: Dict[str, float] = {}
        specific: Dict[str, Dict[str, float]] = {}
        for a in self.actions:
            for z, bucket in self._reward_table[a.id].items():
                total = sum(bucket.values())
                if z == WILDCARD:
                    wild[a.id] = total
                else:
                    specific.setdefault(z, {})[a.id] = total
        out: Dict[str, List[Tuple[Action, float]]] = {}
        for z in self.arrivals.type_set():
            merged = dict(wild)
            for k, v in specific.get(z, {}).items():
                merged[k] = merged.get(k, 0.0) + v
            rows = [(amap[k], v) for k, v in merged.items() if v > 0]
            rows.sort(key=lambda row: (-row[1], row[0].id))
            out[z] = rows
        return out

    def rewarding_actions(self, j: int, z: str) -> List[Tuple[Action, float]]:
        """Active actions with positive expected reward on (j, z), best first then by id."""
        rows = self._rewarding_by_type.get(z, [])
        return [(a, r) for a, r in rows if a.activation <= j]

    def replenishment_mean_matrix(self) -> Dict[str, List[float]]:
        m = self.horizon
        rep = self.replenishment
        return {i: [rep.mean(i, j) for j in range(1, m + 1)] for i in self.roots}

    @property
    def deterministic(self) -> bool:
        """True when consumption, releases and rewards carry no randomness."""
        return all(p.deterministic for a in self.actions for p in a.uses.values())


def expected_consumption(instance: Instance, i: str, j: int, k: str, z: str, l: int) -> float:
    """``a_{ijkz}(l)``: expected amount of ``i`` held at request ``l`` by (j, k, z)."""
    _check_ids(instance, i=i, j=j, k=k, z=z)
    if l < j or l > instance.horizon:
        raise InstanceError(f"need j <= l <= m, got j={j}, l={l}")
    profile = instance.action_map[k].uses.get(i)
    if profile is None:
        return 0.0
    return profile.expected(l - j)


def expected_reward(instance: Instance, i: str, j: int, k: str, z: str) -> float:
    """``r_{ijkz}``: expected reward credited to resource ``i``.

    Resource wildcards credit root resources only; batched resources receive
    only rewards keyed on them explicitly.
    """
    _check_ids(instance, i=i, j=j, k=k, z=z)
    action = instance.action_map[k]
    if j < action.activation:
        return 0.0
    is_root = instance.resource_map[i].parent is None
    total = 0.0
    for (rid, zz), spec in action.rewards.items():
        if zz not in (z, WILDCARD):
            continue
        if rid == i or (rid == WILDCARD and is_root):
            p = 1.0 if spec.kind == "det" else action.coin_prob(rid)
            total += spec.value * p
    return total


def _check_ids(instance: Instance, i=None, j=None, k=None, z=None):
    if i is not None and i not in instance.resource_map:
        raise InstanceError(f"unknown resource {i!r}")
    if k is not None and k not in instance.action_map:
        raise InstanceError(f"unknown action {k!r}")
    if j is not None and not (1 <= j <= instance.horizon):
        raise InstanceError(f"request index {j} outside 1..{instance.horizon}")
    if z is not None and z not in instance.arrivals.type_set():
        raise InstanceError(f"unknown request type {z!r}")


def _check_id_text(kind: str, ident: str):
    if not isinstance(ident, str) or not ident or "/" in ident or ident == WILDCARD:
        raise InstanceError(f"invalid {kind} id {ident!r}")


def validate(inst: Instance) -> None:
    """Check every structural invariant; raises :class:`InstanceError`."""
    rids = [r.id for r in inst.resources]
    if len(set(rids)) != len(rids):
        raise InstanceError("duplicate resource id")
    if not rids:
        raise InstanceError("instance needs at least one resource")
    known = set(rids)
    for r in inst.resources:
        _check_id_text("resource", r.id)
        if not (r.initial_inventory >= 0) or not math.isfinite(r.initial_inventory):
            raise InstanceError(f"initial_inventory of {r.id!r} must be finite and >= 0")
        if r.parent is not None and r.parent not in known:
            raise InstanceError(f"dangling id: parent {r.parent!r} of {r.id!r}")
    if not any(r.parent is None for r in inst.resources):
        raise InstanceError("instance needs at least one original resource")

    arr = inst.arrivals
    if arr.mode not in ("adversarial", "stochastic"):
        raise InstanceError(f"unknown arrival mode {arr.mode!r}")
    if arr.horizon < 1:
        raise InstanceError("horizon must be >= 1")
    for z in arr.types:
        _check_id_text("type", z)
    if arr.stochastic:
        if len(set(arr.types)) != len(arr.types):
            raise InstanceError("duplicate request type")
        if arr.type_probs is None or len(arr.type_probs) != arr.horizon:
            raise InstanceError("stochastic arrivals need one type distribution per request")
        for j, row in enumerate(arr.type_probs, start=1):
            if len(row) != len(arr.types) or any(p < 0 for p in row):
                raise InstanceError(f"bad type distribution for request {j}")
            if abs(math.fsum(row) - 1.0) > PROB_TOL:
                raise InstanceError(f"type distribution not normalized at request {j}")
    else:
        if arr.type_probs is not None:
            raise InstanceError("adversarial arrivals take no type_probs")
        if len(arr.types) != arr.horizon:
            raise InstanceError("adversarial arrivals need one type per request")
    types = set(arr.type_set())

    aids = [a.id for a in inst.actions]
    if len(set(aids)) != len(aids):
        raise InstanceError("duplicate action id")
    for a in inst.actions:
        _check_id_text("action", a.id)
        if a.coin not in ("shared", "exclusive"):
            raise InstanceError(f"unknown coin mode {a.coin!r}")
        for rid in a.uses:
            if rid not in known:
                raise InstanceError(f"dangling id: action {a.id!r} uses {rid!r}")
        if a.coin == "exclusive" and sum(p.success_prob for p in a.uses.values()) > 1 + PROB_TOL:
            raise InstanceError(f"exclusive action {a.id!r} has success probabilities summing above 1")
        for (rid, z), spec in a.rewards.items():
            if rid != WILDCARD and rid not in known:
                raise InstanceError(f"dangling id: reward key {rid}/{z} of {a.id!r}")
            if z != WILDCARD and z not in types:
                raise InstanceError(f"dangling id: reward type {z!r} of {a.id!r}")
            if spec.kind == "coupled" and not a.uses:
                raise InstanceError(f"coupled reward on {a.id!r}, which uses no resource")
        if a.activation < 1:
            raise InstanceError("activation index must be >= 1")
    if not any(a.trivial for a in inst.actions):
        raise InstanceError("instance needs a trivial action (no uses, no rewards)")

    rep = inst.replenishment
    if rep.mode not in ("adversarial", "stochastic"):
        raise InstanceError(f"unknown replenishment mode {rep.mode!r}")
    if rep.bound_M < 0:
        raise InstanceError("bound_M must be >= 0")
    if rep.stochastic and rep.fixed:
        raise InstanceError("stochastic replenishment takes entries, not fixed amounts")
    if not rep.stochastic and rep.entries:
        raise InstanceError("adversarial replenishment takes fixed amounts, not entries")
    for (i, j), amount in rep.fixed.items():
        _check_rep_target(inst, i, j)
        if amount < 0:
            raise InstanceError("replenishment amounts must be >= 0")
    for (i, j), (w, q) in rep.entries.items():
        _check_rep_target(inst, i, j)
        if not (0 <= q <= w <= rep.bound_M):
            raise InstanceError(f"need 0 <= q <= w <= M for replenishment entry ({i}, {j})")


def _check_rep_target(inst: Instance, i: str, j: int):
    res = inst.resource_map.get(i)
    if res is None:
        raise InstanceError(f"dangling id: replenishment of {i!r}")
    if res.batched:
        raise InstanceError("only original resources are replenished")
    if not (1 <= j <= inst.horizon):
        raise InstanceError(f"replenishment index {j} outside 1..{inst.horizon}")
