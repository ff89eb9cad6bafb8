"""Batching transformations.

Replenishment is accumulated per resource until it reaches a threshold
``c_B``; the accumulated amount is then released as a brand-new resource
``"i@j"`` (parent ``i``, created at request ``j``) together with a copy of
every action that uses ``i``.  The base algorithm only ever sees instances
without replenishment, while the wrapper implements the original action that
the chosen copy stands for.

Two regimes are covered:

* adversarial replenishment: batches are formed online from observed amounts
  with ``c_B = sqrt(c_min)`` (:class:`BatchAdversarial`);
* stochastic replenishment: batches are formed up front from the fluid process
  ``(1 - eps) q`` with ``c_B = eps * c_min`` and checked against the realized
  replenishment at run time, falling back to the trivial action when the
  realized stock is short (:class:`BatchStochastic`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .engine import (
    FEAS_TOL,
    Choice,
    Context,
    InfeasibleActionError,
    InventoryLedger,
    OnlineAlgorithm,
    Outcome,
    success_flags,
)
from .model import Action, Instance, InstanceError, Replenishment, Resource


def batched_id(i: str, j: int) -> str:
    return f"{i}@{j}"


# ----------------------------------------------------------------------------
# Batched replenishment
# ----------------------------------------------------------------------------


@dataclass
class Batch:
    i: str
    j: int
    amount: object
    resource: str


@dataclass
class BatchState:
    """Online accumulator; amounts may be floats or exact ``Fraction`` values."""

    c_B: object
    pending: Dict[str, object] = field(default_factory=dict)
    batches: List[Batch] = field(default_factory=list)

    def step(self, i: str, j: int, amount) -> Tuple[object, Optional[str]]:
        """Add ``zeta_i(j)``; return the emitted batch amount and new resource id (or None)."""
        if amount < 0:
            raise InstanceError(f"negative replenishment {amount} for {i!r} at {j}")
        total = self.pending.get(i, 0) + amount
        if total > 0 and total >= self.c_B:
            rid = batched_id(i, j)
            self.batches.append(Batch(i, j, total, rid))
            self.pending[i] = 0 * total
            return total, rid
        self.pending[i] = total
        return 0 * total, None


def batch_schedule(process: Mapping[str, Sequence], c_B) -> List[Batch]:
    """Run the batching recursion over whole per-resource sequences.

    ``process[i][j-1]`` is the replenishment of ``i`` at request ``j``; the
    resources are visited in mapping order within each request.
    """
    state = BatchState(c_B)
    horizon = max((len(v) for v in process.values()), default=0)
    for j in range(1, horizon + 1):
        for i, seq in process.items():
            state.step(i, j, seq[j - 1])
    return state.batches


def batched_process(batches: Iterable[Batch], resources: Sequence[str], horizon: int) -> Dict[str, list]:
    """Dense per-resource sequences of emitted batch amounts (zeros elsewhere)."""
    out = {i: [0.0] * horizon for i in resources}
    for b in batches:
        out[b.i][b.j - 1] = b.amount
    return out


# ----------------------------------------------------------------------------
# Batched instances
# ----------------------------------------------------------------------------


def duplicate_action(action: Action, original: str, new_rid: str, j: int) -> Action:
    """Copy of ``action`` with ``new_rid`` substituted for ``original`` in uses and rewards."""
    uses = {(new_rid if rid == original else rid): prof for rid, prof in action.uses.items()}
    rewards = {((new_rid if rid == original else rid), z): spec for (rid, z), spec in action.rewards.items()}
    return Action(
        id=f"{action.id}@{new_rid}",
        uses=uses,
        rewards=rewards,
        coin=action.coin,
        original=action.root,
        substituted=new_rid,
        activation=max(action.activation, j),
    )


def duplicate_actions(actions: Sequence[Action], new_rid: str, original: str, j: int) -> List[Action]:
    """Each action using ``original`` is followed by its copy on ``new_rid``."""
    taken = {a.id for a in actions}
    out = []
    for a in actions:
        out.append(a)
        if original in a.uses:
            dup = duplicate_action(a, original, new_rid, j)
            if dup.id in taken:
                raise InstanceError(f"duplicate action id collision {dup.id!r}")
            out.append(dup)
    return out


def extend_instance(inst: Instance, new_batches: Sequence[Batch]) -> Instance:
    """Add batched resources (in order) and their duplicated actions."""
    if not new_batches:
        return inst
    resources = list(inst.resources)
    actions = list(inst.actions)
    known = {r.id for r in resources}
    for b in new_batches:
        if b.resource in known:
            raise InstanceError(f"batched resource id {b.resource!r} collides with an existing id")
        known.add(b.resource)
        resources.append(Resource(b.resource, float(b.amount), parent=b.i, created_at=b.j))
        actions = duplicate_actions(actions, b.resource, b.i, b.j)
    return Instance(tuple(resources), inst.arrivals, tuple(actions), inst.replenishment, name=inst.name)


def without_replenishment(inst: Instance, name: Optional[str] = None) -> Instance:
    return Instance(inst.resources, inst.arrivals, inst.actions,
                    inst.replenishment.empty_like(), name=name or inst.name)


def build_batched_instance(inst: Instance, batches: Sequence[Batch], name: Optional[str] = None) -> Instance:
    """Instance with zero replenishment carrying ``batches`` as starting inventory."""
    out = without_replenishment(inst)
    by_request: Dict[int, List[Batch]] = {}
    for b in batches:
        by_request.setdefault(b.j, []).append(b)
    for j in sorted(by_request):
        out = extend_instance(out, by_request[j])
    return Instance(out.resources, out.arrivals, out.actions, out.replenishment,
                    name=name or f"{inst.name}-batched")


def adversarial_threshold(inst: Instance) -> float:
    return math.sqrt(inst.c_min)


def adversarial_batches(inst: Instance, c_B: Optional[float] = None) -> List[Batch]:
    """Batches the online recursion would emit on a fixed replenishment matrix."""
    if inst.replenishment.stochastic:
        raise InstanceError("adversarial batching needs fixed replenishment")
    c_B = adversarial_threshold(inst) if c_B is None else c_B
    process = {i: [inst.replenishment.fixed.get((i, j), 0.0) for j in range(1, inst.horizon + 1)]
               for i in inst.roots}
    return batch_schedule(process, c_B)


def epsilon_for(M: float, c_min: float, d: int) -> float:
    """``min((3M/c_min * log(c_min d))^(1/3), 1)``."""
    if c_min * d <= 1:
        raise InstanceError("instance too small for ε formula: need c_min * d > 1")
    return min((3.0 * M / c_min * math.log(c_min * d)) ** (1.0 / 3.0), 1.0)


@dataclass(frozen=True)
class BatchedInstance:
    """The precomputed batched instance for stochastic replenishment."""

    source: Instance
    instance: Instance
    epsilon: float
    c_B: float
    batches: Tuple[Batch, ...]
    fluid: Dict[str, Tuple[float, ...]]

    def batched_prefix(self) -> Dict[str, np.ndarray]:
        """Cumulative batched replenishment per root, indexed by request (0 = before any)."""
        m = self.source.horizon
        dense = batched_process(self.batches, self.source.roots, m)
        return {i: np.concatenate([[0.0], np.cumsum(np.asarray(v, dtype=float))]) for i, v in dense.items()}


def build_batched_instance_stochastic(inst: Instance, epsilon: Optional[float] = None) -> BatchedInstance:
    """Fluid process, batches and batched instance, all computed before any arrival.

    ``epsilon`` overrides the formula value (useful for worked examples).
    """
    if not (inst.arrivals.stochastic and inst.replenishment.stochastic):
        raise InstanceError("stochastic batching needs stochastic arrivals and replenishment")
    if epsilon is None:
        epsilon = epsilon_for(inst.replenishment.bound_M, inst.c_min, max(inst.d, 1))
    if not (0 < epsilon <= 1):
        raise InstanceError("epsilon must lie in (0, 1]")
    c_B = epsilon * inst.c_min
    fluid = {i: tuple((1.0 - epsilon) * inst.replenishment.mean(i, j) for j in range(1, inst.horizon + 1))
             for i in inst.roots}
    batches = batch_schedule(fluid, c_B)
    hb = build_batched_instance(inst, batches)
    return BatchedInstance(inst, hb, epsilon, c_B, tuple(batches), fluid)


def preview_rows(inst: Instance, epsilon: Optional[float] = None) -> List[Tuple[str, int, float, str]]:
    """Batched schedule rows ``(i, j, zeta_B, new_resource_id)``."""
    if inst.replenishment.stochastic:
        batches = build_batched_instance_stochastic(inst, epsilon).batches
    else:
        batches = adversarial_batches(inst)
    return [(b.i, b.j, float(b.amount), b.resource) for b in batches]


# ----------------------------------------------------------------------------
# Wrappers
# ----------------------------------------------------------------------------


class _Virtual:
    """The base algorithm's view: an instance, its own ledger and history."""

    def __init__(self, instance: Instance):
        self.instance = instance
        self.ledger = InventoryLedger(instance)
        self.history: List[str] = []
        self.last: Optional[Action] = None

    def decide(self, base: OnlineAlgorithm, ctx: Context) -> Action:
        self.ledger.release(ctx.j)
        vctx = Context(self.instance, ctx.j, ctx.z, self.ledger, self.history, {}, ctx.rng)
        out = base.decide(vctx)
        k = out.chosen if isinstance(out, Choice) else out
        action = self.instance.action_map.get(k)
        if action is None:
            raise InfeasibleActionError(f"request {ctx.j}: base chose unknown action {k!r}")
        if not self.ledger.feasible(action):
            raise InfeasibleActionError(f"request {ctx.j}: base chose infeasible action {k!r}")
        self.last = action
        self.history.append(k)
        return action

    def commit(self, base: OnlineAlgorithm, outcome: Outcome):
        action = self.last
        self.ledger.debit(action, outcome.j, success_flags(action, outcome.coin), outcome.release_draw)
        base.observe(Outcome(outcome.j, outcome.z, action.id, outcome.coin, outcome.release_draw))


class BatchAdversarial(OnlineAlgorithm):
    """Batching wrapper for fixed (adversarial) replenishment."""

    def __init__(self, base: OnlineAlgorithm, c_B: Optional[float] = None):
        self.base = base
        self.c_B_override = c_B
        self.name = f"{getattr(base, 'name', 'alg')}+batch"

    def reset(self, instance: Instance, rng=None):
        if instance.arrivals.stochastic:
            raise InstanceError("adversarial batching needs adversarial arrivals")
        self.real = instance
        self.c_B = adversarial_threshold(instance) if self.c_B_override is None else self.c_B_override
        self.state = BatchState(self.c_B)
        self.virtual = _Virtual(without_replenishment(instance, f"{instance.name}-batched"))
        self.base.reset(self.virtual.instance, rng)

    @property
    def batched_instance(self) -> Instance:
        """The batched instance built so far (the final one after a full run)."""
        return self.virtual.instance

    def decide(self, ctx: Context):
        fresh = []
        for i in self.real.roots:
            amount, rid = self.state.step(i, ctx.j, ctx.replenishment.get(i, 0.0))
            if rid is not None:
                fresh.append(self.state.batches[-1])
        if fresh:
            v = self.virtual
            v.instance = extend_instance(v.instance, fresh)
            for b in fresh:
                v.ledger.add_resource(b.resource, float(b.amount))
        action = self.virtual.decide(self.base, ctx)
        return Choice(action.id, action.root)

    def observe(self, outcome: Outcome):
        self.virtual.commit(self.base, outcome)


class BatchStochastic(OnlineAlgorithm):
    """Batching wrapper for stochastic replenishment with real/virtual execution."""

    def __init__(self, base: OnlineAlgorithm, batched: BatchedInstance):
        self.base = base
        self.batched = batched
        self.name = f"{getattr(base, 'name', 'alg')}+batch"
        self._prefix = batched.batched_prefix()

    def reset(self, instance: Instance, rng=None):
        if not (instance.arrivals.stochastic and instance.replenishment.stochastic):
            raise InstanceError("stochastic batching needs stochastic arrivals and replenishment")
        if instance is not self.batched.source and instance != self.batched.source:
            raise InstanceError("batched instance was built from a different instance")
        self.real = instance
        self.realized = {i: 0.0 for i in instance.roots}
        self.virtual = _Virtual(self.batched.instance)
        self.fallbacks = 0
        self.base.reset(self.virtual.instance, rng)

    def implementable(self, action: Action, j: int) -> bool:
        """Realized replenishment covers the batched schedule for every batched resource used."""
        rmap = self.virtual.instance.resource_map
        for rid in action.uses:
            parent = rmap[rid].parent
            if parent is not None and self.realized[parent] < self._prefix[parent][j] - FEAS_TOL:
                return False
        return True

    def decide(self, ctx: Context):
        for i, v in ctx.replenishment.items():
            self.realized[i] += v
        action = self.virtual.decide(self.base, ctx)
        real = self.real.action_map[action.root]
        if real.trivial:
            return Choice(action.id, real.id)
        if self.implementable(action, ctx.j) and ctx.ledger.feasible(real):
            return Choice(action.id, real.id)
        self.fallbacks += 1
        return Choice(action.id, self.real.trivial, fallback=True)

    def observe(self, outcome: Outcome):
        self.virtual.commit(self.base, outcome)
