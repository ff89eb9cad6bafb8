"""Baseline online algorithms and the CLI spec parser.

Algorithms see only the :class:`~replenish.engine.Context` of the current
request: the instance they are told about, current stock, and the list of
their own past choices.  Ties are always broken by action id.
"""

from __future__ import annotations

import math
from typing import Callable, Dict, Sequence

from .engine import Context, OnlineAlgorithm
from .model import Instance


class Trivial(OnlineAlgorithm):
    """Always takes the trivial action."""

    name = "trivial"

    def decide(self, ctx: Context):
        return ctx.instance.trivial


class Greedy(OnlineAlgorithm):
    """Highest expected immediate reward among feasible actions."""

    name = "greedy"

    def decide(self, ctx: Context):
        for action, _ in ctx.instance.rewarding_actions(ctx.j, ctx.z):
            if ctx.ledger.feasible(action):
                return action.id
        return ctx.instance.trivial


PSI: Dict[str, Callable[[float], float]] = {
    "exp": lambda rho: (math.exp(rho) - 1.0) / (math.e - 1.0),
    "linear": lambda rho: rho,
    "zero": lambda rho: 0.0,
}


class InventoryBalancing(OnlineAlgorithm):
    """Reward discounted by a penalty on the fill fraction of the used resource.

    The score of action ``k`` is ``r_k * (1 - psi(fill))`` where ``fill`` is the
    consumed share of the resource's current capacity (starting stock plus
    replenishment seen so far).  Only single-resource actions are supported.
    """

    def __init__(self, psi: str = "exp"):
        if psi not in PSI:
            raise ValueError(f"unknown penalty {psi!r}; choose from {sorted(PSI)}")
        self.psi_name = psi
        self.psi = PSI[psi]
        self.name = f"ib:psi={psi}"

    def reset(self, instance: Instance, rng=None):
        if instance.d > 1:
            raise ValueError("IB baseline requires d=1 generators")

    def decide(self, ctx: Context):
        best, best_score = None, 0.0
        fills: Dict[str, float] = {}
        for action, reward in ctx.instance.rewarding_actions(ctx.j, ctx.z):
            if not ctx.ledger.feasible(action):
                continue
            if action.uses:
                (rid,) = action.uses
                if rid not in fills:
                    fills[rid] = self.psi(min(1.0, max(0.0, ctx.fill(rid))))
                score = reward * (1.0 - fills[rid])
            else:
                score = reward
            # rewarding_actions is ordered by id within equal rewards, but scores
            # can tie across rewards, so compare ids explicitly
            if score > best_score or (score == best_score and best is not None and score > 0
                                      and action.id < best):
                best, best_score = action.id, score
        return best if best is not None else ctx.instance.trivial


class FixedSplit(OnlineAlgorithm):
    """Serve at most ``x`` requests of ``first_type``, then everything else while feasible."""

    def __init__(self, x: float, first_type: str = "1"):
        if x < 0:
            raise ValueError("fixed_split needs x >= 0")
        self.x = x
        self.first_type = first_type
        self.name = f"fixed_split:x={x:g}"
        self.served = 0

    def reset(self, instance: Instance, rng=None):
        self.served = 0

    def decide(self, ctx: Context):
        if ctx.z == self.first_type and self.served + 1 > self.x + 1e-9:
            return ctx.instance.trivial
        for action, _ in ctx.instance.rewarding_actions(ctx.j, ctx.z):
            if ctx.ledger.feasible(action):
                if ctx.z == self.first_type:
                    self.served += 1
                return action.id
        return ctx.instance.trivial


class Scripted(OnlineAlgorithm):
    """Replays a fixed list of action ids, one per request."""

    def __init__(self, sequence: Sequence[str]):
        self.sequence = list(sequence)
        self.name = "scripted"

    def decide(self, ctx: Context):
        return self.sequence[ctx.j - 1]


def greedy_maximizers(ctx: Context):
    """All feasible actions attaining the greedy maximum (for tie analysis)."""
    best, out = None, []
    for action, reward in ctx.instance.rewarding_actions(ctx.j, ctx.z):
        if not ctx.ledger.feasible(action):
            continue
        if best is None:
            best = reward
        if abs(reward - best) <= 1e-12:
            out.append(action.id)
    return out


def parse_algorithm(spec: str) -> Callable[[], OnlineAlgorithm]:
    """Factory from a CLI string: ``greedy``, ``ib[:psi=exp]``, ``fixed_split:x=<v>``, ``trivial``."""
    head, _, rest = spec.partition(":")
    opts: Dict[str, str] = {}
    if rest:
        for part in rest.split(","):
            key, eq, val = part.partition("=")
            if not eq:
                raise ValueError(f"malformed algorithm option {part!r}")
            opts[key.strip()] = val.strip()

    def only(*allowed):
        extra = set(opts) - set(allowed)
        if extra:
            raise ValueError(f"unknown option(s) {sorted(extra)} for {head!r}")

    if head == "greedy":
        only()
        return Greedy
    if head == "trivial":
        only()
        return Trivial
    if head == "ib":
        only("psi")
        psi = opts.get("psi", "exp")
        InventoryBalancing(psi)  # validate eagerly
        return lambda: InventoryBalancing(psi)
    if head == "fixed_split":
        only("x", "first_type")
        if "x" not in opts:
            raise ValueError("fixed_split needs x=<value>")
        x = float(opts["x"])
        first = opts.get("first_type", "1")
        FixedSplit(x, first)
        return lambda: FixedSplit(x, first)
    raise ValueError(f"unknown algorithm {spec!r}")

