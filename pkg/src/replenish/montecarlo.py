"""Vectorized Monte Carlo evaluators for two special cases.

Running the general engine ten thousand times on instances with thousands of
requests is slow, but two cases only need array arithmetic across trials:

* static randomized policies (attenuated rounding) on instances with
  deterministic consumption: every trial is a sequence of independent draws
  followed by a feasibility check;
* the stochastic batching wrapper when the virtual run does not depend on the
  trial (fixed type sequence, deterministic consumption, deterministic base):
  only the real implementability check varies.

Both draw from exactly the same per-trial streams as :func:`replenish.engine.run`,
so their per-trial objectives match the engine's bit for bit.
"""

from __future__ import annotations

from typing import Callable, List

import numpy as np

from .batching import BatchedInstance
from .benchmarks import AttenuatedRounding
from .engine import FEAS_TOL, OnlineAlgorithm, Performance, run, sample_types, stream, summarize
from .model import Instance, InstanceError


def _replenishment_draws(instance: Instance, seed: int, trials: range) -> np.ndarray:
    """Realized stochastic replenishment, shape (trials, resources, m)."""
    rep = instance.replenishment
    roots = instance.roots
    rindex = {i: n for n, i in enumerate(roots)}
    m = instance.horizon
    out = np.zeros((len(trials), len(roots), m))
    if not rep.stochastic:
        for (i, j), v in rep.fixed.items():
            out[:, rindex[i], j - 1] = v
        return out
    keys = sorted(rep.entries, key=lambda ij: (ij[1], ij[0]))
    w = np.array([rep.entries[k][0] for k in keys])
    q = np.array([rep.entries[k][1] for k in keys])
    ri = np.array([rindex[k[0]] for k in keys], dtype=int)
    jj = np.array([k[1] - 1 for k in keys], dtype=int)
    for row, t in enumerate(trials):
        u = stream(seed, t, "replenishment").random(len(keys))
        hit = (w > 0) & (u * w < q)
        np.add.at(out[row], (ri[hit], jj[hit]), w[hit])
    return out


def _check_deterministic(instance: Instance):
    for a in instance.actions:
        for prof in a.uses.values():
            if prof.success_prob not in (0.0, 1.0) or prof.release.reusable:
                raise InstanceError("vectorized evaluation needs deterministic, non-reusable consumption")


def rounding_performance(instance: Instance, policy: AttenuatedRounding, trials: int, seed: int = 0,
                         chunk: int = 2000) -> Performance:
    """Monte Carlo objective of :class:`AttenuatedRounding`, vectorized over trials."""
    _check_deterministic(instance)
    m = instance.horizon
    roots = instance.roots
    rids = [r.id for r in instance.resources]
    rpos = {rid: n for n, rid in enumerate(rids)}
    root_pos = {i: n for n, i in enumerate(roots)}
    amap = instance.action_map
    start = np.array([r.initial_inventory for r in instance.resources])
    values: List[float] = []
    for lo in range(0, trials, chunk):
        block = range(lo, min(trials, lo + chunk))
        T = len(block)
        repl = np.zeros((T, len(rids), m))
        repl[:, [rpos[i] for i in roots], :] = _replenishment_draws(instance, seed, block)
        if instance.arrivals.stochastic:
            type_seqs = [sample_types(instance, stream(seed, t, "types").random(m)) for t in block]
        else:
            type_seqs = None
        U = np.stack([stream(seed, t, "algorithm").random(m) for t in block])
        avail = np.tile(start, (T, 1))
        totals = np.zeros((T, len(roots)))
        for j in range(1, m + 1):
            avail += repl[:, :, j - 1]
            if type_seqs is None:
                groups = {instance.arrivals.types[j - 1]: np.arange(T)}
            else:
                zs = np.array([seq[j - 1] for seq in type_seqs])
                groups = {z: np.flatnonzero(zs == z) for z in np.unique(zs)}
            for z, rows in groups.items():
                acc = np.zeros(len(rows))
                u = U[rows, j - 1]
                for k, prob in policy.probabilities(j, z):
                    lo_p = acc.copy()
                    acc = acc + prob
                    pick = rows[(u >= lo_p) & (u < acc)]
                    if pick.size == 0:
                        continue
                    action = amap[k]
                    ok = np.ones(pick.size, dtype=bool)
                    for rid, prof in action.uses.items():
                        ok &= avail[pick, rpos[rid]] >= prof.peak - FEAS_TOL
                    served = pick[ok]
                    for rid, prof in action.uses.items():
                        if prof.success_prob == 1.0:
                            col = rpos[rid]
                            avail[served, col] = np.maximum(0.0, avail[served, col] - prof.peak)
                    for i, r in instance.objective_rewards(k, j, str(z)).items():
                        totals[served, root_pos[i]] += r
        values.extend(totals.min(axis=1).tolist())
    return summarize(values, [0.0] * len(values))


def virtual_trace(batched: BatchedInstance, base_factory: Callable[[], OnlineAlgorithm]) -> List[str]:
    """Choices of the base algorithm on the batched instance (trial independent)."""
    hb = batched.instance
    arr = hb.arrivals
    for j in range(1, hb.horizon + 1):
        if len(arr.support(j)) != 1:
            raise InstanceError("vectorized fallback evaluation needs a fixed type sequence")
    _check_deterministic(hb)
    res = run(hb, base_factory(), seed=0, trial=0)
    return [e.chosen for e in res.action_trace]


def fallback_performance(batched: BatchedInstance, base_factory: Callable[[], OnlineAlgorithm], trials: int,
                         seed: int = 0, chunk: int = 2000) -> Performance:
    """Objective and per-request fallback rate of the stochastic wrapper, vectorized over trials.

    The virtual run is computed once; for every trial the real execution
    implements each virtual choice when the realized replenishment covers the
    batched schedule of every batched resource it uses and the real stock
    suffices, and the trivial action otherwise.
    """
    src = batched.source
    hb = batched.instance
    m = src.horizon
    roots = src.roots
    rpos = {i: n for n, i in enumerate(roots)}
    chosen = virtual_trace(batched, base_factory)
    prefix = batched.batched_prefix()
    types = [arr_z for arr_z, _ in (src.arrivals.support(j)[0] for j in range(1, m + 1))]
    start = np.array([src.resource_map[i].initial_inventory for i in roots])
    steps = []
    for j, k in enumerate(chosen, start=1):
        virt = hb.action_map[k]
        real = src.action_map[virt.root]
        checks = [(rpos[hb.resource_map[rid].parent], prefix[hb.resource_map[rid].parent][j])
                  for rid in virt.uses if hb.resource_map[rid].parent is not None]
        needs = [(rpos[rid], prof.peak, prof.peak if prof.success_prob == 1.0 else 0.0)
                 for rid, prof in real.uses.items()]
        rewards = {rpos[i]: r for i, r in src.objective_rewards(real.id, j, types[j - 1]).items()}
        steps.append((real.trivial, checks, needs, rewards))

    values: List[float] = []
    rates: List[float] = []
    for lo in range(0, trials, chunk):
        block = range(lo, min(trials, lo + chunk))
        T = len(block)
        repl = _replenishment_draws(src, seed, block)
        cum = np.cumsum(repl, axis=2)
        avail = np.tile(start, (T, 1))
        totals = np.zeros((T, len(roots)))
        fallbacks = np.zeros(T)
        for j, (trivial, checks, needs, rewards) in enumerate(steps, start=1):
            avail += repl[:, :, j - 1]
            if trivial:
                continue
            ok = np.ones(T, dtype=bool)
            for col, need in checks:
                ok &= cum[:, col, j - 1] >= need - FEAS_TOL
            for col, peak, _ in needs:
                ok &= avail[:, col] >= peak - FEAS_TOL
            for col, _, used in needs:
                if used:
                    avail[ok, col] = np.maximum(0.0, avail[ok, col] - used)
            for col, r in rewards.items():
                totals[ok, col] += r
            fallbacks += ~ok
        values.extend(totals.min(axis=1).tolist())
        rates.extend((fallbacks / m).tolist())
    return summarize(values, rates)

