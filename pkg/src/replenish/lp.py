"""The expected linear program and its solvers.

Variables are ``lambda`` (index 0) followed by one ``x[j, k, z]`` per request,
non-trivial action and type with ``p_jz > 0``.  Rows, all of the form
``A x <= b`` with ``b >= 0``:

* reward rows, one per objective resource: ``lambda - sum r x <= 0``;
* capacity rows, one per resource and request ``l``: expected stock held at
  ``l`` by decisions up to ``l`` is at most starting stock plus mean
  replenishment up to ``l``;
* demand rows, one per (j, z): ``sum_k x[j, k, z] <= p_jz``.

Because ``b >= 0`` the all-slack basis is feasible, so the simplex needs no
phase one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .model import Instance

DEFAULT_VAR_CAP = 100_000
PIVOT_CAP = 1_000_000


class LpError(RuntimeError):
    pass


@dataclass
class LpModel:
    keys: List[Tuple[int, str, str]]
    A: sp.csr_matrix
    b: np.ndarray
    row_labels: List[tuple]

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def objective(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        c[0] = 1.0
        return c


@dataclass
class LpSolution:
    value: float
    x: np.ndarray
    keys: List[Tuple[int, str, str]]
    status: str = "optimal"
    iterations: int = 0
    method: str = "simplex"

    def primal(self) -> Dict[Tuple[int, str, str], float]:
        return {key: float(v) for key, v in zip(self.keys, self.x[1:]) if v > 0}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "k", "z", "x"])
        for (j, k, z), v in zip(self.keys, self.x[1:]):
            if v > 0:
                w.writerow([j, k, z, repr(float(v))])
        return buf.getvalue()


def _reusable(instance: Instance) -> Dict[str, bool]:
    out = {r.id: False for r in instance.resources}
    for a in instance.actions:
        for rid, prof in a.uses.items():
            if prof.release.reusable:
                out[rid] = True
    return out


def build_lp(instance: Instance, replenishment_override: Optional[Mapping[str, Sequence[float]]] = None,
             var_cap: int = DEFAULT_VAR_CAP, prune_zero_reward: bool = True) -> LpModel:
    """Assemble the expected LP.

    ``replenishment_override[i][j-1]`` replaces the mean replenishment of
    resource ``i`` at request ``j`` (used for batched replenishment processes);
    resources missing from the override get none.
    """
    m = instance.horizon
    arr = instance.arrivals
    roots = instance.roots
    root_row = {i: n for n, i in enumerate(roots)}

    keys: List[Tuple[int, str, str]] = []
    per_var_actions = []
    for j in range(1, m + 1):
        for z, p in arr.support(j):
            if prune_zero_reward:
                cands = [a for a, _ in instance.rewarding_actions(j, z)]
            else:
                cands = [a for a in instance.actions if not a.trivial]
            for a in sorted(cands, key=lambda a: a.id):
                if a.trivial:
                    continue
                keys.append((j, a.id, z))
                per_var_actions.append(a)
                if len(keys) > var_cap:
                    raise LpError(f"LP needs more than {var_cap} variables; raise the cap or shrink the instance")

    n = len(keys) + 1
    rows, cols, vals = [], [], []
    b: List[float] = []
    labels: List[tuple] = []

    # reward rows
    for i in roots:
        rows.append(root_row[i]); cols.append(0); vals.append(1.0)
        b.append(0.0); labels.append(("reward", i))
    for col, ((j, k, z), a) in enumerate(zip(keys, per_var_actions), start=1):
        for i, r in instance.objective_rewards(k, j, z).items():
            if r:
                rows.append(root_row[i]); cols.append(col); vals.append(-r)

    # capacity rows
    reusable = _reusable(instance)
    cols_by_resource: Dict[str, List[Tuple[int, int, object]]] = {r.id: [] for r in instance.resources}
    for col, ((j, k, z), a) in enumerate(zip(keys, per_var_actions), start=1):
        for rid, prof in a.uses.items():
            if prof.peak * prof.success_prob > 0:
                cols_by_resource[rid].append((col, j, prof))
    for res in instance.resources:
        rid = res.id
        if replenishment_override is not None:
            seq = replenishment_override.get(rid)
            q = [float(v) for v in seq] if seq is not None else [0.0] * m
        else:
            q = [instance.replenishment.mean(rid, j) for j in range(1, m + 1)] if not res.batched else [0.0] * m
        cum = np.concatenate([[0.0], np.cumsum(q)])
        users = cols_by_resource[rid]
        if not users:
            continue
        first = min(j for _, j, _ in users)
        if reusable[rid]:
            keep = list(range(first, m + 1))
        else:
            keep = [l for l in range(first, m + 1) if l == m or q[l] > 0]
        base_row = len(b)
        for off, l in enumerate(keep):
            b.append(res.initial_inventory + cum[l]); labels.append(("capacity", rid, l))
        keep_arr = np.asarray(keep)
        for col, j, prof in users:
            start = int(np.searchsorted(keep_arr, j))
            for off in range(start, len(keep)):
                l = keep[off]
                coef = prof.expected(l - j)
                if coef == 0:
                    if prof.release.kind == "det":
                        break
                    continue
                rows.append(base_row + off); cols.append(col); vals.append(coef)

    # demand rows
    groups: Dict[Tuple[int, str], List[int]] = {}
    for col, (j, k, z) in enumerate(keys, start=1):
        groups.setdefault((j, z), []).append(col)
    for (j, z), members in groups.items():
        r = len(b)
        b.append(arr.prob(j, z)); labels.append(("demand", j, z))
        for col in members:
            rows.append(r); cols.append(col); vals.append(1.0)

    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(b), n))
    A.sum_duplicates()
    return LpModel(keys, A, np.asarray(b, dtype=float), labels)


# ----------------------------------------------------------------------------
# Dense revised simplex
# ----------------------------------------------------------------------------


def simplex_max(c: np.ndarray, A: np.ndarray, b: np.ndarray, tol: float = 1e-9,
                max_pivots: int = PIVOT_CAP, refactor_every: int = 50):
    """Maximize ``c x`` subject to ``A x <= b``, ``x >= 0`` with ``b >= 0``.

    Revised simplex on the slack form with Bland's smallest-index rule for
    both the entering and the leaving variable, which rules out cycling.
    Returns ``(x, value, pivots)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    mrows, n = A.shape
    if np.any(b < -tol):
        raise LpError("simplex needs b >= 0 for the slack starting basis")
    full = np.hstack([A, np.eye(mrows)])
    cost = np.concatenate([c, np.zeros(mrows)])
    basis = list(range(n, n + mrows))
    B_inv = np.eye(mrows)
    x_B = b.copy()
    pivots = 0
    while True:
        y = cost[basis] @ B_inv
        reduced = cost - y @ full
        reduced[basis] = 0.0
        entering = np.flatnonzero(reduced > tol)
        if entering.size == 0:
            break
        e = int(entering[0])
        u = B_inv @ full[:, e]
        pos = u > tol
        if not pos.any():
            raise LpError("LP is unbounded")
        ratios = np.full(mrows, np.inf)
        ratios[pos] = x_B[pos] / u[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        leave = min(ties, key=lambda r: basis[r])
        # pivot
        piv = u[leave]
        B_inv[leave] /= piv
        x_B[leave] = x_B[leave] / piv
        u[leave] = 0.0
        B_inv -= np.outer(u, B_inv[leave])
        x_B -= u * x_B[leave]
        basis[leave] = e
        pivots += 1
        if pivots % refactor_every == 0:
            B_inv = np.linalg.inv(full[:, basis])
            x_B = B_inv @ b
        np.maximum(x_B, 0.0, out=x_B)
        if pivots >= max_pivots:
            raise LpError(f"simplex pivot cap {max_pivots} reached (basis size {mrows}, {n} columns)")
    x = np.zeros(n + mrows)
    x[basis] = x_B
    return x[:n], float(c @ x[:n]), pivots


def solve_lp(model: LpModel, method: str = "auto", dense_limit: int = 200_000) -> LpSolution:
    """Solve the LP.  ``method`` is ``simplex``, ``highs`` or ``auto``.

    ``auto`` uses the dense simplex when the constraint matrix has at most
    ``dense_limit`` entries and HiGHS otherwise.
    """
    rows, cols = model.A.shape
    if method == "auto":
        method = "simplex" if rows * cols <= dense_limit else "highs"
    if method == "simplex":
        x, value, pivots = simplex_max(model.objective, model.A.toarray(), model.b)
        return LpSolution(value, x, model.keys, iterations=pivots, method="simplex")
    if method == "highs":
        res = linprog(-model.objective, A_ub=model.A, b_ub=model.b, bounds=(0, None), method="highs")
        if res.status != 0:
            raise LpError(f"HiGHS failed: {res.message}")
        x = np.maximum(res.x, 0.0)
        return LpSolution(float(x[0]), x, model.keys, iterations=int(getattr(res, "nit", 0)), method="highs")
    raise ValueError(f"unknown LP method {method!r}")


def lp_value(instance: Instance, replenishment_override=None, method: str = "auto") -> float:
    return solve_lp(build_lp(instance, replenishment_override), method=method).value


def max_violation(model: LpModel, x: np.ndarray) -> float:
    """Largest amount by which ``x`` violates a row (0 when feasible)."""
    return float(max(0.0, np.max(model.A @ x - model.b, initial=0.0), -np.min(x, initial=0.0)))


def is_finite_model(model: LpModel) -> bool:
    return bool(np.all(np.isfinite(model.A.data)) and np.all(np.isfinite(model.b)))


def transfer_point(source: LpModel, solution: LpSolution, target: LpModel) -> np.ndarray:
    """Map ``solution`` of ``source`` onto ``target``'s variable order (missing keys get 0)."""
    index = {key: n for n, key in enumerate(target.keys, start=1)}
    x = np.zeros(target.n_vars)
    x[0] = solution.x[0]
    for key, v in zip(source.keys, solution.x[1:]):
        n = index.get(key)
        if n is not None:
            x[n] = v
    return x

