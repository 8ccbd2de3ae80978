"""Exact reference fronts for small instances, plus truncation of unconstrained fronts.

Both exact generators enumerate every admissible K-subset, so they refuse
instances with more than ``GUARD`` subsets.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from . import subsolver
from .front import ReferenceFront, dominates, problem_fingerprint
from .instances import ConstraintSet, Instance, n_subsets
from .subsolver import InfeasibleTask, SubTask

GUARD = 1_000_000


class GuardError(ValueError):
    """The instance has too many subsets for an exact reference."""


def check_guard(cs: ConstraintSet, guard: int = GUARD) -> int:
    count = n_subsets(cs)
    if count > guard:
        raise GuardError(
            f"instance too large for exact reference: C({cs.n - cs.L}, {cs.K - cs.L}) = {count} "
            f"subsets exceeds {guard}; use TUCPF (method 'truncate') instead"
        )
    return count


def subsets(cs: ConstraintSet):
    """Every K-subset holding all pre-assigned assets, in lexicographic order."""
    pre = cs.preassigned
    free = np.flatnonzero(cs.z == 0)
    for combo in itertools.combinations(free.tolist(), cs.K - cs.L):
        yield np.sort(np.concatenate([pre, np.array(combo, dtype=np.int64)]))


def _feasible_tasks(inst, cs, lam):
    for sel in subsets(cs):
        try:
            yield sel, SubTask.build(inst, cs, sel, lam)
        except InfeasibleTask:
            continue


def _full(inst, sel, wK):
    w = np.zeros(inst.n)
    w[sel] = wK
    return w, float(w @ inst.cov @ w), float(inst.mu @ w)


def lambda_grid(count: int) -> list[tuple[float, float]]:
    if count < 2:
        raise ValueError("a weight grid needs at least two vectors")
    return [(i / (count - 1), 1.0 - i / (count - 1)) for i in range(count)]


def _meta(inst, cs, **extra) -> dict:
    return {"fingerprint": problem_fingerprint(inst, cs), "instance": inst.name, "constraints": cs.echo(), **extra}


def enumerate_front(inst: Instance, cs: ConstraintSet, lambdas, guard: int = GUARD) -> ReferenceFront:
    """Global weighted-sum optimum for each weight vector, found by trying every subset.

    Each weight vector contributes the best portfolio over all subsets (an
    exact tie goes to the portfolio that dominates, else the earlier
    subset); the nondominated subset of those winners is returned.
    """
    check_guard(cs, guard)
    lambdas = [tuple(map(float, lam)) for lam in lambdas]
    best: list = [None] * len(lambdas)
    for sel in subsets(cs):
        try:
            SubTask.build(inst, cs, sel, lambdas[0])
        except InfeasibleTask:
            continue
        for k, lam in enumerate(lambdas):
            sol = subsolver.solve(SubTask.build(inst, cs, sel, lam))
            w, risk, ret = _full(inst, sel, sol.w)
            g = lam[0] * risk - lam[1] * ret
            cur = best[k]
            if cur is None or g < cur[0] or (g == cur[0] and dominates((risk, ret), (cur[2], cur[3]))):
                best[k] = (g, w, risk, ret)
    if best[0] is None:
        raise InfeasibleTask("no subset admits a feasible allocation")
    pts = [(b[2], b[3]) for b in best]
    ws = [b[1] for b in best]
    return ReferenceFront.from_points(pts, "enumeration", _meta(inst, cs, lambdas=len(lambdas)), ws)


def _better(cand, best, scale):
    """Lexicographic: lower risk, then higher return."""
    if best is None:
        return True
    tol = 1e-14 * scale
    if cand[1] < best[1] - tol:
        return True
    return abs(cand[1] - best[1]) <= tol and cand[2] > best[2]


def epsilon_constraint_front(inst: Instance, cs: ConstraintSet, grids: int, guard: int = GUARD) -> ReferenceFront:
    """Minimum risk subject to ``return >= e`` on an evenly spaced grid of levels.

    The levels span the return of the minimum-risk portfolio up to the
    largest achievable return. A level whose answer is already known (the
    previous solution overshoots it) is skipped, and levels with no feasible
    portfolio are dropped.
    """
    if grids < 1:
        raise ValueError("grids must be at least 1")
    check_guard(cs, guard)
    tasks = list(_feasible_tasks(inst, cs, (1.0, 0.0)))
    if not tasks:
        raise InfeasibleTask("no subset admits a feasible allocation")
    scale = float(np.abs(inst.cov).max()) or 1.0

    best_min = None
    top_ret = []
    for sel, task in tasks:
        w, risk, ret = _full(inst, sel, subsolver.solve(task).w)
        if _better((w, risk, ret), best_min, scale):
            best_min = (w, risk, ret)
        wmax = subsolver.solve(SubTask.build(inst, cs, sel, (0.0, 1.0))).w
        top_ret.append(float(task.muK @ wmax))
    top_ret = np.array(top_ret)
    ret_lo, ret_hi = best_min[2], float(top_ret.max())
    levels = [ret_lo] if grids == 1 or ret_hi <= ret_lo else np.linspace(ret_lo, ret_hi, grids).tolist()

    found = [best_min]
    k = 1
    while k < len(levels):
        e = levels[k]
        best = None
        for (sel, task), rmax in zip(tasks, top_ret):
            if rmax < e - 1e-9 * max(1.0, abs(e)):
                continue
            try:
                sol = subsolver.solve(task, return_floor=e)
            except InfeasibleTask:
                continue
            cand = _full(inst, sel, sol.w)
            if _better(cand, best, scale):
                best = cand
        k += 1
        if best is None:
            continue
        found.append(best)
        while k < len(levels) and levels[k] <= best[2]:
            k += 1
    pts = [(r, g) for _, r, g in found]
    ws = [w for w, _, _ in found]
    return ReferenceFront.from_points(pts, "epsilon-constraint", _meta(inst, cs, grids=grids), ws)


def max_return(inst: Instance, cs: ConstraintSet, guard: int = GUARD) -> float:
    """Largest return any feasible portfolio reaches.

    With uniform bounds on the free assets the best selection is the
    pre-assigned assets plus the top ``K-L`` returns, filled greedily. Other
    bound patterns are enumerated when the guard allows and otherwise get
    the same greedy answer, which is then only a lower bound.
    """
    free = np.flatnonzero(cs.z == 0)
    uniform = len(free) == 0 or (np.ptp(cs.eps[free]) == 0 and np.ptp(cs.ups[free]) == 0)
    if not uniform and n_subsets(cs) <= guard:
        best = -math.inf
        for sel, task in _feasible_tasks(inst, cs, (0.0, 1.0)):
            best = max(best, float(task.muK @ subsolver.solve(task).w))
        return best
    order = free[np.lexsort((free, -inst.mu[free]))]
    sel = np.sort(np.concatenate([cs.preassigned, order[: cs.K - cs.L]]))
    task = SubTask.build(inst, cs, sel, (0.0, 1.0))
    return float(task.muK @ subsolver.solve(task).w)


def unconstrained_front(inst: Instance, lambdas) -> ReferenceFront:
    """Long-only, fully invested front with no cardinality, bounds or lots."""
    n = inst.n
    pts, ws = [], []
    for lam in lambdas:
        task = SubTask.from_arrays(inst.cov, inst.mu, lam, 0.0, 1.0, 0.0)
        w = subsolver.solve_continuous(task).w
        pts.append((float(w @ inst.cov @ w), float(inst.mu @ w)))
        ws.append(w)
    meta = {"instance": inst.name, "instance_fingerprint": inst.fingerprint(), "lambdas": len(lambdas), "n": n}
    return ReferenceFront.from_points(pts, "UCPF", meta, ws)


def truncate_ucpf(ucpf: ReferenceFront, inst: Instance, cs: ConstraintSet, cutoff: float | None = None) -> ReferenceFront:
    """Drop unconstrained-front points whose return the constraint set cannot reach."""
    if cutoff is None:
        cutoff = max_return(inst, cs)
    keep = ucpf.points[:, 1] <= cutoff + 1e-12 * max(1.0, abs(cutoff))
    w = None if ucpf.weights is None else ucpf.weights[keep]
    return ReferenceFront(ucpf.points[keep], "TUCPF", _meta(inst, cs, cutoff=cutoff, source=ucpf.provenance), w)
