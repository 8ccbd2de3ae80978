"""Slow, obviously-correct reference computations that share no code with the package."""
from __future__ import annotations

import itertools

import numpy as np


def compositions(total: int, lo, hi) -> np.ndarray:
    """Every integer vector d with lo <= d <= hi and sum(d) == total."""
    lo = [int(x) for x in lo]
    hi = [int(x) for x in hi]
    out = []

    def rec(prefix, k, rem):
        if k == len(lo) - 1:
            if lo[k] <= rem <= hi[k]:
                out.append(prefix + [rem])
            return
        rest_lo = sum(lo[k + 1 :])
        rest_hi = sum(hi[k + 1 :])
        for v in range(lo[k], hi[k] + 1):
            r = rem - v
            if rest_lo <= r <= rest_hi:
                rec(prefix + [v], k + 1, r)

    rec([], 0, int(total))
    return np.array(out, dtype=np.int64).reshape(-1, len(lo))


def lattice_min(cov, mu, lam, lo, hi, total, tau):
    """Brute-force minimum of ``l1 w'Cw - l2 mu'w`` over the lot lattice."""
    D = compositions(total, lo, hi)
    W = tau * D
    vals = lam[0] * np.einsum("ki,ij,kj->k", W, cov, W) - lam[1] * W @ mu
    k = int(np.argmin(vals))
    return float(vals[k]), D[k]


def simplex_grid(K: int, step: float = 1e-3) -> np.ndarray:
    m = int(round(1 / step))
    if K == 1:
        return np.ones((1, 1))
    if K == 2:
        a = np.arange(m + 1) / m
        return np.column_stack([a, 1 - a])
    if K == 3:
        i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        keep = i + j <= m
        a, b = i[keep] / m, j[keep] / m
        return np.column_stack([a, b, 1 - a - b])
    raise ValueError("dense grid only for K <= 3")


def grid_min(cov, mu, lam, eps, ups, step: float = 1e-3) -> float:
    W = simplex_grid(len(mu), step)
    ok = np.all((W >= np.asarray(eps) - 1e-12) & (W <= np.asarray(ups) + 1e-12), axis=1)
    W = W[ok]
    vals = lam[0] * np.einsum("ki,ij,kj->k", W, cov, W) - lam[1] * W @ mu
    return float(vals.min())


def all_lattice_portfolios(cov, mu, n, K, lo, hi, total, tau, pre=()):
    """(risk, return) of every lattice portfolio over every admissible K-subset."""
    pre = list(pre)
    free = [i for i in range(n) if i not in pre]
    pts = []
    for combo in itertools.combinations(free, K - len(pre)):
        sel = sorted(pre + list(combo))
        D = compositions(total, [lo[i] for i in sel], [hi[i] for i in sel])
        if len(D) == 0:
            continue
        W = tau * D
        C = cov[np.ix_(sel, sel)]
        pts.append(np.column_stack([np.einsum("ki,ij,kj->k", W, C, W), W @ mu[sel]]))
    return np.vstack(pts)


def weighted_sum_front(pts: np.ndarray, lambdas) -> np.ndarray:
    """Per weight vector, the global minimizer among ``pts``; then the nondominated filter."""
    best = []
    for l1, l2 in lambdas:
        vals = l1 * pts[:, 0] - l2 * pts[:, 1]
        m = vals.min()
        tied = np.flatnonzero(vals == m)
        # among exact ties prefer lower risk, then higher return
        k = min(tied, key=lambda t: (pts[t, 0], -pts[t, 1]))
        best.append(pts[k])
    return pareto(np.array(best))


def epsilon_points(pts: np.ndarray, levels) -> np.ndarray:
    out = []
    for e in levels:
        ok = pts[:, 1] >= e - 1e-9 * max(1.0, abs(e))
        if not ok.any():
            continue
        cand = pts[ok]
        k = min(range(len(cand)), key=lambda t: (cand[t, 0], -cand[t, 1]))
        out.append(cand[k])
    return pareto(np.array(out))


def pareto(pts: np.ndarray) -> np.ndarray:
    """O(m^2) nondominated filter (min risk, max return), duplicates collapsed, sorted by risk."""
    pts = np.unique(np.asarray(pts, dtype=float).reshape(-1, 2), axis=0)
    keep = []
    for i, p in enumerate(pts):
        dom = False
        for j, q in enumerate(pts):
            if j != i and q[0] <= p[0] and q[1] >= p[1] and (q[0] < p[0] or q[1] > p[1]):
                dom = True
                break
        if not dom:
            keep.append(p)
    keep = np.array(keep).reshape(-1, 2)
    return keep[np.argsort(keep[:, 0], kind="stable")]


def hv2d_boxes(points, r) -> float:
    """Hypervolume by summing disjoint grid cells; independent of any sweep logic."""
    pts = [p for p in np.asarray(points, dtype=float).reshape(-1, 2) if p[0] <= r[0] and p[1] <= r[1]]
    if not pts:
        return 0.0
    xs = sorted({p[0] for p in pts} | {r[0]})
    ys = sorted({p[1] for p in pts} | {r[1]})
    area = 0.0
    for a in range(len(xs) - 1):
        for b in range(len(ys) - 1):
            cx, cy = xs[a], ys[b]
            if any(p[0] <= cx and p[1] <= cy for p in pts):
                area += (xs[a + 1] - xs[a]) * (ys[b + 1] - ys[b])
    return area
