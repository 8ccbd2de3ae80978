"""Pure-numpy subsolver kernel.

Both kernels solve

    min 0.5 x'Qx + c'x   s.t.  sum(x) = total,  lo <= x <= hi,  [a'x >= b]

either over reals (``qp_solve``) or over integers (``lot_solve``). The
compiled kernel in ``_ckernel.pyx`` follows the same steps.
"""
from __future__ import annotations

import heapq

import numpy as np

NAME = "python"

STEP_TOL = 1e-12
REG = 1e-12
INT_TOL = 1e-9
FLOOR_TOL = 1e-9


class KernelError(RuntimeError):
    pass


class Infeasible(KernelError):
    pass


def greedy_linear(c, lo, hi, total):
    """Minimize ``c'x`` on the box-simplex by filling the cheapest coordinates first.

    Ties go to the lower index.
    """
    x = np.array(lo, dtype=float)
    rem = total - x.sum()
    for i in np.argsort(c, kind="stable"):
        if rem <= 0:
            break
        add = min(hi[i] - lo[i], rem)
        x[i] += add
        rem -= add
    return x


def qp_solve(Q, c, lo, hi, total=1.0, a=None, b=-np.inf, max_iter=None):
    """Primal active-set method started from a feasible interior point.

    Returns ``(x, iterations)``. The working set holds variables fixed at a
    bound plus, optionally, the floor row ``a'x >= b``. A tiny ridge keeps the
    step system nonsingular when Q is only semidefinite; multipliers and the
    objective use the unmodified Q.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = len(c)
    has_floor = a is not None and np.isfinite(b)
    if has_floor:
        a = np.asarray(a, dtype=float)
    scale = max(1.0, abs(total))
    slack = total - lo.sum()
    cap = float((hi - lo).sum())
    if slack < -1e-12 * scale or slack > cap + 1e-12 * scale or np.any(lo > hi):
        raise Infeasible("bounds admit no point with the required sum")

    if slack <= 1e-15 * scale or slack >= cap - 1e-15 * scale:
        x = lo.copy() if slack <= 1e-15 * scale else hi.copy()
        if has_floor and a @ x < b - FLOOR_TOL * max(1.0, abs(b)):
            raise Infeasible("floor unreachable")
        return x, 0

    x = lo + (hi - lo) * (slack / cap)
    state = np.zeros(n, dtype=np.int8)
    fixed = hi <= lo
    state[fixed] = -1
    floor_active = False

    if has_floor:
        xmax = greedy_linear(-a, lo, hi, total)
        amax = float(a @ xmax)
        if amax < b - FLOOR_TOL * max(1.0, abs(b)):
            raise Infeasible("floor unreachable")
        ax = float(a @ x)
        if ax < b:
            gap = amax - ax
            if gap <= 0 or (b - ax) >= gap * (1.0 - 1e-12):
                return xmax, 0
            x = x + ((b - ax) / gap) * (xmax - x)
            free = ~fixed
            floor_active = np.ptp(a[free]) > 1e-14 * max(1.0, np.abs(a).max())

    ridge = REG * max(1e-300, float(np.abs(np.diag(Q)).max(initial=0.0)))
    if max_iter is None:
        max_iter = 50 + 20 * n
    for it in range(1, max_iter + 1):
        g = Q @ x + c
        F = np.flatnonzero(state == 0)
        m = len(F)
        r = 2 if floor_active else 1
        kkt = np.zeros((m + r, m + r))
        kkt[:m, :m] = Q[np.ix_(F, F)]
        kkt[np.arange(m), np.arange(m)] += ridge
        kkt[m, :m] = 1.0
        kkt[:m, m] = -1.0
        if floor_active:
            kkt[m + 1, :m] = a[F]
            kkt[:m, m + 1] = -a[F]
        rhs = np.zeros(m + r)
        rhs[:m] = -g[F]
        sol = np.linalg.solve(kkt, rhs)
        p = sol[:m]
        y = sol[m:]

        if m == 0 or np.abs(p).max() <= STEP_TOL * scale:
            resid = g - y[0]
            if floor_active:
                resid = resid - y[1] * a
            worst, drop = 1e-11 * max(1e-300, float(np.abs(g).max())), None
            for i in np.flatnonzero(state != 0):
                if fixed[i]:
                    continue
                v = -resid[i] if state[i] < 0 else resid[i]
                if v > worst:
                    worst, drop = v, i
            if floor_active and -y[1] > worst:
                worst, drop = -y[1], "floor"
            if drop is None:
                return x, it
            if drop == "floor":
                floor_active = False
            else:
                state[drop] = 0
            continue

        alpha, block, side = 1.0, None, 0
        for k, i in enumerate(F):
            pi = p[k]
            if pi < 0:
                t = (lo[i] - x[i]) / pi
                s = -1
            elif pi > 0:
                t = (hi[i] - x[i]) / pi
                s = 1
            else:
                continue
            t = max(t, 0.0)
            if t < alpha:
                alpha, block, side = t, i, s
        if has_floor and not floor_active:
            ap = float(a[F] @ p)
            if ap < 0:
                t = max(0.0, (float(a @ x) - b) / -ap)
                if t < alpha:
                    alpha, block = t, "floor"
        x[F] += alpha * p
        if block == "floor":
            floor_active = True
        elif block is not None:
            x[block] = lo[block] if side < 0 else hi[block]
            state[block] = side
    raise KernelError(f"active set did not settle in {max_iter} iterations")


def _objective(Q, c, x):
    return float(0.5 * x @ Q @ x + c @ x)


def _round_to_lattice(x, lo, hi, total):
    d = np.clip(np.floor(x + INT_TOL), lo, hi).astype(np.int64)
    rem = int(total - d.sum())
    frac = x - np.floor(x + INT_TOL)
    order = np.argsort(-frac, kind="stable")
    while rem > 0:
        moved = False
        for i in order:
            if rem == 0:
                break
            if d[i] < hi[i]:
                d[i] += 1
                rem -= 1
                moved = True
        if not moved:
            return None
    while rem < 0:
        moved = False
        for i in order[::-1]:
            if rem == 0:
                break
            if d[i] > lo[i]:
                d[i] -= 1
                rem += 1
                moved = True
        if not moved:
            return None
    return d


def _exchange_descent(Q, c, d, lo, hi, a=None, b=-np.inf):
    """Move single lots between assets while that lowers the objective."""
    diag = np.diag(Q)
    curv = 0.5 * (diag[:, None] + diag[None, :]) - Q
    has_floor = a is not None and np.isfinite(b)
    for _ in range(10 * int(hi.sum() + 1)):
        grad = Q @ d + c
        # delta[i, j]: change from moving one lot out of i into j
        delta = grad[None, :] - grad[:, None] + curv
        ok = (d > lo)[:, None] & (d < hi)[None, :]
        if has_floor:
            room = float(a @ d) - b
            ok &= (a[None, :] - a[:, None]) >= -room - FLOOR_TOL * max(1.0, abs(b))
        np.fill_diagonal(ok, False)
        delta = np.where(ok, delta, np.inf)
        k = int(np.argmin(delta))
        if not delta.flat[k] < -1e-15 * max(1.0, float(np.abs(grad).max())):
            break
        i, j = divmod(k, len(d))
        d[i] -= 1
        d[j] += 1
    return d


def lot_solve(Q, c, lo, hi, total, a=None, b=-np.inf, prune_tol=1e-12, trace=None, max_nodes=None):
    """Best-bound branch-and-bound over integer lot counts.

    Each node solves the continuous relaxation with its own lot bounds,
    branches on the most fractional count (lowest index on ties) and is
    dropped once its bound reaches ``incumbent - prune_tol``.

    Returns ``(d, value, nodes, root_bound)``.
    """
    Q = np.asarray(Q, dtype=float)
    c = np.asarray(c, dtype=float)
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    total = int(total)
    has_floor = a is not None and np.isfinite(b)
    if has_floor:
        a = np.asarray(a, dtype=float)
    if np.any(lo > hi) or lo.sum() > total or hi.sum() < total:
        raise Infeasible("lot ranges admit no allocation")

    def relax(l, u):
        try:
            x, _ = qp_solve(Q, c, l, u, total, a, b)
        except Infeasible:
            return None
        return x, _objective(Q, c, x)

    root = relax(lo, hi)
    if root is None:
        raise Infeasible("relaxation infeasible at the root")
    x0, root_bound = root
    best_d, best_val = None, np.inf

    def offer(d):
        nonlocal best_d, best_val
        if d is None:
            return
        if has_floor and float(a @ d) < b - FLOOR_TOL * max(1.0, abs(b)):
            return
        val = _objective(Q, c, d)
        if val < best_val:
            best_d, best_val = d.copy(), val

    def heuristic(x, l, u):
        d = _round_to_lattice(x, l, u, total)
        if d is None:
            return
        if has_floor and float(a @ d) < b - FLOOR_TOL * max(1.0, abs(b)):
            return
        offer(_exchange_descent(Q, c, d, l, u, a, b))

    heuristic(x0, lo, hi)
    heap = [(root_bound, 0, lo, hi, x0)]
    seq = 1
    nodes = 0
    while heap:
        bound, _, l, u, x = heapq.heappop(heap)
        if bound >= best_val - prune_tol:
            break
        nodes += 1
        if max_nodes is not None and nodes > max_nodes:
            raise KernelError(f"node limit {max_nodes} reached")
        frac = x - np.floor(x)
        dist = np.minimum(frac, 1.0 - frac)
        j = int(np.argmax(dist))
        if trace is not None:
            trace.append(
                f"node {nodes} bound={bound!r} lo={l.tolist()} hi={u.tolist()} "
                + (f"branch x[{j}]={x[j]!r}" if dist[j] > INT_TOL else "integral")
            )
        if dist[j] <= INT_TOL:
            offer(np.round(x).astype(np.int64))
            continue
        if nodes > 1:
            heuristic(x, l, u)
        down_u = u.copy()
        down_u[j] = int(np.floor(x[j]))
        up_l = l.copy()
        up_l[j] = int(np.ceil(x[j]))
        for cl, cu in ((l, down_u), (up_l, u)):
            if cl[j] > cu[j] or cl.sum() > total or cu.sum() < total:
                continue
            child = relax(cl, cu)
            if child is None:
                continue
            cx, cb = child
            if cb < best_val - prune_tol:
                heapq.heappush(heap, (cb, seq, cl, cu, cx))
                seq += 1
    if best_d is None:
        raise Infeasible("no integer allocation satisfies the constraints")
    return best_d, best_val, nodes, root_bound


def greedy_lots(c, lo, hi, total):
    """Integer version of :func:`greedy_linear`."""
    d = np.array(lo, dtype=np.int64)
    rem = int(total) - int(d.sum())
    for i in np.argsort(c, kind="stable"):
        if rem <= 0:
            break
        add = min(int(hi[i] - lo[i]), rem)
        d[i] += add
        rem -= add
    return d
