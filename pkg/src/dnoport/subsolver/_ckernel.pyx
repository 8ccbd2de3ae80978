# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled subsolver kernel; step-for-step the same algorithm as ``_pykernel``."""
import heapq

import numpy as np

from libc.math cimport fabs, floor, ceil, round as cround, isfinite
from libc.stdlib cimport malloc, free

from ._pykernel import Infeasible, KernelError

NAME = "cython"

cdef double STEP_TOL = 1e-12
cdef double REG = 1e-12
cdef double INT_TOL = 1e-9
cdef double FLOOR_TOL = 1e-9

cdef enum:
    OK = 0
    INFEASIBLE = 1
    NO_CONVERGENCE = 2
    SINGULAR = 3


cdef inline double _dmax(double a, double b) nogil:
    return a if a > b else b


cdef inline double _dot(int n, const double* a, const double* b) nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(n):
        s += a[i] * b[i]
    return s


cdef void _argsort(int n, const double* key, int* order) nogil:
    # stable ascending insertion sort; n is small
    cdef int i, j, t
    for i in range(n):
        order[i] = i
    for i in range(1, n):
        t = order[i]
        j = i - 1
        while j >= 0 and key[order[j]] > key[t]:
            order[j + 1] = order[j]
            j -= 1
        order[j + 1] = t


cdef int _lu_solve(double* A, double* rhs, int n) nogil:
    # Gaussian elimination with partial pivoting on row-major A; solution left in rhs
    cdef int i, j, k, p
    cdef double piv, f, tmp
    for k in range(n):
        p = k
        piv = fabs(A[k * n + k])
        for i in range(k + 1, n):
            if fabs(A[i * n + k]) > piv:
                piv = fabs(A[i * n + k])
                p = i
        if piv == 0.0:
            return -1
        if p != k:
            for j in range(n):
                tmp = A[k * n + j]
                A[k * n + j] = A[p * n + j]
                A[p * n + j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[p]
            rhs[p] = tmp
        for i in range(k + 1, n):
            f = A[i * n + k] / A[k * n + k]
            if f != 0.0:
                for j in range(k, n):
                    A[i * n + j] -= f * A[k * n + j]
                rhs[i] -= f * rhs[k]
    for i in range(n - 1, -1, -1):
        tmp = rhs[i]
        for j in range(i + 1, n):
            tmp -= A[i * n + j] * rhs[j]
        rhs[i] = tmp / A[i * n + i]
    return 0


cdef void _greedy_linear(int n, const double* cost, const double* lo, const double* hi,
                         double total, double* x, int* order) nogil:
    cdef int k, i
    cdef double rem = total, add
    for i in range(n):
        x[i] = lo[i]
        rem -= lo[i]
    _argsort(n, cost, order)
    for k in range(n):
        if rem <= 0:
            break
        i = order[k]
        add = hi[i] - lo[i]
        if rem < add:
            add = rem
        x[i] += add
        rem -= add


cdef int _qp(int n, const double* Q, const double* c, const double* lo, const double* hi,
             double total, const double* a, double b, double* x, int max_iter, int* iters) nogil:
    cdef char* state = <char*> malloc(n * sizeof(char))
    cdef int* work = <int*> malloc(2 * n * sizeof(int))
    cdef double* buf = <double*> malloc((3 * n + (n + 2) * (n + 3)) * sizeof(double))
    cdef int status = _qp_body(n, Q, c, lo, hi, total, a, b, x, max_iter, iters, state, work, buf)
    free(state)
    free(work)
    free(buf)
    return status


cdef int _qp_body(int n, const double* Q, const double* c, const double* lo, const double* hi,
                  double total, const double* a, double b, double* x, int max_iter, int* iters,
                  char* state, int* work, double* buf) nogil:
    cdef int i, j, k, it, m, r, N, drop, side, block
    cdef double scale = _dmax(1.0, fabs(total))
    cdef double slack = total, cap = 0.0, ax, amax, gap, theta, ridge, pmax, worst, v, resid
    cdef double alpha, t, pi, ap, y0, y1, amin_f = 0.0, amax_f = 0.0, amag
    cdef bint has_floor = a != NULL and isfinite(b)
    cdef bint floor_active = False, drop_floor, block_floor, any_free
    cdef double ftol = FLOOR_TOL * _dmax(1.0, fabs(b)) if has_floor else 0.0
    cdef int* F = work
    cdef int* order = work + n
    cdef double* g = buf
    cdef double* xmax = buf + n
    cdef double* neg = buf + 2 * n
    cdef double* sol = buf + 3 * n
    cdef double* kkt = buf + 3 * n + (n + 2)
    iters[0] = 0
    for i in range(n):
        if lo[i] > hi[i]:
            return INFEASIBLE
        slack -= lo[i]
        cap += hi[i] - lo[i]
    if slack < -1e-12 * scale or slack > cap + 1e-12 * scale:
        return INFEASIBLE
    if slack <= 1e-15 * scale or slack >= cap - 1e-15 * scale:
        for i in range(n):
            x[i] = lo[i] if slack <= 1e-15 * scale else hi[i]
        if has_floor and _dot(n, a, x) < b - ftol:
            return INFEASIBLE
        return OK

    for i in range(n):
        x[i] = lo[i] + (hi[i] - lo[i]) * (slack / cap)
        state[i] = -1 if hi[i] <= lo[i] else 0

    if has_floor:
        for i in range(n):
            neg[i] = -a[i]
        _greedy_linear(n, neg, lo, hi, total, xmax, order)
        amax = _dot(n, a, xmax)
        if amax < b - ftol:
            return INFEASIBLE
        ax = _dot(n, a, x)
        if ax < b:
            gap = amax - ax
            if gap <= 0 or (b - ax) >= gap * (1.0 - 1e-12):
                for i in range(n):
                    x[i] = xmax[i]
                return OK
            theta = (b - ax) / gap
            for i in range(n):
                x[i] = x[i] + theta * (xmax[i] - x[i])
            any_free = False
            amag = 0.0
            for i in range(n):
                amag = _dmax(amag, fabs(a[i]))
                if hi[i] > lo[i]:
                    if not any_free:
                        amin_f = a[i]
                        amax_f = a[i]
                        any_free = True
                    else:
                        if a[i] < amin_f:
                            amin_f = a[i]
                        if a[i] > amax_f:
                            amax_f = a[i]
            floor_active = any_free and (amax_f - amin_f) > 1e-14 * _dmax(1.0, amag)

    ridge = 0.0
    for i in range(n):
        ridge = _dmax(ridge, fabs(Q[i * n + i]))
    ridge = REG * _dmax(1e-300, ridge)

    for it in range(1, max_iter + 1):
        iters[0] = it
        for i in range(n):
            v = c[i]
            for j in range(n):
                v += Q[i * n + j] * x[j]
            g[i] = v
        m = 0
        for i in range(n):
            if state[i] == 0:
                F[m] = i
                m += 1
        r = 2 if floor_active else 1
        N = m + r
        for i in range(N * N):
            kkt[i] = 0.0
        for i in range(m):
            for j in range(m):
                kkt[i * N + j] = Q[F[i] * n + F[j]]
            kkt[i * N + i] += ridge
            kkt[m * N + i] = 1.0
            kkt[i * N + m] = -1.0
            if floor_active:
                kkt[(m + 1) * N + i] = a[F[i]]
                kkt[i * N + m + 1] = -a[F[i]]
            sol[i] = -g[F[i]]
        for i in range(m, N):
            sol[i] = 0.0
        if _lu_solve(kkt, sol, N) != 0:
            return SINGULAR
        pmax = 0.0
        for i in range(m):
            pmax = _dmax(pmax, fabs(sol[i]))

        if m == 0 or pmax <= STEP_TOL * scale:
            y0 = sol[m]
            y1 = sol[m + 1] if floor_active else 0.0
            worst = 0.0
            for i in range(n):
                worst = _dmax(worst, fabs(g[i]))
            worst = 1e-11 * _dmax(1e-300, worst)
            drop = -1
            drop_floor = False
            for i in range(n):
                if state[i] == 0 or hi[i] <= lo[i]:
                    continue
                resid = g[i] - y0
                if floor_active:
                    resid -= y1 * a[i]
                v = -resid if state[i] < 0 else resid
                if v > worst:
                    worst = v
                    drop = i
            if floor_active and -y1 > worst:
                worst = -y1
                drop_floor = True
            if drop_floor:
                floor_active = False
            elif drop >= 0:
                state[drop] = 0
            else:
                return OK
            continue

        alpha = 1.0
        block = -1
        side = 0
        block_floor = False
        for k in range(m):
            i = F[k]
            pi = sol[k]
            if pi < 0:
                t = (lo[i] - x[i]) / pi
                j = -1
            elif pi > 0:
                t = (hi[i] - x[i]) / pi
                j = 1
            else:
                continue
            if t < 0:
                t = 0.0
            if t < alpha:
                alpha = t
                block = i
                side = j
        if has_floor and not floor_active:
            ap = 0.0
            for k in range(m):
                ap += a[F[k]] * sol[k]
            if ap < 0:
                t = (_dot(n, a, x) - b) / -ap
                if t < 0:
                    t = 0.0
                if t < alpha:
                    alpha = t
                    block_floor = True
        for k in range(m):
            x[F[k]] += alpha * sol[k]
        if block_floor:
            floor_active = True
        elif block >= 0:
            x[block] = lo[block] if side < 0 else hi[block]
            state[block] = side

    return NO_CONVERGENCE


cdef _raise(int status, int max_iter):
    if status == INFEASIBLE:
        raise Infeasible("bounds admit no point with the required sum")
    if status == SINGULAR:
        raise KernelError("singular step system")
    if status == NO_CONVERGENCE:
        raise KernelError(f"active set did not settle in {max_iter} iterations")


def greedy_linear(c, lo, hi, total):
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] ll = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hh = np.ascontiguousarray(hi, dtype=np.float64)
    cdef int n = cc.shape[0]
    out = np.empty(n)
    cdef double[::1] xo = out
    cdef int* order = <int*> malloc(max(n, 1) * sizeof(int))
    _greedy_linear(n, &cc[0], &ll[0], &hh[0], total, &xo[0], order)
    free(order)
    return out


def qp_solve(Q, c, lo, hi, double total=1.0, a=None, double b=-np.inf, max_iter=None):
    cdef double[:, ::1] QQ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[::1] ll = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hh = np.ascontiguousarray(hi, dtype=np.float64)
    cdef int n = cc.shape[0]
    cdef double[::1] aa
    cdef const double* ap = NULL
    if a is not None and np.isfinite(b):
        aa = np.ascontiguousarray(a, dtype=np.float64)
        ap = &aa[0]
    cdef int mi = 50 + 20 * n if max_iter is None else max_iter
    out = np.empty(n)
    cdef double[::1] xo = out
    cdef int iters = 0
    cdef int status = _qp(n, &QQ[0, 0], &cc[0], &ll[0], &hh[0], total, ap, b, &xo[0], mi, &iters)
    _raise(status, mi)
    return out, iters


cdef double _objective(int n, const double* Q, const double* c, const double* x) nogil:
    cdef double s = 0.0, v
    cdef int i, j
    for i in range(n):
        v = 0.0
        for j in range(n):
            v += Q[i * n + j] * x[j]
        s += x[i] * (0.5 * v + c[i])
    return s


cdef bint _round_to_lattice(int n, const double* x, const long* lo, const long* hi, long total,
                            double* d, double* frac, int* order) nogil:
    cdef int i, k
    cdef long rem = total
    cdef bint moved
    cdef double f
    for i in range(n):
        f = floor(x[i] + INT_TOL)
        frac[i] = -(x[i] - f)
        if f < lo[i]:
            f = lo[i]
        if f > hi[i]:
            f = hi[i]
        d[i] = f
        rem -= <long> f
    _argsort(n, frac, order)
    while rem > 0:
        moved = False
        for k in range(n):
            if rem == 0:
                break
            i = order[k]
            if d[i] < hi[i]:
                d[i] += 1
                rem -= 1
                moved = True
        if not moved:
            return False
    while rem < 0:
        moved = False
        for k in range(n - 1, -1, -1):
            if rem == 0:
                break
            i = order[k]
            if d[i] > lo[i]:
                d[i] -= 1
                rem += 1
                moved = True
        if not moved:
            return False
    return True


cdef void _exchange_descent(int n, const double* Q, const double* c, double* d, const long* lo,
                            const long* hi, const double* a, double b, double* grad) nogil:
    cdef int it, i, j, bi, bj, cap
    cdef double best, delta, gmax, room = 0.0, ftol = 0.0
    cdef bint has_floor = a != NULL and isfinite(b)
    cdef long hsum = 0
    for i in range(n):
        hsum += hi[i]
    cap = <int> (10 * (hsum + 1))
    if has_floor:
        ftol = FLOOR_TOL * _dmax(1.0, fabs(b))
    for it in range(cap):
        gmax = 0.0
        for i in range(n):
            delta = c[i]
            for j in range(n):
                delta += Q[i * n + j] * d[j]
            grad[i] = delta
            gmax = _dmax(gmax, fabs(delta))
        if has_floor:
            room = _dot(n, a, d) - b
        best = 1e300
        bi = -1
        bj = -1
        for i in range(n):
            if not d[i] > lo[i]:
                continue
            for j in range(n):
                if j == i or not d[j] < hi[j]:
                    continue
                if has_floor and (a[j] - a[i]) < -room - ftol:
                    continue
                delta = grad[j] - grad[i] + 0.5 * (Q[i * n + i] + Q[j * n + j]) - Q[i * n + j]
                if delta < best:
                    best = delta
                    bi = i
                    bj = j
        if bi < 0 or not best < -1e-15 * _dmax(1.0, gmax):
            break
        d[bi] -= 1
        d[bj] += 1


cdef class _Lot:
    """Per-call scratch space and incumbent for one branch-and-bound run."""

    cdef int n
    cdef long total
    cdef double[:, ::1] Q
    cdef double[::1] c
    cdef double[::1] a
    cdef bint has_floor
    cdef double b
    cdef double best_val
    cdef object best_d
    cdef double[::1] d
    cdef double[::1] frac
    cdef double[::1] grad
    cdef int[::1] order

    def __init__(self, Q, c, a, b, long total):
        self.Q = Q
        self.c = c
        self.n = c.shape[0]
        self.total = total
        self.has_floor = a is not None and np.isfinite(b)
        if self.has_floor:
            self.a = a
        self.b = b
        self.best_val = np.inf
        self.best_d = None
        self.d = np.empty(self.n)
        self.frac = np.empty(self.n)
        self.grad = np.empty(self.n)
        self.order = np.empty(self.n, dtype=np.intc)

    cdef const double* aptr(self):
        return &self.a[0] if self.has_floor else NULL

    cdef object relax(self, long[::1] l, long[::1] u):
        cdef int n = self.n, i, iters = 0, status
        lf = np.empty(n)
        uf = np.empty(n)
        x = np.empty(n)
        cdef double[::1] lv = lf, uv = uf, xv = x
        for i in range(n):
            lv[i] = l[i]
            uv[i] = u[i]
        status = _qp(n, &self.Q[0, 0], &self.c[0], &lv[0], &uv[0], <double> self.total,
                     self.aptr(), self.b, &xv[0], 50 + 20 * n, &iters)
        if status == INFEASIBLE:
            return None
        _raise(status, 50 + 20 * n)
        return x, _objective(n, &self.Q[0, 0], &self.c[0], &xv[0])

    cdef void offer(self, double[::1] d):
        cdef double val
        if self.has_floor and _dot(self.n, &self.a[0], &d[0]) < self.b - FLOOR_TOL * _dmax(1.0, fabs(self.b)):
            return
        val = _objective(self.n, &self.Q[0, 0], &self.c[0], &d[0])
        if val < self.best_val:
            self.best_val = val
            self.best_d = np.asarray(d).astype(np.int64)

    cdef void heuristic(self, double[::1] x, long[::1] l, long[::1] u):
        if not _round_to_lattice(self.n, &x[0], &l[0], &u[0], self.total, &self.d[0], &self.frac[0], &self.order[0]):
            return
        if self.has_floor and _dot(self.n, &self.a[0], &self.d[0]) < self.b - FLOOR_TOL * _dmax(1.0, fabs(self.b)):
            return
        _exchange_descent(self.n, &self.Q[0, 0], &self.c[0], &self.d[0], &l[0], &u[0], self.aptr(), self.b, &self.grad[0])
        self.offer(self.d)


def lot_solve(Q, c, lo, hi, total, a=None, b=-np.inf, double prune_tol=1e-12, trace=None, max_nodes=None):
    cdef double[:, ::1] QQ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    lo = np.ascontiguousarray(lo, dtype=np.int64)
    hi = np.ascontiguousarray(hi, dtype=np.int64)
    cdef long M = int(total)
    cdef int n = cc.shape[0], j, k, nodes = 0, seq = 1
    cdef double bound, root_bound, dist, best_dist, xf
    cdef double[::1] xv
    cdef long[::1] lv, uv
    if np.any(lo > hi) or lo.sum() > M or hi.sum() < M:
        raise Infeasible("lot ranges admit no allocation")
    aa = np.ascontiguousarray(a, dtype=np.float64) if a is not None else None
    cdef _Lot st = _Lot(QQ, cc, aa, b, M)
    root = st.relax(lo, hi)
    if root is None:
        raise Infeasible("relaxation infeasible at the root")
    x0, root_bound = root
    st.heuristic(x0, lo, hi)
    heap = [(root_bound, 0, lo, hi, x0)]
    while heap:
        bound, _, l, u, x = heapq.heappop(heap)
        if bound >= st.best_val - prune_tol:
            break
        nodes += 1
        if max_nodes is not None and nodes > max_nodes:
            raise KernelError(f"node limit {max_nodes} reached")
        xv = x
        j = 0
        best_dist = -1.0
        for k in range(n):
            xf = xv[k] - floor(xv[k])
            dist = xf if xf < 1.0 - xf else 1.0 - xf
            if dist > best_dist:
                best_dist = dist
                j = k
        if trace is not None:
            trace.append(
                f"node {nodes} bound={bound!r} lo={l.tolist()} hi={u.tolist()} "
                + (f"branch x[{j}]={float(xv[j])!r}" if best_dist > INT_TOL else "integral")
            )
        if best_dist <= INT_TOL:
            st.offer(np.round(x))
            continue
        if nodes > 1:
            st.heuristic(xv, l, u)
        down_u = u.copy()
        down_u[j] = <long> floor(xv[j])
        up_l = l.copy()
        up_l[j] = <long> ceil(xv[j])
        for cl, cu in ((l, down_u), (up_l, u)):
            lv = cl
            uv = cu
            if lv[j] > uv[j] or cl.sum() > M or cu.sum() < M:
                continue
            child = st.relax(lv, uv)
            if child is None:
                continue
            cx, cb = child
            if cb < st.best_val - prune_tol:
                heapq.heappush(heap, (cb, seq, cl, cu, cx))
                seq += 1
    if st.best_d is None:
        raise Infeasible("no integer allocation satisfies the constraints")
    return st.best_d, st.best_val, nodes, root_bound


def greedy_lots(c, lo, hi, total):
    from ._pykernel import greedy_lots as _g
    return _g(c, lo, hi, total)
