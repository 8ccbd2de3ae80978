"""Exact capital allocation for a fixed asset selection.

For selected assets and weights ``(l1, l2)`` this minimizes
``l1 * w'Cw - l2 * mu'w`` subject to ``sum(w) = 1``, per-asset floors and
ceilings, and optionally ``w = tau * lots`` with integer lots.

Two interchangeable kernels do the numeric work: a compiled one
(``_ckernel``) and a pure-numpy fallback (``_pykernel``). The compiled one is
used when importable unless ``DNOPORT_BACKEND=python`` is set.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _pykernel
from ._pykernel import Infeasible, KernelError

try:
    from . import _ckernel
except ImportError:  # extension not built
    _ckernel = None

__all__ = [
    "SubTask",
    "SubSolution",
    "InfeasibleTask",
    "NotPSDError",
    "solve",
    "solve_continuous",
    "solve_lot",
    "scalarize",
    "kkt_residual",
    "available_backends",
    "backend",
    "set_backend",
    "use_backend",
]

PSD_TOL = 1e-8


class InfeasibleTask(ValueError):
    """The selected assets cannot hold a full allocation under the bounds."""


class NotPSDError(ValueError):
    """The covariance sub-matrix is indefinite beyond the repair tolerance."""


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _ckernel is not None else [])


def _pick(name):
    if name == "python":
        return _pykernel
    if name == "cython":
        if _ckernel is None:
            raise ImportError("compiled kernel not built; reinstall with Cython available")
        return _ckernel
    raise ValueError(f"unknown backend {name!r}")


_env = os.environ.get("DNOPORT_BACKEND", "").strip().lower()
_kernel = _pick(_env) if _env else (_ckernel or _pykernel)


def backend() -> str:
    return _kernel.NAME


def set_backend(name: str) -> None:
    global _kernel
    _kernel = _pick(name)


@contextmanager
def use_backend(name: str):
    global _kernel
    prev = _kernel
    _kernel = _pick(name)
    try:
        yield
    finally:
        _kernel = prev


def scalarize(pair, lam) -> float:
    """Weighted-sum value ``l1 * risk - l2 * return`` (both terms minimized)."""
    risk, ret = (pair.risk, pair.ret) if hasattr(pair, "risk") else pair
    l1, l2 = lam
    if l1 < 0 or l2 < 0:
        raise ValueError("weight vector components must be non-negative")
    return l1 * risk - l2 * ret


@dataclass(frozen=True, eq=False)
class SubTask:
    selected: np.ndarray
    lam: tuple
    covK: np.ndarray
    muK: np.ndarray
    eps: np.ndarray
    ups: np.ndarray
    tau: float = 0.0
    lot_lo: np.ndarray | None = None
    lot_hi: np.ndarray | None = None

    @property
    def K(self) -> int:
        return len(self.muK)

    @property
    def total_lots(self) -> int:
        return int(round(1.0 / self.tau)) if self.tau > 0 else 0

    @classmethod
    def build(cls, inst, cs, selected, lam) -> "SubTask":
        sel = np.asarray(selected, dtype=np.int64)
        return cls.from_arrays(
            inst.cov[np.ix_(sel, sel)], inst.mu[sel], lam, cs.eps[sel], cs.ups[sel], cs.tau, selected=sel
        )

    @classmethod
    def from_arrays(cls, covK, muK, lam, eps=0.0, ups=1.0, tau=0.0, selected=None) -> "SubTask":
        muK = np.asarray(muK, dtype=float)
        k = len(muK)
        covK = np.asarray(covK, dtype=float).reshape(k, k)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), (k,)).copy()
        ups = np.broadcast_to(np.asarray(ups, dtype=float), (k,)).copy()
        l1, l2 = (float(v) for v in lam)
        if l1 < 0 or l2 < 0 or abs(l1 + l2 - 1.0) > 1e-9:
            raise ValueError(f"weight vector {lam} must be non-negative and sum to 1")
        covK = 0.5 * (covK + covK.T)
        min_eig = float(np.linalg.eigvalsh(covK).min()) if k > 1 else float(covK[0, 0])
        if min_eig < -PSD_TOL:
            raise NotPSDError(f"covariance sub-matrix has eigenvalue {min_eig:.3e}")
        if min_eig < 0:
            covK = covK + (-min_eig) * np.eye(k)
        lot_lo = lot_hi = None
        if tau > 0:
            lot_lo = np.ceil(eps / tau - 1e-9).astype(np.int64)
            lot_hi = np.floor(ups / tau + 1e-9).astype(np.int64)
            M = int(round(1.0 / tau))
            if np.any(lot_lo > lot_hi) or lot_lo.sum() > M or lot_hi.sum() < M:
                raise InfeasibleTask(f"lot ranges sum to [{lot_lo.sum()}, {lot_hi.sum()}], need {M}")
        elif eps.sum() > 1.0 + 1e-12 or ups.sum() < 1.0 - 1e-12 or np.any(eps > ups):
            raise InfeasibleTask(f"bounds sum to [{eps.sum()}, {ups.sum()}], need 1")
        if selected is None:
            selected = np.arange(k)
        return cls(np.asarray(selected), (l1, l2), covK, muK, eps, ups, float(tau), lot_lo, lot_hi)

    def value(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return self.lam[0] * float(w @ self.covK @ w) - self.lam[1] * float(self.muK @ w)


@dataclass
class SubSolution:
    w: np.ndarray
    g: float
    lots: np.ndarray | None = None
    status: str = "optimal"
    nodes: int = 0
    relaxed_g: float | None = None
    trace: list | None = None


def solve(task: SubTask, **kw) -> SubSolution:
    return solve_lot(task, **kw) if task.tau > 0 else solve_continuous(task, **kw)


def solve_continuous(task: SubTask, return_floor: float | None = None) -> SubSolution:
    """Global optimum of the convex QP, ignoring any lot size on the task."""
    l1, l2 = task.lam
    if l1 == 0.0:
        w = _pykernel.greedy_linear(-task.muK, task.eps, task.ups, 1.0)
        if return_floor is not None and task.muK @ w < return_floor - 1e-12:
            raise InfeasibleTask("return floor unreachable")
    else:
        a, b = (task.muK, return_floor) if return_floor is not None else (None, -np.inf)
        try:
            w, _ = _kernel.qp_solve(2.0 * l1 * task.covK, -l2 * task.muK, task.eps, task.ups, 1.0, a, b)
        except Infeasible as exc:
            raise InfeasibleTask(str(exc)) from None
    return SubSolution(w=w, g=task.value(w))


def solve_lot(task: SubTask, return_floor: float | None = None, debug: bool = False) -> SubSolution:
    """Proven-optimal round-lot allocation by branch-and-bound.

    With ``debug=True`` the explored nodes are recorded as text lines on
    ``SubSolution.trace``.
    """
    if task.tau <= 0:
        raise ValueError("solve_lot needs a task with tau > 0")
    l1, l2 = task.lam
    tau, M = task.tau, task.total_lots
    trace = [] if debug else None
    if l1 == 0.0:
        lots = _pykernel.greedy_lots(-task.muK, task.lot_lo, task.lot_hi, M)
        w = tau * lots
        if return_floor is not None and task.muK @ w < return_floor - 1e-12:
            raise InfeasibleTask("return floor unreachable")
        return SubSolution(w=w, g=task.value(w), lots=lots, relaxed_g=task.value(w), trace=trace)
    Q = 2.0 * l1 * tau * tau * task.covK
    c = -l2 * tau * task.muK
    a, b = (tau * task.muK, return_floor) if return_floor is not None else (None, -np.inf)
    try:
        lots, _, nodes, root = _kernel.lot_solve(Q, c, task.lot_lo, task.lot_hi, M, a, b, 1e-12, trace)
    except Infeasible as exc:
        raise InfeasibleTask(str(exc)) from None
    lots = np.asarray(lots, dtype=np.int64)
    w = tau * lots
    return SubSolution(w=w, g=task.value(w), lots=lots, nodes=nodes, relaxed_g=float(root), trace=trace)


def kkt_residual(task: SubTask, w) -> float:
    """Largest violation of the KKT conditions of the continuous problem at ``w``.

    Covers primal feasibility, stationarity on free coordinates and the sign
    of bound multipliers; the equality multiplier is fitted as well as the
    active bounds allow.
    """
    w = np.asarray(w, dtype=float)
    l1, l2 = task.lam
    g = 2.0 * l1 * task.covK @ w - l2 * task.muK
    lo, hi = task.eps, task.ups
    primal = max(abs(w.sum() - 1.0), float(np.max(lo - w, initial=0.0)), float(np.max(w - hi, initial=0.0)))
    tol = 1e-12
    at_lo = w <= lo + tol
    at_hi = (w >= hi - tol) & ~at_lo
    free = ~(at_lo | at_hi)
    if free.any():
        nu = -float(g[free].mean())
        stat = float(np.abs(g[free] + nu).max())
    else:
        # nu must satisfy g_i + nu >= 0 on lower-active and <= 0 on upper-active coordinates
        lower = float((-g[at_lo]).max(initial=-np.inf))
        upper = float((-g[at_hi]).min(initial=np.inf))
        nu = lower if np.isinf(upper) else upper if np.isinf(lower) else 0.5 * (lower + upper)
        stat = 0.0
    sign = max(
        float(np.max(-(g[at_lo & (hi > lo)] + nu), initial=0.0)),
        float(np.max(g[at_hi & (hi > lo)] + nu, initial=0.0)),
    )
    return max(primal, stat, sign)
