"""Portfolios, the two objectives, and constraint checking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instances import ConstraintSet, Instance

SUM_TOL = 1e-9
BOUND_TOL = 1e-9
LOT_TOL = 1e-6


@dataclass(frozen=True)
class ObjectivePair:
    risk: float
    ret: float


@dataclass
class Portfolio:
    s: np.ndarray
    w: np.ndarray
    risk: float = float("nan")
    ret: float = float("nan")

    @property
    def objectives(self) -> ObjectivePair:
        return ObjectivePair(self.risk, self.ret)

    @classmethod
    def from_weights(cls, inst: Instance, w) -> "Portfolio":
        w = np.asarray(w, dtype=float)
        p = cls((w > 0).astype(np.int64), w)
        evaluate(inst, p)
        return p


def evaluate(inst: Instance, p: Portfolio) -> ObjectivePair:
    """Risk ``w' cov w`` and return ``mu' w``; both are written back onto ``p``."""
    w = np.asarray(p.w, dtype=float)
    if w.shape != (inst.n,):
        raise ValueError(f"weight vector has shape {w.shape}, instance has n={inst.n}")
    p.risk = float(w @ inst.cov @ w)
    p.ret = float(inst.mu @ w)
    return p.objectives


@dataclass(frozen=True)
class Violation:
    constraint: str
    detail: str


def check_feasible(cs: ConstraintSet, p: Portfolio) -> list[Violation]:
    """List every violated constraint; an empty list means feasible."""
    s = np.asarray(p.s)
    w = np.asarray(p.w, dtype=float)
    if s.shape != (cs.n,) or w.shape != (cs.n,):
        raise ValueError(f"portfolio dimensions {s.shape}/{w.shape} do not match n={cs.n}")
    out: list[Violation] = []

    nonbinary = np.flatnonzero((s != 0) & (s != 1))
    if len(nonbinary):
        out.append(Violation("binary", f"s not in {{0,1}} at {nonbinary.tolist()}"))
    sb = s == 1

    total = float(w.sum())
    if abs(total - 1.0) > SUM_TOL:
        out.append(Violation("sum-to-one", f"sum(w) = {total!r}"))
    if int(sb.sum()) != cs.K:
        out.append(Violation("cardinality", f"{int(sb.sum())} assets selected, K = {cs.K}"))

    low = sb & (w < cs.eps - BOUND_TOL)
    high = sb & (w > cs.ups + BOUND_TOL)
    stray = ~sb & (np.abs(w) > BOUND_TOL)
    bad = np.flatnonzero(low | high | stray)
    if len(bad):
        out.append(Violation("floor-ceiling", f"weights outside [eps*s, ups*s] at {bad.tolist()}"))

    missing = np.flatnonzero((cs.z == 1) & ~sb)
    if len(missing):
        out.append(Violation("pre-assignment", f"pre-assigned assets not held: {missing.tolist()}"))

    if cs.tau > 0:
        lots = w / cs.tau
        off = np.flatnonzero(np.abs(lots - np.round(lots)) > LOT_TOL)
        if len(off):
            out.append(Violation("round-lot", f"w/tau not integral at {off.tolist()}"))
    return out


def is_feasible(cs: ConstraintSet, p: Portfolio) -> bool:
    return not check_feasible(cs, p)
