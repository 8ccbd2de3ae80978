"""Hypervolume and generational distance in normalized (risk, -return) space."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .front import ReferenceFront, nondominated

REF_POINT = (1.1, 1.1)


@dataclass(frozen=True)
class MetricContext:
    """Normalization anchored on a reference front.

    ``ideal`` and ``nadir`` are the component-wise min and max of the
    minimization pair ``(risk, -return)`` over the reference points.
    """

    ref: ReferenceFront
    ideal: tuple
    nadir: tuple
    r: tuple = REF_POINT

    @classmethod
    def from_reference(cls, ref: ReferenceFront, r=REF_POINT) -> "MetricContext":
        pts = np.asarray(ref.points, dtype=float).reshape(-1, 2)
        if len(pts) == 0:
            raise ValueError("reference front is empty")
        mins = np.column_stack([pts[:, 0], -pts[:, 1]])
        return cls(ref, tuple(mins.min(axis=0).tolist()), tuple(mins.max(axis=0).tolist()), tuple(r))

    def describe(self) -> dict:
        return {
            "normalization": "reference-front ideal/nadir on (risk, -return)",
            "ideal": list(self.ideal),
            "nadir": list(self.nadir),
            "r": list(self.r),
            "reference_provenance": self.ref.provenance,
            "reference_fingerprint": self.ref.fingerprint,
        }


@dataclass(frozen=True)
class MetricReport:
    hv: float
    gd: float
    size: int
    empty: bool = False

    def as_dict(self) -> dict:
        return {"hv": self.hv, "gd": self.gd, "size": self.size, "empty": self.empty}


def normalize(points, ctx: MetricContext) -> np.ndarray:
    """Map ``(risk, return)`` pairs to normalized minimization coordinates.

    A component whose reference range is degenerate maps to 0.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    mins = np.column_stack([pts[:, 0], -pts[:, 1]])
    lo = np.asarray(ctx.ideal)
    span = np.asarray(ctx.nadir) - lo
    out = np.zeros_like(mins)
    ok = span > 0
    out[:, ok] = (mins[:, ok] - lo[ok]) / span[ok]
    return out


def hypervolume(points, r=REF_POINT) -> float:
    """Exact 2-D hypervolume of minimization points bounded by ``r``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r1, r2 = float(r[0]), float(r[1])
    pts = pts[(pts[:, 0] <= r1) & (pts[:, 1] <= r2)]
    if len(pts) == 0:
        return 0.0
    # nondominated() maximizes the second column, so flip the sign of f2
    nd = nondominated(np.column_stack([pts[:, 0], -pts[:, 1]]))
    f1 = nd[:, 0]
    f2 = -nd[:, 1]
    nxt = np.append(f1[1:], r1)
    return float(np.sum((nxt - f1) * (r2 - f2)))


def gd(points, ref) -> tuple[float, bool]:
    """Generational distance ``sqrt(sum d_i^2) / |Q|``.

    Returns ``(value, empty_flag)``; an empty point set yields ``(0.0, True)``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    R = np.asarray(ref, dtype=float).reshape(-1, 2)
    if len(R) == 0:
        raise ValueError("reference set is empty")
    if len(pts) == 0:
        return 0.0, True
    d2 = ((pts[:, None, :] - R[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return float(np.sqrt(d2.sum()) / len(pts)), False


def report(points, ctx: MetricContext) -> MetricReport:
    """HV and GD of a ``(risk, return)`` front against the context's reference."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    q = normalize(pts, ctx)
    g, empty = gd(q, normalize(ctx.ref.points, ctx))
    return MetricReport(hypervolume(q, ctx.r), g, len(pts), empty)
