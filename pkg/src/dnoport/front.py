"""Objective-space fronts: dominance, filtering, and file persistence."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCES = ("enumeration", "epsilon-constraint", "long-run-union", "TUCPF", "UCPF", "run")


def dominates(p, q, tol: float = 0.0) -> bool:
    """True when ``p`` dominates ``q`` (risk minimized, return maximized) by more than ``tol``."""
    no_worse = p[0] <= q[0] + tol and p[1] >= q[1] - tol
    better = p[0] < q[0] - tol or p[1] > q[1] + tol
    return no_worse and better


def nondominated_mask(points) -> np.ndarray:
    """Mask of points not dominated by any other; exact duplicates keep their first copy."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    m = len(pts)
    if m == 0:
        return np.zeros(0, dtype=bool)
    # ascending risk, then descending return, then original position
    order = np.lexsort((np.arange(m), -pts[:, 1], pts[:, 0]))
    keep = np.zeros(m, dtype=bool)
    best_ret = -np.inf
    for idx in order:
        if pts[idx, 1] > best_ret:
            keep[idx] = True
            best_ret = pts[idx, 1]
    return keep


def nondominated(points) -> np.ndarray:
    """Nondominated subset sorted by ascending risk."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    out = pts[nondominated_mask(pts)]
    return out[np.argsort(out[:, 0], kind="stable")]


def mutually_nondominated(a, b, tol: float) -> bool:
    """No point of ``a`` dominates a point of ``b`` by more than ``tol``, and vice versa."""
    return not (_any_dominated(a, b, tol) or _any_dominated(b, a, tol))


def dominated_pairs(a, b, tol: float) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)`` where ``a[i]`` dominates ``b[j]`` beyond ``tol``."""
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    out = []
    for j, q in enumerate(b):
        no_worse = (a[:, 0] <= q[0] + tol) & (a[:, 1] >= q[1] - tol)
        better = (a[:, 0] < q[0] - tol) | (a[:, 1] > q[1] + tol)
        for i in np.flatnonzero(no_worse & better):
            out.append((int(i), j))
    return out


def _any_dominated(a, b, tol) -> bool:
    return bool(dominated_pairs(a, b, tol))


@dataclass
class ReferenceFront:
    points: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict)
    weights: np.ndarray | None = None  # optional (len, n) allocations behind the points

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        order = np.argsort(pts[:, 0], kind="stable")
        self.points = pts[order]
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)[order]

    @classmethod
    def from_points(cls, points, provenance, meta=None, weights=None) -> "ReferenceFront":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        keep = nondominated_mask(pts)
        w = None if weights is None else np.asarray(weights, dtype=float)[keep]
        return cls(pts[keep], provenance, dict(meta or {}), w)

    @property
    def fingerprint(self) -> str | None:
        return self.meta.get("fingerprint")

    def __len__(self):
        return len(self.points)


def problem_fingerprint(inst, cs) -> str:
    return f"{inst.fingerprint()}-{cs.fingerprint()}"


def write_front_csv(points, path) -> None:
    Path(path).write_text(front_csv_text(points))


def front_csv_text(points, extra: dict | None = None) -> str:
    """CSV with ``risk,return`` columns and full-precision floats."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    head = ["risk", "return"] + list(extra or {})
    wr.writerow(head)
    cols = list((extra or {}).values())
    for k, (r, g) in enumerate(pts):
        wr.writerow([repr(float(r)), repr(float(g))] + [c[k] for c in cols])
    return buf.getvalue()


def read_front_csv(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return np.zeros((0, 2))
    return np.array([[float(r["risk"]), float(r["return"])] for r in rows])


def save_reference(front: ReferenceFront, path) -> tuple[Path, Path]:
    path = Path(path)
    write_front_csv(front.points, path)
    side = path.with_suffix(".json")
    side.write_text(json.dumps({"provenance": front.provenance, **front.meta}, indent=2, sort_keys=True) + "\n")
    return path, side


def load_reference(path, expect_fingerprint: str | None = None) -> ReferenceFront:
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else {}
    provenance = meta.pop("provenance", "UCPF")
    front = ReferenceFront(read_front_csv(path), provenance, meta)
    if expect_fingerprint is not None and front.fingerprint != expect_fingerprint:
        raise ValueError(
            f"reference front {path} was built for problem {front.fingerprint}, not {expect_fingerprint}"
        )
    return front
