"""Decomposition skeleton: weight grid, neighborhoods, mating pools, replacement.

Nothing here knows about portfolios. A candidate only has to expose
``g_for(j)``, its scalarized value under subproblem ``j``'s weights, and
``state_for(j)``, the incumbent record to store when it wins subproblem ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

import numpy as np


@dataclass(frozen=True)
class WeightGrid:
    vectors: np.ndarray
    neighbors: np.ndarray

    @property
    def N(self) -> int:
        return len(self.vectors)

    @property
    def T(self) -> int:
        return self.neighbors.shape[1]

    def lam(self, i: int) -> tuple[float, float]:
        v = self.vectors[i]
        return float(v[0]), float(v[1])


def build_grid(N: int, T: int) -> WeightGrid:
    """Uniform 2-simplex grid with endpoints and Euclidean T-neighborhoods."""
    if N < 2:
        raise ValueError(f"population size N={N} must be at least 2")
    if T < 2:
        raise ValueError(f"neighborhood size T={T} must be at least 2")
    if T > N:
        raise ValueError(f"neighborhood size T={T} exceeds population size N={N}")
    l1 = np.arange(N) / (N - 1)
    vectors = np.column_stack([l1, 1.0 - l1])
    dist = np.linalg.norm(vectors[:, None, :] - vectors[None, :, :], axis=2)
    # stable sort keeps i first among its equidistant ties, so self is always included
    order = np.argsort(dist, axis=1, kind="stable")
    return WeightGrid(vectors, order[:, :T].copy())


def select_pool(i: int, grid: WeightGrid, p_delta: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= p_delta <= 1.0:
        raise ValueError(f"p_delta={p_delta} outside [0, 1]")
    if rng.random() < p_delta:
        return grid.neighbors[i]
    return np.arange(grid.N)


class Candidate(Protocol):
    def g_for(self, j: int) -> float: ...

    def state_for(self, j: int) -> Any: ...


@dataclass
class SubproblemState:
    index: int
    lam: tuple
    incumbent: Any
    g: float


def replace(
    pool: np.ndarray,
    cand: Candidate,
    states: list[SubproblemState],
    n_r: float,
    rng: np.random.Generator,
    log: list | None = None,
) -> int:
    """Scan the pool in random order, replacing strictly worse incumbents.

    Stops once ``n_r`` replacements were made. ``log`` collects the replaced
    indices when given.
    """
    count = 0
    for j in rng.permutation(pool):
        if count >= n_r:
            break
        j = int(j)
        gj = cand.g_for(j)
        if gj < states[j].g:
            states[j].incumbent = cand.state_for(j)
            states[j].g = gj
            count += 1
            if log is not None:
                log.append(j)
    return count
