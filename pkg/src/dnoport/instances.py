"""Problem instances and constraint sets.

Instances come from OR-Library ``portN.txt`` files, CSV close-price
histories, or a seeded random generator. Covariance is always derived
from per-asset volatilities and correlations, never read directly.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class InstanceError(ValueError):
    """Raised when an instance file or constraint set is invalid."""


@dataclass(frozen=True)
class HoldoutSeries:
    """Close prices after the in-sample split, kept for out-of-sample use."""

    dates: tuple[str, ...]
    prices: np.ndarray  # (days, n)
    base_prices: np.ndarray  # price on the last in-sample day, (n,)


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    mu: np.ndarray
    sigma: np.ndarray
    corr: np.ndarray
    cov: np.ndarray
    holdout: HoldoutSeries | None = None

    @property
    def n(self) -> int:
        return len(self.mu)

    @classmethod
    def from_moments(cls, name, mu, sigma, corr, holdout=None) -> "Instance":
        mu = np.asarray(mu, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        corr = np.asarray(corr, dtype=float)
        n = len(mu)
        if n < 1:
            raise InstanceError("instance needs at least one asset")
        if sigma.shape != (n,) or corr.shape != (n, n):
            raise InstanceError(f"dimension mismatch: n={n}, sigma {sigma.shape}, corr {corr.shape}")
        if np.any(sigma < 0):
            raise InstanceError("negative volatility")
        if not np.allclose(corr, corr.T, atol=0.0, rtol=0.0):
            raise InstanceError("correlation matrix is not symmetric")
        if np.any(np.abs(np.diag(corr) - 1.0) > 1e-12) or np.any(np.abs(corr) > 1.0 + 1e-12):
            raise InstanceError("correlation matrix needs unit diagonal and |rho| <= 1")
        cov = corr * np.outer(sigma, sigma)
        return cls(name, mu, sigma, corr, cov, holdout)

    @classmethod
    def from_covariance(cls, name, mu, cov, holdout=None) -> "Instance":
        mu = np.asarray(mu, dtype=float)
        cov = np.asarray(cov, dtype=float)
        n = len(mu)
        if cov.shape != (n, n):
            raise InstanceError(f"covariance shape {cov.shape} does not match n={n}")
        cov = 0.5 * (cov + cov.T)
        sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = cov / np.outer(sigma, sigma)
        zero = sigma == 0
        corr[zero, :] = 0.0
        corr[:, zero] = 0.0
        np.fill_diagonal(corr, 1.0)
        corr = np.clip(corr, -1.0, 1.0)
        return cls(name, mu, sigma, corr, cov, holdout)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.mu, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.cov, dtype="<f8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Cardinality, floor/ceiling, pre-assignment and round-lot settings.

    ``eps``/``ups`` are per-asset floor and ceiling weights, ``z`` flags
    pre-assigned assets and ``tau`` is the lot size (0 disables lots).
    """

    K: int
    eps: np.ndarray
    ups: np.ndarray
    z: np.ndarray
    tau: float = 0.0

    @property
    def L(self) -> int:
        return int(self.z.sum())

    @property
    def n(self) -> int:
        return len(self.eps)

    @property
    def total_lots(self) -> int:
        return int(round(1.0 / self.tau)) if self.tau > 0 else 0

    @property
    def preassigned(self) -> np.ndarray:
        return np.flatnonzero(self.z)

    def lot_bounds(self, idx=None) -> tuple[np.ndarray, np.ndarray]:
        """Integer lot range per asset, ``ceil(eps/tau)`` to ``floor(ups/tau)``."""
        if self.tau <= 0:
            raise InstanceError("lot bounds need tau > 0")
        eps = self.eps if idx is None else self.eps[idx]
        ups = self.ups if idx is None else self.ups[idx]
        lo = np.ceil(eps / self.tau - 1e-9).astype(np.int64)
        hi = np.floor(ups / self.tau + 1e-9).astype(np.int64)
        return lo, hi

    def echo(self) -> dict:
        return {
            "K": self.K,
            "eps": self.eps.tolist(),
            "ups": self.ups.tolist(),
            "preassigned": self.preassigned.tolist(),
            "tau": self.tau,
        }

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.K).encode())
        h.update(np.ascontiguousarray(self.eps, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.ups, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.z, dtype="<i8").tobytes())
        h.update(repr(float(self.tau)).encode())
        return h.hexdigest()[:16]


def make_constraints(n: int, K: int, eps=0.0, ups=1.0, preassigned=(), tau=0.0) -> ConstraintSet:
    """Build and validate a :class:`ConstraintSet`; scalars broadcast to all assets."""
    eps_v = np.broadcast_to(np.asarray(eps, dtype=float), (n,)).copy()
    ups_v = np.broadcast_to(np.asarray(ups, dtype=float), (n,)).copy()
    z = np.zeros(n, dtype=np.int64)
    for i in preassigned:
        if not 0 <= int(i) < n:
            raise InstanceError(f"pre-assigned index {i} outside 0..{n - 1}")
        z[int(i)] = 1
    cs = ConstraintSet(int(K), eps_v, ups_v, z, float(tau))
    validate_constraints(cs)
    return cs


def benchmark_constraints(n: int) -> ConstraintSet:
    """The benchmark constraint set: K=10, floor 0.01, ceiling 1, asset 30 pre-assigned, lot 0.008.

    Asset 30 is counted from 1, so it is index 29 here.
    """
    return make_constraints(n, K=10, eps=0.01, ups=1.0, preassigned=(29,), tau=0.008)


def validate_constraints(cs: ConstraintSet) -> None:
    n, K, L = cs.n, cs.K, cs.L
    if cs.ups.shape != (n,) or cs.z.shape != (n,):
        raise InstanceError("constraint vectors have inconsistent length")
    if np.any(cs.eps < 0) or np.any(cs.eps > cs.ups) or np.any(cs.ups > 1):
        raise InstanceError("bounds must satisfy 0 <= eps <= ups <= 1")
    if not L <= K <= n:
        raise InstanceError(f"need L <= K <= n, got L={L}, K={K}, n={n}")
    if K < 1:
        raise InstanceError("K must be at least 1")
    if cs.tau < 0:
        raise InstanceError("tau must be non-negative")
    if cs.tau > 0:
        inv = 1.0 / cs.tau
        if abs(inv - round(inv)) > 1e-9:
            raise InstanceError(f"1/tau = {inv} is not an integer")
    if not _some_subset_feasible(cs):
        raise InstanceError("no K-subset admits weights summing to one under the bounds")


def _some_subset_feasible(cs: ConstraintSet) -> bool:
    pre = cs.z.astype(bool)
    free = np.flatnonzero(~pre)
    need = cs.K - cs.L
    if cs.tau > 0:
        lo, hi = cs.lot_bounds()
        M = cs.total_lots
        if np.any(lo > hi):
            # assets with an empty lot range can never be held
            if np.any(lo[pre] > hi[pre]):
                return False
            free = free[lo[free] <= hi[free]]
            if len(free) < need:
                return False
        base_lo = int(lo[pre].sum())
        base_hi = int(hi[pre].sum())
        budget = M - base_lo
        if budget < 0:
            return False
        # best[c, s]: largest ceiling sum over c chosen assets whose floor sum is s
        best = np.full((need + 1, budget + 1), -1, dtype=np.int64)
        best[0, 0] = 0
        for j in free:
            lj, hj = int(lo[j]), int(hi[j])
            if lj > budget:
                continue
            for c in range(min(need, len(free)), 0, -1):
                prev = best[c - 1, : budget + 1 - lj]
                cand = np.where(prev >= 0, prev + hj, -1)
                seg = best[c, lj:]
                np.maximum(seg, cand, out=seg)
        row = best[need]
        return bool(np.any((row >= 0) & (row + base_hi >= M)))
    # continuous weights: exact when the free assets share their bounds
    lo_pre, hi_pre = cs.eps[pre].sum(), cs.ups[pre].sum()
    lo_free = np.sort(cs.eps[free])
    hi_free = np.sort(cs.ups[free])[::-1]
    if len(free) < need:
        return False
    min_lo = lo_pre + lo_free[:need].sum()
    max_hi = hi_pre + hi_free[:need].sum()
    return bool(min_lo <= 1.0 + 1e-12 and max_hi >= 1.0 - 1e-12)


# --------------------------------------------------------------------------
# OR-Library format


def load_orlibrary(path, name: str | None = None) -> Instance:
    """Parse an OR-Library portfolio file.

    Line 1 holds ``n``, the next ``n`` lines hold ``mu sigma`` per asset, and
    the remaining lines hold ``i j rho`` with 1-based indices, one line per
    pair ``i <= j``.
    """
    path = Path(path)
    lines = [(k + 1, ln.split()) for k, ln in enumerate(path.read_text().splitlines())]
    lines = [(k, toks) for k, toks in lines if toks]
    if not lines:
        raise InstanceError(f"{path}: empty file")
    k0, toks = lines[0]
    try:
        n = int(toks[0])
    except (ValueError, IndexError):
        raise InstanceError(f"{path}:{k0}: expected asset count, got {' '.join(toks)!r}") from None
    if n < 1:
        raise InstanceError(f"{path}:{k0}: asset count must be positive")
    if len(lines) < n + 1:
        raise InstanceError(f"{path}: n mismatch, header says {n} assets but only {len(lines) - 1} data lines")
    mu = np.empty(n)
    sigma = np.empty(n)
    for a, (k, toks) in enumerate(lines[1 : n + 1]):
        if len(toks) != 2:
            raise InstanceError(f"{path}:{k}: expected 'mu sigma', got {' '.join(toks)!r}")
        try:
            mu[a], sigma[a] = float(toks[0]), float(toks[1])
        except ValueError:
            raise InstanceError(f"{path}:{k}: cannot parse {' '.join(toks)!r}") from None
    corr = np.full((n, n), np.nan)
    for k, toks in lines[n + 1 :]:
        if len(toks) != 3:
            raise InstanceError(f"{path}:{k}: expected 'i j rho', got {' '.join(toks)!r}")
        try:
            i, j, rho = int(toks[0]) - 1, int(toks[1]) - 1, float(toks[2])
        except ValueError:
            raise InstanceError(f"{path}:{k}: cannot parse {' '.join(toks)!r}") from None
        if not (0 <= i < n and 0 <= j < n):
            raise InstanceError(f"{path}:{k}: pair ({i + 1},{j + 1}) outside 1..{n}")
        if i > j:
            i, j = j, i
        if not np.isnan(corr[i, j]):
            raise InstanceError(f"{path}:{k}: duplicate correlation pair ({i + 1},{j + 1})")
        corr[i, j] = corr[j, i] = rho
    iu, ju = np.triu_indices(n)
    gaps = np.flatnonzero(np.isnan(corr[iu, ju]))
    if len(gaps):
        i, j = iu[gaps[0]], ju[gaps[0]]
        raise InstanceError(f"{path}: missing correlation pair ({i + 1},{j + 1})")
    try:
        return Instance.from_moments(name or path.stem, mu, sigma, corr)
    except InstanceError as exc:
        raise InstanceError(f"{path}: {exc}") from None


def write_orlibrary(inst: Instance, path) -> None:
    n = inst.n
    out = [f"{n}"]
    out += [f"{m!r} {s!r}" for m, s in zip(inst.mu.tolist(), inst.sigma.tolist())]
    for i in range(n):
        for j in range(i, n):
            out.append(f"{i + 1} {j + 1} {float(inst.corr[i, j])!r}")
    Path(path).write_text("\n".join(out) + "\n")


# --------------------------------------------------------------------------
# price histories


def load_price_history(path, split: str | None = None, name: str | None = None) -> Instance:
    """Build an instance from a CSV of close prices.

    The first column is an ISO-8601 date, every other column one asset.
    Rows up to and including ``split`` are in-sample; later rows are kept on
    ``Instance.holdout``. Each in-sample row is turned into a profit relative
    to the first row, and mu/cov are the mean and sample covariance (divisor
    ``T - 1``) of those profits over rows ``t >= 1``. A single profit row has
    no dispersion, so its covariance is zero.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if len(rows) < 2:
        raise InstanceError(f"{path}: no price rows")
    header, body = rows[0], rows[1:]
    width = len(header)
    if width < 2:
        raise InstanceError(f"{path}: need a date column and at least one asset column")
    dates, prices = [], []
    for k, r in enumerate(body, start=2):
        if len(r) != width:
            raise InstanceError(f"{path}:{k}: ragged row, expected {width} fields, got {len(r)}")
        dates.append(r[0].strip())
        try:
            prices.append([float(x) for x in r[1:]])
        except ValueError:
            raise InstanceError(f"{path}:{k}: non-numeric price") from None
    prices = np.asarray(prices, dtype=float)
    if split is None:
        n_in = len(dates)
    else:
        n_in = sum(1 for d in dates if d <= split)
    base = prices[0]
    if np.any(base <= 0):
        bad = int(np.flatnonzero(base <= 0)[0])
        raise InstanceError(f"{path}: non-positive baseline price for asset {header[bad + 1]!r}")
    if n_in < 2:
        raise InstanceError(f"{path}: fewer than 2 in-sample rows")
    profit = (prices[1:n_in] - base) / base
    mu = profit.mean(axis=0)
    if len(profit) >= 2:
        cov = np.cov(profit, rowvar=False, ddof=1).reshape(len(mu), len(mu))
    else:
        cov = np.zeros((len(mu), len(mu)))
    holdout = None
    if n_in < len(dates):
        holdout = HoldoutSeries(tuple(dates[n_in:]), prices[n_in:], prices[n_in - 1].copy())
    return Instance.from_covariance(name or path.stem, mu, cov, holdout)


def profit_series(prices) -> np.ndarray:
    """Per-day profit relative to the first row, excluding the baseline row."""
    prices = np.asarray(prices, dtype=float)
    return (prices[1:] - prices[0]) / prices[0]


# --------------------------------------------------------------------------
# synthetic instances


def random_instance(n: int, seed: int, name: str | None = None) -> Instance:
    """Seeded random instance with a factor-model correlation matrix."""
    if n < 1:
        raise InstanceError("n must be at least 1")
    rng = np.random.default_rng(seed)
    n_factors = max(1, min(3, n - 1))
    loadings = rng.uniform(-1.0, 1.0, size=(n, n_factors))
    idio = rng.uniform(0.2, 1.0, size=n)
    raw = loadings @ loadings.T + np.diag(idio)
    d = np.sqrt(np.diag(raw))
    corr = raw / np.outer(d, d)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    sigma = rng.uniform(0.01, 0.5, size=n)
    mu = rng.uniform(-0.05, 0.15, size=n)
    return Instance.from_moments(name or f"random-n{n}-s{seed}", mu, sigma, corr)


def n_subsets(cs: ConstraintSet) -> int:
    return math.comb(cs.n - cs.L, cs.K - cs.L)
