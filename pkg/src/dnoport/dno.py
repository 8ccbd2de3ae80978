"""Selection search with exact per-subproblem capital allocation.

The evolutionary loop only searches which assets to hold. A genotype in
``[0, 1]^n`` decodes to a K-asset selection; every selection is then scored
under a weight vector by solving its allocation problem exactly, so a whole
local risk/return front collapses to one comparable number per subproblem.
"""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import subsolver
from .front import nondominated, nondominated_mask
from .instances import ConstraintSet, Instance, validate_constraints
from .moead import SubproblemState, WeightGrid, build_grid, replace, select_pool
from .portfolio import Portfolio, evaluate
from .subsolver import InfeasibleTask, SubTask, scalarize

MODES = ("per-neighbor", "single-solve")
INIT_ATTEMPTS = 10_000


@dataclass
class DnoConfig:
    """Algorithm parameters; the defaults are the recommended settings."""

    N: int = 100
    F: float = 0.5
    CR: float = 0.9
    eta_m: float = 20.0
    p_m: float | None = None  # None means 1/n
    T: int = 10
    n_r: float = 2
    p_delta: float = 0.9
    eval_cap: int = 1000
    time_cap: float | None = None
    mode: str = "per-neighbor"
    seed: int = 0
    workers: int = 1
    p_de: float = 0.5

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 2 <= self.T <= self.N:
            raise ValueError(f"need 2 <= T <= N, got T={self.T}, N={self.N}")
        for key in ("CR", "p_delta", "p_de"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{key}={v} outside [0, 1]")
        if self.p_m is not None and not 0.0 <= self.p_m <= 1.0:
            raise ValueError(f"p_m={self.p_m} outside [0, 1]")
        if self.eta_m < 0 or self.F < 0:
            raise ValueError("eta_m and F must be non-negative")
        if self.eval_cap < 0:
            raise ValueError("eval_cap must be non-negative")
        if self.time_cap is not None and self.time_cap < 0:
            raise ValueError("time_cap must be non-negative")
        if self.n_r < 1:
            raise ValueError("n_r must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(d["n_r"]):
            d["n_r"] = "inf"
        return d


@dataclass
class EvalBudget:
    cap: int
    wall_cap: float | None = None
    used: int = 0
    start: float = field(default_factory=time.perf_counter)

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def exhausted(self) -> bool:
        if self.used >= self.cap:
            return True
        return self.wall_cap is not None and self.elapsed() >= self.wall_cap

    def consume(self) -> None:
        if self.used >= self.cap:
            raise RuntimeError("evaluation budget exceeded")
        self.used += 1


# --- genotype operators -------------------------------------------------------


def decode(v, cs: ConstraintSet) -> np.ndarray:
    """Selection vector: pre-assigned assets plus the K-L largest remaining genes.

    Ties go to the lower index.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (cs.n,):
        raise ValueError(f"genotype length {v.shape} does not match n={cs.n}")
    free_slots = cs.K - cs.L
    if free_slots < 0:
        raise ValueError(f"K={cs.K} is smaller than the {cs.L} pre-assigned assets")
    s = (cs.z == 1).astype(np.int64)
    free = np.flatnonzero(s == 0)
    order = free[np.lexsort((free, -v[free]))]
    s[order[:free_slots]] = 1
    return s


def polynomial_mutation(x, eta: float, p_m: float, rng: np.random.Generator) -> np.ndarray:
    """Bounded polynomial mutation on ``[0, 1]``; each gene mutates with probability ``p_m``."""
    x = np.array(x, dtype=float)
    n = len(x)
    hit = rng.random(n) < p_m
    u = rng.random(n)
    pw = 1.0 / (eta + 1.0)
    for k in np.flatnonzero(hit):
        y = x[k]
        if u[k] < 0.5:
            val = 2.0 * u[k] + (1.0 - 2.0 * u[k]) * (1.0 - y) ** (eta + 1.0)
            dq = val**pw - 1.0
        else:
            val = 2.0 * (1.0 - u[k]) + 2.0 * (u[k] - 0.5) * y ** (eta + 1.0)
            dq = 1.0 - val**pw
        x[k] = y + dq
    return np.clip(x, 0.0, 1.0)


def de_child(xa, xb, xc, F: float, CR: float, rng: np.random.Generator) -> np.ndarray:
    """DE/rand/1 mutant with binomial crossover against the base ``xa``."""
    xa = np.asarray(xa, dtype=float)
    n = len(xa)
    mutant = xa + F * (np.asarray(xb) - np.asarray(xc))
    take = rng.random(n) < CR
    take[rng.integers(n)] = True
    return np.clip(np.where(take, mutant, xa), 0.0, 1.0)


def swap_child(x, cs: ConstraintSet, rng: np.random.Generator) -> np.ndarray:
    """Exchange one held gene with one unheld gene of ``x``.

    Pre-assigned positions are left alone since swapping them cannot change
    the decoded selection.
    """
    x = np.array(x, dtype=float)
    s = decode(x, cs)
    movable = cs.z == 0
    held = np.flatnonzero((s == 1) & movable)
    out = np.flatnonzero((s == 0) & movable)
    if len(held) and len(out):
        i = held[rng.integers(len(held))]
        j = out[rng.integers(len(out))]
        x[i], x[j] = x[j], x[i]
    return np.clip(x, 0.0, 1.0)


def vary(parents, cfg: DnoConfig, cs: ConstraintSet, rng: np.random.Generator) -> tuple[np.ndarray, str]:
    """Child genotype and the branch that produced it (``"de"`` or ``"swap"``).

    ``parents[0]`` is the base. The DE branch needs two more parents.
    """
    if rng.random() < cfg.p_de:
        if len(parents) < 3:
            raise ValueError("DE branch needs three parents")
        child = de_child(parents[0], parents[1], parents[2], cfg.F, cfg.CR, rng)
        p_m = cfg.p_m if cfg.p_m is not None else 1.0 / cs.n
        return polynomial_mutation(child, cfg.eta_m, p_m, rng), "de"
    return swap_child(parents[0], cs, rng), "swap"


# --- evaluation ---------------------------------------------------------------


@dataclass
class Incumbent:
    genotype: np.ndarray
    portfolio: Portfolio


class Evaluator:
    """Solves allocation subproblems with a memo keyed on (selection, weight index)."""

    def __init__(self, inst: Instance, cs: ConstraintSet, grid: WeightGrid, mode: str = "per-neighbor",
                 workers: int = 1):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.inst, self.cs, self.grid, self.mode = inst, cs, grid, mode
        self.workers = workers
        self._memo: dict[tuple[bytes, int], Portfolio] = {}
        self._infeasible: set[bytes] = set()
        self._pool = ThreadPoolExecutor(workers) if workers > 1 else None
        self.solves = 0

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()

    def solve(self, sel: np.ndarray, j: int) -> Portfolio:
        key = (sel.tobytes(), j)
        p = self._memo.get(key)
        if p is None:
            p = self._solve_uncached(sel, self.grid.lam(j))
            self._memo[key] = p
        return p

    def _solve_uncached(self, sel: np.ndarray, lam) -> Portfolio:
        task = SubTask.build(self.inst, self.cs, sel, lam)
        sol = subsolver.solve(task)
        self.solves += 1
        w = np.zeros(self.inst.n)
        w[sel] = sol.w
        s = np.zeros(self.inst.n, dtype=np.int64)
        s[sel] = 1
        p = Portfolio(s, w)
        evaluate(self.inst, p)
        return p

    def feasible(self, sel: np.ndarray) -> bool:
        key = sel.tobytes()
        if key in self._infeasible:
            return False
        try:
            SubTask.build(self.inst, self.cs, sel, (0.5, 0.5))
        except InfeasibleTask:
            self._infeasible.add(key)
            return False
        return True

    def prefetch(self, sel: np.ndarray, js) -> None:
        """Solve several weight indices at once on the worker pool."""
        todo = [int(j) for j in js if (sel.tobytes(), int(j)) not in self._memo]
        if self._pool is None or len(todo) < 2:
            return
        results = list(self._pool.map(lambda j: self._solve_uncached(sel, self.grid.lam(j)), todo))
        for j, p in zip(todo, results):
            self._memo[(sel.tobytes(), j)] = p

    def candidate(self, genotype, i: int) -> "Candidate | None":
        sel = np.flatnonzero(decode(genotype, self.cs))
        if not self.feasible(sel):
            return None
        return Candidate(np.asarray(genotype, dtype=float), sel, i, self)


class Candidate:
    """An evaluated offspring; per-subproblem values are computed on first use."""

    def __init__(self, genotype: np.ndarray, sel: np.ndarray, i: int, ev: Evaluator):
        self.genotype, self.sel, self.i, self.ev = genotype, sel, i, ev
        self.own = ev.solve(sel, i)

    def portfolio_for(self, j: int) -> Portfolio:
        if self.ev.mode == "single-solve":
            return self.own
        return self.ev.solve(self.sel, j)

    def g_for(self, j: int) -> float:
        return scalarize(self.portfolio_for(j).objectives, self.ev.grid.lam(j))

    def state_for(self, j: int) -> Incumbent:
        return Incumbent(self.genotype, self.portfolio_for(j))


@dataclass
class EvaluatedCandidate:
    selection: np.ndarray
    g: np.ndarray
    portfolios: list
    own: Portfolio


def evaluate_candidate(genotype, lambdas, inst: Instance, cs: ConstraintSet, mode: str = "per-neighbor",
                       own_lambda=None, budget: EvalBudget | None = None) -> EvaluatedCandidate:
    """Score one genotype under every weight vector in ``lambdas``.

    ``own_lambda`` is the generating subproblem's weights (defaults to the
    first entry). Raises :class:`InfeasibleTask` for an unallocatable
    selection; the budget is charged either way.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    lambdas = [tuple(map(float, lam)) for lam in lambdas]
    own_lambda = tuple(map(float, own_lambda)) if own_lambda is not None else lambdas[0]
    if budget is not None:
        budget.consume()
    sel = np.flatnonzero(decode(genotype, cs))
    grid = WeightGrid(np.array([own_lambda] + lambdas), np.zeros((1 + len(lambdas), 1), dtype=np.int64))
    ev = Evaluator(inst, cs, grid, mode)
    if not ev.feasible(sel):
        raise InfeasibleTask(f"selection {sel.tolist()} admits no allocation")
    cand = Candidate(np.asarray(genotype, dtype=float), sel, 0, ev)
    idx = range(1, 1 + len(lambdas))
    return EvaluatedCandidate(
        sel,
        np.array([cand.g_for(j) for j in idx]),
        [cand.portfolio_for(j) for j in idx],
        cand.own,
    )


# --- main loop ----------------------------------------------------------------


@dataclass
class RunResult:
    front: np.ndarray
    front_portfolios: list
    states: list
    trace: list
    g_history: list
    archive: np.ndarray
    evals_used: int
    wall_time: float
    transcript_hash: str
    solves: int


def _archive_merge(archive: np.ndarray, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return archive
    return nondominated(np.vstack([archive, pts]))


def run(
    inst: Instance,
    cs: ConstraintSet,
    cfg: DnoConfig,
    on_generation: Callable[[dict, np.ndarray], None] | None = None,
) -> RunResult:
    """Run the selection search until the evaluation or wall-clock budget runs out.

    ``on_generation(record, archive)`` is called after initialization and
    after every full pass over the subproblems.
    """
    cfg.validate()
    validate_constraints(cs)
    if cs.n != inst.n:
        raise ValueError(f"constraint set is for n={cs.n}, instance has n={inst.n}")
    rng = np.random.default_rng(cfg.seed)
    grid = build_grid(cfg.N, cfg.T)
    ev = Evaluator(inst, cs, grid, cfg.mode, cfg.workers)
    budget = EvalBudget(cfg.eval_cap, cfg.time_cap)
    transcript = hashlib.sha256()

    try:
        states: list[SubproblemState] = []
        for i in range(cfg.N):
            for _ in range(INIT_ATTEMPTS):
                v = rng.random(inst.n)
                cand = ev.candidate(v, i)
                if cand is not None:
                    break
            else:
                raise InfeasibleTask("no feasible selection found while initializing the population")
            states.append(SubproblemState(i, grid.lam(i), Incumbent(cand.genotype, cand.own), cand.g_for(i)))

        archive = _archive_merge(np.zeros((0, 2)), [(s.incumbent.portfolio.risk, s.incumbent.portfolio.ret) for s in states])
        trace: list[dict] = []
        g_history = [np.array([s.g for s in states])]

        def emit(gen):
            rec = {"generation": gen, "evals": budget.used, "seconds": budget.elapsed()}
            trace.append(rec)
            if on_generation is not None:
                on_generation(rec, archive)

        emit(0)
        gen = 0
        while not budget.exhausted():
            gen += 1
            for i in range(cfg.N):
                if budget.exhausted():
                    break
                pool = select_pool(i, grid, cfg.p_delta, rng)
                if len(pool) < 2:
                    raise ValueError("mating pool too small for parent sampling")
                r = rng.choice(pool, size=2, replace=False)
                parents = [states[i].incumbent.genotype, states[r[0]].incumbent.genotype,
                           states[r[1]].incumbent.genotype]
                child, _ = vary(parents, cfg, cs, rng)
                budget.consume()
                cand = ev.candidate(child, i)
                if cand is None:
                    transcript.update(f"{gen}:{i}:x;".encode())
                    continue
                if cfg.workers > 1 and cfg.mode == "per-neighbor":
                    ev.prefetch(cand.sel, pool)
                log: list[int] = []
                replace(pool, cand, states, cfg.n_r, rng, log)
                transcript.update(f"{gen}:{i}:{cand.sel.tolist()}:{log};".encode())
                if log:
                    archive = _archive_merge(
                        archive, [(states[j].incumbent.portfolio.risk, states[j].incumbent.portfolio.ret) for j in log]
                    )
            g_history.append(np.array([s.g for s in states]))
            emit(gen)
    finally:
        ev.close()

    ports = [s.incumbent.portfolio for s in states]
    pts = np.array([(p.risk, p.ret) for p in ports])
    keep = np.flatnonzero(nondominated_mask(pts))
    keep = keep[np.argsort(pts[keep, 0], kind="stable")]
    return RunResult(
        front=pts[keep],
        front_portfolios=[ports[k] for k in keep],
        states=states,
        trace=trace,
        g_history=g_history,
        archive=archive,
        evals_used=budget.used,
        wall_time=budget.elapsed(),
        transcript_hash=transcript.hexdigest(),
        solves=ev.solves,
    )
