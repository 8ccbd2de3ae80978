"""Time the pure-Python and compiled subsolver kernels on identical random tasks.

    python benchmarks/bench_kernels.py --tasks 300 --repeat 3
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from dnoport import subsolver
from dnoport.instances import benchmark_constraints, random_instance
from dnoport.subsolver import InfeasibleTask, SubTask


def make_tasks(count: int, seed: int) -> list[SubTask]:
    rng = np.random.default_rng(seed)
    tasks = []
    while len(tasks) < count:
        K = int(rng.integers(2, 11))
        A = rng.normal(size=(K, K))
        cov = A @ A.T * 0.01
        mu = rng.uniform(-0.05, 0.15, K)
        tau = float(rng.choice([0.0, 0.05, 0.008]))
        l1 = float(rng.uniform())
        try:
            tasks.append(SubTask.from_arrays(cov, mu, (l1, 1 - l1), 0.01 if tau else 0.0, 1.0, tau))
        except InfeasibleTask:
            continue
    return tasks


def benchmark_tasks(count: int, seed: int) -> list[SubTask]:
    """Subproblems shaped like the 31-asset benchmark: K=10, lots of 0.008."""
    inst = random_instance(31, seed)
    cs = benchmark_constraints(31)
    rng = np.random.default_rng(seed)
    free = np.flatnonzero(cs.z == 0)
    out = []
    for _ in range(count):
        sel = np.sort(np.concatenate([cs.preassigned, rng.choice(free, size=cs.K - cs.L, replace=False)]))
        l1 = float(rng.uniform())
        out.append(SubTask.build(inst, cs, sel, (l1, 1 - l1)))
    return out


def time_backend(name: str, tasks, repeat: int) -> float:
    best = float("inf")
    with subsolver.use_backend(name):
        for _ in range(repeat):
            t0 = time.perf_counter()
            for t in tasks:
                subsolver.solve(t)
            best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tasks", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = subsolver.available_backends()
    suites = {"mixed": make_tasks(args.tasks, args.seed), "benchmark-shaped": benchmark_tasks(args.tasks // 3, args.seed)}
    print(f"backends available: {', '.join(backends)}")
    for label, tasks in suites.items():
        times = {b: time_backend(b, tasks, args.repeat) for b in backends}
        line = "  ".join(f"{b}={t * 1e3:8.1f} ms" for b, t in times.items())
        extra = f"  speedup x{times['python'] / times['cython']:.1f}" if "cython" in times else ""
        print(f"{label:<17} {len(tasks):4d} tasks  {line}{extra}")


if __name__ == "__main__":
    main()
