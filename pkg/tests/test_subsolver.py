import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnoport import subsolver
from dnoport.instances import make_constraints, random_instance
from dnoport.subsolver import (
    InfeasibleTask,
    NotPSDError,
    SubTask,
    kkt_residual,
    scalarize,
    solve_continuous,
    solve_lot,
)
from oracles import compositions, grid_min, lattice_min


def rand_task(rng, K, tau, lam=None, floor=0.0, ceil=1.0):
    A = rng.normal(size=(K, K))
    cov = A @ A.T * rng.uniform(0.001, 0.05)
    mu = rng.uniform(-0.05, 0.15, K)
    if lam is None:
        l1 = float(rng.uniform())
        lam = (l1, 1.0 - l1)
    return SubTask.from_arrays(cov, mu, lam, floor, ceil, tau)


class TestScalarize:
    def test_values(self):
        assert scalarize((0.2, 0.4), (0.5, 0.5)) == pytest.approx(-0.1)
        assert scalarize((0.2, 0.4), (1.0, 0.0)) == 0.2
        assert scalarize((0.2, 0.4), (0.0, 1.0)) == -0.4

    def test_negative_weight(self):
        with pytest.raises(ValueError):
            scalarize((0.2, 0.4), (-0.1, 1.1))


class TestContinuous:
    def test_single_asset(self, backend):
        for lam in [(0.0, 1.0), (0.3, 0.7), (1.0, 0.0)]:
            sol = solve_continuous(SubTask.from_arrays([[0.09]], [0.07], lam))
            assert sol.w.tolist() == [1.0]
            assert sol.g == pytest.approx(lam[0] * 0.09 - lam[1] * 0.07, abs=1e-15)

    def test_identity_min_norm(self, backend):
        sol = solve_continuous(SubTask.from_arrays(np.eye(3), np.zeros(3), (1.0, 0.0)))
        np.testing.assert_allclose(sol.w, [1 / 3] * 3, atol=1e-12)
        assert sol.g == pytest.approx(1 / 3, abs=1e-12)

    def test_linear_case_greedy(self, backend):
        task = SubTask.from_arrays(np.eye(3), [0.3, 0.2, 0.1], (0.0, 1.0), 0.1, 0.6)
        sol = solve_continuous(task)
        np.testing.assert_allclose(sol.w, [0.6, 0.3, 0.1], atol=1e-15)
        assert sol.g <= grid_min(task.covK, task.muK, task.lam, task.eps, task.ups) + 1e-12

    def test_kkt_and_grid(self, backend):
        rng = np.random.default_rng(5)
        for _ in range(40):
            K = int(rng.integers(1, 4))
            eps = float(rng.choice([0.0, 0.1]))
            ups = float(rng.choice([0.6, 1.0]))
            if K * ups < 1:
                continue
            task = rand_task(rng, K, 0.0, floor=eps, ceil=ups)
            sol = solve_continuous(task)
            assert kkt_residual(task, sol.w) <= 1e-8
            assert sol.g <= grid_min(task.covK, task.muK, task.lam, task.eps, task.ups) + 1e-4

    def test_semidefinite_cov(self, backend):
        v = np.array([1.0, 2.0, 3.0])
        task = SubTask.from_arrays(np.outer(v, v) * 0.01, [0.1, 0.05, 0.02], (0.5, 0.5))
        sol = solve_continuous(task)
        assert kkt_residual(task, sol.w) <= 1e-8

    def test_return_floor(self, backend):
        task = SubTask.from_arrays(np.diag([0.01, 0.04, 0.09]), [0.02, 0.05, 0.1], (1.0, 0.0))
        sol = solve_continuous(task, return_floor=0.08)
        assert task.muK @ sol.w >= 0.08 - 1e-12
        unconstrained = solve_continuous(task)
        assert task.muK @ unconstrained.w < 0.08
        with pytest.raises(InfeasibleTask):
            solve_continuous(task, return_floor=0.2)


class TestLot:
    def test_two_even_lots(self, backend):
        task = SubTask.from_arrays(np.eye(2), np.zeros(2), (1.0, 0.0), 0.0, 1.0, 0.25)
        sol = solve_lot(task)
        assert sol.lots.tolist() == [2, 2]
        assert sol.w.tolist() == [0.5, 0.5]
        # w'Iw at (0.5, 0.5) is 0.25 + 0.25
        assert sol.g == pytest.approx(0.5, abs=1e-15)

    def test_single_asset_benchmark_lot(self, backend):
        sol = solve_lot(SubTask.from_arrays([[0.04]], [0.01], (0.5, 0.5), 0.01, 1.0, 0.008))
        assert sol.lots.tolist() == [125]
        assert sol.w.tolist() == [1.0]

    def test_k3_lattice(self, backend):
        rng = np.random.default_rng(8)
        for _ in range(30):
            task = rand_task(rng, 3, 0.1)
            sol = solve_lot(task)
            ref, _ = lattice_min(task.covK, task.muK, task.lam, task.lot_lo, task.lot_hi, 10, 0.1)
            assert abs(sol.g - ref) <= 1e-9

    def test_solution_invariants(self, backend):
        rng = np.random.default_rng(9)
        for _ in range(30):
            task = rand_task(rng, int(rng.integers(2, 6)), 0.05, floor=0.05, ceil=0.7)
            sol = solve_lot(task)
            assert np.array_equal(sol.w, task.tau * sol.lots)
            assert sol.lots.sum() == task.total_lots
            assert abs(sol.w.sum() - 1) <= 1e-9
            assert np.all(sol.w >= task.eps - 1e-9) and np.all(sol.w <= task.ups + 1e-9)
            assert sol.relaxed_g <= sol.g + 1e-12

    def test_lot_floor(self, backend):
        task = SubTask.from_arrays(np.diag([0.01, 0.04, 0.09]), [0.02, 0.05, 0.1], (1.0, 0.0), 0.0, 1.0, 0.1)
        sol = solve_lot(task, return_floor=0.07)
        assert task.muK @ sol.w >= 0.07 - 1e-9
        best = None
        for d in compositions(10, [0] * 3, [10] * 3):
            w = 0.1 * d
            if task.muK @ w >= 0.07 - 1e-9:
                v = w @ task.covK @ w
                best = v if best is None else min(best, v)
        assert sol.g == pytest.approx(best, abs=1e-12)

    def test_debug_trace(self, backend):
        rng = np.random.default_rng(2)
        sol = solve_lot(rand_task(rng, 4, 0.05), debug=True)
        assert sol.trace and all(line.startswith("node ") for line in sol.trace)

    def test_requires_tau(self):
        with pytest.raises(ValueError):
            solve_lot(SubTask.from_arrays(np.eye(2), np.zeros(2), (1.0, 0.0)))


class TestConstruction:
    def test_infeasible_lot_ranges(self):
        with pytest.raises(InfeasibleTask):
            SubTask.from_arrays(np.eye(2), np.zeros(2), (1.0, 0.0), 0.6, 1.0, 0.1)

    def test_infeasible_bounds(self):
        with pytest.raises(InfeasibleTask):
            SubTask.from_arrays(np.eye(2), np.zeros(2), (1.0, 0.0), 0.0, 0.4)

    def test_not_psd(self):
        with pytest.raises(NotPSDError):
            SubTask.from_arrays([[1.0, 2.0], [2.0, 1.0]], np.zeros(2), (1.0, 0.0))

    def test_psd_repair(self):
        cov = np.array([[1.0, 1.0], [1.0, 1.0]]) - 1e-10 * np.eye(2)
        task = SubTask.from_arrays(cov, np.zeros(2), (1.0, 0.0))
        assert np.linalg.eigvalsh(task.covK).min() >= -1e-15

    def test_lambda_validation(self):
        with pytest.raises(ValueError):
            SubTask.from_arrays(np.eye(2), np.zeros(2), (0.6, 0.6))

    def test_build_uses_selected_rows(self):
        inst = random_instance(6, 1)
        cs = make_constraints(6, K=2, tau=0.1)
        task = SubTask.build(inst, cs, [1, 4], (0.5, 0.5))
        np.testing.assert_array_equal(task.covK, inst.cov[np.ix_([1, 4], [1, 4])])
        assert task.lot_lo.tolist() == [0, 0] and task.lot_hi.tolist() == [10, 10]


@given(st.integers(0, 10_000), st.integers(1, 4), st.sampled_from([0.0, 0.1, 0.05]))
def test_sweep_is_monotone(seed, K, tau):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(K, K))
    cov = A @ A.T * 0.02 + 1e-3 * np.eye(K)
    mu = rng.uniform(-0.05, 0.15, K)
    risks, rets = [], []
    for l1 in np.linspace(0, 1, 21):
        sol = subsolver.solve(SubTask.from_arrays(cov, mu, (l1, 1 - l1), 0.0, 1.0, tau))
        risks.append(sol.w @ cov @ sol.w)
        rets.append(mu @ sol.w)
    assert np.all(np.diff(risks) <= 1e-10)
    assert np.all(np.diff(rets) <= 1e-10)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0), st.sampled_from([0.0, 0.1]))
def test_argmin_scale_invariance(seed, c, tau):
    rng = np.random.default_rng(seed)
    task = rand_task(rng, 3, tau)
    scaled = SubTask.from_arrays(c * task.covK, c * task.muK, task.lam, 0.0, 1.0, tau)
    a, b = subsolver.solve(task), subsolver.solve(scaled)
    np.testing.assert_allclose(a.w, b.w, atol=1e-7)
    assert b.g == pytest.approx(c * a.g, rel=1e-7, abs=1e-12)


def test_kernels_agree():
    if "cython" not in subsolver.available_backends():
        pytest.skip("compiled kernel not built")
    rng = np.random.default_rng(77)
    for _ in range(60):
        task = rand_task(rng, int(rng.integers(1, 6)), float(rng.choice([0.0, 0.05, 0.1])))
        with subsolver.use_backend("python"):
            a = subsolver.solve(task)
        with subsolver.use_backend("cython"):
            b = subsolver.solve(task)
        np.testing.assert_allclose(a.w, b.w, atol=1e-9)
        if task.tau > 0:
            assert np.array_equal(a.lots, b.lots)


def test_backend_env_override():
    code = "from dnoport import subsolver; print(subsolver.backend())"
    env = {**os.environ, "DNOPORT_BACKEND": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        subsolver.set_backend("fortran")
