import numpy as np
import pytest

from dnoport.dno import (
    DnoConfig,
    EvalBudget,
    de_child,
    decode,
    evaluate_candidate,
    polynomial_mutation,
    run,
    swap_child,
    vary,
)
from dnoport.instances import Instance, make_constraints
from dnoport.portfolio import check_feasible
from dnoport.subsolver import InfeasibleTask
from oracles import lattice_min, pareto


class TestDecode:
    def test_top_two(self):
        cs = make_constraints(5, K=2)
        assert decode([0.9, 0.1, 0.8, 0.2, 0.5], cs).tolist() == [1, 0, 1, 0, 0]

    def test_preassigned(self):
        cs = make_constraints(5, K=2, preassigned=(4,))
        assert decode([0.9, 0.1, 0.8, 0.2, 0.5], cs).tolist() == [1, 0, 0, 0, 1]

    def test_tie_goes_to_lower_index(self):
        cs = make_constraints(3, K=1)
        assert decode([0.7, 0.7, 0.1], cs).tolist() == [1, 0, 0]

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            decode([0.1, 0.2], make_constraints(3, K=1))

    def test_exactly_k(self):
        cs = make_constraints(12, K=4, preassigned=(3, 7))
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = decode(rng.random(12), cs)
            assert s.sum() == 4 and s[3] == 1 and s[7] == 1


class TestVary:
    def test_degenerate_de(self):
        cfg = DnoConfig(F=0.0, p_m=0.0, p_de=1.0)
        rng = np.random.default_rng(1)
        xa, xb, xc = rng.random(6), rng.random(6), rng.random(6)
        child, branch = vary([xa, xb, xc], cfg, make_constraints(6, K=2), rng)
        assert branch == "de"
        assert np.array_equal(child, xa)

    def test_forced_swap(self):
        cfg = DnoConfig(p_de=0.0)
        child, branch = vary([np.array([0.9, 0.1])], cfg, make_constraints(2, K=1), np.random.default_rng(0))
        assert branch == "swap"
        assert child.tolist() == [0.1, 0.9]

    def test_branch_frequency(self):
        cfg = DnoConfig()
        cs = make_constraints(8, K=3)
        rng = np.random.default_rng(2024)
        parents = [rng.random(8) for _ in range(3)]
        de = sum(vary(parents, cfg, cs, rng)[1] == "de" for _ in range(10_000))
        assert 0.48 <= de / 10_000 <= 0.52

    def test_children_clamped(self):
        cfg = DnoConfig(F=5.0, p_m=1.0)
        cs = make_constraints(8, K=3)
        rng = np.random.default_rng(3)
        for _ in range(500):
            child, _ = vary([rng.random(8) for _ in range(3)], cfg, cs, rng)
            assert np.all((child >= 0) & (child <= 1))

    def test_de_needs_three_parents(self):
        with pytest.raises(ValueError):
            vary([np.zeros(3)], DnoConfig(p_de=1.0), make_constraints(3, K=1), np.random.default_rng(0))

    def test_swap_keeps_preassigned(self):
        cs = make_constraints(6, K=3, preassigned=(0,))
        rng = np.random.default_rng(5)
        for _ in range(100):
            x = rng.random(6)
            child = swap_child(x, cs, rng)
            assert child[0] == x[0]
            assert sorted(child) == sorted(x)

    def test_mutation_stays_in_box(self):
        rng = np.random.default_rng(6)
        x = np.array([0.0, 1.0, 0.5, 0.999, 0.001])
        for _ in range(500):
            y = polynomial_mutation(x, 20.0, 1.0, rng)
            assert np.all((y >= 0) & (y <= 1))

    def test_no_mutation_when_p_zero(self):
        x = np.random.default_rng(0).random(5)
        assert np.array_equal(polynomial_mutation(x, 20.0, 0.0, np.random.default_rng(1)), x)

    def test_de_full_crossover(self):
        xa, xb, xc = np.full(4, 0.5), np.full(4, 0.6), np.full(4, 0.4)
        np.testing.assert_allclose(de_child(xa, xb, xc, 0.5, 1.0, np.random.default_rng(0)), 0.6)


def small_instance():
    rng = np.random.default_rng(21)
    A = rng.normal(size=(4, 4))
    cov = A @ A.T * 0.01 + 0.005 * np.eye(4)
    return Instance.from_covariance("tiny", rng.uniform(0.0, 0.1, 4), cov)


LAMBDAS = [(k / 10, 1 - k / 10) for k in range(11)]


class TestEvaluateCandidate:
    def test_single_asset(self):
        inst = small_instance()
        cs = make_constraints(4, K=1)
        ev = evaluate_candidate([0.1, 0.9, 0.2, 0.3], LAMBDAS, inst, cs)
        for (l1, l2), g, p in zip(LAMBDAS, ev.g, ev.portfolios):
            assert p.w.tolist() == [0.0, 1.0, 0.0, 0.0]
            assert g == pytest.approx(l1 * inst.cov[1, 1] - l2 * inst.mu[1], abs=1e-15)

    def test_matches_lattice(self):
        inst = small_instance()
        cs = make_constraints(4, K=2, tau=0.25)
        ev = evaluate_candidate([0.8, 0.1, 0.9, 0.2], LAMBDAS, inst, cs)
        sel = [0, 2]
        C, mu = inst.cov[np.ix_(sel, sel)], inst.mu[sel]
        for lam, g in zip(LAMBDAS, ev.g):
            ref, _ = lattice_min(C, mu, lam, [0, 0], [4, 4], 4, 0.25)
            assert abs(g - ref) <= 1e-12

    @pytest.mark.parametrize("tau", [0.0, 0.25])
    def test_per_neighbor_lower_bounds_single_solve(self, tau):
        inst = small_instance()
        cs = make_constraints(4, K=2, tau=tau)
        v = [0.3, 0.9, 0.1, 0.8]
        for own in [(0.0, 1.0), (0.5, 0.5), (1.0, 0.0)]:
            a = evaluate_candidate(v, LAMBDAS, inst, cs, "per-neighbor", own)
            b = evaluate_candidate(v, LAMBDAS, inst, cs, "single-solve", own)
            assert np.all(a.g <= b.g + 1e-12)

    def test_budget_charged_once_even_if_infeasible(self):
        inst = small_instance()
        cs = make_constraints(4, K=2, eps=[0.0, 0.0, 0.1, 0.1], ups=[1.0, 1.0, 0.4, 0.4])
        budget = EvalBudget(5)
        evaluate_candidate([0.9, 0.8, 0.1, 0.1], LAMBDAS, inst, cs, budget=budget)
        assert budget.used == 1
        with pytest.raises(InfeasibleTask):
            evaluate_candidate([0.1, 0.1, 0.9, 0.8], LAMBDAS, inst, cs, budget=budget)
        assert budget.used == 2

    def test_nested_local_front_wins_everywhere(self):
        base = np.array([[0.04, 0.01], [0.01, 0.09]])
        mu = np.array([0.06, 0.1])
        cov = np.zeros((4, 4))
        cov[:2, :2] = base
        cov[2:, 2:] = base + 0.01 * np.eye(2)
        inst = Instance.from_covariance("nested", np.concatenate([mu, mu - 0.01]), cov)
        for tau in (0.0, 0.1):
            cs = make_constraints(4, K=2, tau=tau)
            good = evaluate_candidate([0.9, 0.8, 0.1, 0.2], LAMBDAS, inst, cs)
            bad = evaluate_candidate([0.1, 0.2, 0.9, 0.8], LAMBDAS, inst, cs)
            assert np.all(good.g < bad.g)


class TestRun:
    def test_zero_budget_keeps_initial_population(self, desk_inst, desk_cs):
        res = run(desk_inst, desk_cs, DnoConfig(N=20, T=4, eval_cap=0, seed=3))
        assert res.evals_used == 0 and len(res.trace) == 1
        init = np.array([(s.incumbent.portfolio.risk, s.incumbent.portfolio.ret) for s in res.states])
        np.testing.assert_array_equal(res.front, pareto(init))

    def test_zero_time_cap(self, desk_inst, desk_cs):
        res = run(desk_inst, desk_cs, DnoConfig(N=10, T=3, eval_cap=1000, time_cap=0.0))
        assert res.evals_used == 0

    def test_front_properties(self, desk_inst, desk_cs):
        res = run(desk_inst, desk_cs, DnoConfig(N=20, T=5, eval_cap=200, seed=1))
        assert res.evals_used == 200
        for p in res.front_portfolios:
            assert check_feasible(desk_cs, p) == []
        np.testing.assert_array_equal(res.front, pareto(res.front))
        for prev, cur in zip(res.g_history, res.g_history[1:]):
            assert np.all(cur <= prev)
        for s in res.states:
            assert s.g == pytest.approx(s.lam[0] * s.incumbent.portfolio.risk - s.lam[1] * s.incumbent.portfolio.ret, abs=1e-15)

    def test_deterministic_and_worker_independent(self, desk_inst, desk_cs):
        a = run(desk_inst, desk_cs, DnoConfig(N=20, T=5, eval_cap=150, seed=7))
        b = run(desk_inst, desk_cs, DnoConfig(N=20, T=5, eval_cap=150, seed=7))
        c = run(desk_inst, desk_cs, DnoConfig(N=20, T=5, eval_cap=150, seed=7, workers=3))
        assert a.transcript_hash == b.transcript_hash == c.transcript_hash
        np.testing.assert_array_equal(a.front, c.front)

    def test_seed_changes_transcript(self, desk_inst, desk_cs):
        a = run(desk_inst, desk_cs, DnoConfig(N=10, T=3, eval_cap=50, seed=1))
        b = run(desk_inst, desk_cs, DnoConfig(N=10, T=3, eval_cap=50, seed=2))
        assert a.transcript_hash != b.transcript_hash

    def test_single_solve_mode(self, desk_inst, desk_cs):
        res = run(desk_inst, desk_cs, DnoConfig(N=10, T=3, eval_cap=100, mode="single-solve"))
        assert res.evals_used == 100
        assert res.solves <= 10 + 100

    def test_infeasible_candidates_counted(self):
        inst = small_instance()
        cs = make_constraints(4, K=2, eps=[0.0, 0.0, 0.1, 0.1], ups=[1.0, 1.0, 0.4, 0.4])
        res = run(inst, cs, DnoConfig(N=4, T=2, eval_cap=60, seed=0))
        assert res.evals_used == 60
        assert all(set(np.flatnonzero(p.s).tolist()) != {2, 3} for p in res.front_portfolios)

    def test_callback(self, desk_inst, desk_cs):
        seen = []
        run(desk_inst, desk_cs, DnoConfig(N=10, T=3, eval_cap=40), on_generation=lambda rec, arc: seen.append(rec["evals"]))
        assert seen[0] == 0 and seen[-1] == 40 and seen == sorted(seen)

    def test_bad_config(self, desk_inst, desk_cs):
        with pytest.raises(ValueError):
            run(desk_inst, desk_cs, DnoConfig(N=5, T=6))
        with pytest.raises(ValueError):
            run(desk_inst, desk_cs, DnoConfig(mode="sometimes"))
