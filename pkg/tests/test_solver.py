import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from bnnverify.formulation import build_one_ip
from bnnverify.generate import SplitMix64, gen_model
from bnnverify.ipmodel import EQ, GE, LE, IpModel
from bnnverify.network import InputSpec, Norm
from bnnverify.solver import (LPStatus, QuadUnsupported, SolveControls, Status, rounding_heuristic, solve_lp,
                              solve_mip)
from bnnverify.solver.simplex import DenseLP


def lp(vars_, rows, obj, const=0):
    m = IpModel()
    refs = [m.add_var(name, lo, hi, integral) for name, lo, hi, integral in vars_]
    for terms, sense, rhs in rows:
        m.add_constraint([(refs[j], c) for j, c in terms], sense, rhs)
    m.set_objective([(refs[j], c) for j, c in obj], const)
    return m


class TestLP:
    def test_simple_sum(self):
        m = lp([("x", 0, 1, False), ("y", 0, 1, False)], [([(0, 1), (1, 1)], LE, 1)], [(0, 1), (1, 1)])
        res = solve_lp(m)
        assert res.status is LPStatus.OPTIMAL and res.value == 1

    def test_infeasible(self):
        m = lp([("x", 0, 10, False)], [([(0, 1)], LE, -1)], [(0, 1)])
        assert solve_lp(m).status is LPStatus.INFEASIBLE

    def test_vertex_value(self):
        m = lp([("x", 0, 1, False), ("y", 0, 1, False)], [([(0, 2), (1, -1)], LE, Fraction(3, 2))],
               [(0, 2), (1, -1)])
        res = solve_lp(m)
        assert res.value == Fraction(3, 2) and res.exact

    def test_unbounded(self):
        m = lp([("x", 0, float("inf"), False)], [], [(0, 1)])
        assert solve_lp(m).status is LPStatus.UNBOUNDED

    def test_quadratic_rejected(self):
        m = lp([("x", 0, 1, False)], [], [(0, 1)])
        m.set_quadratic([(0, 1)], 1)
        with pytest.raises(QuadUnsupported):
            solve_lp(m)

    @pytest.mark.parametrize("seed", range(300))
    def test_matches_reference_lp(self, seed):
        rng = np.random.default_rng(seed)
        n, mrows = rng.integers(1, 7), rng.integers(0, 7)
        A = rng.integers(-3, 4, size=(mrows, n)).astype(float)
        b = rng.integers(-4, 8, size=mrows).astype(float)
        senses = [("<=", ">=", "=")[k] for k in rng.choice(3, size=mrows, p=[0.6, 0.3, 0.1])]
        c = rng.integers(-3, 4, size=n).astype(float)
        lo = rng.integers(-2, 1, size=n).astype(float)
        hi = lo + rng.integers(0, 4, size=n)
        sol = DenseLP(A, senses, b, c).solve(lo, hi)
        A_ub = [A[r] if s == "<=" else -A[r] for r, s in enumerate(senses) if s != "="]
        b_ub = [b[r] if s == "<=" else -b[r] for r, s in enumerate(senses) if s != "="]
        A_eq = [A[r] for r, s in enumerate(senses) if s == "="]
        b_eq = [b[r] for r, s in enumerate(senses) if s == "="]
        ref = linprog(-c, A_ub=A_ub or None, b_ub=b_ub or None, A_eq=A_eq or None, b_eq=b_eq or None,
                      bounds=list(zip(lo, hi)), method="highs")
        if ref.status == 2:
            assert sol.status is LPStatus.INFEASIBLE
        else:
            assert ref.status == 0
            assert sol.status is LPStatus.OPTIMAL
            assert sol.value == pytest.approx(-ref.fun, abs=1e-7)


def random_ip(seed):
    rng = SplitMix64(seed)
    n = rng.randint(1, 9)
    vars_ = []
    for k in range(n):
        if rng.uniform() < 0.75:
            vars_.append((f"b{k}", 0, 1, True))
        else:
            lo = rng.randint(-2, 0)
            vars_.append((f"g{k}", lo, lo + rng.randint(0, 3), True))
    rows = []
    for _ in range(rng.randint(0, 5)):
        terms = [(j, rng.randint(-3, 3)) for j in range(n) if rng.uniform() < 0.6]
        sense = rng.choice((LE, LE, GE, EQ))
        rows.append((terms, sense, Fraction(rng.randint(-6, 12), rng.choice((1, 1, 2)))))
    obj = [(j, Fraction(rng.randint(-4, 4), rng.choice((1, 1, 3)))) for j in range(n)]
    return lp(vars_, rows, obj, rng.randint(-2, 2))


def enumerate_opt(m):
    ranges = [range(int(v.lower), int(v.upper) + 1) for v in m.variables]
    best = None
    for p in itertools.product(*ranges):
        p = [Fraction(v) for v in p]
        if m.is_feasible(p):
            val = m.objective_value(p)
            best = val if best is None else max(best, val)
    return best


class TestMip:
    def test_binary_pair(self):
        m = lp([("a", 0, 1, True), ("b", 0, 1, True)], [([(0, 1), (1, 1)], LE, Fraction(3, 2))], [(0, 1), (1, 1)])
        out = solve_mip(m)
        assert out.status is Status.OPTIMAL and out.incumbent_value == 1

    def test_incumbent_stop(self):
        m = lp([("a", 0, 1, True), ("b", 0, 1, True)], [([(0, 1), (1, 1)], LE, Fraction(3, 2))], [(0, 1), (1, 1)])
        out = solve_mip(m, SolveControls(stop_if_incumbent_above=Fraction(1, 2)))
        assert out.status is Status.INCUMBENT_STOP and out.incumbent_value == 1

    def test_empty_model_root_only(self):
        m = IpModel()
        m.add_var("a", 0, 1, True)
        out = solve_mip(m, SolveControls(node_limit=1))
        assert out.status is Status.OPTIMAL and out.incumbent_value == 0 and out.nodes_processed == 1

    def test_infeasible(self):
        m = lp([("a", 0, 1, True)], [([(0, 2)], EQ, 1)], [(0, 1)])
        out = solve_mip(m)
        assert out.status is Status.INFEASIBLE and out.best_bound is None

    def test_quadratic_status(self):
        m = lp([("a", 0, 1, True)], [], [(0, 1)])
        m.set_quadratic([(0, 1)], 1)
        assert solve_mip(m).status is Status.QUAD_UNSUPPORTED

    def test_node_limit_one(self):
        m = random_ip(11)
        out = solve_mip(m, SolveControls(node_limit=1))
        assert out.nodes_processed == 1

    def test_bad_controls(self):
        with pytest.raises(ValueError):
            SolveControls(node_limit=0)

    @pytest.mark.parametrize("seed", range(300))
    def test_matches_enumeration(self, seed):
        m = random_ip(seed)
        truth = enumerate_opt(m)
        out = solve_mip(m, SolveControls(collect_solution_pool=True))
        if truth is None:
            assert out.status is Status.INFEASIBLE
            return
        assert out.status is Status.OPTIMAL
        assert out.incumbent_value == truth
        assert m.is_feasible(out.incumbent_point)
        assert out.best_bound == truth
        for p in out.solution_pool:
            assert m.is_feasible(p)
        trace = [b for b in out.bound_trace if b is not None]
        assert all(x >= y - 1e-9 for x, y in zip(trace, trace[1:]))

    @given(st.integers(0, 10 ** 6), st.fractions(-6, 6, max_denominator=3))
    def test_early_stops_are_sound(self, seed, tau):
        m = random_ip(seed)
        truth = enumerate_opt(m)
        out = solve_mip(m, SolveControls(stop_if_bound_at_most=tau, stop_if_incumbent_above=tau))
        if out.status is Status.BOUND_STOP:
            assert truth is None or truth <= tau
        elif out.status is Status.INCUMBENT_STOP:
            assert truth > tau and out.incumbent_value > tau
        if out.incumbent_value is not None and out.best_bound is not None:
            assert out.incumbent_value <= out.best_bound

    def test_deterministic(self):
        for seed in range(20):
            a, b = solve_mip(random_ip(seed)), solve_mip(random_ip(seed))
            assert (a.status, a.incumbent_value, a.incumbent_point, a.nodes_processed) == \
                (b.status, b.incumbent_value, b.incumbent_point, b.nodes_processed)


class TestRounding:
    def setup_method(self):
        self.bnn = gen_model([2, 3, 2], 0.7, (-1, 1), 5, q=2)

    def lp_point(self, ip, ys):
        point = [0.0] * ip.model.num_vars
        for j, v in enumerate(ys):
            point[ip.var_index[("y", j)]] = v
        return point

    def test_round_then_propagate(self):
        spec = InputSpec((1, 0), 2, Fraction(1), Norm.L1, 0)
        ip = build_one_ip(self.bnn, spec)
        got = rounding_heuristic(ip.model, self.lp_point(ip, [1.4, 0.2]), ip)
        assert ip.input_of(got) == (1, 0)
        assert ip.model.is_feasible(got)

    def test_integral_fixpoint(self):
        spec = InputSpec((1, 0), 2, Fraction(1), Norm.L1, 0)
        ip = build_one_ip(self.bnn, spec)
        got = rounding_heuristic(ip.model, self.lp_point(ip, [2.0, 0.0]), ip)
        assert ip.input_of(got) == (2, 0)

    def test_zero_ball(self):
        spec = InputSpec((1, 0), 2, Fraction(0), Norm.L1, 0)
        ip = build_one_ip(self.bnn, spec)
        got = rounding_heuristic(ip.model, self.lp_point(ip, [1.9, 1.7]), ip)
        assert ip.input_of(got) == (1, 0)

    def test_shrinks_into_ball(self):
        spec = InputSpec((0, 0), 2, Fraction(1, 2), Norm.L1, 0)
        ip = build_one_ip(self.bnn, spec)
        got = rounding_heuristic(ip.model, self.lp_point(ip, [2.0, 2.0]), ip)
        assert spec.contains(ip.input_of(got))

    def test_no_context(self):
        m = random_ip(1)
        assert rounding_heuristic(m, [0.0] * m.num_vars) is None
