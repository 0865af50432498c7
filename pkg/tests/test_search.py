from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from bnnverify.generate import random_instance
from bnnverify.network import Norm
from bnnverify.search import DEFAULT_EPS_INIT, bracket_search, max_eps
from bnnverify.verify import Answer, MethodConfig

T, F, U = Answer.VERIFIED, Answer.FALSIFIED, Answer.UNKNOWN


def scripted(answers):
    it = iter(answers)
    return lambda eps: next(it)


def probes(result):
    return [Fraction(r["epsilon"]) for r in result.trace]


def test_double_then_bisect():
    res = bracket_search(scripted([T, T, F, T]), 1, 4)
    assert probes(res) == [1, 2, 4, 3]
    res3 = bracket_search(scripted([T, T, F]), 1, 3)
    assert (res3.eps_lb, res3.eps_ub) == (2, 4)


def test_all_true():
    res = bracket_search(scripted([T, T, T]), 1, 3)
    assert probes(res) == [1, 2, 4] and res.eps_lb == 4 and res.eps_ub is None


def test_unknown_counts_as_not_verified():
    res = bracket_search(scripted([U, T]), 1, 2)
    assert probes(res) == [1, Fraction(1, 2)]
    assert (res.eps_lb, res.eps_ub) == (Fraction(1, 2), 1)


def test_bad_arguments():
    with pytest.raises(ValueError):
        bracket_search(scripted([]), 1, 0)
    with pytest.raises(ValueError):
        bracket_search(scripted([]), 0, 3)


def test_default_initial_radius():
    assert DEFAULT_EPS_INIT == {Norm.L1: 1, Norm.LINF: Fraction(1, 255), Norm.L2: Fraction(1, 32)}


@given(st.lists(st.sampled_from([T, F, U]), min_size=1, max_size=10), st.fractions(1, 5, max_denominator=9))
def test_bracket_invariant(answers, init):
    """Every probe at or below LB was verified; UB (if set) was not."""
    trace = []

    def probe(eps):
        ans = answers[len(trace)]
        trace.append((eps, ans))
        return ans

    res = bracket_search(probe, init, len(answers))
    for k in range(1, len(trace) + 1):
        part = bracket_search(scripted(answers), init, k)
        for eps, ans in trace[:k]:
            if ans is T:
                assert eps <= part.eps_lb
        if part.eps_ub is not None:
            hits = [ans for eps, ans in trace[:k] if eps == part.eps_ub]
            assert hits and all(a is not T for a in hits)
    assert res.eps_ub is None or res.eps_lb < res.eps_ub


def test_runs_verifier():
    bnn, spec = random_instance(6)
    reports = []
    res = max_eps(bnn, spec, MethodConfig(method="1-ip"), Fraction(1, spec.q), 4, reports)
    assert len(res.trace) == 4 == len(reports)
    assert [r["answer"] for r in res.trace] == [r.answer.value for r in reports]
    assert res.to_dict()["trace"][0]["epsilon"] == str(Fraction(1, spec.q))
