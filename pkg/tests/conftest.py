import re
from collections import defaultdict
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from bnnverify.network import BnnModel, InputSpec, Norm

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

CRITERION = re.compile(r"test_acceptance\.py::test_c(\d{2})_")
_outcomes = defaultdict(list)


def pytest_runtest_logreport(report):
    m = CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes[int(m.group(1))].append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_outcomes):
        ok = all(_outcomes[num])
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}")


def tiny_model(hidden_rows, hidden_biases, out_rows, out_biases, q=1, first=None, first_b=None):
    """Network with an identity-like first layer followed by the given layers.

    With ``first`` omitted, layer 1 copies binary inputs (row e_j, bias 0 maps
    0 -> 0 and 1 -> 1 when q == 1).
    """
    n = len(hidden_rows[0])
    if first is None:
        first = [[1 if a == b else 0 for b in range(n)] for a in range(n)]
        first_b = [0] * n
    return BnnModel([first, hidden_rows, out_rows], [first_b, hidden_biases, out_biases], q)


@pytest.fixture
def twovar_fixture():
    """Layer 2 holds the pair W_i = (1, 1), W_k = (-1, -1) with zero biases."""
    model = tiny_model([[1, 1], [-1, -1]], [0, 0], [[1, 0], [0, 1]], [0, 0])
    spec = InputSpec((0, 0), 1, Fraction(2), Norm.L1, 0)
    return model, spec
