"""Doubling/bisection search for the largest verifiable radius."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .network import BnnModel, InputSpec, Norm
from .verify import Answer, MethodConfig, verify_bnn

DEFAULT_EPS_INIT = {Norm.L1: Fraction(1), Norm.LINF: Fraction(1, 255), Norm.L2: Fraction(1, 32)}


@dataclass
class MaxEpsResult:
    eps_lb: Fraction
    eps_ub: Optional[Fraction]
    trace: list = field(default_factory=list)  # dicts: iteration, epsilon, answer

    def to_dict(self) -> dict:
        return {
            "eps_lb": str(self.eps_lb),
            "eps_ub": None if self.eps_ub is None else str(self.eps_ub),
            "trace": self.trace,
        }


def bracket_search(probe: Callable[[Fraction], Answer], eps_init, max_iter: int = 6) -> MaxEpsResult:
    """Run the search with an arbitrary verification oracle ``probe``.

    A VERIFIED answer raises the lower end and doubles (or bisects toward the
    upper end once one exists); any other answer, UNKNOWN included, sets the
    upper end and bisects toward the lower end.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    eps = Fraction(eps_init)
    if eps <= 0:
        raise ValueError("initial epsilon must be positive")
    lb, ub = Fraction(0), None
    result = MaxEpsResult(lb, ub)
    for it in range(1, max_iter + 1):
        ans = probe(eps)
        result.trace.append({"iteration": it, "epsilon": str(eps), "answer": ans.value})
        if ans is Answer.VERIFIED:
            lb = eps
            eps = 2 * eps if ub is None else (eps + ub) / 2
        else:
            ub = eps
            eps = (eps + lb) / 2
    result.eps_lb, result.eps_ub = lb, ub
    return result


def max_eps(model: BnnModel, spec: InputSpec, config: Optional[MethodConfig] = None,
            eps_init=None, max_iter: int = 6, reports: Optional[list] = None) -> MaxEpsResult:
    """Bracket the largest radius ``verify_bnn`` can certify around ``spec``'s anchor."""
    config = config or MethodConfig()
    if eps_init is None:
        eps_init = DEFAULT_EPS_INIT[spec.norm]

    def probe(eps):
        rep = verify_bnn(model, spec.with_epsilon(eps), config)
        if reports is not None:
            reports.append(rep)
        return rep.answer

    return bracket_search(probe, eps_init, max_iter)
