"""Layerwise derived valid inequalities.

A neuron ``i`` of layer ``l`` is constant ``(1 - c)/2`` on the reachable set
exactly when ``max c * sum_j W_ij x_j <= c * R / 2`` over the previous
layer's reachable set.  Replacing that set by an outer approximation gives a
sufficient test, which is what every check below runs.  A pair ``(i, k)``
gets the inequality ``c_i x_i + c_k x_k <= (c_i + c_k)/2`` when the same test
for ``i`` passes under the side condition that ``k`` takes value ``(1+c_k)/2``.

All threshold tests are integer compares: objectives are ``2 c sum W x``
(times q at layer 1 because the inputs are the numerators ``y``) against the
odd integer ``c * r2q``.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .approx import DEFAULT_POOL_CAP, InfeasibleOuterApprox, InnerApprox, OuterApprox
from .formulation import VerificationIp, build_input_constraints
from .ipmodel import GE, LE, IpModel
from .network import BnnModel, InputSpec, Norm, layer_constants
from .solver import SolveControls, Status, solve_mip

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    VALID = "Valid"
    INVALID = "Invalid"
    UNDECIDED = "Undecided"


@dataclass
class CutConfig:
    max_fail: int = 100
    pool_cap: int = DEFAULT_POOL_CAP
    subproblem_node_limit: int = 10_000
    subproblem_time_limit_ms: int = 1_000
    gen_twovar_layer1: bool = False
    deadline: Optional[float] = None  # time.monotonic() value

    def expired(self) -> bool:
        return self.deadline is not None and time.monotonic() >= self.deadline

    def to_dict(self) -> dict:
        return {
            "max_fail": self.max_fail,
            "pool_cap": self.pool_cap,
            "subproblem_budget": {"nodes": self.subproblem_node_limit,
                                  "time_ms": self.subproblem_time_limit_ms},
            "gen_twovar_layer1": self.gen_twovar_layer1,
        }


@dataclass
class CandidateResult:
    kind: str  # "fix" or "2var"
    layer: int
    indices: tuple
    signs: tuple
    verdict: Verdict
    subproblem_value: Optional[Fraction] = None
    screened: bool = False
    harvested: list = field(default_factory=list)  # points of layer - 1
    status: str = ""

    @property
    def feasible_points_harvested(self) -> int:
        return len(self.harvested)


def new_census(num_hidden: int) -> dict:
    return {layer: {"fixed0": 0, "fixed1": 0, "twovar": 0, "screened": 0, "undecided": 0}
            for layer in range(1, num_hidden + 1)}


def finalize_census(census: dict, outer: OuterApprox) -> dict:
    for layer, cuts in outer.layers.items():
        bits = list(cuts.fixings.values())
        census[layer]["fixed0"] = bits.count(0)
        census[layer]["fixed1"] = bits.count(1)
        census[layer]["twovar"] = len(cuts.two_var)
    return census


# -- analytic subproblems -------------------------------------------------------

def layer1_row_max(row: Sequence[int], c: int, spec: InputSpec):
    """Maximize ``c * sum_j row_j x_j`` over the perturbation set.

    Returns ``(zstar, y)`` with ``zstar`` exact and ``y`` the q-scaled
    maximizer.
    """
    q = spec.q
    anchor = spec.anchor_q
    s = [c * int(w) for w in row]
    if spec.norm is Norm.LINF:
        y = []
        for j, sj in enumerate(s):
            lo, hi = spec.linf_range(j)
            y.append(hi if sj > 0 else lo if sj < 0 else anchor[j])
    elif spec.norm is Norm.L1:
        target = [q if sj > 0 else 0 if sj < 0 else a for sj, a in zip(s, anchor)]
        budget = (q * spec.epsilon).__floor__()
        if sum(abs(t - a) for t, a in zip(target, anchor)) <= budget:
            y = target
        else:
            y = list(anchor)
            for j, (t, a) in enumerate(zip(target, anchor)):
                step = min(budget, abs(t - a))
                y[j] = a + step if t >= a else a - step
                budget -= step
                if budget == 0:
                    break
    else:
        y = _l2_row_max(s, spec)
    value = sum(sj * yj for sj, yj in zip(s, y))
    return Fraction(value, q), tuple(y)


def _l2_row_max(s, spec: InputSpec) -> list:
    anchor = spec.anchor_q
    q = spec.q
    limit = (q * spec.epsilon) ** 2
    caps = [(q - a) if sj > 0 else a if sj < 0 else 0 for sj, a in zip(s, anchor)]
    active = [j for j, cap in enumerate(caps) if cap > 0]

    def cost(m):
        return sum(min(m, caps[j]) ** 2 for j in active)

    lo, hi = 0, max((caps[j] for j in active), default=0)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if cost(mid) <= limit:
            lo = mid
        else:
            hi = mid - 1
    m = lo
    step = {j: min(m, caps[j]) for j in active}
    used = cost(m)
    for j in active:
        if caps[j] > m and used + 2 * m + 1 <= limit:
            step[j] += 1
            used += 2 * m + 1
    y = list(anchor)
    for j, d in step.items():
        y[j] = anchor[j] + d if s[j] > 0 else anchor[j] - d
    return y


def solve_layer1_fix_subproblem(model: BnnModel, spec: InputSpec, i: int, c: int):
    """``max c * sum_j W^1_ij x_j`` over the input set, in closed form."""
    return layer1_row_max(model.weights(1)[i], c, spec)


def solve_fixonly_subproblem(model: BnnModel, layer: int, i: int, c: int, fixings: dict):
    """Greedy maximizer of ``c * sum_j W_ij x_j`` when layer ``layer-1`` carries
    fixings only.  Returns ``(zstar, x)`` with integer ``zstar``."""
    if layer < 2:
        raise ValueError("fix-only subproblems live on layers >= 2")
    row = model.weights(layer)[i]
    x = []
    for j, w in enumerate(row):
        if j in fixings:
            x.append(int(fixings[j]))
        else:
            x.append(1 if c * int(w) == 1 else 0)
    return int(sum(c * int(w) * xj for w, xj in zip(row, x))), tuple(x)


# -- MILP-backed subproblems ----------------------------------------------------

def _subproblem_model(model: BnnModel, spec: InputSpec, layer: int, outer: OuterApprox):
    """Variables for the previous layer's outer approximation."""
    if layer == 1:
        ip = VerificationIp(IpModel(name="sub-l1"), model, spec, "sub")
        build_input_constraints(ip, spec)
        cols = [ip.var_index[("y", j)] for j in range(model.dims[0])]
        return ip.model, cols
    prev = layer - 1
    m = IpModel(name=f"sub-l{layer}")
    fix = outer.fixings(prev)
    cols = []
    for j in range(model.dims[prev]):
        bit = fix.get(j)
        lo, hi = (bit, bit) if bit is not None else (0, 1)
        cols.append(m.add_var(f"x{prev}_{j}", lo, hi, integral=True).index)
    for i, ci, k, ck in outer.two_var(prev):
        m.add_constraint([(cols[i], ci), (cols[k], ck)], LE, Fraction(ci + ck, 2))
    return m, cols


def _scaled_row(model: BnnModel, layer: int, i: int, c: int, cols):
    row = model.weights(layer)[i]
    return [(cols[j], 2 * c * int(w)) for j, w in enumerate(row) if w]


def _budget(config: CutConfig) -> SolveControls:
    limit = config.subproblem_time_limit_ms
    if config.deadline is not None:
        remaining = int((config.deadline - time.monotonic()) * 1000)
        limit = max(1, min(limit, remaining))
    return SolveControls(node_limit=config.subproblem_node_limit, time_limit_ms=limit,
                         collect_solution_pool=True)


def _milp_verdict(m: IpModel, cols, threshold: int, config: CutConfig):
    controls = _budget(config)
    controls.stop_if_bound_at_most = Fraction(threshold)
    controls.stop_if_incumbent_above = Fraction(threshold)
    out = solve_mip(m, controls)
    harvested = [tuple(int(p[j]) for j in cols) for p in out.solution_pool]
    if out.status is Status.INFEASIBLE:
        return Verdict.VALID, None, harvested, out.status.value
    if out.status is Status.QUAD_UNSUPPORTED:
        return Verdict.UNDECIDED, None, harvested, out.status.value
    if out.incumbent_value is not None and out.incumbent_value > threshold:
        return Verdict.INVALID, out.incumbent_value, harvested, out.status.value
    if out.best_bound is not None and out.best_bound <= threshold:
        return Verdict.VALID, out.incumbent_value, harvested, out.status.value
    return Verdict.UNDECIDED, out.incumbent_value, harvested, out.status.value


def _unscale(value: Optional[Fraction], layer: int, q: int) -> Optional[Fraction]:
    if value is None:
        return None
    return Fraction(value) / (2 * q if layer == 1 else 2)


# -- candidate checks -----------------------------------------------------------

def check_fixing(model: BnnModel, spec: InputSpec, layer: int, i: int, c: int, outer: OuterApprox,
                 inner: Optional[InnerApprox] = None, config: Optional[CutConfig] = None,
                 screen: bool = True) -> CandidateResult:
    """Try to prove ``x^layer_i == (1 - c)/2`` on the reachable set."""
    config = config or CutConfig()
    res = CandidateResult("fix", layer, (i,), (c,), Verdict.UNDECIDED)
    if screen and inner is not None and inner.size(layer):
        col = inner.matrix(layer)[:, i]
        if np.any(2 * c * col > c - 1):
            res.verdict, res.screened, res.status = Verdict.INVALID, True, "screened"
            return res
    k = layer_constants(model, layer, i)
    threshold = c * k.r2q
    if layer == 1:
        z, y = solve_layer1_fix_subproblem(model, spec, i, c)
        res.subproblem_value = z
        res.harvested = [y]
        res.verdict = Verdict.VALID if 2 * model.q * z <= threshold else Verdict.INVALID
        res.status = "analytic"
    elif outer.is_fix_only(layer - 1):
        z, x = solve_fixonly_subproblem(model, layer, i, c, outer.fixings(layer - 1))
        res.subproblem_value = Fraction(z)
        res.harvested = [x]
        res.verdict = Verdict.VALID if 2 * z <= threshold else Verdict.INVALID
        res.status = "greedy"
    else:
        m, cols = _subproblem_model(model, spec, layer, outer)
        m.set_objective(_scaled_row(model, layer, i, c, cols))
        verdict, value, harvested, status = _milp_verdict(m, cols, threshold, config)
        res.verdict, res.harvested, res.status = verdict, harvested, status
        res.subproblem_value = _unscale(value, layer, model.q)
    return res


def check_twovar(model: BnnModel, spec: InputSpec, layer: int, i: int, ci: int, k: int, ck: int,
                 outer: OuterApprox, inner: Optional[InnerApprox] = None,
                 config: Optional[CutConfig] = None, screen: bool = True) -> CandidateResult:
    """Try to prove ``ci*x_i + ck*x_k <= (ci + ck)/2`` on the reachable set."""
    if i >= k:
        raise ValueError("need i < k")
    config = config or CutConfig()
    res = CandidateResult("2var", layer, (i, k), (ci, ck), Verdict.UNDECIDED)
    if screen and inner is not None and inner.size(layer):
        mat = inner.matrix(layer)
        if np.any(2 * (ci * mat[:, i] + ck * mat[:, k]) > ci + ck):
            res.verdict, res.screened, res.status = Verdict.INVALID, True, "screened"
            return res
    const_i = layer_constants(model, layer, i)
    const_k = layer_constants(model, layer, k)
    m, cols = _subproblem_model(model, spec, layer, outer)
    # side condition: neuron k outputs (1 + c_k)/2
    m.add_constraint(_scaled_row(model, layer, k, ck, cols), GE, ck * const_k.r2q, tag="side")
    m.set_objective(_scaled_row(model, layer, i, ci, cols))
    verdict, value, harvested, status = _milp_verdict(m, cols, ci * const_i.r2q, config)
    res.verdict, res.harvested, res.status = verdict, harvested, status
    res.subproblem_value = _unscale(value, layer, model.q)
    return res


def score(candidate, pool: np.ndarray) -> Fraction:
    """Fraction of pool members already on the cut's side, summed over both neurons."""
    i, ci, k, ck = candidate
    pool = np.asarray(pool)
    if pool.size == 0:
        return Fraction(0)
    hits = int(np.sum(pool[:, i] == (1 - ci) // 2)) + int(np.sum(pool[:, k] == (1 - ck) // 2))
    return Fraction(hits, pool.shape[0])


def _harvest(inner: InnerApprox, layer: int, points) -> None:
    # subproblem points live on layer - 1; update() propagates them onward
    if points:
        inner.update(layer - 1, points)


# -- phases ---------------------------------------------------------------------

def phase_one(model: BnnModel, spec: InputSpec, config: Optional[CutConfig] = None):
    """Fixings from closed-form (layer 1) and greedy (deeper) subproblems.

    Returns ``(outer, inner, census)``.
    """
    config = config or CutConfig()
    outer = OuterApprox(model.num_hidden)
    inner = InnerApprox(model, config.pool_cap)
    inner.update(0, [spec.anchor_q])
    census = new_census(model.num_hidden)
    for layer in range(1, model.num_hidden + 1):
        for i in range(model.dims[layer]):
            for c in (-1, 1):
                res = check_fixing(model, spec, layer, i, c, outer, inner, config, screen=False)
                if layer == 1:
                    inner.update(0, res.harvested)
                if res.verdict is Verdict.VALID:
                    outer.fix(layer, i, (1 - c) // 2)
    return outer, inner, finalize_census(census, outer)


def _phase_two_fix(model, spec, layer, outer, inner, config, census):
    for i in range(model.dims[layer]):
        if i in outer.fixings(layer):
            continue
        for c in (-1, 1):
            if config.expired():
                return
            res = check_fixing(model, spec, layer, i, c, outer, inner, config)
            if res.screened:
                census[layer]["screened"] += 1
                continue
            _harvest(inner, layer, res.harvested)
            if res.verdict is Verdict.VALID:
                outer.fix(layer, i, (1 - c) // 2)
            elif res.verdict is Verdict.UNDECIDED:
                census[layer]["undecided"] += 1


def gen_two_var(model: BnnModel, spec: InputSpec, layer: int, outer: OuterApprox, inner: InnerApprox,
                config: CutConfig, census: dict) -> None:
    """Score-ordered two-variable inequality search with a failure budget."""
    fixed = outer.fixings(layer)
    free = [i for i in range(model.dims[layer]) if i not in fixed]
    pool = inner.matrix(layer)
    cands = [(i, ci, k, ck) for a, i in enumerate(free) for k in free[a + 1:]
             for ci in (-1, 1) for ck in (-1, 1)]
    cands.sort(key=lambda t: (-score(t, pool), t[0], t[2], t[1], t[3]))
    fails = 0
    for i, ci, k, ck in cands:
        # checked first so that max_fail == 0 adds nothing
        if fails >= config.max_fail or config.expired():
            break
        res = check_twovar(model, spec, layer, i, ci, k, ck, outer, inner, config)
        if res.screened:
            census[layer]["screened"] += 1
            continue
        _harvest(inner, layer, res.harvested)
        if res.verdict is Verdict.VALID:
            outer.add_two_var(layer, i, ci, k, ck)
            fails = 0
        else:
            if res.verdict is Verdict.UNDECIDED:
                census[layer]["undecided"] += 1
            fails += 1


def phase_two(model: BnnModel, spec: InputSpec, outer: OuterApprox, inner: InnerApprox,
              config: Optional[CutConfig] = None, census: Optional[dict] = None) -> OuterApprox:
    """Second pass: MILP-backed fixings and two-variable inequalities, layer by layer."""
    config = config or CutConfig()
    census = census if census is not None else new_census(model.num_hidden)
    if config.gen_twovar_layer1:
        gen_two_var(model, spec, 1, outer, inner, config, census)
    for layer in range(2, model.num_hidden + 1):
        _phase_two_fix(model, spec, layer, outer, inner, config, census)
        gen_two_var(model, spec, layer, outer, inner, config, census)
    finalize_census(census, outer)
    return outer


__all__ = [
    "CandidateResult", "CutConfig", "InfeasibleOuterApprox", "Verdict", "check_fixing", "check_twovar",
    "gen_two_var", "layer1_row_max", "phase_one", "phase_two", "score", "solve_fixonly_subproblem",
    "solve_layer1_fix_subproblem",
]
