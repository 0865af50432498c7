"""End-to-end verification with the five IP methods.

``many-ip``        one IP per alternative class
``1-ip``           single IP with class selectors
``1-ip+hg``        single IP strengthened by hull-cut constraint generation
``1-ip+fix``       single IP plus phase-one fixings
``1-ip+fix+2var``  phase one, a root-only solve, then phase two if undecided

In ``verify`` mode solves stop as soon as the sign of the optimum is known.
In ``optimize`` mode every solve runs to optimality and the two-phase method
always runs its second phase, which makes root LP values and node counts
comparable across methods.
"""
from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .approx import InfeasibleOuterApprox
from .external import ExternalSolverError, solve_external
from .formulation import VerificationIp, apply_outer_approx, build_many_ip, build_one_ip
from .hull import constraint_generation
from .layerwise import CutConfig, phase_one, phase_two
from .network import BnnModel, InputSpec, margin_upper_bound
from .solver import SolveControls, SolveOutcome, Status, solve_mip

log = logging.getLogger(__name__)

METHODS = ("many-ip", "1-ip", "1-ip+hg", "1-ip+fix", "1-ip+fix+2var")
MODES = ("verify", "optimize")
REPORT_SCHEMA_VERSION = 1


class Answer(str, enum.Enum):
    VERIFIED = "VERIFIED"
    FALSIFIED = "FALSIFIED"
    UNKNOWN = "UNKNOWN"


@dataclass
class MethodConfig:
    method: str = "1-ip+fix+2var"
    mode: str = "verify"
    time_limit_ms: int = 3_600_000
    cut_time_limit_ms: int = 2_700_000
    max_fail: int = 100
    pool_cap: int = 4096
    subproblem_node_limit: int = 10_000
    subproblem_time_limit_ms: int = 1_000
    gen_twovar_layer1: bool = False
    external_solver: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.time_limit_ms <= 0 or self.cut_time_limit_ms <= 0:
            raise ValueError("time limits must be positive")
        if self.cut_time_limit_ms > self.time_limit_ms:
            raise ValueError("cut phase limit exceeds the total time limit")
        if self.max_fail < 0:
            raise ValueError("max_fail must be non-negative")

    def cut_config(self, deadline: Optional[float]) -> CutConfig:
        return CutConfig(self.max_fail, self.pool_cap, self.subproblem_node_limit,
                         self.subproblem_time_limit_ms, self.gen_twovar_layer1, deadline)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "mode": self.mode,
            "time_limit_ms": self.time_limit_ms,
            "cut_time_limit_ms": self.cut_time_limit_ms,
            "external_solver": self.external_solver,
        }
        d.update(self.cut_config(None).to_dict())
        return d


def _fmt(v) -> Optional[str]:
    return None if v is None else str(Fraction(v))


@dataclass
class VerifyReport:
    answer: Answer
    method: str
    mode: str
    spec: InputSpec
    z_ub: int
    status: str = ""
    objective: Optional[Fraction] = None
    best_bound: Optional[Fraction] = None
    nodes: int = 0
    root_lp_value: Optional[Fraction] = None
    root_lp_exact: bool = False
    census: dict = field(default_factory=dict)
    hull: Optional[dict] = None
    decided_at_root: bool = False
    witness: Optional[dict] = None
    reason: Optional[str] = None
    per_class: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def lp_gap(self) -> Optional[Fraction]:
        """``(root LP - best known objective) / z_ub``."""
        if self.root_lp_value is None or self.objective is None or self.z_ub == 0:
            return None
        return (Fraction(self.root_lp_value) - self.objective) / self.z_ub

    def to_dict(self, deterministic: bool = False) -> dict:
        gap = self.lp_gap
        doc = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "answer": self.answer.value,
            "method": self.method,
            "mode": self.mode,
            "norm": self.spec.norm.value,
            "epsilon": _fmt(self.spec.epsilon),
            "true_class": self.spec.true_class,
            "status": self.status,
            "objective": _fmt(self.objective),
            "best_bound": _fmt(self.best_bound),
            "nodes": self.nodes,
            "root_lp_value": _fmt(self.root_lp_value),
            "root_lp_exact": self.root_lp_exact,
            "z_ub": self.z_ub,
            "lp_gap": None if gap is None else float(gap),
            "census": {str(k): v for k, v in sorted(self.census.items())},
            "hull": self.hull,
            "decided_at_root": self.decided_at_root,
            "witness": self.witness,
            "reason": self.reason,
            "per_class": self.per_class,
            "config": self.config,
            "deterministic": deterministic,
        }
        if self.objective is not None and self.objective == 0 and self.answer is Answer.VERIFIED:
            doc["tie_note"] = "optimum is exactly 0: some perturbation ties the true class"
        if not deterministic:
            doc["timings"] = {k: round(v, 3) for k, v in sorted(self.timings.items())}
        return doc


class _Clock:
    def __init__(self, total_ms: int):
        self.start = time.monotonic()
        self.deadline = self.start + total_ms / 1000
        self.marks = {}

    def remaining_ms(self) -> int:
        return max(1, int((self.deadline - time.monotonic()) * 1000))

    def elapsed_ms(self) -> float:
        return (time.monotonic() - self.start) * 1000


def answer_from(out: SolveOutcome) -> Answer:
    if out.status is Status.QUAD_UNSUPPORTED:
        return Answer.UNKNOWN
    if out.status is Status.INFEASIBLE:
        return Answer.VERIFIED
    if out.best_bound is not None and out.best_bound <= 0:
        return Answer.VERIFIED
    if out.incumbent_value is not None and out.incumbent_value > 0:
        return Answer.FALSIFIED
    return Answer.UNKNOWN


def _controls(cfg: MethodConfig, time_ms: int, node_limit: Optional[int] = None) -> SolveControls:
    c = SolveControls(node_limit=node_limit, time_limit_ms=time_ms)
    if cfg.mode == "verify":
        c.stop_if_bound_at_most = Fraction(0)
        c.stop_if_incumbent_above = Fraction(0)
    return c


def _solve(ip: VerificationIp, cfg: MethodConfig, controls: SolveControls) -> SolveOutcome:
    if ip.model.quadratic is None:
        return solve_mip(ip.model, controls, context=ip)
    if cfg.external_solver:
        return solve_external(ip.model, cfg.external_solver, controls.time_limit_ms)
    return SolveOutcome(Status.QUAD_UNSUPPORTED)


def _witness(ip: VerificationIp, out: SolveOutcome) -> Optional[dict]:
    if out.incumbent_point is None:
        return None
    point = out.incumbent_point
    if ip.kind == "many":
        cls = ip.alt_class
    else:
        cls = next(t for t in range(ip.bnn.num_classes)
                   if ("z", t) in ip.var_index and point[ip.var_index[("z", t)]] == 1)
    return {"input_q": list(ip.input_of(point)), "class": cls}


def _absorb(report: VerifyReport, ip: VerificationIp, out: SolveOutcome) -> None:
    report.status = out.status.value
    report.objective = out.incumbent_value
    report.best_bound = out.best_bound
    report.nodes += out.nodes_processed
    report.root_lp_value = out.root_lp_value
    report.root_lp_exact = out.root_lp_exact
    report.answer = answer_from(out)
    if report.answer is Answer.FALSIFIED:
        report.witness = _witness(ip, out)
    if out.status is Status.QUAD_UNSUPPORTED:
        report.reason = "quadratic (l2) ball needs an external solver; pass --external-solver"


def verify_bnn(model: BnnModel, spec: InputSpec, config: Optional[MethodConfig] = None) -> VerifyReport:
    """Decide whether every input in the perturbation set keeps the true class.

    Parameters
    ----------
    model : BnnModel
    spec : InputSpec
        Anchor, radius, norm and true class.
    config : MethodConfig, optional
        Method, mode, limits and cut-generation settings.

    Returns
    -------
    VerifyReport
        ``answer`` is VERIFIED when the maximal margin ``f_t - f_tbar`` over
        the set is ``<= 0``, FALSIFIED when an input with positive margin was
        found, and UNKNOWN otherwise.
    """
    cfg = config or MethodConfig()
    spec.validate_for(model)
    clock = _Clock(cfg.time_limit_ms)
    report = VerifyReport(Answer.UNKNOWN, cfg.method, cfg.mode, spec, margin_upper_bound(model, spec.true_class),
                          config=cfg.to_dict())
    try:
        if cfg.method == "many-ip":
            _run_many(model, spec, cfg, clock, report)
        elif cfg.method == "1-ip":
            ip = build_one_ip(model, spec)
            _absorb(report, ip, _solve(ip, cfg, _controls(cfg, clock.remaining_ms())))
        elif cfg.method == "1-ip+hg":
            _run_hull(model, spec, cfg, clock, report)
        else:
            _run_layerwise(model, spec, cfg, clock, report)
    except ExternalSolverError as exc:
        report.answer = Answer.UNKNOWN
        report.reason = str(exc)
    except InfeasibleOuterApprox as exc:
        # cannot happen with sound cuts on a non-empty input set
        log.error("inconsistent outer approximation: %s", exc)
        report.answer = Answer.UNKNOWN
        report.reason = f"inconsistent outer approximation: {exc}"
    report.timings["total_ms"] = clock.elapsed_ms()
    return report


def _run_many(model, spec, cfg, clock, report):
    classes = [t for t in range(model.num_classes) if t != spec.true_class]
    per_class_ms = max(1, cfg.time_limit_ms // len(classes))
    best_obj = None
    best_root = None
    answers = []
    for t in classes:
        ip = build_many_ip(model, spec, t)
        out = _solve(ip, cfg, _controls(cfg, min(per_class_ms, clock.remaining_ms())))
        ans = answer_from(out)
        answers.append(ans)
        report.nodes += out.nodes_processed
        report.per_class.append({"class": t, "status": out.status.value, "objective": _fmt(out.incumbent_value),
                                 "best_bound": _fmt(out.best_bound), "nodes": out.nodes_processed,
                                 "root_lp_value": _fmt(out.root_lp_value)})
        if out.incumbent_value is not None and (best_obj is None or out.incumbent_value > best_obj):
            best_obj = out.incumbent_value
            if ans is Answer.FALSIFIED:
                report.witness = _witness(ip, out)
        if out.root_lp_value is not None:
            best_root = out.root_lp_value if best_root is None else max(best_root, out.root_lp_value)
        if out.status is Status.QUAD_UNSUPPORTED:
            report.reason = "quadratic (l2) ball needs an external solver; pass --external-solver"
        if ans is Answer.FALSIFIED and cfg.mode == "verify":
            break
    bounds = [pc["best_bound"] for pc in report.per_class]
    report.objective = best_obj
    report.root_lp_value = best_root
    report.root_lp_exact = False
    if all(b is not None for b in bounds) and len(bounds) == len(classes):
        report.best_bound = max(Fraction(b) for b in bounds)
    if Answer.FALSIFIED in answers:
        report.answer = Answer.FALSIFIED
    elif len(answers) == len(classes) and all(a is Answer.VERIFIED for a in answers):
        report.answer = Answer.VERIFIED
    else:
        report.answer = Answer.UNKNOWN
    report.status = ",".join(sorted({pc["status"] for pc in report.per_class}))


def _run_hull(model, spec, cfg, clock, report):
    ip = build_one_ip(model, spec)
    t0 = time.monotonic()
    if ip.model.quadratic is None:
        res = constraint_generation(ip, model, deadline=clock.start + cfg.cut_time_limit_ms / 1000)
        report.hull = {"iterations": res.iterations, "cuts": res.cuts_added,
                       "lp_trace": [_fmt(v) for v in res.lp_trace]}
    else:
        report.hull = {"iterations": 0, "cuts": 0, "lp_trace": [], "skipped": "quadratic ball"}
    report.timings["cuts_ms"] = (time.monotonic() - t0) * 1000
    _absorb(report, ip, _solve(ip, cfg, _controls(cfg, clock.remaining_ms())))


def _run_layerwise(model, spec, cfg, clock, report):
    cut_deadline = clock.start + cfg.cut_time_limit_ms / 1000
    ccfg = cfg.cut_config(cut_deadline)
    t0 = time.monotonic()
    outer, inner, census = phase_one(model, spec, ccfg)
    report.timings["phase_one_ms"] = (time.monotonic() - t0) * 1000
    report.census = census
    ip = build_one_ip(model, spec)
    apply_outer_approx(ip, outer)
    if cfg.method == "1-ip+fix":
        _absorb(report, ip, _solve(ip, cfg, _controls(cfg, clock.remaining_ms())))
        return
    if cfg.mode == "verify":
        out = _solve(ip, cfg, _controls(cfg, clock.remaining_ms(), node_limit=1))
        if answer_from(out) is not Answer.UNKNOWN:
            _absorb(report, ip, out)
            report.decided_at_root = True
            return
        report.nodes += out.nodes_processed
    t1 = time.monotonic()
    phase_two(model, spec, outer, inner, ccfg, census)
    report.timings["phase_two_ms"] = (time.monotonic() - t1) * 1000
    report.census = census
    ip = build_one_ip(model, spec)
    apply_outer_approx(ip, outer)
    _absorb(report, ip, _solve(ip, cfg, _controls(cfg, clock.remaining_ms())))
