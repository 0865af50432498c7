"""Command-line front end.

Exit codes for ``verify``: 0 VERIFIED, 1 FALSIFIED, 2 UNKNOWN, 64 malformed
input.  Other subcommands exit 0 on success and 64 on bad input.  The log
level comes from ``BNNVERIFY_LOG`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .bench import run_campaign, write_outputs
from .generate import gen_model
from .network import ModelError, Norm, dump_model, load_input, load_model
from .oracle import CapExceeded, enumerate_x0, exact_zstar
from .search import DEFAULT_EPS_INIT, max_eps
from .verify import METHODS, MODES, Answer, MethodConfig, verify_bnn

EXIT_CODES = {Answer.VERIFIED: 0, Answer.FALSIFIED: 1, Answer.UNKNOWN: 2}
EXIT_MALFORMED = 64

log = logging.getLogger("bnnverify")


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("model", type=Path)
    p.add_argument("input", type=Path)
    p.add_argument("--norm", choices=[n.value for n in Norm], default="l1")
    p.add_argument("--method", choices=METHODS, default="1-ip+fix+2var")
    p.add_argument("--mode", choices=MODES, default="verify")
    p.add_argument("--time-limit-ms", type=int, default=3_600_000)
    p.add_argument("--cut-limit-ms", type=int, default=None,
                   help="cut-phase budget (default: 3/4 of the time limit)")
    p.add_argument("--max-fail", type=int, default=100)
    p.add_argument("--seed", type=int, default=0, help="recorded in the report; runs are deterministic")
    p.add_argument("--external-solver", default=None, metavar="CMD")
    p.add_argument("--deterministic", action="store_true", help="omit timing fields from the report")
    p.add_argument("--output", type=Path, default=None, help="write the JSON report here as well")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnnverify", description="Exact robustness verification of ternary-weight binarized networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="decide robustness at one radius")
    _add_run_flags(p)
    p.add_argument("--eps", type=_fraction, required=True)
    p.add_argument("--witness", action="store_true", help="include the counterexample input in the report")

    p = sub.add_parser("max-eps", help="bracket the largest verifiable radius")
    _add_run_flags(p)
    p.add_argument("--eps-init", type=_fraction, default=None)
    p.add_argument("--max-iter", type=int, default=6)

    p = sub.add_parser("gen-model", help="write a seeded random network")
    p.add_argument("--dims", type=_int_list, required=True, help="n0,n1,...,n_{L+1}")
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--bias-range", type=_int_list, default=[-2, 2])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q", type=int, default=1)
    p.add_argument("--output", type=Path, default=None)

    p = sub.add_parser("oracle", help="exact optimum by enumerating the input set")
    p.add_argument("model", type=Path)
    p.add_argument("input", type=Path)
    p.add_argument("--eps", type=_fraction, required=True)
    p.add_argument("--norm", choices=[n.value for n in Norm], default="l1")
    p.add_argument("--cap", type=int, default=1_000_000)

    p = sub.add_parser("bench", help="run a campaign of instances x methods")
    p.add_argument("campaign", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--deterministic", action="store_true")
    return parser


def _config(args) -> MethodConfig:
    cut = args.cut_limit_ms
    if cut is None:
        cut = args.time_limit_ms * 3 // 4
    return MethodConfig(method=args.method, mode=args.mode, time_limit_ms=args.time_limit_ms,
                        cut_time_limit_ms=cut, max_fail=args.max_fail,
                        external_solver=args.external_solver)


def _emit(doc: dict, output: Optional[Path]) -> None:
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    sys.stdout.write(text)
    if output is not None:
        output.write_text(text)


def _cmd_verify(args) -> int:
    model = load_model(args.model)
    spec = load_input(args.input, model, args.eps, args.norm)
    report = verify_bnn(model, spec, _config(args))
    doc = report.to_dict(deterministic=args.deterministic)
    doc["seed"] = args.seed
    if not args.witness:
        doc["witness"] = None
    _emit(doc, args.output)
    return EXIT_CODES[report.answer]


def _cmd_max_eps(args) -> int:
    if args.max_iter < 1:
        raise ModelError("--max-iter must be at least 1")
    model = load_model(args.model)
    spec = load_input(args.input, model, 0, args.norm)
    eps_init = args.eps_init if args.eps_init is not None else DEFAULT_EPS_INIT[spec.norm]
    result = max_eps(model, spec, _config(args), eps_init, args.max_iter)
    doc = result.to_dict()
    doc.update(method=args.method, norm=spec.norm.value, eps_init=str(Fraction(eps_init)),
               max_iter=args.max_iter, seed=args.seed)
    _emit(doc, args.output)
    return 0


def _cmd_gen_model(args) -> int:
    if len(args.bias_range) != 2:
        raise ModelError("--bias-range needs two integers lo,hi")
    model = gen_model(args.dims, args.density, tuple(args.bias_range), args.seed, args.q)
    text = dump_model(model)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text)
    return 0


def _cmd_oracle(args) -> int:
    model = load_model(args.model)
    spec = load_input(args.input, model, args.eps, args.norm)
    try:
        size = sum(1 for _ in enumerate_x0(spec, args.cap))
        value, witness, cls = exact_zstar(model, spec, args.cap)
    except CapExceeded as exc:
        raise ModelError(str(exc)) from None
    doc = {
        "zstar": str(value),
        "answer": (Answer.VERIFIED if value <= 0 else Answer.FALSIFIED).value,
        "witness_q": list(witness),
        "witness_class": cls,
        "input_set_size": size,
        "norm": spec.norm.value,
        "epsilon": str(spec.epsilon),
        "true_class": spec.true_class,
    }
    _emit(doc, None)
    return 0


def _cmd_bench(args) -> int:
    try:
        campaign = json.loads(args.campaign.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read campaign {args.campaign}: {exc}") from None
    csv_text = run_campaign(campaign, args.campaign.parent, args.deterministic)
    table = write_outputs(csv_text, args.out_dir)
    _emit(table, None)
    return 0


COMMANDS = {"verify": _cmd_verify, "max-eps": _cmd_max_eps, "gen-model": _cmd_gen_model,
            "oracle": _cmd_oracle, "bench": _cmd_bench}


def main(argv: Optional[Sequence[str]] = None) -> int:
    level = os.environ.get("BNNVERIFY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_MALFORMED if exc.code not in (0, None) else 0
    try:
        return COMMANDS[args.command](args)
    except (ModelError, ValueError, OSError) as exc:
        sys.stderr.write(f"bnnverify: error: {exc}\n")
        return EXIT_MALFORMED


if __name__ == "__main__":
    sys.exit(main())
