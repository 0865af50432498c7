"""Benchmark campaigns and the summary metrics.

Per-run records go to CSV first; the aggregate table is then computed from
the CSV text alone, so re-aggregating a saved CSV reproduces it exactly.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

from .generate import random_instance
from .network import Norm, load_input, load_model
from .verify import MethodConfig, verify_bnn

log = logging.getLogger(__name__)

CSV_FIELDS = ["instance", "method", "answer", "status", "time_ms", "time_limit_hit", "nodes",
              "root_lp_value", "objective", "z_ub", "lp_gap", "census"]


def shifted_geometric_mean(values: Iterable[float], shift: float = 1.0) -> float:
    """``(prod (v + shift))^(1/n) - shift``, computed through logarithms."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no values")
    if any(v + shift <= 0 for v in vals):
        raise ValueError("values must exceed -shift")
    return math.exp(math.fsum(math.log(v + shift) for v in vals) / len(vals)) - shift


def lp_gap(z_lp, z_star, z_ub) -> Fraction:
    """``(z_lp - z_star) / z_ub`` exactly."""
    z_ub = Fraction(z_ub)
    if z_ub <= 0:
        raise ValueError("z_ub must be positive")
    return (Fraction(z_lp) - Fraction(z_star)) / z_ub


def _load_instance(inst: dict, base: Path):
    if "seed" in inst:
        model, spec = random_instance(int(inst["seed"]), norm=inst.get("norm"))
        if "eps" in inst:
            spec = spec.with_epsilon(Fraction(str(inst["eps"])))
        return model, spec
    model = load_model(base / inst["model"])
    spec = load_input(base / inst["input"], model, Fraction(str(inst.get("eps", 0))),
                      Norm.parse(inst.get("norm", "l1")))
    return model, spec


def run_campaign(campaign: dict, base: Path = Path("."), deterministic: bool = False) -> str:
    """Run every (instance, method) cell and return the records as CSV text.

    A cell that raises is recorded with answer ``ERROR`` and the run goes on.
    """
    methods = campaign.get("methods", ["1-ip", "1-ip+fix+2var"])
    time_limit = int(campaign.get("time_limit_ms", 60_000))
    cut_limit = int(campaign.get("cut_time_limit_ms", min(time_limit, max(1, time_limit * 3 // 4))))
    mode = campaign.get("mode", "verify")
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for idx, inst in enumerate(campaign.get("instances", [])):
        iid = str(inst.get("id", idx))
        try:
            model, spec = _load_instance(inst, Path(base))
        except Exception as exc:
            log.error("instance %s failed to load: %s", iid, exc)
            model = spec = exc
        for method in methods:
            row = {k: "" for k in CSV_FIELDS}
            row.update(instance=iid, method=method)
            try:
                if isinstance(model, Exception):
                    raise model
                cfg = MethodConfig(method=method, mode=mode, time_limit_ms=time_limit,
                                   cut_time_limit_ms=cut_limit, max_fail=int(campaign.get("max_fail", 100)))
                rep = verify_bnn(model, spec, cfg)
            except Exception as exc:  # partial-failure tolerant by contract
                log.error("cell %s/%s failed: %s", iid, method, exc)
                row.update(answer="ERROR", status=type(exc).__name__)
                writer.writerow(row)
                continue
            gap = rep.lp_gap
            row.update(
                answer=rep.answer.value,
                status=rep.status,
                time_ms="" if deterministic else f"{rep.timings['total_ms']:.3f}",
                time_limit_hit=int("TimeLimit" in rep.status),
                nodes=rep.nodes,
                root_lp_value="" if rep.root_lp_value is None else str(rep.root_lp_value),
                objective="" if rep.objective is None else str(rep.objective),
                z_ub=rep.z_ub,
                lp_gap="" if gap is None else str(gap),
                census=json.dumps({str(k): v for k, v in sorted(rep.census.items())}, sort_keys=True),
            )
            writer.writerow(row)
    return buf.getvalue()


def aggregate(csv_text: str) -> dict:
    """Per-method table: shifted geometric mean time, mean LP gap, time-limit hits."""
    rows = list(csv.DictReader(io.StringIO(csv_text)))
    table = {}
    for method in sorted({r["method"] for r in rows}):
        mine = [r for r in rows if r["method"] == method and r["answer"] != "ERROR"]
        times = [float(r["time_ms"]) / 1000 for r in mine if r["time_ms"]]
        gaps = [Fraction(r["lp_gap"]) for r in mine if r["lp_gap"]]
        nodes = sorted(int(r["nodes"]) for r in mine)
        table[method] = {
            "runs": len(mine),
            "errors": sum(1 for r in rows if r["method"] == method and r["answer"] == "ERROR"),
            "shifted_geomean_time_s": shifted_geometric_mean(times) if times else None,
            "mean_lp_gap": float(sum(gaps) / len(gaps)) if gaps else None,
            "time_limit_hits": sum(int(r["time_limit_hit"] or 0) for r in mine),
            "median_nodes": _median(nodes),
            "answers": {a: sum(1 for r in mine if r["answer"] == a)
                        for a in ("VERIFIED", "FALSIFIED", "UNKNOWN")},
        }
    return table


def _median(xs: list) -> Optional[float]:
    if not xs:
        return None
    n = len(xs)
    mid = n // 2
    return float(xs[mid]) if n % 2 else (xs[mid - 1] + xs[mid]) / 2


def write_outputs(csv_text: str, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "records.csv").write_text(csv_text)
    table = aggregate((out_dir / "records.csv").read_text())
    (out_dir / "aggregate.json").write_text(json.dumps(table, sort_keys=True, indent=2) + "\n")
    return table
