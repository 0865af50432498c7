"""Hand a model to an external MILP solver through an LP file.

The command is run as ``<command...> <lp_path> <result_path>`` and must write
JSON ``{"status": ..., "objective": number|null, "bound": number|null}`` to
``result_path``.  Status strings use the internal names (``Optimal``,
``BoundStop``, ``Infeasible``, ``TimeLimit``, ...); unknown strings are read
as ``TimeLimit``.
"""
from __future__ import annotations

import json
import logging
import shlex
import subprocess
import tempfile
import warnings
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .ipmodel import IpModel, LossyExportWarning, export_lp_text
from .solver import SolveOutcome, Status

log = logging.getLogger(__name__)


class ExternalSolverError(RuntimeError):
    pass


def _rational(v) -> Optional[Fraction]:
    if v is None:
        return None
    return Fraction(str(v))


def solve_external(model: IpModel, command: str, time_limit_ms: Optional[int] = None) -> SolveOutcome:
    """Export ``model``, run ``command`` on it and read back the result file."""
    with tempfile.TemporaryDirectory(prefix="bnnverify-") as tmp:
        lp_path = Path(tmp) / "model.lp"
        res_path = Path(tmp) / "result.json"
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", LossyExportWarning)
            with lp_path.open("w") as fh:
                export_lp_text(model, fh)
        for w in caught:
            log.warning("%s", w.message)
        argv = shlex.split(command) + [str(lp_path), str(res_path)]
        timeout = None if time_limit_ms is None else time_limit_ms / 1000 + 5
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout, check=False)
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise ExternalSolverError(f"external solver failed to run: {exc}") from exc
        if proc.returncode != 0:
            raise ExternalSolverError(f"external solver exited {proc.returncode}: {proc.stderr.strip()}")
        try:
            data = json.loads(res_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ExternalSolverError(f"unreadable result file: {exc}") from exc
    try:
        status = Status(data.get("status"))
    except ValueError:
        status = Status.TIME_LIMIT
    objective = _rational(data.get("objective"))
    bound = _rational(data.get("bound"))
    if status is Status.OPTIMAL and bound is None:
        bound = objective
    return SolveOutcome(status, incumbent_value=objective, best_bound=bound)
