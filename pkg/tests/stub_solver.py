"""Stand-in external MILP solver for tests.

Usage: stub_solver.py MODE MODEL INPUT EPS NORM LP_PATH RESULT_PATH

Checks the LP file parses, then answers with the enumeration oracle (MODE
``oracle``), writes garbage (``garbage``) or exits non-zero (``crash``).
"""
import json
import sys
from fractions import Fraction
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from lp_reader import read_lp  # noqa: E402

from bnnverify.network import load_input, load_model  # noqa: E402
from bnnverify.oracle import exact_zstar  # noqa: E402


def main(argv):
    mode, model_path, input_path, eps, norm, lp_path, result_path = argv
    doc = read_lp(Path(lp_path).read_text())
    if mode == "crash":
        sys.stderr.write("stub: crashing on purpose\n")
        return 3
    if mode == "garbage":
        Path(result_path).write_text("not json")
        return 0
    model = load_model(model_path)
    spec = load_input(input_path, model, Fraction(eps), norm)
    z, _, _ = exact_zstar(model, spec)
    result = {"status": "Optimal", "objective": str(z), "bound": str(z),
              "has_quadratic": doc["quadratic"] is not None}
    Path(result_path).write_text(json.dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
