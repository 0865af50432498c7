import hashlib
import json
import subprocess
import sys
from fractions import Fraction

import pytest

from bnnverify.cli import main
from bnnverify.generate import random_instance
from bnnverify.network import dump_input, dump_model, load_input, propagate_scaled
from bnnverify.oracle import exact_zstar


@pytest.fixture
def instance(tmp_path):
    model, spec = random_instance(5)
    (tmp_path / "m.json").write_text(dump_model(model))
    (tmp_path / "x.json").write_text(dump_input(spec))
    return tmp_path, model, spec


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, out


def test_exit_zero_on_verified(instance, capsys):
    d, _, _ = instance
    code, out = run(capsys, "verify", d / "m.json", d / "x.json", "--eps", "0")
    assert code == 0 and json.loads(out)["answer"] == "VERIFIED"


def test_exit_one_on_falsified_and_witness(instance, capsys):
    d, model, spec = instance
    big = len(spec.anchor_q)  # l1 ball covering the whole box
    code, out = run(capsys, "verify", d / "m.json", d / "x.json", "--eps", big, "--witness")
    doc = json.loads(out)
    assert code == 1 and doc["answer"] == "FALSIFIED"
    y = doc["witness"]["input_q"]
    assert propagate_scaled(model, y).predicted_class != spec.true_class
    code, out = run(capsys, "verify", d / "m.json", d / "x.json", "--eps", big)
    assert json.loads(out)["witness"] is None


def test_exit_two_on_unknown(instance, capsys):
    d, _, _ = instance
    code, out = run(capsys, "verify", d / "m.json", d / "x.json", "--eps", "1", "--norm", "l2")
    assert code == 2 and json.loads(out)["answer"] == "UNKNOWN"


@pytest.mark.parametrize("argv", [
    ["verify", "missing.json", "x.json", "--eps", "1"],
    ["verify", "{m}", "{x}", "--eps", "abc"],
    ["verify", "{m}", "{x}", "--eps", "1", "--norm", "l7"],
    ["verify", "{m}", "{x}"],
    ["nonsense"],
    ["max-eps", "{m}", "{x}", "--max-iter", "0"],
    ["gen-model", "--dims", "3,2"],
    ["gen-model", "--dims", "3,2,2", "--bias-range", "1"],
])
def test_malformed_exit_64(instance, capsys, argv):
    d, _, _ = instance
    argv = [a.format(m=d / "m.json", x=d / "x.json") for a in argv]
    assert main(argv) == 64


def test_malformed_model_file(tmp_path, instance):
    d, _, _ = instance
    (tmp_path / "bad.json").write_text('{"format_version": 1, "layers": [{"weights": [[2]], "biases": [0]}]}')
    assert main(["verify", str(tmp_path / "bad.json"), str(d / "x.json"), "--eps", "1"]) == 64


def test_deterministic_reports_identical(instance, capsys):
    d, _, _ = instance
    argv = ["verify", d / "m.json", d / "x.json", "--eps", "1", "--deterministic", "--mode", "optimize"]
    outs = [run(capsys, *argv)[1] for _ in range(2)]
    assert outs[0] == outs[1]
    assert "total_ms" not in outs[0]


def test_output_file_matches_stdout(instance, capsys, tmp_path):
    d, _, _ = instance
    code, out = run(capsys, "verify", d / "m.json", d / "x.json", "--eps", "1", "--deterministic",
                    "--output", tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text() == out


def test_gen_model_byte_identical(tmp_path, capsys):
    argv = ["gen-model", "--dims", "6,5,4,3", "--density", "0.4", "--seed", "13", "--q", "4"]
    hashes = {hashlib.sha256(run(capsys, *argv)[1].encode()).hexdigest() for _ in range(3)}
    assert len(hashes) == 1
    assert main(argv + ["--output", str(tmp_path / "g.json")]) == 0
    assert hashlib.sha256((tmp_path / "g.json").read_bytes()).hexdigest() in hashes


def test_oracle_command(instance, capsys):
    d, model, spec = instance
    code, out = run(capsys, "oracle", d / "m.json", d / "x.json", "--eps", "1")
    doc = json.loads(out)
    z, y, t = exact_zstar(model, load_input(d / "x.json", model, 1, "l1"))
    assert code == 0 and Fraction(doc["zstar"]) == z and doc["witness_q"] == list(y)


def test_oracle_cap(instance):
    d, _, _ = instance
    assert main(["oracle", str(d / "m.json"), str(d / "x.json"), "--eps", "100", "--cap", "1"]) == 64


def test_max_eps_command(instance, capsys):
    d, _, spec = instance
    code, out = run(capsys, "max-eps", d / "m.json", d / "x.json", "--eps-init", "1", "--max-iter", "3",
                    "--method", "1-ip")
    doc = json.loads(out)
    assert code == 0 and len(doc["trace"]) == 3 and doc["eps_init"] == "1"


def test_bench_command(instance, tmp_path, capsys):
    d, _, _ = instance
    camp = {"instances": [{"id": "f", "model": "m.json", "input": "x.json", "eps": 1}, {"id": "s", "seed": 2}],
            "methods": ["1-ip"], "time_limit_ms": 20000}
    (d / "camp.json").write_text(json.dumps(camp))
    code, out = run(capsys, "bench", d / "camp.json", "--out-dir", tmp_path / "out", "--deterministic")
    assert code == 0 and json.loads(out)["1-ip"]["runs"] == 2
    assert (tmp_path / "out" / "records.csv").read_text().count("\n") == 3


def test_module_entry_point(instance):
    d, _, _ = instance
    proc = subprocess.run([sys.executable, "-m", "bnnverify", "verify", str(d / "m.json"), str(d / "x.json"),
                           "--eps", "0"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["answer"] == "VERIFIED"
