from __future__ import annotations

import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from stabcon.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_sync(capsys):
    code, out, _ = run(capsys, "run", "--pattern", ":<", "--inputs", "0,1")
    doc = json.loads(out)
    assert code == 0
    assert doc["verdict_text"] == "stabilized(1, 1)" and doc["verdict"]["certified"]
    assert doc["broadcasters"] == [1] and doc["broadcasters_certified"]
    assert doc["rounds"][0]["outputs"] == [0, 1]


def test_run_async(capsys):
    code, out, _ = run(capsys, "run", "--async", "--alg", "min-flood", "--inputs", "3,1,2", "--seed", "5")
    doc = json.loads(out)
    assert code == 0 and doc["spec"]["model"] == "async"
    assert doc["verdict"]["certified"]


def test_run_writes_file(tmp_path, capsys):
    target = tmp_path / "trace.json"
    code, out, _ = run(capsys, "run", "--pattern", "<>:=", "--inputs", "0,1", "--rounds", "6", "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text()) == json.loads((GOLDEN / "trace_minmax.json").read_text())


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--pattern", "x:y", "--inputs", "0,1"],
        ["run", "--pattern", ":<"],
        ["run", "--pattern", ":<", "--inputs", "0,a"],
        ["run", "--pattern", ":<", "--inputs", "0,1,1"],
        ["run", "--pattern", ":<", "--inputs", "0,1", "--alg", "nope"],
        ["run", "--async", "--inputs", "0,1", "--n", "3"],
        ["prefix-order", "--k", "0"],
        ["distances"],
        ["universal", "--family", "one-message", "--member", "zeta"],
        ["verify-witness", "/nonexistent.json"],
        ["kernel", "--pattern", ":=", "--demo", "--inputs", "0,1"],
    ],
)
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("stabcon:")


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_distances_csv(capsys):
    code, out, _ = run(capsys, "distances", "--pattern=->:-", "--pattern", ":-", "--metric", "p:1")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows == [["id", "->:-|0,1", ":-|0,1"], ["->:-|0,1", "0", "2^-2"], [":-|0,1", "2^-2", "0"]]
    code, out, _ = run(capsys, "distances", "--family", "one-message", "--i-max", "2")
    rows = out.splitlines()
    assert code == 0 and len(rows) == 6
    assert rows[0] == "id,alpha1,beta1,alpha2,beta2,eta"


def test_prefix_order(capsys):
    code, out, _ = run(capsys, "prefix-order", "--k", "2")
    assert code == 0 and out.split() == (GOLDEN / "prefix_order_k2.txt").read_text().split()
    code, out, _ = run(capsys, "prefix-order", "--k", "1", "--cycle")
    doc = json.loads(out)
    assert code == 0 and len(doc["cycle"]) == 12


def test_label_check_and_universal(tmp_path, capsys):
    code, out, _ = run(capsys, "label-check", "--family", "one-message", "--emit")
    assert code == 0
    path = tmp_path / "lab.json"
    path.write_text(out)
    code, out, _ = run(capsys, "label-check", str(path))
    assert code == 0 and json.loads(out)["valid"]
    code, out, _ = run(capsys, "universal", str(path))
    assert code == 0 and json.loads(out)["passed"]
    code, out, _ = run(capsys, "universal", "--family", "three-label", "--member", "f3", "--p", "1", "--t", "0")
    assert json.loads(out)["case"] == "c"
    doc = json.loads(path.read_text())
    doc["members"][0]["label"] = 1
    path.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "label-check", str(path))
    assert code == 1 and not json.loads(out)["valid"]


def test_attack_and_verify(tmp_path, capsys):
    target = tmp_path / "w.json"
    code, _, _ = run(capsys, "attack", "--k", "1", "--out", str(target))
    assert code == 0
    assert json.loads(target.read_text()) == json.loads((GOLDEN / "witness_minmax_k1.json").read_text())
    code, out, _ = run(capsys, "verify-witness", str(target))
    assert code == 0 and json.loads(out)["passed"]
    doc = json.loads(target.read_text())
    doc["m"] = 2
    target.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "verify-witness", str(target))
    assert code == 1 and "views differ" in json.loads(out)["failure"]


def test_attack_outcomes(capsys):
    code, out, _ = run(capsys, "attack", "--chain", "1,2,3", "--flips", "3")
    assert code == 0 and max(json.loads(out)["flips"]) >= 3
    code, out, _ = run(capsys, "attack", "--alg", "constant(v=0)", "--k", "1")
    assert code == 1 and json.loads(out)["witness"] is None
    code, _, err = run(capsys, "attack", "--alg", "one-message-keeper")
    assert code == 2 and "domain mismatch" in err


def test_kernel_command(capsys):
    code, out, _ = run(capsys, "kernel", "--pattern", ":>")
    assert code == 0 and json.loads(out)["kernel"] == [0]
    code, out, _ = run(capsys, "kernel", "--pattern", ":-", "--demo", "--inputs", "0,1")
    demo = json.loads(out)["demo"]
    assert demo["persistent_from"] == 0 and demo["broadcasters"] == []


def test_console_script():
    res = subprocess.run(
        [sys.executable, "-m", "stabcon.cli", "kernel", "--pattern", ":="], capture_output=True, text=True, check=False
    )
    assert res.returncode == 0 and json.loads(res.stdout)["kernel"] == [0, 1]
