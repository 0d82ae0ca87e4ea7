from __future__ import annotations

import collections
import json
import math
import subprocess
import sys
from fractions import Fraction

import pytest

from gibbspart import __version__
from gibbspart.cli import main

FOREST = {"kind": "compose", "outer": {"kind": "set"}, "inner": {"kind": "named", "id": "tree"}}


def write(tmp_path, obj, name="spec.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def csv_rows(text):
    return [ln.split(",") for ln in text.splitlines() if ln and not ln.startswith("#")][1:]


def test_coeffs_forest(tmp_path, capsys):
    assert main(["coeffs", "--spec", write(tmp_path, FOREST), "--trunc", "6"]) == 0
    out = capsys.readouterr().out
    rows = csv_rows(out)
    assert rows[-1][0] == "6" and Fraction(rows[-1][1]) == Fraction(2932, 720)
    assert f"# tool_version: {__version__}" in out
    assert "# truncation: 6" in out and "# seed: 0" in out


def test_coeffs_set_json(tmp_path):
    out = tmp_path / "o"
    assert main(["coeffs", "--spec", write(tmp_path, {"kind": "set"}), "--trunc", "8",
                 "--format", "json", "--out", str(out)]) == 0
    body = json.loads((out / "coeffs.json").read_text())
    assert body["meta"]["truncation"] == 8
    assert body["float"] == [1 / math.factorial(n) for n in range(9)]


def test_coeffs_class_spec(tmp_path, capsys):
    assert main(["coeffs", "--spec", write(tmp_path, {"blocks": "triangle", "series": "C"}),
                 "--trunc", "7"]) == 0
    rows = csv_rows(capsys.readouterr().out)
    assert [Fraction(r[1]) * math.factorial(int(r[0])) for r in rows] == [0, 1, 0, 1, 0, 15, 0, 735]


def test_malformed_json(tmp_path, capsys):
    rc = main(["coeffs", "--spec", write(tmp_path, '{"kind": "set",\n  oops}')])
    assert rc == 2
    assert ":2:" in capsys.readouterr().err


def test_process_exit_code(tmp_path):
    r = subprocess.run([sys.executable, "-m", "gibbspart", "coeffs", "--spec",
                        write(tmp_path, "[1, 2")], capture_output=True, text=True)
    assert r.returncode == 2 and "malformed JSON" in r.stderr


def test_n_zero_is_a_precondition_error(tmp_path):
    assert main(["sample", "--spec", write(tmp_path, FOREST), "--mode", "exact", "--n", "0"]) == 3


def test_exhaustion_reports_attempts(tmp_path, capsys):
    rc = main(["sample", "--spec", write(tmp_path, FOREST), "--mode", "conditioned", "--n", "40",
               "--max-attempts", "5", "--no-render"])
    assert rc == 4
    err = capsys.readouterr().err
    assert "attempts" in err and "acceptance" in err


def test_conditioned_forest_type_frequencies(tmp_path):
    m = 5000
    out = tmp_path / "o"
    assert main(["sample", "--spec", write(tmp_path, FOREST), "--mode", "conditioned", "--n", "3",
                 "--samples", str(m), "--seed", "42", "--no-render", "--out", str(out)]) == 0
    lines = (out / "samples.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["meta"]["seed"] == 42
    cnt = collections.Counter(tuple(json.loads(ln)["component_sizes"]) for ln in lines[1:])
    law = {(3,): 3 / 7, (2, 1): 3 / 7, (1, 1, 1): 1 / 7}
    assert set(cnt) <= set(law)
    for key, p in law.items():
        assert abs(cnt[key] / m - p) < 3 * math.sqrt(p * (1 - p) / m)


def test_limit_empty_fragment_frequency(tmp_path):
    m = 4000
    out = tmp_path / "o"
    assert main(["sample", "--spec", write(tmp_path, FOREST), "--mode", "limit", "--samples", str(m),
                 "--seed", "3", "--no-render", "--out", str(out)]) == 0
    lines = (out / "samples.jsonl").read_text().splitlines()[1:]
    empty = sum(json.loads(ln)["size"] == 0 for ln in lines) / m
    p = math.exp(-0.5)
    assert abs(empty - p) < 3 * math.sqrt(p * (1 - p) / m)


def diagnose(tmp_path, spec, *extra):
    out = tmp_path / "d"
    assert main(["diagnose", "--spec", write(tmp_path, spec), "--out", str(out), *extra]) == 0
    return json.loads((out / "report.json").read_text()), out


def test_diagnose_forest_all_pass(tmp_path):
    rep, out = diagnose(tmp_path, {"blocks": "edge"})
    assert rep["verdicts"] and all(v == "pass" for v in rep["verdicts"].values())
    assert rep["meta"]["tool_version"] == __version__ and rep["meta"]["seed"] == 0
    assert any(p.name.endswith(".csv") for p in out.iterdir())


def test_diagnose_cacti_not_smooth(tmp_path):
    rep, _ = diagnose(tmp_path, {"blocks": "triangle"}, "--suite", "smoothness", "--trunc", "120")
    assert rep["verdicts"]["smoothness.smooth"] == "fail"
    assert rep["reports"]["smoothness"]["scalars"]["span"]["value"] == 2


def test_diagnose_geometric_not_subexponential(tmp_path):
    spec = {"series": {"coeffs": [0] + ["1"] * 80}, "rho": "1/2"}
    rep, _ = diagnose(tmp_path, spec)
    assert "fail" in rep["verdicts"].values()


def test_unknown_suite(tmp_path):
    assert main(["diagnose", "--spec", write(tmp_path, {"blocks": "edge"}), "--suite", "nope"]) == 2


@pytest.mark.parametrize("argv", [
    ["coeffs", "--trunc", "30"],
    ["sample", "--mode", "boltzmann", "--samples", "50", "--y", "1/4", "--streams", "4"],
])
def test_determinism(tmp_path, capsys, argv):
    spec = write(tmp_path, FOREST)
    outs = []
    for threads in ("1", "4"):
        assert main([*argv, "--spec", spec, "--threads", threads, "--seed", "9"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1] and outs[0]
