import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from filterergodic.cli import UsageError, main, parse_args

MODELS = Path(__file__).resolve().parents[1] / "models"
PARITY = str(MODELS / "parity.json")
FULLY = str(MODELS / "fully_observed.json")
SILENT = str(MODELS / "silent.json")


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_args_filter():
    inv = parse_args(["filter", "--model", PARITY, "--prior", "0.3,0.7", "--word", "0"])
    assert inv.command == "filter" and inv.format == "json"
    np.testing.assert_allclose(inv.flags["prior"], [0.3, 0.7])
    assert inv.flags["word"] == "0"


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate", "--model", PARITY],
        ["verdict", "--model", PARITY, "--format", "csv"],
        ["filter", "--model", "/nonexistent.json"],
        ["filter", "--model", PARITY, "--prior", "0.3,0.6"],
        ["filter", "--model", PARITY, "--prior", "a,b"],
        ["simulate", "--model", PARITY, "--n", "-1"],
        ["conditions", "--model", PARITY, "--tol", "0"],
        ["verdict", "--model", PARITY, "--threads", "0"],
        [],
    ],
)
def test_usage_errors(argv):
    with pytest.raises(UsageError):
        parse_args(argv)
    assert main(argv) == 2


def test_filter_command(capsys):
    code, out, _ = _run(capsys, "filter", "--model", PARITY, "--prior", "0.3,0.7", "--word", "0")
    assert code == 0
    doc = json.loads(out)
    assert doc["command"] == "filter" and doc["seed"] == 0
    np.testing.assert_allclose(doc["result"]["posterior"], [0.7, 0.3])


def test_filter_unknown_symbol(capsys):
    code, _, err = _run(capsys, "filter", "--model", PARITY, "--word", "7")
    assert code == 2 and err


def test_filter_zero_likelihood_exit_code(capsys, tmp_path):
    doc = {"states": ["a", "b"], "observations": ["0", "1"],
           "M": {"0": [[0.5, 0.5], [0.0, 0.5]], "1": [[0.0, 0.0], [0.5, 0.0]]}}
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    code, out, err = _run(capsys, "filter", "--model", str(path), "--prior", "1,0",
                          "--word", "0,1,1")
    assert code == 1 and out == ""
    assert json.loads(err)["step"] == 3


def test_invalid_model_exit_code(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"states": ["a"], "observations": ["0"], "M": {"0": [[0.5]]}}')
    code, _, err = _run(capsys, "validate", "--model", str(path))
    assert code == 1 and "row-stochastic" in err


def test_conditions_K_parity(capsys):
    code, out, _ = _run(capsys, "conditions", "--model", PARITY, "--check", "K")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["status"] == "FailsCertified" and "elapsed_ms" not in res


def test_timing_flag(capsys):
    _, out, _ = _run(capsys, "conditions", "--model", PARITY, "--check", "N", "--timing")
    assert "elapsed_ms" in json.loads(out)["result"]


def test_verdict_output_is_byte_identical(capsys):
    a = _run(capsys, "verdict", "--model", PARITY, "--seed", "4")
    b = _run(capsys, "verdict", "--model", PARITY, "--seed", "4")
    assert a[0] == 0 and a[1] == b[1]
    res = json.loads(a[1])["result"]
    assert res["status"] == "NotUniquelyErgodic"


def test_csv_outputs(capsys):
    code, out, _ = _run(capsys, "simulate", "--model", FULLY, "--n", "3", "--format", "csv")
    assert code == 0 and out.splitlines()[0] == "step,x,y" and len(out.splitlines()) == 5
    _, out, _ = _run(capsys, "stability", "--model", PARITY, "--minmax", "--window", "4",
                     "--horizon", "10", "--format", "csv")
    assert out.splitlines()[:2] == ["k,gap", "4,1.0"]
    _, out, _ = _run(capsys, "entropy", "--model", PARITY, "--horizon", "10", "--format", "csv")
    assert out.splitlines()[0] == "n,running_entropy"


def test_stability_support_violation(capsys):
    code, _, err = _run(capsys, "stability", "--model", PARITY, "--mu", "1,0", "--nu", "0,1")
    assert code == 1 and json.loads(err)["error"] == "support-violation"


def test_invariant_and_witness(capsys, tmp_path):
    code, out, _ = _run(capsys, "invariant", "--model", PARITY, "--start", "spread")
    assert code == 0 and json.loads(out)["result"]["status"] == "converged"
    code, out, _ = _run(capsys, "witness", "--model", FULLY, "--epsilon", "0.1")
    assert code == 0
    assert json.loads(out)["result"]["condition_c"]["verified_bound"] == 0.0
    target = tmp_path / "w.json"
    code, _, _ = _run(capsys, "witness", "--model", SILENT, "--word",
                      ",".join(["y0"] * 12), "-o", str(target))
    assert code == 0 and json.loads(target.read_text())["result"]["condition_c"]["N"] == 12


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "filterergodic", "validate", "--model", PARITY],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["result"]["ok"] is True
