import json
import subprocess
import sys
from pathlib import Path

import pytest

from gig1.cli import run

KERNELS = Path(__file__).resolve().parents[1] / "kernels"


def report(out):
    return json.loads((out / "report.json").read_text())


def test_validate_broken_exits_one(tmp_path, capsys):
    assert run(["validate", str(KERNELS / "broken.json"), "--out", str(tmp_path)]) == 1
    r = report(tmp_path)
    assert r["schema"] == 1 and not r["valid"]
    assert any("row sum exceeds 1" in v for v in r["violations"])


def test_validate_good(tmp_path, capsys):
    assert run(["validate", str(KERNELS / "scalar.json"), "--out", str(tmp_path)]) == 0
    assert report(tmp_path)["audit"]["regime"] == "StochasticA"


def test_period_two_kernel_file(tmp_path, capsys):
    assert run(["period", str(KERNELS / "period2.json"), "--out", str(tmp_path)]) == 0
    r = report(tmp_path)
    assert r["tau"] == 2
    assert r["spectral_check"] == {"1": True, "2": True, "3": False, "4": False, "5": False, "6": False}


def test_solve_then_oracle(tmp_path, capsys):
    k = str(KERNELS / "scalar.json")
    assert run(["solve", k, "--kmax", "200", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "stationary.csv").read_text().splitlines()[0]
    assert header.startswith("k,")
    assert run(["oracle", k, "--levels", "200", "--out", str(tmp_path)]) == 0
    r = report(tmp_path)
    assert r["max_rel_diff"] < 1e-9
    assert any("previous solve" in n for n in r["notes"])
    assert (tmp_path / "diff.csv").exists() and (tmp_path / "oracle.csv").exists()


def test_solve_is_deterministic(tmp_path, capsys):
    k = str(KERNELS / "period2.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["solve", k, "--kmax", "128", "--out", str(a)]) == 0
    assert run(["solve", k, "--kmax", "128", "--out", str(b)]) == 0
    assert (a / "stationary.csv").read_bytes() == (b / "stationary.csv").read_bytes()


def test_example_disaster(tmp_path, capsys):
    assert run(["example", "disaster", "--kmax", "10000", "--out", str(tmp_path)]) == 0
    r = report(tmp_path)
    assert r["theorem"] == "T5"
    assert r["prefactor"][0] == pytest.approx(4.0, rel=1e-9)
    assert (tmp_path / "ratios.csv").exists()
    assert (tmp_path / "disaster.json").exists()


def test_example_mg1_kernel_file_reusable(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["example", "mg1", "--kmax", "512", "--out", str(a)]) == 0
    assert run(["asymptotics", str(a / "mg1.json"), "--kmax", "512", "--out", str(b)]) == 0
    assert report(a)["prefactor"] == report(b)["prefactor"]
    assert report(b)["theorem"] == "T3"


def test_asymptotics_explicit_theorem(tmp_path, capsys):
    assert run(["example", "mg1", "--kmax", "512", "--theorem", "T1", "--out", str(tmp_path)]) == 0
    assert report(tmp_path)["reference_sequence"] == "xbar(k) / P(Y_e > k)"


def test_diagnose_tail(tmp_path, capsys):
    assert run(["diagnose-tail", "--family", "geometric", "--p", "0.5", "--out", str(tmp_path)]) == 0
    r = report(tmp_path)
    assert r["notes"] and "underflow" in r["notes"][0]
    lines = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert lines[0] == "k,series_name,value,theoretical_limit"


@pytest.mark.parametrize("argv", [
    ["solve"],
    ["solve", "x.json", "--kmax", "ten"],
    ["frobnicate"],
    ["solve", str(KERNELS / "scalar.json"), "--tol", "0.5"],
    ["solve", "/nonexistent/k.json"],
])
def test_bad_input_exits_one(argv, capsys):
    assert run(argv) == 1


def test_transient_chain_exits_two(tmp_path, capsys):
    from gig1.kernel import write_kernel
    from gig1.models import scalar_walk_kernel
    write_kernel(scalar_walk_kernel(0.5, 0.2, 0.3), tmp_path / "t.json")
    assert run(["solve", str(tmp_path / "t.json"), "--kmax", "50"]) == 2


def test_module_entry_point(tmp_path):
    p = subprocess.run([sys.executable, "-m", "gig1", "period", str(KERNELS / "period2.json")],
                       capture_output=True, text=True, env={"GIG1_THREADS": "1", "PATH": ""})
    assert p.returncode == 0
    assert json.loads(p.stdout)["tau"] == 2
