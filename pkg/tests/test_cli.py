import json
import subprocess
import sys

import pytest

from tensorid import jsonio
from tensorid.cli import main
from tensorid.multilinear import Shape3, assemble, derive_rng, random_decomposition


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_secant_dim_prints_103(capsys):
    code, out, _ = run(["secant-dim", "3", "6", "6", "--k", "8"], capsys)
    assert code == 0 and out.splitlines()[0] == "103"


def test_secant_dim_segre_veronese(capsys, tmp_path):
    path = tmp_path / "sv.json"
    code, out, _ = run(["secant-dim", "3", "2", "2", "--degrees", "3", "1", "1", "--k", "8",
                        "--json-out", str(path)], capsys)
    assert code == 0 and out.splitlines()[0] == "39"
    assert json.loads(path.read_text())["affine_dim"] == 40


def test_generic_rank(capsys):
    code, out, _ = run(["generic-rank", "3", "3", "3"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "5" and "k=4" in lines[1] and "defect=1" in lines[1]


def test_balance(capsys):
    code, out, _ = run(["balance", "2", "5", "5"], capsys)
    assert code == 0 and out.strip() == "balanced, bound 10"
    code, out, _ = run(["balance", "2", "5", "20", "--k", "11"], capsys)
    assert code == 0 and out.startswith("unbalanced, bound 10")


def test_balance_unsorted_is_usage_error(capsys):
    code, _, err = run(["balance", "5", "2", "5"], capsys)
    assert code == 2 and "a1 <= a2 <= a3" in err


def test_unknown_flag(capsys):
    code, _, err = run(["secant-dim", "3", "6", "6", "--k", "8", "--bogus"], capsys)
    assert code == 2 and "usage" in err


def test_missing_subcommand(capsys):
    code, _, err = run([], capsys)
    assert code == 2 and "usage" in err


def test_fit_segre(capsys):
    code, out, _ = run(["fit-segre", "--seed", "3"], capsys)
    assert code == 0 and out.startswith("nullity=4")
    code, _, err = run(["fit-segre", "--pairs", "9"], capsys)
    assert code == 1 and "nullspace" in err


def test_build_y(capsys, tmp_path):
    path = tmp_path / "y.json"
    code, out, _ = run(["build-y", "--seed", "2", "--json-out", str(path)], capsys)
    assert code == 0 and "span_dim=40" in out
    assert json.loads(path.read_text())["kind"] == "fourfold"


def test_quiet_suppresses_stdout(capsys):
    code, out, _ = run(["secant-dim", "2", "2", "2", "--k", "1", "--quiet"], capsys)
    assert code == 0 and out == ""


def test_tangential_degree(capsys):
    code, out, _ = run(["tangential-degree", "--starts", "1000", "--seed", "1"], capsys)
    assert code == 0 and out.splitlines()[0] == "6"


def test_decompose_from_file(capsys, tmp_path):
    T = assemble(random_decomposition(Shape3(2, 2, 2), 2, derive_rng(5)))
    src = tmp_path / "t.json"
    jsonio.write_json(jsonio.tensor_to_json(T), src)
    out_path = tmp_path / "m.json"
    code, out, _ = run(["decompose", "--tensor", str(src), "--k", "2", "--starts", "20",
                        "--json-out", str(out_path)], capsys)
    assert code == 0 and out.splitlines()[0] == "1"
    report = json.loads(out_path.read_text())
    assert report["distinct_count"] == 1 and report["config"]["num_starts"] == 20


def test_contact_check(capsys):
    code, out, _ = run(["contact-check", "--points", "10", "--seed", "4"], capsys)
    assert code == 0 and out.splitlines()[0] == "(104, 104)"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "tensorid", "balance", "1", "1", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip() == "balanced, bound 1"


@pytest.mark.slow
def test_verify_theorem_writes_report(tmp_path, capsys):
    path = tmp_path / "r.json"
    code, out, _ = run(["verify-theorem", "--seed", "7", "--json-out", str(path)], capsys)
    assert code == 0 and out.strip().endswith("verdict: pass")
    report = json.loads(path.read_text())
    assert report["kind"] == "theorem" and report["verdict"] == "pass"
    assert report["tangential_degree"]["count"] == 6
    assert report["multistart"]["distinct_count"] >= 6
