import csv
import io
import json

import numpy as np
import pytest

from nobroadcast import quantum_state as qs
from nobroadcast.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_relent_passes(capsys):
    code, out, _ = run(capsys, "relent", "--samples", "30")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["check"] for r in rows] == [
        "nonnegativity", "unitary-invariance", "tensoring-invariance", "monotonicity", "equality-gap",
        "equality-residual",
    ]
    assert all(r["passed"] == "True" for r in rows)


def test_relent_negative_selftest(capsys):
    code, out, _ = run(capsys, "relent", "--samples", "5", "--selftest-negative", "--format", "json")
    assert code == 1
    doc = json.loads(out)
    assert doc["checks"][0]["error"].startswith("NotPositive")


def test_relent_json_is_deterministic(capsys):
    first = run(capsys, "relent", "--samples", "20", "--seed", "11", "--format", "json")[1]
    second = run(capsys, "relent", "--samples", "20", "--seed", "11", "--format", "json")[1]
    assert first == second
    assert json.loads(first)["passed"] is True


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["dynamics", "--hamiltonian", "nonsense"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    assert run(capsys, "classical-limit", "--n", "1")[0] == 2
    assert run(capsys, "relent", "--tol", "-1")[0] == 2
    assert run(capsys, "relent", "--seed", str(2**64))[0] == 2


def test_broadcast_custom_file_dimension_mismatch(capsys, tmp_path):
    path = tmp_path / "sources.json"
    path.write_text(json.dumps([qs.to_json(qs.basis_state(0, 2)), qs.to_json(qs.maximally_mixed(3))]))
    assert run(capsys, "broadcast", "--sources", str(path))[0] == 2
    assert run(capsys, "broadcast", "--dims", "2,3,4")[0] == 2


def test_broadcast_custom_file_runs(capsys, tmp_path):
    path = tmp_path / "sources.json"
    path.write_text(json.dumps({"sources": [qs.to_json(qs.new_density(np.diag([0.9, 0.1]))),
                                            qs.to_json(qs.new_density(np.diag([0.4, 0.6])))]}))
    code, out, _ = run(capsys, "broadcast", "--sources", str(path), "--dims", "2,2,1", "--restarts", "1",
                       "--max-evals", "3000", "--format", "json")
    assert code == 0
    assert json.loads(out)["preset"] == "custom"


def test_broadcast_zero_plus_small_budget(capsys, tmp_path):
    args = ["broadcast", "--preset", "zero-plus", "--restarts", "2", "--max-evals", "3000", "--seed", "7"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    row = next(csv.DictReader(io.StringIO(a.read_text())))
    assert set(row) == {"probe", "residual", "entropy_in", "entropy_out", "gap", "seed", "restarts"}
    assert float(row["residual"]) > 1e-3


def test_classical_limit_sweep(capsys):
    code, out, _ = run(capsys, "classical-limit", "--grid", "65", "--hbar-schedule", "1,0.5")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "hbar,n,quantum,classical,rel_error"
    assert len(lines) == 3


def test_classical_limit_vmatrix(capsys):
    code, out, _ = run(capsys, "classical-limit", "--vmatrix", "2..8", "--format", "json")
    assert code == 0
    assert [r["n"] for r in json.loads(out)["vmatrix"]] == list(range(2, 9))


def test_dynamics_zero_hamiltonian(capsys):
    code, out, _ = run(capsys, "dynamics", "--hamiltonian", "zero", "--grid", "41", "--extent", "4",
                       "--center", "1,0", "--samples", "500", "--format", "json")
    assert code == 0
    for row in json.loads(out)["correspondence"]:
        assert max(row["dx_mean"], row["dp_mean"], row["dx2"], row["dp2"]) < 1e-6


def test_dynamics_csv_layout(capsys, tmp_path):
    out = tmp_path / "dyn.csv"
    assert main(["dynamics", "--hamiltonian", "zero", "--grid", "33", "--extent", "4", "--center", "1,0",
                 "--samples", "100", "--hbar-schedule", "0.2", "--out", str(out)]) == 0
    blocks = out.read_text().split("\n\n")
    assert blocks[0].splitlines()[0] == "hbar,t_final,dx_mean,dp_mean,dx2,dp2"
    assert blocks[1].splitlines()[0] == "hbar,kernel_deviation,ratio"
