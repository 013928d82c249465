import json

import numpy as np
import pytest

from polytest import sample_mvn, setup_covariance
from polytest.cli import main


@pytest.fixture
def quartet_file(tmp_path):
    path = tmp_path / "quartet.txt"
    path.write_text("1 a\n2 a\na b\n3 b\n4 b\n")
    return str(path)


@pytest.fixture
def star_data(tmp_path):
    _, sigma = setup_covariance("a", 4, np.random.default_rng(0))
    data = sample_mvn(sigma, 60, np.random.default_rng(1))
    path = tmp_path / "data.csv"
    np.savetxt(path, data, delimiter=",")
    return str(path)


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_cmd_test_runs_and_is_deterministic(capsys, tmp_path, star_data):
    cons = tmp_path / "cons.txt"
    # one tetrad over vech coordinates of 4 variables
    cons.write_text("tet eq : 1*t2*t7 - 1*t3*t5\n")
    argv = ["test", "--data", star_data, "--constraints", str(cons),
            "--boot-A", "100", "--seed", "9"]
    code1, out1, err1 = run_cli(capsys, argv)
    assert code1 == 0
    report = json.loads(out1)
    assert report["N"] == 120  # default budget 2n
    assert report["n"] == 60
    assert report["A"] == 100
    assert report["per_constraint"][0]["label"] == "tet"
    assert "T=" in err1
    code2, out2, _ = run_cli(capsys, argv + ["--threads", "3"])
    assert code2 == 0
    assert out2 == out1  # byte-identical across thread counts


def test_cmd_test_empty_constraints(capsys, tmp_path, star_data):
    cons = tmp_path / "empty.txt"
    cons.write_text("# nothing here\n")
    code, out, err = run_cli(capsys, ["test", "--data", star_data,
                                      "--constraints", str(cons)])
    assert code == 2
    assert "empty constraint set" in err


def test_cmd_test_degenerate_exit_code(capsys, tmp_path):
    data = tmp_path / "flat.csv"
    rows = np.column_stack([np.zeros(30), np.random.default_rng(0).normal(size=30)])
    np.savetxt(data, rows, delimiter=",")
    cons = tmp_path / "cons.txt"
    cons.write_text("flat le : 1*t0*t0\n")  # column 0 is identically zero
    code, out, err = run_cli(capsys, ["test", "--data", str(data),
                                      "--constraints", str(cons),
                                      "--boot-A", "50"])
    assert code == 3
    assert "flat" in err


def test_cmd_test_missing_file(capsys, tmp_path):
    code, _, err = run_cli(capsys, ["test", "--data", str(tmp_path / "no.csv"),
                                    "--constraints", str(tmp_path / "no.txt")])
    assert code == 2


def test_cmd_tree_test_quartet(capsys, tmp_path, quartet_file, star_data):
    argv = ["tree-test", "--data", star_data, "--tree", quartet_file,
            "--mode", "all", "--boot-A", "80", "--seed", "3"]
    code, out, err = run_cli(capsys, argv)
    assert code == 0
    report = json.loads(out)
    assert len(report["per_constraint"]) == 18
    assert report["N"] == 120


def test_cmd_tree_test_leaf_mismatch(capsys, tmp_path, quartet_file):
    data = tmp_path / "wide.csv"
    np.savetxt(data, np.random.default_rng(0).normal(size=(20, 6)), delimiter=",")
    code, _, err = run_cli(capsys, ["tree-test", "--data", str(data),
                                    "--tree", quartet_file])
    assert code == 2
    assert "4" in err and "6" in err


def test_cmd_tree_test_malformed_tree(capsys, tmp_path, star_data):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 mid\nmid 2\n")
    code, _, err = run_cli(capsys, ["tree-test", "--data", star_data,
                                    "--tree", str(bad)])
    assert code == 2
    assert "mid" in err


def test_cmd_constraints_star15(capsys, tmp_path):
    tree = tmp_path / "star15.txt"
    tree.write_text("".join(f"hub {i}\n" for i in range(1, 16)))
    code, out, err = run_cli(capsys, ["constraints", "--tree", str(tree)])
    assert code == 0
    lines = out.strip().split("\n")
    assert len(lines) == 4551
    assert lines[-1].startswith("# total 4550")
    assert "ineq_c=0" in lines[-1]
    assert "tetrad_notQ=2730" in lines[-1]


def test_cmd_constraints_quartet_counts(capsys, quartet_file):
    code, out, _ = run_cli(capsys, ["constraints", "--tree", quartet_file,
                                    "--mode", "all"])
    assert code == 0
    footer = out.strip().split("\n")[-1]
    assert "total 18" in footer
    assert "tetrad_Q=1" in footer
    assert "ineq_c=1" in footer
    assert "tetrad_notQ=0" in footer


def test_cmd_constraints_eq_mode(capsys, quartet_file):
    code, out, _ = run_cli(capsys, ["constraints", "--tree", quartet_file,
                                    "--mode", "eq"])
    lines = out.strip().split("\n")
    assert len(lines) == 2
    assert lines[0].startswith("tetrad_Q")
    assert "= 0" in lines[0]


def test_skip_header_flag(capsys, tmp_path, quartet_file):
    _, sigma = setup_covariance("a", 4, np.random.default_rng(0))
    data = sample_mvn(sigma, 30, np.random.default_rng(1))
    path = tmp_path / "h.csv"
    with open(path, "w") as fh:
        fh.write("c1,c2,c3,c4\n")
        np.savetxt(fh, data, delimiter=",")
    argv = ["tree-test", "--data", str(path), "--tree", quartet_file,
            "--boot-A", "50", "--skip-header"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    code2, _, _ = run_cli(capsys, argv[:-1])  # without --skip-header
    assert code2 == 2


def test_simulate_size_cli(capsys, tmp_path):
    argv = ["simulate-size", "--setup", "a", "--l", "4", "--n", "40",
            "--reps", "6", "--boot-A", "40", "--alpha", "0.1",
            "--budget-N", "80", "--seed", "2"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "setup,N,alpha,rejection_rate,mc_se,reps,wall_time_s"
    assert len(lines) == 2
    # deterministic statistical columns across thread counts
    code, out2, _ = run_cli(capsys, argv + ["--threads", "2"])
    strip = lambda s: [",".join(r.split(",")[:-1]) for r in s.strip().split("\n")]
    assert strip(out) == strip(out2)


def test_simulate_pvalues_cli(capsys, tmp_path):
    out_path = tmp_path / "p.csv"
    argv = ["simulate-pvalues", "--setup", "a", "--l", "4", "--n", "40",
            "--reps", "5", "--boot-A", "40", "--seed", "2",
            "--out", str(out_path)]
    code, _, err = run_cli(capsys, argv)
    assert code == 0
    lines = out_path.read_text().strip().split("\n")
    assert lines[0] == "p_value"
    assert len(lines) == 6
    assert all(0 < float(x) <= 1 for x in lines[1:])


def test_simulate_power_cli_requires_grid(capsys):
    code, _, err = run_cli(capsys, ["simulate-power", "--l", "4", "--n", "40",
                                    "--reps", "2", "--boot-A", "30"])
    assert code == 2
    assert "shift-grid" in err


def test_simulate_power_cli(capsys):
    argv = ["simulate-power", "--setup", "a", "--l", "4", "--n", "40",
            "--reps", "4", "--boot-A", "40", "--seed", "3",
            "--shift-grid", "0,8"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    lines = out.strip().split("\n")
    assert lines[0] == "setup,N,shift_h,rejection_rate,mc_se,reps,wall_time_s"
    assert len(lines) == 3


def test_threads_env_fallback(capsys, tmp_path, quartet_file, star_data, monkeypatch):
    monkeypatch.setenv("POLYTEST_THREADS", "2")
    argv = ["tree-test", "--data", star_data, "--tree", quartet_file,
            "--boot-A", "40", "--seed", "5"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    monkeypatch.setenv("POLYTEST_THREADS", "1")
    code, out1, _ = run_cli(capsys, argv)
    assert out1 == out
