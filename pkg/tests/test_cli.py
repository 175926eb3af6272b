"""Command-line interface behavior: modes, formats, exit codes."""

import pytest

from hdgoc.cli import main
from hdgoc.problem import (EXAMPLES, ProblemSpec, constant_vector_field,
                           register_example, zero_scalar_field)


def test_study_csv_roundtrip(tmp_path, capsys):
    out = tmp_path / "study.csv"
    code = main(["study", "--example", "1", "--k", "0", "--n", "4,8",
                 "--output", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,h_over_sqrt2,err_q,ord_q")
    assert len(lines) == 3
    assert lines[1].split(",")[0] == "4"


def test_study_markdown_to_stdout(capsys):
    code = main(["study", "--example", "1", "--k", "0", "--n", "4,8",
                 "--format", "markdown"])
    assert code == 0
    text = capsys.readouterr().out
    assert "| h/sqrt(2) | 1/4 | 1/8 |" in text
    assert "| order |" in text


def test_solve_prints_errors_and_residual(capsys):
    code = main(["solve", "--example", "3", "--k", "0", "--n", "2"])
    assert code == 0
    text = capsys.readouterr().out
    for name in ("err_q", "err_p", "err_y", "err_z", "err_u", "residual"):
        assert name in text


def test_solve_matches_study_row(tmp_path):
    out1 = tmp_path / "solve.txt"
    out2 = tmp_path / "study.csv"
    assert main(["solve", "--example", "1", "--k", "0", "--n", "4",
                 "--output", str(out1)]) == 0
    assert main(["study", "--example", "1", "--k", "0", "--n", "4",
                 "--output", str(out2)]) == 0
    solved = {line.split()[0]: line.split()[1]
              for line in out1.read_text().splitlines()[1:-1]}
    row = out2.read_text().splitlines()[1].split(",")
    assert float(solved["err_q"]) == pytest.approx(float(row[2]), rel=1e-12)
    assert float(solved["err_u"]) == pytest.approx(float(row[10]), rel=1e-12)


def test_verify_passes_on_small_mesh(capsys):
    code = main(["verify", "--n", "2", "--k", "1"])
    assert code == 0
    text = capsys.readouterr().out
    assert "checks passed" in text
    assert "FAIL" not in text


def test_usage_errors_exit_one(capsys):
    assert main(["study", "--example", "1", "--k", "0", "--n", "4,12"]) == 1
    assert main(["study", "--example", "9", "--k", "0", "--n", "4,8"]) == 1
    assert main(["study", "--example", "1", "--k", "-1", "--n", "4,8"]) == 1
    assert main(["study", "--example", "1", "--k", "0"]) == 1
    assert main(["nonsense"]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err


def test_numerical_failure_exits_two(capsys):
    # tau1 too small against beta = [1, 1]: the stabilization positivity
    # fails on the diagonal faces and the driver must say so
    def bad():
        return ProblemSpec(dim=2, beta=constant_vector_field([1.0, 1.0]),
                           gamma=1.0, f=zero_scalar_field,
                           g=zero_scalar_field, y_d=zero_scalar_field,
                           tau1=0.1)

    register_example("badtau", bad)
    try:
        code = main(["solve", "--example", "badtau", "--k", "0", "--n", "2"])
    finally:
        EXAMPLES.pop("badtau", None)
    assert code == 2
    err = capsys.readouterr().err
    assert "numerical failure" in err
    assert "assumption" in err


def test_deterministic_study_is_bit_identical(tmp_path):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    args = ["study", "--example", "2", "--k", "1", "--n", "2,4",
            "--deterministic"]
    assert main(args + ["--output", str(out1)]) == 0
    assert main(args + ["--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("example = 1\nk = 0\nn = 4,8\nformat = markdown\n")
    out = tmp_path / "report.csv"
    # the explicit flag wins over the file entry
    code = main(["study", "--config", str(cfg), "--format", "csv",
                 "--output", str(out)])
    assert code == 0
    assert out.read_text().startswith("n,h_over_sqrt2")

    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    assert main(["study", "--config", str(bad), "--n", "4"]) == 1
