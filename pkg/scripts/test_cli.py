"""Tests for the command-line entry point and its exit codes."""

import csv

from src.cli import main


def _write_config(path, body):
    path.write_text('name = "cli"\np = 10\nmu = "ones:sqrt2"\nreplications = 1\n' + body)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_run_success(tmp_path):
    config = _write_config(
        tmp_path / "small.toml",
        'losses = ["square"]\nlambdas = [1.0]\nn_values = [30]\nbase_seed = 3\n'
    )
    out = tmp_path / "out.csv"
    assert main(["run", str(config), "--serial", "--csv", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1
    assert rows[0]['status'] == "ok"


def test_configuration_errors_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2
    assert main(["figure", "fig9", "--out", str(tmp_path)]) == 2


def test_all_rows_failed_exits_3(tmp_path):
    config = _write_config(
        tmp_path / "underdetermined.toml",
        'losses = ["logistic"]\nlambdas = [0.0]\nn_values = [5]\n'
    )
    assert main(["run", str(config), "--serial", "--csv", str(tmp_path / "out.csv")]) == 3


def test_any_failed_row_exits_3_after_writing_csv(tmp_path):
    config = _write_config(
        tmp_path / "mixed.toml",
        'losses = ["logistic"]\nlambdas = [1.0, 0.0]\nn_values = [5]\n'
    )
    out = tmp_path / "out.csv"
    assert main(["run", str(config), "--serial", "--csv", str(out)]) == 3

    status = {float(row['lambda']): row['status'] for row in _rows(out)}
    assert status == {1.0: "ok", 0.0: "ill_posed"}
