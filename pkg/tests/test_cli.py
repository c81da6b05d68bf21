"""End-to-end checks of the command-line interface.

Everything runs in-process through ``cli.main`` so coverage and the numba
warm-up carry over; a small synthetic bundle is generated once per session.
"""

from __future__ import annotations

import pytest

from nowcastkit import dataio
from nowcastkit.cli import main


@pytest.fixture(scope="session")
def bundle_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "bundle"
    rc = main(
        [
            "synth",
            "--output-dir",
            str(out),
            "--years",
            "7",
            "--seed",
            "3",
            "--transactions",
        ]
    )
    assert rc == 0
    return out


@pytest.fixture()
def eval_ini(bundle_dir, tmp_path):
    path = tmp_path / "exercise.ini"
    path.write_text(
        "[data]\n"
        f"dir = {bundle_dir}\n"
        "[exercise]\n"
        "models = ar,lm\n"
        "start = 2016Q1\n"
        "end = 2016Q2\n"
        "[options.balance]\n"
        "n_trees = 20\n"
    )
    return path


def _read_bytes(path):
    return path.read_bytes()


def test_synth_bundle_roundtrips(bundle_dir):
    series, meta = dataio.load_bundle(bundle_dir)
    assert "gdp" in series and "ip" in series
    assert meta["gdp"].target
    assert (bundle_dir / "transactions_consumption.csv").is_file()
    assert (bundle_dir / "transactions_investment.csv").is_file()


def test_synth_no_bigdata_drops_daily_series(tmp_path):
    out = tmp_path / "nobig"
    assert main(["synth", "--output-dir", str(out), "--years", "5", "--no-bigdata"]) == 0
    _, meta = dataio.load_bundle(out)
    assert all(m.kind != "bigdata" for m in meta.values())


def test_index_outputs_and_determinism(bundle_dir, tmp_path):
    argv = [
        "index",
        "--transactions",
        str(bundle_dir / "transactions_consumption.csv"),
        "--purpose",
        "consumption",
        "--deflator",
        "8.0",
    ]
    out1, out2 = tmp_path / "i1", tmp_path / "i2"
    assert main(argv + ["--output-dir", str(out1)]) == 0
    assert main(argv + ["--output-dir", str(out2)]) == 0
    combined = out1 / "index_consumption.csv"
    assert combined.is_file()
    assert (out1 / "index_consumption_goods.csv").is_file()
    assert _read_bytes(combined) == _read_bytes(out2 / "index_consumption.csv")


def test_index_bad_weights_is_config_error(bundle_dir, tmp_path, capsys):
    rc = main(
        [
            "index",
            "--transactions",
            str(bundle_dir / "transactions_consumption.csv"),
            "--weights",
            "goods-0.5",
            "--output-dir",
            str(tmp_path / "w"),
        ]
    )
    assert rc == 2
    assert "error: config:" in capsys.readouterr().err


def test_nowcast_writes_one_row_per_model(bundle_dir, tmp_path, capsys):
    out = tmp_path / "nc"
    rc = main(
        [
            "nowcast",
            "--data-dir",
            str(bundle_dir),
            "--as-of",
            "2016-05-31",
            "--models",
            "ar,lm",
            "--output-dir",
            str(out),
        ]
    )
    assert rc == 0
    text = (out / "nowcasts.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == "ref_quarter,horizon,model,value,vintage_date" or lines[0].startswith(
        "ref_quarter"
    )
    body = lines[1:]
    assert len(body) == 2
    assert all("2016Q2" in row for row in body)
    assert "2016Q2" in capsys.readouterr().out


def test_nowcast_bad_date_is_config_error(bundle_dir, tmp_path, capsys):
    rc = main(
        [
            "nowcast",
            "--data-dir",
            str(bundle_dir),
            "--as-of",
            "2016/05/31",
            "--output-dir",
            str(tmp_path / "nc"),
        ]
    )
    assert rc == 2
    assert "error: config:" in capsys.readouterr().err


def test_missing_data_dir_is_config_error(tmp_path, capsys):
    rc = main(["evaluate", "--start", "2016Q1", "--end", "2016Q1", "--output-dir", str(tmp_path)])
    assert rc == 2
    assert "error: config:" in capsys.readouterr().err


def test_nonexistent_data_dir_is_data_error(tmp_path, capsys):
    rc = main(
        [
            "evaluate",
            "--data-dir",
            str(tmp_path / "nope"),
            "--start",
            "2016Q1",
            "--end",
            "2016Q1",
            "--output-dir",
            str(tmp_path / "o"),
        ]
    )
    assert rc == 3
    assert "error: data:" in capsys.readouterr().err


def test_evaluate_with_config_and_determinism(eval_ini, tmp_path):
    out1, out2 = tmp_path / "e1", tmp_path / "e2"
    argv = ["evaluate", "--config", str(eval_ini)]
    assert main(argv + ["--output-dir", str(out1)]) == 0
    assert main(argv + ["--output-dir", str(out2)]) == 0
    for name in ("nowcasts.csv", "scores.csv"):
        assert _read_bytes(out1 / name) == _read_bytes(out2 / name)
    header = (out1 / "scores.csv").read_text().splitlines()[0]
    assert header == "model,horizon,mae"
    rows = (out1 / "nowcasts.csv").read_text().strip().splitlines()[1:]
    # two models x two quarters x five monthly vintages
    assert len(rows) == 2 * 2 * 5


def test_evaluate_jobs_do_not_change_output(eval_ini, tmp_path):
    out1, out4 = tmp_path / "j1", tmp_path / "j4"
    argv = ["evaluate", "--config", str(eval_ini)]
    assert main(argv + ["--output-dir", str(out1), "--jobs", "1"]) == 0
    assert main(argv + ["--output-dir", str(out4), "--jobs", "4"]) == 0
    assert _read_bytes(out1 / "nowcasts.csv") == _read_bytes(out4 / "nowcasts.csv")


def test_evaluate_ablation_adds_maed_column(eval_ini, tmp_path):
    out = tmp_path / "abl"
    rc = main(["evaluate", "--config", str(eval_ini), "--ablate-bigdata", "--output-dir", str(out)])
    assert rc == 0
    header = (out / "scores.csv").read_text().splitlines()[0]
    assert header == "model,horizon,mae,maed"
    assert (out / "nowcasts_reduced.csv").is_file()


def test_evaluate_unknown_model_is_config_error(eval_ini, tmp_path, capsys):
    rc = main(
        [
            "evaluate",
            "--config",
            str(eval_ini),
            "--models",
            "ar,oracle",
            "--output-dir",
            str(tmp_path / "um"),
        ]
    )
    assert rc == 2
    assert "error: config:" in capsys.readouterr().err


def test_evaluate_missing_span_is_config_error(bundle_dir, tmp_path, capsys):
    rc = main(
        [
            "evaluate",
            "--data-dir",
            str(bundle_dir),
            "--start",
            "2016Q1",
            "--output-dir",
            str(tmp_path / "ms"),
        ]
    )
    assert rc == 2
    assert "error: config:" in capsys.readouterr().err


def test_daily_subcommand_writes_curve(bundle_dir, tmp_path):
    ini = tmp_path / "daily.ini"
    ini.write_text(
        "[exercise]\n"
        "models = ar,lm\n"
        "start = 2016Q1\n"
        "end = 2016Q1\n"
        "[options.balance]\n"
        "n_trees = 20\n"
        "[options.daily]\n"
        "max_day = 6\n"
        "step = 2\n"
    )
    out = tmp_path / "d1"
    rc = main(
        [
            "daily",
            "--config",
            str(ini),
            "--data-dir",
            str(bundle_dir),
            "--output-dir",
            str(out),
        ]
    )
    assert rc == 0
    lines = (out / "daily_mae.csv").read_text().strip().splitlines()
    assert lines[0] == "day,mae,ma7"
    days = [int(row.split(",")[0]) for row in lines[1:]]
    assert days == [1, 3, 5]

    out2 = tmp_path / "d2"
    rc = main(
        [
            "daily",
            "--config",
            str(ini),
            "--data-dir",
            str(bundle_dir),
            "--ablate-bigdata",
            "--output-dir",
            str(out2),
        ]
    )
    assert rc == 0
    assert (out2 / "daily_mae_reduced.csv").is_file()


def test_select_subcommand_writes_shares(bundle_dir, tmp_path):
    out = tmp_path / "sel"
    rc = main(
        [
            "select",
            "--data-dir",
            str(bundle_dir),
            "--start",
            "2016Q1",
            "--end",
            "2016Q2",
            "--output-dir",
            str(out),
        ]
    )
    assert rc == 0
    assert (out / "selection.csv").is_file()
    lines = (out / "selection_shares.csv").read_text().strip().splitlines()
    assert lines[0] == "name,share"
    shares = {row.split(",")[0]: float(row.split(",")[1]) for row in lines[1:]}
    assert shares and all(0.0 <= v <= 1.0 for v in shares.values())
    assert "gdp" not in shares
