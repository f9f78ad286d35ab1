import json
import math
import os

import pandas as pd
import pytest

from pcdf.management.commands import (
    ablate,
    analyze,
    bench,
    evaluate,
    generate_data,
    theory,
    train,
)
from pcdf.service.exceptions import TrainingDivergedException

SENSOR_DRIFT_CSV = os.environ.get("PCDF_SENSOR_DRIFT_CSV")

FAST = ["--lookback", "48", "--horizon", "24", "--tau", "24", "--epochs", "2"]


@pytest.fixture()
def data_file(tmp_path, cli_runner):
    path = str(tmp_path / "seasonal.csv")
    result = cli_runner.invoke(
        generate_data, [path, "--length", "600", "--channels", "4", "--period", "24"]
    )
    assert result.exit_code == 0, result.output
    return path


@pytest.fixture()
def out_dir(tmp_path):
    return str(tmp_path / "out")


def _run(cli_runner, command, args):
    result = cli_runner.invoke(command, args)
    assert result.exit_code == 0, result.output
    return json.loads(result.output)


def test_generate_data_writes_csv(data_file):
    frame = pd.read_csv(data_file)

    assert list(frame.columns) == ["ch0", "ch1", "ch2", "ch3"]
    assert len(frame) == 600


def test_analyze(cli_runner, data_file, out_dir):
    report = _run(cli_runner, analyze, ["--data", data_file, "--output-dir", out_dir])

    assert report["n_channels"] == 4
    assert report["seasonal_profile"]["shared_period"] >= 2
    assert set(report["predictability"]["channels"]) == {"ch0", "ch1", "ch2", "ch3"}
    assert os.path.exists(os.path.join(out_dir, "analysis.json"))


def test_analyze_low_rank_needs_two_components(cli_runner, tmp_path, out_dir):
    path = str(tmp_path / "low_rank.csv")
    cli_runner.invoke(
        generate_data, [path, "--kind", "low-rank", "--rank", "2", "--channels", "12"]
    )

    report = _run(cli_runner, analyze, ["--data", path, "--output-dir", out_dir])

    assert report["redundancy"]["pcs_at_threshold"] == 2
    assert report["redundancy"]["top_k_var"] == pytest.approx(1.0)


@pytest.mark.skipif(SENSOR_DRIFT_CSV is None, reason="PCDF_SENSOR_DRIFT_CSV is not set")
def test_analyze_sensor_drift(cli_runner, out_dir):
    report = _run(
        cli_runner, analyze, ["--data", SENSOR_DRIFT_CSV, "--output-dir", out_dir]
    )

    assert report["redundancy"]["pcs_at_threshold"] == 2
    assert report["redundancy"]["top_k_var"] == pytest.approx(1.0, abs=1e-4)
    assert report["redundancy"]["pc1_var"] == pytest.approx(0.9242, abs=1e-3)


def test_train_then_eval(cli_runner, data_file, out_dir):
    trained = _run(cli_runner, train, ["--data", data_file, "--output-dir", out_dir, *FAST])

    assert trained["epochs"] == 2
    assert trained["tau"] == 24
    for name in ("key.json", "model.json", "history.json"):
        assert os.path.exists(os.path.join(out_dir, name))

    evaluated = _run(cli_runner, evaluate, ["--data", data_file, "--output-dir", out_dir, *FAST])

    assert evaluated["split"] == "test"
    assert evaluated["report"]["single_channel"]
    assert evaluated["report"]["compression_ratio"] == "4:1"
    assert evaluated["report"]["config_fingerprint"] == trained["config_fingerprint"]
    assert len(pd.read_csv(os.path.join(out_dir, "reports.csv"))) == 1


def test_train_is_reproducible(cli_runner, data_file, tmp_path):
    for name in ("a", "b"):
        _run(cli_runner, train, ["--data", data_file, "--output-dir", str(tmp_path / name), *FAST])

    for name in ("key.json", "model.json", "history.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_eval_with_other_config_is_a_usage_error(cli_runner, data_file, out_dir):
    _run(cli_runner, train, ["--data", data_file, "--output-dir", out_dir, *FAST])

    result = cli_runner.invoke(
        evaluate, ["--data", data_file, "--output-dir", out_dir, *FAST, "--seed", "7"]
    )

    assert result.exit_code == 2


def test_eval_without_artifacts_is_a_data_error(cli_runner, data_file, out_dir):
    result = cli_runner.invoke(evaluate, ["--data", data_file, "--output-dir", out_dir, *FAST])

    assert result.exit_code == 3


def test_divergence_exits_with_numeric_error(cli_runner, data_file, out_dir, mocker):
    mocker.patch(
        "pcdf.service.training_service.train",
        side_effect=TrainingDivergedException("Non-finite loss", epoch=1, history=[]),
    )

    result = cli_runner.invoke(train, ["--data", data_file, "--output-dir", out_dir, *FAST])

    assert result.exit_code == 4
    assert os.path.exists(os.path.join(out_dir, "history.json"))


@pytest.mark.parametrize(
    "args, exit_code",
    [
        (["--lookback", "48", "--tau", "24"], 2),
        (["--tau", "weekly"], 2),
        (["--data", "data.csv", "--lookback", "40", "--tau", "24"], 2),
        (["--data", "missing.csv"], 3),
    ],
)
def test_train_exit_codes(args, exit_code, cli_runner, out_dir):
    result = cli_runner.invoke(train, ["--output-dir", out_dir, *args])

    assert result.exit_code == exit_code


def test_train_rejects_non_finite_data(cli_runner, tmp_path, out_dir):
    path = tmp_path / "gaps.csv"
    path.write_text("a,b\n1,2\n3,NaN\n")

    result = cli_runner.invoke(train, ["--data", str(path), "--output-dir", out_dir])

    assert result.exit_code == 3


def test_train_rejects_invalid_utf8(cli_runner, tmp_path, out_dir):
    path = tmp_path / "latin.csv"
    path.write_bytes(b"a,b\n1,2\n3,\xff\xfe\n5,6\n")

    result = cli_runner.invoke(train, ["--data", str(path), "--output-dir", out_dir])

    assert result.exit_code == 3
    assert "row 1" in result.output


def test_config_file_with_unknown_key(cli_runner, data_file, tmp_path, out_dir):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"epochs": 1, "learning_rate": 0.1}))

    result = cli_runner.invoke(
        train, ["--config", str(path), "--data", data_file, "--output-dir", out_dir]
    )

    assert result.exit_code == 2


def test_ablate_selected_variants(cli_runner, data_file, out_dir):
    reports = _run(
        cli_runner,
        ablate,
        [
            "--data",
            data_file,
            "--output-dir",
            out_dir,
            *FAST,
            "--variant",
            "comp-decomp",
            "--variant",
            "comp-decode",
        ],
    )

    assert [r["variant"] for r in reports] == ["comp-decomp", "comp-decode"]
    assert len(pd.read_csv(os.path.join(out_dir, "reports.csv"))) == 2


def test_ablate_runs_all_variants_by_default(cli_runner, data_file, out_dir):
    reports = _run(cli_runner, ablate, ["--data", data_file, "--output-dir", out_dir, *FAST])

    assert [r["variant"] for r in reports] == [
        "comp-decomp",
        "rand-decomp",
        "comp-decode",
        "encode-decomp",
        "encode-decode",
    ]
    assert all(math.isfinite(r["mse"]) for r in reports)
    assert len({r["config_fingerprint"] for r in reports}) == 1


def test_ablate_unknown_variant_is_a_usage_error(cli_runner, data_file, out_dir):
    result = cli_runner.invoke(
        ablate, ["--data", data_file, "--output-dir", out_dir, *FAST, "--variant", "comp-only"]
    )

    assert result.exit_code == 2


def test_theory_superiority(cli_runner):
    result = _run(cli_runner, theory, ["superiority", "2", "10", "24"])

    assert result["threshold"] == pytest.approx(1.054945, abs=1e-6)
    assert result["holds_for_C"] == 2


def test_theory_superiority_infeasible(cli_runner):
    assert cli_runner.invoke(theory, ["superiority", "1", "1", "1"]).exit_code == 2


def test_theory_ib_bound(cli_runner):
    result = _run(cli_runner, theory, ["ib-bound", "10", "100", "0.001"])

    assert result["bound_nats"] == pytest.approx(0.34657, abs=1e-5)


def test_theory_complexity(cli_runner):
    result = _run(cli_runner, theory, ["complexity", "2", "10", "96", "20", "24"])

    assert result["ratio"] < 1


def test_bench_on_synthetic_data(cli_runner, out_dir):
    report = _run(
        cli_runner,
        bench,
        [
            "--output-dir",
            out_dir,
            "--lookback",
            "48",
            "--horizon",
            "24",
            "--tau",
            "24",
            "--lengths",
            "48",
            "--lengths",
            "96",
            "--channels",
            "4",
            "--repetitions",
            "2",
            "--warmup",
            "0",
        ],
    )

    assert report["published_rows"] == 20
    assert report["published_mismatches"] == []
    assert [row["L"] for row in report["compression_scaling"]] == [48, 96]
    assert report["predictor_scaling"]["speedup"] > 1
    assert os.path.exists(os.path.join(out_dir, "bench.json"))
