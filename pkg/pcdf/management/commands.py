import json
import os
import time
from contextlib import contextmanager
from dataclasses import asdict

import click
from flask import Blueprint, current_app

from pcdf.errors import data_error, numeric_error, usage_error
from pcdf.service import (
    artifact_service,
    bench_service,
    codec_service,
    config_service,
    key_service,
    pipeline_service,
    series_service,
    spectral_service,
    synthetic_service,
    training_service,
)
from pcdf.service.codec_service import MODES
from pcdf.service.dtos import PipelineConfig, TrainConfig
from pcdf.service.exceptions import (
    ArgumentException,
    ConfigurationException,
    DataException,
    IncompatibleArtifactsException,
    MissingArtifactException,
    NoSeasonalityException,
    NumericException,
    TrainingDivergedException,
)
from pcdf.service.key_service import KEY_ALIASES
from pcdf.service.pipeline_service import VARIANTS
from pcdf.service.predictor_service import PREDICTOR_KINDS
from pcdf.service.series_service import INGESTION_POLICIES
from pcdf.validators import NORM_SCOPES, Validators

bp = Blueprint("commands", __name__, cli_group=None)

# Each option overrides the PipelineConfig field of the same name
PIPELINE_OPTIONS = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False)),
    click.option("--data", "data_path", type=click.Path(dir_okay=False)),
    click.option("--lookback", type=click.INT),
    click.option("--horizon", type=click.INT),
    click.option("--stride", type=click.INT),
    click.option("--tau", type=click.STRING, help='"auto" or a positive integer'),
    click.option("--mode", type=click.Choice(MODES)),
    click.option("--key", type=click.Choice(list(KEY_ALIASES))),
    click.option("--key-seed", type=click.INT),
    click.option("--per-channel-keys/--shared-key", default=None),
    click.option("--predictor", type=click.Choice(PREDICTOR_KINDS)),
    click.option("--hidden-width", type=click.INT),
    click.option("--epochs", type=click.INT),
    click.option("--lr", type=click.FLOAT),
    click.option("--alpha", type=click.FLOAT),
    click.option("--beta", type=click.FLOAT),
    click.option("--clip-alpha", type=click.FLOAT),
    click.option("--batch", type=click.INT),
    click.option("--seed", type=click.INT),
    click.option("--norm-scope", type=click.Choice(NORM_SCOPES)),
    click.option("--policy", "ingestion_policy", type=click.Choice(INGESTION_POLICIES)),
    click.option("--repetitions", type=click.INT),
    click.option("--warmup", type=click.INT),
    click.option("--output-dir", type=click.Path(file_okay=False)),
]


def pipeline_options(f):
    for option in reversed(PIPELINE_OPTIONS):
        f = option(f)
    return f


@contextmanager
def service_errors():
    """
    Translate service exceptions into CLI errors with the matching exit code.
    """
    try:
        yield
    except (ConfigurationException, ArgumentException, IncompatibleArtifactsException) as e:
        raise usage_error(str(e))
    except (DataException, NoSeasonalityException, MissingArtifactException) as e:
        raise data_error(str(e))
    except NumericException as e:
        raise numeric_error(str(e))
    except OSError as e:
        raise data_error(str(e))


def _parse_tau(value):
    if value is None or value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise usage_error(f"--tau must be 'auto' or a positive integer, got {value!r}")


def _load_config(config_path, require_data=True, **overrides) -> PipelineConfig:
    overrides["tau"] = _parse_tau(overrides.get("tau"))
    with service_errors():
        cfg = config_service.build_pipeline_config(current_app.config, config_path, overrides)
        if require_data:
            Validators.validate_required_fields_are_provided(cfg)
        Validators.validate_pipeline_config(cfg)
    current_app.logger.info(f"Config {cfg.fingerprint()}: {cfg.fingerprint_fields()}")
    return cfg


def _load_series(cfg: PipelineConfig):
    with service_errors():
        series = series_service.load_csv(cfg.data_path, cfg.ingestion_policy)
    current_app.logger.info(f"Loaded {series}")
    return series


def _resolve_tau(cfg: PipelineConfig, series) -> int:
    with service_errors():
        train, _, _ = series_service.split_series(series, cfg.split_ratios)
        tau = bench_service.resolve_tau(cfg, train)
        Validators.validate_tau(cfg, tau)
    return tau


def _emit(payload, output_dir=None, filename=None):
    text = json.dumps(payload, sort_keys=True, indent=2)
    if output_dir and filename:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, filename), "w") as f:
            f.write(text + "\n")
    click.echo(text)


def _score(y, tau):
    if len(y) < 2 * tau:
        return None
    return spectral_service.predictability_score(y, tau)


@bp.cli.command("analyze")
@pipeline_options
def analyze(config_path, **overrides):
    """
    Report per-channel periods, the shared period, PCA redundancy and
    predictability scores of a dataset.
    """
    cfg = _load_config(config_path, **overrides)
    series = _load_series(cfg)

    with service_errors():
        periods = spectral_service.detect_periods(series, default_period=cfg.default_period)
        profile = spectral_service.shared_period(periods, cfg.lookback)
        redundancy = spectral_service.pca_redundancy(series)
        tau = profile.shared_period if cfg.tau == "auto" else cfg.tau

        channel_scores = {}
        for col, name in enumerate(series.channel_names):
            channel_scores[name] = _score(series.values[:, col], tau)
        key = key_service.make_orthogonal_key(tau, cfg.key_seed)
        compressed = codec_service.compress_dense(series.values, key)

    current_app.logger.info(
        f"Shared period {profile.shared_period} (capped={profile.capped}); "
        f"{redundancy.pcs_at_threshold} PCs reach {redundancy.threshold:.0%} of the variance"
    )
    report = {
        "source": series.source_id,
        "n_channels": series.n_channels,
        "length": series.length,
        "config_fingerprint": cfg.fingerprint(),
        "seasonal_profile": asdict(profile),
        "redundancy": asdict(redundancy),
        "predictability": {
            "tau": tau,
            "channels": channel_scores,
            "compressed": _score(compressed.y, tau),
        },
    }
    _emit(report, cfg.output_dir, "analysis.json")


@bp.cli.command("train")
@pipeline_options
def train(config_path, **overrides):
    """
    Train the compression-prediction-decompression pipeline and write its
    artifacts (key.json, model.json, history.json) to the output directory.
    """
    cfg = _load_config(config_path, **overrides)
    series = _load_series(cfg)
    tau = _resolve_tau(cfg, series)

    with service_errors():
        train_windows, _ = bench_service.prepare_windows(cfg, series)
        state = pipeline_service.build_state(cfg, series.n_channels, tau)

    current_app.logger.info(
        f"Training {cfg.predictor} predictor on {len(train_windows)} windows "
        f"(C={series.n_channels}, tau={tau}, mode={cfg.mode})"
    )
    start = time.perf_counter()
    with service_errors():
        try:
            _, _, history = training_service.train(
                state, train_windows, TrainConfig.from_pipeline_config(cfg)
            )
        except TrainingDivergedException as e:
            path = artifact_service.save_history(e.history, cfg, cfg.output_dir)
            current_app.logger.error(f"Diverged in epoch {e.epoch}; history written to {path}")
            raise numeric_error(f"Training diverged in epoch {e.epoch}: {e}")
    train_time = time.perf_counter() - start

    with service_errors():
        paths = artifact_service.save_artifacts(state, cfg, history, cfg.output_dir)

    current_app.logger.info(f"Trained in {train_time:.2f}s")
    _emit(
        {
            "config_fingerprint": cfg.fingerprint(),
            "tau": tau,
            "epochs": len(history),
            "final_loss": history[-1]["total"] if history else None,
            "train_time_s": train_time,
            "artifacts": paths,
        }
    )


@bp.cli.command("eval")
@pipeline_options
@click.option("--artifacts", "artifacts_dir", type=click.Path(file_okay=False))
@click.option("--on", "split", type=click.Choice(["test", "train"]), default="test")
def evaluate(config_path, artifacts_dir, split, **overrides):
    """
    Evaluate trained artifacts: MSE, runtime, CDPI and payload size.
    """
    cfg = _load_config(config_path, **overrides)
    series = _load_series(cfg)

    with service_errors():
        state = artifact_service.load_artifacts(artifacts_dir or cfg.output_dir, cfg)
        if state.n_channels != series.n_channels:
            raise IncompatibleArtifactsException(
                f"Artifacts expect {state.n_channels} channels, data has {series.n_channels}"
            )
        train_windows, test_windows = bench_service.prepare_windows(cfg, series)
        windows = test_windows if split == "test" else train_windows

        report = bench_service.evaluate(state, windows, cfg)
        baseline = bench_service.seasonal_naive_baseline(windows, state.tau)
        bench_service.write_reports([report], cfg.output_dir)

    current_app.logger.info(
        f"{split} mse={report.mse:.6g} (seasonal naive {baseline:.6g}), "
        f"runtime={report.runtime_s:.3g}s, cdpi={report.cdpi:.3g}, ratio {report.compression_ratio}"
    )
    _emit({"split": split, "report": report.to_dict(), "seasonal_naive_mse": baseline})


@bp.cli.command("ablate")
@pipeline_options
@click.option(
    "--variant",
    "variants",
    type=click.Choice(VARIANTS),
    multiple=True,
    help="Run only these variants (default: all five)",
)
def ablate(config_path, variants, **overrides):
    """
    Train and evaluate the framework ablation variants on identical splits.
    """
    cfg = _load_config(config_path, **overrides)
    series = _load_series(cfg)
    tau = _resolve_tau(cfg, series)

    reports = []
    for variant in variants or VARIANTS:
        current_app.logger.info(f"Running variant {variant}...")
        with service_errors():
            reports.append(bench_service.ablation_run(series, variant, cfg, tau=tau))

    with service_errors():
        bench_service.write_reports(reports, cfg.output_dir)
    _emit([report.to_dict() for report in reports])


@bp.cli.group("theory")
def theory():
    """Closed-form calculators."""


@theory.command("superiority")
@click.argument("d", type=click.INT)
@click.argument("e", type=click.INT)
@click.argument("tau", type=click.INT)
def superiority(d: int, e: int, tau: int):
    """
    Channel count above which the compressed pipeline beats per-channel prediction.
    """
    with service_errors():
        result = bench_service.superiority_threshold(d, e, tau)
    current_app.logger.info(f"C > {result.threshold:.6f}; holds from C = {result.holds_for_C}")
    _emit(asdict(result))


@theory.command("ib-bound")
@click.argument("channels", type=click.INT)
@click.argument("length", type=click.INT)
@click.argument("sigma2", type=click.FLOAT)
def ib_bound(channels: int, length: int, sigma2: float):
    """
    Upper bound (nats) on the predictive information lost by compression.
    """
    with service_errors():
        bound = bench_service.ib_bound(channels, length, sigma2)
    _emit({"C": channels, "L": length, "sigma2": sigma2, "bound_nats": bound})


@theory.command("complexity")
@click.argument("d", type=click.INT)
@click.argument("e", type=click.INT)
@click.argument("length", type=click.INT)
@click.argument("channels", type=click.INT)
@click.argument("tau", type=click.INT)
def complexity(d: int, e: int, length: int, channels: int, tau: int):
    """
    Operation counts of the compressed pipeline and of per-channel prediction.
    """
    comp = bench_service.complexity_comp(d, e, length, channels, tau)
    naive = bench_service.complexity_naive(d, e, length, channels)
    _emit({"compressed": comp, "naive": naive, "ratio": comp / naive})


@bp.cli.command("bench")
@pipeline_options
@click.option("--lengths", type=click.INT, multiple=True, default=(96, 192, 384, 768))
@click.option("--channels", "n_channels", type=click.INT, default=8)
def bench(config_path, lengths, n_channels, **overrides):
    """
    Published CDPI cross-check, compression scaling and predictor scaling.

    Predictor scaling runs on --data when given, otherwise on a seeded
    seasonal dataset with --channels channels.
    """
    cfg = _load_config(config_path, require_data=False, **overrides)
    if cfg.data_path:
        series = _load_series(cfg)
        tau = _resolve_tau(cfg, series)
    else:
        tau = cfg.tau if cfg.tau != "auto" else cfg.default_period
        with service_errors():
            Validators.validate_tau(cfg, tau)
            series = synthetic_service.seasonal_series(
                cfg.lookback + cfg.horizon + 200, n_channels, tau, 0.05, cfg.seed
            )

    with service_errors():
        mismatches = bench_service.cross_check_published()
        scaling = bench_service.compression_scaling(
            lengths, tau, series.n_channels, cfg.repetitions
        )
        windows = series_service.make_windows(series, cfg.lookback, cfg.horizon, cfg.stride)
        state = pipeline_service.build_state(cfg, series.n_channels, tau)
        predictor_timing = bench_service.predictor_scaling(
            state, windows, cfg.repetitions, cfg.warmup
        )

    current_app.logger.info(
        f"{len(bench_service.PUBLISHED_RESULTS) - len(mismatches)}/"
        f"{len(bench_service.PUBLISHED_RESULTS)} published CDPI values reproduced"
    )
    report = {
        "published_rows": len(bench_service.PUBLISHED_RESULTS),
        "published_mismatches": [
            {"row": row._asdict(), "recomputed": value} for row, value in mismatches
        ],
        "compression_scaling": scaling,
        "predictor_scaling": predictor_timing,
    }
    _emit(report, cfg.output_dir, "bench.json")


@bp.cli.command("generate-data")
@click.argument("output", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["seasonal", "low-rank"]), default="seasonal")
@click.option("--length", type=click.INT, default=2000)
@click.option("--channels", "n_channels", type=click.INT, default=8)
@click.option("--period", type=click.INT, default=24)
@click.option("--noise", type=click.FLOAT, default=0.05)
@click.option("--rank", type=click.INT, default=1)
@click.option("--seed", type=click.INT, default=0)
def generate_data(output, kind, length, n_channels, period, noise, rank, seed):
    """
    Write a seeded synthetic dataset to OUTPUT as CSV.
    """
    current_app.logger.info(f"Generating {kind} data: L={length}, C={n_channels}...")
    with service_errors():
        if kind == "seasonal":
            series = synthetic_service.seasonal_series(
                length, n_channels, period, noise, seed, rank=rank
            )
        else:
            series = synthetic_service.low_rank_series(length, n_channels, rank, seed)
        series_service.write_csv(series, output)
    current_app.logger.info(f"Wrote {series} to {output}")
