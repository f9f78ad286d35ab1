import json
import logging
import math
import os
import time
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from pcdf.models import CompressedSeries, MultichannelSeries, PipelineState, WindowPair
from pcdf.service import (
    codec_service,
    key_service,
    pipeline_service,
    predictor_service,
    series_service,
    spectral_service,
    training_service,
)
from pcdf.service.dtos import PipelineConfig, RunReport, SuperiorityResult, Timing, TrainConfig
from pcdf.service.exceptions import ArgumentException, InfeasibleRegimeException

logger = logging.getLogger(__name__)

REPORTS_JSONL = "reports.jsonl"
REPORTS_CSV = "reports.csv"


class PublishedResult(NamedTuple):
    model: str
    dataset: str
    channels: int
    mse: float
    runtime_s: float
    cdpi: float


# Published MSE, runtime and CDPI of compressed-pipeline forecasters (PCDF-*) and the
# uncompressed base models they are built on.
PUBLISHED_RESULTS = [
    PublishedResult("PCDF-MLP", "NYC taxi", 5, 0.17001, 0.00270, 0.000459),
    PublishedResult("TSMixer", "NYC taxi", 5, 0.11583, 0.00343, 0.000397),
    PublishedResult("PCDF-Trans", "NYC taxi", 5, 0.17185, 0.00198, 0.000340),
    PublishedResult("PatchTST", "NYC taxi", 5, 0.18207, 0.00393, 0.000716),
    PublishedResult("PCDF-Linear", "NYC taxi", 5, 0.17617, 0.00176, 0.000310),
    PublishedResult("HDMixer", "NYC taxi", 5, 0.21746, 0.01133, 0.002464),
    PublishedResult("PCDF-MLP", "NYC taxi", 10, 0.17345, 0.00302, 0.000524),
    PublishedResult("TSMixer", "NYC taxi", 10, 0.10712, 0.00529, 0.000567),
    PublishedResult("PCDF-Trans", "NYC taxi", 10, 0.17866, 0.00216, 0.000386),
    PublishedResult("PCDF-Linear", "NYC taxi", 10, 0.18100, 0.00192, 0.000348),
    PublishedResult("HDMixer", "NYC taxi", 10, 0.19901, 0.01993, 0.003966),
    PublishedResult("PatchTST", "NYC taxi", 10, 0.16052, 0.00639, 0.001026),
    PublishedResult("PCDF-MLP", "DC bike", 5, 0.20727, 0.00260, 0.000539),
    PublishedResult("PCDF-Trans", "DC bike", 5, 0.21993, 0.00188, 0.000413),
    PublishedResult("PCDF-Linear", "DC bike", 5, 0.30601, 0.00165, 0.000505),
    PublishedResult("PCDF-MLP", "Electricity", 5, 0.12057, 0.00248, 0.000299),
    PublishedResult("PCDF-MLP", "Sensor drift", 5, 0.21170, 0.00259, 0.000548),
    PublishedResult("PCDF-MLP", "Weather", 5, 0.13686, 0.00250, 0.000342),
    PublishedResult("PCDF-MLP", "DC bike", 20, 0.20499, 0.00337, 0.000691),
    PublishedResult("PCDF-MLP", "Sensor drift", 20, 0.22143, 0.00382, 0.000846),
]


def mse(x_hat, x) -> float:
    """
    Mean of squared element-wise differences.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x = np.asarray(x, dtype=float)
    if x_hat.shape != x.shape:
        raise ArgumentException(f"mse needs matching shapes, got {x_hat.shape} and {x.shape}")
    return float(np.mean((x_hat - x) ** 2))


def time_inference(f: Callable[[], object], repetitions: int = 20, warmup: int = 3) -> Timing:
    """
    Time a runnable with the monotonic performance counter.

    Required Args:
        f: Zero-argument callable.
        repetitions: Timed runs R (>= 1).
        warmup: Untimed runs executed first.

    Returns:
        Timing with the median, min and max of the R timed runs in seconds.
    """
    if repetitions < 1:
        raise ArgumentException("time_inference needs at least one repetition")
    for _ in range(warmup):
        f()

    samples = []
    for _ in range(repetitions):
        start = time.perf_counter()
        f()
        samples.append(time.perf_counter() - start)
    return Timing(
        median_s=float(np.median(samples)),
        min_s=float(min(samples)),
        max_s=float(max(samples)),
        repetitions=repetitions,
    )


def cdpi(mse_value: float, runtime_s: float) -> float:
    """Cobb-Douglas index: the unnormalized product mse * runtime."""
    if mse_value < 0 or runtime_s < 0:
        raise ArgumentException("cdpi needs non-negative mse and runtime")
    return mse_value * runtime_s


def superiority_threshold(D: int, E: int, tau: int) -> SuperiorityResult:
    """
    Smallest channel count for which one compressed predictor beats C
    per-channel predictors: C > DE / (DE - 1 - 1/tau).

    Raises:
        InfeasibleRegimeException if DE <= 1 + 1/tau.
    """
    if D < 1 or E < 1 or tau < 1:
        raise ArgumentException("D, E and tau must be positive")
    denominator = D * E - 1 - 1 / tau
    if denominator <= 0:
        raise InfeasibleRegimeException(
            f"DE = {D * E} <= 1 + 1/tau = {1 + 1 / tau}; the superiority condition is undefined"
        )
    threshold = D * E / denominator
    return SuperiorityResult(
        D=D, E=E, tau=tau, threshold=threshold, holds_for_C=math.floor(threshold) + 1
    )


def ib_bound(n_channels: int, length: int, sigma2: float) -> float:
    """
    Upper bound, in nats, on the predictive information lost by compressing
    C channels of length L with noise variance sigma2: 0.5 * ln(1 + 1 / (C L sigma2)).
    """
    if n_channels <= 0 or length <= 0 or sigma2 <= 0:
        raise ArgumentException("ib_bound needs positive C, L and sigma2")
    return 0.5 * math.log1p(1.0 / (n_channels * length * sigma2))


def complexity_comp(D: int, E: int, length: int, n_channels: int, tau: int) -> float:
    """
    Operation count of compress -> predict -> decompress:
    DEL^2 + CL^2/tau + 2L log L + L + 3CL + 2CL^2.
    """
    L, C = length, n_channels
    return D * E * L**2 + C * L**2 / tau + 2 * L * math.log(L) + L + 3 * C * L + 2 * C * L**2


def complexity_naive(D: int, E: int, length: int, n_channels: int) -> float:
    """Operation count of one predictor per channel: DECL^2."""
    return D * E * n_channels * length**2


def cross_check_published(tol: float = 1e-6) -> List[Tuple[PublishedResult, float]]:
    """
    Recompute the CDPI of every published row.

    Returns:
        (row, recomputed cdpi) for each row that misses its published value by more than tol.
    """
    mismatches = []
    for row in PUBLISHED_RESULTS:
        value = cdpi(row.mse, row.runtime_s)
        if abs(value - row.cdpi) > tol:
            mismatches.append((row, value))
    return mismatches


def compression_scaling(
    lengths: Sequence[int], tau: int, n_channels: int, repetitions: int = 5, seed: int = 0
) -> List[Dict[str, float]]:
    """
    Measured dense vs sparse compression time for each window length.
    """
    rng = np.random.default_rng(seed)
    key = key_service.make_orthogonal_key(tau, seed)
    rows = []
    for length in lengths:
        X = rng.normal(size=(length, n_channels))
        sparse = time_inference(lambda: codec_service.compress_sparse(X, key), repetitions, 1)
        dense = time_inference(lambda: codec_service.compress_dense(X, key), repetitions, 1)
        rows.append({"L": length, "sparse_s": sparse.median_s, "dense_s": dense.median_s})
    return rows


def predictor_scaling(
    state: PipelineState, windows: List[WindowPair], repetitions: int = 20, warmup: int = 3
) -> Dict[str, float]:
    """
    Time the single-channel predictor on the compressed windows against the
    same predictor run once per channel on the raw windows.
    """
    length = state.predictor.input_len
    compressed = [
        series_service.normalize(pipeline_service.compress_window(state, w.history))[0]
        for w in windows
    ]
    per_channel = [
        series_service.normalize(w.history[-length:, c])[0]
        for w in windows
        for c in range(state.n_channels)
    ]

    def run(inputs):
        for y in inputs:
            predictor_service.predict(state.predictor, y)

    single = time_inference(lambda: run(compressed), repetitions, warmup)
    multi = time_inference(lambda: run(per_channel), repetitions, warmup)
    return {
        "single_channel_s": single.median_s,
        "per_channel_s": multi.median_s,
        "speedup": multi.median_s / single.median_s if single.median_s > 0 else math.inf,
    }


def seasonal_naive_baseline(windows: List[WindowPair], tau: int) -> float:
    """MSE of repeating each channel's last tau-block of history over the horizon."""
    if not windows:
        raise ArgumentException("Baseline needs at least one window")
    errors = []
    for w in windows:
        forecast = w.history[-tau:][np.arange(w.future.shape[0]) % tau]
        errors.append(mse(forecast, w.future))
    return float(np.mean(errors))


def resolve_tau(cfg: PipelineConfig, series: MultichannelSeries) -> int:
    """
    The configured tau, or the shared seasonal period of the series when tau is "auto".
    """
    if cfg.tau != "auto":
        return int(cfg.tau)
    periods = spectral_service.detect_periods(series, default_period=cfg.default_period)
    profile = spectral_service.shared_period(periods, cfg.lookback)
    logger.info(f"Detected periods {periods}; shared period {profile.shared_period}")
    return profile.shared_period


def prepare_windows(cfg: PipelineConfig, series: MultichannelSeries):
    """
    Split a series in time order and cut train and test windows.

    Returns:
        (train windows, test windows).
    """
    train, _, test = series_service.split_series(series, cfg.split_ratios)
    train_windows = series_service.make_windows(train, cfg.lookback, cfg.horizon, cfg.stride)
    test_windows = series_service.make_windows(test, cfg.lookback, cfg.horizon, cfg.stride)
    return train_windows, test_windows


def payload_bytes(state: PipelineState, history) -> int:
    y = pipeline_service.compress_window(state, history)
    compressed = CompressedSeries(
        y=y,
        mode=state.mode,
        tau=state.tau,
        norm=pipeline_service.window_stats(state, y),
        n_channels=state.n_channels,
    )
    return len(codec_service.serialize_compressed(compressed))


def evaluate(
    state: PipelineState,
    windows: List[WindowPair],
    cfg: PipelineConfig,
    variant: str = "comp-decomp",
    train_time_s: float = 0.0,
) -> RunReport:
    """
    MSE, timed inference and payload accounting of a trained pipeline.

    Notes:
        - Runtime is the median over cfg.repetitions forecasts of the whole
          window set after cfg.warmup untimed passes.
        - The compressed payload must be one channel; the report records
          the compression ratio C:1.
    """
    if not windows:
        raise ArgumentException("Cannot evaluate on zero windows")

    compressed = pipeline_service.compress_window(state, windows[0].history)
    single_channel = compressed.ndim == 1
    if not single_channel:
        raise ArgumentException(f"Compressed payload has shape {compressed.shape}, not (L, 1)")

    error = pipeline_service.evaluate_mse(state, windows)
    timing = time_inference(
        lambda: [pipeline_service.forecast(state, w.history) for w in windows],
        cfg.repetitions,
        cfg.warmup,
    )
    return RunReport(
        mse=error,
        runtime_s=timing.median_s,
        config_fingerprint=cfg.fingerprint(),
        payload_bytes=payload_bytes(state, windows[0].history),
        mode=state.mode,
        variant=variant,
        n_channels=state.n_channels,
        compression_ratio=f"{state.n_channels}:1",
        single_channel=single_channel,
        runtime_min_s=timing.min_s,
        runtime_max_s=timing.max_s,
        train_time_s=train_time_s,
    )


def ablation_run(
    series: MultichannelSeries, variant: str, cfg: PipelineConfig, tau: Optional[int] = None
) -> RunReport:
    """
    Train and evaluate one ablation variant.

    Every variant sees the same split, windows, seed and predictor kind, so
    reports of one dataset share their config fingerprint.

    Raises:
        ArgumentException for an unknown variant.
    """
    if variant not in pipeline_service.VARIANTS:
        raise ArgumentException(
            f"Unknown variant {variant!r}; expected one of {pipeline_service.VARIANTS}"
        )
    tau = tau or resolve_tau(cfg, series_service.split_series(series, cfg.split_ratios)[0])
    train_windows, test_windows = prepare_windows(cfg, series)

    state = pipeline_service.build_state(cfg, series.n_channels, tau, variant)
    start = time.perf_counter()
    training_service.train(state, train_windows, TrainConfig.from_pipeline_config(cfg))
    train_time = time.perf_counter() - start

    report = evaluate(state, test_windows, cfg, variant=variant, train_time_s=train_time)
    logger.info(f"{variant}: mse={report.mse:.6g} runtime={report.runtime_s:.3g}s")
    return report


def write_reports(reports: List[RunReport], output_dir: str):
    """
    Append reports to reports.jsonl and rewrite reports.csv from every line of it.
    """
    os.makedirs(output_dir, exist_ok=True)
    jsonl_path = os.path.join(output_dir, REPORTS_JSONL)
    with open(jsonl_path, "a") as f:
        for report in reports:
            f.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")

    frame = pd.read_json(jsonl_path, lines=True, dtype=False)
    frame.to_csv(os.path.join(output_dir, REPORTS_CSV), index=False)
