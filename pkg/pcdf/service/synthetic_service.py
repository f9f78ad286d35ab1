import numpy as np

from pcdf.models import MultichannelSeries
from pcdf.service.exceptions import ArgumentException


def _channel_names(n_channels: int):
    return [f"ch{i}" for i in range(n_channels)]


def seasonal_series(
    length: int, n_channels: int, period: int, noise: float, seed: int, rank: int = 1
) -> MultichannelSeries:
    """
    Seeded seasonal dataset.

    `rank` zero-mean, unit-variance period-`period` patterns are mixed into
    the channels with positive loadings drawn from U(0.5, 1.5) / C, then
    Gaussian noise of std `noise` is added. With rank 1 every channel is a
    scaled copy of one pattern and the loadings sum to about 1.
    """
    if length < 2 or n_channels < 1 or period < 2 or rank < 1:
        raise ArgumentException(
            "seasonal_series needs length >= 2, C >= 1, period >= 2 and rank >= 1"
        )
    rng = np.random.default_rng(seed)

    patterns = rng.normal(size=(rank, period))
    patterns -= patterns.mean(axis=1, keepdims=True)
    patterns /= patterns.std(axis=1, keepdims=True)
    latent = np.stack([np.resize(p, length) for p in patterns])

    loadings = rng.uniform(0.5, 1.5, size=(rank, n_channels)) / n_channels
    values = latent.T @ loadings + noise * rng.normal(size=(length, n_channels))
    return MultichannelSeries(values, _channel_names(n_channels), source_id=f"seasonal:{seed}")


def low_rank_series(length: int, n_channels: int, rank: int, seed: int) -> MultichannelSeries:
    """
    Seeded aperiodic series whose channel covariance has exactly `rank`
    non-zero eigenvalues, all equal, so that `rank` principal components are
    needed to reach 95% of the variance (for rank <= 20).
    """
    if not 1 <= rank <= n_channels or length <= rank:
        raise ArgumentException(
            f"Cannot build a rank-{rank} series with C={n_channels}, L={length}"
        )
    rng = np.random.default_rng(seed)

    raw = rng.normal(size=(length, rank))
    latent, _ = np.linalg.qr(raw - raw.mean(axis=0))
    latent *= np.sqrt((length - 1) / rank)

    mixing, _ = np.linalg.qr(rng.normal(size=(n_channels, rank)))
    values = latent @ mixing.T
    return MultichannelSeries(values, _channel_names(n_channels), source_id=f"low-rank:{seed}")
