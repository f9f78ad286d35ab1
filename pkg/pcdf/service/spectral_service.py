import math
from collections import Counter
from typing import Optional, Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg

from pcdf.models import MultichannelSeries, RedundancyReport, SeasonalProfile
from pcdf.service.exceptions import ArgumentException, NoSeasonalityException

ZERO_ENERGY = 1e-12


def dft(x) -> np.ndarray:
    """
    Unnormalized forward DFT: X_j = sum_t x_t exp(-2 pi i j t / n).
    """
    x = np.asarray(x, dtype=float)
    if x.size < 1:
        raise ArgumentException("dft needs at least one sample")
    return sp_fft.fft(x)


def idft(spectrum) -> np.ndarray:
    """
    Inverse of `dft`, including the 1/n factor.
    """
    return sp_fft.ifft(np.asarray(spectrum, dtype=complex))


def dominant_period(x) -> int:
    """
    Return the dominant seasonal period of a single channel.

    The DC bin is excluded; among bins 1..floor(L/2) the one with the largest
    magnitude wins, ties going to the higher frequency (shorter period). The
    period is round(L / j) clamped to [2, floor(L/2)].

    Raises:
        ArgumentException if L < 4.
        NoSeasonalityException if every candidate bin is below 1e-12.
    """
    x = np.asarray(x, dtype=float)
    length = x.size
    if length < 4:
        raise ArgumentException(f"dominant_period needs L >= 4, got {length}")

    magnitudes = np.abs(sp_fft.rfft(x - x.mean()))[1 : length // 2 + 1]
    peak = magnitudes.max()
    if peak < ZERO_ENERGY:
        raise NoSeasonalityException("No spectral energy outside the DC bin")

    # Relative tolerance so that scaling the input does not change tie-breaking.
    candidates = np.flatnonzero(magnitudes >= peak * (1 - 1e-9))
    bin_index = int(candidates[-1]) + 1
    period = int(round(length / bin_index))
    return min(max(period, 2), length // 2)


def detect_periods(series: MultichannelSeries, default_period: Optional[int] = None):
    """
    Run `dominant_period` on every channel, in channel order.

    Channels without seasonality get default_period when one is given;
    otherwise NoSeasonalityException propagates.
    """
    periods = []
    for col in range(series.n_channels):
        try:
            periods.append(dominant_period(series.values[:, col]))
        except NoSeasonalityException:
            if default_period is None:
                raise
            periods.append(int(default_period))
    return periods


def shared_period(periods: Sequence[int], length: int) -> SeasonalProfile:
    """
    Combine per-channel periods into one shared seasonal period.

    The shared period is lcm(periods) when it fits in floor(L/2). Otherwise
    the profile is capped and the shared period is the channel period
    (<= floor(L/2)) that the most channel periods divide, ties going to
    the largest such period.
    """
    periods = [int(p) for p in periods]
    if not periods:
        raise ArgumentException("shared_period needs at least one period")
    if any(p < 2 for p in periods):
        raise ArgumentException(f"Periods must be >= 2, got {periods}")

    limit = length // 2
    lcm = math.lcm(*periods)
    if lcm <= limit:
        return SeasonalProfile(per_channel_period=periods, shared_period=lcm, capped=False)

    candidates = sorted({p for p in periods if p <= limit})
    if not candidates:
        return SeasonalProfile(periods, shared_period=max(limit, 2), capped=True)

    divides = Counter({c: sum(1 for p in periods if c % p == 0) for c in candidates})
    best = max(candidates, key=lambda c: (divides[c], c))
    return SeasonalProfile(per_channel_period=periods, shared_period=best, capped=True)


def pca_redundancy(
    series: MultichannelSeries, threshold: float = 0.95, k: int = 50
) -> RedundancyReport:
    """
    Summarize how many principal components the channels need.

    Channels are the variables and timestamps the samples: the C x C
    covariance of the mean-centered channels is eigen-decomposed and the
    explained-variance fractions are reported.

    Notes:
        - A series with fewer timestamps than channels is flagged
          rank_deficient; the report is still computed.
        - An all-constant series has no variance; every fraction is 0 and
          pcs_at_threshold is 0.
    """
    values = series.values
    centered = values - values.mean(axis=0)
    covariance = centered.T @ centered / max(series.length - 1, 1)

    eigenvalues = linalg.eigh(covariance, eigvals_only=True)[::-1]
    # Round-off can leave tiny negative eigenvalues on rank-deficient covariances.
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    total = eigenvalues.sum()

    if total <= 0:
        fractions = np.zeros_like(eigenvalues)
        pcs = 0
    else:
        fractions = eigenvalues / total
        cumulative = np.cumsum(fractions)
        pcs = int(np.searchsorted(cumulative, threshold - 1e-12)) + 1
        pcs = min(pcs, fractions.size)

    cumulative = np.cumsum(fractions)
    top_k = min(k, fractions.size)
    return RedundancyReport(
        pcs_at_threshold=pcs,
        threshold=threshold,
        top_k_var=float(cumulative[top_k - 1]) if top_k else 0.0,
        pc1_var=float(fractions[0]),
        pc2_var=float(fractions[1]) if fractions.size > 1 else 0.0,
        k=k,
        rank_deficient=series.length < series.n_channels,
        explained_variance_ratio=[float(f) for f in fractions],
    )


def pearson(x, y) -> Optional[float]:
    """
    Pearson correlation of two equal-length vectors.

    Returns:
        r in [-1, 1], or None when either vector is constant.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ArgumentException(f"pearson needs equal lengths, got {x.size} and {y.size}")
    if x.size < 2:
        raise ArgumentException("pearson needs at least two samples")

    xc = x - x.mean()
    yc = y - y.mean()
    denominator = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denominator == 0.0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.clip((xc @ yc) / denominator, -1.0, 1.0))


def predictability_score(y, tau: int) -> Optional[float]:
    """
    Correlation between the first two consecutive tau-blocks of y.

    Equals 1 for any non-constant tau-periodic signal.
    """
    y = np.asarray(y, dtype=float)
    if tau < 1 or y.size < 2 * tau:
        raise ArgumentException(f"predictability_score needs length >= 2 * tau ({2 * tau})")
    return pearson(y[:tau], y[tau : 2 * tau])
