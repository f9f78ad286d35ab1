import numpy as np
import pytest

from pcdf.service.exceptions import ArgumentException
from pcdf.service.synthetic_service import low_rank_series, seasonal_series


def test_seasonal_series_is_seeded():
    first = seasonal_series(100, 3, 12, noise=0.1, seed=4)
    second = seasonal_series(100, 3, 12, noise=0.1, seed=4)

    np.testing.assert_array_equal(first.values, second.values)
    assert first.source_id == "seasonal:4"
    assert first.channel_names == ["ch0", "ch1", "ch2"]


def test_seasonal_series_without_noise_is_periodic():
    series = seasonal_series(96, 4, 12, noise=0.0, seed=1, rank=2)

    np.testing.assert_allclose(series.values[12:], series.values[:-12], atol=1e-12)


def test_seasonal_series_rank_one_channels_are_proportional():
    values = seasonal_series(48, 3, 8, noise=0.0, seed=2).values

    assert np.linalg.matrix_rank(values) == 1
    assert np.all(values.std(axis=0) > 0)


def test_low_rank_series_has_requested_rank():
    values = low_rank_series(200, 6, rank=3, seed=0).values
    centered = values - values.mean(axis=0)

    eigenvalues = np.linalg.eigvalsh(np.cov(centered, rowvar=False))[::-1]

    np.testing.assert_allclose(eigenvalues[:3], [1 / 3] * 3, rtol=1e-9)
    np.testing.assert_allclose(eigenvalues[3:], 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "make",
    [
        lambda: seasonal_series(1, 3, 12, noise=0.0, seed=0),
        lambda: seasonal_series(50, 3, 1, noise=0.0, seed=0),
        lambda: low_rank_series(50, 3, rank=4, seed=0),
        lambda: low_rank_series(3, 3, rank=3, seed=0),
    ],
)
def test_invalid_shapes(make):
    with pytest.raises(ArgumentException):
        make()
