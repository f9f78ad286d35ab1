import pytest

from pcdf.service.dtos import PipelineConfig
from pcdf.service.exceptions import ConfigurationException
from pcdf.validators import Validators


def _config(**overrides):
    return PipelineConfig(**{"data_path": "data.csv", **overrides})


def test_default_config_is_valid():
    assert Validators.validate_pipeline_config(_config()) is None


def test_missing_data_path():
    with pytest.raises(ConfigurationException) as e:
        Validators.validate_required_fields_are_provided(PipelineConfig())

    assert "data_path" in str(e.value)


@pytest.mark.parametrize(
    "overrides",
    [
        {"lookback": 0},
        {"horizon": -24},
        {"batch": True},
        {"epochs": -1},
        {"lr": 0.0},
        {"clip_alpha": -1.0},
        {"alpha": -0.1},
        {"train_ratio": 0.0},
        {"train_ratio": 0.8, "test_ratio": 0.3},
        {"mode": "banded"},
        {"key": "hadamard"},
        {"predictor": "transformer"},
        {"norm_scope": "global"},
        {"ingestion_policy": "interpolate"},
        {"tau": 0},
        {"tau": "weekly"},
    ],
)
def test_invalid_values(overrides):
    with pytest.raises(ConfigurationException):
        Validators.validate_pipeline_config(_config(**overrides))


def test_lookback_must_span_two_periods():
    with pytest.raises(ConfigurationException) as e:
        Validators.validate_tau(_config(lookback=40), 24)

    assert "L >= 2 tau" in str(e.value)


def test_sparse_horizon_must_be_multiple_of_tau():
    with pytest.raises(ConfigurationException):
        Validators.validate_tau(_config(horizon=30), 24)


def test_dense_horizon_may_be_unaligned():
    assert Validators.validate_tau(_config(mode="dense", horizon=30), 24) is None
