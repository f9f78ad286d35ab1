import json
import os
from typing import Mapping, Optional

from pcdf.service.dtos import PipelineConfig
from pcdf.service.exceptions import ConfigurationException

OUTPUT_DIR_ENV = "PCDF_OUTPUT_DIR"


def defaults_from_app_config(app_config: Mapping) -> dict:
    """
    PipelineConfig values found in a Flask config, which stores them upper-cased.
    """
    return {
        name: app_config[name.upper()]
        for name in PipelineConfig.field_names()
        if name.upper() in app_config
    }


def load_config_file(path: str) -> dict:
    """
    Read a flat JSON object whose keys are PipelineConfig field names.

    Raises:
        ConfigurationException if the file is missing, is not a JSON object or
        carries keys that are not PipelineConfig fields.
    """
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationException(f"Cannot read config file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ConfigurationException(f"Config file {path} is not valid JSON: {e}")

    if not isinstance(data, dict):
        raise ConfigurationException(f"Config file {path} must hold a JSON object")

    unknown = sorted(set(data) - set(PipelineConfig.field_names()))
    if unknown:
        raise ConfigurationException(f"Unknown config key(s) in {path}: {', '.join(unknown)}")
    return data


def build_pipeline_config(
    app_config: Mapping, config_path: Optional[str] = None, overrides: Optional[dict] = None
) -> PipelineConfig:
    """
    Merge configuration sources, lowest precedence first: app config defaults,
    the config file, the PCDF_OUTPUT_DIR environment variable, then CLI overrides
    (None values are ignored).
    """
    values = defaults_from_app_config(app_config)
    if config_path:
        values.update(load_config_file(config_path))

    env_output_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_output_dir:
        values["output_dir"] = env_output_dir

    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return PipelineConfig(**values)
