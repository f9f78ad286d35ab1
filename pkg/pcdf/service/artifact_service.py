import json
import logging
import os
from dataclasses import asdict
from typing import List

import numpy as np

from pcdf.models import LinearMap, NormStats, PipelineState, PredictorParams, ReconstructionHead
from pcdf.service.dtos import PipelineConfig
from pcdf.service.exceptions import IncompatibleArtifactsException, MissingArtifactException
from pcdf.service.key_service import key_from_dict, key_to_dict

logger = logging.getLogger(__name__)

KEY_FILE = "key.json"
MODEL_FILE = "model.json"
HISTORY_FILE = "history.json"
ARTIFACT_FILES = (KEY_FILE, MODEL_FILE, HISTORY_FILE)


def _write_json(path: str, payload: dict):
    # float repr round-trips exactly
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=1)
        f.write("\n")


def _read_json(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingArtifactException(f"Missing artifact file {path}")
    with open(path) as f:
        return json.load(f)


def _arrays(container) -> dict:
    return {name: value.tolist() for name, value in container.parameters().items()}


def save_artifacts(
    state: PipelineState, cfg: PipelineConfig, history: List[dict], directory: str
) -> List[str]:
    """
    Serialize a trained pipeline to key.json, model.json and history.json.

    Required Args:
        state: Trained pipeline.
        cfg: The run configuration; its fingerprint is embedded in every file.
        history: Per-epoch loss history from training.
        directory: Target directory, created if needed.

    Returns:
        The paths written.
    """
    os.makedirs(directory, exist_ok=True)
    fingerprint = cfg.fingerprint()
    p = state.predictor

    model = {
        "fingerprint": fingerprint,
        "config": cfg.fingerprint_fields(),
        "mode": state.mode,
        "n_channels": state.n_channels,
        "lookback": state.lookback,
        "horizon": state.horizon,
        "predictor": {
            "kind": p.kind,
            "manifest": [[name, list(shape)] for name, shape in p.manifest],
            "weights": p.weights.tolist(),
            "input_len": p.input_len,
            "output_len": p.output_len,
            "period": p.period,
            "hidden_width": p.hidden_width,
        },
        "head": _arrays(state.head) if state.head is not None else None,
        "encoder": _arrays(state.encoder) if state.encoder is not None else None,
        "decoder": _arrays(state.decoder) if state.decoder is not None else None,
        "norm": asdict(state.norm) if state.norm is not None else None,
    }

    paths = [os.path.join(directory, name) for name in ARTIFACT_FILES]
    _write_json(
        paths[0],
        {"fingerprint": fingerprint, "keys": [key_to_dict(key) for key in state.keys]},
    )
    _write_json(paths[1], model)
    save_history(history, cfg, directory)
    logger.info(f"Saved artifacts {fingerprint} to {directory}")
    return paths


def _head_from_dict(data: dict) -> ReconstructionHead:
    return ReconstructionHead(
        **{name.replace(".", "_"): np.asarray(value, dtype=float) for name, value in data.items()}
    )


def _linear_map_from_dict(data: dict) -> LinearMap:
    return LinearMap(
        weight=np.asarray(data["linear.weight"], dtype=float),
        bias=np.asarray(data["linear.bias"], dtype=float),
    )


def load_artifacts(directory: str, cfg: PipelineConfig) -> PipelineState:
    """
    Rebuild a trained pipeline from its artifact files.

    Raises:
        MissingArtifactException if a file is absent.
        IncompatibleArtifactsException if the files were produced by a run
        whose config fingerprint differs from cfg's.
    """
    key_data = _read_json(os.path.join(directory, KEY_FILE))
    model = _read_json(os.path.join(directory, MODEL_FILE))

    expected = cfg.fingerprint()
    for name, data in ((KEY_FILE, key_data), (MODEL_FILE, model)):
        if data.get("fingerprint") != expected:
            raise IncompatibleArtifactsException(
                f"{name} was written by config {data.get('fingerprint')}, current config is "
                f"{expected}"
            )

    p = model["predictor"]
    predictor = PredictorParams(
        kind=p["kind"],
        weights=np.asarray(p["weights"], dtype=float),
        manifest=[(name, tuple(shape)) for name, shape in p["manifest"]],
        input_len=p["input_len"],
        output_len=p["output_len"],
        period=p["period"],
        hidden_width=p["hidden_width"],
    )
    return PipelineState(
        keys=[key_from_dict(k) for k in key_data["keys"]],
        mode=model["mode"],
        n_channels=model["n_channels"],
        lookback=model["lookback"],
        horizon=model["horizon"],
        predictor=predictor,
        head=_head_from_dict(model["head"]) if model["head"] is not None else None,
        encoder=_linear_map_from_dict(model["encoder"]) if model["encoder"] is not None else None,
        decoder=_linear_map_from_dict(model["decoder"]) if model["decoder"] is not None else None,
        norm=NormStats(**model["norm"]) if model["norm"] is not None else None,
    )


def save_history(history: List[dict], cfg: PipelineConfig, directory: str) -> str:
    """Write the per-epoch loss history, also used to dump it after a divergence."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, HISTORY_FILE)
    _write_json(path, {"fingerprint": cfg.fingerprint(), "history": history})
    return path


def load_history(directory: str) -> List[dict]:
    return _read_json(os.path.join(directory, HISTORY_FILE))["history"]
