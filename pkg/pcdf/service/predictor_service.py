from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from pcdf.models import LinearMap, PredictorParams, ReconstructionHead
from pcdf.service.exceptions import ArgumentException

PREDICTOR_KINDS = ("naive", "linear", "mlp")

HEAD_KERNEL_WIDTH = 3
HEAD_MIN_HIDDEN = 8
HEAD_INIT_SCALE = 0.1


class PredictorCache(NamedTuple):
    inputs: np.ndarray
    pre_activation: Optional[np.ndarray] = None
    hidden: Optional[np.ndarray] = None


def _manifest(kind: str, input_len: int, output_len: int, hidden_width: int):
    if kind == "naive":
        return []
    if kind == "linear":
        return [("layer1.weight", (output_len, input_len)), ("layer1.bias", (output_len,))]
    return [
        ("layer1.weight", (hidden_width, input_len)),
        ("layer1.bias", (hidden_width,)),
        ("layer2.weight", (output_len, hidden_width)),
        ("layer2.bias", (output_len,)),
    ]


def persistence_matrix(input_len: int, output_len: int, period: int) -> np.ndarray:
    """
    The (output_len, input_len) matrix that repeats the last `period` inputs.
    """
    matrix = np.zeros((output_len, input_len))
    rows = np.arange(output_len)
    matrix[rows, input_len - period + rows % period] = 1.0
    return matrix


def init_predictor(
    kind: str,
    input_len: int,
    output_len: int,
    period: int,
    seed: int,
    hidden_width: int = 64,
) -> PredictorParams:
    """
    Create a single-channel predictor.

    Required Args:
        kind: One of PREDICTOR_KINDS.
        input_len: L_c, the compressed history length.
        output_len: H_c, the forecast length.
        period: Seasonal period used by the naive predictor and the linear initialization.
        seed: Seed of the weight initialization.

    Returns:
        PredictorParams with linear weights at the seasonal-persistence map plus
        noise of scale 0.01 / sqrt(L_c), He-normal mlp weights, zero biases.

    Raises:
        ArgumentException for unknown kinds or a period longer than the input.
    """
    if kind not in PREDICTOR_KINDS:
        raise ArgumentException(f"Unknown predictor {kind!r}; expected one of {PREDICTOR_KINDS}")
    if input_len < 1 or output_len < 1:
        raise ArgumentException("Predictor input and output lengths must be positive")
    if not 1 <= period <= input_len:
        raise ArgumentException(f"Period {period} does not fit in an input of length {input_len}")

    rng = np.random.default_rng(seed)
    manifest = _manifest(kind, input_len, output_len, hidden_width)

    arrays = []
    if kind == "linear":
        noise = rng.normal(0.0, 0.01 / np.sqrt(input_len), size=(output_len, input_len))
        arrays = [persistence_matrix(input_len, output_len, period) + noise, np.zeros(output_len)]
    elif kind == "mlp":
        arrays = [
            rng.normal(0.0, np.sqrt(2.0 / input_len), size=(hidden_width, input_len)),
            np.zeros(hidden_width),
            rng.normal(0.0, np.sqrt(2.0 / hidden_width), size=(output_len, hidden_width)),
            np.zeros(output_len),
        ]

    weights = np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)
    return PredictorParams(
        kind=kind,
        weights=weights,
        manifest=manifest,
        input_len=input_len,
        output_len=output_len,
        period=period,
        hidden_width=hidden_width,
    )


def init_head(n_channels: int, seed: int, kernel_width: int = HEAD_KERNEL_WIDTH):
    """
    Create a reconstruction head: Dense starts at the identity, conv weights are
    N(0, 0.1^2 / fan_in) and every bias is zero.
    """
    if n_channels < 1:
        raise ArgumentException("The reconstruction head needs at least one channel")
    rng = np.random.default_rng(seed)
    hidden = max(n_channels, HEAD_MIN_HIDDEN)

    def conv_weight(out_channels, in_channels):
        scale = HEAD_INIT_SCALE / np.sqrt(in_channels * kernel_width)
        return rng.normal(0.0, scale, size=(out_channels, in_channels, kernel_width))

    return ReconstructionHead(
        conv1_weight=conv_weight(hidden, n_channels),
        conv1_bias=np.zeros(hidden),
        conv2_weight=conv_weight(n_channels, hidden),
        conv2_bias=np.zeros(n_channels),
        dense_weight=np.eye(n_channels),
        dense_bias=np.zeros(n_channels),
    )


def init_encoder(n_channels: int) -> LinearMap:
    """C -> 1 map starting at the channel mean."""
    return LinearMap(weight=np.full(n_channels, 1.0 / n_channels), bias=np.zeros(1))


def init_decoder(n_channels: int) -> LinearMap:
    """1 -> C map starting at a plain broadcast."""
    return LinearMap(weight=np.ones(n_channels), bias=np.zeros(n_channels))


def _check_input(p: PredictorParams, y_hist: np.ndarray):
    if y_hist.ndim != 1 or y_hist.size != p.input_len:
        raise ArgumentException(
            f"{p.kind} predictor expects {p.input_len} inputs, got shape {y_hist.shape}"
        )


def predict_with_cache(p: PredictorParams, y_hist) -> Tuple[np.ndarray, PredictorCache]:
    y_hist = np.asarray(y_hist, dtype=float)
    _check_input(p, y_hist)
    params = p.parameters()

    if p.kind == "naive":
        return np.resize(y_hist[-p.period :], p.output_len), PredictorCache(y_hist)

    if p.kind == "linear":
        out = params["layer1.weight"] @ y_hist + params["layer1.bias"]
        return out, PredictorCache(y_hist)

    pre_activation = params["layer1.weight"] @ y_hist + params["layer1.bias"]
    hidden = np.maximum(pre_activation, 0.0)
    out = params["layer2.weight"] @ hidden + params["layer2.bias"]
    return out, PredictorCache(y_hist, pre_activation, hidden)


def predict(p: PredictorParams, y_hist) -> np.ndarray:
    """
    Forecast H_c compressed steps from L_c compressed history.

    naive repeats the last seasonal block, linear is one affine map and mlp
    is two affine maps with a ReLU between them.

    Raises:
        ArgumentException when the history length differs from input_len.
    """
    out, _ = predict_with_cache(p, y_hist)
    return out


def predict_backward(
    p: PredictorParams, cache: PredictorCache, grad_out
) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    """
    Reverse pass of `predict`.

    Returns:
        (gradients keyed like p.parameters(), dLoss/dInput).
    """
    grad_out = np.asarray(grad_out, dtype=float)
    params = p.parameters()

    if p.kind == "naive":
        grad_input = np.zeros(p.input_len)
        positions = p.input_len - p.period + np.arange(p.output_len) % p.period
        np.add.at(grad_input, positions, grad_out)
        return {}, grad_input

    if p.kind == "linear":
        grads = {
            "layer1.weight": np.outer(grad_out, cache.inputs),
            "layer1.bias": grad_out.copy(),
        }
        return grads, params["layer1.weight"].T @ grad_out

    grad_hidden = params["layer2.weight"].T @ grad_out
    grad_pre = grad_hidden * (cache.pre_activation > 0)
    grads = {
        "layer1.weight": np.outer(grad_pre, cache.inputs),
        "layer1.bias": grad_pre,
        "layer2.weight": np.outer(grad_out, cache.hidden),
        "layer2.bias": grad_out.copy(),
    }
    return grads, params["layer1.weight"].T @ grad_pre


def clip_groups(names: List[str]) -> Dict[str, List[str]]:
    """
    Group parameter names by layer: "predictor.layer1.weight" and
    "predictor.layer1.bias" clip together as "predictor.layer1".
    """
    groups: Dict[str, List[str]] = {}
    for name in names:
        groups.setdefault(name.rsplit(".", 1)[0], []).append(name)
    return groups
