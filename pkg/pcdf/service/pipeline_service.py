"""
Compression -> prediction -> decompression for one window, forward and reverse.

The trainable parameters are the predictor, the reconstruction head and, in the
encoder ablations, the linear encoder/decoder. Keys are fixed. Normalization
statistics are constants of the reverse pass.
"""
import logging
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from pcdf.models import NormStats, PipelineState, WindowPair
from pcdf.service import codec_service, key_service, predictor_service, series_service
from pcdf.service.codec_service import HeadCache
from pcdf.service.dtos import LossBreakdown, PipelineConfig
from pcdf.service.exceptions import ArgumentException, NumericException
from pcdf.service.predictor_service import PredictorCache

logger = logging.getLogger(__name__)

VARIANTS = ("comp-decomp", "rand-decomp", "comp-decode", "encode-decomp", "encode-decode")


class ForwardCache(NamedTuple):
    history: np.ndarray
    stats: NormStats
    predictor: PredictorCache
    y_hat_n: np.ndarray
    y_hat: np.ndarray
    n_keys: int
    energy: Optional[np.ndarray]
    head: Optional[HeadCache]
    x_hat: np.ndarray
    residual: Optional[np.ndarray]


def build_state(
    cfg: PipelineConfig, n_channels: int, tau: int, variant: str = "comp-decomp"
) -> PipelineState:
    """
    Initialize a pipeline for one ablation variant.

    Required Args:
        cfg: Run configuration (key kind and seed, mode, sizes, predictor).
        n_channels: C.
        tau: Resolved seasonal period.
        variant: One of VARIANTS.

    Returns:
        A PipelineState with freshly initialized parameters.

    Notes:
        - rand-decomp swaps the configured key for a random-normal one.
        - comp-decode has no reconstruction head.
        - encode-decomp/encode-decode use a trainable encoder in place of
          compression; encode-decode also replaces decoding with a trainable decoder.
    """
    if variant not in VARIANTS:
        raise ArgumentException(f"Unknown variant {variant!r}; expected one of {VARIANTS}")

    key_kind = "random-normal" if variant == "rand-decomp" else cfg.key
    keys = key_service.make_key_set(
        key_kind, tau, cfg.key_seed, n_channels, per_channel=cfg.per_channel_keys
    )

    encoder = decoder = head = None
    if variant.startswith("encode"):
        encoder = predictor_service.init_encoder(n_channels)
    if variant == "encode-decode":
        decoder = predictor_service.init_decoder(n_channels)
    elif variant != "comp-decode":
        head = predictor_service.init_head(n_channels, cfg.seed + 1)

    state = PipelineState(
        keys=keys,
        mode=cfg.mode,
        n_channels=n_channels,
        lookback=cfg.lookback,
        horizon=cfg.horizon,
        predictor=None,
        head=head,
        encoder=encoder,
        decoder=decoder,
    )
    state.predictor = predictor_service.init_predictor(
        cfg.predictor,
        state.compressed_len,
        cfg.horizon,
        tau,
        cfg.seed,
        hidden_width=cfg.hidden_width,
    )
    return state


def compress_window(state: PipelineState, window) -> np.ndarray:
    """
    The single-channel series of a (rows, C) window: circular-key compression,
    or the linear encoder in the encoder ablations.
    """
    window = np.asarray(window, dtype=float)
    if state.encoder is not None:
        return window @ state.encoder.weight + state.encoder.bias[0]
    return codec_service.compress(window, state.keys, state.mode).y


def window_stats(state: PipelineState, y: np.ndarray) -> NormStats:
    if state.norm is not None:
        return state.norm
    return series_service.normalize(y)[1]


def fit_train_norm(state: PipelineState, windows: List[WindowPair]) -> NormStats:
    """
    One NormStats over every training window's compressed history, stored on the state.
    """
    if not windows:
        raise ArgumentException("Cannot fit normalization on zero windows")
    compressed = np.concatenate([compress_window(state, w.history) for w in windows])
    state.norm = series_service.normalize(compressed)[1]
    logger.debug(f"Fitted train-scope normalization: {state.norm}")
    return state.norm


def forward(state: PipelineState, history) -> ForwardCache:
    history = np.asarray(history, dtype=float)
    if history.shape != (state.lookback, state.n_channels):
        raise ArgumentException(
            f"Expected a ({state.lookback}, {state.n_channels}) history, got {history.shape}"
        )

    y = compress_window(state, history)
    stats = window_stats(state, y)
    y_hat_n, predictor_cache = predictor_service.predict_with_cache(
        state.predictor, series_service.apply_norm(y, stats)
    )
    y_hat = series_service.denormalize(y_hat_n, stats)

    energy = head_cache = residual = None
    n_keys = len(state.keys)
    if state.decoder is not None:
        x_hat = y_hat[:, None] * state.decoder.weight + state.decoder.bias
    else:
        decoded = codec_service.decode_channels(y_hat, state.keys, state.mode)
        energy = codec_service.kernel_energy(state.keys, state.mode, y_hat.size)
        z = codec_service.broadcast_decoded(decoded, energy, state.n_channels)
        if state.head is not None:
            x_hat, head_cache = codec_service.head_forward(z, state.head)
            residual = head_cache.residual
        else:
            x_hat = z

    return ForwardCache(
        history, stats, predictor_cache, y_hat_n, y_hat, n_keys, energy, head_cache, x_hat, residual
    )


def forecast(state: PipelineState, history) -> np.ndarray:
    """
    Inference path: the (H, C) forecast of the window following `history`.
    """
    return forward(state, history).x_hat


def latent_target(state: PipelineState, future, stats: NormStats) -> float:
    """phi_Y: mean of the normalized compressed ground-truth future window."""
    return float(np.mean(series_service.apply_norm(compress_window(state, future), stats)))


def loss(x_hat, x, residual_out, phi_y: float, phi_y_hat: float, alpha: float, beta: float):
    """
    Composite training loss.

    prediction = ||x_hat - x||^2 / (H * C)
    regulation = (sum |residual_out| - sum x_hat)^2, 0 when there is no residual
    latent = (phi_y - phi_y_hat)^2

    Raises:
        ArgumentException on shape mismatch.
        NumericException naming the first non-finite term.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x = np.asarray(x, dtype=float)
    if x_hat.shape != x.shape:
        raise ArgumentException(f"Forecast shape {x_hat.shape} does not match target {x.shape}")

    prediction = float(np.mean((x_hat - x) ** 2))
    if residual_out is None:
        regulation = 0.0
    else:
        residual_out = np.asarray(residual_out, dtype=float)
        if residual_out.shape != x.shape:
            raise ArgumentException(
                f"Residual shape {residual_out.shape} does not match target {x.shape}"
            )
        regulation = float((np.abs(residual_out).sum() - x_hat.sum()) ** 2)
    latent = float((phi_y - phi_y_hat) ** 2)

    for name, value in (("prediction", prediction), ("regulation", regulation), ("latent", latent)):
        if not np.isfinite(value):
            raise NumericException(f"Non-finite {name} loss term")

    return LossBreakdown(
        prediction=prediction,
        regulation=regulation,
        latent=latent,
        total=prediction + alpha * regulation + beta * latent,
    )


def grad(
    state: PipelineState, window: WindowPair, alpha: float, beta: float
) -> Tuple[LossBreakdown, Dict[str, np.ndarray]]:
    """
    Loss of one window and its gradient with respect to every trainable parameter.

    Required Args:
        state: Current pipeline.
        window: History and ground-truth future.
        alpha: Regulation weight.
        beta: Latent weight.

    Returns:
        (LossBreakdown, gradients keyed like state.parameters()).

    Raises:
        NumericException if any loss term is non-finite.
    """
    cache = forward(state, window.history)
    future = np.asarray(window.future, dtype=float)
    phi_y = latent_target(state, future, cache.stats)
    phi_y_hat = float(np.mean(cache.y_hat_n))
    breakdown = loss(cache.x_hat, future, cache.residual, phi_y, phi_y_hat, alpha, beta)

    grads: Dict[str, np.ndarray] = {}
    horizon, n_channels = future.shape

    grad_x_hat = 2.0 * (cache.x_hat - future) / (horizon * n_channels)
    grad_residual = None
    if cache.residual is not None:
        mass_gap = np.abs(cache.residual).sum() - cache.x_hat.sum()
        grad_x_hat = grad_x_hat - 2.0 * alpha * mass_gap
        grad_residual = 2.0 * alpha * mass_gap * np.sign(cache.residual)

    if state.decoder is not None:
        grads["decoder.linear.weight"] = cache.y_hat @ grad_x_hat
        grads["decoder.linear.bias"] = grad_x_hat.sum(axis=0)
        grad_y_hat = grad_x_hat @ state.decoder.weight
    else:
        if state.head is not None:
            head_grads, grad_z = codec_service.head_backward(
                cache.head, state.head, grad_x_hat, grad_residual
            )
            grads.update({f"head.{name}": g for name, g in head_grads.items()})
        else:
            grad_z = grad_x_hat
        if cache.n_keys == 1:
            grad_decoded = grad_z.sum(axis=1, keepdims=True) / cache.energy
        else:
            grad_decoded = grad_z / cache.energy
        grad_y_hat = codec_service.decode_adjoint(grad_decoded, state.keys, state.mode)

    latent_gap = phi_y_hat - phi_y
    grad_y_hat_n = grad_y_hat * cache.stats.std
    grad_y_hat_n = grad_y_hat_n + 2.0 * beta * latent_gap / grad_y_hat_n.size

    predictor_grads, grad_y_n = predictor_service.predict_backward(
        state.predictor, cache.predictor, grad_y_hat_n
    )
    grads.update({f"predictor.{name}": g for name, g in predictor_grads.items()})

    if state.encoder is not None:
        # y_n = (X w + b - mean) / std on the history and on the future behind phi_Y
        grad_y = grad_y_n / cache.stats.std
        grad_phi_y = -2.0 * beta * latent_gap / cache.stats.std
        grads["encoder.linear.weight"] = (
            cache.history.T @ grad_y + grad_phi_y * future.mean(axis=0)
        )
        grads["encoder.linear.bias"] = np.array([grad_y.sum() + grad_phi_y])

    return breakdown, grads


def evaluate_mse(state: PipelineState, windows: List[WindowPair]) -> float:
    """Mean of per-window MSE between forecast and future."""
    if not windows:
        raise ArgumentException("Cannot evaluate on zero windows")
    errors = [np.mean((forecast(state, w.history) - w.future) ** 2) for w in windows]
    return float(np.mean(errors))
