import logging
from typing import Dict, List

import numpy as np

from pcdf.models import PipelineState, WindowPair
from pcdf.service import pipeline_service
from pcdf.service.dtos import TrainConfig
from pcdf.service.exceptions import (
    ArgumentException,
    NumericException,
    TrainingDivergedException,
)
from pcdf.service.predictor_service import clip_groups

logger = logging.getLogger(__name__)


def clip_gradient(g, w, clip_alpha: float) -> np.ndarray:
    """
    Scale-invariant clipping: g * min(1, clip_alpha * ||w|| / ||g||).

    Notes:
        - A zero gradient is returned unchanged.
        - A zero weight vector bounds the gradient at 0.
        - A gradient already inside the bound is returned as is.
    """
    g = np.asarray(g, dtype=float)
    w = np.asarray(w, dtype=float)
    if g.shape != w.shape:
        raise ArgumentException(f"Gradient shape {g.shape} does not match weights {w.shape}")

    g_norm = np.linalg.norm(g)
    if g_norm == 0.0:
        return g
    bound = clip_alpha * np.linalg.norm(w)
    if g_norm <= bound:
        return g
    return g * (bound / g_norm)


def _apply_update(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], cfg: TrainConfig):
    for names in clip_groups(list(params)).values():
        g = np.concatenate([grads[name].ravel() for name in names])
        w = np.concatenate([params[name].ravel() for name in names])
        clipped = clip_gradient(g, w, cfg.clip_alpha)

        offset = 0
        for name in names:
            size = params[name].size
            params[name] -= cfg.lr * clipped[offset : offset + size].reshape(params[name].shape)
            offset += size


def train(state: PipelineState, windows: List[WindowPair], cfg: TrainConfig):
    """
    Mini-batch gradient descent over the trainable parameters of `state`.

    Required Args:
        state: Pipeline to train; its parameters are updated in place.
        windows: Training windows.
        cfg: TrainConfig.

    Returns:
        (predictor, head, history) where history holds one entry per epoch
        with the mean loss terms over the windows seen in that epoch.

    Raises:
        ArgumentException if windows is empty.
        TrainingDivergedException when a loss or a parameter becomes
        non-finite, carrying the epoch and the history up to the last
        finite epoch.

    Notes:
        Each epoch visits the windows in a seeded permutation; within a batch
        gradients are accumulated in that order, averaged, clipped per layer
        and applied.
    """
    if not windows:
        raise ArgumentException("Training needs at least one window")

    if cfg.norm_scope == "train" and state.norm is None:
        pipeline_service.fit_train_norm(state, windows)

    rng = np.random.default_rng(cfg.seed)
    params = state.parameters()
    history = []

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(windows))
        sums = {"total": 0.0, "prediction": 0.0, "regulation": 0.0, "latent": 0.0}

        try:
            for start in range(0, len(order), cfg.batch):
                batch = order[start : start + cfg.batch]
                accumulated = {name: np.zeros_like(value) for name, value in params.items()}

                for index in batch:
                    breakdown, grads = pipeline_service.grad(
                        state, windows[index], cfg.alpha, cfg.beta
                    )
                    for name, g in grads.items():
                        accumulated[name] += g
                    for term in sums:
                        sums[term] += getattr(breakdown, term)

                for name in accumulated:
                    accumulated[name] /= len(batch)
                _apply_update(params, accumulated, cfg)
                state.check_finite()
        except NumericException as e:
            logger.error(f"Training diverged in epoch {epoch}: {e}")
            raise TrainingDivergedException(str(e), epoch=epoch, history=history)

        entry = {"epoch": epoch}
        entry.update({term: value / len(windows) for term, value in sums.items()})
        if not np.isfinite(entry["total"]):
            logger.error(f"Training diverged in epoch {epoch}: loss {entry['total']}")
            raise TrainingDivergedException(
                f"Non-finite loss in epoch {epoch}", epoch=epoch, history=history
            )
        history.append(entry)
        logger.debug(f"epoch {epoch}: loss={entry['total']:.6g} mse={entry['prediction']:.6g}")

    return state.predictor, state.head, history
