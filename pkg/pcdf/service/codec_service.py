import json
from dataclasses import asdict
from typing import List, NamedTuple, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sp_fft

from pcdf.models import CircularKey, CompressedSeries, NormStats, ReconstructionHead
from pcdf.service.exceptions import AlignmentException, ArgumentException
from pcdf.service.key_service import tile_key

MODES = ("dense", "sparse")

Keys = Union[CircularKey, Sequence[CircularKey]]


def _key_list(keys: Keys, n_channels: int = None) -> List[CircularKey]:
    keys = [keys] if isinstance(keys, CircularKey) else list(keys)
    if not keys:
        raise ArgumentException("At least one key is required")
    if len({key.tau for key in keys}) != 1:
        raise ArgumentException("All keys of a key set must share the same tau")
    if n_channels is not None and len(keys) not in (1, n_channels):
        raise ArgumentException(f"{len(keys)} keys for {n_channels} channels")
    return keys


def _check_mode(mode: str):
    if mode not in MODES:
        raise ArgumentException(f"Unknown codec mode {mode!r}; expected one of {MODES}")


def _circular(x: np.ndarray, kernel: np.ndarray, correlate: bool = False) -> np.ndarray:
    """
    Circular convolution (or correlation) along axis 0, broadcasting other axes.
    """
    kernel_spectrum = sp_fft.fft(kernel, axis=0)
    if correlate:
        kernel_spectrum = np.conj(kernel_spectrum)
    return np.real(sp_fft.ifft(sp_fft.fft(x, axis=0) * kernel_spectrum, axis=0))


def encode_channel(x, key) -> np.ndarray:
    """
    Circular convolution y_t = sum_z x_z k_{(t - z) mod n}.
    """
    x = np.asarray(x, dtype=float)
    key = np.asarray(key, dtype=float)
    if x.shape != key.shape or x.ndim != 1:
        raise ArgumentException(
            f"encode_channel needs equal-length vectors, got {x.shape}, {key.shape}"
        )
    return _circular(x, key)


def correlate_channel(y, key) -> np.ndarray:
    """
    Circular correlation x_t = sum_z y_z k_{(z - t) mod n}, the adjoint of `encode_channel`.
    """
    y = np.asarray(y, dtype=float)
    key = np.asarray(key, dtype=float)
    if y.shape != key.shape or y.ndim != 1:
        raise ArgumentException(
            f"correlate_channel needs equal-length vectors, got {y.shape}, {key.shape}"
        )
    return _circular(y, key, correlate=True)


def _dense_kernels(keys: List[CircularKey], length: int) -> np.ndarray:
    return np.stack([tile_key(key.base, length) for key in keys], axis=1)


def _segment_kernels(keys: List[CircularKey]) -> np.ndarray:
    # (tau, 1, K) so it broadcasts over segments
    return np.stack([key.base for key in keys], axis=1)[:, None, :]


def compress_dense(X, keys: Keys) -> CompressedSeries:
    """
    Encode every channel over the full window with the tiled key and sum the channels.

    Required Args:
        X: (L, C) history window.
        keys: One shared CircularKey, or one per channel.

    Returns:
        A dense CompressedSeries of length L.
    """
    X = np.asarray(X, dtype=float)
    length, n_channels = X.shape
    keys = _key_list(keys, n_channels)

    encoded = _circular(X, _dense_kernels(keys, length))
    return CompressedSeries(
        y=encoded.sum(axis=1), mode="dense", tau=keys[0].tau, n_channels=n_channels
    )


def compress_sparse(X, keys: Keys) -> CompressedSeries:
    """
    Encode each complete length-tau segment of every channel with the base
    key, keep segments in time order and sum over channels.

    A tail shorter than tau is dropped, so the output has floor(L / tau) * tau samples.

    Raises:
        ArgumentException if tau > L.
    """
    X = np.asarray(X, dtype=float)
    length, n_channels = X.shape
    keys = _key_list(keys, n_channels)
    tau = keys[0].tau
    if tau > length:
        raise ArgumentException(f"Sparse compression needs tau <= L (tau={tau}, L={length})")

    segments = length // tau
    # (M, tau, C) -> (tau, M, C) so the transform runs along axis 0
    blocks = X[: segments * tau].reshape(segments, tau, n_channels).transpose(1, 0, 2)
    encoded = _circular(blocks, _segment_kernels(keys)).sum(axis=2)
    return CompressedSeries(
        y=encoded.T.reshape(segments * tau), mode="sparse", tau=tau, n_channels=n_channels
    )


def compress(X, keys: Keys, mode: str) -> CompressedSeries:
    _check_mode(mode)
    if mode == "sparse":
        return compress_sparse(X, keys)
    return compress_dense(X, keys)


def _check_alignment(length: int, tau: int):
    if length % tau:
        raise AlignmentException(
            f"Sparse decoding needs a horizon that is a multiple of tau; got H={length}, "
            f"tau={tau}. Choose H as a multiple of {tau}."
        )


def decode_channels(y_hat, keys: Keys, mode: str) -> np.ndarray:
    """
    Decode a predicted single-channel sequence with every key of a key set.

    Returns:
        (h, K) matrix, one column per key.
    """
    _check_mode(mode)
    y_hat = np.asarray(y_hat, dtype=float)
    keys = _key_list(keys)
    length = y_hat.size

    if mode == "dense":
        return _circular(y_hat[:, None], _dense_kernels(keys, length), correlate=True)

    tau = keys[0].tau
    _check_alignment(length, tau)
    blocks = y_hat.reshape(length // tau, tau).T[:, :, None]
    decoded = _circular(blocks, _segment_kernels(keys), correlate=True)
    return decoded.transpose(1, 0, 2).reshape(length, len(keys))


def decode(y_hat, key: CircularKey, mode: str) -> np.ndarray:
    """
    Circular-correlation decoding of a predicted compressed sequence.

    sparse: each length-tau block b maps to C^T b, C the base-key circulant.
    dense: x_t = sum_z y_z k_{(z - t) mod h} with the key tiled to h.

    Raises:
        AlignmentException in sparse mode when h is not a multiple of tau.
    """
    return decode_channels(y_hat, key, mode)[:, 0]


def decode_adjoint(grad_decoded, keys: Keys, mode: str) -> np.ndarray:
    """
    Pull a (h, K) gradient on the decoded channels back to the (h,) predicted sequence.
    """
    grad_decoded = np.asarray(grad_decoded, dtype=float)
    keys = _key_list(keys)
    length = grad_decoded.shape[0]

    if mode == "dense":
        return _circular(grad_decoded, _dense_kernels(keys, length)).sum(axis=1)

    tau = keys[0].tau
    _check_alignment(length, tau)
    blocks = grad_decoded.reshape(length // tau, tau, len(keys)).transpose(1, 0, 2)
    pulled = _circular(blocks, _segment_kernels(keys)).sum(axis=2)
    return pulled.T.reshape(length)


def kernel_energy(keys: Keys, mode: str, length: int) -> np.ndarray:
    """
    Sum of squares of the kernel each key actually applies.

    sparse applies the base key, dense the key tiled to `length`.
    """
    keys = _key_list(keys)
    if mode == "sparse":
        return np.array([key.sum_sq for key in keys])
    return np.array([float(np.sum(tile_key(key.base, length) ** 2)) for key in keys])


def interference_estimate(
    X, keys: Keys, mode: str = "dense", reference: str = "applied"
) -> np.ndarray:
    """
    Residue of decoding a compressed window against the scaled channel sum:
    eta_t = decode(compress(X))_t - E * sum_c x_t^c.

    Zero for orthogonal keys in sparse mode; random keys leave the HRR
    crosstalk term.

    Required Args:
        X: (L, C) window.
        keys: One shared key.
        mode: "dense" or "sparse".
        reference: "applied" takes E = kernel_energy, the energy of the kernel
                   the mode applies. "base" takes E = sum(k^2) of one period.

    Notes:
        - The two references agree in sparse mode. In dense mode with tau < L
          the kernel is the key tiled to L samples, so "base" leaves the
          energy of the extra periods in eta.
    """
    if reference not in ("applied", "base"):
        raise ArgumentException(f"Unknown interference reference {reference!r}")
    X = np.asarray(X, dtype=float)
    keys = _key_list(keys, X.shape[1])
    if len(keys) != 1:
        raise ArgumentException("interference_estimate needs one shared key")

    compressed = compress(X, keys, mode)
    length = compressed.y.size
    decoded = decode(compressed.y, keys[0], mode)
    if reference == "base":
        energy = keys[0].sum_sq
    else:
        energy = kernel_energy(keys, mode, length)[0]
    return decoded - energy * X[:length].sum(axis=1)


class HeadCache(NamedTuple):
    z: np.ndarray
    windows1: np.ndarray
    pre_activation: np.ndarray
    hidden: np.ndarray
    windows2: np.ndarray
    residual: np.ndarray
    corrected: np.ndarray


def _conv1d(inputs: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """
    Same-length 1-D convolution along time with zero padding.

    inputs is (T, C_in), weight (C_out, C_in, w); returns (T, C_out) and the
    (T, C_in, w) input windows needed for the backward pass.
    """
    width = weight.shape[2]
    pad = width // 2
    padded = np.pad(inputs, ((pad, width - 1 - pad), (0, 0)))
    windows = sliding_window_view(padded, width, axis=0)
    return np.einsum("tcj,ocj->to", windows, weight) + bias, windows


def _conv1d_backward(grad_out: np.ndarray, windows: np.ndarray, weight: np.ndarray):
    steps = grad_out.shape[0]
    width = weight.shape[2]
    pad = width // 2

    grad_weight = np.einsum("tcj,to->ocj", windows, grad_out)
    grad_bias = grad_out.sum(axis=0)
    grad_windows = np.einsum("to,ocj->tcj", grad_out, weight)

    grad_padded = np.zeros((steps + width - 1, weight.shape[1]))
    for j in range(width):
        grad_padded[j : j + steps] += grad_windows[:, :, j]
    return grad_weight, grad_bias, grad_padded[pad : pad + steps]


def head_forward(z: np.ndarray, head: ReconstructionHead):
    """
    Dense(Z + Residual(Z)) with Residual = conv2(ReLU(conv1(Z))).

    Returns:
        The (H, C) reconstruction and a HeadCache for `head_backward`.
    """
    pre_activation, windows1 = _conv1d(z, head.conv1_weight, head.conv1_bias)
    hidden = np.maximum(pre_activation, 0.0)
    residual, windows2 = _conv1d(hidden, head.conv2_weight, head.conv2_bias)
    corrected = z + residual
    out = corrected @ head.dense_weight.T + head.dense_bias
    return out, HeadCache(z, windows1, pre_activation, hidden, windows2, residual, corrected)


def head_backward(cache: HeadCache, head: ReconstructionHead, grad_out, grad_residual=None):
    """
    Reverse pass through the reconstruction head.

    Required Args:
        cache: HeadCache from `head_forward`.
        grad_out: dLoss/dOutput, (H, C).
        grad_residual: extra dLoss/dResidual from loss terms on the residual, or None.

    Returns:
        (dict of parameter gradients keyed like head.parameters(), dLoss/dZ).
    """
    grads = {
        "dense.weight": grad_out.T @ cache.corrected,
        "dense.bias": grad_out.sum(axis=0),
    }
    grad_corrected = grad_out @ head.dense_weight
    grad_res = grad_corrected if grad_residual is None else grad_corrected + grad_residual

    grads["conv2.weight"], grads["conv2.bias"], grad_hidden = _conv1d_backward(
        grad_res, cache.windows2, head.conv2_weight
    )
    grad_pre = grad_hidden * (cache.pre_activation > 0)
    grads["conv1.weight"], grads["conv1.bias"], grad_z = _conv1d_backward(
        grad_pre, cache.windows1, head.conv1_weight
    )
    return grads, grad_corrected + grad_z


def broadcast_decoded(decoded, energy, n_channels: int) -> np.ndarray:
    """
    Copy(x) / sum(k^2): scale decoded columns and spread them over C channels.
    """
    decoded = np.asarray(decoded, dtype=float)
    if decoded.ndim == 1:
        decoded = decoded[:, None]
    energy = np.atleast_1d(np.asarray(energy, dtype=float))
    if np.any(energy <= 0):
        raise ArgumentException("Key energy sum(k^2) must be positive")
    return np.broadcast_to(decoded / energy, (decoded.shape[0], n_channels)).copy()


def reconstruct(x_tilde, head: ReconstructionHead, n_channels: int, sum_sq) -> np.ndarray:
    """
    Decompress a decoded sequence back to H x C.

    output = Dense(Z + Residual(Z)) with Z = Copy(x_tilde) / sum_sq.

    Raises:
        ArgumentException if sum_sq <= 0.
        NumericException if the head holds non-finite parameters.
    """
    head.check_finite("head")
    z = broadcast_decoded(x_tilde, sum_sq, n_channels)
    out, _ = head_forward(z, head)
    return out


def serialize_compressed(compressed: CompressedSeries) -> bytes:
    """
    Edge -> cloud payload: one JSON header line, then little-endian float64 samples.
    """
    header = {
        "mode": compressed.mode,
        "tau": compressed.tau,
        "length": int(compressed.y.size),
        "n_channels": compressed.n_channels,
        "norm": asdict(compressed.norm) if compressed.norm is not None else None,
    }
    payload = compressed.y.astype("<f8").tobytes()
    return json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def deserialize_compressed(payload: bytes) -> CompressedSeries:
    header_line, body = payload.split(b"\n", 1)
    header = json.loads(header_line)
    y = np.frombuffer(body, dtype="<f8").astype(float)
    if y.size != header["length"]:
        raise ArgumentException(f"Payload declares {header['length']} samples, carries {y.size}")
    norm = NormStats(**header["norm"]) if header["norm"] is not None else None
    return CompressedSeries(
        y=y, mode=header["mode"], tau=header["tau"], norm=norm, n_channels=header["n_channels"]
    )
