import numpy as np
import pytest

from pcdf.models import CompressedSeries, NormStats
from pcdf.service.codec_service import (
    broadcast_decoded,
    compress,
    compress_dense,
    compress_sparse,
    correlate_channel,
    decode,
    decode_adjoint,
    decode_channels,
    deserialize_compressed,
    encode_channel,
    head_forward,
    interference_estimate,
    kernel_energy,
    reconstruct,
    serialize_compressed,
)
from pcdf.service.exceptions import AlignmentException, ArgumentException, NumericException
from pcdf.service.key_service import (
    make_delta_key,
    make_key_set,
    make_orthogonal_key,
    make_random_key,
    tile_key,
)
from pcdf.service.predictor_service import init_head
from pcdf.service.spectral_service import predictability_score


def _convolve(x, k):
    n = len(x)
    return np.array([sum(x[z] * k[(t - z) % n] for z in range(n)) for t in range(n)])


def _correlate(y, k):
    n = len(y)
    return np.array([sum(y[z] * k[(z - t) % n] for z in range(n)) for t in range(n)])


def _sparse_oracle(X, base):
    tau = len(base)
    segments = X.shape[0] // tau
    y = np.zeros(segments * tau)
    for m in range(segments):
        for c in range(X.shape[1]):
            y[m * tau : (m + 1) * tau] += _convolve(X[m * tau : (m + 1) * tau, c], base)
    return y


def _head_oracle(z, head):
    """Straight-line loops over time, channels and taps."""
    steps = z.shape[0]
    width = head.kernel_width
    pad = width // 2

    def conv(inputs, weight, bias):
        out = np.zeros((steps, weight.shape[0]))
        for t in range(steps):
            for o in range(weight.shape[0]):
                total = bias[o]
                for c in range(weight.shape[1]):
                    for j in range(width):
                        s = t + j - pad
                        if 0 <= s < steps:
                            total += weight[o, c, j] * inputs[s, c]
                out[t, o] = total
        return out

    hidden = np.maximum(conv(z, head.conv1_weight, head.conv1_bias), 0.0)
    corrected = z + conv(hidden, head.conv2_weight, head.conv2_bias)
    return np.array([head.dense_weight @ row + head.dense_bias for row in corrected])


def test_encode_channel_hand_example():
    np.testing.assert_allclose(encode_channel([1, 2, 3, 4], [1, 0, 1, 0]), [4, 6, 4, 6])


def test_encode_channel_with_delta_is_identity(rng):
    x = rng.normal(size=9)

    np.testing.assert_allclose(encode_channel(x, make_delta_key(9).base), x, atol=1e-12)


def test_encode_channel_matches_double_sum(rng):
    for _ in range(200):
        n = int(rng.integers(1, 33))
        x, k = rng.normal(size=n), rng.normal(size=n)

        np.testing.assert_allclose(encode_channel(x, k), _convolve(x, k), atol=1e-9)
        np.testing.assert_allclose(correlate_channel(x, k), _correlate(x, k), atol=1e-9)


def test_encode_channel_is_shift_equivariant(rng):
    x, k = rng.normal(size=8), rng.normal(size=8)

    np.testing.assert_allclose(
        encode_channel(np.roll(x, 1), k), np.roll(encode_channel(x, k), 1), atol=1e-12
    )


def test_correlate_channel_is_adjoint_of_encode(rng):
    x, y, k = rng.normal(size=(3, 16))

    assert encode_channel(x, k) @ y == pytest.approx(x @ correlate_channel(y, k))


def test_encode_channel_length_mismatch():
    with pytest.raises(ArgumentException):
        encode_channel([1.0, 2.0, 3.0], [1.0, 0.0])


def test_compress_dense_single_channel_delta(rng):
    X = rng.normal(size=(12, 1))

    compressed = compress_dense(X, make_delta_key(12))

    np.testing.assert_allclose(compressed.y, X[:, 0], atol=1e-12)
    assert (compressed.mode, compressed.tau, compressed.n_channels) == ("dense", 12, 1)


def test_compress_dense_cancels_opposite_channels(rng):
    x = rng.normal(size=10)

    compressed = compress_dense(np.column_stack([x, -x]), make_orthogonal_key(5, 0))

    np.testing.assert_allclose(compressed.y, np.zeros(10), atol=1e-12)


def test_compress_dense_matches_oracle(rng):
    X = rng.normal(size=(8, 3))
    key = make_orthogonal_key(4, 11)
    tiled = tile_key(key.base, 8)

    expected = sum(_convolve(X[:, c], tiled) for c in range(3))

    np.testing.assert_allclose(compress_dense(X, key).y, expected, atol=1e-10)


def test_compress_dense_per_channel_keys(rng):
    X = rng.normal(size=(8, 3))
    keys = make_key_set("orthogonal", 4, 0, n_channels=3, per_channel=True)

    expected = sum(_convolve(X[:, c], tile_key(keys[c].base, 8)) for c in range(3))

    np.testing.assert_allclose(compress_dense(X, keys).y, expected, atol=1e-10)


def test_compress_rejects_key_count_mismatch(rng):
    keys = make_key_set("orthogonal", 4, 0, n_channels=2, per_channel=True)

    with pytest.raises(ArgumentException):
        compress_dense(rng.normal(size=(8, 3)), keys)


def test_compress_sparse_delta_per_segment():
    compressed = compress_sparse(np.array([[1.0], [2.0], [3.0], [4.0]]), make_delta_key(2))

    np.testing.assert_allclose(compressed.y, [1, 2, 3, 4], atol=1e-12)


def test_compress_sparse_drops_tail(rng):
    compressed = compress_sparse(rng.normal(size=(5, 2)), make_orthogonal_key(2, 0))

    assert compressed.y.size == 4
    assert compressed.mode == "sparse"


def test_compress_sparse_matches_oracle(rng):
    X = rng.normal(size=(8, 2))
    key = make_orthogonal_key(4, 3)

    np.testing.assert_allclose(compress_sparse(X, key).y, _sparse_oracle(X, key.base), atol=1e-10)


def test_compress_sparse_rejects_long_key(rng):
    with pytest.raises(ArgumentException):
        compress_sparse(rng.normal(size=(4, 2)), make_orthogonal_key(6, 0))


def test_compress_rejects_unknown_mode(rng):
    with pytest.raises(ArgumentException):
        compress(rng.normal(size=(8, 2)), make_orthogonal_key(4, 0), "banded")


@pytest.mark.parametrize("mode", ["dense", "sparse"])
def test_decode_with_delta_is_identity(mode, rng):
    y = rng.normal(size=12)

    np.testing.assert_allclose(decode(y, make_delta_key(12 if mode == "dense" else 4), mode), y)


def test_decode_dense_matches_correlation_oracle(rng):
    y = rng.normal(size=10)
    key = make_orthogonal_key(5, 2)

    np.testing.assert_allclose(
        decode(y, key, "dense"), _correlate(y, tile_key(key.base, 10)), atol=1e-10
    )


def test_decode_sparse_requires_aligned_horizon(rng):
    with pytest.raises(AlignmentException) as e:
        decode(rng.normal(size=10), make_orthogonal_key(4, 0), "sparse")

    assert "multiple of 4" in str(e.value)


def test_orthogonal_sparse_round_trip_recovers_channel_sum(rng):
    for _ in range(100):
        tau = int(rng.integers(1, 9))
        segments = int(rng.integers(1, 5))
        X = rng.normal(size=(tau * segments, int(rng.integers(1, 6))))
        key = make_orthogonal_key(tau, int(rng.integers(1000)))

        decoded = decode(compress_sparse(X, key).y, key, "sparse")

        np.testing.assert_allclose(decoded / key.sum_sq, X.sum(axis=1), atol=1e-8)


def test_random_keys_leave_crosstalk(rng):
    failures = 0
    for seed in range(100):
        X = rng.normal(size=(16, 3))
        key = make_random_key(8, "normal", seed)

        decoded = decode(compress_sparse(X, key).y, key, "sparse")
        if not np.allclose(decoded / key.sum_sq, X.sum(axis=1), atol=1e-8):
            failures += 1

    assert failures >= 95


@pytest.mark.parametrize("n_channels", [1, 4, 16])
@pytest.mark.parametrize("tau", [4, 12, 24])
def test_dense_compression_of_periodic_channels_is_periodic(tau, n_channels):
    for seed in range(6):
        rng = np.random.default_rng(seed)
        blocks = rng.normal(size=(tau, n_channels))
        X = np.tile(blocks, (4, 1))
        key = make_orthogonal_key(tau, seed)

        y = compress_dense(X, key).y

        assert predictability_score(y, tau) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("mode", ["dense", "sparse"])
def test_decode_adjoint_is_adjoint_of_decode(mode, rng):
    keys = make_key_set("orthogonal", 4, 5, n_channels=3, per_channel=True)
    y = rng.normal(size=12)
    grad = rng.normal(size=(12, 3))

    lhs = np.sum(decode_channels(y, keys, mode) * grad)

    assert lhs == pytest.approx(y @ decode_adjoint(grad, keys, mode))


def test_kernel_energy_per_mode():
    key = make_random_key(4, "normal", 0)

    assert kernel_energy(key, "sparse", 12)[0] == pytest.approx(key.sum_sq)
    assert kernel_energy(key, "dense", 12)[0] == pytest.approx(3 * key.sum_sq)


def test_interference_vanishes_for_orthogonal_sparse(rng):
    X = rng.normal(size=(24, 4))

    eta = interference_estimate(X, make_orthogonal_key(6, 1), mode="sparse")

    np.testing.assert_allclose(eta, np.zeros(24), atol=1e-8)


def test_interference_vanishes_for_delta(rng):
    X = rng.normal(size=(16, 3))

    np.testing.assert_allclose(interference_estimate(X, make_delta_key(16)), 0.0, atol=1e-12)


def test_interference_of_random_key(rng):
    X = rng.normal(size=(64, 1))

    eta = interference_estimate(X, make_random_key(64, "normal", 0))

    assert np.linalg.norm(eta) > 0


def test_interference_reference_differs_only_for_tiled_dense_keys(rng):
    X = rng.normal(size=(12, 3))
    key = make_orthogonal_key(4, 2)

    applied = interference_estimate(X, key, mode="dense")
    base = interference_estimate(X, key, mode="dense", reference="base")

    # the tiled kernel carries 3 periods, i.e. 3 * sum(k^2)
    np.testing.assert_allclose(base - applied, 2 * key.sum_sq * X.sum(axis=1), atol=1e-10)
    np.testing.assert_allclose(
        interference_estimate(X, key, mode="sparse", reference="base"),
        interference_estimate(X, key, mode="sparse"),
        atol=1e-12,
    )


def test_interference_unknown_reference(rng):
    with pytest.raises(ArgumentException):
        interference_estimate(rng.normal(size=(8, 1)), make_delta_key(8), reference="tiled")


def test_interference_needs_shared_key(rng):
    keys = make_key_set("orthogonal", 4, 0, n_channels=2, per_channel=True)

    with pytest.raises(ArgumentException):
        interference_estimate(rng.normal(size=(8, 2)), keys)


def test_reconstruct_degenerate_head_broadcasts(rng):
    head = init_head(3, 0)
    head.conv1_weight[:] = 0.0
    head.conv2_weight[:] = 0.0
    x_tilde = rng.normal(size=8)

    out = reconstruct(x_tilde, head, 3, 2.0)

    np.testing.assert_allclose(out, np.tile(x_tilde[:, None] / 2.0, (1, 3)))


def test_reconstruct_zero_input_is_zero():
    out = reconstruct(np.zeros(6), init_head(4, 7), 4, 1.0)

    np.testing.assert_array_equal(out, np.zeros((6, 4)))


def test_head_matches_loop_implementation(rng):
    head = init_head(3, 2)
    for value in head.parameters().values():
        value[...] = rng.normal(size=value.shape)
    z = rng.normal(size=(7, 3))

    out, cache = head_forward(z, head)

    np.testing.assert_allclose(out, _head_oracle(z, head), atol=1e-10)
    np.testing.assert_allclose(cache.residual, cache.corrected - z, atol=1e-12)


def test_reconstruct_rejects_non_finite_head():
    head = init_head(2, 0)
    head.dense_bias[0] = np.nan

    with pytest.raises(NumericException):
        reconstruct(np.ones(4), head, 2, 1.0)


def test_broadcast_rejects_zero_energy():
    with pytest.raises(ArgumentException):
        broadcast_decoded(np.ones(4), 0.0, 2)


def test_serialized_payload_layout(rng):
    compressed = CompressedSeries(
        y=rng.normal(size=24), mode="sparse", tau=12, norm=NormStats(0.5, 2.0), n_channels=7
    )

    payload = serialize_compressed(compressed)
    header, body = payload.split(b"\n", 1)
    loaded = deserialize_compressed(payload)

    assert len(body) == 24 * 8
    assert b'"tau": 12' in header
    np.testing.assert_array_equal(loaded.y, compressed.y)
    assert loaded.norm == compressed.norm
    assert (loaded.mode, loaded.tau, loaded.n_channels) == ("sparse", 12, 7)


def test_deserialize_rejects_truncated_payload(rng):
    compressed = CompressedSeries(y=rng.normal(size=4), mode="dense", tau=2)

    with pytest.raises(ArgumentException):
        deserialize_compressed(serialize_compressed(compressed)[:-8])
