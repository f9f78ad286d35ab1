import dataclasses

import numpy as np
import pytest

from pcdf.service.exceptions import ArgumentException
from pcdf.service.key_service import (
    circulant_matrix,
    key_from_dict,
    key_to_dict,
    make_delta_key,
    make_key,
    make_key_set,
    make_orthogonal_key,
    make_random_key,
    tile_key,
)


@pytest.mark.parametrize("tau", [1, 2, 4, 12, 24, 30])
@pytest.mark.parametrize("seed", range(10))
def test_orthogonal_key_has_orthogonal_circulant(tau, seed):
    key = make_orthogonal_key(tau, seed)
    circulant = circulant_matrix(key.base)

    np.testing.assert_allclose(circulant.T @ circulant, np.eye(tau), atol=1e-10)
    assert abs(key.sum_sq - 1.0) < 1e-12
    assert np.all(np.isreal(key.base))


def test_orthogonal_key_spectrum_has_unit_modulus():
    key = make_orthogonal_key(24, 7)

    np.testing.assert_allclose(np.abs(np.fft.fft(key.base)), np.ones(24), atol=1e-10)


def test_orthogonal_key_is_deterministic():
    first = make_orthogonal_key(24, 3)
    second = make_orthogonal_key(24, 3)

    np.testing.assert_array_equal(first.base, second.base)
    assert not np.array_equal(first.base, make_orthogonal_key(24, 4).base)


@pytest.mark.parametrize("seed", range(5))
def test_bernoulli_key_has_unit_energy(seed):
    key = make_random_key(16, "bernoulli", seed)

    assert key.kind == "random-bernoulli"
    assert key.sum_sq == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.abs(key.base), 0.25)


def test_normal_key_energy_concentrates_near_one():
    energies = [make_random_key(256, "normal", seed).sum_sq for seed in range(50)]

    assert abs(np.mean(energies) - 1.0) < 0.05


def test_normal_key_circulant_is_not_orthogonal():
    key = make_random_key(24, "normal", 0)
    circulant = circulant_matrix(key.base)

    assert not np.allclose(circulant.T @ circulant, np.eye(24), atol=1e-3)


def test_random_key_rejects_unknown_distribution():
    with pytest.raises(ArgumentException):
        make_random_key(8, "uniform", 0)


def test_delta_key_is_identity():
    key = make_delta_key(5)

    np.testing.assert_array_equal(circulant_matrix(key.base), np.eye(5))
    assert key.seed is None


@pytest.mark.parametrize("tau", [0, -3])
def test_keys_reject_non_positive_tau(tau):
    with pytest.raises(ArgumentException):
        make_orthogonal_key(tau, 0)


@pytest.mark.parametrize(
    "kind, expected",
    [
        ("orthogonal", "seasonal-orthogonal"),
        ("random-normal", "random-normal"),
        ("random-bernoulli", "random-bernoulli"),
        ("delta", "delta"),
    ],
)
def test_make_key_accepts_config_spelling(kind, expected):
    assert make_key(kind, 6, 0).kind == expected


def test_make_key_unknown_kind():
    with pytest.raises(ArgumentException):
        make_key("hadamard", 6, 0)


def test_make_key_set_seeds_channels_in_order():
    keys = make_key_set("orthogonal", 8, 10, n_channels=3, per_channel=True)

    assert [k.seed for k in keys] == [10, 11, 12]
    assert len(make_key_set("orthogonal", 8, 10, n_channels=3)) == 1


def test_tile_key():
    np.testing.assert_array_equal(tile_key([1.0, 2.0, 3.0], 7), [1, 2, 3, 1, 2, 3, 1])
    with pytest.raises(ArgumentException):
        tile_key([1.0], 0)


def test_key_base_is_read_only():
    key = make_orthogonal_key(4, 0)

    with pytest.raises(ValueError):
        key.base[0] = 1.0


def test_key_sidecar_round_trip():
    key = make_orthogonal_key(12, 5)

    loaded = key_from_dict(key_to_dict(key))

    np.testing.assert_array_equal(loaded.base, key.base)
    assert (loaded.kind, loaded.seed, loaded.sum_sq) == (key.kind, key.seed, key.sum_sq)


@pytest.mark.parametrize("kind", ["orthogonal", "random-normal", "delta"])
def test_key_sidecar_covers_every_key_field(kind):
    key = make_key(kind, 6, 3)

    field_names = {f.name for f in dataclasses.fields(key)}

    assert field_names == {"base", "kind", "seed", "sum_sq"}
    assert set(key_to_dict(key)) == field_names | {"tau"}


def test_key_sidecar_rejects_wrong_length():
    data = key_to_dict(make_orthogonal_key(4, 0))
    data["tau"] = 5

    with pytest.raises(ArgumentException):
        key_from_dict(data)
