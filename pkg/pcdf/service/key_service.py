from typing import List, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg

from pcdf.models import CircularKey
from pcdf.service.exceptions import ArgumentException, NumericException

KEY_KINDS = ("seasonal-orthogonal", "random-normal", "random-bernoulli", "delta")

# Config spelling -> key kind
KEY_ALIASES = {
    "orthogonal": "seasonal-orthogonal",
    "seasonal-orthogonal": "seasonal-orthogonal",
    "random-normal": "random-normal",
    "random-bernoulli": "random-bernoulli",
    "delta": "delta",
}

IMAGINARY_RESIDUE = 1e-10


def _check_tau(tau: int):
    if int(tau) < 1:
        raise ArgumentException(f"Key length tau must be >= 1, got {tau}")


def make_orthogonal_key(tau: int, seed: int) -> CircularKey:
    """
    Build a real key whose tau x tau circulant is orthogonal.

    The spectrum is drawn with unit modulus: random phases on the positive
    frequencies, their conjugates on the negative ones, and +-1 on the DC
    (and, for even tau, Nyquist) bins. The inverse transform of a
    conjugate-symmetric unit-modulus spectrum is real and has sum of squares 1.
    """
    _check_tau(tau)
    rng = np.random.default_rng(seed)

    spectrum = np.empty(tau, dtype=complex)
    spectrum[0] = rng.choice([-1.0, 1.0])
    half = (tau - 1) // 2
    phases = rng.uniform(0.0, 2.0 * np.pi, size=half)
    spectrum[1 : half + 1] = np.exp(1j * phases)
    spectrum[tau - half :] = np.conj(spectrum[1 : half + 1])[::-1]
    if tau % 2 == 0:
        spectrum[tau // 2] = rng.choice([-1.0, 1.0])

    base = sp_fft.ifft(spectrum)
    if np.max(np.abs(base.imag), initial=0.0) > IMAGINARY_RESIDUE:
        raise NumericException("Orthogonal key construction left an imaginary residue")
    base = base.real

    return CircularKey(
        base=base,
        kind="seasonal-orthogonal",
        seed=seed,
        sum_sq=float(base @ base),
    )


def make_random_key(tau: int, dist: str, seed: int) -> CircularKey:
    """
    Build an HRR-style random key.

    normal draws i.i.d. N(0, 1/tau) entries; bernoulli draws +-1/sqrt(tau)
    with equal probability. sum_sq is whatever the draw gives.
    """
    _check_tau(tau)
    rng = np.random.default_rng(seed)

    if dist == "normal":
        base = rng.normal(0.0, 1.0 / np.sqrt(tau), size=tau)
    elif dist == "bernoulli":
        base = rng.choice([-1.0, 1.0], size=tau) / np.sqrt(tau)
    else:
        raise ArgumentException(f"Unknown random key distribution {dist!r}")

    return CircularKey(base=base, kind=f"random-{dist}", seed=seed, sum_sq=float(base @ base))


def make_delta_key(tau: int) -> CircularKey:
    _check_tau(tau)
    base = np.zeros(tau)
    base[0] = 1.0
    return CircularKey(base=base, kind="delta", seed=None, sum_sq=1.0)


def make_key(kind: str, tau: int, seed: int) -> CircularKey:
    """
    Build a key of any supported kind; kind may use the config spelling.
    """
    kind = KEY_ALIASES.get(kind, kind)
    if kind == "seasonal-orthogonal":
        return make_orthogonal_key(tau, seed)
    if kind == "random-normal":
        return make_random_key(tau, "normal", seed)
    if kind == "random-bernoulli":
        return make_random_key(tau, "bernoulli", seed)
    if kind == "delta":
        return make_delta_key(tau)
    raise ArgumentException(f"Unknown key kind {kind!r}")


def make_key_set(
    kind: str, tau: int, seed: int, n_channels: int, per_channel: bool = False
) -> List[CircularKey]:
    """
    One shared key, or one key per channel seeded seed, seed + 1, ... in channel order.
    """
    if not per_channel:
        return [make_key(kind, tau, seed)]
    return [make_key(kind, tau, seed + i) for i in range(n_channels)]


def tile_key(base, length: int) -> np.ndarray:
    """
    Repeat a length-tau base key to `length` samples: k_t = base[t mod tau].
    """
    base = np.asarray(base, dtype=float)
    if length < 1:
        raise ArgumentException(f"Tiled key length must be >= 1, got {length}")
    return np.resize(base, length)


def circulant_matrix(base) -> np.ndarray:
    """
    The tau x tau matrix C with C @ x equal to the circular convolution x * base.
    """
    return linalg.circulant(np.asarray(base, dtype=float))


def key_to_dict(key: CircularKey) -> dict:
    return {
        "tau": key.tau,
        "kind": key.kind,
        "seed": key.seed,
        "sum_sq": key.sum_sq,
        "base": [float(v) for v in key.base],
    }


def key_from_dict(data: dict) -> CircularKey:
    base = np.asarray(data["base"], dtype=float)
    if base.size != int(data["tau"]):
        raise ArgumentException(
            f"Key sidecar declares tau={data['tau']} but has {base.size} values"
        )
    return CircularKey(
        base=base, kind=data["kind"], seed=data["seed"], sum_sq=float(data["sum_sq"])
    )
