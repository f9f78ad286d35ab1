from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from pcdf.service.exceptions import DataException, NumericException

EPS_STD = 1e-8


@dataclass(eq=False)
class MultichannelSeries:
    """
    Represents the raw input of the pipeline: L_total timestamps of C
    parallel channels, stored row-major as a (L_total, C) float matrix.

    A series never holds non-finite values; ingestion either rejects them
    or imputes them before a MultichannelSeries is built.
    """

    values: np.ndarray
    channel_names: List[str]
    source_id: str = "memory"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataException(f"Series values must be a matrix, got shape {self.values.shape}")
        if self.n_channels < 1 or self.length < 2:
            raise DataException(
                f"Series needs at least 1 channel and 2 timestamps, got {self.values.shape}"
            )
        if len(self.channel_names) != self.n_channels:
            raise DataException(
                f"{len(self.channel_names)} channel names for {self.n_channels} channels"
            )
        if not np.all(np.isfinite(self.values)):
            row, col = np.argwhere(~np.isfinite(self.values))[0]
            raise DataException(
                f"Non-finite value in channel {self.channel_names[col]!r} at row {row}"
            )

    def __repr__(self):
        return f"<MultichannelSeries: {self.source_id} | L={self.length} | C={self.n_channels}>"

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int, suffix: str = "") -> "MultichannelSeries":
        return MultichannelSeries(
            self.values[start:stop].copy(), list(self.channel_names), self.source_id + suffix
        )


@dataclass(eq=False)
class WindowPair:
    """
    A history window X[t-L:t] and the future window X[t:t+H] right after it.
    """

    history: np.ndarray
    future: np.ndarray
    t_index: int


@dataclass
class NormStats:
    mean: float
    std: float
    flagged: bool = False
    applied_to: str = "compressed-series"


@dataclass
class SeasonalProfile:
    per_channel_period: List[int]
    shared_period: int
    capped: bool = False


@dataclass
class RedundancyReport:
    pcs_at_threshold: int
    threshold: float
    top_k_var: float
    pc1_var: float
    pc2_var: float
    k: int
    rank_deficient: bool = False
    explained_variance_ratio: List[float] = field(default_factory=list)


@dataclass(eq=False)
class CircularKey:
    """
    A seasonal key. The base vector has length tau; the key applied to a
    length-n sequence is the base tiled so that k_t = base[t mod tau].
    """

    base: np.ndarray
    kind: str
    seed: Optional[int]
    sum_sq: float

    def __post_init__(self):
        self.base = np.array(self.base, dtype=float)
        self.base.setflags(write=False)

    def __repr__(self):
        return f"<CircularKey: {self.kind} | tau={self.tau} | seed={self.seed}>"

    @property
    def tau(self) -> int:
        return self.base.shape[0]


@dataclass(eq=False)
class CompressedSeries:
    """
    The single-channel payload Y sent from the edge to the predictor.

    Dense payloads keep the full length L; sparse payloads keep the
    floor(L / tau) complete segments, i.e. floor(L / tau) * tau samples.
    """

    y: np.ndarray
    mode: str
    tau: int
    norm: Optional[NormStats] = None
    n_channels: int = 1


class ParameterContainer:
    """
    Mixin for objects holding trainable arrays.

    Subclasses implement `parameters()` returning a dict of named arrays
    which are updated in place by the optimizer.
    """

    def parameters(self) -> Dict[str, np.ndarray]:
        raise NotImplementedError

    def check_finite(self, owner: str):
        for name, value in self.parameters().items():
            if not np.all(np.isfinite(value)):
                raise NumericException(f"Non-finite parameters in {owner}.{name}")


@dataclass(eq=False)
class ReconstructionHead(ParameterContainer):
    """
    Copy/scale, residual correction and dense projection applied after decoding.

    conv1 maps C -> F channels and conv2 maps F -> C, both along time with
    kernel width w_k and zero same-padding. dense is a per-timestep C -> C map.
    """

    conv1_weight: np.ndarray
    conv1_bias: np.ndarray
    conv2_weight: np.ndarray
    conv2_bias: np.ndarray
    dense_weight: np.ndarray
    dense_bias: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.dense_weight.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.conv1_weight.shape[0]

    @property
    def kernel_width(self) -> int:
        return self.conv1_weight.shape[2]

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            "conv1.weight": self.conv1_weight,
            "conv1.bias": self.conv1_bias,
            "conv2.weight": self.conv2_weight,
            "conv2.bias": self.conv2_bias,
            "dense.weight": self.dense_weight,
            "dense.bias": self.dense_bias,
        }


@dataclass(eq=False)
class PredictorParams(ParameterContainer):
    """
    Single-channel forecaster parameters stored as one flat vector plus a
    manifest of (name, shape) entries describing how to slice it.
    """

    kind: str
    weights: np.ndarray
    manifest: List[Tuple[str, Tuple[int, ...]]]
    input_len: int
    output_len: int
    period: int
    hidden_width: int = 64

    def __post_init__(self):
        expected = sum(int(np.prod(shape)) for _, shape in self.manifest)
        if expected != self.weights.size:
            raise NumericException(
                f"Predictor has {self.weights.size} weights but its manifest declares {expected}"
            )

    def parameters(self) -> Dict[str, np.ndarray]:
        arrays = {}
        offset = 0
        for name, shape in self.manifest:
            size = int(np.prod(shape))
            arrays[name] = self.weights[offset : offset + size].reshape(shape)
            offset += size
        return arrays


@dataclass(eq=False)
class LinearMap(ParameterContainer):
    """
    Trainable affine map used by the encoder/decoder ablations.

    As an encoder it maps each timestamp's C values to one (weight (C,), bias (1,)).
    As a decoder it maps one value to C channels (weight (C,), bias (C,)).
    """

    weight: np.ndarray
    bias: np.ndarray

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"linear.weight": self.weight, "linear.bias": self.bias}


@dataclass(eq=False)
class PipelineState:
    """
    Everything needed to run compression -> prediction -> decompression.

    keys holds one shared key or one key per channel. head is None for the
    bare decode + broadcast variant; encoder/decoder replace compression and
    decompression in the encoder ablations.
    """

    keys: List[CircularKey]
    mode: str
    n_channels: int
    lookback: int
    horizon: int
    predictor: PredictorParams
    head: Optional[ReconstructionHead] = None
    encoder: Optional[LinearMap] = None
    decoder: Optional[LinearMap] = None
    norm: Optional[NormStats] = None

    @property
    def tau(self) -> int:
        return self.keys[0].tau

    @property
    def compressed_len(self) -> int:
        if self.mode == "sparse" and self.encoder is None:
            return (self.lookback // self.tau) * self.tau
        return self.lookback

    def components(self) -> Dict[str, ParameterContainer]:
        found = {"predictor": self.predictor}
        for name in ("head", "encoder", "decoder"):
            component = getattr(self, name)
            if component is not None:
                found[name] = component
        return found

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            f"{owner}.{name}": value
            for owner, component in self.components().items()
            for name, value in component.parameters().items()
        }

    def check_finite(self):
        for owner, component in self.components().items():
            component.check_finite(owner)
