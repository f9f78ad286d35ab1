import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional, Union

from pcdf.service.exceptions import ArgumentException


class BaseDTO:
    REQUIRED_FIELDS = []

    def get_empty_fields(self):
        """
        Return a list of field names that have a value of None or "".
        """
        return [f for f in self.__dict__ if self.__dict__[f] is None or self.__dict__[f] == ""]

    def get_empty_required_fields(self):
        """
        Return a list of field names that are empty and are listed in REQUIRED_FIELDS.
        """
        empty_fields = self.get_empty_fields()
        return [f for f in empty_fields if f in self.REQUIRED_FIELDS]


@dataclass
class PipelineConfig(BaseDTO):
    """
    Every knob of a run, after merging config class defaults, the config file,
    the environment and CLI flags.

    Required Fields:
        data_path: CSV file of the multichannel series.
    """

    REQUIRED_FIELDS = ["data_path"]

    # Fields that describe where things are or how long to time them; they never
    # change what a run computes and are left out of the fingerprint.
    UNFINGERPRINTED = ("data_path", "output_dir", "repetitions", "warmup")

    data_path: Optional[str] = None
    lookback: int = 96
    horizon: int = 24
    stride: int = 1
    tau: Union[str, int] = "auto"
    mode: str = "sparse"
    key: str = "orthogonal"
    key_seed: int = 0
    per_channel_keys: bool = False
    predictor: str = "linear"
    hidden_width: int = 64
    epochs: int = 20
    lr: float = 1e-3
    alpha: float = 0.1
    beta: float = 0.1
    clip_alpha: float = 1.0
    batch: int = 32
    seed: int = 0
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    test_ratio: float = 0.2
    norm_scope: str = "history"
    default_period: int = 24
    ingestion_policy: str = "reject"
    repetitions: int = 20
    warmup: int = 3
    output_dir: str = "output"

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def fingerprint_fields(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in self.UNFINGERPRINTED}

    def fingerprint(self) -> str:
        """
        First 16 hex chars of the sha256 of the canonical JSON of every
        computation-relevant field.
        """
        canonical = json.dumps(self.fingerprint_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @property
    def split_ratios(self):
        return (self.train_ratio, self.val_ratio, self.test_ratio)


@dataclass
class TrainConfig(BaseDTO):
    """
    Optimizer settings of the training loop.

    Defaults: plain mini-batch gradient descent with lr 1e-3, alpha = beta = 0.1,
    clip_alpha 1.0 and batches of 32 windows.
    """

    epochs: int = 20
    lr: float = 1e-3
    alpha: float = 0.1
    beta: float = 0.1
    clip_alpha: float = 1.0
    seed: int = 0
    batch: int = 32
    norm_scope: str = "history"

    def __post_init__(self):
        if self.epochs < 0 or self.batch < 1:
            raise ArgumentException("epochs must be >= 0 and batch >= 1")
        if self.lr <= 0 or self.clip_alpha <= 0:
            raise ArgumentException("lr and clip_alpha must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ArgumentException("alpha and beta must be non-negative")

    @classmethod
    def from_pipeline_config(cls, cfg: PipelineConfig) -> "TrainConfig":
        return cls(
            epochs=cfg.epochs,
            lr=cfg.lr,
            alpha=cfg.alpha,
            beta=cfg.beta,
            clip_alpha=cfg.clip_alpha,
            seed=cfg.seed,
            batch=cfg.batch,
            norm_scope=cfg.norm_scope,
        )


@dataclass
class LossBreakdown:
    """
    regulation and latent hold the unweighted terms;
    total = prediction + alpha * regulation + beta * latent.
    """

    prediction: float
    regulation: float
    latent: float
    total: float


@dataclass
class Timing:
    median_s: float
    min_s: float
    max_s: float
    repetitions: int


@dataclass
class RunReport:
    """
    One evaluation of a trained pipeline. cdpi is always mse * runtime_s.
    """

    mse: float
    runtime_s: float
    config_fingerprint: str
    payload_bytes: int
    mode: str
    variant: str = "comp-decomp"
    n_channels: int = 1
    compression_ratio: str = "1:1"
    single_channel: bool = True
    runtime_min_s: float = 0.0
    runtime_max_s: float = 0.0
    train_time_s: float = 0.0
    cdpi: float = field(init=False)

    def __post_init__(self):
        self.cdpi = self.mse * self.runtime_s

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SuperiorityResult:
    D: int
    E: int
    tau: int
    threshold: float
    holds_for_C: int
