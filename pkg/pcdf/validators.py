from pcdf.service.codec_service import MODES
from pcdf.service.dtos import PipelineConfig
from pcdf.service.exceptions import ConfigurationException
from pcdf.service.key_service import KEY_ALIASES
from pcdf.service.predictor_service import PREDICTOR_KINDS
from pcdf.service.series_service import INGESTION_POLICIES

NORM_SCOPES = ("history", "train")

POSITIVE_COUNTS = (
    "lookback",
    "horizon",
    "stride",
    "hidden_width",
    "batch",
    "repetitions",
    "default_period",
)


class Validators:

    @staticmethod
    def validate_required_fields_are_provided(cfg: PipelineConfig):
        """
        Raise a ConfigurationException if one of the REQUIRED_FIELDS of cfg is empty.
        """
        missing_required_fields = cfg.get_empty_required_fields()

        if missing_required_fields:
            error_msg = f"Missing required field(s): {', '.join(missing_required_fields)}"
            raise ConfigurationException(error_msg)

    @staticmethod
    def validate_pipeline_config(cfg: PipelineConfig):
        """
        Check ranges and enum membership of every PipelineConfig field.

        Args:
            cfg: The merged configuration of a run.

        Returns:
            None if the configuration is valid.

        Raises:
            ConfigurationException naming the first offending field.
        """
        for name in POSITIVE_COUNTS:
            value = getattr(cfg, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigurationException(f"{name} must be a positive integer, got {value!r}")

        for name in ("epochs", "warmup", "key_seed", "seed"):
            value = getattr(cfg, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ConfigurationException(
                    f"{name} must be a non-negative integer, got {value!r}"
                )

        if cfg.lr <= 0 or cfg.clip_alpha <= 0:
            raise ConfigurationException("lr and clip_alpha must be positive")
        if cfg.alpha < 0 or cfg.beta < 0:
            raise ConfigurationException("alpha and beta must be non-negative")

        ratios = cfg.split_ratios
        if any(not 0 < r < 1 for r in ratios):
            raise ConfigurationException(f"Split ratios must lie in (0, 1), got {ratios}")
        if sum(ratios) > 1 + 1e-9:
            raise ConfigurationException(f"Split ratios sum to {sum(ratios)} > 1")

        for name, allowed in (
            ("mode", MODES),
            ("key", tuple(KEY_ALIASES)),
            ("predictor", PREDICTOR_KINDS),
            ("norm_scope", NORM_SCOPES),
            ("ingestion_policy", INGESTION_POLICIES),
        ):
            if getattr(cfg, name) not in allowed:
                raise ConfigurationException(
                    f"{name} must be one of {', '.join(allowed)}; got {getattr(cfg, name)!r}"
                )

        if cfg.tau != "auto":
            if not isinstance(cfg.tau, int) or isinstance(cfg.tau, bool) or cfg.tau < 1:
                raise ConfigurationException(
                    f"tau must be 'auto' or a positive integer, got {cfg.tau!r}"
                )
            Validators.validate_tau(cfg, cfg.tau)

    @staticmethod
    def validate_tau(cfg: PipelineConfig, tau: int):
        """
        Check a resolved seasonal period against the window sizes.

        Raises:
            ConfigurationException if the lookback is shorter than two periods
            (the input must cover at least two seasonal cycles) or, in sparse
            mode, if the horizon is not a multiple of tau.
        """
        if cfg.lookback < 2 * tau:
            raise ConfigurationException(
                f"lookback L={cfg.lookback} must be at least 2 * tau = {2 * tau}: the input "
                f"window has to span two seasonal periods (seasonal coverage, L >= 2 tau)"
            )
        if cfg.mode == "sparse" and cfg.horizon % tau:
            raise ConfigurationException(
                f"Sparse mode needs a horizon that is a multiple of tau; got H={cfg.horizon}, "
                f"tau={tau}"
            )
