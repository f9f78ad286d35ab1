import logging
import os

basedir = os.path.abspath(os.path.dirname(__file__))


class Config(object):
    DEBUG = False
    TESTING = False
    LOG_LEVEL = logging.INFO

    OUTPUT_DIR = os.environ.get("PCDF_OUTPUT_DIR") or os.path.join(basedir, "output")

    # Pipeline defaults; a config file and CLI flags override them.
    LOOKBACK = 96
    HORIZON = 24
    STRIDE = 1
    TAU = "auto"
    MODE = "sparse"
    KEY = "orthogonal"
    KEY_SEED = 0
    PER_CHANNEL_KEYS = False
    PREDICTOR = "linear"
    HIDDEN_WIDTH = 64
    EPOCHS = 20
    LR = 1e-3
    ALPHA = 0.1
    BETA = 0.1
    CLIP_ALPHA = 1.0
    BATCH = 32
    SEED = 0
    TRAIN_RATIO = 0.7
    VAL_RATIO = 0.1
    TEST_RATIO = 0.2
    NORM_SCOPE = "history"
    DEFAULT_PERIOD = 24
    INGESTION_POLICY = "reject"
    REPETITIONS = 20
    WARMUP = 3


class DevelopmentConfig(Config):
    DEBUG = True


class TestConfig(Config):
    TESTING = True
    LOG_LEVEL = logging.WARNING
    EPOCHS = 2
    REPETITIONS = 3
    WARMUP = 1
