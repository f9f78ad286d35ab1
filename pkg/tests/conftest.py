import numpy as np
import pytest

from config import TestConfig
from pcdf import create_app


@pytest.fixture(scope="session")
def app(request):
    """One pcdf app, built with TestConfig, shared by the whole session."""
    app = create_app(TestConfig)

    return app


@pytest.fixture(autouse=True)
def _setup_app_context_for_test(request, app):
    """Push a fresh app context per test so current_app and its logger resolve."""
    ctx = app.app_context()
    ctx.push()
    yield
    ctx.pop()


@pytest.fixture()
def cli_runner(app):
    return app.test_cli_runner()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
