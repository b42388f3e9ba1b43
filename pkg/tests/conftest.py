import os
from pathlib import Path

import numpy as np
import pytest

from hadce.measurement import conventional_config
from hadce.neural import init_model

REPO = Path(__file__).resolve().parents[1]


@pytest.fixture(scope="session")
def cache_dir():
    """Trained models are cached here across test sessions."""
    path = Path(os.environ.get("HADCE_CACHE", REPO / ".cache" / "models"))
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    """N=8, R=4 float64 model with perturbed weights (non-trivial gradients)."""
    model = init_model(8, 4, seed=3, encoder_init=conventional_config(8, 4, 0.01))
    r = np.random.default_rng(7)
    for name, p in model.params.items():
        p += 0.1 * r.standard_normal(p.shape)
    return model


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.LINES:
        terminalreporter.write_line(line)
