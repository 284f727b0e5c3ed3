import numpy as np
import pytest

from popcnn import kernels
from popcnn.pipeline import preprocess
from popcnn.synth_data import SynthConfig, generate

BACKENDS = ["python"] + (["cython"] if kernels.compiled_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Route the hot kernels through one backend for the duration of a test."""
    mod = kernels.compiled_backend if request.param == "cython" else kernels.python_backend
    for name in ("conv2d_forward", "conv2d_backward", "threshold_crossings"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_raw():
    """Ten odors, two repeats each, full-length raw traces."""
    return generate(SynthConfig(n_odors=10, repeats_per_odor=2, seed=4))


@pytest.fixture(scope="session")
def small_processed(small_raw):
    ds, _ = preprocess(small_raw)
    return ds


def kink_margin(network, x):
    """Smallest |pre-activation| over both ReLUs for input ``x``."""
    _, (_, z1, _, z2, _) = network.forward(x)
    return min(float(np.abs(z1).min()), float(np.abs(z2).min()))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
