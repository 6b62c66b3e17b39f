import time

import numpy as np
import pytest

from flowattack import data
from flowattack.classifier import MLPClassifier
from flowattack.flow import NormalizingFlow
from flowattack.harness.config import defaults
from flowattack.numerics.layers import MLP, Dense
from flowattack.numerics.prng import Prng

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def const_mlp(n_in, n_out, value, dtype=np.float64):
    """Single identity layer with zero weights: outputs ``value`` everywhere."""
    w = np.zeros((n_out, n_in), dtype=dtype)
    b = np.full(n_out, value, dtype=dtype)
    return MLP([Dense(w, b)])


def randomize(model, prng, scale=0.3):
    """Give every zero-initialized Dense layer of a flow small random weights."""
    for b in model.blocks:
        inner = getattr(b, "inner", [b])
        for blk in inner:
            for net in getattr(blk, "nets", []):
                for layer in net.layers:
                    if not np.any(layer.weights):
                        w = prng.standard_normal(layer.weights.shape, dtype=np.float64)
                        layer.weights[...] = w * scale / np.sqrt(layer.n_in)
                        layer.bias[...] = prng.standard_normal(layer.bias.shape, dtype=np.float64) * scale
    return model


@pytest.fixture
def prng():
    return Prng(1234)


@pytest.fixture(scope="session")
def desk_config():
    return defaults()


@pytest.fixture(scope="session")
def desk_data(desk_config):
    d, seed = desk_config["data"], desk_config["io"]["seed"]
    full = data.gen_shapes(d["n"], d["classes"], d["size"], d["noise_std"], seed, d["jitter"],
                           (d["intensity_min"], d["intensity_max"]), d["background"])
    return data.split(full, d["train_fraction"], seed)


@pytest.fixture(scope="session")
def desk_flow(desk_config, desk_data):
    train, _ = desk_data
    start = time.perf_counter()
    est = NormalizingFlow(seed=desk_config["io"]["seed"], **desk_config["flow"]).fit(train.images)
    est.fit_seconds_ = time.perf_counter() - start
    return est


@pytest.fixture(scope="session")
def desk_classifier(desk_config, desk_data):
    train, _ = desk_data
    start = time.perf_counter()
    est = MLPClassifier(seed=desk_config["io"]["seed"], **desk_config["classifier"]).fit(
        train.images, train.labels)
    est.fit_seconds_ = time.perf_counter() - start
    return est


@pytest.fixture(scope="session")
def desk_defended(desk_config, desk_data):
    train, _ = desk_data
    return MLPClassifier(seed=desk_config["io"]["seed"], adversarial=True,
                         **desk_config["classifier"]).fit(train.images, train.labels)


def linear_classifier(W, b, input_shape):
    """MLPClassifier whose network is the single affine map ``W x + b``."""
    W = np.asarray(W, dtype=np.float32)
    clf = MLPClassifier(hidden=())
    clf.net_ = MLP([Dense(W, np.asarray(b, dtype=np.float32))])
    clf.input_shape_ = tuple(input_shape)
    clf.n_classes_ = W.shape[0]
    clf.classes_ = np.arange(W.shape[0])
    return clf
