import numpy as np
import pytest

from hadcs.corpus import full_corpus
from hadcs.dictionary import TrainConfig, train
from hadcs.rng import generator
from hadcs.sensing import build_sensing_matrix, twin_prime_smatrix


@pytest.fixture(scope="session")
def mask15():
    return twin_prime_smatrix(3, 5)


@pytest.fixture(scope="session")
def mask143():
    # smallest twin-prime frame that fits the 7x9 glyphs
    return twin_prime_smatrix(11, 13)


@pytest.fixture(scope="session")
def small_stack(mask143):
    """Dictionary trained on the 11x13 corpus; cheap enough for unit tests."""
    n = mask143.order
    rows = sorted(generator(7).choice(n, 36, replace=False).tolist())
    s = build_sensing_matrix(mask143, rows)
    stack, hist = train(full_corpus(11, 13), s, TrainConfig(alphas=(0.01, 0.01), epochs=30, code_iters=60), layer_dims=[n, 64, 32])
    return stack, hist


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
