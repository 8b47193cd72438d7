import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from has8.train import tune_malloc

tune_malloc()


@pytest.fixture(scope="session")
def digit_corpus(tmp_path_factory):
    """Session-wide synthetic MNIST-format corpus: 10k train, 1k test."""
    from synth import make_mnist_like

    root = tmp_path_factory.mktemp("digits")
    return make_mnist_like(root, 10000, 1000, seed=0)


@pytest.fixture(scope="session")
def small_digit_corpus(tmp_path_factory):
    """Smaller corpus for fast CLI and data tests."""
    from synth import make_mnist_like

    root = tmp_path_factory.mktemp("digits_small")
    return make_mnist_like(root, 400, 100, seed=3)
