import numpy as np
import pytest

from sparsescore.core import Dataset


def random_labels(rng, n, K):
    """Labels in 1..K with every class guaranteed non-empty."""
    labels = rng.integers(1, K + 1, size=n)
    labels[:K] = np.arange(1, K + 1)
    rng.shuffle(labels)
    return labels


def random_dataset(rng, n, p, K, scale=1.0):
    X = scale * rng.standard_normal((n, p))
    return Dataset(X=X, labels=random_labels(rng, n, K), K=K)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
