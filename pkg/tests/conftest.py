from __future__ import annotations

import numpy as np
import pytest

from dbl.dataset import DiscretizedDataset


def random_data(rng: np.random.Generator, a: int, cards, class_count: int, N: int) -> DiscretizedDataset:
    cards = tuple(int(k) for k in (cards if np.ndim(cards) else [cards] * a))
    X = np.stack([rng.integers(0, k, size=N) for k in cards], axis=1).astype(np.int64)
    y = rng.integers(0, class_count, size=N).astype(np.int64)
    return DiscretizedDataset(
        X=X, y=y, cardinalities=cards, class_count=class_count,
        attribute_names=tuple(f"x{i}" for i in range(a)),
        class_labels=tuple(str(c) for c in range(class_count)),
    )


def noisy_data(rng, a, cards, class_count, N, flip=0.2) -> DiscretizedDataset:
    """Labels depend on attribute pairs, with label noise so the optimum is finite."""
    d = random_data(rng, a, cards, class_count, N)
    signal = (d.X[:, 0] + d.X[:, 1] * (a > 1)) % class_count
    noise = rng.random(N) < flip
    y = np.where(noise, rng.integers(0, class_count, size=N), signal).astype(np.int64)
    return DiscretizedDataset(X=d.X, y=y, cardinalities=d.cardinalities, class_count=class_count,
                              attribute_names=d.attribute_names, class_labels=d.class_labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
