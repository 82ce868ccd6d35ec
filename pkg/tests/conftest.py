import numpy as np
import pytest

from diffpath.arch import ModelSpec, tiny_conv, toy_net
from diffpath.datasets import LabeledDataset


def rand_weights(model: ModelSpec, seed: int = 0, scale: float = 0.5) -> dict:
    rng = np.random.default_rng(seed)
    weights = {}
    for l in model.layers:
        if l.kind == "conv":
            weights[f"{l.name}/weight"] = rng.normal(
                0, scale, (l.cout, l.cin, l.k, l.k)).astype(np.float32)
            weights[f"{l.name}/bias"] = rng.normal(0, 0.1, l.cout).astype(np.float32)
        elif l.kind == "linear":
            weights[f"{l.name}/weight"] = rng.normal(
                0, scale, (l.out_features, l.in_features)).astype(np.float32)
            weights[f"{l.name}/bias"] = rng.normal(0, 0.1, l.out_features).astype(np.float32)
    return weights


@pytest.fixture
def toy():
    model = toy_net()
    return model, rand_weights(model, seed=7)


@pytest.fixture
def tiny():
    # 16x16 keeps per-test extraction around a tenth of a second
    model = tiny_conv(input_shape=(3, 16, 16), classes=10)
    return model, rand_weights(model, seed=11, scale=0.3)


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(5)
    images = rng.integers(0, 256, (48, 3, 16, 16), dtype=np.uint8)
    labels = rng.integers(0, 10, 48).astype(np.int64)
    return LabeledDataset(images, labels, classes=10, split="fixture")


@pytest.fixture
def digits_dataset():
    # blob-per-class images standing in for handwritten digits
    rng = np.random.default_rng(9)
    n = 40
    images = np.zeros((n, 1, 28, 28), dtype=np.uint8)
    labels = (np.arange(n) % 10).astype(np.int64)
    for i in range(n):
        y, x = rng.integers(4, 20, 2)
        h, w = rng.integers(4, 9, 2)
        images[i, 0, y:y + h, x:x + w] = rng.integers(128, 256)
    return LabeledDataset(images, labels, classes=10, split="fixture")
