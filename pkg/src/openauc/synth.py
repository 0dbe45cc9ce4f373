"""Gaussian-blob open-set datasets.

Every class gets one centre; the first ``num_known_classes`` are known and
appear in training, the rest are held out and only show up at test time
labelled as the open class.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SynthConfig:
    num_known_classes: int = 4
    num_open_classes: int = 2
    samples_per_class: int = 200
    input_dim: int = 2
    class_center_spread: float = 3.0
    noise_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_known_classes < 1 or self.num_open_classes < 0:
            raise ValueError("need >= 1 known class and >= 0 open classes")
        if self.samples_per_class < 1 or self.input_dim < 1:
            raise ValueError("samples_per_class and input_dim must be positive")
        if self.noise_sigma < 0 or self.class_center_spread <= 0:
            raise ValueError("spread must be positive and sigma non-negative")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs with internal labels (open rows carry ``num_known_classes``)."""

    x: np.ndarray
    y: np.ndarray
    num_known_classes: int

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True, eq=False)
class SynthData:
    train: Dataset
    test: Dataset
    centers: np.ndarray


def generate_synth(config: SynthConfig) -> SynthData:
    rng = np.random.default_rng(config.seed)
    k, o, n, d = config.num_known_classes, config.num_open_classes, config.samples_per_class, config.input_dim
    centers = rng.normal(0.0, config.class_center_spread, size=(k + o, d))

    def draw(classes):
        x = np.concatenate([centers[c] + config.noise_sigma * rng.standard_normal((n, d)) for c in classes])
        y = np.repeat(np.asarray(classes), n)
        return x, y

    x_train, y_train = draw(range(k))
    x_test, y_test = draw(range(k + o))
    y_test = np.minimum(y_test, k)
    return SynthData(
        Dataset(x_train, y_train, k),
        Dataset(x_test.reshape(-1, d), y_test, k),
        centers,
    )


def nearest_center_accuracy(data: SynthData) -> float:
    """Close-set accuracy of assigning each known test point to its nearest known centre."""
    k = data.train.num_known_classes
    known = data.test.y < k
    x = data.test.x[known]
    dist = ((x[:, None, :] - data.centers[None, :k, :]) ** 2).sum(-1)
    return float((dist.argmin(1) == data.test.y[known]).mean())
