"""One-hidden-layer tanh network split into ``f_pre`` (input -> hidden) and ``f_post`` (hidden -> C)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass
class Mlp:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, input_dim: int, hidden: int, num_classes: int, rng: np.random.Generator) -> "Mlp":
        return cls(
            w1=rng.normal(0.0, 1.0 / np.sqrt(input_dim), size=(input_dim, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, num_classes)),
            b2=np.zeros(num_classes),
        )

    @property
    def num_classes(self) -> int:
        return self.w2.shape[1]

    @property
    def num_params(self) -> int:
        return sum(getattr(self, n).size for n in PARAM_NAMES)

    def pre(self, x: np.ndarray) -> np.ndarray:
        return np.tanh(x @ self.w1 + self.b1)

    def post(self, h: np.ndarray) -> np.ndarray:
        return h @ self.w2 + self.b2

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.post(self.pre(x))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Close-set prediction: the class whose "not this class" score is smallest."""
        return np.argmin(self(x), axis=1)

    def copy(self) -> "Mlp":
        return Mlp(*(getattr(self, n).copy() for n in PARAM_NAMES))

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in PARAM_NAMES])

    def with_flat(self, v: np.ndarray) -> "Mlp":
        out, i = [], 0
        for n in PARAM_NAMES:
            p = getattr(self, n)
            out.append(np.asarray(v[i : i + p.size], dtype=float).reshape(p.shape))
            i += p.size
        return Mlp(*out)
