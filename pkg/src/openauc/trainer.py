"""Minimise the gated OpenAUC risk on close-set data with mixup-generated open features.

Per minibatch of ``B`` close samples and ``M`` generated open features the
objective is::

    mean_i NLL(softmax(-f(x_i)), y_i)
      + lam / (B*M) * sum_{i,j} gate_i * (1 - (r(u_j) - r(x_i)))**2

with ``r = min_c f_c`` and ``gate_i = [h(x_i) == y_i]`` frozen at the start of
each epoch. Gradients are hand-written; :func:`numerical_gradient` exists
to check them.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .core import ScoreTable
from .mlp import PARAM_NAMES, Mlp
from .ranking import openauc
from .report import MetricReport, evaluate_table
from .synth import Dataset

log = logging.getLogger(__name__)

LAMBDA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.2
    alpha: float = 2.0
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.1
    seed: int = 0
    hidden: int = 32
    gated: bool = True
    surrogate: str = "square"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.epochs < 0 or self.batch_size < 2 or self.hidden < 1:
            raise ValueError("epochs >= 0, batch_size >= 2 and hidden >= 1 required")
        if self.surrogate != "square":
            raise ValueError(f"unsupported surrogate {self.surrogate!r}")


def square_loss(t):
    return (1.0 - t) ** 2


def square_loss_grad(t):
    return -2.0 * (1.0 - t)


@dataclass(frozen=True)
class MixupBatch:
    """Generated open features and how they were made.

    ``left``/``right`` index rows of the source batch, ``weights`` are the
    Beta draws, ``features = w * f_pre(x_left) + (1 - w) * f_pre(x_right)``.
    """

    left: np.ndarray
    right: np.ndarray
    weights: np.ndarray
    features: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)


def mixup_indices(y: np.ndarray, alpha: float, rng: np.random.Generator):
    """Shuffle-and-pair slots, drop same-label pairs, draw one Beta weight per pair.

    The RNG is advanced by the same amount regardless of the labels.
    """
    perm = rng.permutation(len(y))
    w = rng.beta(alpha, alpha, size=len(y))
    keep = y != y[perm]
    return np.flatnonzero(keep), perm[keep], w[keep]


def mix_features(h: np.ndarray, left, right, weights) -> np.ndarray:
    return weights[:, None] * h[left] + (1.0 - weights[:, None]) * h[right]


def mixup_batch(x: np.ndarray, y: np.ndarray, model: Mlp, alpha: float, rng: np.random.Generator) -> MixupBatch:
    left, right, w = mixup_indices(y, alpha, rng)
    if len(w) == 0:
        log.info("mixup: every pair shares a label; no open features generated")
    h = model.pre(x)
    return MixupBatch(left, right, w, mix_features(h, left, right, w))


@dataclass
class RiskResult:
    loss: float
    close_loss: float
    auc_loss: float
    grads: dict


def _softmax_neg(f):
    z = -f - (-f).max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    return e / s, np.log(s)[:, 0] + (-f).max(axis=1)


def openauc_risk(
    model: Mlp,
    x: np.ndarray,
    y: np.ndarray,
    gates: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    weights: np.ndarray,
    lam: float,
) -> RiskResult:
    """Objective value and analytic gradients for one minibatch.

    ``gates`` are constants (1 keeps a close sample's pairs, 0 drops them).
    ``left``/``right``/``weights`` describe the mixup pairs; the open
    features are rebuilt from the batch so gradients flow through ``f_pre``.
    """
    b = len(y)
    gates = np.asarray(gates, dtype=float)
    z1 = x @ model.w1 + model.b1
    h = np.tanh(z1)
    f = h @ model.w2 + model.b2
    p, lse = _softmax_neg(f)
    # -log softmax(-f)[y] = f_y + logsumexp(-f)
    nll = f[np.arange(b), y] + lse
    close_loss = float(nll.mean())
    df = -p
    df[np.arange(b), y] += 1.0
    df /= b

    m = len(weights)
    auc_loss = 0.0
    dhm = None
    hm = None
    dfo = None
    if m and lam:
        hm = mix_features(h, left, right, weights)
        fo = hm @ model.w2 + model.b2
        ac, ao = f.argmin(axis=1), fo.argmin(axis=1)
        r_close, r_open = f[np.arange(b), ac], fo[np.arange(m), ao]
        diff = r_open[None, :] - r_close[:, None]
        scale = lam / (b * m)
        auc_loss = float(scale * (gates[:, None] * square_loss(diff)).sum())
        g = scale * gates[:, None] * square_loss_grad(diff)
        df[np.arange(b), ac] -= g.sum(axis=1)
        dfo = np.zeros_like(fo)
        dfo[np.arange(m), ao] = g.sum(axis=0)
        dhm = dfo @ model.w2.T
    elif m == 0 and lam:
        log.info("empty open batch: AUC term contributes 0")

    gw2 = h.T @ df
    gb2 = df.sum(axis=0)
    dh = df @ model.w2.T
    if dhm is not None:
        gw2 += hm.T @ dfo
        gb2 += dfo.sum(axis=0)
        np.add.at(dh, left, weights[:, None] * dhm)
        np.add.at(dh, right, (1.0 - weights[:, None]) * dhm)
    dz1 = dh * (1.0 - h**2)
    grads = {"w1": x.T @ dz1, "b1": dz1.sum(axis=0), "w2": gw2, "b2": gb2}
    return RiskResult(close_loss + auc_loss, close_loss, auc_loss, grads)


# (I_k, I_u) -> 1 - I_k * I_u, which must equal (not I_k) + I_k * (not I_u)
REFORMULATION_TRUTH_TABLE = {(1, 1): 0, (1, 0): 1, (0, 1): 1, (0, 0): 1}


def reformulation_rhs(i_k: int, i_u: int) -> int:
    return (1 - i_k) + i_k * (1 - i_u)


def verify_reformulation(table: ScoreTable) -> bool:
    """Check ``1 - OpenAUC`` against the per-pair rewrite used by the training risk.

    The right-hand side is averaged by brute force over every (close, open)
    pair, so this is O(N_k * N_u).
    """
    for (i_k, i_u), lhs in REFORMULATION_TRUTH_TABLE.items():
        if lhs != reformulation_rhs(i_k, i_u):
            return False
    r = table.open_scores
    close = table.is_close
    i_k = table.close_correct()[close].astype(int)
    i_u = (r[~close][None, :] > r[close][:, None]).astype(int)
    total = int((reformulation_rhs(i_k[:, None], i_u)).sum())
    return 1 - openauc(table) == Fraction(total, int(close.sum()) * int((~close).sum()))


def flat_grads(grads: dict) -> np.ndarray:
    return np.concatenate([grads[n].ravel() for n in PARAM_NAMES])


def numerical_gradient(fn: Callable[[Mlp], float], model: Mlp, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of ``fn`` over the flattened parameters."""
    v = model.flat()
    out = np.empty_like(v)
    for k in range(len(v)):
        up, dn = v.copy(), v.copy()
        up[k] += eps
        dn[k] -= eps
        out[k] = (fn(model.with_flat(up)) - fn(model.with_flat(dn))) / (2 * eps)
    return out


def close_set_gates(model: Mlp, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (model.predict(x) == y).astype(float)


def gate_digest(gates: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(gates, dtype=float).tobytes()).hexdigest()


@dataclass
class TrainState:
    model: Mlp
    epoch: int = 0
    frozen_gates: Optional[np.ndarray] = None
    gate_digest: str = ""
    loss_history: list = field(default_factory=list)
    rng: Optional[np.random.Generator] = None


def predict_table(model: Mlp, data: Dataset) -> ScoreTable:
    """Score table with ``class_scores = f(x)`` and ``r = min_c f(x)_c``."""
    return ScoreTable.from_arrays(
        data.y, model(data.x), num_known_classes=data.num_known_classes,
        ids=[f"s{i}" for i in range(len(data))],
    )


@dataclass
class TrainResult:
    state: TrainState
    test_table: Optional[ScoreTable] = None
    report: Optional[MetricReport] = None


def train(
    train_set: Dataset,
    config: TrainConfig,
    test_set: Optional[Dataset] = None,
    init_model: Optional[Mlp] = None,
    callback: Optional[Callable[[TrainState, int], None]] = None,
) -> TrainResult:
    """Plain SGD over shuffled minibatches; deterministic for a given seed.

    ``callback(state, step)`` runs after every parameter update.
    """
    if (train_set.y >= train_set.num_known_classes).any():
        raise ValueError("training data must be close-set only")
    rng = np.random.default_rng(config.seed)
    c = train_set.num_known_classes
    model = init_model.copy() if init_model is not None else Mlp.init(train_set.x.shape[1], config.hidden, c, rng)
    state = TrainState(model=model, rng=rng)
    n = len(train_set)
    step = 0
    for epoch in range(config.epochs):
        state.epoch = epoch
        if config.gated:
            state.frozen_gates = close_set_gates(state.model, train_set.x, train_set.y)
        else:
            state.frozen_gates = np.ones(n)
        state.gate_digest = gate_digest(state.frozen_gates)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            xb, yb = train_set.x[idx], train_set.y[idx]
            left, right, w = mixup_indices(yb, config.alpha, rng)
            res = openauc_risk(state.model, xb, yb, state.frozen_gates[idx], left, right, w, config.lam)
            if not np.isfinite(res.loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, step {step}: {res.loss}")
            for name in PARAM_NAMES:
                getattr(state.model, name)[...] -= config.learning_rate * res.grads[name]
            state.loss_history.append({
                "epoch": epoch,
                "step": step,
                "loss": res.loss,
                "close_loss": res.close_loss,
                "auc_loss": res.auc_loss,
                "gate_fraction": float(state.frozen_gates[idx].mean()),
                "open_pairs": len(w),
            })
            step += 1
            if callback is not None:
                callback(state, step)
    state.epoch = config.epochs
    result = TrainResult(state)
    if test_set is not None:
        result.test_table = predict_table(state.model, test_set)
        result.report = evaluate_table(result.test_table)
    return result


@dataclass
class Ablation:
    gated: TrainResult
    ungated: TrainResult

    @property
    def openauc(self) -> dict:
        return {
            "gated": self.gated.report.scalars.get("openauc"),
            "ungated": self.ungated.report.scalars.get("openauc"),
        }


def ablate_gate(train_set: Dataset, config: TrainConfig, test_set: Dataset, init_model: Optional[Mlp] = None) -> Ablation:
    """Train with and without the correctness gate under the same seed."""
    gated = train(train_set, replace(config, gated=True), test_set, init_model)
    ungated = train(train_set, replace(config, gated=False), test_set, init_model)
    return Ablation(gated, ungated)
