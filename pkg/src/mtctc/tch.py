"""Talker-count head: masked attentive statistics pooling over encoder
frames followed by a two-layer classifier choosing between 2 and 3 talkers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import Module, _uniform
from .tensor import (
    Tensor,
    concat,
    div,
    dropout,
    exp,
    gelu,
    layer_norm,
    log_softmax_rows,
    matmul,
    mean_,
    pick,
    reshape,
    sqrt,
    sum_,
    tanh,
    transpose,
)

COUNT_CLASSES = (2, 3)


@dataclass
class ActivityMask:
    """Boolean frame mask; inactive frames get exactly zero attention."""

    active: np.ndarray

    def __post_init__(self):
        self.active = np.asarray(self.active, dtype=bool)
        if self.active.ndim != 1:
            raise ValueError("mask must be 1-d over frames")
        if not self.active.any():
            raise ValueError("mask must keep at least one frame active")

    @classmethod
    def full(cls, frames: int) -> "ActivityMask":
        return cls(np.ones(frames, dtype=bool))

    @classmethod
    def from_energy(cls, features: np.ndarray, fraction: float = 0.01) -> "ActivityMask":
        energy = (np.asarray(features) ** 2).sum(axis=1)
        return cls(energy > fraction * energy.max())


class TalkerCountHead(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        dim: int,
        attn_dim: int = 16,
        hidden: int = 32,
        eps: float = 1e-5,
        dropout_rate: float = 0.1,
    ):
        self.dim = dim
        self.eps = eps
        self.dropout_rate = dropout_rate
        self.attn_weight = _uniform(rng, dim, (attn_dim, dim))
        self.attn_bias = _uniform(rng, dim, (attn_dim,))
        self.attn_vector = _uniform(rng, attn_dim, (attn_dim,))
        # redundant additive offset; softmax cancels it, kept for parity
        # with the classifier's published parameter set
        self.attn_offset = Tensor(0.0, requires_grad=True)
        self.mlp_weight1 = _uniform(rng, 2 * dim, (hidden, 2 * dim))
        self.mlp_bias1 = _uniform(rng, 2 * dim, (hidden,))
        self.mlp_weight2 = _uniform(rng, hidden, (len(COUNT_CLASSES), hidden))
        self.mlp_bias2 = _uniform(rng, hidden, (len(COUNT_CLASSES),))
        self._norm_gain = Tensor(np.ones(2 * dim))
        self._norm_bias = Tensor(np.zeros(2 * dim))

    def attention_weights(self, frames: Tensor, mask: ActivityMask | None = None) -> Tensor:
        """Masked softmax attention over frames, shape (T,)."""
        count = frames.shape[0]
        if mask is None:
            mask = ActivityMask.full(count)
        if mask.active.shape != (count,):
            raise ValueError(
                f"mask covers {mask.active.shape[0]} frames, input has {count}"
            )
        hidden = tanh(matmul(frames, transpose(self.attn_weight)) + self.attn_bias)
        scores = reshape(matmul(hidden, reshape(self.attn_vector, (-1, 1))), (count,))
        scores = scores + self.attn_offset
        # subtracting the active max as a constant changes nothing
        # analytically and keeps the exponentials in range
        shift = float(scores.data[mask.active].max())
        weights = exp(scores - shift) * Tensor(mask.active.astype(np.float64))
        return div(weights, sum_(weights))

    def pooled_stats(self, weights: Tensor, frames: Tensor) -> Tensor:
        """Attention-weighted mean and spread per channel, shape (2*dim,)."""
        row = reshape(weights, (1, -1))
        mean = matmul(row, frames)
        centered = frames - mean
        spread = sqrt(matmul(row, centered * centered) + self.eps)
        return reshape(concat([mean, spread], axis=1), (2 * self.dim,))

    def logits(self, stats: Tensor, training: bool = False, rng=None) -> Tensor:
        normed = layer_norm(stats, self._norm_gain, self._norm_bias)
        hidden = gelu(
            matmul(reshape(normed, (1, -1)), transpose(self.mlp_weight1)) + self.mlp_bias1
        )
        if training:
            if rng is None:
                raise ValueError("training-mode logits need an rng for dropout")
            hidden = dropout(hidden, self.dropout_rate, rng, training=True)
        out = matmul(hidden, transpose(self.mlp_weight2)) + self.mlp_bias2
        return reshape(out, (len(COUNT_CLASSES),))

    def forward(
        self,
        frames: Tensor,
        mask: ActivityMask | None = None,
        training: bool = False,
        rng=None,
    ) -> Tensor:
        weights = self.attention_weights(frames, mask)
        stats = self.pooled_stats(weights, frames)
        return self.logits(stats, training=training, rng=rng)

    __call__ = forward


def predict_count(logits: Tensor) -> int:
    """Most likely talker count; argmax ties resolve to the smaller count."""
    return COUNT_CLASSES[int(np.argmax(logits.data))]


def count_probabilities(logits: Tensor) -> np.ndarray:
    shifted = logits.data - logits.data.max()
    e = np.exp(shifted)
    return e / e.sum()


def count_loss(logit_rows, counts) -> Tensor:
    """Mean cross-entropy of a batch of (2,) logit tensors against counts."""
    if len(logit_rows) != len(counts):
        raise ValueError("batch size mismatch between logits and labels")
    classes = []
    for count in counts:
        if count not in COUNT_CLASSES:
            raise ValueError(f"unsupported talker count {count}")
        classes.append(COUNT_CLASSES.index(count))
    stacked = concat([reshape(row, (1, -1)) for row in logit_rows], axis=0)
    logp = log_softmax_rows(stacked)
    picked = pick(logp, np.arange(len(classes)), np.asarray(classes))
    return -mean_(picked)
