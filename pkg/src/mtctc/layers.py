"""Neural network layers on top of the tape: linear maps, LSTM stacks,
pre-norm transformer blocks, and frame stacking for downsampled memories."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .tensor import (
    MASKED,
    Tensor,
    apply_op,
    concat,
    gelu,
    layer_norm,
    matmul,
    narrow,
    reshape,
    softmax_rows,
    take_rows,
    transpose,
)


class Module:
    """Minimal parameter container; children discovered from attributes."""

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            yield from _walk(f"{prefix}{name}", value)

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def _walk(path: str, value):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(f"{path}.")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(f"{path}.{i}", item)
    elif isinstance(value, dict):
        for key, item in value.items():
            yield from _walk(f"{path}.{key}", item)


def count_parameters(module: Module) -> int:
    return sum(t.data.size for _, t in module.named_parameters())


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Linear(Module):
    """Affine map y = x @ W.T + b with weight stored as (out, in)."""

    def __init__(self, rng: np.random.Generator, in_dim: int, out_dim: int):
        self.weight = _uniform(rng, in_dim, (out_dim, in_dim))
        self.bias = _uniform(rng, in_dim, (out_dim,))

    def forward(self, x: Tensor) -> Tensor:
        return matmul(x, transpose(self.weight)) + self.bias

    __call__ = forward


class Embedding(Module):
    def __init__(self, rng: np.random.Generator, vocab_size: int, dim: int):
        self.weight = Tensor(rng.normal(0.0, 0.02, size=(vocab_size, dim)), requires_grad=True)

    def forward(self, ids) -> Tensor:
        return take_rows(self.weight, ids)

    __call__ = forward


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim), requires_grad=True)
        self.bias = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, eps=self.eps)

    __call__ = forward


@lru_cache(maxsize=32)
def _positions(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    idx = np.arange(dim // 2)[None, :]
    angle = pos / np.power(10000.0, 2.0 * idx / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    table.setflags(write=False)
    return table


def sinusoidal_positions(length: int, dim: int) -> Tensor:
    """Fixed sin/cos position table, shape (length, dim)."""
    if dim % 2:
        raise ValueError(f"position dimension must be even, got {dim}")
    return Tensor(_positions(length, dim))


@lru_cache(maxsize=32)
def _causal_mask(length: int) -> np.ndarray:
    mask = np.triu(np.full((length, length), MASKED), k=1)
    mask.setflags(write=False)
    return mask


def _lstm_kernel(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """One unidirectional LSTM layer over a (T, in) sequence, zero initial state.

    Runs as a single tape op with a hand-rolled truncation-free backward pass;
    gate layout along the 4h axis is [input, forget, cell, output].
    """
    xd, wid, whd, bd = x.data, w_ih.data, w_hh.data, bias.data
    steps = xd.shape[0]
    hidden = whd.shape[1]
    pre = xd @ wid.T + bd  # (T, 4h)

    i_s = np.empty((steps, hidden))
    f_s = np.empty((steps, hidden))
    g_s = np.empty((steps, hidden))
    o_s = np.empty((steps, hidden))
    c_s = np.empty((steps, hidden))
    tc_s = np.empty((steps, hidden))
    h_prev_s = np.empty((steps, hidden))
    out = np.empty((steps, hidden))

    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for t in range(steps):
        h_prev_s[t] = h
        z = pre[t] + h @ whd.T
        i = expit(z[:hidden])
        f = expit(z[hidden : 2 * hidden])
        g = np.tanh(z[2 * hidden : 3 * hidden])
        o = expit(z[3 * hidden :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        i_s[t], f_s[t], g_s[t], o_s[t] = i, f, g, o
        c_s[t], tc_s[t] = c, tc
        out[t] = h

    x_rg = x.requires_grad

    def rule(grad_h: np.ndarray):
        d_z = np.empty((steps, 4 * hidden))
        d_whh = np.zeros_like(whd)
        dh_carry = np.zeros(hidden)
        dc_carry = np.zeros(hidden)
        for t in range(steps - 1, -1, -1):
            dh = grad_h[t] + dh_carry
            do = dh * tc_s[t]
            dc = dh * o_s[t] * (1.0 - tc_s[t] * tc_s[t]) + dc_carry
            c_prev = c_s[t - 1] if t > 0 else 0.0
            df = dc * c_prev
            di = dc * g_s[t]
            dg = dc * i_s[t]
            dc_carry = dc * f_s[t]
            dz = d_z[t]
            dz[:hidden] = di * i_s[t] * (1.0 - i_s[t])
            dz[hidden : 2 * hidden] = df * f_s[t] * (1.0 - f_s[t])
            dz[2 * hidden : 3 * hidden] = dg * (1.0 - g_s[t] * g_s[t])
            dz[3 * hidden :] = do * o_s[t] * (1.0 - o_s[t])
            d_whh += np.outer(dz, h_prev_s[t])
            dh_carry = dz @ whd
        d_x = d_z @ wid if x_rg else None
        d_wih = d_z.T @ xd
        d_bias = d_z.sum(axis=0)
        return (d_x, d_wih, d_whh, d_bias)

    return apply_op(out, (x, w_ih, w_hh, bias), rule)


class LstmStack(Module):
    """Stacked LSTM; optional bidirectional mode doubles the output width."""

    def __init__(
        self,
        rng: np.random.Generator,
        input_size: int,
        hidden_size: int,
        num_layers: int = 1,
        bidirectional: bool = False,
    ):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.bidirectional = bidirectional
        self.forward_weights = []
        self.backward_weights = []
        width = hidden_size * (2 if bidirectional else 1)
        for layer in range(num_layers):
            in_dim = input_size if layer == 0 else width
            self.forward_weights.append(self._gate_params(rng, in_dim, hidden_size))
            if bidirectional:
                self.backward_weights.append(self._gate_params(rng, in_dim, hidden_size))

    @staticmethod
    def _gate_params(rng, in_dim: int, hidden: int) -> list[Tensor]:
        return [
            _uniform(rng, hidden, (4 * hidden, in_dim)),
            _uniform(rng, hidden, (4 * hidden, hidden)),
            _uniform(rng, hidden, (4 * hidden,)),
        ]

    def forward(self, x: Tensor) -> Tensor:
        for layer in range(self.num_layers):
            w_ih, w_hh, bias = self.forward_weights[layer]
            fwd = _lstm_kernel(x, w_ih, w_hh, bias)
            if self.bidirectional:
                flip = np.arange(x.shape[0] - 1, -1, -1)
                w_ih_b, w_hh_b, bias_b = self.backward_weights[layer]
                rev = _lstm_kernel(take_rows(x, flip), w_ih_b, w_hh_b, bias_b)
                x = concat([fwd, take_rows(rev, flip)], axis=1)
            else:
                x = fwd
        return x

    __call__ = forward


class MultiHeadAttention(Module):
    def __init__(self, rng: np.random.Generator, dim: int, num_heads: int):
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.query = Linear(rng, dim, dim)
        self.key = Linear(rng, dim, dim)
        self.value = Linear(rng, dim, dim)
        self.out = Linear(rng, dim, dim)

    def forward(
        self,
        queries: Tensor,
        memory: Tensor,
        causal: bool = False,
        return_weights: bool = False,
    ):
        q = self.query(queries)
        k = self.key(memory)
        v = self.value(memory)
        scale = 1.0 / math.sqrt(self.head_dim)
        mask = None
        if causal:
            if queries.shape[0] != memory.shape[0]:
                raise ValueError("causal attention requires matching lengths")
            mask = Tensor(_causal_mask(queries.shape[0]))
        heads = []
        weights = []
        for h in range(self.num_heads):
            lo = h * self.head_dim
            qs = narrow(q, 1, lo, self.head_dim)
            ks = narrow(k, 1, lo, self.head_dim)
            vs = narrow(v, 1, lo, self.head_dim)
            logits = matmul(qs, transpose(ks)) * scale
            if mask is not None:
                logits = logits + mask
            attn = softmax_rows(logits)
            if return_weights:
                weights.append(attn.data.copy())
            heads.append(matmul(attn, vs))
        merged = self.out(concat(heads, axis=1))
        return (merged, weights) if return_weights else merged

    __call__ = forward


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, dim: int, hidden: int):
        self.lift = Linear(rng, dim, hidden)
        self.drop = Linear(rng, hidden, dim)

    def forward(self, x: Tensor) -> Tensor:
        return self.drop(gelu(self.lift(x)))

    __call__ = forward


class TransformerEncoderBlock(Module):
    """Pre-norm self-attention block: x + Att(LN(x)), then x + FF(LN(x))."""

    def __init__(self, rng: np.random.Generator, dim: int, num_heads: int, ff_dim: int):
        self.norm_attn = LayerNorm(dim)
        self.attention = MultiHeadAttention(rng, dim, num_heads)
        self.norm_ff = LayerNorm(dim)
        self.feed_forward = FeedForward(rng, dim, ff_dim)

    def forward(self, x: Tensor, return_weights: bool = False):
        normed = self.norm_attn(x)
        if return_weights:
            attended, weights = self.attention(normed, normed, return_weights=True)
        else:
            attended = self.attention(normed, normed)
        x = x + attended
        x = x + self.feed_forward(self.norm_ff(x))
        return (x, weights) if return_weights else x

    __call__ = forward


class TransformerDecoderBlock(Module):
    """Pre-norm causal self-attention, cross-attention over a memory, feed-forward."""

    def __init__(self, rng: np.random.Generator, dim: int, num_heads: int, ff_dim: int):
        self.norm_self = LayerNorm(dim)
        self.self_attention = MultiHeadAttention(rng, dim, num_heads)
        self.norm_cross = LayerNorm(dim)
        self.cross_attention = MultiHeadAttention(rng, dim, num_heads)
        self.norm_ff = LayerNorm(dim)
        self.feed_forward = FeedForward(rng, dim, ff_dim)

    def forward(self, x: Tensor, memory: Tensor) -> Tensor:
        normed = self.norm_self(x)
        x = x + self.self_attention(normed, normed, causal=True)
        x = x + self.cross_attention(self.norm_cross(x), memory)
        x = x + self.feed_forward(self.norm_ff(x))
        return x

    __call__ = forward


class FrameStackProjector(Module):
    """Stack n consecutive frames (zero-padding the tail) and project.

    Output length is ceil(T / n); n = 1 reduces to a plain projection.
    """

    def __init__(self, rng: np.random.Generator, stack: int, in_dim: int, out_dim: int):
        if stack < 1:
            raise ValueError(f"stack factor must be >= 1, got {stack}")
        self.stack = stack
        self.in_dim = in_dim
        self.project = Linear(rng, stack * in_dim, out_dim)

    def forward(self, x: Tensor) -> Tensor:
        frames, dim = x.shape
        if dim != self.in_dim:
            raise ValueError(f"expected feature dim {self.in_dim}, got {dim}")
        n = self.stack
        if n > 1:
            remainder = frames % n
            if remainder:
                pad = Tensor(np.zeros((n - remainder, dim)))
                x = concat([x, pad], axis=0)
            x = reshape(x, (x.shape[0] // n, n * dim))
        return self.project(x)

    __call__ = forward
