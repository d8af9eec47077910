"""Feature-map plugins at toy tensor scale: a softmax-pooled global
context block and single-head scaled dot-product attention with sinusoidal
positional encoding. Parameters are always supplied, never trained."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LAYERNORM_EPS = 1e-5


@dataclass
class GCBParams:
    """Global-context block parameters for a C-channel map.

    ``key_weight`` projects each spatial position to one attention logit;
    the pooled context vector then passes through a bottleneck transform:
    squeeze (C -> C/r), layer norm, ReLU, expand (C/r -> C).
    """

    key_weight: np.ndarray      # (C,)
    squeeze_weight: np.ndarray  # (Cr, C)
    ln_gamma: np.ndarray        # (Cr,)
    ln_beta: np.ndarray         # (Cr,)
    expand_weight: np.ndarray   # (C, Cr)

    def __post_init__(self):
        self.key_weight = np.asarray(self.key_weight, dtype=float)
        self.squeeze_weight = np.asarray(self.squeeze_weight, dtype=float)
        self.ln_gamma = np.asarray(self.ln_gamma, dtype=float)
        self.ln_beta = np.asarray(self.ln_beta, dtype=float)
        self.expand_weight = np.asarray(self.expand_weight, dtype=float)
        c = self.key_weight.shape[0]
        cr = self.squeeze_weight.shape[0]
        if self.squeeze_weight.shape != (cr, c):
            raise ValueError("squeeze weight must be (C/r, C)")
        if self.ln_gamma.shape != (cr,) or self.ln_beta.shape != (cr,):
            raise ValueError("layer norm parameters must be (C/r,)")
        if self.expand_weight.shape != (c, cr):
            raise ValueError("expand weight must be (C, C/r)")

    @property
    def channels(self) -> int:
        return self.key_weight.shape[0]

    @classmethod
    def random(cls, channels: int, reduction: int = 16,
               rng: np.random.Generator | None = None) -> "GCBParams":
        """Gaussian weights with unit layer norm, like a freshly
        initialized block."""
        if reduction < 1:
            raise ValueError(f"reduction must be >= 1, got {reduction}")
        rng = rng or np.random.default_rng()
        cr = max(channels // reduction, 1)
        return cls(
            key_weight=rng.normal(size=channels),
            squeeze_weight=rng.normal(size=(cr, channels)),
            ln_gamma=np.ones(cr),
            ln_beta=np.zeros(cr),
            expand_weight=rng.normal(size=(channels, cr)),
        )


def global_context_pool(x: np.ndarray, key_weight: np.ndarray) -> np.ndarray:
    """Softmax-attention pooling of a (C, H, W) map into one C-vector.

    Logits come from a 1x1 key projection of each position; uniform logits
    (zero key weights) make this exactly the spatial average.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"input must be (C, H, W), got {x.shape}")
    c, h, w = x.shape
    key_weight = np.asarray(key_weight, dtype=float)
    if key_weight.shape != (c,):
        raise ValueError(
            f"key weight must be ({c},), got {key_weight.shape}"
        )
    flat = x.reshape(c, h * w)
    logits = key_weight @ flat
    logits = logits - np.max(logits)
    attn = np.exp(logits)
    attn /= np.sum(attn)
    return flat @ attn


def global_context_block(x: np.ndarray, p: GCBParams) -> np.ndarray:
    """Add a softmax-pooled, transformed context vector to every position.

    Attention logits come from a 1x1 key projection; their softmax over
    all H*W positions weights the pooling, so zero key weights reduce the
    pooling to a plain spatial average. The pooled vector runs through the
    bottleneck transform and is broadcast-added to the input.

    Returns:
        Array with the same (C, H, W) shape as ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"input must be (C, H, W), got {x.shape}")
    c = x.shape[0]
    if c != p.channels:
        raise ValueError(f"params built for {p.channels} channels, map has {c}")

    context = global_context_pool(x, p.key_weight)
    squeezed = p.squeeze_weight @ context
    mu = np.mean(squeezed)
    var = np.mean((squeezed - mu) ** 2)
    normed = (squeezed - mu) / np.sqrt(var + LAYERNORM_EPS)
    normed = normed * p.ln_gamma + p.ln_beta
    transformed = p.expand_weight @ np.maximum(normed, 0.0)
    return x + transformed[:, None, None]


def positional_encoding(h: int, w: int, c: int) -> np.ndarray:
    """Sinusoidal position code over row-major flattened positions.

    Channel pair 2i holds ``sin(pos / 10000^(2i/c))`` and channel 2i+1 the
    matching cosine; values lie in [-1, 1] and the result is fully
    deterministic.

    Returns:
        (c, h, w) array.

    Raises:
        ValueError: if ``c`` is odd or any dimension non-positive.
    """
    if h < 1 or w < 1:
        raise ValueError(f"spatial size must be positive, got {(h, w)}")
    if c < 2 or c % 2:
        raise ValueError(f"channel count must be even and >= 2, got {c}")
    pos = np.arange(h * w, dtype=float)
    pairs = np.arange(c // 2, dtype=float)
    rates = 1.0 / np.power(10000.0, 2.0 * pairs / c)
    angles = pos[None, :] * rates[:, None]  # (c/2, h*w)
    enc = np.empty((c, h * w))
    enc[0::2] = np.sin(angles)
    enc[1::2] = np.cos(angles)
    return enc.reshape(c, h, w)


@dataclass
class AttentionParams:
    """Square query/key/value projections for C-channel attention."""

    query: np.ndarray  # (C, C)
    key: np.ndarray    # (C, C)
    value: np.ndarray  # (C, C)

    def __post_init__(self):
        self.query = np.asarray(self.query, dtype=float)
        self.key = np.asarray(self.key, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        c = self.query.shape[0]
        for name, m in (("query", self.query), ("key", self.key),
                        ("value", self.value)):
            if m.shape != (c, c) or not np.all(np.isfinite(m)):
                raise ValueError(f"{name} projection must be finite (C, C)")

    @property
    def channels(self) -> int:
        return self.query.shape[0]

    @classmethod
    def identity(cls, channels: int) -> "AttentionParams":
        eye = np.eye(channels)
        return cls(eye.copy(), eye.copy(), eye.copy())

    @classmethod
    def random(cls, channels: int,
               rng: np.random.Generator | None = None) -> "AttentionParams":
        rng = rng or np.random.default_rng()
        return cls(rng.normal(size=(channels, channels)),
                   rng.normal(size=(channels, channels)),
                   rng.normal(size=(channels, channels)))


def attention_weights(x: np.ndarray, p: AttentionParams) -> np.ndarray:
    """The (N, N) softmax attention matrix; each row sums to 1."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError(f"input must be (C, N), got {x.shape}")
    c = x.shape[0]
    if c != p.channels:
        raise ValueError(f"params built for {p.channels} channels, input has {c}")
    q = p.query @ x  # (C, N)
    k = p.key @ x
    scores = (q.T @ k) / np.sqrt(c)  # (N, N)
    scores = scores - np.max(scores, axis=1, keepdims=True)
    e = np.exp(scores)
    return e / np.sum(e, axis=1, keepdims=True)


def single_head_attention(x: np.ndarray, p: AttentionParams) -> np.ndarray:
    """Scaled dot-product attention over N positions of a (C, N) input.

    Output position i is the attention-weighted combination of the value
    projections: ``out[:, i] = sum_j A[i, j] * (V x)[:, j]``.
    """
    weights = attention_weights(x, p)
    v = p.value @ np.asarray(x, dtype=float)
    return v @ weights.T
