"""Per-token hidden states: a small trainable transformer, or frozen imports.

Each layer applies multi-head self-attention with additive masking of pad
keys, a residual + layer norm, a position-wise ReLU feed-forward block, and
a second residual + layer norm (post-norm placement). Token embeddings are
the sum of word, position, and segment embeddings.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_tensors, save_tensors
from .errors import ConfigurationError, DimensionError, EmbeddingLookupError
from .tokenizer import EncodedInput

ATTENTION_MASK_BIAS = -1e9  # large-negative additive bias; keeps buffers finite


@dataclass(frozen=True)
class EncoderConfig:
    layers: int
    heads: int
    hidden: int
    ffn: int | None = None
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        if min(self.layers, self.heads, self.hidden, self.max_len) < 1:
            raise ConfigurationError(f"encoder config fields must be >= 1: {self}")
        if self.hidden % self.heads != 0:
            raise ConfigurationError(
                f"hidden size {self.hidden} is not divisible by {self.heads} heads")
        if self.ffn is None:
            object.__setattr__(self, "ffn", 4 * self.hidden)

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


# Working default is tiny; the two *-like presets give config parity with
# full-scale setups (the large-model preset uses 16 heads since 1024 does not
# divide into 12).
PRESETS: dict[str, EncoderConfig] = {
    "tiny": EncoderConfig(layers=2, heads=2, hidden=64),
    "small": EncoderConfig(layers=4, heads=4, hidden=128),
    "bert-base-like": EncoderConfig(layers=12, heads=12, hidden=768),
    "covid-twitter-bert-like": EncoderConfig(layers=12, heads=16, hidden=1024),
}


def preset(name: str, **overrides) -> EncoderConfig:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise ConfigurationError(f"unknown encoder preset {name!r}; known presets: {known}")
    cfg = PRESETS[name]
    return replace(cfg, **overrides) if overrides else cfg


def init_encoder_params(vocab_size: int, cfg: EncoderConfig,
                        rng: np.random.Generator) -> dict[str, Tensor]:
    """Truncated-normal (std 0.02) weights, zero biases, unit layer-norm gains."""
    d, f = cfg.hidden, cfg.ffn
    params: dict[str, Tensor] = {
        "enc/emb/word": ad.param(ad.truncated_normal(rng, (vocab_size, d))),
        "enc/emb/pos": ad.param(ad.truncated_normal(rng, (cfg.max_len, d))),
        "enc/emb/seg": ad.param(ad.truncated_normal(rng, (2, d))),
    }
    for i in range(cfg.layers):
        base = f"enc/layer{i}"
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{base}/attn/{name}"] = ad.param(ad.truncated_normal(rng, (d, d)))
            params[f"{base}/attn/b{name[1]}"] = ad.param(np.zeros(d))
        params[f"{base}/ln1/gain"] = ad.param(np.ones(d))
        params[f"{base}/ln1/bias"] = ad.param(np.zeros(d))
        params[f"{base}/ffn/w1"] = ad.param(ad.truncated_normal(rng, (d, f)))
        params[f"{base}/ffn/b1"] = ad.param(np.zeros(f))
        params[f"{base}/ffn/w2"] = ad.param(ad.truncated_normal(rng, (f, d)))
        params[f"{base}/ffn/b2"] = ad.param(np.zeros(d))
        params[f"{base}/ln2/gain"] = ad.param(np.ones(d))
        params[f"{base}/ln2/bias"] = ad.param(np.zeros(d))
    return params


def validate_encoder_params(params: dict[str, Tensor], vocab_size: int,
                            cfg: EncoderConfig) -> None:
    expected = {name: p.shape for name, p in
                init_encoder_params(vocab_size, cfg, np.random.default_rng(0)).items()}
    for name, shape in expected.items():
        if name not in params:
            raise DimensionError(f"missing encoder parameter {name}")
        if params[name].shape != shape:
            raise DimensionError(
                f"encoder parameter {name} has shape {params[name].shape}, expected {shape}")


def stack_batch(inputs: list[EncodedInput]) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    ids = np.stack([e.ids for e in inputs])
    seg = np.stack([e.segment for e in inputs])
    aspect = np.stack([e.aspect_mask for e in inputs])
    pad = np.stack([e.pad_mask for e in inputs])
    return ids, seg, aspect, pad


def encode_arrays(ids: np.ndarray, seg: np.ndarray, pad: np.ndarray,
                  params: dict[str, Tensor], cfg: EncoderConfig,
                  training: bool = False, rng: np.random.Generator | None = None,
                  capture: list | None = None) -> Tensor:
    """Forward over pre-stacked (B, L) id/segment/pad arrays; returns (B, L, D)."""
    b, length = ids.shape
    if length != cfg.max_len:
        raise DimensionError(f"batch length {length} does not match config max_len {cfg.max_len}")
    p = cfg.dropout
    positions = np.broadcast_to(np.arange(length, dtype=np.int64), (b, length))

    x = ad.add(ad.add(ad.embedding(params["enc/emb/word"], ids),
                      ad.embedding(params["enc/emb/pos"], positions)),
               ad.embedding(params["enc/emb/seg"], seg))
    x = ad.dropout(x, p, training, rng)

    # Pad keys receive a large negative score before the softmax, so their
    # attention weight underflows to exactly zero.
    mask_bias = ((1.0 - pad.astype(np.float64)) * ATTENTION_MASK_BIAS).reshape(b, 1, 1, length)
    inv_sqrt = 1.0 / math.sqrt(cfg.head_dim)

    for i in range(cfg.layers):
        base = f"enc/layer{i}"

        def project(name: str) -> Tensor:
            out = ad.add(ad.matmul(x, params[f"{base}/attn/w{name}"]),
                         params[f"{base}/attn/b{name}"])
            out = ad.reshape(out, (b, length, cfg.heads, cfg.head_dim))
            return ad.transpose(out, (0, 2, 1, 3))

        q, k, v = project("q"), project("k"), project("v")
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), inv_sqrt)
        scores = ad.add_const(scores, mask_bias)
        probs = ad.softmax(scores)
        if capture is not None:
            capture.append(probs.values.copy())
        probs = ad.dropout(probs, p, training, rng)
        context = ad.transpose(ad.matmul(probs, v), (0, 2, 1, 3))
        context = ad.reshape(context, (b, length, cfg.hidden))
        attn_out = ad.add(ad.matmul(context, params[f"{base}/attn/wo"]),
                          params[f"{base}/attn/bo"])
        attn_out = ad.dropout(attn_out, p, training, rng)
        x = ad.layer_norm(ad.add(x, attn_out),
                          params[f"{base}/ln1/gain"], params[f"{base}/ln1/bias"])

        hidden = ad.relu(ad.add(ad.matmul(x, params[f"{base}/ffn/w1"]),
                                params[f"{base}/ffn/b1"]))
        hidden = ad.add(ad.matmul(hidden, params[f"{base}/ffn/w2"]),
                        params[f"{base}/ffn/b2"])
        hidden = ad.dropout(hidden, p, training, rng)
        x = ad.layer_norm(ad.add(x, hidden),
                          params[f"{base}/ln2/gain"], params[f"{base}/ln2/bias"])
    return x


def encode_batch(inputs: list[EncodedInput], params: dict[str, Tensor], cfg: EncoderConfig,
                 training: bool = False, rng: np.random.Generator | None = None,
                 capture: list | None = None) -> Tensor:
    """Hidden states (B, L, D) for a batch of encoded inputs."""
    ids, seg, _, pad = stack_batch(inputs)
    return encode_arrays(ids, seg, pad, params, cfg, training=training, rng=rng,
                         capture=capture)


# ---------------------------------------------------------------------------
# Precomputed (frozen) embeddings


_EXAMPLE_KEY = re.compile(r"^ex(\d+)$")


class PrecomputedEmbeddings:
    """Frozen per-example hidden states keyed ``ex<index>``.

    Gradients never flow into these: lookups return plain arrays that enter
    the graph as constants.
    """

    def __init__(self, arrays: dict[int, np.ndarray], dim: int):
        self.arrays = arrays
        self.dim = dim

    def __len__(self) -> int:
        return len(self.arrays)

    def get(self, index: int) -> np.ndarray:
        arr = self.arrays.get(int(index))
        if arr is None:
            raise EmbeddingLookupError(f"no embedding stored for example id ex{int(index)}")
        return arr


def save_embeddings(path: str, per_example: list[np.ndarray]) -> None:
    """Export hidden states for external reuse, one (L, D) tensor per example."""
    save_tensors(path, {f"ex{i}": np.asarray(arr) for i, arr in enumerate(per_example)})


def load_precomputed(path: str, expected_dim: int) -> PrecomputedEmbeddings:
    """Load an embedding container, checking every tensor's feature dimension."""
    tensors = load_tensors(path)
    arrays: dict[int, np.ndarray] = {}
    for name, arr in tensors.items():
        m = _EXAMPLE_KEY.match(name)
        if not m:
            raise ConfigurationError(f"{path}: tensor {name!r} is not named ex<index>")
        if arr.ndim != 2 or arr.shape[1] != expected_dim:
            raise DimensionError(
                f"{path}: tensor {name} has shape {arr.shape}, expected (L, {expected_dim})")
        arrays[int(m.group(1))] = arr
    return PrecomputedEmbeddings(arrays, expected_dim)
