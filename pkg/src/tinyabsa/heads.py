"""Classification heads mapping hidden states to 3-class logits.

Three interchangeable designs: a two-layer fully connected head pooling the
CLS position, a two-layer 1-D convolutional head with masked max pooling,
and a two-layer graph convolutional head propagating over a word graph and
pooling the aspect positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, DimensionError
from .tokenizer import EncodedInput

N_CLASSES = 3
HEAD_KINDS = ("fcn", "cnn", "gcn")


@dataclass(frozen=True)
class HeadConfig:
    kind: str
    dim: int
    fcn_hidden: int = 300
    cnn_channels: int = 100
    cnn_kernel: int = 3
    gcn_layers: int = 2
    window: int = 2

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigurationError(f"unknown head kind {self.kind!r}; use one of {HEAD_KINDS}")
        if min(self.dim, self.fcn_hidden, self.cnn_channels, self.cnn_kernel,
               self.gcn_layers, self.window) < 1:
            raise ConfigurationError(f"head config fields must be >= 1: {self}")
        if self.cnn_kernel % 2 == 0:
            raise ConfigurationError(f"cnn kernel width must be odd, got {self.cnn_kernel}")


def init_head_params(cfg: HeadConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    d = cfg.dim
    params: dict[str, Tensor] = {}
    if cfg.kind == "fcn":
        params["head/fcn/w1"] = ad.param(ad.truncated_normal(rng, (cfg.fcn_hidden, d)))
        params["head/fcn/b1"] = ad.param(np.zeros(cfg.fcn_hidden))
        params["head/fcn/w2"] = ad.param(ad.truncated_normal(rng, (N_CLASSES, cfg.fcn_hidden)))
        params["head/fcn/b2"] = ad.param(np.zeros(N_CLASSES))
    elif cfg.kind == "cnn":
        c = cfg.cnn_channels
        params["head/cnn/k1"] = ad.param(ad.truncated_normal(rng, (cfg.cnn_kernel, d, c)))
        params["head/cnn/b1"] = ad.param(np.zeros(c))
        params["head/cnn/k2"] = ad.param(ad.truncated_normal(rng, (cfg.cnn_kernel, c, c)))
        params["head/cnn/b2"] = ad.param(np.zeros(c))
        params["head/cnn/wout"] = ad.param(ad.truncated_normal(rng, (N_CLASSES, c)))
        params["head/cnn/bout"] = ad.param(np.zeros(N_CLASSES))
    else:
        params["head/gcn/w1"] = ad.param(ad.truncated_normal(rng, (d, d)))
        params["head/gcn/w2"] = ad.param(ad.truncated_normal(rng, (d, d)))
        params["head/gcn/wout"] = ad.param(ad.truncated_normal(rng, (N_CLASSES, d)))
        params["head/gcn/bout"] = ad.param(np.zeros(N_CLASSES))
    return params


def head_param_count(cfg: HeadConfig) -> int:
    """Trainable scalar count of the head alone (encoder excluded)."""
    params = init_head_params(cfg, np.random.default_rng(0))
    return sum(p.size for p in params.values())


def count_parameters(params: dict[str, Tensor], prefix: str = "") -> int:
    return sum(p.size for name, p in params.items() if name.startswith(prefix))


def _affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    # Weights are stored (out, in) as documented; apply as x @ wᵀ + b.
    return ad.add(ad.matmul(x, ad.transpose(w, (1, 0))), b)


def fcn_forward(h: Tensor, params: dict[str, Tensor], training: bool = False,
                p: float = 0.0, rng: np.random.Generator | None = None) -> Tensor:
    """Affine–ReLU–affine over the CLS-position vector."""
    pooled = ad.take_position(h, 0)
    pooled = ad.dropout(pooled, p, training, rng)
    hidden = ad.relu(_affine(pooled, params["head/fcn/w1"], params["head/fcn/b1"]))
    return _affine(hidden, params["head/fcn/w2"], params["head/fcn/b2"])


def cnn_forward(h: Tensor, pad_mask: np.ndarray, params: dict[str, Tensor],
                training: bool = False, p: float = 0.0,
                rng: np.random.Generator | None = None) -> Tensor:
    """Two same-padded convolutions, ReLU between, masked max pool, affine.

    Pad positions are zeroed on the way in and excluded from the pool, so
    appending padding never changes the logits.
    """
    mask = np.asarray(pad_mask)
    if mask.ndim != 2 or mask.shape != h.shape[:2]:
        raise DimensionError(f"cnn_forward: hidden {h.shape} vs pad mask {mask.shape}")
    x = ad.mul_const(h, mask[:, :, None].astype(h.dtype))
    x = ad.relu(ad.conv1d(x, params["head/cnn/k1"], params["head/cnn/b1"]))
    x = ad.relu(ad.conv1d(x, params["head/cnn/k2"], params["head/cnn/b2"]))
    pooled = ad.masked_max_pool(x, mask)
    pooled = ad.dropout(pooled, p, training, rng)
    return _affine(pooled, params["head/cnn/wout"], params["head/cnn/bout"])


# ---------------------------------------------------------------------------
# Word graph


@dataclass
class WordGraph:
    """Symmetric word adjacency and its self-loop-normalized propagation matrix."""

    adjacency: np.ndarray
    normalized: np.ndarray


def normalize_adjacency(adjacency: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Self-loops on the node set, then symmetric degree normalization."""
    a_tilde = adjacency.astype(np.float64).copy()
    idx = np.nonzero(nodes)[0]
    a_tilde[idx, idx] += 1.0
    degrees = a_tilde.sum(axis=1)
    inv_sqrt = np.zeros_like(degrees)
    inv_sqrt[idx] = 1.0 / np.sqrt(degrees[idx])
    return a_tilde * inv_sqrt[:, None] * inv_sqrt[None, :]


def build_word_graph(encoded: EncodedInput, window: int = 2) -> WordGraph:
    """Sliding-window edges over sentence words plus aspect-anchored edges.

    Nodes are the sentence word positions (specials, the aspect segment copy,
    and padding stay isolated with all-zero rows). Every sentence word also
    connects to every aspect-marked position.
    """
    if window < 1:
        raise ConfigurationError(f"word-graph window must be >= 1, got {window}")
    length = encoded.length
    sentence = (encoded.segment == 0) & (encoded.pad_mask == 1)
    sentence[0] = False  # CLS
    sep = np.nonzero((encoded.ids == 3) & (encoded.segment == 0))[0]
    if sep.size:
        sentence[sep[0]] = False
    positions = np.nonzero(sentence)[0]

    adjacency = np.zeros((length, length), dtype=np.float64)
    for i in positions:
        hi = min(i + window, positions[-1] if positions.size else i)
        for j in range(i + 1, hi + 1):
            if sentence[j]:
                adjacency[i, j] = adjacency[j, i] = 1.0
    aspect_positions = np.nonzero(encoded.aspect_mask == 1)[0]
    for i in positions:
        for j in aspect_positions:
            if i != j:
                adjacency[i, j] = adjacency[j, i] = 1.0
    return WordGraph(adjacency=adjacency,
                     normalized=normalize_adjacency(adjacency, sentence))


def stack_graphs(graphs: list[WordGraph], dtype) -> np.ndarray:
    return np.stack([g.normalized for g in graphs]).astype(dtype)


def gcn_forward(h: Tensor, norm_adj: np.ndarray, aspect_mask: np.ndarray,
                params: dict[str, Tensor], training: bool = False, p: float = 0.0,
                rng: np.random.Generator | None = None) -> Tensor:
    """Two propagation layers, mean pool over aspect positions, affine."""
    adj = np.asarray(norm_adj, dtype=h.dtype)
    if adj.shape != (h.shape[0], h.shape[1], h.shape[1]):
        raise DimensionError(f"gcn_forward: hidden {h.shape} vs adjacency {adj.shape}")
    a_hat = Tensor(adj, dtype=h.dtype)
    x = ad.relu(ad.matmul(ad.matmul(a_hat, h), params["head/gcn/w1"]))
    x = ad.relu(ad.matmul(ad.matmul(a_hat, x), params["head/gcn/w2"]))
    pooled = ad.masked_mean_pool(x, aspect_mask)
    pooled = ad.dropout(pooled, p, training, rng)
    return _affine(pooled, params["head/gcn/wout"], params["head/gcn/bout"])


def head_forward(cfg: HeadConfig, h: Tensor, params: dict[str, Tensor],
                 pad_mask: np.ndarray | None = None,
                 aspect_mask: np.ndarray | None = None,
                 norm_adj: np.ndarray | None = None,
                 training: bool = False, p: float = 0.0,
                 rng: np.random.Generator | None = None) -> Tensor:
    if cfg.kind == "fcn":
        return fcn_forward(h, params, training=training, p=p, rng=rng)
    if cfg.kind == "cnn":
        return cnn_forward(h, pad_mask, params, training=training, p=p, rng=rng)
    return gcn_forward(h, norm_adj, aspect_mask, params, training=training, p=p, rng=rng)
