"""Full model assembly: tokenizer + encoder (trainable or frozen) + head.

Checkpoints are self-contained: the tensor container holds every parameter
plus the model config (JSON) and the vocabulary (text) as uint8 blobs, so a
checkpoint alone supports evaluation and prediction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_tensors, save_tensors
from .data import Example, LABELS
from .encoder import (EncoderConfig, PrecomputedEmbeddings, encode_arrays,
                      init_encoder_params, validate_encoder_params)
from .errors import ConfigurationError, DimensionError
from .heads import HeadConfig, build_word_graph, head_forward, init_head_params, stack_graphs
from .tokenizer import (CLS_TOKEN, EncodedInput, PAD_TOKEN, SEP_TOKEN, UNK_TOKEN,
                        Vocab, encode)

CONFIG_KEY = "meta/config"
VOCAB_KEY = "meta/vocab"
MODEL_FORMAT = "tinyabsa-model v1"


@dataclass
class Model:
    vocab: Vocab | None
    encoder_config: EncoderConfig
    head_config: HeadConfig
    params: dict[str, Tensor]
    encoder_preset: str = "tiny"
    precomputed_dim: int | None = None  # set when the encoder is a frozen import

    @property
    def uses_precomputed(self) -> bool:
        return self.precomputed_dim is not None

    def parameter_names(self) -> list[str]:
        return sorted(self.params)


def build_model(vocab: Vocab, enc_cfg: EncoderConfig, head_cfg: HeadConfig,
                rng: np.random.Generator, encoder_preset: str = "tiny") -> Model:
    if head_cfg.dim != enc_cfg.hidden:
        raise DimensionError(f"head dim {head_cfg.dim} does not match encoder hidden "
                             f"{enc_cfg.hidden}")
    params = init_encoder_params(vocab.size, enc_cfg, rng)
    params.update(init_head_params(head_cfg, rng))
    return Model(vocab=vocab, encoder_config=enc_cfg, head_config=head_cfg,
                 params=params, encoder_preset=encoder_preset)


def build_precomputed_model(vocab: Vocab | None, dim: int, max_len: int,
                            head_cfg: HeadConfig, rng: np.random.Generator) -> Model:
    """Heads-only model over frozen external embeddings of width ``dim``."""
    if head_cfg.dim != dim:
        raise DimensionError(f"head dim {head_cfg.dim} does not match embedding dim {dim}")
    enc_cfg = EncoderConfig(layers=1, heads=1, hidden=dim, max_len=max_len)
    params = init_head_params(head_cfg, rng)
    return Model(vocab=vocab, encoder_config=enc_cfg, head_config=head_cfg,
                 params=params, encoder_preset="precomputed", precomputed_dim=dim)


# ---------------------------------------------------------------------------
# Dataset preparation


@dataclass
class PreparedDataset:
    """Encoded arrays for a whole split, sliceable by example index."""

    ids: np.ndarray
    segment: np.ndarray
    aspect: np.ndarray
    pad: np.ndarray
    labels: np.ndarray
    graphs: np.ndarray | None = None
    embeddings: np.ndarray | None = None
    encoded: list[EncodedInput] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.shape[0])


def _mask_only_vocab() -> Vocab:
    # masks, segments, and graphs are span-driven, so an all-UNK vocabulary
    # encodes them identically; used when a frozen-embedding model has none
    return Vocab(token_to_id={PAD_TOKEN: 0, UNK_TOKEN: 1, CLS_TOKEN: 2, SEP_TOKEN: 3})


def prepare_dataset(model: Model, examples: list[Example],
                    embeddings: PrecomputedEmbeddings | None = None) -> PreparedDataset:
    if not examples:
        raise ConfigurationError("cannot prepare an empty example set")
    cfg = model.encoder_config
    vocab = model.vocab if model.vocab is not None else _mask_only_vocab()
    encoded = [encode(ex, vocab, cfg.max_len) for ex in examples]
    ids = np.stack([e.ids for e in encoded])
    seg = np.stack([e.segment for e in encoded])
    aspect = np.stack([e.aspect_mask for e in encoded])
    pad = np.stack([e.pad_mask for e in encoded])
    labels = np.asarray([ex.label for ex in examples], dtype=np.int64)

    graphs = None
    if model.head_config.kind == "gcn":
        graphs = stack_graphs([build_word_graph(e, model.head_config.window) for e in encoded],
                              ad.get_default_dtype())

    emb = None
    if model.uses_precomputed:
        if embeddings is None:
            raise ConfigurationError("this model needs a precomputed-embedding file")
        rows = []
        for i in range(len(examples)):
            arr = embeddings.get(i)
            if arr.shape != (cfg.max_len, model.precomputed_dim):
                raise DimensionError(f"embedding ex{i} has shape {arr.shape}, expected "
                                     f"({cfg.max_len}, {model.precomputed_dim})")
            rows.append(arr)
        emb = np.stack(rows).astype(ad.get_default_dtype())
    return PreparedDataset(ids=ids, segment=seg, aspect=aspect, pad=pad, labels=labels,
                           graphs=graphs, embeddings=emb, encoded=encoded)


def forward_batch(model: Model, ds: PreparedDataset, index: np.ndarray,
                  training: bool = False, rng: np.random.Generator | None = None,
                  dropout_p: float | None = None, capture: list | None = None) -> Tensor:
    """Logits (B, 3) for the rows of ``ds`` selected by ``index``."""
    p = model.encoder_config.dropout if dropout_p is None else dropout_p
    if model.uses_precomputed:
        hidden = Tensor(ds.embeddings[index], dtype=ad.get_default_dtype())
    else:
        hidden = encode_arrays(ds.ids[index], ds.segment[index], ds.pad[index],
                               model.params, model.encoder_config,
                               training=training, rng=rng, capture=capture)
    return head_forward(model.head_config, hidden, model.params,
                        pad_mask=ds.pad[index],
                        aspect_mask=ds.aspect[index],
                        norm_adj=ds.graphs[index] if ds.graphs is not None else None,
                        training=training, p=p, rng=rng)


def predict_proba(model: Model, example: Example) -> np.ndarray:
    """Class probabilities for one example (eval mode, no gradient)."""
    if model.uses_precomputed:
        raise ConfigurationError("prediction needs a trainable-encoder checkpoint; "
                                 "precomputed-embedding models cannot encode new text")
    ds = prepare_dataset(model, [example])
    logits = forward_batch(model, ds, np.array([0]))
    return ad.softmax_rows(logits).values[0]


def predict_label(model: Model, example: Example) -> tuple[str, np.ndarray]:
    probs = predict_proba(model, example)
    return LABELS[int(np.argmax(probs))], probs


# ---------------------------------------------------------------------------
# Checkpoint I/O


def _config_blob(model: Model) -> np.ndarray:
    enc = model.encoder_config
    head = model.head_config
    doc = {
        "format": MODEL_FORMAT,
        "encoder": {
            "preset": model.encoder_preset,
            "layers": enc.layers,
            "heads": enc.heads,
            "hidden": enc.hidden,
            "ffn": enc.ffn,
            "max_len": enc.max_len,
            "dropout": enc.dropout,
        },
        "head": {
            "kind": head.kind,
            "dim": head.dim,
            "fcn_hidden": head.fcn_hidden,
            "cnn_channels": head.cnn_channels,
            "cnn_kernel": head.cnn_kernel,
            "gcn_layers": head.gcn_layers,
            "window": head.window,
        },
        "precomputed_dim": model.precomputed_dim,
        "labels": list(LABELS),
    }
    return np.frombuffer(json.dumps(doc, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def save_model(model: Model, path: str) -> None:
    tensors: dict[str, np.ndarray] = {name: p.values for name, p in model.params.items()}
    tensors[CONFIG_KEY] = _config_blob(model)
    if model.vocab is not None:
        tensors[VOCAB_KEY] = np.frombuffer(model.vocab.to_text().encode("utf-8"), dtype=np.uint8)
    save_tensors(path, tensors)


def load_model(path: str) -> Model:
    tensors = load_tensors(path)
    if CONFIG_KEY not in tensors:
        raise ConfigurationError(f"{path} is not a model checkpoint (missing {CONFIG_KEY})")
    doc = json.loads(tensors.pop(CONFIG_KEY).tobytes().decode("utf-8"))
    if doc.get("format") != MODEL_FORMAT:
        raise ConfigurationError(f"{path}: unsupported model format {doc.get('format')!r}")
    vocab = None
    if VOCAB_KEY in tensors:
        vocab = Vocab.from_text(tensors.pop(VOCAB_KEY).tobytes().decode("utf-8"))
    enc_doc, head_doc = doc["encoder"], doc["head"]
    enc_cfg = EncoderConfig(layers=enc_doc["layers"], heads=enc_doc["heads"],
                            hidden=enc_doc["hidden"], ffn=enc_doc["ffn"],
                            max_len=enc_doc["max_len"], dropout=enc_doc["dropout"])
    head_cfg = HeadConfig(kind=head_doc["kind"], dim=head_doc["dim"],
                          fcn_hidden=head_doc["fcn_hidden"],
                          cnn_channels=head_doc["cnn_channels"],
                          cnn_kernel=head_doc["cnn_kernel"],
                          gcn_layers=head_doc["gcn_layers"], window=head_doc["window"])
    params = {name: ad.param(arr, dtype=arr.dtype) for name, arr in tensors.items()}
    model = Model(vocab=vocab, encoder_config=enc_cfg, head_config=head_cfg, params=params,
                  encoder_preset=enc_doc["preset"], precomputed_dim=doc.get("precomputed_dim"))
    if not model.uses_precomputed:
        if vocab is None:
            raise ConfigurationError(f"{path}: trainable checkpoint lacks a vocabulary blob")
        validate_encoder_params(model.params, vocab.size, enc_cfg)
    return model
