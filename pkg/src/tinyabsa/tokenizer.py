"""Word-level vocabulary and the sentence-aspect pair encoding.

Encoded layout is [CLS] sentence-tokens [SEP] aspect-tokens [SEP] padding,
with segment 0 up to and including the first separator and 1 for the aspect
segment. The aspect mask marks the sentence positions whose character spans
intersect the aspect span; truncation drops left context first and never
drops the aspect.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from collections import Counter
from typing import Iterable

import numpy as np

from .data import Example
from .errors import ConfigurationError, EncodingError, ParseError

PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN = "<pad>", "<unk>", "<cls>", "<sep>"
RESERVED = (PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN)

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

VOCAB_MAGIC = "tinyabsa-vocab"
VOCAB_VERSION = 1


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Lowercased word/punctuation tokens with their character spans."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def tokenize(text: str) -> list[str]:
    return [tok for tok, _, _ in tokenize_with_spans(text)]


@dataclass
class Vocab:
    """Frozen token-to-id map with the four reserved ids pinned at 0..3."""

    token_to_id: dict[str, int]
    min_freq: int = 1

    def __post_init__(self):
        for tok, want in zip(RESERVED, range(4)):
            if self.token_to_id.get(tok) != want:
                raise ConfigurationError(f"vocab must map {tok} to id {want}")
        ids = sorted(self.token_to_id.values())
        if ids != list(range(len(ids))):
            raise ConfigurationError("vocab ids must be dense in [0, size)")

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def id_to_token(self) -> dict[int, str]:
        return {i: t for t, i in self.token_to_id.items()}

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{VOCAB_MAGIC} {VOCAB_VERSION} min_freq={self.min_freq} size={self.size}\n")
            for token, idx in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split()
            if len(header) < 2 or header[0] != VOCAB_MAGIC:
                raise ParseError(f"{path}:1: not a {VOCAB_MAGIC} file")
            if header[1] != str(VOCAB_VERSION):
                raise ParseError(f"{path}:1: unsupported vocab version {header[1]}")
            settings = dict(kv.split("=", 1) for kv in header[2:])
            mapping: dict[str, int] = {}
            for lineno, line in enumerate(fh, start=2):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    token, idx = line.split("\t")
                    mapping[token] = int(idx)
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: malformed vocab row {line!r}") from None
        return cls(token_to_id=mapping, min_freq=int(settings.get("min_freq", 1)))

    def to_text(self) -> str:
        lines = [f"{VOCAB_MAGIC} {VOCAB_VERSION} min_freq={self.min_freq} size={self.size}"]
        lines += [f"{t}\t{i}" for t, i in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "Vocab":
        header, *rows = text.strip("\n").split("\n")
        fields = header.split()
        settings = dict(kv.split("=", 1) for kv in fields[2:])
        mapping = {}
        for row in rows:
            token, idx = row.split("\t")
            mapping[token] = int(idx)
        return cls(token_to_id=mapping, min_freq=int(settings.get("min_freq", 1)))


def build_vocab(texts: Iterable[str], min_freq: int = 1) -> Vocab:
    """Frequency-then-lexicographic ids over lowercased word/punct tokens."""
    counts: Counter[str] = Counter()
    n_texts = 0
    for text in texts:
        n_texts += 1
        counts.update(tokenize(text))
    if n_texts == 0:
        raise ConfigurationError("cannot build a vocabulary from an empty corpus")
    mapping = {tok: i for i, tok in enumerate(RESERVED)}
    kept = sorted((t for t, c in counts.items() if c >= min_freq),
                  key=lambda t: (-counts[t], t))
    for token in kept:
        mapping[token] = len(mapping)
    return Vocab(token_to_id=mapping, min_freq=min_freq)


@dataclass
class EncodedInput:
    """Fixed-length id sequence plus segment, aspect, and padding masks."""

    ids: np.ndarray
    segment: np.ndarray
    aspect_mask: np.ndarray
    pad_mask: np.ndarray

    @property
    def length(self) -> int:
        return int(self.ids.shape[0])


def encode(example: Example, vocab: Vocab, max_len: int = 64) -> EncodedInput:
    """Encode one example; raises EncodingError when the aspect cannot fit."""
    example.validate()
    tokens = tokenize_with_spans(example.text)
    aspect_positions = [i for i, (_, s, e) in enumerate(tokens)
                        if s < example.aspect_end and e > example.aspect_start]
    aspect_tokens = tokenize(example.aspect)
    if not aspect_positions or not aspect_tokens:
        raise EncodingError(f"aspect {example.aspect!r} yields no tokens")
    budget = max_len - 3 - len(aspect_tokens)
    first_a, last_a = aspect_positions[0], aspect_positions[-1]
    if budget < last_a - first_a + 1:
        raise EncodingError(
            f"max length {max_len} cannot hold the aspect: needs "
            f"{last_a - first_a + 1} sentence + {len(aspect_tokens)} aspect tokens + 3 specials")
    lo, hi = 0, len(tokens)
    while hi - lo > budget:
        if lo < first_a:
            lo += 1  # drop left context first
        else:
            hi -= 1
    window = tokens[lo:hi]

    ids = [CLS_ID] + [vocab.id(t) for t, _, _ in window] + [SEP_ID]
    segment = [0] * len(ids)
    aspect_mask = [0] + [1 if lo + i in aspect_positions else 0
                         for i in range(len(window))] + [0]
    ids += [vocab.id(t) for t in aspect_tokens] + [SEP_ID]
    segment += [1] * (len(aspect_tokens) + 1)
    aspect_mask += [0] * (len(aspect_tokens) + 1)
    pad_mask = [1] * len(ids)

    filler = max_len - len(ids)
    ids += [PAD_ID] * filler
    segment += [0] * filler
    aspect_mask += [0] * filler
    pad_mask += [0] * filler
    return EncodedInput(
        ids=np.asarray(ids, dtype=np.int64),
        segment=np.asarray(segment, dtype=np.int64),
        aspect_mask=np.asarray(aspect_mask, dtype=np.int64),
        pad_mask=np.asarray(pad_mask, dtype=np.int64),
    )


def decode(encoded: EncodedInput, vocab: Vocab) -> list[str]:
    """Tokens for the non-pad positions, with ids mapped back to strings."""
    inverse = vocab.id_to_token()
    return [inverse[int(i)] for i, real in zip(encoded.ids, encoded.pad_mask) if real]
