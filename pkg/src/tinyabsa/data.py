"""Labeled (sentence, aspect) examples: ingestion, splits, statistics, synthesis.

The interchange format is UTF-8 JSON lines, one record per line with fields
text, aspect, aspect_start, aspect_end, label and an optional category.
Aspect offsets are character offsets (half-open, 0-based) so tokenizer
changes never invalidate data.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParseError, StratificationError, ValidationError

LABELS = ("negative", "neutral", "positive")
LABEL_TO_ID = {name: i for i, name in enumerate(LABELS)}


@dataclass
class Example:
    """One classification instance: a sentence, an aspect span inside it, a polarity."""

    text: str
    aspect: str
    aspect_start: int
    aspect_end: int
    label: int
    category: str | None = None

    def validate(self, where: str = "example") -> "Example":
        if not 0 <= self.aspect_start < self.aspect_end <= len(self.text):
            raise ValidationError(
                f"{where}: aspect span [{self.aspect_start}, {self.aspect_end}) "
                f"outside text of length {len(self.text)}")
        if self.text[self.aspect_start:self.aspect_end] != self.aspect:
            raise ValidationError(
                f"{where}: span text {self.text[self.aspect_start:self.aspect_end]!r} "
                f"does not equal aspect {self.aspect!r}")
        if self.label not in (0, 1, 2):
            raise ValidationError(f"{where}: label {self.label!r} not one of 0/1/2")
        return self


def _parse_label(value, where: str) -> int:
    if isinstance(value, bool):
        raise ValidationError(f"{where}: label {value!r} not recognized")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value in LABEL_TO_ID:
        return LABEL_TO_ID[value]
    raise ValidationError(f"{where}: label {value!r} not recognized "
                          f"(use one of {', '.join(LABELS)} or 0/1/2)")


def example_from_record(record: dict, where: str = "record") -> Example:
    missing = [k for k in ("text", "aspect", "aspect_start", "aspect_end", "label")
               if k not in record]
    if missing:
        raise ValidationError(f"{where}: missing fields {', '.join(missing)}")
    ex = Example(
        text=record["text"],
        aspect=record["aspect"],
        aspect_start=int(record["aspect_start"]),
        aspect_end=int(record["aspect_end"]),
        label=_parse_label(record["label"], where),
        category=record.get("category"),
    )
    return ex.validate(where)


def example_to_record(ex: Example) -> dict:
    record = {
        "text": ex.text,
        "aspect": ex.aspect,
        "aspect_start": ex.aspect_start,
        "aspect_end": ex.aspect_end,
        "label": LABELS[ex.label],
    }
    if ex.category is not None:
        record["category"] = ex.category
    return record


def load_jsonl(path: str) -> list[Example]:
    """Read and validate a JSONL corpus; errors carry line numbers."""
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{lineno}: expected a JSON object")
            where = f"{path}:{lineno} (record {len(examples)})"
            examples.append(example_from_record(record, where))
    return examples


def save_jsonl(path: str, examples: list[Example]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(example_to_record(ex), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Splitting


@dataclass
class SplitSpec:
    """Fractions for train/val/test plus the shuffling seed."""

    train: float = 0.70
    val: float = 0.15
    test: float = 0.15
    stratify: bool = True
    seed: int = 0

    def validate(self) -> "SplitSpec":
        fracs = (self.train, self.val, self.test)
        if any(f <= 0 for f in fracs):
            raise ConfigurationError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must sum to 1, got {sum(fracs):.6f}")
        return self


def _allocate(count: int, fracs: tuple[float, float, float]) -> list[int]:
    # Largest-remainder allocation, then ensure no split starves when count >= 3.
    raw = [count * f for f in fracs]
    sizes = [int(x) for x in raw]
    remainders = sorted(range(3), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in remainders[: count - sum(sizes)]:
        sizes[i] += 1
    if count >= 3:
        while min(sizes) == 0:
            sizes[sizes.index(max(sizes))] -= 1
            sizes[sizes.index(min(sizes))] += 1
    return sizes


def stratified_split(examples: list[Example], spec: SplitSpec) -> tuple[list[Example], list[Example], list[Example]]:
    """Deterministic per-label split; proportions hold within one example per label."""
    spec.validate()
    if not spec.stratify:
        order = np.random.default_rng(spec.seed).permutation(len(examples))
        sizes = _allocate(len(examples), (spec.train, spec.val, spec.test))
        cuts = np.cumsum(sizes)
        picked = [order[:cuts[0]], order[cuts[0]:cuts[1]], order[cuts[1]:cuts[2]]]
        return tuple([examples[i] for i in idx] for idx in picked)  # type: ignore[return-value]

    by_label: dict[int, list[int]] = {label: [] for label in range(len(LABELS))}
    for i, ex in enumerate(examples):
        by_label[ex.label].append(i)
    for label, members in sorted(by_label.items()):
        if len(members) < 3:
            raise StratificationError(
                f"label {LABELS[label]} has only {len(members)} member(s); "
                "three splits need at least 3 of each label")
    rng = np.random.default_rng(spec.seed)
    splits: tuple[list[Example], list[Example], list[Example]] = ([], [], [])
    for label, members in sorted(by_label.items()):
        order = rng.permutation(len(members))
        sizes = _allocate(len(members), (spec.train, spec.val, spec.test))
        start = 0
        for bucket, size in zip(splits, sizes):
            for j in order[start:start + size]:
                bucket.append(examples[members[j]])
            start += size
    return splits


# ---------------------------------------------------------------------------
# Statistics


@dataclass
class StatsReport:
    """Corpus counts: per label, per category, and a token-length histogram."""

    total: int
    label_counts: dict[str, int]
    category_counts: dict[str, int]
    bin_width: int
    length_histogram: list[list[int]] = field(default_factory=list)  # [lo, hi, count]

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)

    def render(self) -> str:
        lines = [f"examples: {self.total}", "labels:"]
        for name in LABELS:
            lines.append(f"  {name:<9} {self.label_counts.get(name, 0)}")
        lines.append("categories:")
        for name, count in sorted(self.category_counts.items()):
            lines.append(f"  {name:<14} {count}")
        lines.append(f"token-length histogram (bin width {self.bin_width}):")
        for lo, hi, count in self.length_histogram:
            lines.append(f"  [{lo},{hi}): {count}")
        return "\n".join(lines)


def corpus_stats(examples: list[Example], bin_width: int = 10) -> StatsReport:
    """Counts are permutation-invariant; lengths are whitespace token counts."""
    if bin_width < 1:
        raise ConfigurationError(f"bin width must be >= 1, got {bin_width}")
    labels = Counter(LABELS[ex.label] for ex in examples)
    categories = Counter((ex.category if ex.category is not None else "(none)")
                         for ex in examples)
    lengths = Counter(len(ex.text.split()) // bin_width for ex in examples)
    histogram = [[b * bin_width, (b + 1) * bin_width, lengths[b]] for b in sorted(lengths)]
    return StatsReport(
        total=len(examples),
        label_counts={name: labels.get(name, 0) for name in LABELS},
        category_counts=dict(sorted(categories.items())),
        bin_width=bin_width,
        length_histogram=histogram,
    )


# ---------------------------------------------------------------------------
# Synthetic corpus


CUE_WORDS = {
    0: ("awful", "terrible", "horrible", "dreadful", "miserable"),
    1: ("ordinary", "average", "routine", "standard", "typical"),
    2: ("wonderful", "excellent", "fantastic", "superb", "delightful"),
}

ASPECT_PHRASES = (
    ("vaccine", "Vaccine"),
    ("booster shot", "Vaccine"),
    ("clinic", "Organization"),
    ("hospital", "Organization"),
    ("doctor", "Person"),
    ("nurse", "Person"),
    ("remdesivir", "Drug"),
    ("face mask", "Product"),
)


def generate_synthetic(n: int, vocab_size: int = 200, seed: int = 0,
                       mixture: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)) -> list[Example]:
    """Seed-reproducible corpus whose label is decided by one cue word.

    Each text is filler tokens plus an aspect phrase and a single
    polarity-bearing cue placed within three tokens of the aspect; filler,
    cue, and aspect vocabularies are disjoint so the cue is the only signal.
    """
    if n < 1:
        raise ConfigurationError(f"synthetic corpus size must be >= 1, got {n}")
    if vocab_size < 1:
        raise ConfigurationError(f"synthetic vocab size must be >= 1, got {vocab_size}")
    mix = np.asarray(mixture, dtype=np.float64)
    if mix.shape != (3,) or (mix <= 0).any():
        raise ConfigurationError(f"mixture must be three positive weights, got {mixture}")
    mix = mix / mix.sum()

    rng = np.random.default_rng(seed)
    filler = [f"w{i}" for i in range(vocab_size)]
    examples = []
    for _ in range(n):
        label = int(rng.choice(3, p=mix))
        cue = CUE_WORDS[label][int(rng.integers(len(CUE_WORDS[label])))]
        aspect, category = ASPECT_PHRASES[int(rng.integers(len(ASPECT_PHRASES)))]
        gap = int(rng.integers(1, 4))  # cue sits 1..3 tokens from the aspect
        left = [filler[int(i)] for i in rng.integers(0, vocab_size, rng.integers(1, 7))]
        between = [filler[int(i)] for i in rng.integers(0, vocab_size, gap - 1)]
        right = [filler[int(i)] for i in rng.integers(0, vocab_size, rng.integers(1, 7))]
        if rng.random() < 0.5:
            tokens = left + [cue] + between + [aspect] + right
            aspect_index = len(left) + 1 + len(between)
        else:
            tokens = left + [aspect] + between + [cue] + right
            aspect_index = len(left)
        start = sum(len(t) + 1 for t in tokens[:aspect_index])
        text = " ".join(tokens)
        examples.append(Example(
            text=text,
            aspect=aspect,
            aspect_start=start,
            aspect_end=start + len(aspect),
            label=label,
            category=category,
        ).validate())
    return examples
