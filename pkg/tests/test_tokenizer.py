"""Vocabulary construction and the sentence-aspect pair encoding."""

import numpy as np
import pytest

from tinyabsa.data import Example
from tinyabsa.errors import ConfigurationError, EncodingError, ParseError
from tinyabsa.tokenizer import (CLS_ID, PAD_ID, SEP_ID, UNK_ID, Vocab, build_vocab,
                                decode, encode, tokenize)


class TestBuildVocab:
    def test_frequency_then_lexicographic_order(self):
        vocab = build_vocab(["a b", "a"], min_freq=1)
        assert vocab.id("a") == 4
        assert vocab.id("b") == 5
        assert vocab.size == 6

    def test_min_freq_maps_rare_tokens_to_unk(self):
        vocab = build_vocab(["a b", "a"], min_freq=3)
        assert vocab.id("a") == UNK_ID
        assert vocab.id("b") == UNK_ID
        assert vocab.size == 4

    def test_deterministic_ids(self):
        corpus = ["the cat sat", "the dog ran", "a cat ran"]
        assert build_vocab(corpus).token_to_id == build_vocab(corpus).token_to_id

    def test_empty_corpus_rejected(self):
        with pytest.raises(ConfigurationError):
            build_vocab([])

    def test_lowercases_and_splits_punctuation(self):
        assert tokenize("Thanks, @Clinic!") == ["thanks", ",", "@", "clinic", "!"]


class TestVocabSerialization:
    def test_save_load_bit_exact(self, tmp_path):
        vocab = build_vocab(["alpha beta gamma", "alpha beta", "alpha"], min_freq=1)
        path = tmp_path / "vocab.txt"
        vocab.save(str(path))
        reloaded = Vocab.load(str(path))
        assert reloaded.token_to_id == vocab.token_to_id
        assert reloaded.min_freq == vocab.min_freq
        second = tmp_path / "again.txt"
        reloaded.save(str(second))
        assert path.read_bytes() == second.read_bytes()

    def test_text_round_trip(self):
        vocab = build_vocab(["x y z"], min_freq=1)
        assert Vocab.from_text(vocab.to_text()).token_to_id == vocab.token_to_id

    def test_malformed_file_reports_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("tinyabsa-vocab 1 min_freq=1 size=4\n<pad>\t0\noops-no-tab\n")
        with pytest.raises(ParseError) as err:
            Vocab.load(str(path))
        assert ":3:" in str(err.value)


def simple_vocab():
    return build_vocab(["good vaccine today", "bad clinic yesterday"], min_freq=1)


class TestEncode:
    def test_layout_and_aspect_mask(self):
        vocab = simple_vocab()
        ex = Example(text="good vaccine today", aspect="vaccine",
                     aspect_start=5, aspect_end=12, label=2)
        enc = encode(ex, vocab, max_len=10)
        g, v, t = vocab.id("good"), vocab.id("vaccine"), vocab.id("today")
        assert enc.ids.tolist() == [CLS_ID, g, v, t, SEP_ID, v, SEP_ID, PAD_ID, PAD_ID, PAD_ID]
        assert enc.aspect_mask.tolist() == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
        assert enc.segment.tolist() == [0, 0, 0, 0, 0, 1, 1, 0, 0, 0]
        assert enc.pad_mask.tolist() == [1, 1, 1, 1, 1, 1, 1, 0, 0, 0]

    def test_aspect_equal_to_whole_sentence(self):
        vocab = simple_vocab()
        ex = Example(text="good vaccine", aspect="good vaccine",
                     aspect_start=0, aspect_end=12, label=1)
        enc = encode(ex, vocab, max_len=12)
        sentence = (enc.segment == 0) & (enc.pad_mask == 1)
        sentence[0] = False                      # drop CLS
        sentence[int(np.nonzero(enc.ids == SEP_ID)[0][0])] = False  # drop first SEP
        np.testing.assert_array_equal(enc.aspect_mask.astype(bool), sentence)

    def test_truncation_drops_left_context_first(self):
        vocab = build_vocab(["w1 w2 w3 w4 w5 w6 target w8"], min_freq=1)
        text = "w1 w2 w3 w4 w5 w6 target w8"
        ex = Example(text=text, aspect="target", aspect_start=text.find("target"),
                     aspect_end=text.find("target") + 6, label=0)
        enc = encode(ex, vocab, max_len=8)
        # budget: 8 - 3 - 1 = 4 sentence tokens -> keep w5 w6 target w8
        kept = decode(enc, vocab)
        assert kept == ["<cls>", "w5", "w6", "target", "w8", "<sep>", "target", "<sep>"]
        assert enc.aspect_mask.sum() == 1

    def test_aspect_never_dropped(self):
        vocab = build_vocab(["a b c d e f g target"], min_freq=1)
        text = "a b c d e f g target"
        ex = Example(text=text, aspect="target", aspect_start=text.find("target"),
                     aspect_end=text.find("target") + 6, label=0)
        enc = encode(ex, vocab, max_len=5)  # room for exactly one sentence token
        assert enc.aspect_mask.sum() == 1
        position = int(np.nonzero(enc.aspect_mask)[0][0])
        assert enc.ids[position] == vocab.id("target")

    def test_oversized_aspect_rejected(self):
        words = " ".join(f"t{i}" for i in range(6))
        vocab = build_vocab([words], min_freq=1)
        ex = Example(text=words, aspect=words, aspect_start=0, aspect_end=len(words),
                     label=0)
        with pytest.raises(EncodingError):
            encode(ex, vocab, max_len=8)

    def test_multi_token_aspect_marks_every_token(self):
        vocab = build_vocab(["the covid vaccine helps"], min_freq=1)
        text = "the covid vaccine helps"
        ex = Example(text=text, aspect="covid vaccine", aspect_start=4,
                     aspect_end=17, label=1)
        enc = encode(ex, vocab, max_len=12)
        assert enc.aspect_mask.sum() == 2

    def test_unknown_words_map_to_unk(self):
        vocab = simple_vocab()
        ex = Example(text="good stranger today", aspect="stranger",
                     aspect_start=5, aspect_end=13, label=1)
        enc = encode(ex, vocab, max_len=10)
        position = int(np.nonzero(enc.aspect_mask)[0][0])
        assert enc.ids[position] == UNK_ID

    def test_segment_zero_before_first_sep_one_between(self):
        vocab = simple_vocab()
        ex = Example(text="good vaccine today", aspect="vaccine",
                     aspect_start=5, aspect_end=12, label=2)
        enc = encode(ex, vocab, max_len=16)
        seps = np.nonzero(enc.ids == SEP_ID)[0]
        assert enc.segment[:seps[0]].max() == 0
        assert enc.segment[seps[0] + 1:seps[1]].min() == 1

    def test_encoding_is_pure(self):
        vocab = simple_vocab()
        ex = Example(text="good vaccine today", aspect="vaccine",
                     aspect_start=5, aspect_end=12, label=2)
        a, b = encode(ex, vocab, max_len=10), encode(ex, vocab, max_len=10)
        np.testing.assert_array_equal(a.ids, b.ids)
        np.testing.assert_array_equal(a.aspect_mask, b.aspect_mask)

    def test_decode_recovers_tokens_up_to_unk(self):
        vocab = simple_vocab()
        ex = Example(text="good mystery today", aspect="mystery",
                     aspect_start=5, aspect_end=12, label=1)
        enc = encode(ex, vocab, max_len=12)
        assert decode(enc, vocab) == ["<cls>", "good", "<unk>", "today", "<sep>",
                                      "<unk>", "<sep>"]
