"""Tests for unigram tokenizer training and segmentation."""

import itertools
import math
import random

import pytest

import helpers
from picolm.unigram_tokenizer import (
    CONTROL_IDS,
    CONTROL_SURFACES,
    NUM_CONTROLS,
    WORD_BOUNDARY,
    Piece,
    TrainingError,
    DecodeError,
    Vocabulary,
    em_step,
    corpus_units,
    train_unigram,
)


def enumerate_segmentations(text: str, log_probs: dict[str, float]):
    """Oracle: recursively enumerate every full segmentation of `text`
    into vocabulary pieces, yielding (pieces, total score)."""
    if not text:
        yield [], 0.0
        return
    for end in range(1, len(text) + 1):
        head = text[:end]
        if head not in log_probs:
            continue
        for rest, score in enumerate_segmentations(text[end:], log_probs):
            yield [head] + rest, log_probs[head] + score


def oracle_corpus_ll(corpus: list[str], log_probs: dict[str, float]) -> float:
    """Oracle: corpus log-likelihood by exhaustive enumeration, summing the
    probabilities of all segmentations per unit."""
    total = 0.0
    for unit, freq in corpus_units(corpus).items():
        prob = sum(math.exp(score) for _, score in enumerate_segmentations(unit, log_probs))
        total += freq * math.log(prob)
    return total


def toy_vocabulary() -> Vocabulary:
    pieces = [
        Piece("a", math.log(0.15)),
        Piece("b", math.log(0.1)),
        Piece("ab", math.log(0.2)),
        Piece("ba", math.log(0.05)),
        Piece("aa", math.log(0.1)),
        Piece("bb", math.log(0.04)),
        Piece("aba", math.log(0.12)),
        Piece("bab", math.log(0.08)),
        Piece("abab", math.log(0.1)),
        Piece("bba", math.log(0.06)),
    ]
    return Vocabulary(pieces)


class TestViterbi:
    def test_matches_enumeration_on_six_char_string(self):
        vocab = toy_vocabulary()
        log_probs = {p.surface: p.log_prob for p in vocab.pieces}
        text = "ababab"
        ids, score = vocab.segment_unit(text)
        best = max(s for _, s in enumerate_segmentations(text, log_probs))
        assert score == pytest.approx(best, abs=1e-12)
        assert sum(log_probs[vocab.piece_surface(i)] for i in ids) == pytest.approx(best, abs=1e-12)

    def test_matches_enumeration_all_short_strings(self):
        vocab = toy_vocabulary()
        log_probs = {p.surface: p.log_prob for p in vocab.pieces}
        for length in range(1, 10):
            for letters in itertools.product("ab", repeat=length):
                text = "".join(letters)
                _ids, score = vocab.segment_unit(text)
                best = max(s for _, s in enumerate_segmentations(text, log_probs))
                assert score == pytest.approx(best, abs=1e-12), text

    def test_unknown_characters_become_unk(self):
        vocab = toy_vocabulary()
        ids, _ = vocab.segment_unit("aXb")
        assert ids[1] == CONTROL_IDS["unk"]

    def test_unk_never_displaces_a_piece_path(self):
        vocab = toy_vocabulary()
        ids, _ = vocab.segment_unit("abab")
        assert CONTROL_IDS["unk"] not in ids


class TestTraining:
    def test_requested_size_is_exact(self):
        rng = random.Random(11)
        corpus = helpers.synthetic_text_corpus(rng, 300)
        vocab = train_unigram(corpus, vocab_size=120)
        assert vocab.size == 120

    def test_single_symbol_corpus(self):
        vocab = train_unigram(["aaaa"] * 100, vocab_size=2 + NUM_CONTROLS + 3)
        surfaces = {p.surface: p.log_prob for p in vocab.pieces}
        assert "a" in surfaces
        # 'a' is the strongest piece among those reusable within one word
        reusable = {s: lp for s, lp in surfaces.items() if WORD_BOUNDARY not in s}
        assert surfaces["a"] == max(reusable.values())

    def test_em_log_likelihood_non_decreasing_and_matches_oracle(self):
        corpus = ["abab", "ab"]
        snapshots, lls = [], []

        def record(_i, log_probs, ll):
            snapshots.append(log_probs)
            lls.append(ll)

        train_unigram(corpus, vocab_size=17, em_iters=6, on_em_step=record)
        assert len(lls) >= 6
        for prev, cur in zip(lls, lls[1:]):
            assert cur >= prev - 1e-9
        # the E-step likelihood of iteration i+1 is computed under the model
        # produced by iteration i; cross-check against exhaustive enumeration
        for snapshot, reported in zip(snapshots, lls[1:]):
            assert oracle_corpus_ll(corpus, snapshot) == pytest.approx(reported, abs=1e-9)

    def test_em_step_preserves_mass(self):
        corpus = ["abab", "ab", "bb"]
        units = corpus_units(corpus)
        log_probs = {s: math.log(1.0 / 8) for s in ["a", "b", "ab", "ba", "bb", "aa", WORD_BOUNDARY, WORD_BOUNDARY + "a"]}
        new_probs, _ll = em_step(units, log_probs)
        assert sum(math.exp(lp) for lp in new_probs.values()) == pytest.approx(1.0, abs=1e-9)

    def test_sub_distribution_invariant(self):
        rng = random.Random(3)
        corpus = helpers.synthetic_text_corpus(rng, 150)
        vocab = train_unigram(corpus, vocab_size=90)
        assert sum(math.exp(p.log_prob) for p in vocab.pieces) <= 1.0 + 1e-6
        assert all(p.log_prob <= 0 and math.isfinite(p.log_prob) for p in vocab.pieces)

    def test_deterministic_serialization(self, tmp_path):
        rng = random.Random(5)
        corpus = helpers.synthetic_text_corpus(rng, 120)
        for run in range(2):
            vocab = train_unigram(list(corpus), vocab_size=80)
            vocab.save(tmp_path / f"model{run}")
        assert (tmp_path / "model0").read_bytes() == (tmp_path / "model1").read_bytes()

    def test_unreachable_vocab_size_reports_maximum(self):
        with pytest.raises(TrainingError, match="unreachable"):
            train_unigram(["ab"] * 10, vocab_size=500)

    def test_vocab_size_below_character_count(self):
        with pytest.raises(TrainingError, match="too small"):
            train_unigram(["abcdefgh"] * 5, vocab_size=8)

    def test_empty_corpus(self):
        with pytest.raises(TrainingError, match="empty"):
            train_unigram([], vocab_size=50)

    def test_control_surfaces_never_become_pieces(self):
        corpus = ["<mask> hello <cls> world </s>"] * 40
        vocab = train_unigram(corpus, vocab_size=60)
        piece_surfaces = {p.surface for p in vocab.pieces}
        assert not piece_surfaces & set(CONTROL_SURFACES)
        # literal "<mask>" text still round-trips through ordinary pieces
        assert vocab.decode(vocab.encode("<mask> hello")) == "<mask> hello"


@pytest.fixture(scope="module")
def vocab():
    rng = random.Random(17)
    corpus = helpers.synthetic_text_corpus(rng, 250) + ["t18 c0n71 c0r71 t200 c0n60"] * 20
    return train_unigram(corpus, vocab_size=140)


class TestVocabulary:
    def test_control_ids_stable(self, vocab):
        assert vocab.control_ids == {"pad": 0, "unk": 1, "eos": 2, "mask": 3, "cls": 4}
        assert vocab.pad_id == 0 and vocab.unk_id == 1 and vocab.eos_id == 2
        assert vocab.mask_id == 3 and vocab.cls_id == 4

    def test_encode_empty(self, vocab):
        assert vocab.encode("") == []

    def test_unknown_character_maps_to_unk(self, vocab):
        assert vocab.unk_id in vocab.encode("hello éclair")

    def test_round_trip(self, vocab):
        rng = random.Random(99)
        for _ in range(50):
            text = " ".join(helpers.random_sentence(rng).split())
            if vocab.unk_id in vocab.encode(text):
                continue
            assert vocab.decode(vocab.encode(text)) == text

    def test_round_trip_mixed_text_and_music(self, vocab):
        text = "hello t18 c0n71"
        assert vocab.decode(vocab.encode(text)) == text

    def test_decode_eos_only(self, vocab):
        assert vocab.decode([vocab.eos_id]) == ""

    def test_decode_out_of_range(self, vocab):
        with pytest.raises(DecodeError):
            vocab.decode([vocab.size])

    def test_whitespace_normalization(self, vocab):
        assert vocab.encode("hello   world") == vocab.encode("hello world")

    def test_save_load_round_trip(self, vocab, tmp_path):
        vocab.save(tmp_path / "vocab.model")
        loaded = Vocabulary.load(tmp_path / "vocab.model")
        assert loaded.size == vocab.size
        assert [p.surface for p in loaded.pieces] == [p.surface for p in vocab.pieces]
        text = "the teacher sees the garden"
        assert loaded.encode(text) == vocab.encode(text)
        assert loaded.params == vocab.params

    def test_word_alignments(self, vocab):
        ids, words, normalized = vocab.encode_with_words("The  teacher waits")
        assert normalized == "The teacher waits"
        assert [w.text for w in words] == ["The", "teacher", "waits"]
        assert words[0].token_start == 0
        assert words[-1].token_end == len(ids)
        for word in words:
            assert normalized[word.char_start : word.char_end] == word.text
            piece_text = "".join(vocab.piece_surface(i) for i in ids[word.token_start : word.token_end])
            assert piece_text.replace(WORD_BOUNDARY, "") == word.text
