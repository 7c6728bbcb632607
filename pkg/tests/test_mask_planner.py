"""Tests for category loading, mask planning and mask statistics."""

import math
import random
import re
from collections import Counter

import pytest

import helpers
from picolm.mask_planner import (
    CATEGORY_NAMES,
    KEEP_ORIGINAL,
    RANDOM_FILL,
    REPLACE_WITH_MASK,
    REPLACE_WITH_RANDOM,
    CategoryFileError,
    MaskCategory,
    default_categories,
    load_categories,
    mask_stats,
    plan_masks,
    targeted_positions,
    word_core,
)
from picolm.unigram_tokenizer import WordAlignment, Piece, Vocabulary, train_unigram


def regex_oracle_positions(text, words, categories):
    """Independent oracle: per category, scan the raw normalized text with a
    whole-word regex (apostrophes count as word characters), then map each
    match to token positions through the word alignments. First matching
    category in list order wins, as in the implementation contract."""
    out = {}
    for category in categories:
        pattern = re.compile(
            "|".join(rf"(?<![\w']){re.escape(w)}(?![\w'])" for w in sorted(category.words)),
            re.IGNORECASE,
        )
        for match in pattern.finditer(text):
            for w in words:
                if w.char_start <= match.start() and match.end() <= w.char_end:
                    for pos in range(w.token_start, w.token_end):
                        out.setdefault(pos, category.name)
    return out


@pytest.fixture(scope="module")
def categories():
    return default_categories()


@pytest.fixture(scope="module")
def corpus_vocab():
    rng = random.Random(23)
    corpus = helpers.synthetic_text_corpus(rng, 400)
    return corpus, train_unigram(corpus, vocab_size=150)


class TestLoadCategories:
    def test_default_file_has_all_nine(self, categories):
        assert [c.name for c in categories] == list(CATEGORY_NAMES)

    def test_anaphor_agreement_words(self, categories):
        by_name = {c.name: c.words for c in categories}
        assert by_name["Anaphor agreement"] == {"himself", "themselves", "itself", "herself"}

    def test_filler_gap_contains_that(self, categories):
        by_name = {c.name: c.words for c in categories}
        assert "that" in by_name["Filler gap"]

    def test_sv_agreement_has_contractions(self, categories):
        by_name = {c.name: c.words for c in categories}
        assert {"don't", "isn't", "hasn't"} <= by_name["S-V agreement"]

    def test_empty_file_errors(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("# nothing here\n")
        with pytest.raises(CategoryFileError):
            load_categories(path)

    def test_unknown_category_errors_with_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("[Filler gap]\nthat\n[Made up]\nfoo\n")
        with pytest.raises(CategoryFileError) as err:
            load_categories(path)
        assert err.value.line == 3

    def test_duplicate_category_errors(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("[Filler gap]\nthat\n[Filler gap]\nwhat\n")
        with pytest.raises(CategoryFileError, match="duplicate"):
            load_categories(path)

    def test_empty_word_list_errors(self, tmp_path):
        path = tmp_path / "noword.txt"
        path.write_text("[Filler gap]\n[Adverbs]\nnever\n")
        with pytest.raises(CategoryFileError, match="empty word list"):
            load_categories(path)

    def test_words_lowercased_and_deduplicated(self, tmp_path):
        path = tmp_path / "case.txt"
        path.write_text("[Filler gap]\nThat\nTHAT\nthat\n")
        cats = load_categories(path)
        assert cats[0].words == frozenset({"that"})


class TestWordCore:
    @pytest.mark.parametrize(
        "surface,core",
        [
            ("That,", "that"),
            ("himself!", "himself"),
            ("Don't", "don't"),
            ("(these)", "these"),
            ("'that'", "'that'"),  # apostrophe-quoted words keep their quotes
            ("that's", "that's"),
            ("hello", "hello"),
        ],
    )
    def test_core_extraction(self, surface, core):
        assert word_core(surface) == core


def align_words(vocab, text):
    ids, words, normalized = vocab.encode_with_words(text)
    return ids, words, normalized


class TestPlanMasks:
    def test_every_occurrence_of_that_is_masked(self, categories, corpus_vocab):
        _, vocab = corpus_vocab
        ids, words, _ = align_words(vocab, "I know that you said that again")
        plan = plan_masks(ids, words, categories, seed=1)
        that_positions = set()
        for w in words:
            if w.text == "that":
                that_positions.update(range(w.token_start, w.token_end))
        planned = {a.position for a in plan.actions if a.source == "Filler gap"}
        assert planned == that_positions and that_positions

    def test_budget_fill_on_plain_sample(self, categories):
        tokens = list(range(10, 110))  # 100 non-control tokens, no words
        plan = plan_masks(tokens, [], categories, budget=0.15, seed=3)
        assert len(plan.actions) == 15
        assert all(a.source == RANDOM_FILL for a in plan.actions)

    def test_targeted_overflow_adds_no_fill(self, categories, corpus_vocab):
        _, vocab = corpus_vocab
        text = "that that that that that that plus a few filler words here"
        ids, words, _ = align_words(vocab, text)
        targeted = targeted_positions(ids, words, categories)
        budget = 0.15
        assert len(targeted) > int(budget * len(ids))
        plan = plan_masks(ids, words, categories, budget=budget, seed=5)
        assert {a.position for a in plan.actions} == set(targeted)
        assert all(a.source != RANDOM_FILL for a in plan.actions)

    def test_exact_six_of_twenty(self, categories):
        # 20 tokens, one 6-token word matching a category: 30% > budget
        tokens = list(range(20, 40))
        words = [WordAlignment("that", 0, 4, 2, 8)]
        plan = plan_masks(tokens, words, categories, budget=0.15, seed=9)
        assert len(plan.actions) == 6
        assert {a.position for a in plan.actions} == set(range(2, 8))

    def test_determinism(self, categories, corpus_vocab):
        _, vocab = corpus_vocab
        ids, words, _ = align_words(vocab, "the teacher never sees that painting")
        a = plan_masks(ids, words, categories, seed=42)
        b = plan_masks(ids, words, categories, seed=42)
        assert a == b
        c = plan_masks(ids, words, categories, seed=43)
        assert a != c

    def test_control_positions_not_selected(self, categories):
        tokens = [4] + list(range(10, 29)) + [2]  # cls ... eos
        plan = plan_masks(tokens, [], categories, budget=0.5, seed=7)
        positions = plan.positions()
        assert 0 not in positions and len(tokens) - 1 not in positions
        assert len(positions) == int(0.5 * len(tokens))

    def test_bad_budget_rejected(self, categories):
        with pytest.raises(ValueError):
            plan_masks([10, 11], [], categories, budget=0.0)
        with pytest.raises(ValueError):
            plan_masks([10, 11], [], categories, budget=1.5)

    def test_budget_arithmetic_random_samples(self, categories):
        rng = random.Random(77)
        for _ in range(300):
            length = rng.randrange(1, 400)
            tokens = [rng.randrange(10, 500) for _ in range(length)]
            n_target_words = rng.randrange(0, 4)
            words = []
            used = set()
            for _ in range(n_target_words):
                start = rng.randrange(0, length)
                end = min(length, start + rng.randrange(1, 4))
                if any(p in used for p in range(start, end)):
                    continue
                used.update(range(start, end))
                words.append(WordAlignment("himself", 0, 7, start, end))
            plan = plan_masks(tokens, words, categories, budget=0.15, seed=rng.randrange(1 << 30))
            quota = int(0.15 * length)
            targeted = len(used)
            if targeted < quota:
                assert len(plan.actions) == quota
            else:
                assert len(plan.actions) == targeted
                assert {a.position for a in plan.actions} == used

    def test_action_split_fractions(self, categories):
        counts = Counter()
        total = 0
        rng = random.Random(1234)
        for i in range(200):
            tokens = [rng.randrange(10, 500) for _ in range(400)]
            plan = plan_masks(tokens, [], categories, budget=0.15, seed=i)
            for action in plan.actions:
                counts[action.action] += 1
                total += 1
        assert total >= 10_000
        assert counts[REPLACE_WITH_MASK] / total == pytest.approx(0.8, abs=0.02)
        assert counts[REPLACE_WITH_RANDOM] / total == pytest.approx(0.1, abs=0.02)
        assert counts[KEEP_ORIGINAL] / total == pytest.approx(0.1, abs=0.02)

    def test_first_matching_category_attribution(self, corpus_vocab):
        _, vocab = corpus_vocab
        # "probably" is listed under both NPI licensing and Adverbs;
        # list order decides
        categories = default_categories()
        ids, words, _ = align_words(vocab, "he probably left")
        attributed = targeted_positions(ids, words, categories)
        sources = {attributed[p] for p in attributed}
        assert sources == {"NPI licensing"}


class TestCoverageOracle:
    def test_targeted_sets_equal_regex_oracle(self, categories, corpus_vocab):
        corpus, vocab = corpus_vocab
        rng = random.Random(31)
        checked = 0
        for line in corpus[:200]:
            ids, words, normalized = align_words(vocab, line)
            mine = targeted_positions(ids, words, categories)
            oracle = regex_oracle_positions(normalized, words, categories)
            assert mine == oracle, normalized
            checked += len(oracle)
        assert checked > 50  # the corpus exercises the matcher


def single_piece_vocab(words):
    """Vocabulary where each given word is exactly one piece."""
    pieces = [Piece(f"▁{w}", math.log(1.0 / (2 * len(words)))) for w in words]
    chars = sorted({ch for w in words for ch in w} | {"▁"})
    pieces += [Piece(ch, math.log(0.5 / (2 * len(chars)))) for ch in chars if all(p.surface != ch for p in pieces)]
    return Vocabulary(pieces)


class TestMaskStats:
    def test_empty_corpus(self, categories):
        stats = mask_stats([], categories, sample_length=16)
        assert stats.sample_count == 0
        assert all(c.total_masks == 0 for c in stats.per_category.values())

    def test_himself_counts(self, categories):
        vocab = single_piece_vocab(["himself", "saw", "he", "the", "dog", "ran", "far", "away"])
        docs = []
        texts = [
            "he saw himself",  # 1
            "himself himself the dog",  # 2
            "the dog ran himself far away he saw the dog ran",  # 1
        ]
        for text in texts:
            ids, words, _ = vocab.encode_with_words(text)
            assert all(w.token_end - w.token_start == 1 for w in words)
            docs.append((ids, words))
        # pick a sample length that keeps every token inside a full sample
        total = sum(len(ids) + 1 for ids, _ in docs)
        sample_length = total // 3
        assert sample_length * 3 == total
        stats = mask_stats(docs, categories, sample_length=sample_length)
        anaphor = stats.per_category["Anaphor agreement"]
        assert stats.sample_count == 3
        assert anaphor.total_masks == 4
        assert anaphor.avg_masks_per_sample == pytest.approx(4 / 3)

    def test_totals_match_brute_force(self, categories, corpus_vocab):
        corpus, vocab = corpus_vocab
        docs = []
        for line in corpus[:120]:
            ids, words, normalized = align_words(vocab, line)
            docs.append((ids, words, normalized))
        sample_length = 64
        stats = mask_stats([(ids, words) for ids, words, _ in docs], categories, sample_length)

        # brute force: re-walk the documents with the regex oracle
        expected = Counter()
        offset = 0
        hits = []
        for ids, words, normalized in docs:
            for pos, name in regex_oracle_positions(normalized, words, categories).items():
                hits.append((name, offset + pos))
            offset += len(ids) + 1
        cutoff = (offset // sample_length) * sample_length
        for name, pos in hits:
            if pos < cutoff:
                expected[name] += 1
        for name in CATEGORY_NAMES:
            assert stats.per_category[name].total_masks == expected.get(name, 0), name
        assert stats.sample_count == offset // sample_length
