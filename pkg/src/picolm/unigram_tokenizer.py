"""Unigram-LM subword tokenizer: EM training, Viterbi segmentation, vocab IO.

Training follows the classic unigram language-model recipe: seed a large
candidate vocabulary from frequent substrings, run expectation-maximization
over all segmentations of the corpus (forward-backward on the piece lattice),
then iteratively prune the pieces whose removal costs the least likelihood
until the requested size is reached. Segmentation at inference time is the
maximum-likelihood path through the same lattice (Viterbi).

Whitespace convention: the corpus is single-space normalized, every document
gets a leading space, and spaces become the word-boundary marker U+2581, so
word-initial pieces carry the marker and round-trips are lossless.

Five control symbols occupy the first ids: pad=0, unk=1, eos=2, mask=3,
cls=4. They are reserved: segmentation of ordinary text never produces them.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

logger = logging.getLogger(__name__)

WORD_BOUNDARY = "▁"

PAD_ID, UNK_ID, EOS_ID, MASK_ID, CLS_ID = 0, 1, 2, 3, 4
NUM_CONTROLS = 5
CONTROL_SURFACES = ("<pad>", "<unk>", "</s>", "<mask>", "<cls>")
CONTROL_IDS = {"pad": PAD_ID, "unk": UNK_ID, "eos": EOS_ID, "mask": MASK_ID, "cls": CLS_ID}

MAX_PIECE_LEN = 16

_NEG_INF = float("-inf")
# Floor for pieces whose expected count underflows to zero; keeps the
# vocabulary size stable so only the prune step shrinks it. Small enough that
# the M-step update stays within 1e-12 of the exact maximizer.
_COUNT_FLOOR = 1e-100


class TrainingError(ValueError):
    """Unigram training cannot satisfy the requested configuration."""


class DecodeError(ValueError):
    """An id passed to decode is outside the vocabulary."""


@dataclass(frozen=True)
class Piece:
    """One subword piece and its log probability under the unigram LM."""

    surface: str
    log_prob: float


@dataclass(frozen=True)
class WordAlignment:
    """Maps one pre-tokenization word to its span in text and token stream."""

    text: str
    char_start: int
    char_end: int
    token_start: int
    token_end: int


def normalize(text: str) -> str:
    """Collapse all whitespace runs to single spaces and strip the ends."""
    return " ".join(text.split())


class Vocabulary:
    """Trained unigram piece inventory plus the five reserved control symbols.

    Piece ids start at 5; ids 0-4 are pad/unk/eos/mask/cls in that order.
    """

    def __init__(self, pieces: Sequence[Piece], params: dict | None = None):
        self.pieces = list(pieces)
        self.control_ids = dict(CONTROL_IDS)
        self.params = dict(params or {})
        self._by_surface: dict[str, tuple[int, float]] = {}
        for i, piece in enumerate(self.pieces):
            if piece.surface in self._by_surface:
                raise ValueError(f"duplicate piece surface {piece.surface!r}")
            if piece.surface in CONTROL_SURFACES:
                raise ValueError(f"piece surface collides with control symbol {piece.surface!r}")
            self._by_surface[piece.surface] = (NUM_CONTROLS + i, piece.log_prob)
        self._max_len = max((len(p.surface) for p in self.pieces), default=1)
        min_lp = min((p.log_prob for p in self.pieces), default=-10.0)
        # Any real piece must beat a chain of unk fallbacks over the same span.
        self._unk_score = min_lp - 10.0

    @property
    def size(self) -> int:
        return NUM_CONTROLS + len(self.pieces)

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def mask_id(self) -> int:
        return MASK_ID

    @property
    def cls_id(self) -> int:
        return CLS_ID

    def piece_surface(self, token_id: int) -> str:
        if not 0 <= token_id < self.size:
            raise DecodeError(f"id {token_id} out of range for vocabulary of size {self.size}")
        if token_id < NUM_CONTROLS:
            return CONTROL_SURFACES[token_id]
        return self.pieces[token_id - NUM_CONTROLS].surface

    # -- segmentation ------------------------------------------------------

    def segment_unit(self, unit: str) -> tuple[list[int], float]:
        """Viterbi-segment one unit (no whitespace handling).

        Returns (ids, score). Characters no piece can cover become unk with a
        score penalty below any piece, so unk never displaces a viable piece
        path. The score of a fully covered unit is the maximum summed piece
        log probability over all segmentations.
        """
        n = len(unit)
        best = [_NEG_INF] * (n + 1)
        best[0] = 0.0
        back: list[tuple[int, int] | None] = [None] * (n + 1)  # (start, id)
        lookup = self._by_surface
        max_len = self._max_len
        for i in range(n):
            base = best[i]
            if base == _NEG_INF:
                continue
            for j in range(i + 1, min(n, i + max_len) + 1):
                hit = lookup.get(unit[i:j])
                if hit is None:
                    continue
                score = base + hit[1]
                if score > best[j]:
                    best[j] = score
                    back[j] = (i, hit[0])
            unk = base + self._unk_score
            if unk > best[i + 1]:
                best[i + 1] = unk
                back[i + 1] = (i, UNK_ID)
        ids: list[int] = []
        pos = n
        while pos > 0:
            start, token_id = back[pos]  # type: ignore[misc]
            ids.append(token_id)
            pos = start
        ids.reverse()
        return ids, best[n]

    def encode(self, text: str) -> list[int]:
        """Tokenize text to ids via maximum-likelihood segmentation."""
        ids: list[int] = []
        for word in normalize(text).split(" "):
            if not word:
                continue
            unit_ids, _ = self.segment_unit(WORD_BOUNDARY + word)
            ids.extend(unit_ids)
        return ids

    def encode_with_words(self, text: str) -> tuple[list[int], list[WordAlignment], str]:
        """Tokenize and report per-word character and token spans.

        Returns (ids, alignments, normalized_text); character offsets index
        into the normalized text.
        """
        normalized = normalize(text)
        ids: list[int] = []
        words: list[WordAlignment] = []
        char_pos = 0
        for word in normalized.split(" "):
            if not word:
                continue
            start = normalized.index(word, char_pos)
            unit_ids, _ = self.segment_unit(WORD_BOUNDARY + word)
            words.append(
                WordAlignment(
                    text=word,
                    char_start=start,
                    char_end=start + len(word),
                    token_start=len(ids),
                    token_end=len(ids) + len(unit_ids),
                )
            )
            ids.extend(unit_ids)
            char_pos = start + len(word)
        return ids, words, normalized

    def decode(self, ids: Iterable[int]) -> str:
        """Invert encode: concatenate surfaces, restore spaces, drop controls."""
        parts: list[str] = []
        for token_id in ids:
            if not 0 <= token_id < self.size:
                raise DecodeError(f"id {token_id} out of range for vocabulary of size {self.size}")
            if token_id < NUM_CONTROLS:
                continue
            parts.append(self.pieces[token_id - NUM_CONTROLS].surface)
        text = "".join(parts).replace(WORD_BOUNDARY, " ")
        return text[1:] if text.startswith(" ") else text

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the model file and a JSON sidecar with training parameters.

        Model format: five control-symbol header lines, then one
        ``surface<TAB>log_prob`` line per piece.
        """
        path = Path(path)
        lines = [f"{surface}\t0" for surface in CONTROL_SURFACES]
        lines.extend(f"{p.surface}\t{p.log_prob!r}" for p in self.pieces)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(
            json.dumps({"size": self.size, "params": self.params}, sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        path = Path(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        if len(lines) < NUM_CONTROLS:
            raise ValueError(f"{path}: model file shorter than the control-symbol header")
        for i, surface in enumerate(CONTROL_SURFACES):
            if lines[i].split("\t")[0] != surface:
                raise ValueError(f"{path}: line {i + 1} is not the {surface} header line")
        pieces = []
        for line in lines[NUM_CONTROLS:]:
            if not line:
                continue
            surface, log_prob = line.split("\t")
            pieces.append(Piece(surface, float(log_prob)))
        params = {}
        sidecar = path.with_suffix(path.suffix + ".json")
        if sidecar.exists():
            params = json.loads(sidecar.read_text(encoding="utf-8")).get("params", {})
        return cls(pieces, params)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def corpus_units(corpus: Iterable[str]) -> Counter[str]:
    """Count word-boundary-marked units over single-space-normalized documents."""
    freqs: Counter[str] = Counter()
    for doc in corpus:
        for word in normalize(doc).split(" "):
            if word:
                freqs[WORD_BOUNDARY + word] += 1
    return freqs


def seed_pieces(unit_freqs: Counter[str], vocab_size: int, seed_multiplier: int) -> dict[str, float]:
    """Build the initial candidate vocabulary with unnormalized weights.

    All single characters are included; the top seed_multiplier * vocab_size
    multi-character substrings are added, ranked by frequency * length
    (length capped at MAX_PIECE_LEN). Surfaces equal to a control symbol are
    excluded so controls can never be produced by segmentation.
    """
    char_freqs: Counter[str] = Counter()
    sub_freqs: Counter[str] = Counter()
    for unit, freq in unit_freqs.items():
        n = len(unit)
        for i in range(n):
            char_freqs[unit[i]] += freq
            for j in range(i + 2, min(n, i + MAX_PIECE_LEN) + 1):
                sub_freqs[unit[i:j]] += freq
    for control in CONTROL_SURFACES:
        sub_freqs.pop(control, None)

    budget = seed_multiplier * vocab_size
    ranked = sorted(sub_freqs.items(), key=lambda kv: (-kv[1] * len(kv[0]), kv[0]))
    weights: dict[str, float] = dict(char_freqs)
    for surface, freq in ranked[:budget]:
        weights[surface] = float(freq)
    return weights


def _log_probs_from_weights(weights: dict[str, float]) -> dict[str, float]:
    total = sum(weights.values())
    log_total = math.log(total)
    return {s: math.log(w) - log_total for s, w in sorted(weights.items())}


def _lattice_edges(unit: str, log_probs: dict[str, float], max_len: int):
    n = len(unit)
    for i in range(n):
        for j in range(i + 1, min(n, i + max_len) + 1):
            surface = unit[i:j]
            lp = log_probs.get(surface)
            if lp is not None:
                yield i, j, surface, lp


def _logadd(a: float, b: float) -> float:
    if a == _NEG_INF:
        return b
    if b == _NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def em_step(
    unit_freqs: Counter[str], log_probs: dict[str, float]
) -> tuple[dict[str, float], float]:
    """One EM iteration; returns (new log probs, corpus log-likelihood).

    The log-likelihood is computed under the *input* model during the E-step,
    so successive values over repeated calls are non-decreasing. Expected
    counts are accumulated in sorted unit order for exact determinism. The
    piece set is preserved: counts that underflow to zero are floored, and
    only the prune step ever removes pieces.
    """
    max_len = max(len(s) for s in log_probs)
    expected: dict[str, float] = {s: 0.0 for s in log_probs}
    total_ll = 0.0

    for unit in sorted(unit_freqs):
        freq = unit_freqs[unit]
        n = len(unit)
        alpha = [_NEG_INF] * (n + 1)
        alpha[0] = 0.0
        edges = list(_lattice_edges(unit, log_probs, max_len))
        for i, j, _surface, lp in edges:
            if alpha[i] != _NEG_INF:
                alpha[j] = _logadd(alpha[j], alpha[i] + lp)
        z = alpha[n]
        if z == _NEG_INF:
            raise TrainingError(f"unit {unit!r} has no segmentation under the current vocabulary")
        beta = [_NEG_INF] * (n + 1)
        beta[n] = 0.0
        for i, j, _surface, lp in reversed(edges):
            if beta[j] != _NEG_INF:
                beta[i] = _logadd(beta[i], lp + beta[j])
        total_ll += freq * z
        for i, j, surface, lp in edges:
            if alpha[i] == _NEG_INF or beta[j] == _NEG_INF:
                continue
            expected[surface] += freq * math.exp(alpha[i] + lp + beta[j] - z)

    weights = {s: max(expected[s], _COUNT_FLOOR) for s in sorted(expected)}
    return _log_probs_from_weights(weights), total_ll


def _viterbi_score(unit: str, log_probs: dict[str, float], max_len: int, skip: str | None = None):
    """Best piece-only segmentation of `unit`, optionally excluding one piece.

    Returns (score, pieces) or (None, None) when no segmentation exists.
    """
    n = len(unit)
    best = [_NEG_INF] * (n + 1)
    best[0] = 0.0
    back: list[tuple[int, str] | None] = [None] * (n + 1)
    for i in range(n):
        if best[i] == _NEG_INF:
            continue
        for j in range(i + 1, min(n, i + max_len) + 1):
            surface = unit[i:j]
            if surface == skip:
                continue
            lp = log_probs.get(surface)
            if lp is None:
                continue
            score = best[i] + lp
            if score > best[j]:
                best[j] = score
                back[j] = (i, surface)
    if best[n] == _NEG_INF:
        return None, None
    pieces = []
    pos = n
    while pos > 0:
        i, surface = back[pos]  # type: ignore[misc]
        pieces.append(surface)
        pos = i
    pieces.reverse()
    return best[n], pieces


def prune_pieces(
    unit_freqs: Counter[str], log_probs: dict[str, float], keep: int
) -> dict[str, float]:
    """Drop multi-character pieces until `keep` remain, cheapest loss first.

    The loss of removing a piece is its Viterbi usage count times the score
    gap to the best alternative segmentation of its own surface. Pieces whose
    surface cannot be re-segmented without them, and all single characters,
    are never dropped. Probabilities are renormalized afterwards.
    """
    if len(log_probs) <= keep:
        return dict(log_probs)
    max_len = max(len(s) for s in log_probs)

    usage: Counter[str] = Counter()
    for unit in sorted(unit_freqs):
        _score, pieces = _viterbi_score(unit, log_probs, max_len)
        if pieces is None:
            raise TrainingError(f"unit {unit!r} has no segmentation under the current vocabulary")
        freq = unit_freqs[unit]
        for piece in pieces:
            usage[piece] += freq

    candidates: list[tuple[float, str]] = []
    for surface in sorted(log_probs):
        if len(surface) == 1:
            continue
        alt_score, _alt = _viterbi_score(surface, log_probs, max_len, skip=surface)
        if alt_score is None:
            continue  # irreplaceable surface, keep
        loss = usage[surface] * (log_probs[surface] - alt_score)
        candidates.append((loss, surface))

    n_drop = len(log_probs) - keep
    candidates.sort()
    to_drop = {surface for _loss, surface in candidates[:n_drop]}
    if len(to_drop) < n_drop:
        logger.warning(
            "prune round could drop only %d of %d requested pieces", len(to_drop), n_drop
        )
    kept = {s: lp for s, lp in log_probs.items() if s not in to_drop}
    weights = {s: math.exp(lp) for s, lp in sorted(kept.items())}
    return _log_probs_from_weights(weights)


def train_unigram(
    corpus: Iterable[str],
    vocab_size: int,
    seed_multiplier: int = 4,
    shrink_factor: float = 0.75,
    em_iters: int = 2,
    on_em_step: Callable[[int, dict[str, float], float], None] | None = None,
) -> Vocabulary:
    """Train a unigram-LM vocabulary of exactly `vocab_size` entries.

    `vocab_size` counts the five control symbols. `on_em_step` is called
    after every EM iteration with (iteration index, log-prob snapshot,
    corpus log-likelihood under the pre-update model); it exists for
    diagnostics and likelihood-trajectory tests.
    """
    if vocab_size <= 0:
        raise TrainingError("vocab_size must be positive")
    if not 0.0 < shrink_factor < 1.0:
        raise TrainingError("shrink_factor must be in (0, 1)")
    if seed_multiplier < 1 or em_iters < 1:
        raise TrainingError("seed_multiplier and em_iters must be >= 1")

    unit_freqs = corpus_units(corpus)
    if not unit_freqs:
        raise TrainingError("corpus is empty")
    target = vocab_size - NUM_CONTROLS

    weights = seed_pieces(unit_freqs, vocab_size, seed_multiplier)
    n_chars = sum(1 for s in weights if len(s) == 1)
    if target <= n_chars:
        raise TrainingError(
            f"vocab_size {vocab_size} too small: needs more than "
            f"{n_chars + NUM_CONTROLS} (distinct characters + control symbols)"
        )
    if len(weights) < target:
        raise TrainingError(
            f"vocab_size {vocab_size} unreachable: only {len(weights) + NUM_CONTROLS} "
            f"pieces available from this corpus"
        )

    log_probs = _log_probs_from_weights(weights)
    iteration = 0
    while True:
        for _ in range(em_iters):
            log_probs, ll = em_step(unit_freqs, log_probs)
            if on_em_step is not None:
                on_em_step(iteration, dict(log_probs), ll)
            iteration += 1
        if len(log_probs) <= target:
            break
        next_size = max(target, int(len(log_probs) * shrink_factor))
        pruned = prune_pieces(unit_freqs, log_probs, next_size)
        if len(pruned) >= len(log_probs):
            raise TrainingError(
                f"vocab_size {vocab_size} unreachable: pruning stalled at "
                f"{len(log_probs) + NUM_CONTROLS} pieces"
            )
        log_probs = pruned

    if len(log_probs) != target:
        raise TrainingError(
            f"vocab_size {vocab_size} unreachable: training converged to "
            f"{len(log_probs) + NUM_CONTROLS} pieces"
        )

    pieces = [Piece(s, lp) for s, lp in log_probs.items()]
    pieces.sort(key=lambda p: (-p.log_prob, p.surface))
    params = {
        "vocab_size": vocab_size,
        "seed_multiplier": seed_multiplier,
        "shrink_factor": shrink_factor,
        "em_iters": em_iters,
    }
    return Vocabulary(pieces, params)
