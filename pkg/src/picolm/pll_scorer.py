"""Pseudo-log-likelihood sentence scoring and minimal-pair evaluation.

The pseudo-log-likelihood of a token sequence is the sum, over every maskable
position, of the log probability a model assigns to the true token when that
position is replaced by the mask symbol. Any object implementing the
:class:`LogitProvider` protocol can supply those probabilities: the bundled
count-based n-gram provider, a uniform provider, or an external process
speaking a line-delimited JSON protocol.

A minimal pair is scored correct when the grammatical sentence's
pseudo-log-likelihood is strictly higher than the ungrammatical one's; ties
count as incorrect.
"""

from __future__ import annotations

import json
import logging
import math
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .unigram_tokenizer import CLS_ID, EOS_ID, MASK_ID, NUM_CONTROLS, UNK_ID, Vocabulary

logger = logging.getLogger(__name__)


class LogitProvider(Protocol):
    """Anything that yields a normalized log-probability vector for a
    masked position of a token sequence."""

    vocab_size: int

    def query(self, ids: Sequence[int], masked_position: int) -> np.ndarray: ...


@dataclass(frozen=True)
class MinimalPair:
    good: str
    bad: str
    phenomenon: str

    def __post_init__(self):
        if self.good == self.bad:
            raise ValueError("good and bad sentences must differ")


@dataclass
class PairRecord:
    phenomenon: str
    pll_good: float
    pll_bad: float
    correct: bool


@dataclass
class EvalReport:
    overall_accuracy: float
    per_phenomenon: dict[str, float]
    records: list[PairRecord] = field(default_factory=list)
    skipped: int = 0


def maskable_positions(ids: Sequence[int], vocab_size: int) -> list[int]:
    """Positions eligible for masking: every non-control token.

    A leading cls, a trailing eos and unk tokens are tolerated but never
    masked; any other control symbol in the sequence is rejected.
    """
    if not ids:
        raise ValueError("ids must be non-empty")
    positions: list[int] = []
    last = len(ids) - 1
    for t, token_id in enumerate(ids):
        if not 0 <= token_id < vocab_size:
            raise ValueError(f"id {token_id} out of range for vocab size {vocab_size}")
        if token_id >= NUM_CONTROLS:
            positions.append(t)
            continue
        if token_id == UNK_ID:
            continue
        if t == 0 and token_id == CLS_ID:
            continue
        if t == last and token_id == EOS_ID:
            continue
        raise ValueError(f"control id {token_id} at position {t} is not a leading cls or trailing eos")
    return positions


def pll(provider: LogitProvider, ids: Sequence[int]) -> float:
    """Pseudo-log-likelihood of `ids` under `provider`.

    One provider query per maskable position, summed in ascending position
    order so the result is bit-deterministic.
    """
    positions = maskable_positions(ids, provider.vocab_size)
    if not positions:
        raise ValueError("sequence has no maskable positions")
    work = list(ids)
    total = 0.0
    for t in positions:
        original = work[t]
        work[t] = MASK_ID
        log_probs = provider.query(work, t)
        work[t] = original
        total += float(log_probs[original])
    return total


def evaluate(
    provider: LogitProvider, pairs: Sequence[MinimalPair], vocab: Vocabulary
) -> EvalReport:
    """Score minimal pairs: correct iff pll(good) > pll(bad) strictly.

    Pairs whose tokenization yields no maskable position on either side are
    skipped with a warning and excluded from all denominators.
    """
    if not pairs:
        raise ValueError("pairs must be non-empty")
    records: list[PairRecord] = []
    skipped = 0
    for pair in pairs:
        good_ids = vocab.encode(pair.good)
        bad_ids = vocab.encode(pair.bad)
        if (
            not good_ids
            or not bad_ids
            or not maskable_positions(good_ids, provider.vocab_size)
            or not maskable_positions(bad_ids, provider.vocab_size)
        ):
            logger.warning("skipping pair with no maskable tokens: %r / %r", pair.good, pair.bad)
            skipped += 1
            continue
        records.append(
            PairRecord(
                phenomenon=pair.phenomenon,
                pll_good=pll(provider, good_ids),
                pll_bad=pll(provider, bad_ids),
                correct=False,
            )
        )
        records[-1].correct = records[-1].pll_good > records[-1].pll_bad

    by_phenomenon: dict[str, list[bool]] = {}
    for record in records:
        by_phenomenon.setdefault(record.phenomenon, []).append(record.correct)
    per_phenomenon = {
        name: sum(flags) / len(flags) for name, flags in sorted(by_phenomenon.items())
    }
    overall = sum(r.correct for r in records) / len(records) if records else 0.0
    return EvalReport(
        overall_accuracy=overall,
        per_phenomenon=per_phenomenon,
        records=records,
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------


class UniformProvider:
    """Assigns log(1/V) to every symbol; handy as a null model."""

    def __init__(self, vocab_size: int):
        self.vocab_size = vocab_size
        self._vector = np.full(vocab_size, math.log(1.0 / vocab_size))

    def query(self, ids: Sequence[int], masked_position: int) -> np.ndarray:
        return self._vector


class NgramProvider:
    """Count-based reference provider: add-alpha smoothed unigram counts,
    interpolated with left-neighbor bigram counts at order 2.

    The mask symbol is ignored: it is never counted and a masked left
    neighbor backs off to the unigram distribution.
    """

    def __init__(
        self,
        corpus: Iterable[int],
        vocab_size: int,
        order: int = 2,
        alpha: float = 1.0,
        interpolation: float = 0.5,
    ):
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        if alpha <= 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        if not 0.0 <= interpolation <= 1.0:
            raise ValueError(f"interpolation must be in [0, 1], got {interpolation}")
        self.vocab_size = vocab_size
        self.order = order
        self.alpha = alpha
        self.interpolation = interpolation

        ids = [i for i in corpus if i != MASK_ID]
        if not ids:
            raise ValueError("corpus must be non-empty")
        for i in ids:
            if not 0 <= i < vocab_size:
                raise ValueError(f"corpus id {i} out of range for vocab size {vocab_size}")

        counts = np.zeros(vocab_size, dtype=np.float64)
        for i in ids:
            counts[i] += 1.0
        smoothed = counts + alpha
        self._unigram_probs = smoothed / smoothed.sum()
        self._unigram_row = np.log(self._unigram_probs)
        self._bigram: dict[int, np.ndarray] = {}
        if order == 2:
            for left, right in zip(ids, ids[1:]):
                row = self._bigram.get(left)
                if row is None:
                    row = np.zeros(vocab_size, dtype=np.float64)
                    self._bigram[left] = row
                row[right] += 1.0

    def query(self, ids: Sequence[int], masked_position: int) -> np.ndarray:
        if not 0 <= masked_position < len(ids):
            raise ValueError(f"masked_position {masked_position} out of range")
        if self.order == 1 or masked_position == 0:
            return self._unigram_row
        left = ids[masked_position - 1]
        if left == MASK_ID:
            return self._unigram_row
        counts = self._bigram.get(left)
        if counts is None:
            counts = np.zeros(self.vocab_size, dtype=np.float64)
        smoothed = counts + self.alpha
        bi = smoothed / smoothed.sum()
        return np.log(self.interpolation * bi + (1.0 - self.interpolation) * self._unigram_probs)


class ExternalProvider:
    """Provider backed by a subprocess speaking line-delimited JSON.

    Requests are ``{"ids": [...], "masked_position": t}``; responses are
    ``{"log_probs": [...]}`` or ``{"error": "..."}``. The process is spawned
    once and reused for every query.
    """

    def __init__(self, command: Sequence[str], vocab_size: int):
        self.vocab_size = vocab_size
        self._command = list(command)
        self._proc: subprocess.Popen | None = None

    def _ensure_process(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self._command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        return self._proc

    def query(self, ids: Sequence[int], masked_position: int) -> np.ndarray:
        proc = self._ensure_process()
        request = json.dumps({"ids": [int(i) for i in ids], "masked_position": int(masked_position)})
        assert proc.stdin is not None and proc.stdout is not None
        proc.stdin.write(request + "\n")
        proc.stdin.flush()
        line = proc.stdout.readline()
        if not line:
            raise RuntimeError(f"external provider {self._command!r} closed its output")
        response = json.loads(line)
        if "error" in response:
            raise RuntimeError(f"external provider error: {response['error']}")
        log_probs = np.asarray(response["log_probs"], dtype=np.float64)
        if log_probs.shape != (self.vocab_size,):
            raise RuntimeError(
                f"external provider returned {log_probs.shape[0]} log-probs, "
                f"expected {self.vocab_size}"
            )
        return log_probs

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()  # type: ignore[union-attr]
            self._proc.wait(timeout=10)
        self._proc = None

    def __enter__(self) -> "ExternalProvider":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


# ---------------------------------------------------------------------------
# Pair and report IO
# ---------------------------------------------------------------------------


def load_pairs(path: str | Path) -> list[MinimalPair]:
    """Read minimal pairs from JSON lines.

    Requires `sentence_good` and `sentence_bad`; the phenomenon tag is taken
    from `phenomenon`, falling back to the field names used by published
    minimal-pair benchmark files (`linguistics_term`, `UID`).
    """
    pairs: list[MinimalPair] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                good, bad = obj["sentence_good"], obj["sentence_bad"]
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from None
            phenomenon = obj.get("phenomenon") or obj.get("linguistics_term") or obj.get("UID") or "all"
            pairs.append(MinimalPair(good=good, bad=bad, phenomenon=phenomenon))
    return pairs


def write_report(report: EvalReport, json_path: str | Path, tsv_path: str | Path | None = None) -> None:
    """Write the per-phenomenon JSON report and the per-pair TSV log."""
    payload = {
        "overall_accuracy": report.overall_accuracy,
        "per_phenomenon": report.per_phenomenon,
        "pairs_scored": len(report.records),
        "pairs_skipped": report.skipped,
    }
    Path(json_path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if tsv_path is not None:
        lines = ["phenomenon\tpll_good\tpll_bad\tcorrect"]
        for record in report.records:
            lines.append(
                f"{record.phenomenon}\t{record.pll_good!r}\t{record.pll_bad!r}\t{int(record.correct)}"
            )
        Path(tsv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
