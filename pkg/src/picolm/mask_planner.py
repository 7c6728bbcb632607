"""Targeted mask planning: category word lists, per-sample plans, statistics.

A mask plan decides which token positions of a training sample are selected
for the MLM objective. Every token of every word that appears in one of the
targeted category lists is selected first; if that covers less than the mask
budget (default 15% of the sample), additional positions are drawn uniformly
at random. Each selected position is then assigned replace-with-mask /
replace-with-random / keep-original with the standard 80/10/10 split.

Word matching is case-insensitive at whole-word granularity on the
pre-tokenization text: a word matches when its lowercased core (surrounding
characters that are neither word characters nor apostrophes stripped) equals
a list entry. All subword tokens of a matched word are selected.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .unigram_tokenizer import NUM_CONTROLS, WordAlignment

CATEGORY_NAMES = (
    "S-V agreement",
    "Quantifiers",
    "Filler gap",
    "Modal verbs",
    "NPI licensing",
    "D-N agreement",
    "Adverbs",
    "Anaphor agreement",
    "Animacy",
)

REPLACE_WITH_MASK = "replace_with_mask"
REPLACE_WITH_RANDOM = "replace_with_random"
KEEP_ORIGINAL = "keep_original"

RANDOM_FILL = "random_fill"

DEFAULT_BUDGET = 0.15
DEFAULT_ACTION_SPLIT = (0.8, 0.1, 0.1)

_CORE_STRIP = re.compile(r"^[^\w']+|[^\w']+$")


class CategoryFileError(ValueError):
    """Malformed category list file. Carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class MaskCategory:
    name: str
    words: frozenset[str]


@dataclass(frozen=True)
class MaskAction:
    position: int
    action: str
    source: str  # category name, or RANDOM_FILL


@dataclass
class MaskPlan:
    sample_length: int
    actions: list[MaskAction]
    seed: int

    def positions(self) -> list[int]:
        return [a.position for a in self.actions]


@dataclass
class CategoryStats:
    total_masks: int = 0
    avg_masks_per_sample: float = 0.0


@dataclass
class MaskStats:
    sample_count: int
    per_category: dict[str, CategoryStats] = field(default_factory=dict)


def word_core(surface: str) -> str:
    """Lowercased word with non-word, non-apostrophe characters stripped
    from both ends; the unit that is compared against category lists."""
    return _CORE_STRIP.sub("", surface.lower())


def load_categories(path: str | Path) -> list[MaskCategory]:
    """Parse a category list file.

    Format: ``[category name]`` section headers followed by one word per
    line; ``#`` starts a comment. Category names must be the nine known
    targeted categories; duplicates, unknown names and empty word lists are
    errors.
    """
    categories: list[tuple[str, set[str], int]] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                name = line[1:-1].strip()
                if name not in CATEGORY_NAMES:
                    raise CategoryFileError(f"unknown category name {name!r}", line_no)
                if name in seen:
                    raise CategoryFileError(f"duplicate category {name!r}", line_no)
                seen.add(name)
                categories.append((name, set(), line_no))
                continue
            if not categories:
                raise CategoryFileError(f"word {line!r} before any category header", line_no)
            word = line.lower()
            if any(ch.isspace() for ch in word):
                raise CategoryFileError(f"word {line!r} contains whitespace", line_no)
            categories[-1][1].add(word)
    if not categories:
        raise CategoryFileError("no categories found", 0)
    for name, words, line_no in categories:
        if not words:
            raise CategoryFileError(f"category {name!r} has an empty word list", line_no)
    return [MaskCategory(name, frozenset(words)) for name, words, _ in categories]


def default_categories() -> list[MaskCategory]:
    """The nine targeted categories shipped with the package."""
    ref = resources.files("picolm").joinpath("data/mask_categories.txt")
    with resources.as_file(ref) as path:
        return load_categories(path)


def _category_of(core: str, categories: Sequence[MaskCategory]) -> str | None:
    for category in categories:
        if core in category.words:
            return category.name
    return None


def targeted_positions(
    tokens: Sequence[int],
    words: Sequence[WordAlignment],
    categories: Sequence[MaskCategory],
) -> dict[int, str]:
    """Map token position -> category name for every targeted word token.

    A word is targeted when its core matches any category list; attribution
    goes to the first matching category in list order. Token spans are
    clipped to the sample and control-symbol positions are never targeted.
    """
    out: dict[int, str] = {}
    n = len(tokens)
    for word in words:
        name = _category_of(word_core(word.text), categories)
        if name is None:
            continue
        for pos in range(max(word.token_start, 0), min(word.token_end, n)):
            if tokens[pos] < NUM_CONTROLS:
                continue
            out.setdefault(pos, name)
    return out


def plan_masks(
    tokens: Sequence[int],
    words: Sequence[WordAlignment],
    categories: Sequence[MaskCategory],
    budget: float = DEFAULT_BUDGET,
    seed: int = 0,
    action_split: tuple[float, float, float] = DEFAULT_ACTION_SPLIT,
) -> MaskPlan:
    """Build the mask plan for one sample.

    Targeted-word positions are always selected. When they fall short of
    floor(budget * sample_length), random non-control positions fill the gap;
    when they exceed it, every targeted position is kept and nothing is
    added. Identical inputs and seed produce identical plans.
    """
    if not tokens:
        raise ValueError("tokens must be non-empty")
    if not 0.0 < budget <= 1.0:
        raise ValueError(f"budget must be in (0, 1], got {budget}")
    if not math.isclose(sum(action_split), 1.0, abs_tol=1e-9):
        raise ValueError(f"action_split must sum to 1, got {action_split}")

    rng = random.Random(seed)
    targeted = targeted_positions(tokens, words, categories)
    quota = int(budget * len(tokens))

    sources: dict[int, str] = dict(targeted)
    if len(targeted) < quota:
        candidates = [
            pos
            for pos in range(len(tokens))
            if pos not in targeted and tokens[pos] >= NUM_CONTROLS
        ]
        n_fill = min(quota - len(targeted), len(candidates))
        for pos in rng.sample(candidates, n_fill):
            sources[pos] = RANDOM_FILL

    p_mask, p_random, _p_keep = action_split
    actions: list[MaskAction] = []
    for pos in sorted(sources):
        draw = rng.random()
        if draw < p_mask:
            action = REPLACE_WITH_MASK
        elif draw < p_mask + p_random:
            action = REPLACE_WITH_RANDOM
        else:
            action = KEEP_ORIGINAL
        actions.append(MaskAction(pos, action, sources[pos]))
    return MaskPlan(sample_length=len(tokens), actions=actions, seed=seed)


def mask_stats(
    documents: Iterable[tuple[Sequence[int], Sequence[WordAlignment]]],
    categories: Sequence[MaskCategory],
    sample_length: int,
    eos_per_document: bool = True,
) -> MaskStats:
    """Count targeted token positions per category over a packed corpus.

    Documents are laid out in the given order, one end-of-sequence token
    appended per document when `eos_per_document` is set (mirroring the
    packer), and chunked into samples of `sample_length`; positions falling
    into the trailing partial sample are dropped. Totals count targeted
    token positions; averages divide by the number of full samples.
    """
    if sample_length <= 0:
        raise ValueError("sample_length must be positive")
    totals: dict[str, int] = {c.name: 0 for c in categories}
    hits: list[tuple[str, int]] = []
    offset = 0
    for tokens, words in documents:
        for pos, name in targeted_positions(tokens, words, categories).items():
            hits.append((name, offset + pos))
        offset += len(tokens) + (1 if eos_per_document else 0)

    sample_count = offset // sample_length
    cutoff = sample_count * sample_length
    for name, pos in hits:
        if pos < cutoff:
            totals[name] += 1

    stats = MaskStats(sample_count=sample_count)
    for name, total in totals.items():
        avg = total / sample_count if sample_count else 0.0
        stats.per_category[name] = CategoryStats(total_masks=total, avg_masks_per_sample=avg)
    return stats


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def plan_to_json(sample_index: int, plan: MaskPlan) -> str:
    """One JSON line per action, the on-disk MaskPlan format."""
    lines = []
    for action in plan.actions:
        lines.append(
            json.dumps(
                {
                    "sample_index": sample_index,
                    "position": action.position,
                    "action": action.action,
                    "source": action.source,
                },
                sort_keys=True,
            )
        )
    return "\n".join(lines)


def read_plan_lines(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
