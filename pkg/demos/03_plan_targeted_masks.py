#!/usr/bin/env python3
"""Show targeted mask planning on one sample and statistics over a corpus.

Every token of every word on one of the nine targeted category lists is
selected for masking; random positions fill up the 15% budget; each selected
position draws replace-with-mask / replace-with-random / keep-original at
80/10/10.
"""

from pathlib import Path

from picolm.mask_planner import default_categories, mask_stats, plan_masks
from picolm.unigram_tokenizer import train_unigram

ROOT = Path(__file__).resolve().parent.parent

lines = []
for path in sorted((ROOT / "sample_corpus" / "text").glob("*.txt")):
    lines += [line for line in path.read_text().splitlines() if line.strip()]

vocab = train_unigram(lines[:800], vocab_size=500)
categories = default_categories()
print("categories:", ", ".join(c.name for c in categories))

sentence = "The teacher certainly knows that these students saw themselves."
ids, words, _ = vocab.encode_with_words(sentence)
plan = plan_masks(ids, words, categories, budget=0.15, seed=7)
print(f"\n{sentence}\n{len(ids)} tokens, {len(plan.actions)} planned actions:")
for action in plan.actions:
    piece = vocab.piece_surface(ids[action.position])
    print(f"  position {action.position:>2}  {piece!r:<14} {action.action:<20} <- {action.source}")

docs = []
for line in lines[:1000]:
    doc_ids, doc_words, _ = vocab.encode_with_words(line)
    docs.append((doc_ids, doc_words))
stats = mask_stats(docs, categories, sample_length=128)
print(f"\ntargeted-mask statistics over {stats.sample_count} samples of 128 tokens:")
print(f"  {'category':<20} {'total':>7} {'avg/sample':>11}")
for name, cat_stats in stats.per_category.items():
    print(f"  {name:<20} {cat_stats.total_masks:>7} {cat_stats.avg_masks_per_sample:>11.2f}")
