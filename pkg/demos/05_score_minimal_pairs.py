#!/usr/bin/env python3
"""Score grammatical minimal pairs with pseudo-log-likelihood.

A sentence's score sums, over every maskable position, the log probability
the model gives the true token when that position is masked. A pair is
correct when the grammatical sentence scores strictly higher. The bundled
count-based bigram provider stands in for a neural model: trained on a toy
grammar where determiner class A licenses noun class A (and B licenses B),
it separates attested from unattested combinations cleanly.
"""

import math
import random

from picolm.pll_scorer import MinimalPair, NgramProvider, evaluate, pll
from picolm.unigram_tokenizer import EOS_ID, Piece, Vocabulary

rng = random.Random(11)
det = {"a": ["the", "this"], "b": ["som", "dat"]}
nouns = {"a": ["cat", "dog", "bird"], "b": ["rock", "sand", "iron"]}
verbs = ["falls", "waits", "turns"]
words = det["a"] + det["b"] + nouns["a"] + nouns["b"] + verbs
vocab = Vocabulary([Piece("▁" + w, math.log(1.0 / len(words))) for w in words])

corpus = []
for _ in range(4000):
    klass = rng.choice("ab")
    sentence = f"{rng.choice(det[klass])} {rng.choice(nouns[klass])} {rng.choice(verbs)}"
    corpus += vocab.encode(sentence) + [EOS_ID]
provider = NgramProvider(corpus, vocab.size, order=2, alpha=0.1)

good, bad = "the cat falls", "the rock falls"
print(f"pll({good!r})  = {pll(provider, vocab.encode(good)):8.3f}   (attested combination)")
print(f"pll({bad!r}) = {pll(provider, vocab.encode(bad)):8.3f}   (unattested combination)")

pairs = []
for _ in range(100):
    klass, other = ("a", "b") if rng.random() < 0.5 else ("b", "a")
    d, v = rng.choice(det[klass]), rng.choice(verbs)
    pairs.append(
        MinimalPair(
            good=f"{d} {rng.choice(nouns[klass])} {v}",
            bad=f"{d} {rng.choice(nouns[other])} {v}",
            phenomenon="determiner_noun_class",
        )
    )
report = evaluate(provider, pairs, vocab)
print(f"\nevaluated {len(report.records)} pairs: overall accuracy {report.overall_accuracy:.2f}")
for phenomenon, accuracy in report.per_phenomenon.items():
    print(f"  {phenomenon}: {accuracy:.2f}")
