#!/usr/bin/env python3
"""Train a small unigram subword vocabulary on the bundled mixed corpus.

Text lines and MIDI-derived event-code lines share one vocabulary, so a
single model tokenizes both kinds of document. Training is EM over all
segmentations followed by likelihood-guided pruning down to the exact
requested size; five control symbols (pad, unk, eos, mask, cls) occupy
ids 0-4.
"""

from pathlib import Path

from picolm.midi_text import encode_events, parse_smf
from picolm.unigram_tokenizer import train_unigram

ROOT = Path(__file__).resolve().parent.parent

documents = []
for path in sorted((ROOT / "sample_corpus" / "text").glob("*.txt")):
    documents += [line for line in path.read_text().splitlines() if line.strip()]
n_text = len(documents)
for path in sorted((ROOT / "sample_corpus" / "midi").glob("*.mid")):
    documents.append(encode_events(parse_smf(path.read_bytes())))
print(f"corpus: {n_text} text documents + {len(documents) - n_text} music documents")

log_likelihoods = []
vocab = train_unigram(
    documents,
    vocab_size=800,
    on_em_step=lambda i, probs, ll: log_likelihoods.append(ll),
)
print(f"trained vocabulary: exactly {vocab.size} entries "
      f"({len(vocab.pieces)} pieces + 5 control symbols)")
print(f"EM ran {len(log_likelihoods)} iterations; "
      f"corpus log-likelihood {log_likelihoods[0]:.0f} -> {log_likelihoods[-1]:.0f}")

print("\nten most probable pieces:")
for piece in vocab.pieces[:10]:
    print(f"  {piece.surface!r:<16} {piece.log_prob:8.3f}")

for sample in ["The quiet teacher sees every garden.", "t18 c0n71 t96 c0r71"]:
    ids = vocab.encode(sample)
    pieces = [vocab.piece_surface(i) for i in ids]
    print(f"\n{sample!r}\n  -> {pieces}\n  -> ids {ids}")
    assert vocab.decode(ids) == " ".join(sample.split())
print("\nround trip: decode(encode(text)) == text for covered characters")
