#!/usr/bin/env python3
"""Regenerate the bundled sample corpus: ~200 kB of synthetic English-like
text and 20 synthetic piano MIDI files. Fully deterministic; run from the
repository root:

    python scripts/make_sample_corpus.py
"""

from __future__ import annotations

import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
TEXT_DIR = ROOT / "sample_corpus" / "text"
MIDI_DIR = ROOT / "sample_corpus" / "midi"

DETERMINERS = ["the", "a", "this", "these", "every", "some", "most", "all", "each", "both", "any"]
ADJECTIVES = [
    "old", "quiet", "bright", "curious", "narrow", "wooden", "distant", "gentle",
    "crooked", "silver", "patient", "restless", "hollow", "amber", "faded",
]
NOUNS = [
    "teacher", "doctor", "student", "farmer", "artist", "pilot", "nurse", "writer",
    "window", "garden", "river", "castle", "piano", "letter", "shadow", "bridge",
    "corner", "engine", "bottle", "market", "valley", "lantern", "orchard", "harbor",
    "cellar", "meadow", "sparrow", "kettle", "ladder", "mirror", "anchor", "ribbon",
    "father", "mother", "sister", "brother", "captain", "painter", "neighbor", "child",
]
VERBS = [
    "sees", "finds", "builds", "opens", "paints", "follows", "watches", "greets",
    "carries", "remembers", "repairs", "visits", "crosses", "counts", "borrows",
    "polishes", "gathers", "measures", "sketches", "mentions",
]
ADVERBS = [
    "often", "never", "always", "probably", "certainly", "maybe", "clearly",
    "quietly", "slowly", "rarely", "suddenly", "carefully", "perhaps", "surely",
]
AUXILIARIES = ["is", "was", "has", "does", "can", "would", "will", "could", "should", "might", "must"]
PRONOUN_TAILS = ["himself", "herself", "itself", "themselves"]
CONNECTIVES = ["that", "because", "while", "before", "after", "although", "unless", "only", "not"]
PUNCT = ["", "", "", "", ",", ".", "!", "?", ";"]


def noun_phrase(rng: random.Random) -> list[str]:
    words = [rng.choice(DETERMINERS)]
    if rng.random() < 0.5:
        words.append(rng.choice(ADJECTIVES))
    words.append(rng.choice(NOUNS))
    return words


def sentence(rng: random.Random) -> str:
    words = noun_phrase(rng)
    if rng.random() < 0.35:
        words.append(rng.choice(ADVERBS))
    if rng.random() < 0.3:
        words.append(rng.choice(AUXILIARIES))
    words.append(rng.choice(VERBS))
    words.extend(noun_phrase(rng))
    if rng.random() < 0.25:
        words.append(rng.choice(PRONOUN_TAILS))
    if rng.random() < 0.4:
        words.append(rng.choice(CONNECTIVES))
        words.extend(noun_phrase(rng))
        words.append(rng.choice(VERBS))
        words.extend(noun_phrase(rng))
    out = []
    for i, word in enumerate(words):
        if i == 0 and rng.random() < 0.8:
            word = word.capitalize()
        out.append(word + (rng.choice(PUNCT) if rng.random() < 0.3 else ""))
    return " ".join(out) + "."


def write_text(target_bytes: int = 200_000) -> None:
    TEXT_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20_230_601)
    for shard in range(4):
        lines = []
        size = 0
        while size < target_bytes // 4:
            line = sentence(rng)
            lines.append(line)
            size += len(line) + 1
        (TEXT_DIR / f"sample_{shard}.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- minimal SMF writer ------------------------------------------------------


def vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def track_chunk(events: list[tuple[int, int, int, int]]) -> bytes:
    body = b""
    for delta, status, key, velocity in events:
        body += vlq(delta) + bytes([status, key, velocity])
    body += vlq(0) + b"\xff\x2f\x00"
    return b"MTrk" + len(body).to_bytes(4, "big") + body


def random_piece(rng: random.Random) -> bytes:
    division = rng.choice([384, 480, 960])
    n_tracks = rng.choice([1, 1, 2])
    tracks = []
    for track_idx in range(n_tracks):
        events = []
        sounding: list[int] = []
        key = rng.randrange(36, 96)
        for _ in range(rng.randrange(80, 240)):
            delta = rng.choice([0, 0, rng.randrange(1, division)])
            if sounding and (rng.random() < 0.5 or len(sounding) > 6):
                note = sounding.pop(rng.randrange(len(sounding)))
                if rng.random() < 0.3:  # velocity-0 note-on as release
                    events.append((delta, 0x90, note, 0))
                else:
                    events.append((delta, 0x80, note, 0))
            else:
                key = max(21, min(108, key + rng.choice([-7, -5, -4, -2, 0, 2, 4, 5, 7, 12, -12])))
                if key not in sounding:
                    sounding.append(key)
                    events.append((delta, 0x90, key, rng.randrange(30, 110)))
        for note in sounding:
            events.append((rng.randrange(1, division), 0x80, note, 0))
        tracks.append(track_chunk(events))
    fmt = 0 if n_tracks == 1 else 1
    header = b"MThd" + (6).to_bytes(4, "big") + fmt.to_bytes(2, "big") + n_tracks.to_bytes(2, "big") + division.to_bytes(2, "big")
    return header + b"".join(tracks)


def write_midi(n_files: int = 20) -> None:
    MIDI_DIR.mkdir(parents=True, exist_ok=True)
    rng = random.Random(19_170_314)
    for i in range(n_files):
        (MIDI_DIR / f"piece_{i:02d}.mid").write_bytes(random_piece(rng))


def main() -> None:
    write_text()
    write_midi()
    text_bytes = sum(p.stat().st_size for p in TEXT_DIR.glob("*.txt"))
    midi_count = len(list(MIDI_DIR.glob("*.mid")))
    print(f"wrote {text_bytes} bytes of text, {midi_count} MIDI files")


if __name__ == "__main__":
    main()
