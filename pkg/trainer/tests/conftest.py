"""Session fixtures: build per-preset workspaces with the picolm CLI.

The trainer only consumes picolm's external interfaces, so the fixtures run
the real `pipeline run` command once per preset over a synthetic
determiner-noun-class grammar corpus (plus two tiny MIDI files for the
music stages) and hand the resulting output directories to the tests.
"""

from __future__ import annotations

import json
import random
import subprocess
import sys
import time
from pathlib import Path

import pytest


@pytest.fixture(scope="session", autouse=True)
def session_start():
    # autouse so the clock starts with the first test, not on first request
    return time.monotonic()

PRESETS = ["lil-bevo", "long-only", "short-only", "short-target", "music-short", "music-short-long"]

# Determiner classes license noun classes (animate vs inanimate); the word
# surfaces come from the targeted category lists so targeted-MLM plans have
# plenty of matches.
DET = {"a": ["this", "these", "every", "some"], "b": ["that", "all", "most", "both"]}
NOUNS = {
    "a": ["teacher", "doctor", "student", "farmer", "artist", "pilot", "nurse", "writer"],
    "b": ["window", "garden", "river", "castle", "piano", "letter", "shadow", "bridge"],
}
VERBS = ["can", "might", "sees", "finds", "waits", "turns"]

PICOLM = [sys.executable, "-m", "picolm.cli"]


def grammar_sentence(rng: random.Random) -> str:
    words = []
    for _ in range(2):
        klass = rng.choice("ab")
        words += [rng.choice(DET[klass]), rng.choice(NOUNS[klass])]
        words.append(rng.choice(VERBS))
    return " ".join(words)


def grammar_pairs(rng: random.Random, n_pairs: int) -> list[dict]:
    pairs = []
    for _ in range(n_pairs):
        klass, other = ("a", "b") if rng.random() < 0.5 else ("b", "a")
        d, v = rng.choice(DET[klass]), rng.choice(VERBS)
        pairs.append(
            {
                "sentence_good": f"{d} {rng.choice(NOUNS[klass])} {v}",
                "sentence_bad": f"{d} {rng.choice(NOUNS[other])} {v}",
                "phenomenon": "dn_class",
            }
        )
    return pairs


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def tiny_midi(seed: int) -> bytes:
    rng = random.Random(seed)
    body = b""
    key = 60
    open_keys = []
    for _ in range(60):
        delta = rng.choice([0, 0, rng.randrange(1, 240)])
        if open_keys and rng.random() < 0.5:
            note = open_keys.pop()
            body += _vlq(delta) + bytes([0x80, note, 0])
        else:
            key = max(21, min(108, key + rng.choice([-5, -2, 2, 5, 7])))
            if key not in open_keys:
                open_keys.append(key)
                body += _vlq(delta) + bytes([0x90, key, 90])
    for note in open_keys:
        body += _vlq(10) + bytes([0x80, note, 0])
    body += _vlq(0) + b"\xff\x2f\x00"
    track = b"MTrk" + len(body).to_bytes(4, "big") + body
    header = b"MThd" + (6).to_bytes(4, "big") + (0).to_bytes(2, "big") + (1).to_bytes(2, "big") + (480).to_bytes(2, "big")
    return header + track


@pytest.fixture(scope="session")
def grammar_workspaces(tmp_path_factory) -> dict:
    root = tmp_path_factory.mktemp("grammar")
    (root / "text").mkdir()
    (root / "midi").mkdir()

    rng = random.Random(7001)
    lines = [grammar_sentence(rng) for _ in range(8000)]
    (root / "text" / "grammar.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    for i in range(2):
        (root / "midi" / f"m{i}.mid").write_bytes(tiny_midi(i))

    pairs_path = root / "pairs.jsonl"
    pairs_path.write_text(
        "\n".join(json.dumps(p) for p in grammar_pairs(random.Random(7002), 40)) + "\n",
        encoding="utf-8",
    )

    config_path = root / "config.toml"
    config_path.write_text(
        f"""
[paths]
text_dir = "{root}/text"
midi_dir = "{root}/midi"
output_dir = "{root}/unused"
[tokenizer]
vocab_size = 320
[pack]
preset = "lil-bevo"
[seeds]
pack = 501
mask = 502
"""
    )

    workspaces = {}
    for preset in PRESETS:
        out_dir = root / f"ws_{preset}"
        subprocess.run(
            PICOLM
            + [
                "pipeline",
                "run",
                "--config",
                str(config_path),
                "--output-dir",
                str(out_dir),
                "--preset",
                preset,
            ],
            check=True,
            capture_output=True,
            text=True,
        )
        workspaces[preset] = out_dir
    return {"workspaces": workspaces, "pairs": pairs_path, "root": root}
