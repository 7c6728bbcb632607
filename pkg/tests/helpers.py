"""Shared test utilities: SMF byte assembly, an independent reference SMF
reader used as an oracle, and synthetic corpus generators."""

from __future__ import annotations

import random

from picolm.midi_text import MidiScore, NoteEvent, TimedEvent, ONSET, RELEASE

# ---------------------------------------------------------------------------
# SMF byte assembly
# ---------------------------------------------------------------------------


def vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def smf_header(fmt: int, n_tracks: int, division: int) -> bytes:
    return b"MThd" + (6).to_bytes(4, "big") + fmt.to_bytes(2, "big") + n_tracks.to_bytes(2, "big") + division.to_bytes(2, "big")


def track_chunk(body: bytes) -> bytes:
    return b"MTrk" + len(body).to_bytes(4, "big") + body


def end_of_track(delta: int = 0) -> bytes:
    return vlq(delta) + b"\xff\x2f\x00"


def note_on(delta: int, channel: int, key: int, velocity: int) -> bytes:
    return vlq(delta) + bytes([0x90 | channel, key, velocity])


def note_off(delta: int, channel: int, key: int, velocity: int = 0) -> bytes:
    return vlq(delta) + bytes([0x80 | channel, key, velocity])


# ---------------------------------------------------------------------------
# Independent reference SMF reader (test oracle)
# ---------------------------------------------------------------------------


def reference_note_events(data: bytes) -> list[tuple[int, str, int, int]]:
    """Flat-footed SMF note-event reader, written directly from the file
    standard: walks chunks byte by byte, applies running status, reports
    (absolute_time, kind, channel, key) merged over tracks in
    (time, track, order) order. Velocity-0 note-ons are releases per the
    MIDI convention. No canonicalization is applied."""
    assert data[:4] == b"MThd"
    header_len = int.from_bytes(data[4:8], "big")
    pos = 8 + header_len
    per_track: list[list[tuple[int, str, int, int]]] = []

    while pos < len(data):
        kind4 = data[pos : pos + 4]
        size = int.from_bytes(data[pos + 4 : pos + 8], "big")
        body = data[pos + 8 : pos + 8 + size]
        pos = pos + 8 + size
        if kind4 != b"MTrk":
            continue
        events: list[tuple[int, str, int, int]] = []
        i = 0
        now = 0
        status = None
        while i < len(body):
            # delta time
            delta = 0
            while True:
                b = body[i]
                i += 1
                delta = (delta << 7) | (b & 0x7F)
                if not b & 0x80:
                    break
            now += delta
            b = body[i]
            if b == 0xFF:
                meta_len = 0
                i += 2
                while True:
                    c = body[i]
                    i += 1
                    meta_len = (meta_len << 7) | (c & 0x7F)
                    if not c & 0x80:
                        break
                i += meta_len
                status = None
                continue
            if b in (0xF0, 0xF7):
                i += 1
                sysex_len = 0
                while True:
                    c = body[i]
                    i += 1
                    sysex_len = (sysex_len << 7) | (c & 0x7F)
                    if not c & 0x80:
                        break
                i += sysex_len
                status = None
                continue
            if b & 0x80:
                status = b
                i += 1
            assert status is not None
            hi, ch = status & 0xF0, status & 0x0F
            if hi in (0xC0, 0xD0):
                i += 1
                continue
            d1, d2 = body[i], body[i + 1]
            i += 2
            if hi == 0x90:
                events.append((now, "onset" if d2 > 0 else "release", ch, d1))
            elif hi == 0x80:
                events.append((now, "release", ch, d1))
        per_track.append(events)

    merged = []
    for track_idx, events in enumerate(per_track):
        for order, (t, kind, ch, key) in enumerate(events):
            merged.append((t, track_idx, order, kind, ch, key))
    merged.sort(key=lambda e: (e[0], e[1], e[2]))
    return [(t, kind, ch, key) for t, _tr, _o, kind, ch, key in merged]


def score_note_events(score: MidiScore) -> list[tuple[int, str, int, int]]:
    """MidiScore rendered in the reference oracle's tuple form."""
    out = []
    for te, abs_time in zip(score.events, score.absolute_times()):
        out.append((abs_time, te.event.kind, te.event.channel, te.event.key))
    return out


# ---------------------------------------------------------------------------
# Random canonical scores
# ---------------------------------------------------------------------------


def random_canonical_score(rng: random.Random, max_events: int = 120) -> MidiScore:
    sounding: list[tuple[int, int]] = []
    events: list[TimedEvent] = []
    for _ in range(rng.randrange(0, max_events)):
        delta = rng.choice([0, 0, rng.randrange(1, 960)])
        if sounding and rng.random() < 0.45:
            channel, key = sounding.pop(rng.randrange(len(sounding)))
            events.append(TimedEvent(delta, NoteEvent(RELEASE, channel, key)))
        else:
            channel, key = rng.randrange(16), rng.randrange(128)
            sounding.append((channel, key))
            events.append(TimedEvent(delta, NoteEvent(ONSET, channel, key)))
    return MidiScore(ticks_per_quarter=rng.choice([96, 192, 384, 480, 960]), events=events)


# ---------------------------------------------------------------------------
# Synthetic text
# ---------------------------------------------------------------------------

_DETERMINERS = ["the", "a", "this", "these", "every", "some", "most"]
_NOUNS = [
    "teacher", "doctor", "student", "farmer", "artist", "pilot", "nurse",
    "window", "garden", "river", "castle", "piano", "letter", "shadow",
    "bridge", "corner", "engine", "bottle", "market", "valley",
]
_VERBS = [
    "sees", "finds", "builds", "opens", "paints", "follows", "watches",
    "greets", "carries", "remembers", "repairs", "visits",
]
_ADVERBS = ["often", "never", "always", "probably", "certainly", "maybe", "clearly"]
_EXTRAS = [
    "that", "himself", "herself", "themselves", "not", "only", "can", "might",
    "should", "is", "was", "has", "don't", "isn't",
]
_PUNCT_SUFFIX = ["", "", "", ",", ".", "!", "?", ";"]


def random_sentence(rng: random.Random) -> str:
    words = []
    for _ in range(rng.randrange(4, 12)):
        pool = rng.choice([_DETERMINERS, _NOUNS, _VERBS, _ADVERBS, _EXTRAS, _NOUNS])
        word = rng.choice(pool)
        if rng.random() < 0.15:
            word = word.capitalize()
        words.append(word + rng.choice(_PUNCT_SUFFIX))
    return " ".join(words)


def synthetic_text_corpus(rng: random.Random, n_lines: int) -> list[str]:
    return [random_sentence(rng) for _ in range(n_lines)]
