"""Standard MIDI File parsing and the space-delimited note-event text codec.

A parsed file becomes a :class:`MidiScore`: a single chronological timeline of
note onsets and releases with integer tick deltas, all tracks merged. The text
codec turns that timeline into space-delimited codes (``c0n71`` for an onset
on channel 0, key 71; ``c0r71`` for the matching release; ``t18`` for 18 ticks
of elapsed time) and back.

Only note events survive parsing. Meta events, controllers, program changes
and sysex payloads are skipped, but their delta times still advance the clock,
so note timing is preserved exactly.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

ONSET = "onset"
RELEASE = "release"

_HEADER_MAGIC = b"MThd"
_TRACK_MAGIC = b"MTrk"

_CODE_RE = re.compile(r"c(\d{1,2})([nr])(\d{1,3})$")
_TIME_RE = re.compile(r"t(\d+)$")


class SmfParseError(ValueError):
    """Malformed SMF data. Carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class EventCodeError(ValueError):
    """Unrecognized token in the textual event-code representation."""

    def __init__(self, token: str, index: int):
        super().__init__(f"unrecognized event code {token!r} at token index {index}")
        self.token = token
        self.index = index


@dataclass(frozen=True)
class NoteEvent:
    """A note onset or release on a MIDI channel."""

    kind: str
    channel: int
    key: int

    def __post_init__(self):
        if self.kind not in (ONSET, RELEASE):
            raise ValueError(f"kind must be {ONSET!r} or {RELEASE!r}, got {self.kind!r}")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel out of MIDI range: {self.channel}")
        if not 0 <= self.key <= 127:
            raise ValueError(f"key out of MIDI range: {self.key}")


@dataclass(frozen=True)
class TimedEvent:
    """A note event preceded by its tick delta in the merged timeline."""

    delta_ticks: int
    event: NoteEvent

    def __post_init__(self):
        if self.delta_ticks < 0:
            raise ValueError(f"delta_ticks must be non-negative, got {self.delta_ticks}")


@dataclass
class MidiScore:
    """Canonical chronological note-event timeline of one MIDI file."""

    ticks_per_quarter: int
    events: list[TimedEvent] = field(default_factory=list)

    def absolute_times(self) -> list[int]:
        """Cumulative tick time of each event."""
        times, t = [], 0
        for te in self.events:
            t += te.delta_ticks
            times.append(t)
        return times


# ---------------------------------------------------------------------------
# SMF parsing
# ---------------------------------------------------------------------------


def _read_u32(data: bytes, pos: int) -> int:
    if pos + 4 > len(data):
        raise SmfParseError("truncated 32-bit field", pos)
    return int.from_bytes(data[pos : pos + 4], "big")


def _read_u16(data: bytes, pos: int) -> int:
    if pos + 2 > len(data):
        raise SmfParseError("truncated 16-bit field", pos)
    return int.from_bytes(data[pos : pos + 2], "big")


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    """Read a variable-length quantity; returns (value, next position)."""
    value = 0
    start = pos
    while True:
        if pos >= end:
            raise SmfParseError("truncated variable-length quantity", start)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
        if pos - start >= 4:
            raise SmfParseError("variable-length quantity longer than 4 bytes", start)


def _parse_track(data: bytes, pos: int, end: int, track_index: int) -> list[tuple[int, int, NoteEvent]]:
    """Parse one MTrk body into (absolute_time, sequence_number, event) tuples."""
    events: list[tuple[int, int, NoteEvent]] = []
    abs_time = 0
    seq = 0
    running_status: int | None = None

    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        abs_time += delta
        if pos >= end:
            raise SmfParseError("track ended after delta time", pos)

        first = data[pos]
        if first == 0xFF:  # meta event
            if pos + 2 > end:
                raise SmfParseError("truncated meta event", pos)
            length, next_pos = _read_vlq(data, pos + 2, end)
            pos = next_pos + length
            if pos > end:
                raise SmfParseError("meta event overruns track", next_pos)
            running_status = None
            continue
        if first in (0xF0, 0xF7):  # sysex
            length, next_pos = _read_vlq(data, pos + 1, end)
            pos = next_pos + length
            if pos > end:
                raise SmfParseError("sysex event overruns track", next_pos)
            running_status = None
            continue

        if first & 0x80:
            status = first
            running_status = status
            pos += 1
        else:
            if running_status is None:
                raise SmfParseError(f"data byte 0x{first:02x} with no running status", pos)
            status = running_status

        kind = status & 0xF0
        channel = status & 0x0F
        n_data = 1 if kind in (0xC0, 0xD0) else 2
        if pos + n_data > end:
            raise SmfParseError("truncated channel event", pos)
        d1 = data[pos]
        d2 = data[pos + 1] if n_data == 2 else 0
        pos += n_data

        if kind == 0x90 and d2 > 0:
            events.append((abs_time, seq, NoteEvent(ONSET, channel, d1)))
            seq += 1
        elif kind == 0x80 or (kind == 0x90 and d2 == 0):
            events.append((abs_time, seq, NoteEvent(RELEASE, channel, d1)))
            seq += 1
        # all other channel events are skipped; the delta already advanced the clock

    return events


def parse_smf(data: bytes) -> MidiScore:
    """Parse a format-0 or format-1 Standard MIDI File into a MidiScore.

    All tracks are merged into one chronological timeline, ties broken by
    (track index, within-track order). Note-ons with velocity 0 become
    releases. Releases with no matching sounding onset are dropped with a
    warning. Unknown chunk types are skipped with a warning.
    """
    if data[:4] != _HEADER_MAGIC:
        raise SmfParseError("missing MThd header", 0)
    header_len = _read_u32(data, 4)
    if header_len < 6:
        raise SmfParseError(f"header chunk too short ({header_len} bytes)", 4)
    if 8 + header_len > len(data):
        raise SmfParseError("truncated header chunk", 8)
    fmt = _read_u16(data, 8)
    declared_tracks = _read_u16(data, 10)
    division = _read_u16(data, 12)
    if fmt not in (0, 1):
        raise SmfParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise SmfParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise SmfParseError("zero ticks-per-quarter division", 12)

    pos = 8 + header_len
    merged: list[tuple[int, int, int, NoteEvent]] = []
    track_index = 0
    while pos < len(data):
        chunk_type = data[pos : pos + 4]
        if len(chunk_type) < 4:
            raise SmfParseError("truncated chunk header", pos)
        chunk_len = _read_u32(data, pos + 4)
        body_start = pos + 8
        body_end = body_start + chunk_len
        if body_end > len(data):
            raise SmfParseError(f"chunk overruns file (declared {chunk_len} bytes)", pos + 4)
        if chunk_type != _TRACK_MAGIC:
            logger.warning("skipping unknown chunk type %r at offset %d", chunk_type, pos)
            pos = body_end
            continue
        for abs_time, seq, ev in _parse_track(data, body_start, body_end, track_index):
            merged.append((abs_time, track_index, seq, ev))
        track_index += 1
        pos = body_end

    if track_index != declared_tracks:
        logger.warning("header declares %d tracks, found %d", declared_tracks, track_index)

    merged.sort(key=lambda item: (item[0], item[1], item[2]))

    # Canonical form: a release must close a note that is still sounding.
    sounding: Counter[tuple[int, int]] = Counter()
    events: list[TimedEvent] = []
    prev_time = 0
    for abs_time, _track, _seq, ev in merged:
        if ev.kind == ONSET:
            sounding[(ev.channel, ev.key)] += 1
        else:
            if sounding[(ev.channel, ev.key)] <= 0:
                logger.warning(
                    "dropping orphan release ch%d key%d at tick %d", ev.channel, ev.key, abs_time
                )
                continue
            sounding[(ev.channel, ev.key)] -= 1
        events.append(TimedEvent(abs_time - prev_time, ev))
        prev_time = abs_time

    return MidiScore(ticks_per_quarter=division, events=events)


# ---------------------------------------------------------------------------
# Text codec
# ---------------------------------------------------------------------------


def encode_events(score: MidiScore) -> str:
    """Render a MidiScore as space-delimited event codes.

    Onsets emit ``c{channel}n{key}``, releases ``c{channel}r{key}``. A nonzero
    delta of d ticks emits ``t{d}`` before the event code; zero deltas emit
    nothing.
    """
    parts: list[str] = []
    for te in score.events:
        if te.delta_ticks:
            parts.append(f"t{te.delta_ticks}")
        marker = "n" if te.event.kind == ONSET else "r"
        parts.append(f"c{te.event.channel}{marker}{te.event.key}")
    return " ".join(parts)


def decode_events(text: str, ticks_per_quarter: int = 480) -> MidiScore:
    """Parse space-delimited event codes back into a MidiScore.

    Consecutive ``t`` codes accumulate additively. The tick resolution is not
    recoverable from the text, so it is taken from `ticks_per_quarter`.
    Trailing time codes with no following event encode silence a MidiScore
    cannot represent and are discarded.
    """
    events: list[TimedEvent] = []
    pending = 0
    for index, token in enumerate(text.split()):
        m = _TIME_RE.match(token)
        if m:
            pending += int(m.group(1))
            continue
        m = _CODE_RE.match(token)
        if not m:
            raise EventCodeError(token, index)
        channel, kind_char, key = int(m.group(1)), m.group(2), int(m.group(3))
        if channel > 15 or key > 127:
            raise EventCodeError(token, index)
        kind = ONSET if kind_char == "n" else RELEASE
        events.append(TimedEvent(pending, NoteEvent(kind, channel, key)))
        pending = 0
    return MidiScore(ticks_per_quarter=ticks_per_quarter, events=events)
