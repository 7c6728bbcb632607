#!/usr/bin/env python3
"""Walk through the MIDI -> event-code text conversion on a bundled file.

A Standard MIDI File becomes a single chronological timeline of note onsets
and releases; the timeline becomes space-delimited codes like `c0n71`
(note on, channel 0, key 71) and `t18` (18 ticks elapsed). The codes decode
back to the identical timeline.
"""

from pathlib import Path

from picolm.midi_text import decode_events, encode_events, parse_smf

ROOT = Path(__file__).resolve().parent.parent
midi_path = ROOT / "sample_corpus" / "midi" / "piece_00.mid"

score = parse_smf(midi_path.read_bytes())
print(f"parsed {midi_path.name}: {len(score.events)} note events, "
      f"{score.ticks_per_quarter} ticks per quarter note")

print("\nfirst ten events (absolute tick, kind, channel, key):")
for timed, abs_time in list(zip(score.events, score.absolute_times()))[:10]:
    print(f"  {abs_time:>6} {timed.event.kind:<8} ch{timed.event.channel} key{timed.event.key}")

text = encode_events(score)
print(f"\nevent-code text ({len(text)} characters), first 200:")
print(" ", text[:200])

# the codec is lossless on the canonical timeline
decoded = decode_events(text, ticks_per_quarter=score.ticks_per_quarter)
assert decoded.absolute_times() == score.absolute_times()
assert [t.event for t in decoded.events] == [t.event for t in score.events]
print("\nround trip: decode(encode(score)) reproduces every event and time exactly")
