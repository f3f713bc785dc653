"""Standard MIDI File reading and writing for monophonic melodies.

Only what the pipeline needs: format 0/1 files with metrical (PPQ)
division are read, and songs are written as format 1 with a single
melody track at a fixed 120 BPM, optionally carrying one lyric
meta-event per sung syllable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import Note, TimeBase
from .errors import MidiError

TEMPO_USEC = 500_000  # 120 BPM

META_TRACK_NAME = 0x03
META_LYRIC = 0x05
META_END_OF_TRACK = 0x2F
META_TEMPO = 0x51
META_TIME_SIGNATURE = 0x58


@dataclass
class MidiSong:
    notes: list[Note]
    tb: TimeBase = field(default_factory=TimeBase)
    lyric_events: list[str | None] | None = None


@dataclass
class _Track:
    name: str = ""
    notes: list[Note] = field(default_factory=list)
    lyrics: dict[int, str] = field(default_factory=dict)


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for i in range(4):
        if pos >= end:
            raise MidiError("variable-length quantity runs past end of track", pos)
        b = data[pos]
        pos += 1
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            return value, pos
    raise MidiError("variable-length quantity longer than 4 bytes", pos)


def _decode_text(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def _parse_track(data: bytes, start: int, end: int) -> _Track:
    track = _Track()
    open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
    pos = start
    tick = 0
    running = None
    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise MidiError("event truncated", pos)
        status = data[pos]
        if status & 0x80:
            pos += 1
        elif running is None:
            raise MidiError("data byte without running status", pos)
        else:
            status = running
        if status == 0xFF:
            running = None
            if pos >= end:
                raise MidiError("meta event truncated", pos)
            mtype = data[pos]
            length, pos = _read_vlq(data, pos + 1, end)
            if pos + length > end:
                raise MidiError("meta event runs past end of track", pos)
            payload = data[pos:pos + length]
            pos += length
            if mtype == META_END_OF_TRACK:
                break
            if mtype == META_TRACK_NAME and not track.name:
                track.name = _decode_text(payload)
            elif mtype == META_LYRIC:
                track.lyrics.setdefault(tick, _decode_text(payload))
        elif status in (0xF0, 0xF7):
            running = None
            length, pos = _read_vlq(data, pos, end)
            pos += length
            if pos > end:
                raise MidiError("sysex runs past end of track", pos)
        elif status >= 0xF0:
            raise MidiError(f"unsupported status byte 0x{status:02X}", pos - 1)
        else:
            running = status
            kind = status & 0xF0
            n_data = 1 if kind in (0xC0, 0xD0) else 2
            if pos + n_data > end:
                raise MidiError("channel message truncated", pos)
            d = data[pos:pos + n_data]
            pos += n_data
            if kind in (0x80, 0x90):
                key = (status & 0x0F, d[0])
                if kind == 0x90 and d[1] > 0:
                    open_notes.setdefault(key, []).append((tick, d[1]))
                elif open_notes.get(key):
                    on_tick, vel = open_notes[key].pop(0)
                    if tick > on_tick:
                        track.notes.append(Note(d[0], on_tick, tick - on_tick, vel))
    for (_, pitch), pending in open_notes.items():
        for on_tick, vel in pending:
            if tick > on_tick:
                track.notes.append(Note(pitch, on_tick, tick - on_tick, vel))
    return track


def _beats(a: Note, b: Note) -> bool:
    return (a.velocity, a.pitch) > (b.velocity, b.pitch)


def make_monophonic(notes: Sequence[Note]) -> list[Note]:
    """Resolve overlaps: the louder note (then the higher) keeps its span.

    The losing note is trimmed so it no longer overlaps, or dropped if
    nothing of it remains.
    """
    pending = sorted(notes, key=lambda n: (n.onset, -n.velocity, -n.pitch))
    out: list[Note] = []
    for n in pending:
        while out and n is not None and n.onset < out[-1].end:
            p = out[-1]
            if _beats(n, p):
                if n.onset > p.onset:
                    out[-1] = Note(p.pitch, p.onset, n.onset - p.onset, p.velocity)
                    break
                out.pop()
            else:
                if n.end <= p.end:
                    n = None
                else:
                    n = Note(n.pitch, p.end, n.end - p.end, n.velocity)
        if n is not None:
            out.append(n)
    return out


def read_midi(data: bytes) -> MidiSong:
    if not data:
        raise MidiError("empty file", 0)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiError("missing MThd header", 0)
    hlen, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if hlen < 6:
        raise MidiError("header chunk too short", 4)
    if fmt not in (0, 1):
        raise MidiError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiError("SMPTE time division is not supported", 12)
    if division == 0 or division % 4:
        raise MidiError(f"ticks per quarter must be a positive multiple of 4, got {division}", 12)
    pos = 8 + hlen
    tracks: list[_Track] = []
    while pos < len(data) and len(tracks) < ntrks:
        if pos + 8 > len(data):
            raise MidiError("truncated chunk header", pos)
        ctype = data[pos:pos + 4]
        (clen,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + clen > len(data):
            raise MidiError(f"chunk {ctype!r} runs past end of file", pos)
        if ctype == b"MTrk":
            tracks.append(_parse_track(data, body, body + clen))
        pos = body + clen
    if len(tracks) < ntrks:
        raise MidiError(f"header promises {ntrks} tracks, found {len(tracks)}", pos)

    chosen = next((t for t in tracks if "melody" in t.name.lower() and t.notes), None)
    if chosen is None:
        chosen = next((t for t in tracks if t.notes), _Track())
    notes = make_monophonic(chosen.notes)
    lyrics = None
    if chosen.lyrics:
        lyrics = [chosen.lyrics.get(n.onset) for n in notes]
    return MidiSong(notes, TimeBase(division), lyrics)


def read_midi_file(path: str | Path) -> MidiSong:
    return read_midi(Path(path).read_bytes())


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _meta(mtype: int, payload: bytes) -> bytes:
    return bytes([0xFF, mtype]) + _vlq(len(payload)) + payload


def midi_bytes(song: MidiSong) -> bytes:
    """Encode as SMF format 1 with one melody track."""
    tb = song.tb
    notes = sorted(song.notes, key=lambda n: n.onset)
    lyrics = song.lyric_events
    if lyrics is not None and len(lyrics) != len(notes):
        raise ValueError("lyric_events must align one-to-one with notes")
    # (tick, order, payload): note-offs before lyrics before note-ons at equal ticks
    events: list[tuple[int, int, int, bytes]] = [
        (0, -1, 0, _meta(META_TRACK_NAME, b"melody")),
        (0, -1, 1, _meta(META_TEMPO, TEMPO_USEC.to_bytes(3, "big"))),
        (0, -1, 2, _meta(META_TIME_SIGNATURE, bytes([tb.beats_per_bar, 2, 24, 8]))),
    ]
    for i, n in enumerate(notes):
        if lyrics is not None and lyrics[i] is not None:
            events.append((n.onset, 1, i, _meta(META_LYRIC, lyrics[i].encode("utf-8"))))
        events.append((n.onset, 2, i, bytes([0x90, n.pitch, n.velocity])))
        events.append((n.end, 0, i, bytes([0x80, n.pitch, 0x40])))
    events.sort(key=lambda e: e[:3])
    body = bytearray()
    last = 0
    for tick, _, _, payload in events:
        body += _vlq(tick - last) + payload
        last = tick
    body += b"\x00" + _meta(META_END_OF_TRACK, b"")
    header = b"MThd" + struct.pack(">IHHH", 6, 1, 1, tb.ticks_per_quarter)
    return header + b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def write_midi(song: MidiSong, path: str | Path) -> None:
    Path(path).write_bytes(midi_bytes(song))
