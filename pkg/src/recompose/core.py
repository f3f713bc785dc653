"""Note, bar and token primitives shared by every other module.

Time is measured in integer ticks.  A :class:`TimeBase` fixes the tick
resolution and the meter (4/4 at 480 ticks per quarter by default).
Melodies are monophonic lists of :class:`Note` sorted by onset.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .errors import MonophonyError

# Sixteenth-note multiples 1..16 for durations, 0..15 for rests.
N_CLASSES = 16


@dataclass(frozen=True, slots=True)
class Note:
    pitch: int
    onset: int
    duration: int
    velocity: int = 100

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if self.onset < 0:
            raise ValueError(f"negative onset: {self.onset}")
        if self.duration <= 0:
            raise ValueError(f"non-positive duration: {self.duration}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")

    @property
    def end(self) -> int:
        return self.onset + self.duration

    def shifted(self, delta: int) -> Note:
        return Note(self.pitch, self.onset + delta, self.duration, self.velocity)

    def with_pitch(self, pitch: int) -> Note:
        return Note(pitch, self.onset, self.duration, self.velocity)


@dataclass(frozen=True, slots=True)
class TimeBase:
    ticks_per_quarter: int = 480
    beats_per_bar: int = 4

    def __post_init__(self) -> None:
        if self.ticks_per_quarter <= 0 or self.ticks_per_quarter % 4:
            raise ValueError("ticks_per_quarter must be a positive multiple of 4")
        if self.beats_per_bar <= 0:
            raise ValueError("beats_per_bar must be positive")

    @property
    def bar_ticks(self) -> int:
        return self.ticks_per_quarter * self.beats_per_bar

    @property
    def sixteenth(self) -> int:
        return self.ticks_per_quarter // 4


class NoteToken(NamedTuple):
    """One note as the language model sees it.

    ``duration_class`` is the duration in sixteenths minus one and
    ``rest_class`` the preceding rest in sixteenths; both saturate at 15.
    """

    pitch: int
    duration_class: int
    rest_class: int

    def __str__(self) -> str:
        return f"{self.pitch}:{self.duration_class}:{self.rest_class}"

    @classmethod
    def parse(cls, text: str) -> NoteToken:
        p, d, r = (int(x) for x in text.split(":"))
        if not (0 <= p <= 127 and 0 <= d < N_CLASSES and 0 <= r < N_CLASSES):
            raise ValueError(f"token out of range: {text!r}")
        return cls(p, d, r)


def quantize(ticks: int, tb: TimeBase) -> int:
    """Nearest number of sixteenths (halves round up)."""
    six = tb.sixteenth
    return (ticks + six // 2) // six


def duration_class(ticks: int, tb: TimeBase) -> int:
    return min(N_CLASSES, max(1, quantize(ticks, tb))) - 1


def rest_class(ticks: int, tb: TimeBase) -> int:
    return min(N_CLASSES - 1, max(0, quantize(ticks, tb)))


def tokenize(notes: Sequence[Note], tb: TimeBase = TimeBase(), origin: int = 0) -> list[NoteToken]:
    """Turn a monophonic melody into tokens.

    The first note's rest is measured from ``origin``.  Raises
    :class:`MonophonyError` if a note starts before its predecessor ends.
    """
    tokens = []
    prev_end = origin
    for i, n in enumerate(notes):
        if n.onset < prev_end:
            if i == 0:
                raise ValueError(f"first note starts before origin {origin}")
            raise MonophonyError(f"note {i} at tick {n.onset} overlaps previous note ending at {prev_end}")
        tokens.append(NoteToken(n.pitch, duration_class(n.duration, tb), rest_class(n.onset - prev_end, tb)))
        prev_end = n.end
    return tokens


def detokenize(tokens: Iterable[NoteToken], tb: TimeBase = TimeBase(), origin: int = 0,
               velocity: int = 100) -> list[Note]:
    six = tb.sixteenth
    notes = []
    t = origin
    for tok in tokens:
        onset = t + tok.rest_class * six
        dur = (tok.duration_class + 1) * six
        notes.append(Note(tok.pitch, onset, dur, velocity))
        t = onset + dur
    return notes


def split_into_bars(notes: Sequence[Note], tb: TimeBase = TimeBase()) -> list[list[Note]]:
    """Group notes by bar index, clipping any note that crosses a barline.

    Bars are contiguous from bar 0 to the bar of the last onset; bars with
    no onsets are empty lists.
    """
    if not notes:
        return []
    bar = tb.bar_ticks
    n_bars = max(n.onset for n in notes) // bar + 1
    bars: list[list[Note]] = [[] for _ in range(n_bars)]
    for n in notes:
        idx = n.onset // bar
        limit = (idx + 1) * bar
        if n.end > limit:
            n = Note(n.pitch, n.onset, limit - n.onset, n.velocity)
        bars[idx].append(n)
    return bars


def bar_count(notes: Sequence[Note], tb: TimeBase = TimeBase()) -> int:
    if not notes:
        return 0
    bar = tb.bar_ticks
    return -(-max(n.end for n in notes) // bar)


def rebase(notes: Sequence[Note], start: int | None = None) -> list[Note]:
    """Shift notes so ``start`` (default: first onset) becomes tick 0."""
    if not notes:
        return []
    if start is None:
        start = notes[0].onset
    return [n.shifted(-start) for n in notes]


def check_monophonic(notes: Sequence[Note]) -> None:
    for a, b in zip(notes, notes[1:]):
        if b.onset < a.end:
            raise MonophonyError(f"note at tick {b.onset} overlaps note ending at {a.end}")


_NAME_RE = re.compile(r"^\s*([A-Ga-g])([#b]{0,2})(-?\d+)\s*$")
_LETTER = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
PITCH_CLASS_NAMES = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"]


def pitch_name_to_midi(name: str) -> int:
    """``"C4"`` -> 60, ``"G3"`` -> 55.  Accepts ``#``/``b`` accidentals."""
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"unparseable pitch name: {name!r}")
    letter, acc, octave = m.groups()
    midi = 12 * (int(octave) + 1) + _LETTER[letter.upper()] + acc.count("#") - acc.count("b")
    if not 0 <= midi <= 127:
        raise ValueError(f"pitch name outside MIDI range: {name!r}")
    return midi


def midi_to_pitch_name(pitch: int) -> str:
    return f"{PITCH_CLASS_NAMES[pitch % 12]}{pitch // 12 - 1}"
