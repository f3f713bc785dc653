"""Key features of melody fragments: tonality, chords, structure, monotony."""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .core import PITCH_CLASS_NAMES, Note

MAJOR, MINOR = "major", "minor"
CHORUS, VERSE = "chorus", "verse"
STRUCTURES = (CHORUS, VERSE)

# Krumhansl-Kessler probe-tone profiles, tonic first.
KK_MAJOR = (6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88)
KK_MINOR = (6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17)

_NAME_TO_PC = {name: pc for pc, name in enumerate(PITCH_CLASS_NAMES)}
_NAME_TO_PC.update({"Db": 1, "D#": 3, "Gb": 6, "G#": 8, "A#": 10})


@dataclass(frozen=True, slots=True, order=True)
class ChordSymbol:
    root: int
    quality: str = MAJOR

    def __post_init__(self) -> None:
        if not 0 <= self.root <= 11:
            raise ValueError(f"chord root must be a pitch class, got {self.root}")
        if self.quality not in (MAJOR, MINOR):
            raise ValueError(f"unknown chord quality {self.quality!r}")

    def __str__(self) -> str:
        return PITCH_CLASS_NAMES[self.root] + ("m" if self.quality == MINOR else "")

    @classmethod
    def parse(cls, name: str) -> ChordSymbol:
        name = name.strip()
        quality = MAJOR
        if name.endswith("m") and len(name) > 1:
            name, quality = name[:-1], MINOR
        if name not in _NAME_TO_PC:
            raise ValueError(f"unknown chord name {name!r}")
        return cls(_NAME_TO_PC[name], quality)

    @property
    def tones(self) -> frozenset[int]:
        third = 3 if self.quality == MINOR else 4
        return frozenset({self.root, (self.root + third) % 12, (self.root + 7) % 12})


@dataclass(frozen=True, slots=True)
class Tonality:
    mode: str
    key_root: int

    def __post_init__(self) -> None:
        if self.mode not in (MAJOR, MINOR):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 <= self.key_root <= 11:
            raise ValueError(f"key root must be a pitch class, got {self.key_root}")

    def __str__(self) -> str:
        return f"{PITCH_CLASS_NAMES[self.key_root]} {self.mode}"

    @property
    def tonic_chord(self) -> ChordSymbol:
        return ChordSymbol(self.key_root, self.mode)


C_MAJOR = Tonality(MAJOR, 0)
A_MINOR = Tonality(MINOR, 9)


def normalized(mode: str) -> Tonality:
    return C_MAJOR if mode == MAJOR else A_MINOR


# Diatonic triads of C major / A minor, diminished triad excluded.
DIATONIC_CHORDS = tuple(ChordSymbol.parse(n) for n in ("C", "Dm", "Em", "F", "G", "Am"))


def pitch_class_histogram(notes: Iterable[Note]) -> list[float]:
    hist = [0.0] * 12
    for n in notes:
        hist[n.pitch % 12] += n.duration
    return hist


def _pearson(x: Sequence[float], y: Sequence[float]) -> float:
    mx = sum(x) / len(x)
    my = sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    if sxx == 0 or syy == 0:
        return 0.0
    return sxy / math.sqrt(sxx * syy)


def key_correlations(notes: Sequence[Note]) -> dict[Tonality, float]:
    hist = pitch_class_histogram(notes)
    out = {}
    for mode, prof in ((MAJOR, KK_MAJOR), (MINOR, KK_MINOR)):
        for root in range(12):
            rotated = [prof[(pc - root) % 12] for pc in range(12)]
            out[Tonality(mode, root)] = _pearson(hist, rotated)
    return out


def _wrap(semitones: int) -> int:
    return (semitones + 6) % 12 - 6


def infer_tonality(notes: Sequence[Note],
                   candidates: Iterable[Tonality] | None = None) -> tuple[Tonality, int]:
    """Best-correlating key and the shift that moves it to C major / A minor.

    The shift is in [-6, 5].  ``candidates`` restricts the keys considered
    (fragments of already-normalized melodies only choose between C major
    and A minor).  Ties go to major, then to the lowest root.
    """
    if not notes:
        raise ValueError("cannot infer tonality of an empty melody")
    corr = key_correlations(notes)
    keys = list(corr) if candidates is None else list(candidates)
    best = None
    for key in keys:  # majors come first, roots ascending
        if best is None or corr[key] > corr[best]:
            best = key
    target = 0 if best.mode == MAJOR else 9
    return best, _wrap(target - best.key_root)


def transpose(notes: Sequence[Note], semitones: int) -> list[Note]:
    """Shift pitches, moving by whole octaves if the result leaves 0-127."""
    if not notes:
        return []
    lo = min(n.pitch for n in notes) + semitones
    hi = max(n.pitch for n in notes) + semitones
    while hi > 127 and lo - 12 >= 0:
        semitones -= 12
        lo -= 12
        hi -= 12
    while lo < 0 and hi + 12 <= 127:
        semitones += 12
        lo += 12
        hi += 12
    return [n.with_pitch(min(127, max(0, n.pitch + semitones))) for n in notes]


def normalize_melody(notes: Sequence[Note]) -> tuple[list[Note], Tonality]:
    """Transpose a melody to C major or A minor."""
    key, shift = infer_tonality(notes)
    return transpose(notes, shift), normalized(key.mode)


def fragment_tonality(notes: Sequence[Note]) -> Tonality:
    key, _ = infer_tonality(notes, candidates=(C_MAJOR, A_MINOR))
    return key


def chord_emission(bar: Sequence[Note], chord: ChordSymbol) -> Fraction:
    total = sum(n.duration for n in bar)
    if total == 0:
        return Fraction(0)
    on = sum(n.duration for n in bar if n.pitch % 12 in chord.tones)
    return Fraction(on, total)


def _rank(chord: ChordSymbol, prev: ChordSymbol, vocab: Sequence[ChordSymbol]) -> int:
    return 0 if chord == prev else 1 + vocab.index(chord)


def infer_chords(bars: Sequence[Sequence[Note]], tonality: Tonality = C_MAJOR,
                 change_penalty: float | Fraction = Fraction(1, 10),
                 vocab: Sequence[ChordSymbol] = DIATONIC_CHORDS) -> list[ChordSymbol]:
    """One chord per bar by max-sum Viterbi decoding.

    A path scores the sum over bars of the fraction of note duration on
    chord tones, minus ``change_penalty`` per chord change.  Among equally
    scoring paths the decoder keeps the previous chord as long as possible
    (empty bars therefore inherit it) and otherwise prefers earlier
    vocabulary entries; before the first bar the "previous" chord is the
    tonic.  Arithmetic is exact so ties are real ties.
    """
    if not bars:
        raise ValueError("no bars to label")
    lam = Fraction(change_penalty) if not isinstance(change_penalty, float) else Fraction(str(change_penalty))
    n = len(bars)
    emit = [[chord_emission(bar, c) for c in vocab] for bar in bars]
    # best[i][s]: best score of bars i..n-1 given chord s at bar i
    best = [[Fraction(0)] * len(vocab) for _ in range(n)]
    best[-1] = list(emit[-1])
    for i in range(n - 2, -1, -1):
        nxt = best[i + 1]
        for s in range(len(vocab)):
            follow = max(nxt[t] - (0 if t == s else lam) for t in range(len(vocab)))
            best[i][s] = emit[i][s] + follow
    tonic = tonality.tonic_chord
    path: list[ChordSymbol] = []
    prev = tonic
    for i in range(n):
        def value(s: int) -> Fraction:
            return best[i][s] - (0 if i == 0 or vocab[s] == prev else lam)

        top = max(value(s) for s in range(len(vocab)))
        choice = min((s for s in range(len(vocab)) if value(s) == top),
                     key=lambda s: _rank(vocab[s], prev, vocab))
        prev = vocab[choice]
        path.append(prev)
    return path


def path_score(bars: Sequence[Sequence[Note]], path: Sequence[ChordSymbol],
               change_penalty: float | Fraction = Fraction(1, 10)) -> Fraction:
    lam = Fraction(change_penalty) if not isinstance(change_penalty, float) else Fraction(str(change_penalty))
    total = sum((chord_emission(bar, c) for bar, c in zip(bars, path)), Fraction(0))
    return total - lam * sum(1 for a, b in zip(path, path[1:]) if a != b)


@dataclass(frozen=True, slots=True)
class CorpusStats:
    median_mean_pitch: float
    median_density: float


def mean_pitch(notes: Sequence[Note]) -> float:
    return sum(n.pitch for n in notes) / len(notes)


def note_density(notes: Sequence[Note], n_bars: int) -> float:
    return len(notes) / n_bars


def corpus_stats(fragments: Iterable[tuple[Sequence[Note], int]]) -> CorpusStats:
    """Medians over ``(notes, bar_count)`` pairs."""
    pitches, densities = [], []
    for notes, n_bars in fragments:
        if notes:
            pitches.append(mean_pitch(notes))
            densities.append(note_density(notes, n_bars))
    if not pitches:
        raise ValueError("no fragments to summarise")
    return CorpusStats(statistics.median(pitches), statistics.median(densities))


def label_structure(notes: Sequence[Note], stats: CorpusStats, n_bars: int = 1) -> str:
    """Chorus iff both mean pitch and note density exceed the corpus medians."""
    if not notes:
        raise ValueError("cannot label an empty fragment")
    if mean_pitch(notes) > stats.median_mean_pitch and note_density(notes, n_bars) > stats.median_density:
        return CHORUS
    return VERSE


def is_monotonous(notes: Sequence[Note], min_unique: int = 3) -> bool:
    return len(notes) >= 4 and len({n.pitch for n in notes}) < min_unique
