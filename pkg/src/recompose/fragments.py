"""The fragment database: creation-stage pipeline, keyed retrieval, persistence.

Every two-bar window of a seed melody is used as context for the melody
model, which generates the following two bars.  Generations identical to
the real continuation are dropped; each surviving generation is stored as
its two one-bar halves plus the whole two-bar fragment, keyed by note
count, mode and chorus/verse label.  Chord strings are kept alongside for
regular-expression filtering.
"""

from __future__ import annotations

import functools
import logging
import os
import random
import re
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import Note, TimeBase, bar_count, detokenize, rebase, split_into_bars, tokenize
from .errors import DatabaseFormatError
from .features import (CHORUS, MAJOR, MINOR, STRUCTURES, VERSE, ChordSymbol, CorpusStats, Tonality,
                       corpus_stats, fragment_tonality, infer_chords, is_monotonous, label_structure,
                       normalized)
from .lm import LanguageModel, generate_continuation

log = logging.getLogger(__name__)

FORMAT_NAME = "fragment-db"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Fragment:
    id: int
    notes: tuple[Note, ...]
    structure: str
    chords: tuple[ChordSymbol, ...]
    tonality: Tonality
    bar_count: int

    def __post_init__(self) -> None:
        if not self.notes:
            raise ValueError("fragment has no notes")
        if self.bar_count not in (1, 2):
            raise ValueError(f"bar_count must be 1 or 2, got {self.bar_count}")
        if len(self.chords) != self.bar_count:
            raise ValueError("need exactly one chord per bar")
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown structure label {self.structure!r}")

    @property
    def length(self) -> int:
        return len(self.notes)

    @property
    def chord_string(self) -> str:
        return " ".join(str(c) for c in self.chords)

    @property
    def pitches(self) -> tuple[int, ...]:
        return tuple(n.pitch for n in self.notes)

    def key(self) -> tuple[int, str, str]:
        return (self.length, self.tonality.mode, self.structure)


@functools.lru_cache(maxsize=512)
def compile_pattern(pattern: str) -> re.Pattern:
    try:
        return re.compile(pattern)
    except re.error as exc:
        raise ValueError(f"invalid chord pattern {pattern!r}: {exc}") from None


class FragmentDatabase:
    """Immutable store of fragments with an exact-match key index."""

    def __init__(self, fragments: Iterable[Fragment] = (), tb: TimeBase = TimeBase()):
        self.tb = tb
        self.records: dict[int, Fragment] = {}
        self.index: dict[tuple[int, str, str], list[int]] = {}
        self.chord_strings: dict[int, str] = {}
        for frag in fragments:
            if frag.id in self.records:
                raise ValueError(f"duplicate fragment id {frag.id}")
            self.records[frag.id] = frag
            self.chord_strings[frag.id] = frag.chord_string
            self.index.setdefault(frag.key(), []).append(frag.id)
        for ids in self.index.values():
            ids.sort()
        two_bar = [f.length for f in self.records.values() if f.bar_count == 2]
        self.max_fragment_notes = max(two_bar, default=max((f.length for f in self.records.values()), default=0))
        self.stats: BuildStats | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records[i] for i in sorted(self.records))

    def query(self, length: int, mode: str, structure: str, chord_pattern: str) -> list[Fragment]:
        """Fragments with exactly this key whose chord string fully matches ``chord_pattern``."""
        rx = compile_pattern(chord_pattern)
        ids = self.index.get((length, mode, structure), ())
        return [self.records[i] for i in ids if rx.fullmatch(self.chord_strings[i])]

    def subset(self, ids: Iterable[int]) -> FragmentDatabase:
        return FragmentDatabase((self.records[i] for i in sorted(set(ids))), self.tb)

    def prune(self, fraction: float, seed: int = 0) -> FragmentDatabase:
        """Random subset keeping ``fraction`` of the records."""
        ids = sorted(self.records)
        keep = random.Random(seed).sample(ids, round(len(ids) * fraction))
        return self.subset(keep)


@dataclass
class BuildConfig:
    k: int = 5
    seed: int = 0
    stride_bars: int = 2
    min_unique: int = 3
    change_penalty: float = 0.1


@dataclass
class BuildStats:
    seeds: int = 0
    skipped_short: int = 0
    windows: int = 0
    empty_context: int = 0
    unoriginal: int = 0
    survived: int = 0
    candidates: int = 0
    empty_bars: int = 0
    monotonous: int = 0
    duplicates: int = 0
    records: int = 0

    def summary(self) -> str:
        rate = self.survived / self.windows if self.windows else 0.0
        return (f"seeds={self.seeds} (skipped {self.skipped_short} shorter than 4 bars) windows={self.windows} "
                f"unoriginal={self.unoriginal} survived={self.survived} ({rate:.1%}) "
                f"candidates={self.candidates} monotonous={self.monotonous} duplicates={self.duplicates} "
                f"records={self.records}")


def _pad_bars(bars: list[list[Note]], n: int) -> list[list[Note]]:
    return bars + [[] for _ in range(n - len(bars))]


def generate_fragments(seeds: Sequence[Sequence[Note]], model: LanguageModel, tb: TimeBase,
                       config: BuildConfig, stats: BuildStats) -> list[list[Note]]:
    """Two-bar generations that differ from their ground truth."""
    bar = tb.bar_ticks
    out = []
    for si, seed in enumerate(seeds):
        stats.seeds += 1
        n_bars = bar_count(seed, tb)
        if n_bars < 4:
            stats.skipped_short += 1
            continue
        bars = _pad_bars(split_into_bars(seed, tb), n_bars)
        for w in range(0, n_bars - 3, config.stride_bars):
            stats.windows += 1
            context = bars[w] + bars[w + 1]
            if not context:
                stats.empty_context += 1
                continue
            ctx_tokens = tokenize(context, tb, origin=w * bar)
            truth = tokenize(bars[w + 2] + bars[w + 3], tb, origin=(w + 2) * bar)
            gen = generate_continuation(model, ctx_tokens, tb, k=config.k, rng_seed=f"{config.seed}/{si}/{w}")
            if gen == truth:
                stats.unoriginal += 1
                continue
            stats.survived += 1
            out.append(detokenize(gen, tb))
    return out


def split_generation(notes: Sequence[Note], tb: TimeBase) -> list[tuple[list[Note], list[list[Note]]]]:
    """The two one-bar pieces and the whole, each as ``(notes, bars)`` in original time."""
    bars = _pad_bars(split_into_bars(notes, tb), 2)[:2]
    return [(bars[0], [bars[0]]), (bars[1], [bars[1]]), (bars[0] + bars[1], bars)]


def make_candidates(generations: Iterable[Sequence[Note]], tb: TimeBase, change_penalty: float = 0.1,
                    stats: BuildStats | None = None, structure_stats: CorpusStats | None = None) -> list[Fragment]:
    """Feature-extracted fragments (id -1) from two-bar generations, before filtering.

    Structure labels compare each fragment against medians over the whole
    population of pieces unless ``structure_stats`` is given.
    """
    stats = stats if stats is not None else BuildStats()
    pieces = []
    for gen in generations:
        for notes, bars in split_generation(gen, tb):
            if not notes:
                stats.empty_bars += 1
                continue
            pieces.append((notes, bars))
    if not pieces:
        return []
    if structure_stats is None:
        structure_stats = corpus_stats((notes, len(bars)) for notes, bars in pieces)
    out = []
    for notes, bars in pieces:
        tonality = fragment_tonality(notes)
        chords = infer_chords(bars, tonality, change_penalty)
        out.append(Fragment(
            id=-1, notes=tuple(rebase(notes)), structure=label_structure(notes, structure_stats, len(bars)),
            chords=tuple(chords), tonality=tonality, bar_count=len(bars)))
    stats.candidates += len(out)
    return out


def dedup_key(frag: Fragment, tb: TimeBase) -> tuple:
    return (tuple(tokenize(frag.notes, tb)), frag.chords, frag.tonality.mode, frag.structure)


def assemble(candidates: Iterable[Fragment], tb: TimeBase = TimeBase(), min_unique: int = 3,
             stats: BuildStats | None = None, start_id: int = 0) -> list[Fragment]:
    """Drop monotonous and duplicate fragments; assign sequential ids."""
    stats = stats if stats is not None else BuildStats()
    seen = set()
    out = []
    for frag in candidates:
        if is_monotonous(frag.notes, min_unique):
            stats.monotonous += 1
            continue
        key = dedup_key(frag, tb)
        if key in seen:
            stats.duplicates += 1
            continue
        seen.add(key)
        out.append(Fragment(start_id + len(out), frag.notes, frag.structure, frag.chords, frag.tonality,
                            frag.bar_count))
    stats.records += len(out)
    return out


def build_database(seeds: Sequence[Sequence[Note]], model: LanguageModel, tb: TimeBase = TimeBase(),
                   config: BuildConfig = BuildConfig()) -> FragmentDatabase:
    """Run the creation stage over seed melodies (already normalized to C major / A minor)."""
    if not seeds:
        raise ValueError("no seed melodies")
    if model is None or not getattr(model, "vocabulary", None):
        raise ValueError("model is untrained")
    stats = BuildStats()
    generations = generate_fragments(seeds, model, tb, config, stats)
    candidates = make_candidates(generations, tb, config.change_penalty, stats)
    db = FragmentDatabase(assemble(candidates, tb, config.min_unique, stats), tb)
    db.stats = stats
    log.info("built fragment database: %s", stats.summary())
    return db


def _fmt_notes(notes: Sequence[Note]) -> str:
    return ",".join(f"{n.pitch}:{n.onset}:{n.duration}" for n in notes)


def _parse_notes(text: str) -> tuple[Note, ...]:
    out = []
    for item in text.split(","):
        p, o, d = item.split(":")
        out.append(Note(int(p), int(o), int(d)))
    return tuple(out)


def dumps(db: FragmentDatabase) -> str:
    tb = db.tb
    lines = [f"{FORMAT_NAME}\t{FORMAT_VERSION}\tticks_per_quarter={tb.ticks_per_quarter}"
             f"\tbeats_per_bar={tb.beats_per_bar}\trecords={len(db)}"]
    for frag in db:
        lines.append("\t".join((str(frag.id), str(frag.length), str(frag.bar_count), frag.tonality.mode,
                                frag.structure, frag.chord_string, _fmt_notes(frag.notes))))
    return "\n".join(lines) + "\n"


def save(db: FragmentDatabase, path: str | Path) -> None:
    """Write atomically: the target is replaced only once fully written."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(db))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def loads(text: str, source: str = "<string>") -> FragmentDatabase:
    if not text:
        raise DatabaseFormatError(f"{source}: empty file")
    if not text.endswith("\n"):
        raise DatabaseFormatError(f"{source}: truncated file (no final newline)")
    lines = text[:-1].split("\n")
    header = lines[0].split("\t")
    if len(header) != 5 or header[0] != FORMAT_NAME:
        raise DatabaseFormatError(f"{source}: not a fragment database")
    try:
        version = int(header[1])
        fields = dict(h.split("=", 1) for h in header[2:])
        tb = TimeBase(int(fields["ticks_per_quarter"]), int(fields["beats_per_bar"]))
        n_records = int(fields["records"])
    except (KeyError, ValueError) as exc:
        raise DatabaseFormatError(f"{source}: bad header: {exc}") from None
    if version != FORMAT_VERSION:
        raise DatabaseFormatError(f"{source}: unsupported version {version} (expected {FORMAT_VERSION})")
    body = lines[1:]
    if body == [""]:
        body = []
    frags = []
    for offset, line in enumerate(body):
        try:
            fid, length, n_bars, mode, structure, chords, notes = line.split("\t")
            if mode not in (MAJOR, MINOR):
                raise ValueError(f"unknown mode {mode!r}")
            frag = Fragment(int(fid), _parse_notes(notes), structure,
                            tuple(ChordSymbol.parse(c) for c in chords.split(" ")), normalized(mode), int(n_bars))
            if frag.length != int(length):
                raise ValueError(f"length field {length} disagrees with {frag.length} notes")
            if frag.notes[-1].end > frag.bar_count * tb.bar_ticks:
                raise ValueError("notes extend past the fragment's bars")
        except ValueError as exc:
            raise DatabaseFormatError(f"{source}: corrupt record at offset {offset} (line {offset + 2}): {exc}") from None
        frags.append(frag)
    if len(frags) != n_records:
        raise DatabaseFormatError(f"{source}: expected {n_records} records, found {len(frags)} (truncated?)")
    try:
        return FragmentDatabase(frags, tb)
    except ValueError as exc:
        raise DatabaseFormatError(f"{source}: {exc}") from None


def load(path: str | Path) -> FragmentDatabase:
    path = Path(path)
    return loads(path.read_text(encoding="utf-8"), str(path))


def query(db: FragmentDatabase, length: int, tonality_mode: str, structure: str, chord_pattern: str) -> list[Fragment]:
    return db.query(length, tonality_mode, structure, chord_pattern)


__all__ = ["Fragment", "FragmentDatabase", "BuildConfig", "BuildStats", "build_database", "make_candidates",
           "assemble", "query", "save", "load", "dumps", "loads", "CHORUS", "VERSE"]
