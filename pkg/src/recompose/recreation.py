"""Re-creation stage: compose a song by retrieving and joining fragments.

For every lyric line that does not share an earlier line's melody, the
database is queried with the line's syllable count, the song mode, the
line's chorus/verse label and a chord pattern derived from the user's
progression.  Candidates that break the pitch guidelines are dropped, the
survivors are scored by the melody model in the context of everything
composed so far, and one of the best ``top_k`` is drawn at random.
Shared lines copy their referent's notes.  A final polish pass varies the
tail of adjacent lines that came out identical.
"""

from __future__ import annotations

import logging
import math
import random
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .core import Note, TimeBase, rebase, rest_class, tokenize
from .errors import RetrievalError
from .features import CHORUS, DIATONIC_CHORDS, VERSE, ChordSymbol, Tonality
from .fragments import Fragment, FragmentDatabase, compile_pattern
from .lm import LanguageModel
from .lyrics import LyricLine, LyricSheet, parse_lyrics
from .midi import MidiSong

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChordProgression:
    chords: tuple[ChordSymbol, ...]

    def __post_init__(self) -> None:
        if not self.chords:
            raise ValueError("chord progression is empty")
        for c in self.chords:
            if c not in DIATONIC_CHORDS:
                raise ValueError(f"chord {c} is not a diatonic triad of C major / A minor")

    @classmethod
    def parse(cls, text: str) -> ChordProgression:
        return cls(tuple(ChordSymbol.parse(t) for t in text.split()))

    def __str__(self) -> str:
        return " ".join(str(c) for c in self.chords)


@dataclass
class GuidelineConfig:
    first_note_low: int = 55  # G3
    first_note_high: int = 65  # F4
    max_leap: int = 8  # exclusive
    tendency_table: dict[int, frozenset[int]] = field(
        default_factory=lambda: {11: frozenset({0}), 5: frozenset({4})})
    tendency_bonus: float = 0.5
    top_k: int = 5
    melisma_prob: float = 0.1
    max_extra_notes: int = 2

    def __post_init__(self) -> None:
        if not self.first_note_low < self.first_note_high:
            raise ValueError("first_note_low must be below first_note_high")
        if self.max_leap <= 0:
            raise ValueError("max_leap must be positive")
        if not 0.0 <= self.melisma_prob <= 1.0:
            raise ValueError("melisma_prob must be a probability")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_extra_notes < 1:
            raise ValueError("max_extra_notes must be >= 1")


@dataclass
class CompositionState:
    tb: TimeBase
    rng: random.Random
    melody_context: list[Note] = field(default_factory=list)
    last_chord: ChordSymbol | None = None
    line_melodies: dict[int, list[Note]] = field(default_factory=dict)
    rest_samples: list[int] = field(default_factory=list)

    @property
    def last_pitch(self) -> int | None:
        return self.melody_context[-1].pitch if self.melody_context else None

    @property
    def context_end(self) -> int:
        return self.melody_context[-1].end if self.melody_context else 0


def _rotated(progression: ChordProgression, last_chord: ChordSymbol | None) -> list[ChordSymbol]:
    chords = progression.chords
    if last_chord is None:
        start = 0
    elif last_chord in chords:
        start = chords.index(last_chord)
    else:
        raise ValueError(f"chord {last_chord} is not in the progression {progression}")
    return [chords[(start + i) % len(chords)] for i in range(len(chords))]


def chord_branches(progression: ChordProgression, last_chord: ChordSymbol | None = None,
                   end_on: ChordSymbol | None = None) -> list[str]:
    """Alternatives of the chord pattern, most varied first.

    Branch ``j`` stays on the current chord and then walks the next ``j``
    progression chords (all but the last required).  With ``end_on`` every
    branch must finish on that chord, and a direct cadence from the current
    chord to it is appended as the least preferred branch.
    """
    seq = _rotated(progression, last_chord)
    names = [re.escape(str(c)) for c in seq]
    lead = ""
    if end_on is not None:
        target = re.escape(str(end_on))
        lead = f"(?=(?:.* )?{target}$)"
    branches = []
    for j in range(len(names) - 1, -1, -1):
        b = f"^{lead}{names[0]}( {names[0]})*"
        if j >= 1:
            b += "".join(f"( {names[m]})+" for m in range(1, j)) + f"( {names[j]})*"
        branches.append(b + "$")
    if end_on is not None and end_on != seq[0]:
        branches.append(f"^{names[0]}( {names[0]})*( {target})+$")
    return branches


def build_chord_regex(progression: ChordProgression, last_chord: ChordSymbol | None = None,
                      end_on: ChordSymbol | None = None) -> str:
    """Chord-string pattern for the next fragment.

    >>> prog = ChordProgression.parse("G C Am F")
    >>> build_chord_regex(prog, ChordSymbol.parse("G"))
    '^G( G)*( C)+( Am)+( F)*$|^G( G)*( C)+( Am)*$|^G( G)*( C)*$|^G( G)*$'
    """
    return "|".join(chord_branches(progression, last_chord, end_on))


def tonic_pattern(tonic: ChordSymbol) -> str:
    name = re.escape(str(tonic))
    return f"^{name}( {name})*$"


def branch_rank(pattern: str, chord_string: str) -> int:
    """Index of the first alternative of ``pattern`` that matches."""
    for i, branch in enumerate(pattern.split("|")):
        if compile_pattern(branch).fullmatch(chord_string):
            return i
    return -1


def filter_candidates(candidates: Sequence[Fragment], state: CompositionState, cfg: GuidelineConfig,
                      is_song_start: bool, first_neighbors: Sequence[int] = (),
                      last_neighbors: Sequence[int] = ()) -> list[Fragment]:
    """Apply the hard pitch guidelines.

    The song's first note must lie in [first_note_low, first_note_high];
    otherwise a fragment may not start ``max_leap`` or more semitones away
    from the last note of the context.  ``first_neighbors`` and
    ``last_neighbors`` add the same leap limit against notes that will end
    up adjacent to this fragment's first or last note elsewhere in the song
    (through melody sharing).
    """
    prev = state.last_pitch
    out = []
    for frag in candidates:
        first = frag.notes[0].pitch
        last = frag.notes[-1].pitch
        if is_song_start:
            if not cfg.first_note_low <= first <= cfg.first_note_high:
                continue
        elif prev is not None and abs(first - prev) >= cfg.max_leap:
            continue
        if any(abs(first - p) >= cfg.max_leap for p in first_neighbors):
            continue
        if any(abs(last - p) >= cfg.max_leap for p in last_neighbors):
            continue
        out.append(frag)
    return out


def planned_rest(state: CompositionState, tb: TimeBase) -> int:
    """Rest before the next fragment: mean observed rest on the sixteenth grid."""
    if not state.melody_context:
        return 0
    mean = sum(state.rest_samples) / len(state.rest_samples) if state.rest_samples else 0.0
    six = tb.sixteenth
    r = int(math.floor(mean / six + 0.5)) * six
    return max(0, min(tb.bar_ticks // 2, r))


def _fragment_tokens(frag: Fragment, tb: TimeBase):
    cache = frag.__dict__.setdefault("_token_cache", {})
    toks = cache.get(tb)
    if toks is None:
        toks = cache[tb] = tokenize(frag.notes, tb)
    return toks


def _tendency_hit(prev_pitch: int | None, first_pitch: int, cfg: GuidelineConfig) -> bool:
    if prev_pitch is None:
        return False
    targets = cfg.tendency_table.get(prev_pitch % 12)
    return bool(targets) and first_pitch % 12 in targets


def rank_candidates(model: LanguageModel, state: CompositionState, candidates: Sequence[Fragment],
                    cfg: GuidelineConfig,
                    realize: Callable[[Fragment], list[Note]] | None = None) -> list[tuple[float, Fragment]]:
    """Model score in context plus tendency bonus, best first (ties by id)."""
    tb = state.tb
    hist = state.melody_context[-model.order:] if model.order > 1 else state.melody_context[-1:]
    context_tokens = tokenize(hist, tb, origin=hist[0].onset)[1:] if hist else []
    prev = state.last_pitch
    scored = []
    if realize is None:
        r_class = rest_class(planned_rest(state, tb), tb)
    for frag in candidates:
        if realize is None:
            toks = list(_fragment_tokens(frag, tb))
            toks[0] = toks[0]._replace(rest_class=r_class)
            first = frag.notes[0].pitch
        else:
            placed = realize(frag)
            toks = tokenize(placed, tb, origin=state.context_end)
            first = placed[0].pitch
        s = model.score(toks, context_tokens)
        if _tendency_hit(prev, first, cfg):
            s += cfg.tendency_bonus
        scored.append((s, frag))
    scored.sort(key=lambda sf: (-sf[0], sf[1].id))
    return scored


def rerank(model: LanguageModel, state: CompositionState, candidates: Sequence[Fragment], cfg: GuidelineConfig,
           realize: Callable[[Fragment], list[Note]] | None = None) -> Fragment:
    """Pick uniformly at random among the ``top_k`` best-scoring candidates."""
    if not candidates:
        raise ValueError("no candidates to rerank")
    ranked = rank_candidates(model, state, candidates, cfg, realize)
    top = ranked[:min(cfg.top_k, len(ranked))]
    return state.rng.choice(top)[1]


def _barline_rests(notes: Sequence[Note], tb: TimeBase) -> list[int]:
    """Rests between the last note before and the first note after each interior barline."""
    out = []
    bar = tb.bar_ticks
    for a, b in zip(notes, notes[1:]):
        if a.onset // bar != b.onset // bar:
            out.append(max(0, b.onset - a.end))
    return out


def concatenate(state: CompositionState, fragment_notes: Sequence[Note], tb: TimeBase) -> int:
    """Place a fragment after the context; returns the onset of its first note.

    Appends the placed notes to the context and records the realized
    joining rest plus any rests across barlines inside the placed notes.
    """
    onset = 0 if not state.melody_context else state.context_end + planned_rest(state, tb)
    if state.melody_context:
        state.rest_samples.append(onset - state.context_end)
    placed = [n.shifted(onset) for n in rebase(fragment_notes)]
    state.rest_samples.extend(_barline_rests(placed, tb))
    state.melody_context.extend(placed)
    return onset


@dataclass
class Piece:
    fragment_id: int
    chords: str
    pattern: str
    relaxation: str
    n_notes: int


@dataclass
class LineRecord:
    index: int
    text: str
    syllables: int
    struct_index: int
    structure: str
    notes_per_syllable: list[int] = field(default_factory=list)
    pieces: list[Piece] = field(default_factory=list)
    start_chord: ChordSymbol | None = None  # chord the line was asked to start from
    last_chord: ChordSymbol | None = None
    chord_mismatch: bool = False
    polished: int = 0
    notes_before_polish: list[Note] | None = None
    span: tuple[int, int] = (0, 0)  # [start, end) into Song.notes
    fragment_starts: list[int] = field(default_factory=list)  # note offsets within the line

    @property
    def extras(self) -> int:
        return sum(self.notes_per_syllable) - self.syllables

    @property
    def relaxations(self) -> list[str]:
        return [p.relaxation for p in self.pieces if p.relaxation != "exact"]


@dataclass
class Song:
    notes: list[Note]
    lines: list[LineRecord]
    sheet: LyricSheet
    progression: ChordProgression
    tb: TimeBase
    seed: int

    @property
    def tonality(self) -> Tonality:
        return self.sheet.tonality

    @property
    def struct(self) -> list[int]:
        return self.sheet.struct

    def line_notes(self, index: int) -> list[Note]:
        a, b = self.lines[index - 1].span
        return self.notes[a:b]

    def lyric_events(self) -> list[str | None] | None:
        if all(ln.syllable_texts is None for ln in self.sheet.lines):
            return None
        events: list[str | None] = []
        for rec, line in zip(self.lines, self.sheet.lines):
            texts = list(line.syllable_texts or [])
            texts += ["-"] * (rec.syllables - len(texts))
            for syl, count in zip(texts, rec.notes_per_syllable):
                events.append(syl)
                events.extend([None] * (count - 1))
        return events

    def to_midi(self) -> MidiSong:
        return MidiSong(list(self.notes), self.tb, self.lyric_events())

    def report(self) -> str:
        out = [f"tonality\t{self.tonality}", f"progression\t{self.progression}", f"seed\t{self.seed}",
               "S\t" + " ".join(map(str, self.sheet.S)), "struct\t" + " ".join(map(str, self.struct)),
               "chorus\t" + " ".join(map(str, sorted(self.sheet.chorus))), f"notes\t{len(self.notes)}"]
        for rec in self.lines:
            melisma = [i + 1 for i, c in enumerate(rec.notes_per_syllable) if c > 1]
            fields = [
                f"line {rec.index}", f"syllables={rec.syllables}", f"struct={rec.struct_index}",
                f"structure={rec.structure}", f"notes={rec.span[1] - rec.span[0]}",
                "fragments=" + (",".join(str(p.fragment_id) for p in rec.pieces) or "-"),
                "chords=" + ("|".join(p.chords for p in rec.pieces) or "-"),
                "relaxations=" + (",".join(rec.relaxations) or "-"),
                "melisma=" + (",".join(map(str, melisma)) or "-"),
                f"shared_from={rec.struct_index or '-'}",
                f"chord_mismatch={'yes' if rec.chord_mismatch else 'no'}",
                f"polished={rec.polished or '-'}",
                "patterns=" + (" || ".join(p.pattern for p in rec.pieces) or "-"),
            ]
            out.append("\t".join(fields))
        return "\n".join(out) + "\n"


def _near_equal(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + 1] * r + [q] * (parts - r)


class Composer:
    """Holds the song-level context while lines are composed in order."""

    def __init__(self, sheet: LyricSheet, db: FragmentDatabase, model: LanguageModel,
                 progression: ChordProgression, cfg: GuidelineConfig, tb: TimeBase, rng_seed: int = 0):
        if len(db) == 0:
            raise RetrievalError("fragment database is empty")
        self.sheet = sheet
        self.db = db
        self.model = model
        self.progression = progression
        self.cfg = cfg
        self.tb = tb
        self.seed = rng_seed
        self.state = CompositionState(tb, random.Random(rng_seed))
        self.mode = sheet.tonality.mode
        self.tonic = sheet.tonality.tonic_chord
        n = len(sheet.lines)
        self.src = [ln.struct_index or i for i, ln in enumerate(sheet.lines, start=1)]
        self.cadence_line = self.src[n - 1]
        self.records: dict[int, LineRecord] = {}

    # -- helpers -----------------------------------------------------------
    def _composed(self, index: int) -> bool:
        return index in self.state.line_melodies

    def _first_pitch(self, index: int) -> int:
        return self.state.line_melodies[index][0].pitch

    def _last_pitch(self, index: int) -> int:
        return self.state.line_melodies[index][-1].pitch

    def _neighbors(self, j: int) -> tuple[list[int], list[int]]:
        """Pitches that line ``j``'s first/last note will also sit next to via shared copies."""
        n = len(self.src)
        first, last = [], []
        for x in range(1, n + 1):
            if self.src[x - 1] != j:
                continue
            if x > 1 and x != j:
                before = self.src[x - 2]
                if self._composed(before):
                    first.append(self._last_pitch(before))
            if x < n:
                after = self.src[x]
                if after != j and self._composed(after) and not (x == j and after == j + 1):
                    last.append(self._first_pitch(after))
        return first, last

    # -- retrieval ---------------------------------------------------------
    def _ladder(self, structure: str, end_on_tonic: bool) -> list[tuple[str, tuple[str, ...], str]]:
        last = self.state.last_chord
        if last not in self.progression.chords:
            last = None  # e.g. a tonic the progression lacks: restart the progression
        base = build_chord_regex(self.progression, last, self.tonic if end_on_tonic else None)
        tonic = tonic_pattern(self.tonic)
        both = (CHORUS, VERSE)
        return [("exact", (structure,), base), ("tonic", (structure,), tonic),
                ("any-structure", both, base), ("any-structure+tonic", both, tonic)]

    def _try_piece(self, length: int, structure: str, is_song_start: bool, end_on_tonic: bool,
                   first_nb: Sequence[int], last_nb: Sequence[int]) -> tuple[Fragment, str, str] | None:
        for relaxation, structures, pattern in self._ladder(structure, end_on_tonic):
            cands: list[Fragment] = []
            for s in structures:
                cands.extend(self.db.query(length, self.mode, s, pattern))
            cands = filter_candidates(cands, self.state, self.cfg, is_song_start, first_nb, last_nb)
            if not cands:
                continue
            ranks = {f.id: branch_rank(pattern, f.chord_string) for f in cands}
            best = min(ranks.values())
            cands = sorted((f for f in cands if ranks[f.id] == best), key=lambda f: f.id)
            return rerank(self.model, self.state, cands, self.cfg), pattern, relaxation
        return None

    def _place(self, rec: LineRecord, frag: Fragment, pattern: str, relaxation: str) -> None:
        rec.fragment_starts.append(sum(p.n_notes for p in rec.pieces))
        concatenate(self.state, frag.notes, self.tb)
        self.state.last_chord = frag.chords[-1]
        rec.pieces.append(Piece(frag.id, frag.chord_string, pattern, relaxation, frag.length))

    def _compose_span(self, rec: LineRecord, target: int, is_song_start: bool, end_on_tonic: bool,
                      first_nb: Sequence[int], last_nb: Sequence[int], allow_split: bool = True) -> bool:
        found = self._try_piece(target, rec.structure, is_song_start, end_on_tonic, first_nb, last_nb)
        if found is not None:
            self._place(rec, *found)
            return True
        if not allow_split:
            return False
        if target <= 1:
            raise RetrievalError(
                f"line {rec.index} ({rec.text!r}): no fragment for key (length={target}, mode={self.mode}, "
                f"structure={rec.structure}, after chord {self.state.last_chord or self.progression.chords[0]}) "
                "even after all relaxations")
        limit = max(1, self.db.max_fragment_notes)
        parts = _near_equal(target, max(2, -(-target // limit)))
        for k, size in enumerate(parts):
            last = k == len(parts) - 1
            self._compose_span(rec, size, is_song_start and k == 0, end_on_tonic and last,
                               first_nb if k == 0 else (), last_nb if last else ())
        return True

    def compose_line(self, index: int) -> list[Note]:
        line = self.sheet.lines[index - 1]
        rec = LineRecord(index, line.text, line.syllables, line.struct_index, line.structure)
        state = self.state
        rec.start_chord = state.last_chord or self.progression.chords[0]
        start = len(state.melody_context)
        if line.struct_index > 0:
            ref = self.records[line.struct_index]
            rec.notes_per_syllable = list(ref.notes_per_syllable)
            rec.pieces = list(ref.pieces)
            rec.fragment_starts = list(ref.fragment_starts)
            rec.chord_mismatch = ref.start_chord != rec.start_chord
            concatenate(state, state.line_melodies[line.struct_index], self.tb)
            state.last_chord = ref.last_chord
        else:
            first_nb, last_nb = self._neighbors(index)
            is_start = index == 1
            cadence = index == self.cadence_line
            extras = 0
            if state.rng.random() < self.cfg.melisma_prob:
                extras = state.rng.randint(1, self.cfg.max_extra_notes)
            done = False
            if extras:
                done = self._compose_span(rec, line.syllables + extras, is_start, cadence, first_nb, last_nb,
                                          allow_split=False)
                if done:
                    marks = set(state.rng.sample(range(line.syllables), min(extras, line.syllables)))
                    rec.notes_per_syllable = [2 if s in marks else 1 for s in range(line.syllables)]
                    # more extras than syllables: stack the remainder on the last syllable
                    rec.notes_per_syllable[-1] += extras - len(marks)
            if not done:
                self._compose_span(rec, line.syllables, is_start, cadence, first_nb, last_nb)
                rec.notes_per_syllable = [1] * line.syllables
        rec.last_chord = state.last_chord
        notes = state.melody_context[start:]
        state.line_melodies[index] = notes
        self.records[index] = rec
        return notes

    # -- polish ------------------------------------------------------------
    def polish(self) -> None:
        """Re-retrieve the last one or two pitches of the later of two identical adjacent lines."""
        lines = self.sheet.lines
        melodies = self.state.line_melodies
        for i in range(1, len(lines)):
            a, b = melodies[i], melodies[i + 1]
            if lines[i - 1].syllables != lines[i].syllables or not _same_melody(a, b):
                continue
            first_d = self.state.rng.choice((1, 2))
            rec = self.records[i + 1]
            pattern = f"^{re.escape(str(rec.last_chord))}$"
            # copies of the polished line take the new tail too
            copies = [x for x, src in enumerate(self.src, start=1) if src == i + 1 and x != i + 1]
            next_first = [melodies[x + 1][0].pitch for x in (i + 1, *copies) if x + 1 in melodies]
            # the drawn tail length first, then the other one; the line's own structure first, then any
            attempts = [(d, structures) for structures in ((rec.structure,), (CHORUS, VERSE))
                        for d in dict.fromkeys((first_d, 3 - first_d)) if d <= len(b) - 1]
            for d, structures in attempts:
                kept, old = b[:-d], b[-d:]
                old_pitches = tuple(n.pitch for n in old)
                cands = [f for s in structures for f in self.db.query(d, self.mode, s, pattern)
                         if f.bar_count == 1 and f.pitches != old_pitches]
                cands.sort(key=lambda f: f.id)
                probe = CompositionState(self.tb, self.state.rng, _context_before(melodies, i + 1) + kept)
                cands = filter_candidates(cands, probe, self.cfg, False, (), next_first)
                if cands:
                    break
            else:
                log.debug("polish: no replacement for line %d", i + 1)
                continue

            def realize(frag: Fragment, old=old) -> list[Note]:
                return [n.with_pitch(p) for n, p in zip(old, frag.pitches)]

            choice = rerank(self.model, probe, cands, self.cfg, realize)
            rec.notes_before_polish = list(b)
            rec.polished = d
            if len(b) - d not in rec.fragment_starts:
                rec.fragment_starts = sorted(rec.fragment_starts + [len(b) - d])
            rec.pieces = rec.pieces + [Piece(choice.id, choice.chord_string, pattern, "polish", d)]
            melodies[i + 1] = kept + realize(choice)
            for x in copies:
                shift = melodies[x][0].onset - b[0].onset
                copy = self.records[x]
                copy.notes_before_polish = melodies[x]
                melodies[x] = [n.shifted(shift) for n in melodies[i + 1]]
                copy.polished = d
                copy.fragment_starts = list(rec.fragment_starts)
                copy.pieces = list(rec.pieces)

    def assemble(self) -> Song:
        notes: list[Note] = []
        lines = []
        for i in range(1, len(self.sheet.lines) + 1):
            rec = self.records[i]
            melody = self.state.line_melodies[i]
            rec.span = (len(notes), len(notes) + len(melody))
            notes.extend(melody)
            lines.append(rec)
        return Song(notes, lines, self.sheet, self.progression, self.tb, self.seed)


def _same_melody(a: Sequence[Note], b: Sequence[Note]) -> bool:
    if len(a) != len(b) or not a:
        return False
    return ([(n.pitch, n.onset - a[0].onset, n.duration) for n in a]
            == [(n.pitch, n.onset - b[0].onset, n.duration) for n in b])


def _context_before(melodies: dict[int, list[Note]], index: int) -> list[Note]:
    out: list[Note] = []
    for i in range(1, index):
        out.extend(melodies[i])
    return out


def compose_line(composer: Composer, index: int) -> list[Note]:
    return composer.compose_line(index)


def polish(composer: Composer) -> dict[int, list[Note]]:
    composer.polish()
    return composer.state.line_melodies


def compose_song(lyrics: str | LyricSheet, progression: ChordProgression | str, db: FragmentDatabase,
                 model: LanguageModel, cfg: GuidelineConfig | None = None, tb: TimeBase | None = None,
                 rng_seed: int = 0, tonality_override: str | None = None, language: str = "english",
                 g: int = 2, lexicon=None) -> Song:
    """Run the whole re-creation stage for one lyric text."""
    cfg = cfg or GuidelineConfig()
    tb = tb or db.tb
    if isinstance(progression, str):
        progression = ChordProgression.parse(progression)
    sheet = lyrics if isinstance(lyrics, LyricSheet) else parse_lyrics(
        lyrics, language, g=g, lexicon=lexicon, tonality_override=tonality_override)
    composer = Composer(sheet, db, model, progression, cfg, tb, rng_seed)
    for i in range(1, len(sheet.lines) + 1):
        composer.compose_line(i)
    composer.polish()
    return composer.assemble()
