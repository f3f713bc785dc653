"""Lyric features: syllable counts, sentiment tonality and repeat structure.

A song's lyrics are abstracted into the string ``S`` of per-line syllable
counts.  Structure recognition greedily extracts the longest segment of
``S`` that repeats non-overlappingly (a "(K, L) repeat"), points every
later occurrence at the first one through the ``struct`` array, removes
those lines from further search and repeats until no segment longer than
the granularity ``g`` repeats.  The first (longest) repeat is the chorus.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import LyricError
from .features import CHORUS, VERSE, Tonality, normalized, MAJOR, MINOR

ENGLISH, CHINESE, NUMERIC = "english", "chinese", "numeric"
LANGUAGES = (ENGLISH, CHINESE, NUMERIC)

_CJK_RE = re.compile(r"[㐀-䶿一-鿿豈-﫿]")
_WORD_RE = re.compile(r"[a-z]+(?:'[a-z]+)*")
_VOWEL_GROUP_RE = re.compile(r"[aeiouy]+")
# vowel pairs usually sung as two syllables ("champ-i-ons", "vi-o-lin")
_HIATUS = {"ia", "io", "iu", "eo", "ua", "uo"}
# ...except after these letters, where "-tion", "-cial", "-sion", "-gion" merge
_PALATAL = set("ctsxg")

DEFAULT_LEXICON: dict[str, int] = {
    **{w: 1 for w in (
        "love", "happy", "joy", "smile", "bright", "shine", "sun", "sunshine", "dream", "dance",
        "free", "hope", "sweet", "laugh", "glory", "champion", "champions", "friend", "friends",
        "together", "beautiful", "wonderful", "good", "win", "fly", "heaven", "light", "kiss",
        "爱", "快乐", "幸福", "笑", "阳光", "美好", "希望", "甜", "梦想")},
    **{w: -1 for w in (
        "sad", "cry", "tears", "tear", "alone", "lonely", "pain", "hurt", "dark", "goodbye",
        "lost", "broken", "die", "dead", "cold", "fear", "sorrow", "grief", "miss", "blue",
        "伤心", "哭", "眼泪", "孤单", "寂寞", "痛", "离开", "再见", "冷", "难过", "忧伤")},
}


def _split_hiatus(word: str, start: int, group: str) -> int:
    """Number of syllables in one vowel cluster of ``word``."""
    n = 1
    for j in range(len(group) - 1):
        pair = group[j:j + 2]
        if pair in _HIATUS:
            before = word[start + j - 1] if start + j > 0 else ""
            if before not in _PALATAL:
                n += 1
    return n


def _english_word_syllables(word: str) -> int:
    groups = list(_VOWEL_GROUP_RE.finditer(word))
    count = sum(_split_hiatus(word, m.start(), m.group()) for m in groups)
    if groups:
        last = groups[-1]
        tail = word[last.start():]
        consonant_before = last.start() > 0 and word[last.start() - 1] not in "aeiouy"
        if tail == "e" and consonant_before and not (word.endswith("le") and len(word) > 2
                                                     and word[-3] not in "aeiouy"):
            count -= 1
        elif tail == "es" and consonant_before and not re.search(r"(s|x|z|ch|sh|g|c)es$", word):
            count -= 1
        elif tail == "ed" and consonant_before and not re.search(r"[td]ed$", word):
            count -= 1
    return max(1, count)


def count_syllables(line: str, language: str = ENGLISH,
                    exceptions: Mapping[str, int] | None = None) -> int:
    """Syllables in one lyric line.

    English uses a vowel-cluster heuristic (``exceptions`` overrides whole
    words); Chinese counts CJK characters; numeric lines are the count.
    """
    if not line.strip():
        raise LyricError("blank lyric line")
    if language == NUMERIC:
        try:
            value = int(line.strip())
        except ValueError:
            raise LyricError(f"numeric lyric line is not an integer: {line!r}") from None
        if value < 1:
            raise LyricError(f"syllable count must be >= 1: {line!r}")
        return value
    if language == CHINESE:
        n = len(_CJK_RE.findall(line))
        if n == 0:
            raise LyricError(f"no CJK characters in line: {line!r}")
        return n
    if language != ENGLISH:
        raise LyricError(f"unknown language {language!r}")
    words = _WORD_RE.findall(line.lower().replace("’", "'"))
    if not words:
        raise LyricError(f"no words in line: {line!r}")
    exceptions = exceptions or {}
    return sum(exceptions.get(w, None) or _english_word_syllables(w.replace("'", "")) for w in words)


def _split_english_word(word: str, n: int) -> list[str]:
    if n <= 1:
        return [word]
    low = word.lower()
    nuclei = []
    for m in _VOWEL_GROUP_RE.finditer(low):
        nuclei.append(m.start())
        grp = m.group()
        for j in range(len(grp) - 1):
            at = m.start() + j
            if grp[j:j + 2] in _HIATUS and (at == 0 or low[at - 1] not in _PALATAL):
                nuclei.append(at + 1)
    cuts: list[int] = []
    for s in nuclei[1:n]:
        if low[s - 1] not in "aeiouy" and s - 1 > (cuts[-1] if cuts else 0):
            s -= 1
        cuts.append(s)
    bounds = [0] + cuts + [len(word)]
    pieces = [word[a:b] for a, b in zip(bounds, bounds[1:])]
    return pieces + ["-"] * (n - len(pieces))


def split_syllables(line: str, language: str = ENGLISH,
                    exceptions: Mapping[str, int] | None = None) -> list[str] | None:
    """Syllable texts for lyric meta-events; ``None`` for numeric lines."""
    if language == NUMERIC:
        return None
    if language == CHINESE:
        return _CJK_RE.findall(line)
    out = []
    exceptions = exceptions or {}
    for raw in re.findall(r"[A-Za-z]+(?:['’][A-Za-z]+)*", line):
        w = raw.lower().replace("’", "'")
        n = exceptions.get(w) or _english_word_syllables(w.replace("'", ""))
        out.extend(_split_english_word(raw, n))
    return out


def sentiment_score(lines: Iterable[str], lexicon: Mapping[str, int]) -> int:
    total = 0
    cjk_keys = [k for k in lexicon if _CJK_RE.search(k)]
    for line in lines:
        for w in _WORD_RE.findall(line.lower()):
            total += lexicon.get(w, 0)
        for k in cjk_keys:
            total += lexicon[k] * line.count(k)
    return total


def sentiment_tonality(lines: Iterable[str], lexicon: Mapping[str, int] | None = None,
                       override: str | None = None) -> Tonality:
    """C major for non-negative total polarity, A minor otherwise."""
    if override is not None:
        if override not in (MAJOR, MINOR):
            raise LyricError(f"unknown tonality override {override!r}")
        return normalized(override)
    score = sentiment_score(lines, DEFAULT_LEXICON if lexicon is None else lexicon)
    return normalized(MAJOR if score >= 0 else MINOR)


@dataclass(frozen=True)
class RepeatFind:
    length: int
    count: int
    positions: tuple[int, ...]
    # 1-based indices into S of every element of every occurrence
    occurrences: tuple[tuple[int, ...], ...] = field(repr=False)


def find_longest_repeat(S: Sequence[int], mask: Sequence[bool], g: int = 2) -> RepeatFind | None:
    """Longest segment (length > g) repeating at least twice in the unmasked string.

    Masked elements are removed first, so occurrences are contiguous in the
    reduced string.  The occurrence count is the maximum number of
    non-overlapping matches (taken leftmost-first); among equally long
    segments the one occurring earliest wins.
    """
    if len(mask) != len(S):
        raise ValueError("mask length must equal string length")
    index = [i for i, m in enumerate(mask) if not m]
    reduced = tuple(S[i] for i in index)
    m = len(reduced)
    if m // 2 <= g:
        return None
    # no repeated (g+1)-window means no repeat of any length > g
    w = g + 1
    if len({reduced[i:i + w] for i in range(m - w + 1)}) == m - w + 1:
        return None
    for L in range(m // 2, g, -1):
        starts: dict[tuple, list[int]] = {}
        for i in range(m - L + 1):
            seg = reduced[i:i + L]
            occ = starts.get(seg)
            if occ is None:
                starts[seg] = [i]
            else:
                occ.append(i)
        for occ in starts.values():
            if len(occ) < 2:
                continue
            chosen = []
            free_from = 0
            for s in occ:
                if s >= free_from:
                    chosen.append(s)
                    free_from = s + L
            if len(chosen) > 1:
                return RepeatFind(
                    length=L, count=len(chosen),
                    positions=tuple(index[s] + 1 for s in chosen),
                    occurrences=tuple(tuple(index[s + j] + 1 for j in range(L)) for s in chosen),
                )
    return None


def recognize_structure(S: Sequence[int], g: int = 2) -> tuple[list[int], frozenset[int]]:
    """Return the ``struct`` array and the set of chorus positions (1-based)."""
    if g < 1:
        raise ValueError("granularity g must be >= 1")
    struct = [0] * len(S)
    mask = [False] * len(S)
    chorus: frozenset[int] | None = None
    while True:
        rep = find_longest_repeat(S, mask, g)
        if rep is None:
            break
        first = rep.occurrences[0]
        for occ in rep.occurrences[1:]:
            for pos, ref in zip(occ, first):
                struct[pos - 1] = ref
        for occ in rep.occurrences:
            for pos in occ:
                mask[pos - 1] = True
        if chorus is None:
            chorus = frozenset(p for occ in rep.occurrences for p in occ)
    return struct, chorus or frozenset()


@dataclass
class LyricLine:
    text: str
    syllables: int
    struct_index: int = 0
    structure: str = VERSE
    syllable_texts: list[str] | None = None


@dataclass
class LyricSheet:
    lines: list[LyricLine]
    tonality: Tonality
    language: str
    chorus: frozenset[int] = frozenset()

    @property
    def S(self) -> list[int]:
        return [line.syllables for line in self.lines]

    @property
    def struct(self) -> list[int]:
        return [line.struct_index for line in self.lines]


def lyric_lines(text: str) -> list[str]:
    return [ln.strip() for ln in text.splitlines() if ln.strip()]


def parse_lyrics(text: str, language: str = ENGLISH, g: int = 2,
                 lexicon: Mapping[str, int] | None = None, tonality_override: str | None = None,
                 exceptions: Mapping[str, int] | None = None) -> LyricSheet:
    if language not in LANGUAGES:
        raise LyricError(f"unknown language {language!r}")
    raw = lyric_lines(text)
    if not raw:
        raise LyricError("lyrics contain no lines")
    lines = []
    for i, t in enumerate(raw, start=1):
        try:
            n = count_syllables(t, language, exceptions)
        except LyricError as exc:
            raise LyricError(f"line {i}: {exc}") from None
        lines.append(LyricLine(t, n, syllable_texts=split_syllables(t, language, exceptions)))
    struct, chorus = recognize_structure([ln.syllables for ln in lines], g)
    for i, line in enumerate(lines, start=1):
        line.struct_index = struct[i - 1]
        line.structure = CHORUS if i in chorus else VERSE
    tonality = sentiment_tonality(raw if language != NUMERIC else [], lexicon, tonality_override)
    return LyricSheet(lines, tonality, language, chorus)
