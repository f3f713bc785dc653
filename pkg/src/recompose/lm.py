"""Smoothed back-off n-gram model over note tokens.

Plays the melody language model role: it is trained on unpaired
melodies, scores token sequences (used for re-ranking retrieved
fragments) and samples two-bar continuations (used to fill the fragment
database).

Conditional probabilities use additive smoothing over the observed
vocabulary plus one unknown-token bucket::

    P(t | ctx) = (count(ctx, t) + alpha) / (total(ctx) + alpha * (|V| + 1))

where ``ctx`` is the longest suffix of the last ``order - 1`` tokens that
was seen in training (back-off happens only for unseen contexts).
"""

from __future__ import annotations

import math
import random
from collections import Counter
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .core import NoteToken, TimeBase
from .errors import ModelFormatError

START = NoteToken(-1, -1, -1)
UNKNOWN = NoteToken(-2, -2, -2)

FORMAT_NAME = "melody-ngram"
FORMAT_VERSION = 1

Context = tuple[NoteToken, ...]


class LanguageModel(Protocol):
    """What the rest of the package needs from a melody model."""

    order: int

    def prob(self, token: NoteToken, context: Sequence[NoteToken] = ()) -> float: ...

    def score(self, tokens: Sequence[NoteToken], context: Sequence[NoteToken] = ()) -> float: ...

    def top_k(self, context: Sequence[NoteToken], k: int,
              accept: Callable[[NoteToken], bool] | None = None) -> list[tuple[NoteToken, float]]: ...


class MelodyModel:
    def __init__(self, order: int, alpha: float, counts: dict[Context, Counter]):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not alpha > 0:
            raise ValueError("alpha must be > 0")
        self.order = order
        self.alpha = float(alpha)
        self.counts = counts
        self.totals = {ctx: sum(table.values()) for ctx, table in counts.items()}
        vocab = set()
        for table in counts.values():
            vocab.update(table)
        self.vocabulary: tuple[NoteToken, ...] = tuple(sorted(vocab))
        self._vocab_set = frozenset(vocab)
        self._denom_extra = self.alpha * (len(self.vocabulary) + 1)
        self._ranked: dict[Context, list[tuple[NoteToken, int]]] = {}

    def __repr__(self) -> str:
        return f"MelodyModel(order={self.order}, alpha={self.alpha}, |V|={len(self.vocabulary)}, contexts={len(self.counts)})"

    def _context(self, context: Sequence[NoteToken]) -> Context:
        """Longest seen suffix of the (START-padded) history."""
        n = self.order - 1
        if n == 0:
            return ()
        hist = tuple(context[-n:])
        if len(hist) < n:
            hist = (START,) * (n - len(hist)) + hist
        for cut in range(n + 1):
            ctx = hist[cut:]
            if ctx in self.totals:
                return ctx
        return ()

    def prob(self, token: NoteToken, context: Sequence[NoteToken] = ()) -> float:
        ctx = self._context(context)
        table = self.counts.get(ctx)
        c = table.get(token, 0) if table is not None and token in self._vocab_set else 0
        return (c + self.alpha) / (self.totals.get(ctx, 0) + self._denom_extra)

    def distribution(self, context: Sequence[NoteToken] = ()) -> dict[NoteToken, float]:
        """Full conditional distribution, including the ``UNKNOWN`` bucket."""
        ctx = self._context(context)
        table = self.counts.get(ctx, {})
        denom = self.totals.get(ctx, 0) + self._denom_extra
        dist = {t: (table.get(t, 0) + self.alpha) / denom for t in self.vocabulary}
        dist[UNKNOWN] = self.alpha / denom
        return dist

    def score(self, tokens: Sequence[NoteToken], context: Sequence[NoteToken] = ()) -> float:
        """Log-probability of ``tokens`` following ``context``."""
        hist = list(context)
        total = 0.0
        for tok in tokens:
            total += math.log(self.prob(tok, hist))
            hist.append(tok)
        return total

    def _ranked_table(self, ctx: Context) -> list[tuple[NoteToken, int]]:
        ranked = self._ranked.get(ctx)
        if ranked is None:
            table = self.counts.get(ctx, {})
            ranked = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
            self._ranked[ctx] = ranked
        return ranked

    def top_k(self, context: Sequence[NoteToken], k: int,
              accept: Callable[[NoteToken], bool] | None = None) -> list[tuple[NoteToken, float]]:
        """The ``k`` most probable vocabulary tokens (ties by token order).

        ``accept`` restricts the candidates before ranking.  The unknown
        bucket is never proposed.
        """
        ctx = self._context(context)
        denom = self.totals.get(ctx, 0) + self._denom_extra
        out: list[tuple[NoteToken, float]] = []
        seen = set()
        for tok, c in self._ranked_table(ctx):
            if accept is None or accept(tok):
                out.append((tok, (c + self.alpha) / denom))
                if len(out) == k:
                    return out
            seen.add(tok)
        for tok in self.vocabulary:
            if tok not in seen and (accept is None or accept(tok)):
                out.append((tok, self.alpha / denom))
                if len(out) == k:
                    break
        return out


class UniformModel:
    """Assigns equal probability to every vocabulary token (and the unknown bucket, if kept)."""

    order = 1

    def __init__(self, vocabulary: Iterable[NoteToken], unknown_bucket: bool = True):
        self.vocabulary = tuple(sorted(set(vocabulary)))
        self.support_size = len(self.vocabulary) + (1 if unknown_bucket else 0)
        if self.support_size == 0:
            raise ValueError("empty vocabulary")

    def prob(self, token: NoteToken, context: Sequence[NoteToken] = ()) -> float:
        return 1.0 / self.support_size

    def score(self, tokens: Sequence[NoteToken], context: Sequence[NoteToken] = ()) -> float:
        return -len(tokens) * math.log(self.support_size)

    def top_k(self, context, k, accept=None):
        toks = [t for t in self.vocabulary if accept is None or accept(t)][:k]
        return [(t, 1.0 / self.support_size) for t in toks]


def train(corpus: Iterable[Sequence[NoteToken]], order: int = 3, alpha: float = 0.01) -> MelodyModel:
    """Count n-grams of every length up to ``order`` over START-padded sequences."""
    counts: dict[Context, Counter] = {}
    n_seq = 0
    n = order - 1
    for seq in corpus:
        if len(seq) == 0:
            raise ValueError("corpus sequences must be non-empty")
        n_seq += 1
        padded = [START] * n + list(seq)
        for i in range(n, len(padded)):
            tok = padded[i]
            for length in range(n + 1):
                ctx = tuple(padded[i - length:i])
                counts.setdefault(ctx, Counter())[tok] += 1
    if n_seq == 0:
        raise ValueError("cannot train on an empty corpus")
    return MelodyModel(order, alpha, counts)


def score(model: LanguageModel, tokens: Sequence[NoteToken], context: Sequence[NoteToken] = ()) -> float:
    return model.score(tokens, context)


def perplexity(model: LanguageModel, heldout: Iterable[Sequence[NoteToken]]) -> float:
    total = 0.0
    n_tok = 0
    for seq in heldout:
        total += model.score(seq)
        n_tok += len(seq)
    if n_tok == 0:
        raise ValueError("held-out corpus is empty")
    return math.exp(-total / n_tok)


def generate_continuation(model: LanguageModel, context: Sequence[NoteToken], tb: TimeBase = TimeBase(),
                          k: int = 5, rng_seed: int | str = 0, bars: int = 2) -> list[NoteToken]:
    """Sample tokens until exactly ``bars`` bars are filled.

    Rests are measured from the start of the continuation.  Tokens whose
    rest would reach the end are excluded before top-k ranking; the final
    note is clipped at the boundary.
    """
    if not context:
        raise ValueError("continuation needs a non-empty context")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = random.Random(rng_seed)
    six = tb.sixteenth
    end = bars * tb.bar_ticks // six  # in sixteenths
    hist = list(context)
    out: list[NoteToken] = []
    t = 0
    while t < end:
        room = end - t
        cands = model.top_k(hist, k, accept=lambda tok: tok.rest_class < room)
        if cands:
            weights = [p for _, p in cands]
            x = rng.random() * sum(weights)
            tok = cands[-1][0]
            for cand, w in cands:
                x -= w
                if x < 0:
                    tok = cand
                    break
        else:
            best = model.top_k(hist, 1)
            if not best:
                raise ValueError("model has an empty vocabulary")
            tok = best[0][0]._replace(rest_class=0)
        onset = t + tok.rest_class
        dur = tok.duration_class + 1
        if onset + dur > end:
            dur = end - onset
            tok = tok._replace(duration_class=dur - 1)
        out.append(tok)
        hist.append(tok)
        t = onset + dur
    return out


def _fmt_ctx(ctx: Context) -> str:
    return " ".join("^" if t == START else str(t) for t in ctx) or "-"


def _parse_ctx(text: str) -> Context:
    if text == "-":
        return ()
    return tuple(START if x == "^" else NoteToken.parse(x) for x in text.split(" "))


def save(model: MelodyModel, path: str | Path) -> None:
    lines = [f"{FORMAT_NAME}\t{FORMAT_VERSION}", f"order\t{model.order}", f"alpha\t{model.alpha!r}",
             f"contexts\t{len(model.counts)}"]
    for ctx in sorted(model.counts):
        table = model.counts[ctx]
        entries = " ".join(f"{tok}={c}" for tok, c in sorted(table.items()))
        lines.append(f"{_fmt_ctx(ctx)}\t{entries}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path: str | Path) -> MelodyModel:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not text.endswith("\n"):
        raise ModelFormatError(f"{path}: truncated model file")
    lines.pop()
    try:
        name, version = lines[0].split("\t")
    except (IndexError, ValueError):
        raise ModelFormatError(f"{path}: missing header") from None
    if name != FORMAT_NAME:
        raise ModelFormatError(f"{path}: not a melody model file")
    if int(version) != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    try:
        order = int(lines[1].split("\t")[1])
        alpha = float(lines[2].split("\t")[1])
        n_ctx = int(lines[3].split("\t")[1])
        counts: dict[Context, Counter] = {}
        for lineno, line in enumerate(lines[4:], start=5):
            if line.count("\t") != 1:
                raise ValueError(f"line {lineno} is malformed")
            ctx_text, entries = line.split("\t")
            table = Counter()
            for entry in entries.split(" "):
                tok, c = entry.split("=")
                table[NoteToken.parse(tok)] = int(c)
            counts[_parse_ctx(ctx_text)] = table
    except (IndexError, ValueError) as exc:
        raise ModelFormatError(f"{path}: corrupt model file: {exc}") from None
    if len(counts) != n_ctx:
        raise ModelFormatError(f"{path}: expected {n_ctx} contexts, found {len(counts)}")
    return MelodyModel(order, alpha, counts)
