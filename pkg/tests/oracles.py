"""Independent brute-force reference implementations used as test oracles.

Each oracle is written from the definition, deliberately naive and
without sharing code with the package under test.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction


def brute_recognize(S, g=2):
    """Reference for repeat-structure recognition.

    Repeatedly: over the string with masked lines removed, try every start
    ``i`` and length ``L > g``; count greedy non-overlapping matches of
    S[i:i+L] scanning left to right from its first occurrence; keep the
    longest segment with at least two matches (earliest first occurrence
    on ties).  Later matches point element-wise at the first; all matched
    lines are masked.  Returns (struct, chorus set).
    """
    n = len(S)
    struct = [0] * n
    masked = [False] * n
    chorus = None
    while True:
        idx = [k for k in range(n) if not masked[k]]
        r = [S[k] for k in idx]
        m = len(r)
        best = None  # (L, first_start, starts)
        for i in range(m):
            for L in range(g + 1, (m - i) // 2 + 1):
                # is i the first occurrence of this segment?
                seg = r[i:i + L]
                first = None
                for a in range(m - L + 1):
                    if all(r[a + t] == seg[t] for t in range(L)):
                        first = a
                        break
                if first != i:
                    continue
                starts = []
                a = i
                while a <= m - L:
                    if all(r[a + t] == seg[t] for t in range(L)):
                        starts.append(a)
                        a += L
                    else:
                        a += 1
                if len(starts) >= 2 and (best is None or L > best[0] or (L == best[0] and i < best[1])):
                    best = (L, i, starts)
        if best is None:
            break
        L, _, starts = best
        head = [idx[starts[0] + t] for t in range(L)]
        for s in starts[1:]:
            for t in range(L):
                struct[idx[s + t]] = head[t] + 1
        lines = {idx[s + t] + 1 for s in starts for t in range(L)}
        for x in lines:
            masked[x - 1] = True
        if chorus is None:
            chorus = lines
    return struct, (chorus or set())


def string_recognize(S, g=2):
    """Same definition as :func:`brute_recognize`, via C-level substring search.

    Each syllable count becomes one character, so ``str.find`` gives first
    occurrences and ``str.count`` the leftmost non-overlapping match count.
    """
    n = len(S)
    struct = [0] * n
    masked = [False] * n
    chorus = None
    while True:
        idx = [k for k in range(n) if not masked[k]]
        r = "".join(chr(0x100 + S[k]) for k in idx)
        m = len(r)
        found = None
        for L in range(m // 2, g, -1):
            for i in range(m - L + 1):
                seg = r[i:i + L]
                if r.find(seg) == i and r.count(seg) >= 2:
                    found = seg
                    break
            if found:
                break
        if not found:
            break
        L = len(found)
        starts = []
        a = r.find(found)
        while a != -1:
            starts.append(a)
            a = r.find(found, a + L)
        for s in starts[1:]:
            for t in range(L):
                struct[idx[s + t]] = idx[starts[0] + t] + 1
        lines = {idx[s + t] + 1 for s in starts for t in range(L)}
        for x in lines:
            masked[x - 1] = True
        if chorus is None:
            chorus = lines
    return struct, (chorus or set())


def canonical_strings(max_len, alphabet_size):
    """Every string up to relabeling: restricted-growth strings (first use of a symbol in order)."""
    def rec(prefix, used):
        yield prefix
        if len(prefix) == max_len:
            return
        for s in range(1, min(used + 1, alphabet_size) + 1):
            yield from rec(prefix + [s], max(used, s))
    for s in rec([], 0):
        if s:
            yield s


def brute_dist(tokens, n):
    grams = [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]
    unique = []
    for gram in grams:
        if gram not in unique:
            unique.append(gram)
    return len(unique) / len(grams)


def brute_ent(tokens, n):
    grams = [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]
    total = len(grams)
    seen = []
    h = 0.0
    for gram in grams:
        if gram in seen:
            continue
        seen.append(gram)
        p = sum(1 for x in grams if x == gram) / total
        h -= p * math.log(p)
    return h


TRIADS = {"C": {0, 4, 7}, "Dm": {2, 5, 9}, "Em": {4, 7, 11}, "F": {5, 9, 0}, "G": {7, 11, 2}, "Am": {9, 0, 4}}
VOCAB = ["C", "Dm", "Em", "F", "G", "Am"]


def brute_chords(bars, tonic="C", penalty=Fraction(1, 10)):
    """Enumerate every chord path; best score, ties broken bar by bar.

    Tie rule: at each bar prefer keeping the previous chord (the tonic
    before bar 0), then earlier vocabulary entries.
    """
    def emission(bar, name):
        total = sum(d for _, d in bar)
        if total == 0:
            return Fraction(0)
        return Fraction(sum(d for p, d in bar if p % 12 in TRIADS[name]), total)

    def rank_key(path):
        key, prev = [], tonic
        for c in path:
            key.append(0 if c == prev else 1 + VOCAB.index(c))
            prev = c
        return key

    best_score, best_path = None, None
    for path in itertools.product(VOCAB, repeat=len(bars)):
        score = sum((emission(b, c) for b, c in zip(bars, path)), Fraction(0))
        score -= penalty * sum(1 for a, b in zip(path, path[1:]) if a != b)
        if (best_score is None or score > best_score
                or (score == best_score and rank_key(path) < rank_key(best_path))):
            best_score, best_path = score, path
    return list(best_path), best_score


KK_MAJOR = [6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88]
KK_MINOR = [6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17]


def brute_key(durations_by_pc):
    """Best (mode, root) by Pearson correlation with rotated profiles; ties major first, lowest root."""
    def corr(x, y):
        mx, my = sum(x) / 12, sum(y) / 12
        sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
        sxx = sum((a - mx) ** 2 for a in x)
        syy = sum((b - my) ** 2 for b in y)
        if sxx == 0 or syy == 0:
            return 0.0
        return sxy / math.sqrt(sxx * syy)

    best = None
    for mode, prof in (("major", KK_MAJOR), ("minor", KK_MINOR)):
        for root in range(12):
            rotated = [prof[(pc - root) % 12] for pc in range(12)]
            c = corr(durations_by_pc, rotated)
            if best is None or c > best[0] + 1e-12:
                best = (c, mode, root)
    return best[1], best[2]
