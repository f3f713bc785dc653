"""Objective metrics: n-gram diversity and entropy, chorus IoU."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence


def ngrams(tokens: Sequence[Hashable], n: int) -> list[tuple]:
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(tokens) < n:
        raise ValueError(f"need at least {n} tokens, got {len(tokens)}")
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def dist_n(tokens: Sequence[Hashable], n: int) -> float:
    """Distinct n-grams divided by total n-grams."""
    grams = ngrams(tokens, n)
    return len(set(grams)) / len(grams)


def ent_n(tokens: Sequence[Hashable], n: int) -> float:
    """Shannon entropy (nats) of the empirical n-gram distribution."""
    grams = ngrams(tokens, n)
    total = len(grams)
    counts = Counter(grams).values()
    if len(counts) == 1:
        return 0.0
    # log(N) - sum(c log c) / N keeps the uniform case exactly ln k
    return math.log(total) - math.fsum(c * math.log(c) for c in counts if c > 1) / total


def iou(predicted: Iterable[int], truth: Iterable[int]) -> float:
    a, b = set(predicted), set(truth)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    rows: list[dict[str, float]] = field(default_factory=list)
    orders: tuple[int, ...] = (1, 2)

    def add(self, name: str, tokens: Sequence[Hashable]) -> dict[str, float]:
        row = {}
        for n in self.orders:
            row[f"Dist-{n}"] = dist_n(tokens, n)
        for n in self.orders:
            row[f"Ent-{n}"] = ent_n(tokens, n)
        self.names.append(name)
        self.rows.append(row)
        return row

    @property
    def columns(self) -> list[str]:
        return [f"Dist-{n}" for n in self.orders] + [f"Ent-{n}" for n in self.orders]

    def mean(self) -> dict[str, float]:
        return {c: sum(r[c] for r in self.rows) / len(self.rows) for c in self.columns}

    def __getattr__(self, name: str) -> float:
        # report.dist_1, report.ent_2, ... as corpus means
        if name.startswith(("dist_", "ent_")) and self.rows:
            kind, n = name.split("_")
            return self.mean()[f"{'Dist' if kind == 'dist' else 'Ent'}-{n}"]
        raise AttributeError(name)

    def to_tsv(self) -> str:
        lines = ["song\t" + "\t".join(self.columns)]
        for name, row in zip(self.names, self.rows):
            lines.append(name + "\t" + "\t".join(f"{row[c]:.4f}" for c in self.columns))
        if self.rows:
            mean = self.mean()
            lines.append("mean\t" + "\t".join(f"{mean[c]:.4f}" for c in self.columns))
        return "\n".join(lines) + "\n"
