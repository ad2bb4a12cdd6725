"""Span position matrices: rows are span lengths (1-based), columns are start offsets.

Cell ``(r, c)`` of a window's matrix stands for the span that starts at
window position ``c`` and covers ``r`` tokens. It is stored at
``values[r - 1, c]``.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .ingest import Span

DEFAULT_K = 10
DEFAULT_L = 243


def fit_mask(K: int, L: int, window_len: int) -> np.ndarray:
    """Boolean K x L mask, true where a span of length r starting at c fits the window."""
    r = np.arange(1, K + 1)[:, None]
    c = np.arange(L)[None, :]
    return (c + r) <= window_len


@dataclass(frozen=True, eq=False)
class SpanMatrix:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("span matrix must be 2-D")
        if v.size and (v.min() < 0 or v.max() > 1):
            raise ValueError("span matrix values must lie in [0, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def L(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return isinstance(other, SpanMatrix) and np.array_equal(self.values, other.values)

    def to_json(self) -> str:
        rows, cols = np.nonzero(self.values)
        cells = [[int(r) + 1, int(c), float(self.values[r, c])] for r, c in zip(rows, cols)]
        return json.dumps({"K": self.K, "L": self.L, "cells": cells})

    @classmethod
    def from_json(cls, text: str) -> "SpanMatrix":
        obj = json.loads(text)
        v = np.zeros((obj["K"], obj["L"]))
        for r, c, score in obj["cells"]:
            v[r - 1, c] = score
        return cls(v)


@dataclass(frozen=True)
class WindowPrediction:
    offset: int
    matrix: SpanMatrix
    length: int

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("window offset must be non-negative")
        if self.length > self.matrix.L:
            raise ValueError(f"window length {self.length} exceeds L={self.matrix.L}")


def encode_spans(spans: Iterable[Span], window_offset: int, window_len: int,
                 K: int = DEFAULT_K, L: int = DEFAULT_L) -> tuple[SpanMatrix, int]:
    """Binary target matrix for ``spans`` within one window.

    Returns the matrix and the number of spans skipped because they are
    longer than ``K`` or not fully inside the window.
    """
    if window_len > L:
        raise ValueError(f"window length {window_len} exceeds L={L}")
    v = np.zeros((K, L))
    skipped = 0
    for s in spans:
        r = s.end - s.start + 1
        c = s.start - window_offset
        if r > K or c < 0 or c + r > window_len:
            skipped += 1
            continue
        v[r - 1, c] = 1.0
    return SpanMatrix(v), skipped


def decode(matrix: SpanMatrix, window_offset: int, window_len: int,
           threshold: float = 0.5, strict: bool = False) -> set[tuple[Span, float]]:
    """Spans whose cell score reaches ``threshold`` (exceeds it when ``strict``)."""
    v = matrix.values
    mask = fit_mask(matrix.K, matrix.L, window_len)
    hit = (v > threshold) if strict else (v >= threshold)
    rows, cols = np.nonzero(hit & mask)
    return {(Span(window_offset + int(c), window_offset + int(c) + int(r)), float(v[r, c]))
            for r, c in zip(rows, cols)}


def merge_predictions(preds: Sequence[WindowPrediction]) -> dict[Span, float]:
    """Mean score of every span over the windows that fully contain it."""
    total: dict[Span, float] = defaultdict(float)
    count: dict[Span, int] = defaultdict(int)
    for p in preds:
        v = p.matrix.values
        rows, cols = np.nonzero(fit_mask(p.matrix.K, p.matrix.L, p.length))
        for r, c, score in zip(rows.tolist(), cols.tolist(), v[rows, cols].tolist()):
            span = Span(p.offset + c, p.offset + c + r)
            total[span] += score
            count[span] += 1
    return {s: total[s] / count[s] for s in total}


def roundtrip_check(spans: Iterable[Span], offset: int, window_len: int,
                    K: int = DEFAULT_K, L: int = DEFAULT_L) -> bool:
    spans = set(spans)
    m, _ = encode_spans(spans, offset, window_len, K, L)
    out = decode(m, offset, window_len, 0.5)
    return {s for s, _ in out} == spans and all(score == 1.0 for _, score in out)
