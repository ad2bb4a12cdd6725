import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from segcoref.ingest import Span
from segcoref.spanmat import (SpanMatrix, WindowPrediction, decode, encode_spans,
                              merge_predictions, roundtrip_check)

K, L = 10, 243


def test_row_is_length_column_is_start():
    m, skipped = encode_spans({Span(4, 5)}, 0, L)
    assert skipped == 0
    assert m.values[2 - 1, 4] == 1
    assert m.values.sum() == 1


def test_empty_and_too_long():
    m, skipped = encode_spans(set(), 0, L)
    assert not m.values.any() and skipped == 0
    m, skipped = encode_spans({Span(0, 11)}, 0, L, K=10)
    assert not m.values.any() and skipped == 1


def test_spans_outside_window_are_skipped():
    m, skipped = encode_spans({Span(3, 4), Span(9, 12), Span(20, 20)}, 5, 6, K, L)
    assert skipped == 3 and not m.values.any()


def test_decode_coordinates():
    v = np.zeros((K, L))
    v[1, 4] = 0.9
    assert decode(SpanMatrix(v), 100, L, 0.5) == {(Span(104, 105), 0.9)}
    assert decode(SpanMatrix(np.zeros((K, L))), 0, L, 0.5) == set()


def test_out_of_fit_cells_never_decode():
    v = np.zeros((K, L))
    v[2, L - 1] = 0.9
    assert decode(SpanMatrix(v), 0, L, 0.5) == set()


def test_strict_threshold():
    v = np.full((K, L), 0.5)
    assert decode(SpanMatrix(v), 0, 5, 0.5, strict=True) == set()
    assert len(decode(SpanMatrix(v), 0, 5, 0.5)) == 5 + 4 + 3 + 2 + 1


def test_values_must_be_probabilities():
    with pytest.raises(ValueError):
        SpanMatrix(np.full((2, 2), 1.5))


def test_merge_single_window():
    v = np.zeros((K, L))
    v[0, 0] = 0.8
    merged = merge_predictions([WindowPrediction(0, SpanMatrix(v), L)])
    assert merged[Span(0, 0)] == 0.8
    assert {s for s, p in merged.items() if p > 0} == {Span(0, 0)}


def test_merge_means_over_containing_windows():
    a, b = np.zeros((K, L)), np.zeros((K, L))
    a[0, 121] = 0.6
    b[0, 0] = 0.8
    merged = merge_predictions([WindowPrediction(0, SpanMatrix(a), L),
                                WindowPrediction(121, SpanMatrix(b), L)])
    assert merged[Span(121, 121)] == pytest.approx(0.7)


def test_merge_two_window_enumeration():
    # windows [0, 6) and [3, 9), K=2; brute-force the containing windows per span
    Kt, Lt = 2, 6
    rng = np.random.default_rng(1)
    mats = [rng.random((Kt, Lt)), rng.random((Kt, Lt))]
    preds = [WindowPrediction(0, SpanMatrix(mats[0]), 6), WindowPrediction(3, SpanMatrix(mats[1]), 6)]
    merged = merge_predictions(preds)
    expected = {}
    for start in range(9):
        for length in (1, 2):
            scores = [mats[w][length - 1, start - off] for w, off in enumerate((0, 3))
                      if off <= start and start + length <= off + 6]
            if scores:
                expected[Span(start, start + length - 1)] = sum(scores) / len(scores)
    assert merged.keys() == expected.keys()
    for s in expected:
        assert merged[s] == pytest.approx(expected[s], abs=1e-15)
    # a span only the second window can see keeps that window's score
    assert merged[Span(7, 8)] == mats[1][1, 4]


def test_merge_single_window_equals_threshold_zero_decode():
    rng = np.random.default_rng(2)
    m = SpanMatrix(rng.random((4, 12)))
    merged = merge_predictions([WindowPrediction(7, m, 9)])
    assert merged == {s: p for s, p in decode(m, 7, 9, 0.0)}


def test_roundtrip_examples():
    assert roundtrip_check({Span(4, 5), Span(9, 9)}, 0, L)
    assert roundtrip_check(set(), 0, L)
    assert roundtrip_check({Span(0, 0), Span(0, 1)}, 0, L)


span_sets = st.integers(1, L).flatmap(lambda n: st.tuples(
    st.just(n),
    st.sets(st.tuples(st.integers(0, n - 1), st.integers(1, K))
            .filter(lambda t: t[0] + t[1] <= n)
            .map(lambda t: Span(t[0], t[0] + t[1] - 1)), max_size=20)))


@given(span_sets, st.integers(0, 1000))
@settings(max_examples=200, deadline=None)
def test_roundtrip_property(case, offset):
    n, spans = case
    shifted = {Span(s.start + offset, s.end + offset) for s in spans}
    assert roundtrip_check(shifted, offset, n)


def test_cells_are_injective():
    seen = {}
    for start in range(20):
        for length in range(1, K + 1):
            m, _ = encode_spans({Span(start, start + length - 1)}, 0, 30, K, 30)
            cell = tuple(np.argwhere(m.values)[0])
            assert cell not in seen
            seen[cell] = (start, length)


def test_decode_size_bounded_by_hot_cells():
    rng = np.random.default_rng(3)
    v = rng.random((K, L))
    assert len(decode(SpanMatrix(v), 0, 100, 0.7)) <= int((v >= 0.7).sum())


def test_json_serialization():
    m, _ = encode_spans({Span(4, 5), Span(0, 0)}, 0, 20, 3, 20)
    text = m.to_json()
    import json
    assert json.loads(text) == {"K": 3, "L": 20, "cells": [[1, 0, 1.0], [2, 4, 1.0]]}
    assert SpanMatrix.from_json(text) == m


def test_matrix_is_immutable():
    m, _ = encode_spans({Span(0, 0)}, 0, 5, 2, 5)
    with pytest.raises(ValueError):
        m.values[0, 0] = 0.5
