import numpy as np
import pytest

from segcoref.ingest import Document, Span, Token
from segcoref.window import (CLS, SEP, UNK, Vocab, genre_bits, pack_detector_query,
                             pack_query, segment, window_offsets)


def make_doc(n, genre=0, speakers=None, doc_id="d"):
    speakers = speakers or ["A"] * n
    return Document(doc_id, genre, tuple(Token(f"w{i}", i, 0, speakers[i]) for i in range(n)))


@pytest.mark.parametrize("n, L, offsets", [
    (243, 243, [0]),
    (400, 243, [0, 121, 157]),
    (5, 4, [0, 1]),
    (10, 4, [0, 2, 4, 6]),
    (1, 243, [0]),
])
def test_offsets(n, L, offsets):
    assert [w.offset for w in segment(make_doc(n), L)] == offsets


def test_empty_document_rejected():
    with pytest.raises(ValueError):
        segment(Document("e", 0, ()), 243)


@pytest.mark.parametrize("n", range(1, 60))
@pytest.mark.parametrize("L", [2, 3, 7, 10])
def test_coverage_and_overlap(n, L):
    windows = segment(make_doc(n), L)
    offsets = [w.offset for w in windows]
    assert offsets == sorted(set(offsets))
    cover = np.zeros(n, int)
    for w in windows:
        assert 1 <= w.length <= L and w.end <= n
        cover[w.offset:w.end] += 1
    assert (cover >= 1).all()
    if n > L:
        s = L // 2
        assert (cover[s:n - s] >= 2).all()


def test_vocab_reserved_and_casefold():
    v = Vocab(["The", "cat"])
    assert v.lookup("[CLS]") == 1 and v.lookup("[PAD]") == 0 and v.lookup("[SEP]") == 2
    assert v.lookup("unseen") == UNK
    assert v.lookup("The") == v.lookup("the") == 4


def test_vocab_file_roundtrip(tmp_path):
    v = Vocab(["b", "a", "B"])
    v.save(tmp_path / "vocab.txt")
    lines = (tmp_path / "vocab.txt").read_text().splitlines()
    assert lines[:4] == ["[PAD]", "[CLS]", "[SEP]", "[UNK]"]
    assert Vocab.load(tmp_path / "vocab.txt") == v


def test_pack_query_layout_and_genre_bits():
    doc = make_doc(10, genre=5)
    vocab = Vocab.from_documents([doc])
    (w,) = segment(doc, 243)
    pack = pack_query(doc, Span(4, 5), w, vocab)
    assert len(pack) == 2 + 2 + 10 + 1
    assert pack.ids[0] == CLS and pack.seps == (3, 14)
    assert pack.ids[3] == SEP and pack.ids[14] == SEP
    assert list(pack.ids[1:3]) == [vocab.lookup("w4"), vocab.lookup("w5")]
    assert genre_bits(5) == (1, 0, 1)
    assert (pack.meta[:, 1:] == [1, 0, 1]).all()


def test_speaker_bit():
    doc = make_doc(4, speakers=["A", "B", "A", "B"])
    vocab = Vocab.from_documents([doc])
    (w,) = segment(doc, 243)
    pack = pack_query(doc, Span(1, 1), w, vocab)
    assert list(pack.meta[:, 0]) == [0, 1, 0, 1]


def test_long_mention_truncated():
    doc = make_doc(20)
    vocab = Vocab.from_documents([doc])
    (w,) = segment(doc, 243)
    pack = pack_query(doc, Span(0, 11), w, vocab, K=10)
    assert pack.truncated and pack.mention_len == 10
    assert pack.seps[0] == 11
    assert not pack_query(doc, Span(0, 9), w, vocab).truncated


def test_mention_outside_window_uses_document_tokens():
    doc = make_doc(400)
    vocab = Vocab.from_documents([doc])
    windows = segment(doc, 243)
    pack = pack_query(doc, Span(390, 390), windows[0], vocab)
    assert pack.ids[1] == vocab.lookup("w390")


def test_detector_pack():
    doc = make_doc(10, speakers=["-"] * 5 + ["A"] * 5)
    vocab = Vocab.from_documents([doc])
    (w,) = segment(doc, 243)
    det = pack_detector_query(doc, w, vocab)
    assert len(det) == 12
    assert det == pack_detector_query(doc, w, vocab)
    assert list(det.meta[:, 0]) == [1] * 5 + [0] * 5


def test_detector_and_resolver_packs_differ_only_in_mention_slot():
    doc = make_doc(10, speakers=["-"] * 10)
    vocab = Vocab.from_documents([doc])
    (w,) = segment(doc, 243)
    det = pack_detector_query(doc, w, vocab)
    res = pack_query(doc, Span(2, 3), w, vocab, query_speaker="-")
    # drop [CLS] m1 m2 [SEP] vs [CLS]; the remainder must be identical
    assert list(res.ids[4:]) == list(det.ids[1:])
    assert np.array_equal(res.meta, det.meta)
    assert res.ids[0] == det.ids[0] == CLS


def test_pack_length_bounded():
    doc = make_doc(400)
    vocab = Vocab.from_documents([doc])
    for w in segment(doc, 243):
        pack = pack_query(doc, Span(0, 15), w, vocab, K=10)
        assert len(pack) <= 256
        assert pack.doc_slot == slice(12, 12 + w.length)
