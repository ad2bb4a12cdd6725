"""Document windowing, the corpus vocabulary, and query packing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .ingest import Document, Span, Token
from .spanmat import DEFAULT_K, DEFAULT_L

log = logging.getLogger(__name__)

PAD, CLS, SEP, UNK = 0, 1, 2, 3
RESERVED = ("[PAD]", "[CLS]", "[SEP]", "[UNK]")
META_BITS = 4


@dataclass(frozen=True)
class Window:
    doc_id: str
    offset: int
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("empty window")

    @property
    def length(self) -> int:
        return len(self.tokens)

    @property
    def end(self) -> int:
        return self.offset + len(self.tokens)


def window_offsets(n: int, L: int) -> list[int]:
    if L < 2:
        raise ValueError("window capacity must be at least 2")
    if n <= 0:
        raise ValueError("cannot segment an empty document")
    if n <= L:
        return [0]
    stride = L // 2
    offsets = []
    for off in range(0, n, stride):
        off = min(off, n - L)
        if not offsets or off > offsets[-1]:
            offsets.append(off)
        if off == n - L:
            break
    return offsets


def segment(doc: Document, L: int = DEFAULT_L) -> list[Window]:
    """Cut ``doc`` into windows of at most ``L`` tokens with stride ``L // 2``.

    The last window is pulled back to end exactly at the document end.
    """
    if not doc.tokens:
        raise ValueError(f"document {doc.id} is empty")
    return [Window(doc.id, off, doc.tokens[off:off + L])
            for off in window_offsets(len(doc.tokens), L)]


class Vocab:
    """Case-folded whole-token vocabulary; ids 0-3 are reserved."""

    def __init__(self, words: Iterable[str] = ()):
        self.itos = list(RESERVED)
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        key = word if word in RESERVED else word.casefold()
        if key not in self.stoi:
            self.stoi[key] = len(self.itos)
            self.itos.append(key)
        return self.stoi[key]

    @classmethod
    def from_documents(cls, docs: Iterable[Document]) -> "Vocab":
        v = cls()
        for d in docs:
            for t in d.tokens:
                v.add(t.text)
        return v

    def lookup(self, word: str) -> int:
        if word in RESERVED:
            return self.stoi[word]
        return self.stoi.get(word.casefold(), UNK)

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def save(self, path) -> None:
        Path(path).write_text("".join(w + "\n" for w in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        words = Path(path).read_text(encoding="utf-8").split("\n")
        if words and words[-1] == "":
            words.pop()
        if tuple(words[:4]) != RESERVED:
            raise ValueError(f"{path}: first four vocabulary lines must be {RESERVED}")
        v = cls()
        for w in words[4:]:
            v.stoi[w] = len(v.itos)
            v.itos.append(w)
        return v


@dataclass(frozen=True, eq=False)
class QueryPack:
    """Packed ``[CLS] mention [SEP] window [SEP]`` (or ``[CLS] window [SEP]``).

    ``meta`` holds one 4-bit row per window token: the speaker bit followed
    by the genre index in 3 big-endian bits.
    """
    ids: np.ndarray
    meta: np.ndarray
    mention_len: int
    doc_start: int
    doc_len: int
    has_mention: bool
    truncated: bool = False

    @property
    def seps(self) -> tuple[int, ...]:
        last = self.doc_start + self.doc_len
        return (self.doc_start - 1, last) if self.has_mention else (last,)

    @property
    def doc_slot(self) -> slice:
        return slice(self.doc_start, self.doc_start + self.doc_len)

    def __len__(self) -> int:
        return len(self.ids)

    def __eq__(self, other):
        return (isinstance(other, QueryPack)
                and np.array_equal(self.ids, other.ids)
                and np.array_equal(self.meta, other.meta)
                and (self.mention_len, self.doc_start, self.doc_len, self.has_mention)
                == (other.mention_len, other.doc_start, other.doc_len, other.has_mention))


def genre_bits(genre: int) -> tuple[int, int, int]:
    return (genre >> 2) & 1, (genre >> 1) & 1, genre & 1


def _meta(window: Window, genre: int, query_speaker: str) -> np.ndarray:
    meta = np.zeros((window.length, META_BITS))
    meta[:, 1:] = genre_bits(genre)
    meta[:, 0] = [t.speaker == query_speaker for t in window.tokens]
    return meta


def pack_query(doc: Document, mention: Span, window: Window, vocab: Vocab,
               K: int = DEFAULT_K, query_speaker: str | None = None) -> QueryPack:
    """Pack a resolver query; the mention is read from the full document."""
    words = doc.tokens[mention.start:mention.end + 1]
    truncated = len(words) > K
    if truncated:
        log.warning("mention %s in %s longer than %d tokens; truncated", tuple(mention), doc.id, K)
        words = words[:K]
    if query_speaker is None:
        query_speaker = words[0].speaker
    ids = ([CLS] + [vocab.lookup(t.text) for t in words] + [SEP]
           + [vocab.lookup(t.text) for t in window.tokens] + [SEP])
    return QueryPack(np.array(ids), _meta(window, doc.genre, query_speaker),
                     len(words), len(words) + 2, window.length, True, truncated)


def pack_detector_query(doc: Document, window: Window, vocab: Vocab) -> QueryPack:
    ids = [CLS] + [vocab.lookup(t.text) for t in window.tokens] + [SEP]
    return QueryPack(np.array(ids), _meta(window, doc.genre, "-"), 0, 1, window.length, False)
