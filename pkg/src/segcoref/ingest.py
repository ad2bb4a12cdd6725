"""Readers for CoNLL-2012 coreference files and the line-oriented document format."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

GENRES = ("bc", "bn", "mz", "nw", "pt", "tc", "wb")
OTHER_GENRE = 7

_BEGIN = re.compile(r"^#begin document \((.*)\);\s*part\s+(\d+)")
_TAG = re.compile(r"^(\()?([^()]+)(\))?$")


class FormatError(ValueError):
    """Malformed input; carries the line number when one is known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.msg = message
        super().__init__(message if line is None else f"line {line}: {message}")


class Span(NamedTuple):
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


Cluster = frozenset  # frozenset[Span]


@dataclass(frozen=True)
class Token:
    text: str
    index: int
    sentence: int = 0
    speaker: str = "-"


@dataclass(frozen=True)
class Document:
    id: str
    genre: int
    tokens: tuple[Token, ...]
    clusters: tuple[frozenset, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not 0 <= self.genre < 8:
            raise FormatError(f"{self.id}: genre {self.genre} does not fit in 3 bits")
        n = len(self.tokens)
        for i, tok in enumerate(self.tokens):
            if tok.index != i:
                raise FormatError(f"{self.id}: token {i} has index {tok.index}")
        for cluster in self.clusters:
            if not cluster:
                raise FormatError(f"{self.id}: empty cluster")
            for span in cluster:
                if not 0 <= span.start <= span.end < n:
                    raise FormatError(f"{self.id}: span {tuple(span)} outside [0, {n})")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def mentions(self) -> set[Span]:
        return {s for c in self.clusters for s in c}

    def cluster_of(self, span: Span) -> frozenset:
        for c in self.clusters:
            if span in c:
                return c
        raise KeyError(span)


def genre_of(doc_id: str) -> int:
    prefix = doc_id.split("/", 1)[0]
    try:
        return GENRES.index(prefix)
    except ValueError:
        return OTHER_GENRE


def _coref_entries(column: str):
    if column in ("-", "_", ""):
        return
    for part in column.split("|"):
        m = _TAG.match(part)
        if m is None:
            raise ValueError(f"bad coreference entry {part!r}")
        yield m.group(1) is not None, m.group(2), m.group(3) is not None


def _finish(doc_id, part, rows, opened, order, spans, lineno):
    for cid, stack in opened.items():
        if stack:
            raise FormatError(f"document {doc_id} part {part}: "
                              f"unclosed coreference bracket for cluster {cid}", lineno)
    tokens = tuple(Token(text, i, sent, spk) for i, (text, sent, spk) in enumerate(rows))
    clusters = tuple(frozenset(spans[cid]) for cid in order if spans[cid])
    return Document(f"{doc_id}-part{part}", genre_of(doc_id), tokens, clusters)


def parse_conll(text: str) -> list[Document]:
    """Parse ``*_conll`` text into one Document per (document id, part).

    Coreference brackets are matched with a LIFO stack per cluster id, so
    nested mentions of the same entity close innermost-first.
    """
    docs = []
    cur = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("#begin document"):
            m = _BEGIN.match(line)
            if m is None:
                raise FormatError("malformed #begin document line", lineno)
            if cur is not None:
                raise FormatError(f"document {cur['id']} not ended", lineno)
            cur = dict(id=m.group(1), part=m.group(2), rows=[], opened={},
                       order=[], spans={}, sent=0, sent_len=0)
            continue
        if line.startswith("#end document"):
            if cur is None:
                raise FormatError("#end document without #begin", lineno)
            docs.append(_finish(cur["id"], cur["part"], cur["rows"], cur["opened"],
                                cur["order"], cur["spans"], lineno))
            cur = None
            continue
        if cur is None or line.startswith("#"):
            continue
        if not line:
            if cur["sent_len"]:
                cur["sent"] += 1
                cur["sent_len"] = 0
            continue
        cols = line.split()
        if len(cols) < 10:
            raise FormatError(f"expected at least 10 columns, got {len(cols)}", lineno)
        i = len(cur["rows"])
        cur["rows"].append((cols[3], cur["sent"], cols[9] or "-"))
        cur["sent_len"] += 1
        try:
            entries = list(_coref_entries(cols[-1]))
        except ValueError as e:
            raise FormatError(str(e), lineno) from None
        for opens, cid, closes in entries:
            if cid not in cur["spans"]:
                cur["spans"][cid] = []
                cur["order"].append(cid)
            stack = cur["opened"].setdefault(cid, [])
            if opens and closes:
                start = i
            elif opens:
                stack.append(i)
                continue
            elif closes:
                if not stack:
                    raise FormatError(f"document {cur['id']}: closing bracket for "
                                      f"cluster {cid} without opening", lineno)
                start = stack.pop()
            else:
                raise FormatError(f"bare cluster id {cid!r}", lineno)
            span = Span(start, i)
            if span not in cur["spans"][cid]:
                cur["spans"][cid].append(span)
    if cur is not None:
        raise FormatError(f"document {cur['id']} not ended", lineno + 1)
    return docs


def write_conll(doc: Document, clusters: Iterable[frozenset] | None = None) -> str:
    """Render a document in a minimal 11-column CoNLL-2012 layout.

    ``clusters`` overrides the document's own clusters (used for responses).
    The ``-partNNN`` suffix of the id is turned back into the part field.
    """
    clusters = doc.clusters if clusters is None else tuple(clusters)
    m = re.match(r"^(.*)-part(\d+)$", doc.id)
    base, part = (m.group(1), m.group(2)) if m else (doc.id, "000")
    tags = [[] for _ in doc.tokens]
    for cid, cluster in enumerate(clusters):
        for s in sorted(cluster):
            if s.start == s.end:
                tags[s.start].append((0, -s.end, f"({cid})"))
            else:
                tags[s.start].append((1, -s.end, f"({cid}"))
                tags[s.end].append((-1, -s.start, f"{cid})"))
    lines = [f"#begin document ({base}); part {part}"]
    prev_sent = doc.tokens[0].sentence if doc.tokens else 0
    word_in_sent = 0
    for tok, tag in zip(doc.tokens, tags):
        if tok.sentence != prev_sent:
            lines.append("")
            prev_sent = tok.sentence
            word_in_sent = 0
        # closers before openers so back-to-back mentions stay balanced
        col = "|".join(t for _, _, t in sorted(tag, key=lambda x: (x[0], x[1]))) or "-"
        lines.append(f"{base} {int(part)} {word_in_sent} {tok.text} - - - - - {tok.speaker} {col}")
        word_in_sent += 1
    lines.append("")
    lines.append("#end document")
    return "\n".join(lines) + "\n"


def to_record(doc: Document) -> dict:
    return {
        "id": doc.id,
        "genre": doc.genre,
        "tokens": [t.text for t in doc.tokens],
        "speakers": [t.speaker for t in doc.tokens],
        "sentences": [t.sentence for t in doc.tokens],
        "clusters": [[list(s) for s in sorted(c)] for c in doc.clusters],
    }


def dumps_jsonl(docs: Iterable[Document]) -> str:
    return "".join(json.dumps(to_record(d)) + "\n" for d in docs)


def from_record(rec: dict, line: int | None = None) -> Document:
    try:
        words = rec["tokens"]
        n = len(words)
        speakers = rec.get("speakers") or ["-"] * n
        sentences = rec.get("sentences") or [0] * n
        if len(speakers) != n or len(sentences) != n:
            raise FormatError("speakers/sentences not parallel to tokens", line)
        tokens = tuple(Token(w, i, int(s), spk or "-")
                       for i, (w, s, spk) in enumerate(zip(words, sentences, speakers)))
        clusters = []
        for c in rec.get("clusters", []):
            spans = [Span(int(a), int(b)) for a, b in c]
            if len(set(spans)) != len(spans):
                raise FormatError(f"duplicate span in cluster of {rec['id']}", line)
            clusters.append(frozenset(spans))
        return Document(str(rec["id"]), int(rec["genre"]), tokens, tuple(clusters))
    except FormatError as e:
        if e.line is None and line is not None:
            raise FormatError(str(e), line) from None
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad document record: {e}", line) from None


def parse_jsonl(text: str) -> list[Document]:
    docs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"invalid JSON: {e.msg}", lineno) from None
        docs.append(from_record(rec, lineno))
    return docs
