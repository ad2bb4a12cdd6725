"""Two-stage inference: detect mentions, then resolve and remove clusters one query at a time."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from . import net
from .ingest import Document, Span
from .spanmat import WindowPrediction, merge_predictions
from .window import Vocab, pack_detector_query, pack_query, segment


@dataclass(frozen=True)
class InferenceConfig:
    K: int = 10
    L: int = 243
    threshold: float = 0.5


@dataclass
class ResolvedDocument:
    id: str
    clusters: list[frozenset] = field(default_factory=list)
    leftovers: set[Span] = field(default_factory=set)
    detected: list[Span] = field(default_factory=list)

    def __post_init__(self):
        seen: set[Span] = set()
        for c in self.clusters:
            if seen & c:
                raise AssertionError(f"{self.id}: overlapping output clusters")
            seen |= c


def _above(scores: dict[Span, float], threshold: float) -> list[Span]:
    return sorted(s for s, p in scores.items() if p > threshold)


def window_scores(doc: Document, model: net.Model, vocab: Vocab, cfg: InferenceConfig,
                  query: Span | None = None) -> dict[Span, float]:
    """Merged span probabilities over all windows for one detector or resolver query."""
    preds = []
    for w in segment(doc, cfg.L):
        pack = (pack_detector_query(doc, w, vocab) if query is None
                else pack_query(doc, query, w, vocab, cfg.K))
        preds.append(WindowPrediction(w.offset, net.predict(pack, model), w.length))
    return merge_predictions(preds)


def detect_mentions(doc: Document, detector: net.Model, vocab: Vocab,
                    cfg: InferenceConfig = InferenceConfig()) -> list[Span]:
    return _above(window_scores(doc, detector, vocab, cfg), cfg.threshold)


def resolve_cluster(doc: Document, query: Span, resolver: net.Model, vocab: Vocab,
                    cfg: InferenceConfig = InferenceConfig()) -> frozenset:
    """Every span scored above threshold for ``query``, plus the query itself."""
    found = _above(window_scores(doc, resolver, vocab, cfg, query), cfg.threshold)
    return frozenset(found) | {query}


def resolve_document(doc: Document, detector: net.Model, resolver: net.Model, vocab: Vocab,
                     cfg: InferenceConfig = InferenceConfig(),
                     detected: Sequence[Span] | None = None) -> ResolvedDocument:
    """Take the first remaining mention, resolve its cluster, remove it, repeat.

    Resolved spans are intersected with the still-unconsumed detections so a
    later query can never pull in spans an earlier cluster already claimed.
    Queries that resolve to themselves alone are kept as leftovers.
    """
    if detected is None:
        detected = detect_mentions(doc, detector, vocab, cfg)
    remaining = set(detected)
    out = ResolvedDocument(doc.id, detected=list(detected))
    while remaining:
        q = min(remaining)
        cluster = resolve_cluster(doc, q, resolver, vocab, cfg) & (remaining | {q})
        remaining -= cluster
        if len(cluster) >= 2:
            out.clusters.append(cluster)
        else:
            out.leftovers.add(q)
    out.__post_init__()
    return out


def as_document(doc: Document, resolved: ResolvedDocument) -> Document:
    """The source document with its clusters replaced by the predicted ones."""
    return Document(doc.id, doc.genre, doc.tokens, tuple(resolved.clusters))


def long_distance_probe(docs: Sequence[Document], resolver: net.Model, vocab: Vocab,
                        cfg: InferenceConfig = InferenceConfig(),
                        buckets: Sequence[int] = (0, 10, 50, 120, 243)) -> list[dict]:
    """Recall of resolve_cluster on planted pairs, grouped by token distance.

    For every cluster the earliest mention is the query; each later mention
    is one probe pair, at distance ``later.start - query.end``. A pair lands
    in the largest bucket lower bound not exceeding its distance.
    """
    buckets = sorted(buckets)
    hits: dict[int, list[int]] = {}
    for doc in docs:
        for cluster in doc.clusters:
            spans = sorted(cluster)
            if len(spans) < 2:
                continue
            found = resolve_cluster(doc, spans[0], resolver, vocab, cfg)
            for s in spans[1:]:
                dist = s.start - spans[0].end
                b = max((lo for lo in buckets if lo <= dist), default=buckets[0])
                hits.setdefault(b, []).append(int(s in found))
    rows = []
    for b in sorted(hits):
        h = hits[b]
        rows.append({"bucket": b, "pairs": len(h), "recall": sum(h) / len(h)})
    return rows


def probe_csv(rows: Sequence[dict]) -> str:
    return "bucket,pairs,recall\n" + "".join(
        f"{r['bucket']},{r['pairs']},{r['recall']:.6f}\n" for r in rows)
