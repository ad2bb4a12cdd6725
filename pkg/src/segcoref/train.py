"""Query sampling, target construction, the training loop, and synthetic corpora."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import net
from .ingest import Document, Span, Token
from .spanmat import SpanMatrix, encode_spans
from .window import Vocab, Window, pack_detector_query, pack_query, segment

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, model: str, detail: str = ""):
        self.step = step
        super().__init__(f"{model} training diverged at step {step}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_steps: int = 1000
    K: int = 10
    L: int = 243
    dim: int = 32
    heads: int = 4
    layers: int = 2
    ff: int = 64
    threshold: float = 0.5
    jobs: int = 1
    log_every: int = 100

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")

    @property
    def S(self) -> int:
        return self.K + self.L + 3

    def dims(self, vocab_size: int) -> net.Dims:
        return net.Dims(vocab_size, self.S, self.dim, self.heads, self.layers, self.ff, self.K, self.L)

    def dumps(self) -> str:
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in fields(self))

    @classmethod
    def loads(cls, text: str, **overrides) -> "TrainConfig":
        """Parse flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"config line {lineno}: unknown or malformed entry {line!r}")
            values[key] = val.strip()
        values.update({k: v for k, v in overrides.items() if v is not None})
        conv = {"int": int, "float": float}
        return cls(**{k: conv[types[k]](v) for k, v in values.items()})

    @classmethod
    def load(cls, path, **overrides) -> "TrainConfig":
        return cls.loads(Path(path).read_text(), **overrides)


class TrainTarget(NamedTuple):
    query: Span | None
    window: Window
    target: SpanMatrix
    skipped: int


class TrainResult(NamedTuple):
    resolver: net.Model
    detector: net.Model
    trace: dict  # model name -> list of (step, loss)
    vocab: Vocab


def sample_query(doc: Document, rng: np.random.Generator) -> tuple[Span, frozenset]:
    """A uniformly random cluster, then a uniformly random mention inside it."""
    if not doc.clusters:
        raise ValueError(f"document {doc.id} has no clusters to sample from")
    cluster = doc.clusters[rng.integers(len(doc.clusters))]
    spans = sorted(cluster)
    return spans[rng.integers(len(spans))], cluster


def make_targets(doc: Document, query: Span | None, windows: Sequence[Window],
                 K: int = 10, L: int = 243) -> list[TrainTarget]:
    """Resolver targets mark the query's cluster; detector targets (query None) mark every mention."""
    spans = doc.mentions if query is None else doc.cluster_of(query)
    out = []
    for w in windows:
        m, skipped = encode_spans(spans, w.offset, w.length, K, L)
        out.append(TrainTarget(query, w, m, skipped))
    return out


def _adam_step(params: dict, grads: dict, state: dict, cfg: TrainConfig, t: int) -> None:
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        m, v = state.setdefault(k, (np.zeros_like(p), np.zeros_like(p)))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def _example(doc: Document, windows: list[Window], rng, vocab: Vocab, cfg: TrainConfig,
             detector: bool):
    window = windows[rng.integers(len(windows))]
    if detector:
        query = None
        pack = pack_detector_query(doc, window, vocab)
    else:
        query, _ = sample_query(doc, rng)
        pack = pack_query(doc, query, window, vocab, cfg.K)
    target = make_targets(doc, query, [window], cfg.K, cfg.L)[0].target
    return pack, target


def fit(model: net.Model, corpus: Sequence[Document], vocab: Vocab, cfg: TrainConfig,
        detector: bool, rng: np.random.Generator) -> list[tuple[int, float]]:
    """Train ``model`` in place; returns the per-step mean batch loss."""
    name = "detector" if detector else "resolver"
    docs = [d for d in corpus if d.tokens and (detector or d.clusters)]
    if not docs:
        raise ValueError(f"no usable documents to train the {name}")
    windows = {d.id: segment(d, cfg.L) for d in docs}
    params = model.params()  # same arrays as the model; updated in place
    state: dict = {}
    trace = []
    pool = ThreadPoolExecutor(cfg.jobs) if cfg.jobs > 1 else None
    try:
        for step in range(1, cfg.max_steps + 1):
            batch = []
            for _ in range(cfg.batch_size):
                doc = docs[rng.integers(len(docs))]
                batch.append(_example(doc, windows[doc.id], rng, vocab, cfg, detector))
            try:
                mapper = pool.map if pool else map
                with np.errstate(all="ignore"):  # non-finite values are caught explicitly
                    results = list(mapper(lambda ex: net.backward(ex[0], model, ex[1]), batch))
            except FloatingPointError as e:
                raise TrainingDiverged(step, name, str(e)) from None
            loss = sum(r[0] for r in results) / len(results)
            if not np.isfinite(loss):
                raise TrainingDiverged(step, name, "non-finite loss")
            grads = {k: sum(r[1][k] for r in results) / len(results) for k in params}
            _adam_step(params, grads, state, cfg, step)
            trace.append((step, float(loss)))
            if cfg.log_every and step % cfg.log_every == 0:
                log.info("%s step %d loss %.5f", name, step, loss)
    finally:
        if pool:
            pool.shutdown()
    return trace


def train(corpus: Sequence[Document], config: TrainConfig, vocab: Vocab | None = None) -> TrainResult:
    """Train the mention detector, then the resolver, as two disjoint parameter sets."""
    if not corpus:
        raise ValueError("empty corpus")
    vocab = vocab or Vocab.from_documents(corpus)
    dims = config.dims(len(vocab))
    detector = net.init_params(config.seed * 2 + 1, dims)
    resolver = net.init_params(config.seed * 2, dims)
    trace = {
        "detector": fit(detector, corpus, vocab, config, True,
                        np.random.default_rng([config.seed, 1])),
        "resolver": fit(resolver, corpus, vocab, config, False,
                        np.random.default_rng([config.seed, 2])),
    }
    return TrainResult(resolver, detector, trace, vocab)


def cell_accuracy(model: net.Model, corpus: Sequence[Document], vocab: Vocab,
                  cfg: TrainConfig, detector: bool = False) -> float:
    """Fraction of unmasked cells classified correctly, over every (query, window) pair."""
    right = total = 0
    for doc in corpus:
        windows = segment(doc, cfg.L)
        queries = [None] if detector else sorted(doc.mentions)
        for q in queries:
            for tt in make_targets(doc, q, windows, cfg.K, cfg.L):
                pack = (pack_detector_query(doc, tt.window, vocab) if detector
                        else pack_query(doc, q, tt.window, vocab, cfg.K))
                grid = net.forward(pack, model)
                pred = net.sigmoid(grid.logits) > cfg.threshold
                right += int(((pred == (tt.target.values > 0.5)) & grid.mask).sum())
                total += int(grid.mask.sum())
    return right / total if total else 1.0


def write_trace_csv(trace: Sequence[tuple[int, float]], path) -> None:
    Path(path).write_text("step,loss\n" + "".join(f"{s},{l:.10g}\n" for s, l in trace))


# -- synthetic corpora ---------------------------------------------------------

MENTION_PREFIX = {1: (), 2: ("the",), 3: ("the", "old")}


def _surface(sig: str, length: int) -> list[str]:
    return [*MENTION_PREFIX[length], sig]


def _assemble(doc_id, genre, words, spans_by_entity, rng):
    speakers = ("spk0", "spk1")
    tokens = []
    sent = 0
    left = int(rng.integers(8, 21))
    spk = speakers[int(rng.integers(2))]
    for i, w in enumerate(words):
        tokens.append(Token(w, i, sent, spk))
        left -= 1
        if left == 0:
            sent += 1
            left = int(rng.integers(8, 21))
            spk = speakers[int(rng.integers(2))]
    clusters = tuple(frozenset(s) for s in spans_by_entity if s)
    return Document(doc_id, genre, tuple(tokens), clusters)


def generate_synthetic(seed: int, n_docs: int, vocab_size: int = 50, doc_len: int = 60,
                       n_entities: int = 3, max_mentions: int = 4) -> list[Document]:
    """Documents with planted entities over a filler vocabulary.

    Each entity gets its own signature token ``e<k>`` and a fixed mention
    length of 1 to 3 tokens (``e<k>``, ``the e<k>``, ``the old e<k>``). It is
    mentioned 1 to ``max_mentions`` times; mentions never overlap and are
    separated by at least one filler token ``w<j>`` where room allows.
    """
    if doc_len < n_entities:
        raise ValueError("doc_len must be at least n_entities")
    rng = np.random.default_rng(seed)
    docs = []
    for d in range(n_docs):
        sigs = rng.choice(max(vocab_size, n_entities), size=n_entities, replace=False)
        lengths = rng.integers(1, 4, size=n_entities)
        counts = rng.integers(1, max_mentions + 1, size=n_entities)
        if int((counts * (lengths + 1)).sum()) > doc_len:
            lengths[:] = 1
            counts[:] = 1
        mentions = [e for e in range(n_entities) for _ in range(counts[e])]
        rng.shuffle(mentions)
        need = sum(int(lengths[e]) for e in mentions)
        gaps_min = 1 if need + len(mentions) <= doc_len else 0
        free = doc_len - need - gaps_min * len(mentions)
        # random composition of the free filler tokens into len(mentions) + 1 gaps
        cuts = np.sort(rng.integers(0, free + 1, size=len(mentions)))
        extra = np.diff(np.concatenate([[0], cuts, [free]]))
        words: list[str] = []
        spans: list[list[Span]] = [[] for _ in range(n_entities)]
        for k, e in enumerate(mentions):
            gap = int(extra[k]) + (gaps_min if k > 0 else 0)
            words += [f"w{j}" for j in rng.integers(vocab_size, size=gap)]
            start = len(words)
            words += _surface(f"e{sigs[e]}", int(lengths[e]))
            spans[e].append(Span(start, len(words) - 1))
        tail = doc_len - len(words)
        words += [f"w{j}" for j in rng.integers(vocab_size, size=tail)]
        docs.append(_assemble(f"synth/{seed}/{d:04d}", int(rng.integers(7)), words, spans, rng))
    return docs


def generate_probe(seed: int, distances: Sequence[int], doc_len: int = 400,
                   vocab_size: int = 50) -> list[Document]:
    """One document per distance, each holding a planted two-mention entity.

    Both mentions are single tokens; the first sits near the document
    start and the second at ``first + distance``.
    """
    rng = np.random.default_rng(seed)
    docs = []
    for d, dist in enumerate(distances):
        start = int(rng.integers(0, 5))
        second = start + dist
        if dist < 1 or second >= doc_len:
            raise ValueError(f"distance {dist} does not fit a {doc_len}-token document")
        words = [f"w{j}" for j in rng.integers(vocab_size, size=doc_len)]
        sig = f"e{int(rng.integers(vocab_size))}"
        words[start] = words[second] = sig
        docs.append(_assemble(f"probe/{seed}/{d:04d}", int(rng.integers(7)), words,
                              [[Span(start, start), Span(second, second)]], rng))
    return docs
