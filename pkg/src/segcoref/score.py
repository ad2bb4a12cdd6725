"""MUC, B-cubed and CEAF coreference metrics with corpus-level micro aggregation.

A clustering is any iterable of mention collections; mentions only need
to be hashable. Each metric has a ``*_counts`` form returning
``(recall_num, recall_den, precision_num, precision_den)`` so documents can
be summed before dividing.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .ingest import Document


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "PRF":
        return cls(p, r, 2 * p * r / (p + r) if p + r else 0.0)

    @classmethod
    def from_counts(cls, r_num, r_den, p_num, p_den) -> "PRF":
        return cls.from_pr(p_num / p_den if p_den else 0.0, r_num / r_den if r_den else 0.0)


@dataclass(frozen=True)
class ScoreReport:
    muc: PRF
    b3: PRF
    ceaf: PRF

    @property
    def avg_f1(self) -> float:
        return (self.muc.f1 + self.b3.f1 + self.ceaf.f1) / 3


def _sets(clusters) -> list[frozenset]:
    return [frozenset(c) for c in clusters if c]


def _mention_map(clusters: list[frozenset]) -> dict:
    return {m: c for c in clusters for m in c}


def _muc_side(key: list[frozenset], response: list[frozenset]) -> tuple[int, int]:
    owner = {m: i for i, c in enumerate(response) for m in c}
    num = den = 0
    for k in key:
        # mentions absent from the response are each a partition of their own
        parts = {owner.get(m, ("missing", m)) for m in k}
        num += len(k) - len(parts)
        den += len(k) - 1
    return num, den


def muc_counts(key, response):
    key, response = _sets(key), _sets(response)
    r_num, r_den = _muc_side(key, response)
    p_num, p_den = _muc_side(response, key)
    return r_num, r_den, p_num, p_den


def muc(key, response) -> PRF:
    """Link-based MUC: each cluster of n mentions holds n - 1 links."""
    return PRF.from_counts(*muc_counts(key, response))


def _b3_side(key: list[frozenset], response_map: dict) -> tuple[float, int]:
    num = 0.0
    den = 0
    for k in key:
        for m in k:
            r = response_map.get(m)
            if r is not None:
                num += len(k & r) / len(k)
            den += 1
    return num, den


def b_cubed_counts(key, response):
    key, response = _sets(key), _sets(response)
    r_num, r_den = _b3_side(key, _mention_map(response))
    p_num, p_den = _b3_side(response, _mention_map(key))
    return r_num, r_den, p_num, p_den


def b_cubed(key, response) -> PRF:
    return PRF.from_counts(*b_cubed_counts(key, response))


def phi3(k: frozenset, r: frozenset) -> float:
    return float(len(k & r))


def phi4(k: frozenset, r: frozenset) -> float:
    return 2.0 * len(k & r) / (len(k) + len(r))


SIMILARITIES = {"phi3": phi3, "phi4": phi4}


def hungarian(weights) -> list[tuple[int, int]]:
    """Row/column pairs of a maximum-total-weight one-to-one assignment, sorted by row."""
    w = np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        return []
    if not np.all(np.isfinite(w)):
        raise ValueError("assignment weights must be finite")
    rows, cols = linear_sum_assignment(w, maximize=True)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def ceaf_counts(key, response, phi: str = "phi4"):
    key, response = _sets(key), _sets(response)
    sim = SIMILARITIES[phi]
    best = 0.0
    if key and response:
        w = np.array([[sim(k, r) for r in response] for k in key])
        best = float(sum(w[i, j] for i, j in hungarian(w)))
    return (best, sum(sim(k, k) for k in key), best, sum(sim(r, r) for r in response))


def ceaf(key, response, phi: str = "phi4") -> PRF:
    """CEAF with an optimal one-to-one cluster alignment; ``phi`` is ``phi3`` or ``phi4``."""
    return PRF.from_counts(*ceaf_counts(key, response, phi))


def _without_singletons(clusters):
    return [c for c in clusters if len(c) > 1]


def report(key_docs: Sequence[Document], response_docs: Sequence[Document],
           phi: str = "phi4", keep_singletons: bool = False) -> ScoreReport:
    """Corpus-level scores; numerators and denominators are summed over documents.

    Singleton clusters are dropped from both sides unless ``keep_singletons``.
    """
    keys = {d.id: d for d in key_docs}
    responses = {d.id: d for d in response_docs}
    if keys.keys() != responses.keys():
        missing = sorted(keys.keys() ^ responses.keys())
        raise KeyError(f"unmatched document ids: {', '.join(missing)}")
    totals = {name: np.zeros(4) for name in ("muc", "b3", "ceaf")}
    for doc_id in sorted(keys):
        k, r = keys[doc_id].clusters, responses[doc_id].clusters
        if not keep_singletons:
            k, r = _without_singletons(k), _without_singletons(r)
        totals["muc"] += muc_counts(k, r)
        totals["b3"] += b_cubed_counts(k, r)
        totals["ceaf"] += ceaf_counts(k, r, phi)
    return ScoreReport(*(PRF.from_counts(*totals[n]) for n in ("muc", "b3", "ceaf")))


def mention_prf(key_docs: Iterable[Document], response_docs: Iterable[Document]) -> PRF:
    """Mention detection precision/recall; a debugging statistic only."""
    responses = {d.id: d.mentions for d in response_docs}
    tp = gold = pred = 0
    for d in key_docs:
        g, p = d.mentions, responses.get(d.id, set())
        tp += len(g & p)
        gold += len(g)
        pred += len(p)
    return PRF.from_counts(tp, gold, tp, pred)


def _pct(x: float) -> str:
    return f"{100 * x:.1f}"


def format_markdown(rows: dict[str, ScoreReport]) -> str:
    """Table with B3, MUC and CEAF precision/recall/F1 columns and the averaged F1."""
    out = io.StringIO()
    out.write("| | B³ P | B³ R | B³ F1 | MUC P | MUC R | MUC F1 | CEAF P | CEAF R | CEAF F1 | Avg. F1 |\n")
    out.write("|---" * 11 + "|\n")
    for name, rep in rows.items():
        cells = [name]
        for prf in (rep.b3, rep.muc, rep.ceaf):
            cells += [_pct(prf.precision), _pct(prf.recall), _pct(prf.f1)]
        cells.append(_pct(rep.avg_f1))
        out.write("| " + " | ".join(cells) + " |\n")
    return out.getvalue()


def format_csv(rows: dict[str, ScoreReport]) -> str:
    out = io.StringIO()
    out.write("system,metric,precision,recall,f1\n")
    for name, rep in rows.items():
        for metric, prf in (("b3", rep.b3), ("muc", rep.muc), ("ceaf", rep.ceaf)):
            out.write(f"{name},{metric},{prf.precision:.6f},{prf.recall:.6f},{prf.f1:.6f}\n")
        out.write(f"{name},avg,,,{rep.avg_f1:.6f}\n")
    return out.getvalue()
