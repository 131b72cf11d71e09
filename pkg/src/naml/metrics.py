"""Per-impression ranking metrics (AUC, MRR, nDCG@k) and model evaluation.

Conventions: AUC counts tied (positive, negative) pairs as 1/2. Ranks are
1-based after a stable descending sort, so tied scores keep input order.
MRR averages reciprocal ranks over all positives of an impression unless
``first_only`` is set. AUC and MRR are exact rationals rounded once. nDCG
uses binary gains and a 1/log2(rank+1) discount.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .tensor import Tensor, no_grad


class SingleClassImpression(ValueError):
    """Impression without both a positive and a negative; excluded from averages."""


@dataclass
class ImpressionScores:
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError("scores and labels must be 1-D and the same length")

    @property
    def usable(self):
        n_pos = int(self.labels.sum())
        return len(self.labels) >= 2 and 0 < n_pos < len(self.labels)


def _arrays(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return s, y


def ranking(scores):
    """Candidate indices best-first; ties keep input order."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def _average_ranks(s):
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    ranks = np.empty(len(s))
    # tie groups get the mean of their 1-based ascending positions
    _, start, counts = np.unique(sorted_s, return_index=True, return_counts=True)
    for st, c in zip(start, counts):
        ranks[order[st:st + c]] = st + (c + 1) / 2.0
    return ranks


def auc(scores, labels):
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassImpression("AUC needs at least one positive and one negative")
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def mrr(scores, labels, first_only=False):
    s, y = _arrays(scores, labels)
    if y.sum() == 0:
        raise SingleClassImpression("MRR needs at least one positive")
    ranked = y[ranking(s)]
    hit_ranks = np.flatnonzero(ranked) + 1
    if first_only:
        return 1.0 / hit_ranks[0]
    # exact rational mean, rounded once
    return float(sum(Fraction(1, int(r)) for r in hit_ranks) / len(hit_ranks))


def _discounts(n):
    return 1.0 / np.log2(np.arange(2, n + 2))


def ndcg_at(scores, labels, k):
    if k < 1:
        raise ValueError("k must be >= 1")
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise SingleClassImpression("nDCG needs at least one positive")
    top = y[ranking(s)][:k]
    disc = _discounts(len(top))
    dcg = 0.0
    for gain, d in zip(top, disc):
        if gain:
            dcg += d
    idcg = 0.0
    for d in disc[: min(n_pos, k)]:
        idcg += d
    return dcg / idcg


@dataclass
class RankingMetrics:
    auc: float
    mrr: float
    ndcg5: float
    ndcg10: float
    n_impressions_used: int
    n_impressions_skipped: int
    per_impression: list = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    def as_dict(self, per_impression=False):
        d = {
            "auc": self.auc,
            "mrr": self.mrr,
            "ndcg5": self.ndcg5,
            "ndcg10": self.ndcg10,
            "n_impressions_used": self.n_impressions_used,
            "n_impressions_skipped": self.n_impressions_skipped,
        }
        if self.diagnostics:
            d["diagnostics"] = dict(self.diagnostics)
        if per_impression:
            d["per_impression"] = list(self.per_impression)
        return d


def impression_metrics(scores, labels, first_only=False):
    return {
        "auc": auc(scores, labels),
        "mrr": mrr(scores, labels, first_only=first_only),
        "ndcg5": ndcg_at(scores, labels, 5),
        "ndcg10": ndcg_at(scores, labels, 10),
    }


def average_metrics(impressions, ids=None, first_only=False):
    """Equal-weight average over impressions given as (scores, labels) pairs."""
    rows, skipped = [], 0
    for i, (scores, labels) in enumerate(impressions):
        try:
            m = impression_metrics(scores, labels, first_only=first_only)
        except SingleClassImpression:
            skipped += 1
            continue
        m["impression_id"] = ids[i] if ids is not None else i
        rows.append(m)
    if rows:
        avg = {k: float(np.mean([r[k] for r in rows])) for k in ("auc", "mrr", "ndcg5", "ndcg10")}
    else:
        avg = {k: float("nan") for k in ("auc", "mrr", "ndcg5", "ndcg10")}
    return RankingMetrics(n_impressions_used=len(rows), n_impressions_skipped=skipped, per_impression=rows, **avg)


def score_impressions(model, store, impressions, batch_size=256):
    """Model scores for every candidate of every impression (eval mode).

    News vectors are computed once per distinct id; unknown ids are encoded
    as UNK placeholders and counted in ``store.unknown_ids``.
    """
    n_max = model.cfg.max_history
    hist_rows, hist_len, cand_rows = [], [], []
    for imp in impressions:
        hist = imp.history[-n_max:]
        rows = store.rows(hist)
        hist_len.append(len(rows))
        hist_rows.append(np.pad(rows, (0, n_max - len(rows))))
        cand_rows.append(store.rows(imp.candidates))
    vectors = model.encode_all(store)
    hist_rows = np.array(hist_rows, dtype=np.int64).reshape(len(impressions), n_max)
    hist_len = np.array(hist_len, dtype=np.int64)
    table = Tensor(vectors)
    users = np.empty((len(impressions), vectors.shape[1]), dtype=vectors.dtype)
    with no_grad():
        for start in range(0, len(impressions), batch_size):
            sl = slice(start, start + batch_size)
            users[sl] = model.encode_users(table, hist_rows[sl], hist_len[sl]).u.data
    return [vectors[c] @ u for c, u in zip(cand_rows, users)]


def evaluate(model, store, impressions, first_only=False):
    """Average AUC/MRR/nDCG@5/nDCG@10 of ``model`` over ``impressions``."""
    before = len(store.unknown_ids)
    all_scores = score_impressions(model, store, impressions)
    result = average_metrics(
        ((s, imp.labels) for s, imp in zip(all_scores, impressions)),
        ids=[imp.impression_id for imp in impressions],
        first_only=first_only,
    )
    result.diagnostics["unknown_news"] = len(store.unknown_ids) - before
    return result


def format_table(metrics):
    header = f"{'AUC':>8} {'MRR':>8} {'nDCG@5':>8} {'nDCG@10':>8}"
    row = f"{metrics.auc:8.4f} {metrics.mrr:8.4f} {metrics.ndcg5:8.4f} {metrics.ndcg10:8.4f}"
    return f"{header}\n{row}"
