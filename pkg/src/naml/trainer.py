"""Negative-sampling training: sample construction, (K+1)-way loss, Adam, the epoch loop."""

import csv
import logging
import math
import os
import queue
import threading
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .data import Impression
from .errors import ConfigError, DataError, NumericalError
from .metrics import evaluate
from .model import INIT_SCHEME, NAML
from .tensor import backward
from .text import PAD

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "train_loss", "val_auc", "val_mrr", "val_ndcg5", "val_ndcg10"]


@dataclass
class TrainSample:
    history: list
    positive: str
    negatives: list
    impression_id: str = ""
    user_id: str = ""


class SampleList(list):
    """List of TrainSample plus the count of impressions that had no negative."""

    skipped = 0


def build_samples(impressions, neg_ratio, rng):
    """One sample per clicked candidate, with ``neg_ratio`` negatives from the
    same impression (drawn with replacement only when there are too few)."""
    if neg_ratio < 1:
        raise ConfigError("neg_ratio must be >= 1")
    out = SampleList()
    for imp in impressions:
        pos, neg = imp.positives, imp.negatives
        if not pos:
            continue
        if not neg:
            out.skipped += 1
            continue
        for p in pos:
            idx = rng.choice(len(neg), size=neg_ratio, replace=len(neg) < neg_ratio)
            out.append(TrainSample(list(imp.history), p, [neg[i] for i in idx], imp.impression_id, imp.user_id))
    return out


def sample_loss(pos_score, neg_scores):
    """Posterior probability of the positive among K+1 candidates and its NLL."""
    s = np.concatenate([[pos_score], np.asarray(neg_scores, dtype=np.float64)])
    if not np.all(np.isfinite(s)):
        raise NumericalError("non-finite click score")
    m = s.max()
    log_norm = m + math.log(np.exp(s - m).sum())
    log_p = s[0] - log_norm
    return math.exp(log_p), -log_p


def adam_step(params, grads, state, lr, t, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update in place. ``state`` maps name -> (m, v)."""
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        p = params[name]
        m, v = state.setdefault(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        if m.shape != p.data.shape or g.shape != p.data.shape:
            raise ValueError(f"adam: shape mismatch for {name}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.data.dtype, copy=False)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, frozen=(), frozen_rows=None):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.frozen = set(frozen)
        self.frozen_rows = frozen_rows or {}
        self.state = {}
        self.t = 0

    def step(self):
        self.t += 1
        grads = {}
        for name, p in self.params.items():
            if name in self.frozen or p.grad is None:
                continue
            g = p.grad
            rows = self.frozen_rows.get(name)
            if rows is not None:
                g = g.copy()
                g[rows] = 0
            grads[name] = g
        adam_step(self.params, grads, self.state, self.lr, self.t, self.beta1, self.beta2, self.eps)


@dataclass
class TrainResult:
    model: NAML
    log: list = field(default_factory=list)
    best_epoch: int = 0
    checkpoint_path: str = None
    n_train: int = 0
    n_val: int = 0
    skipped_impressions: int = 0


def _sample_rows(store, samples, n_max):
    hist = np.zeros((len(samples), n_max), dtype=np.int64)
    hist_len = np.zeros(len(samples), dtype=np.int64)
    cands = []
    for i, s in enumerate(samples):
        rows = store.rows(s.history[-n_max:])
        hist[i, : len(rows)] = rows
        hist_len[i] = len(rows)
        cands.append(store.rows([s.positive] + s.negatives))
    return hist, hist_len, np.array(cands, dtype=np.int64).reshape(len(samples), -1)


def _assemble(store, hist, hist_len, cands, idx):
    """Restrict a mini-batch to the distinct news it touches and remap rows."""
    h, hl, c = hist[idx], hist_len[idx], cands[idx]
    valid = np.arange(h.shape[1])[None, :] < hl[:, None]
    unique = np.unique(np.concatenate([h[valid], c.reshape(-1)]))
    h_local = np.where(valid, np.searchsorted(unique, h), 0)
    c_local = np.searchsorted(unique, c)
    return store.batch(unique), h_local, hl, c_local


def _prefetch(make, indices, size=2):
    """Yield ``make(i)`` for each i, built one step ahead on a worker thread."""
    q = queue.Queue(maxsize=size)
    done = object()

    def worker():
        try:
            for i in indices:
                q.put(make(i))
        except BaseException as exc:  # surfaced in the consumer
            q.put(exc)
        q.put(done)

    threading.Thread(target=worker, daemon=True).start()
    while True:
        item = q.get()
        if item is done:
            return
        if isinstance(item, BaseException):
            raise item
        yield item


def _first_nonfinite(params):
    for name in sorted(params):
        p = params[name]
        if not np.all(np.isfinite(p.data)):
            return f"{name} (values)"
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            return f"{name} (gradient)"
    return None


def samples_as_impressions(samples):
    return [
        Impression(f"{s.impression_id}#{i}", s.user_id, s.history, [s.positive] + list(s.negatives),
                   [1] + [0] * len(s.negatives))
        for i, s in enumerate(samples)
    ]


def train(store, impressions, cfg, vocab, categories, word_embedding=None, out_dir=None, progress=None):
    """Train NAML with negative sampling and keep the best-validation-AUC parameters.

    Validation uses ``cfg.val_fraction`` of the training samples, each scored
    as a (K+1)-candidate impression. When ``out_dir`` is given, the best
    checkpoint and a per-epoch ``metrics.csv`` are written there.
    """
    if not impressions:
        raise ConfigError("no training impressions")
    rng = np.random.default_rng(cfg.seed)
    samples = build_samples(impressions, cfg.neg_ratio, rng)
    if len(samples) < 2:
        raise DataError("need at least two training samples (clicked news with a non-clicked neighbour)")
    if samples.skipped:
        logger.warning("skipped %d impressions without non-clicked candidates", samples.skipped)
    perm = rng.permutation(len(samples))
    n_val = max(1, int(round(cfg.val_fraction * len(samples))))
    val = [samples[i] for i in perm[:n_val]]
    trn = [samples[i] for i in perm[n_val:]]
    val_imps = samples_as_impressions(val)

    model = NAML.create(cfg, len(vocab), categories.n_categories, categories.n_subcategories, word_embedding)
    frozen = {"word_embedding"} if cfg.freeze_embeddings else set()
    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, frozen=frozen,
               frozen_rows={"word_embedding": [PAD]})
    drop_rng = np.random.default_rng([cfg.seed, 1])
    hist, hist_len, cands = _sample_rows(store, trn, cfg.max_history)
    _sample_rows(store, val, cfg.max_history)
    store.arrays  # built here so the prefetch thread only reads

    result = TrainResult(model, n_train=len(trn), n_val=len(val), skipped_impressions=samples.skipped)
    best_auc, best_state = -math.inf, None
    ckpt_path = os.path.join(out_dir, "model.ckpt") if out_dir else None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(trn))
        batches = [order[i:i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        total, count = 0.0, 0
        make = lambda idx: _assemble(store, hist, hist_len, cands, idx)  # noqa: E731
        for step, (news, h, hl, c) in enumerate(_prefetch(make, batches), 1):
            try:
                loss = model.batch_loss(news, h, hl, c, training=True, rng=drop_rng)
            except NumericalError as exc:
                culprit = _first_nonfinite(model.params) or "activation"
                raise NumericalError(f"epoch {epoch} step {step}: {exc}; first non-finite tensor: {culprit}") from exc
            model.zero_grad()
            backward(loss)
            culprit = _first_nonfinite(model.params)
            if culprit:
                raise NumericalError(f"epoch {epoch} step {step}: first non-finite tensor: {culprit}")
            opt.step()
            total += float(loss.data) * len(h)
            count += len(h)
            if progress:
                progress(epoch, step, len(batches), float(loss.data))
        metrics = evaluate(model, store, val_imps)
        row = {
            "epoch": epoch,
            "train_loss": total / count,
            "val_auc": metrics.auc,
            "val_mrr": metrics.mrr,
            "val_ndcg5": metrics.ndcg5,
            "val_ndcg10": metrics.ndcg10,
        }
        result.log.append(row)
        logger.info("epoch %d loss %.4f val_auc %.4f", epoch, row["train_loss"], metrics.auc)
        if best_state is None or metrics.auc > best_auc:
            best_auc = metrics.auc
            best_state = {k: p.data.copy() for k, p in model.params.items()}
            result.best_epoch = epoch
            if ckpt_path:
                save_checkpoint(ckpt_path, model.params, cfg, vocab.digest(), categories,
                                meta={"best_epoch": epoch, "init_scheme": INIT_SCHEME})
                result.checkpoint_path = ckpt_path
        if out_dir:
            write_metrics_csv(result.log, os.path.join(out_dir, "metrics.csv"))

    for k, arr in best_state.items():
        model.params[k].data[...] = arr
    return result


def write_metrics_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.6f}" if isinstance(r[k], float) else r[k]) for k in METRIC_COLUMNS})
