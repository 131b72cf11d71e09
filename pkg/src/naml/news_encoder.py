"""Multi-view news encoder: title, body, category and subcategory views fused
by view-level attention.

All functions are batched over a leading news axis and take the flat
parameter mapping produced by :func:`naml.model.init_params`.
"""

from dataclasses import dataclass

import numpy as np

from .config import VIEWS
from .errors import ConfigError
from .tensor import (Tensor, conv1d_same, dropout, embedding_gather, linear, masked_softmax, matmul, mul, relu,
                     reshape, stack, tanh, tsum)
from .text import NewsBatch, TokenizedNews


@dataclass
class NewsVector:
    """Encoded news; ``r`` is [N_f] for one news or [U, N_f] for a batch.

    ``trace`` (optional) holds NumPy copies of the attention weights and the
    contextual word vectors, keyed by ``title_alpha``, ``body_alpha``,
    ``title_context``, ``body_context``, ``view_alpha``, ``views``.
    """

    r: Tensor
    trace: dict = None


def weighted_sum(alpha, x):
    """sum_j alpha[..., j] * x[..., j, :], accumulated in position order so
    that zero-weight padding slots leave the result bit-identical."""
    return tsum(mul(reshape(alpha, alpha.shape + (1,)), x), axis=-2)


def additive_attention(x, mask, proj_w, proj_b, query, allow_empty=True):
    """Additive attention pooling over axis -2 of ``x``.

    score_i = query . tanh(proj_w x_i + proj_b); weights are a masked softmax
    of the scores. Returns ``(pooled, weights)``.
    """
    scores = matmul(tanh(linear(x, proj_w, proj_b)), query)
    alpha = masked_softmax(scores, mask, allow_empty=allow_empty)
    return weighted_sum(alpha, x), alpha


def mean_pool(x, mask):
    """Uniform weights over unmasked positions; replaces attention in ablations."""
    mask = np.broadcast_to(mask, x.shape[:-1]).astype(x.dtype)
    count = mask.sum(axis=-1, keepdims=True)
    weights = Tensor(mask / np.where(count > 0, count, 1), dtype=x.dtype)
    return weighted_sum(weights, x), weights


def length_mask(lengths, width):
    return np.arange(width)[None, :] < np.asarray(lengths)[:, None]


def _encode_text(prefix, ids, lengths, params, cfg, training, rng):
    ids = np.asarray(ids)
    single = ids.ndim == 1
    if single:
        ids, lengths = ids[None, :], np.array([lengths])
    emb = embedding_gather(params["word_embedding"], ids)
    emb = dropout(emb, cfg.dropout, training, rng)
    context = relu(conv1d(emb, params, prefix, cfg))
    context = dropout(context, cfg.dropout, training, rng)
    mask = length_mask(lengths, ids.shape[1])
    if cfg.word_attention:
        r, alpha = additive_attention(
            context, mask, params[f"{prefix}.att.proj_w"], params[f"{prefix}.att.proj_b"], params[f"{prefix}.att.query"]
        )
    else:
        r, alpha = mean_pool(context, mask)
    if single:
        return r[0], alpha[0], context[0]
    return r, alpha, context


def conv1d(x, params, prefix, cfg):
    return conv1d_same(x, params[f"{prefix}.cnn.kernel"], params[f"{prefix}.cnn.bias"], cfg.half_window)


def encode_title(title_ids, title_len, params, cfg, training=False, rng=None):
    """Title view. Returns ``(r_t, alpha_t)``; alpha is zero beyond ``title_len``."""
    r, alpha, _ = _encode_text("title", title_ids, title_len, params, cfg, training, rng)
    return r, alpha


def encode_body(body_ids, body_len, params, cfg, training=False, rng=None):
    """Body view, same structure as the title view with its own CNN and attention."""
    r, alpha, _ = _encode_text("body", body_ids, body_len, params, cfg, training, rng)
    return r, alpha


def encode_category(category_id, subcategory_id, params, cfg, training=False, rng=None):
    """``(ReLU(V_c e_c + v_c), ReLU(V_s e_sc + v_s))`` for category and subcategory ids."""
    rate = cfg.dropout if cfg.category_dropout else 0.0
    e_c = embedding_gather(params["category.embedding"], np.asarray(category_id))
    e_sc = embedding_gather(params["subcategory.embedding"], np.asarray(subcategory_id))
    r_c = relu(linear(dropout(e_c, rate, training, rng), params["category.dense.w"], params["category.dense.b"]))
    r_sc = relu(
        linear(dropout(e_sc, rate, training, rng), params["subcategory.dense.w"], params["subcategory.dense.b"])
    )
    return r_c, r_sc


def view_attention(view_vectors, params, cfg, active_views=None, view_mask=None):
    """Fuse per-view vectors with view-level attention.

    ``view_vectors`` maps view name to [..., N_f]. Only ``active_views``
    take part in the softmax. ``view_mask`` (optional, [..., n_active])
    additionally removes individual views per row.
    Returns ``(r, alpha)`` with alpha over the active views in order.
    """
    active = tuple(active_views if active_views is not None else cfg.views)
    if not active:
        raise ConfigError("view attention needs at least one active view")
    stacked = stack([view_vectors[v] for v in active], axis=-2)
    mask = np.ones(stacked.shape[:-1], dtype=bool) if view_mask is None else view_mask
    if cfg.view_attention:
        return additive_attention(
            stacked, mask, params["view.att.proj_w"], params["view.att.proj_b"], params["view.att.query"]
        )
    return mean_pool(stacked, mask)


def encode_news(news, params, cfg, training=False, rng=None, trace=False, active_views=None):
    """Unified news vectors for a :class:`NewsBatch` or a single :class:`TokenizedNews`."""
    single = isinstance(news, TokenizedNews)
    batch = NewsBatch.from_items([news]) if single else news
    active = tuple(active_views if active_views is not None else cfg.views)
    if not active:
        raise ConfigError("at least one view must be active")
    vectors, info = {}, {}
    if "title" in active:
        vectors["title"], info["title_alpha"], info["title_context"] = _encode_text(
            "title", batch.title_ids, batch.title_len, params, cfg, training, rng
        )
    if "body" in active:
        vectors["body"], info["body_alpha"], info["body_context"] = _encode_text(
            "body", batch.body_ids, batch.body_len, params, cfg, training, rng
        )
    if "category" in active or "subcategory" in active:
        r_c, r_sc = encode_category(batch.category, batch.subcategory, params, cfg, training, rng)
        vectors["category"], vectors["subcategory"] = r_c, r_sc
    view_mask = None
    if cfg.mask_empty_views:
        present = {"title": batch.title_len > 0, "body": batch.body_len > 0}
        view_mask = np.stack(
            [present.get(v, np.ones(len(batch), dtype=bool)) for v in active], axis=-1
        )
    r, view_alpha = view_attention(vectors, params, cfg, active, view_mask)
    out = None
    if trace:
        out = {k: v.data.copy() for k, v in info.items()}
        out["view_alpha"] = view_alpha.data.copy()
        out["views"] = list(active)
        if single:
            out = {k: (v[0] if isinstance(v, np.ndarray) else v) for k, v in out.items()}
    if single:
        r = r[0]
    return NewsVector(r, out)


__all__ = [
    "VIEWS",
    "NewsVector",
    "additive_attention",
    "encode_body",
    "encode_category",
    "encode_news",
    "encode_title",
    "mean_pool",
    "view_attention",
    "weighted_sum",
]
