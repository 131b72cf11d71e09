"""Parameter construction and the batched NAML forward pass."""

import numpy as np

from .config import TrainConfig
from .errors import DimensionError
from .news_encoder import encode_news
from .tensor import Tensor, embedding_gather, logsumexp, matmul, no_grad, reshape
from .text import PAD
from .user_encoder import encode_user

INIT_SCHEME = "embeddings: uniform(-0.1, 0.1), PAD row zero; projections and queries: glorot-uniform; biases: zero"


def glorot(rng, fan_out, fan_in, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape if shape is not None else (fan_out, fan_in))


def init_params(cfg, vocab_size, n_categories, n_subcategories, seed=None, word_embedding=None):
    """Fresh parameter mapping name -> Tensor for the given configuration.

    ``word_embedding`` (optional, [vocab_size, word_dim]) replaces the random
    word table, e.g. with pretrained vectors.
    """
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    dtype = np.dtype(cfg.dtype)
    nf, q, width = cfg.n_filters, cfg.query_dim, cfg.cnn_window
    raw = {}
    if word_embedding is None:
        table = rng.uniform(-0.1, 0.1, size=(vocab_size, cfg.word_dim))
    else:
        table = np.array(word_embedding.data if isinstance(word_embedding, Tensor) else word_embedding)
        if table.shape != (vocab_size, cfg.word_dim):
            raise DimensionError(f"word embedding {table.shape} vs ({vocab_size}, {cfg.word_dim})")
    table[PAD] = 0.0
    raw["word_embedding"] = table
    for view in ("title", "body"):
        raw[f"{view}.cnn.kernel"] = glorot(rng, nf, width * cfg.word_dim)
        raw[f"{view}.cnn.bias"] = np.zeros(nf)
        raw.update(_attention(rng, f"{view}.att", nf, q))
    raw["category.embedding"] = rng.uniform(-0.1, 0.1, size=(n_categories, cfg.cat_dim))
    raw["subcategory.embedding"] = rng.uniform(-0.1, 0.1, size=(n_subcategories, cfg.cat_dim))
    for view in ("category", "subcategory"):
        raw[f"{view}.dense.w"] = glorot(rng, cfg.dense_dim, cfg.cat_dim)
        raw[f"{view}.dense.b"] = np.zeros(cfg.dense_dim)
    raw.update(_attention(rng, "view.att", nf, q))
    raw.update(_attention(rng, "user.att", nf, q))
    return {name: Tensor(value.astype(dtype), requires_grad=True, name=name) for name, value in raw.items()}


def _attention(rng, prefix, dim, query_dim):
    return {
        f"{prefix}.proj_w": glorot(rng, query_dim, dim),
        f"{prefix}.proj_b": np.zeros(query_dim),
        f"{prefix}.query": glorot(rng, 1, query_dim, shape=(query_dim,)),
    }


def score(u, r):
    """Inner-product click score u . r (NumPy or Tensor data)."""
    u = np.asarray(u.data if isinstance(u, Tensor) else u)
    r = np.asarray(r.data if isinstance(r, Tensor) else r)
    if u.shape[-1] != r.shape[-1]:
        raise DimensionError(f"score: user dim {u.shape[-1]} vs news dim {r.shape[-1]}")
    return float(u @ r) if u.ndim == 1 and r.ndim == 1 else u @ r


class NAML:
    """Parameters plus configuration; the forward pass is functional over ``params``."""

    def __init__(self, cfg, params):
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg, vocab_size, n_categories, n_subcategories, word_embedding=None):
        return cls(cfg, init_params(cfg, vocab_size, n_categories, n_subcategories, word_embedding=word_embedding))

    @property
    def dtype(self):
        return np.dtype(self.cfg.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def encode_news(self, batch, training=False, rng=None, trace=False):
        return encode_news(batch, self.params, self.cfg, training=training, rng=rng, trace=trace)

    def encode_users(self, news_vectors, history_rows, history_len):
        """User vectors from an encoded news table [U, N_f] and history row indices [B, N_max]."""
        history = embedding_gather(news_vectors, history_rows)
        return encode_user(history, history_len, self.params, self.cfg)

    def scores(self, news_vectors, history_rows, history_len, candidate_rows):
        """Click scores [B, C] for candidate row indices [B, C]."""
        user = self.encode_users(news_vectors, history_rows, history_len)
        cands = embedding_gather(news_vectors, candidate_rows)
        u = user.u
        out = matmul(cands, reshape(u, u.shape + (1,)))
        return reshape(out, candidate_rows.shape)

    def batch_loss(self, news, history_rows, history_len, candidate_rows, training=False, rng=None, reduction="mean"):
        """Negative log-likelihood of the positive in column 0 of each candidate row.

        ``news`` is the :class:`NewsBatch` that row indices refer to.
        """
        vecs = self.encode_news(news, training=training, rng=rng).r
        s = self.scores(vecs, history_rows, history_len, candidate_rows)
        nll = logsumexp(s, axis=-1) - s[:, 0]
        return nll.sum() if reduction == "sum" else nll.mean()

    def encode_all(self, store, batch_size=512):
        """Eval-mode vectors [len(store), N_f] for every news in a store."""
        out = np.empty((len(store), self.cfg.n_filters), dtype=self.dtype)
        with no_grad():
            for start in range(0, len(store), batch_size):
                rows = np.arange(start, min(start + batch_size, len(store)))
                out[rows] = self.encode_news(store.batch(rows)).r.data
        return out


__all__ = ["INIT_SCHEME", "NAML", "TrainConfig", "init_params", "score"]
