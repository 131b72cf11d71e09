import sys

import numpy as np
import pytest

from naml.config import TrainConfig
from naml.model import NAML, init_params
from naml.text import NewsBatch, NewsStore

MICRO = dict(word_dim=8, cat_dim=5, n_filters=6, dense_dim=6, query_dim=7, max_title_len=4,
             max_body_len=6, max_history=3, neg_ratio=2, dropout=0.0, dtype="float64", seed=0)
MICRO_VOCAB, MICRO_CATS, MICRO_SUBCATS = 20, 4, 6


def micro_config(**changes):
    return TrainConfig(**{**MICRO, **changes})


def random_params(cfg, seed, scale=0.5):
    """Micro-model parameters drawn from N(0, scale^2), PAD row zero.

    Larger than the training init so gradients are well above the
    finite-difference round-off floor."""
    params = init_params(cfg, MICRO_VOCAB, MICRO_CATS, MICRO_SUBCATS, seed=seed)
    rng = np.random.default_rng(seed + 1000)
    for name, p in params.items():
        p.data[...] = rng.normal(0, scale, size=p.shape)
    params["word_embedding"].data[0] = 0.0
    return params


def random_news_batch(rng, n, cfg, min_len=0):
    t_len = rng.integers(min_len, cfg.max_title_len + 1, size=n)
    b_len = rng.integers(min_len, cfg.max_body_len + 1, size=n)
    title = np.where(np.arange(cfg.max_title_len) < t_len[:, None],
                     rng.integers(1, MICRO_VOCAB, size=(n, cfg.max_title_len)), 0)
    body = np.where(np.arange(cfg.max_body_len) < b_len[:, None],
                    rng.integers(1, MICRO_VOCAB, size=(n, cfg.max_body_len)), 0)
    return NewsBatch(title, t_len, body, b_len, rng.integers(0, MICRO_CATS, n), rng.integers(0, MICRO_SUBCATS, n))


def micro_problem(seed=0, n_samples=3, n_news=8, **changes):
    """A micro-config model plus one training batch (positive in column 0)."""
    cfg = micro_config(**changes)
    rng = np.random.default_rng(seed)
    model = NAML(cfg, random_params(cfg, seed))
    news = random_news_batch(rng, n_news, cfg, min_len=1)
    hist = rng.integers(0, n_news, size=(n_samples, cfg.max_history))
    hist_len = rng.integers(1, cfg.max_history + 1, size=n_samples)
    cands = rng.integers(0, n_news, size=(n_samples, cfg.neg_ratio + 1))
    return model, news, hist, hist_len, cands


@pytest.fixture
def micro():
    return micro_problem()


def oracle_model(n_categories, max_history=5):
    """Category-only model whose news vector is the one-hot of its category.

    A user whose history is all category c gets u = onehot(c), so candidates
    score 1 when their category is c and 0 otherwise.
    """
    cfg = TrainConfig(word_dim=4, cat_dim=n_categories, n_filters=n_categories, dense_dim=n_categories,
                      query_dim=3, views=("category",), max_title_len=4, max_body_len=4,
                      max_history=max_history, dropout=0.0, dtype="float64", seed=0)
    params = init_params(cfg, 10, n_categories, 2)
    params["category.embedding"].data[...] = np.eye(n_categories)
    params["category.dense.w"].data[...] = np.eye(n_categories)
    params["category.dense.b"].data[...] = 0.0
    return NAML(cfg, params)


TINY_SPEC = dict(n_topics=5, n_users=20, n_news=120, vocab_size=200, title_len_range=(3, 6),
                 body_len_range=(5, 10), history_len_range=(2, 6), n_impressions_per_user=5,
                 candidates_per_impression=10, seed=3)
TINY_TRAIN = dict(word_dim=8, cat_dim=4, n_filters=8, dense_dim=8, query_dim=4, epochs=2, batch_size=16,
                  max_title_len=8, max_body_len=12, max_history=6, seed=5)


@pytest.fixture(scope="session")
def tiny_data():
    from naml.datagen import SyntheticSpec, generate

    return generate(SyntheticSpec(**TINY_SPEC))


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory, tiny_data):
    out = tmp_path_factory.mktemp("tiny")
    tiny_data.write(out)
    return out


def tiny_inputs(data, **changes):
    from naml.text import CategoryIndex, build_vocab, news_corpus

    cfg = TrainConfig(**{**TINY_TRAIN, **changes})
    vocab = build_vocab(news_corpus(data.news))
    cats = CategoryIndex.build(data.news)
    store = NewsStore.from_records(data.news, vocab, cats, cfg.max_title_len, cfg.max_body_len)
    return cfg, vocab, cats, store


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
