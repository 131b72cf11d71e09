"""Synthetic news corpora and impression logs with a known click model.

Each topic owns a block of the vocabulary (word weights drawn from a
Dirichlet), a category and a few subcategories. A news item has a primary
topic; its title, body and category channels each follow that topic with
probability ``view_coherence`` and otherwise pick an independent topic, so
the informativeness of every view can be controlled.

Each user likes a few topics. The click probability of a (user, news) pair
is ``sigmoid((affinity - click_threshold) / noise_temperature)``, where
affinity is the click-weighted share of channels whose topic the user
likes. A temperature of 0 gives deterministic clicks.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timedelta

import numpy as np

from .data import Impression, write_behaviors
from .errors import ConfigError
from .text import write_news_jsonl

CHANNELS = ("title", "body", "category")


@dataclass(frozen=True)
class SyntheticSpec:
    n_topics: int = 20
    n_users: int = 200
    n_news: int = 2000
    vocab_size: int = 5000
    title_len_range: tuple = (6, 14)
    body_len_range: tuple = (20, 60)
    history_len_range: tuple = (5, 20)
    n_impressions_per_user: int = 15
    candidates_per_impression: int = 20
    liked_topics_range: tuple = (1, 2)
    subcategories_per_topic: int = 2
    w_title: float = 1.0
    w_body: float = 1.0
    w_cat: float = 1.0
    topic_word_concentration: float = 0.5
    topic_word_share: float = 0.8
    view_coherence: float = 1.0
    click_threshold: float = 0.5
    noise_temperature: float = 0.08
    seed: int = 42

    def __post_init__(self):
        for name in ("title_len_range", "body_len_range", "history_len_range", "liked_topics_range"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        self.validate()

    def validate(self):
        for name in ("n_topics", "n_users", "n_news", "vocab_size", "n_impressions_per_user",
                     "candidates_per_impression", "subcategories_per_topic"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("title_len_range", "body_len_range", "history_len_range", "liked_topics_range"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 <= low <= high")
        weights = (self.w_title, self.w_body, self.w_cat)
        if min(weights) < 0 or sum(weights) == 0:
            raise ConfigError("click weights must be nonnegative and not all zero")
        if self.candidates_per_impression > self.n_news:
            raise ConfigError("candidates_per_impression exceeds n_news")
        if self.liked_topics_range[1] > self.n_topics:
            raise ConfigError("cannot like more topics than exist")
        if self.vocab_size < self.n_topics:
            raise ConfigError("vocab_size must be at least n_topics")
        if not 0 <= self.view_coherence <= 1 or not 0 <= self.topic_word_share <= 1:
            raise ConfigError("view_coherence and topic_word_share must be probabilities")
        if self.noise_temperature < 0 or self.topic_word_concentration <= 0:
            raise ConfigError("noise_temperature must be >= 0 and topic_word_concentration > 0")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown synthetic spec keys: {unknown}")
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


@dataclass
class SyntheticData:
    news: list
    impressions: list
    ground_truth: dict

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "news": os.path.join(out_dir, "news.jsonl"),
            "behaviors": os.path.join(out_dir, "behaviors.jsonl"),
            "ground_truth": os.path.join(out_dir, "ground_truth.json"),
        }
        write_news_jsonl(self.news, paths["news"])
        write_behaviors(self.impressions, paths["behaviors"])
        with open(paths["ground_truth"], "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.ground_truth, fh, sort_keys=True, indent=1)
            fh.write("\n")
        return paths


def click_probability(affinity, threshold, temperature):
    affinity = np.asarray(affinity, dtype=np.float64)
    if temperature == 0:
        return np.where(affinity > threshold, 1.0, np.where(affinity < threshold, 0.0, 0.5))
    z = (affinity - threshold) / temperature
    return 1.0 / (1.0 + np.exp(-z))


def affinity(liked, channel_topics, weights):
    """Weighted share of channels whose topic is liked. ``liked`` is a bool
    vector over topics, ``channel_topics`` is [n, 3] (title, body, category)."""
    w = np.asarray(weights, dtype=np.float64)
    hits = liked[np.asarray(channel_topics)]
    return hits @ w / w.sum()


def _words(rng, topic_words, topic_probs, vocab_size, topic, n, share):
    from_topic = rng.random(n) < share
    out = np.where(
        from_topic,
        rng.choice(topic_words[topic], size=n, p=topic_probs[topic]),
        rng.integers(0, vocab_size, size=n),
    )
    return " ".join(f"w{int(i):05d}" for i in out)


def generate(spec):
    """Deterministic synthetic dataset for ``spec`` (see module docstring)."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, 0])
    T = spec.n_topics
    blocks = np.array_split(rng.permutation(spec.vocab_size), T)
    topic_probs = [rng.dirichlet(np.full(len(b), spec.topic_word_concentration)) for b in blocks]
    categories = [f"cat{t:02d}" for t in range(T)]
    subcats = [[f"cat{t:02d}_sub{k}" for k in range(spec.subcategories_per_topic)] for t in range(T)]

    primary = rng.integers(0, T, size=spec.n_news)
    channel_topics = np.empty((spec.n_news, 3), dtype=np.int64)
    for c in range(3):
        follow = rng.random(spec.n_news) < spec.view_coherence
        channel_topics[:, c] = np.where(follow, primary, rng.integers(0, T, size=spec.n_news))

    news, news_truth = [], {}
    for i in range(spec.n_news):
        nid = f"N{i:05d}"
        t_title, t_body, t_cat = (int(x) for x in channel_topics[i])
        tlen = int(rng.integers(spec.title_len_range[0], spec.title_len_range[1] + 1))
        blen = int(rng.integers(spec.body_len_range[0], spec.body_len_range[1] + 1))
        news.append({
            "news_id": nid,
            "title": _words(rng, blocks, topic_probs, spec.vocab_size, t_title, tlen, spec.topic_word_share),
            "body": _words(rng, blocks, topic_probs, spec.vocab_size, t_body, blen, spec.topic_word_share),
            "category": categories[t_cat],
            "subcategory": subcats[t_cat][int(rng.integers(0, spec.subcategories_per_topic))],
        })
        news_truth[nid] = {"topic": int(primary[i]), "title_topic": t_title, "body_topic": t_body,
                           "category_topic": t_cat}

    weights = (spec.w_title, spec.w_body, spec.w_cat)
    base = datetime(2024, 1, 1)
    impressions, user_truth = [], {}
    imp_counter = 0
    for u in range(spec.n_users):
        uid = f"U{u:04d}"
        # per-user stream: users can be generated independently
        rng = np.random.default_rng([spec.seed, 1, u])
        n_liked = int(rng.integers(spec.liked_topics_range[0], spec.liked_topics_range[1] + 1))
        liked_topics = sorted(int(t) for t in rng.choice(T, size=n_liked, replace=False))
        liked = np.zeros(T, dtype=bool)
        liked[liked_topics] = True
        p_all = click_probability(affinity(liked, channel_topics, weights), spec.click_threshold,
                                  spec.noise_temperature)
        h_len = int(rng.integers(spec.history_len_range[0], spec.history_len_range[1] + 1))
        h_len = min(h_len, int(np.count_nonzero(p_all)))
        history = []
        if h_len:
            picks = rng.choice(spec.n_news, size=h_len, replace=False, p=p_all / p_all.sum())
            history = [f"N{int(i):05d}" for i in picks]
        user_truth[uid] = {"liked_topics": liked_topics}
        for j in range(spec.n_impressions_per_user):
            cands = rng.choice(spec.n_news, size=spec.candidates_per_impression, replace=False)
            labels = (rng.random(len(cands)) < p_all[cands]).astype(int)
            ts = base + timedelta(days=28 * (j + rng.random()) / spec.n_impressions_per_user)
            impressions.append(Impression(
                f"I{imp_counter:06d}", uid, list(history), [f"N{int(i):05d}" for i in cands],
                [int(y) for y in labels], ts.replace(microsecond=0).isoformat(),
            ))
            imp_counter += 1

    truth = {
        "spec": spec.to_dict(),
        "click_model": {"weights": dict(zip(CHANNELS, weights)), "threshold": spec.click_threshold,
                        "temperature": spec.noise_temperature},
        "news": news_truth,
        "users": user_truth,
    }
    return SyntheticData(news, impressions, truth)


def class_ratio(impressions):
    """(positives, negatives) over all impression candidates."""
    pos = sum(sum(imp.labels) for imp in impressions)
    total = sum(len(imp.labels) for imp in impressions)
    return pos, total - pos


def verify_ground_truth(impressions, ground_truth, z_limit=3.0):
    """Check observed clicks against the click model recorded in ``ground_truth``.

    Candidates are grouped by the primary topic of the news; each group's
    click count is compared with its expected value in binomial standard
    deviations. When every probability is 0 or 1 the labels must match
    exactly.
    """
    cm = ground_truth["click_model"]
    weights = [cm["weights"][c] for c in CHANNELS]
    T = ground_truth["spec"]["n_topics"]
    news = ground_truth["news"]
    liked_by_user = {}
    for uid, info in ground_truth["users"].items():
        liked = np.zeros(T, dtype=bool)
        liked[info["liked_topics"]] = True
        liked_by_user[uid] = liked

    obs = np.zeros(T)
    exp_ = np.zeros(T)
    var = np.zeros(T)
    n = np.zeros(T, dtype=np.int64)
    mismatches = 0
    deterministic = True
    for imp in impressions:
        topics = np.array([[news[c]["title_topic"], news[c]["body_topic"], news[c]["category_topic"]]
                           for c in imp.candidates])
        p = click_probability(affinity(liked_by_user[imp.user_id], topics, weights), cm["threshold"],
                              cm["temperature"])
        y = np.asarray(imp.labels)
        primary = np.array([news[c]["topic"] for c in imp.candidates])
        np.add.at(obs, primary, y)
        np.add.at(exp_, primary, p)
        np.add.at(var, primary, p * (1 - p))
        np.add.at(n, primary, 1)
        if np.all((p == 0) | (p == 1)):
            mismatches += int(np.sum(y != p))
        else:
            deterministic = False

    z = np.where(var > 0, (obs - exp_) / np.sqrt(np.where(var > 0, var, 1)), np.where(obs == exp_, 0.0, np.inf))
    topics_report = {
        int(t): {"n": int(n[t]), "observed": float(obs[t]), "expected": float(exp_[t]), "z": float(z[t])}
        for t in range(T) if n[t]
    }
    max_abs_z = float(np.max(np.abs(z[n > 0]))) if np.any(n > 0) else 0.0
    flagged = [t for t, r in topics_report.items() if not math.isfinite(r["z"]) or abs(r["z"]) > z_limit]
    ok = not flagged and (not deterministic or mismatches == 0)
    return {
        "ok": ok,
        "deterministic": deterministic,
        "label_mismatches": mismatches if deterministic else None,
        "max_abs_z": max_abs_z,
        "flagged_topics": flagged,
        "topics": topics_report,
    }
