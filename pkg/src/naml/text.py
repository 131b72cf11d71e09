"""Tokenisation, vocabulary, category indexing and fixed-shape news encoding."""

import hashlib
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError
from .tensor import Tensor

PAD = 0
UNK = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
UNKNOWN_CATEGORY = "<unknown>"


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def tokenize(text):
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and _is_punct(raw[start]):
            start += 1
        while end > start and _is_punct(raw[end - 1]):
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


class Vocabulary:
    """Token <-> id map with reserved ``PAD = 0`` and ``UNK = 1``.

    Kept tokens get ids from 2 upwards ordered by frequency (descending)
    then lexicographically, so a rebuild on the same corpus is identical.
    """

    def __init__(self, tokens=(), frequencies=None, min_frequency=1):
        self.min_frequency = min_frequency
        self.itos = [PAD_TOKEN, UNK_TOKEN] + list(tokens)
        self.freqs = [0, 0] + list(frequencies if frequencies is not None else [0] * len(tokens))
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos and self.freqs == other.freqs

    def id(self, token):
        return self.stoi.get(token, UNK)

    def ids(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def to_text(self):
        return "".join(f"{tok}\t{i}\t{freq}\n" for i, (tok, freq) in enumerate(zip(self.itos, self.freqs)))

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_text())

    @classmethod
    def load(cls, path):
        tokens, freqs = [], []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise ParseError("expected token<TAB>id<TAB>frequency", lineno, path)
                tok, idx, freq = parts
                try:
                    idx, freq = int(idx), int(freq)
                except ValueError:
                    raise ParseError("id and frequency must be integers", lineno, path) from None
                if idx != lineno - 1:
                    raise ParseError(f"ids must be consecutive, expected {lineno - 1}", lineno, path)
                if idx < 2:
                    continue
                tokens.append(tok)
                freqs.append(freq)
        return cls(tokens, freqs)

    def digest(self):
        """SHA-256 of the serialised vocabulary, used to pair checkpoints with vocabularies."""
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()


def build_vocab(corpus, min_frequency=1):
    if min_frequency < 1:
        raise ValueError("min_frequency must be >= 1")
    counts = Counter()
    for tokens in corpus:
        counts.update(tokens)
    for reserved in (PAD_TOKEN, UNK_TOKEN):
        counts.pop(reserved, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, [counts[t] for t in kept], min_frequency=min_frequency)


@dataclass
class CategoryIndex:
    """Category and subcategory name -> id maps; id 0 is ``<unknown>`` in both."""

    categories: list = field(default_factory=lambda: [UNKNOWN_CATEGORY])
    subcategories: list = field(default_factory=lambda: [UNKNOWN_CATEGORY])

    def __post_init__(self):
        self._cat = {c: i for i, c in enumerate(self.categories)}
        self._sub = {c: i for i, c in enumerate(self.subcategories)}

    @classmethod
    def build(cls, records):
        cats, subs = set(), set()
        for rec in records:
            if rec.get("category"):
                cats.add(rec["category"])
            if rec.get("subcategory"):
                subs.add(rec["subcategory"])
        return cls([UNKNOWN_CATEGORY] + sorted(cats), [UNKNOWN_CATEGORY] + sorted(subs))

    @property
    def n_categories(self):
        return len(self.categories)

    @property
    def n_subcategories(self):
        return len(self.subcategories)

    def category_id(self, name):
        return self._cat.get(name, 0)

    def subcategory_id(self, name):
        return self._sub.get(name, 0)

    def to_dict(self):
        return {"categories": list(self.categories), "subcategories": list(self.subcategories)}

    @classmethod
    def from_dict(cls, d):
        return cls(list(d["categories"]), list(d["subcategories"]))


@dataclass(frozen=True)
class TokenizedNews:
    news_id: str
    title_ids: tuple
    title_len: int
    body_ids: tuple
    body_len: int
    category_id: int
    subcategory_id: int


def _pad(ids, length):
    ids = ids[:length]
    return tuple(ids) + (PAD,) * (length - len(ids)), len(ids)


def encode_news(raw, vocab, cats, max_title_len, max_body_len):
    """Token ids for one raw news record, truncated and right-padded with PAD."""
    if max_title_len < 1 or max_body_len < 1:
        raise ValueError("max_title_len and max_body_len must be >= 1")
    title, tlen = _pad(vocab.ids(tokenize(raw.get("title") or "")), max_title_len)
    body, blen = _pad(vocab.ids(tokenize(raw.get("body") or "")), max_body_len)
    return TokenizedNews(
        news_id=str(raw["news_id"]),
        title_ids=title,
        title_len=tlen,
        body_ids=body,
        body_len=blen,
        category_id=cats.category_id(raw.get("category") or ""),
        subcategory_id=cats.subcategory_id(raw.get("subcategory") or ""),
    )


def unknown_news(news_id, max_title_len, max_body_len):
    """Placeholder for a news id missing from the corpus: a single UNK title word."""
    return TokenizedNews(
        news_id=news_id,
        title_ids=(UNK,) + (PAD,) * (max_title_len - 1),
        title_len=1,
        body_ids=(PAD,) * max_body_len,
        body_len=0,
        category_id=0,
        subcategory_id=0,
    )


@dataclass
class NewsBatch:
    """Column arrays for a set of news, row-aligned."""

    title_ids: np.ndarray
    title_len: np.ndarray
    body_ids: np.ndarray
    body_len: np.ndarray
    category: np.ndarray
    subcategory: np.ndarray

    def __len__(self):
        return len(self.title_len)

    @classmethod
    def from_items(cls, items):
        items = list(items)
        return cls(
            title_ids=np.array([n.title_ids for n in items], dtype=np.int64).reshape(len(items), -1),
            title_len=np.array([n.title_len for n in items], dtype=np.int64),
            body_ids=np.array([n.body_ids for n in items], dtype=np.int64).reshape(len(items), -1),
            body_len=np.array([n.body_len for n in items], dtype=np.int64),
            category=np.array([n.category_id for n in items], dtype=np.int64),
            subcategory=np.array([n.subcategory_id for n in items], dtype=np.int64),
        )

    def take(self, rows, trim=True):
        """Sub-batch at ``rows``. With ``trim`` the token arrays are cut to the
        longest sequence present; trailing PAD columns carry no information."""
        rows = np.asarray(rows, dtype=np.int64)
        tl, bl = self.title_len[rows], self.body_len[rows]
        t_cut = max(1, int(tl.max())) if trim and len(rows) else self.title_ids.shape[1]
        b_cut = max(1, int(bl.max())) if trim and len(rows) else self.body_ids.shape[1]
        return NewsBatch(
            self.title_ids[rows, :t_cut],
            tl,
            self.body_ids[rows, :b_cut],
            bl,
            self.category[rows],
            self.subcategory[rows],
        )


class NewsStore:
    """All tokenized news of a corpus, addressable by id or row.

    Ids that were not in the corpus are added on demand as UNK placeholders
    and counted in ``unknown_ids``.
    """

    def __init__(self, items, max_title_len, max_body_len):
        self.max_title_len = max_title_len
        self.max_body_len = max_body_len
        self.items = list(items)
        self.row = {n.news_id: i for i, n in enumerate(self.items)}
        self.unknown_ids = set()
        self._arrays = None

    @classmethod
    def from_records(cls, records, vocab, cats, max_title_len, max_body_len):
        return cls(
            (encode_news(r, vocab, cats, max_title_len, max_body_len) for r in records),
            max_title_len,
            max_body_len,
        )

    def __len__(self):
        return len(self.items)

    def __contains__(self, news_id):
        return news_id in self.row

    def __getitem__(self, news_id):
        return self.items[self.row[news_id]]

    def rows(self, news_ids):
        out = []
        for nid in news_ids:
            r = self.row.get(nid)
            if r is None:
                r = self._add_unknown(nid)
            out.append(r)
        return np.array(out, dtype=np.int64)

    def _add_unknown(self, news_id):
        self.unknown_ids.add(news_id)
        self.items.append(unknown_news(news_id, self.max_title_len, self.max_body_len))
        self.row[news_id] = len(self.items) - 1
        self._arrays = None
        return self.row[news_id]

    @property
    def arrays(self):
        if self._arrays is None:
            self._arrays = NewsBatch.from_items(self.items)
        return self._arrays

    def batch(self, rows):
        return self.arrays.take(rows)


def read_news_jsonl(path):
    """Raw news records from JSON-lines with news_id/title/body/category/subcategory."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno, path) from None
            if not isinstance(rec, dict) or "news_id" not in rec:
                raise ParseError("news record needs a news_id", lineno, path)
            for key in ("title", "body", "category", "subcategory"):
                value = rec.get(key, "")
                if value is None:
                    value = ""
                if not isinstance(value, str):
                    raise ParseError(f"field {key!r} must be a string", lineno, path)
                rec[key] = value
            rec["news_id"] = str(rec["news_id"])
            records.append(rec)
    return records


def write_news_jsonl(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def news_corpus(records):
    """Token lists of titles and bodies, for vocabulary building."""
    for rec in records:
        yield tokenize(rec.get("title", ""))
        yield tokenize(rec.get("body", ""))


def load_pretrained_embeddings(path, vocab, dim, seed=0, dtype=np.float64):
    """Embedding table tensor [len(vocab), dim] initialised from a GloVe-style text file.

    Tokens found in the file are copied; the rest are drawn from
    uniform(-0.1, 0.1). The PAD row is always zero. Returns
    ``(matrix, coverage)`` where coverage is the fraction of non-reserved
    vocabulary tokens found in the file.
    """
    rng = np.random.default_rng(seed)
    table = rng.uniform(-0.1, 0.1, size=(len(vocab), dim)).astype(dtype)
    found = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0].strip():
                continue
            if len(parts) != dim + 1:
                raise ParseError(f"expected token and {dim} values, got {len(parts) - 1}", lineno, path)
            try:
                values = [float(v) for v in parts[1:]]
            except ValueError:
                raise ParseError("non-numeric embedding value", lineno, path) from None
            idx = vocab.stoi.get(parts[0])
            if idx is not None and idx >= 2:
                table[idx] = values
                found.add(idx)
    table[PAD] = 0.0
    n_real = len(vocab) - 2
    coverage = len(found) / n_real if n_real else 0.0
    return Tensor(table), coverage
