import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from naml.errors import ParseError
from naml.text import (PAD, UNK, CategoryIndex, NewsStore, Vocabulary, build_vocab, encode_news,
                       load_pretrained_embeddings, news_corpus, read_news_jsonl, tokenize, write_news_jsonl)


def test_tokenize_examples():
    assert tokenize("Rockets End 2018 With A Win") == ["rockets", "end", "2018", "with", "a", "win"]
    assert tokenize("") == []
    assert len(tokenize("Xbox One On Sale This Week")) == 6


def test_tokenize_strips_edge_punctuation_only():
    assert tokenize("  “Hello,” she said... (really)!  ") == ["hello", "she", "said", "really"]
    assert tokenize("don't e-mail U.S. -- ?!") == ["don't", "e-mail", "u.s"]


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=40))
def test_tokenize_deterministic_and_clean(text):
    toks = tokenize(text)
    assert toks == tokenize(text)
    assert all(t and t == t.lower() and not any(c.isspace() for c in t) for t in toks)


def test_build_vocab_ordering_and_min_frequency():
    v = build_vocab([["a", "b"], ["a"]], 1)
    assert v.stoi == {"<pad>": 0, "<unk>": 1, "a": 2, "b": 3}
    assert build_vocab([["a", "b"], ["a"]], 2).itos == ["<pad>", "<unk>", "a"]
    # ties broken lexicographically
    assert build_vocab([["z", "y", "x", "y"]]).itos[2:] == ["y", "x", "z"]


def test_build_vocab_deterministic():
    corpus = [["b", "c", "a"], ["c", "a"], ["d"]]
    assert build_vocab(corpus).to_text() == build_vocab(list(reversed(corpus))).to_text()


def test_vocab_file_round_trip(tmp_path):
    v = build_vocab([["näive", "b", "b"], ["c"]])
    path = tmp_path / "vocab.txt"
    v.save(path)
    loaded = Vocabulary.load(path)
    assert loaded == v and loaded.digest() == v.digest()
    assert path.read_text(encoding="utf-8").splitlines()[:3] == ["<pad>\t0\t0", "<unk>\t1\t0", "b\t2\t2"]


def test_vocab_load_reports_line(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("<pad>\t0\t0\n<unk>\t1\t0\nword\tx\t3\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        Vocabulary.load(path)
    assert err.value.line == 3


def test_unknown_tokens_map_to_unk():
    v = build_vocab([["a"]])
    assert v.ids(["a", "zzz"]) == [2, UNK]


def test_category_index():
    recs = [{"category": "sports", "subcategory": "nba"}, {"category": "autos", "subcategory": ""}]
    cats = CategoryIndex.build(recs)
    assert cats.categories == ["<unknown>", "autos", "sports"]
    assert cats.subcategories == ["<unknown>", "nba"]
    assert cats.category_id("sports") == 2 and cats.category_id("cooking") == 0
    assert CategoryIndex.from_dict(cats.to_dict()) == cats


@pytest.fixture
def vocab_cats():
    recs = [{"news_id": "n1", "title": "a b c", "body": "c d", "category": "x", "subcategory": "y"}]
    return build_vocab(news_corpus(recs)), CategoryIndex.build(recs)


def test_encode_news_truncation_padding_unknown(vocab_cats):
    vocab, cats = vocab_cats
    long = encode_news({"news_id": "1", "title": "a b c a b c a", "body": ""}, vocab, cats, 5, 4)
    assert long.title_len == 5 and len(long.title_ids) == 5 and PAD not in long.title_ids
    assert long.body_len == 0 and long.body_ids == (PAD,) * 4
    short = encode_news({"news_id": "2", "title": "a b zzz", "body": "d", "category": "x",
                         "subcategory": "nope"}, vocab, cats, 5, 4)
    assert short.title_ids[3:] == (PAD, PAD) and short.title_ids[2] == UNK and short.title_len == 3
    assert short.category_id == 1 and short.subcategory_id == 0


def test_encode_news_idempotent(vocab_cats):
    vocab, cats = vocab_cats
    rec = {"news_id": "1", "title": "a b", "body": "c"}
    assert encode_news(rec, vocab, cats, 4, 4) == encode_news(dict(rec), vocab, cats, 4, 4)


def test_news_store_unknown_ids_and_trimmed_batches(vocab_cats):
    vocab, cats = vocab_cats
    recs = [{"news_id": "n1", "title": "a b c", "body": "c d"}, {"news_id": "n2", "title": "a", "body": ""}]
    store = NewsStore.from_records(recs, vocab, cats, 6, 8)
    rows = store.rows(["n2", "ghost", "n1", "ghost"])
    assert rows.tolist() == [1, 2, 0, 2] and store.unknown_ids == {"ghost"}
    b = store.batch([1, 2])
    assert b.title_ids.shape == (2, 1) and b.body_ids.shape == (2, 1)
    assert store.arrays.take([0], trim=False).title_ids.shape == (1, 6)


def test_news_jsonl_round_trip_and_errors(tmp_path):
    recs = [{"news_id": "n1", "title": "Ünïcode title", "body": "", "category": "c", "subcategory": "s"}]
    path = tmp_path / "news.jsonl"
    write_news_jsonl(recs, path)
    assert read_news_jsonl(path) == recs
    path.write_text('{"news_id": "a"}\n{"title": "no id"}\n', encoding="utf-8")
    with pytest.raises(ParseError) as err:
        read_news_jsonl(path)
    assert err.value.line == 2


def test_pretrained_embeddings(tmp_path):
    vocab = build_vocab([["a", "b", "b"]])
    path = tmp_path / "emb.txt"
    path.write_text("a 1.0 2.0\n<pad> 9 9\nother 3 4\n", encoding="utf-8")
    table, coverage = load_pretrained_embeddings(path, vocab, 2)
    assert table.data[vocab.id("a")].tolist() == [1.0, 2.0]
    assert not table.data[PAD].any()
    assert coverage == 0.5
    assert np.all(np.abs(table.data[vocab.id("b")]) <= 0.1)
    again, _ = load_pretrained_embeddings(path, vocab, 2)
    assert np.array_equal(again.data, table.data)


def test_pretrained_embeddings_disjoint_and_malformed(tmp_path):
    vocab = build_vocab([["a"]])
    path = tmp_path / "emb.txt"
    path.write_text("zzz 1 2\n", encoding="utf-8")
    assert load_pretrained_embeddings(path, vocab, 2)[1] == 0.0
    path.write_text("a 1 2\nb 1\n", encoding="utf-8")
    with pytest.raises(ParseError) as err:
        load_pretrained_embeddings(path, vocab, 2)
    assert err.value.line == 2
    path.write_text("a 1 x\n", encoding="utf-8")
    with pytest.raises(ParseError):
        load_pretrained_embeddings(path, vocab, 2)
