"""Command line entry point: ``naml <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Option precedence is flag > ``--config`` file > built-in default.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint
from .config import VIEWS, RunConfig
from .data import Impression, read_behaviors
from .datagen import SyntheticSpec, class_ratio, generate
from .errors import CheckpointError, ConfigError, DataError, NumericalError
from .metrics import evaluate, format_table, ranking, score_impressions
from .model import NAML
from .tensor import Tensor, no_grad
from .text import (CategoryIndex, NewsStore, Vocabulary, build_vocab, load_pretrained_embeddings,
                   news_corpus, read_news_jsonl)
from .trainer import train

logger = logging.getLogger("naml")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _split_ids(text):
    return [t for t in (text or "").split(",") if t.strip()] if text is not None else None


def _views(text):
    views = tuple(v.strip() for v in text.split(",") if v.strip())
    bad = [v for v in views if v not in VIEWS]
    if bad or not views:
        raise argparse.ArgumentTypeError(f"views must be a comma list drawn from {','.join(VIEWS)}")
    return views


def _add_model_flags(p):
    p.add_argument("--config", help="JSON file with training options and paths")
    p.add_argument("--seed", type=int)
    p.add_argument("--views", type=_views, help="comma set of title,body,category,subcategory")
    p.add_argument("--no-word-attention", dest="word_attention", action="store_const", const=False)
    p.add_argument("--no-news-attention", dest="news_attention", action="store_const", const=False)
    p.add_argument("--no-view-attention", dest="view_attention", action="store_const", const=False)
    p.add_argument("--embeddings", help="GloVe-style text file of pretrained word vectors")
    p.add_argument("--freeze-embeddings", action="store_const", const=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="naml", description="Attentive multi-view news recommendation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary file from news")
    p.add_argument("--config")
    p.add_argument("--news")
    p.add_argument("--min-frequency", type=int)
    p.add_argument("--embeddings", help="report coverage against this embedding file")
    p.add_argument("--dim", type=int, help="embedding dimension (default: word_dim)")
    p.add_argument("--out", required=True, help="vocabulary file to write")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_model_flags(p)
    p.add_argument("--news")
    p.add_argument("--behaviors")
    p.add_argument("--test-behaviors")
    p.add_argument("--vocab")

    for name, help_ in (("evaluate", "ranking metrics on an impression log"),
                        ("predict", "rank candidates for one user history"),
                        ("dump-attention", "write attention weights as JSON lines")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--news", required=True)
        p.add_argument("--vocab", help="vocabulary file (default: vocab.txt next to the checkpoint)")
        if name == "evaluate":
            p.add_argument("--behaviors", required=True)
            p.add_argument("--json", help="also write per-impression metrics to this file")
            p.add_argument("--first-only", action="store_true", help="MRR of the first clicked item only")
        elif name == "predict":
            p.add_argument("--history", default="", help="comma list of browsed news ids")
            p.add_argument("--candidates", required=True, help="comma list of candidate news ids")
            p.add_argument("--top-k", type=int)
        else:
            p.add_argument("--news-ids", help="comma list of news ids (default: all)")
            p.add_argument("--behaviors", help="impression log for user traces")
            p.add_argument("--user-id", help="restrict user traces to this user")
            p.add_argument("--out", required=True, help="JSONL file to write")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic dataset")
    p.add_argument("--spec", help="JSON file with generator settings")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    return parser


def _run_config(args):
    rc = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    train_keys = ("seed", "views", "word_attention", "news_attention", "view_attention",
                  "freeze_embeddings", "epochs", "min_frequency")
    overrides = {k: getattr(args, k, None) for k in train_keys}
    paths = {k: getattr(args, k, None) for k in ("news", "behaviors", "vocab", "embeddings", "out",
                                                 "test_behaviors")}
    return rc.with_overrides(overrides, paths)


def _need(paths, key):
    if not paths.get(key):
        raise ConfigError(f"missing required path '{key}' (flag or config file)")
    if key != "out" and not os.path.exists(paths[key]):
        raise DataError(f"file not found: {paths[key]}")
    return paths[key]


def cmd_build_vocab(args):
    rc = _run_config(args)
    records = read_news_jsonl(_need(rc.paths, "news"))
    vocab = build_vocab(news_corpus(records), rc.train.min_frequency)
    vocab.save(args.out)
    print(f"vocabulary: {len(vocab)} entries -> {args.out}")
    if args.embeddings:
        _, coverage = load_pretrained_embeddings(args.embeddings, vocab, args.dim or rc.train.word_dim)
        print(f"embedding coverage: {coverage:.4f}")
    return EXIT_OK


def cmd_train(args):
    rc = _run_config(args)
    cfg, paths = rc.train, rc.paths
    records = read_news_jsonl(_need(paths, "news"))
    impressions = read_behaviors(_need(paths, "behaviors"))
    out_dir = paths.get("out") or "naml_run"
    if paths.get("vocab"):
        vocab = Vocabulary.load(_need(paths, "vocab"))
    else:
        vocab = build_vocab(news_corpus(records), cfg.min_frequency)
    cats = CategoryIndex.build(records)
    embedding = None
    if paths.get("embeddings"):
        embedding, coverage = load_pretrained_embeddings(_need(paths, "embeddings"), vocab, cfg.word_dim,
                                                         seed=cfg.seed, dtype=np.dtype(cfg.dtype))
        print(f"embedding coverage: {coverage:.4f}")
    store = NewsStore.from_records(records, vocab, cats, cfg.max_title_len, cfg.max_body_len)
    os.makedirs(out_dir, exist_ok=True)
    vocab.save(os.path.join(out_dir, "vocab.txt"))
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(rc.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")

    def progress(epoch, step, n_steps, loss):
        logger.debug("epoch %d step %d/%d loss %.4f", epoch, step, n_steps, loss)

    result = train(store, impressions, cfg, vocab, cats, word_embedding=embedding, out_dir=out_dir,
                   progress=progress)
    for row in result.log:
        print(f"epoch {row['epoch']}: loss {row['train_loss']:.4f} val AUC {row['val_auc']:.4f}")
    print(f"best epoch {result.best_epoch}; checkpoint {result.checkpoint_path}")
    if paths.get("test_behaviors"):
        metrics = evaluate(result.model, store, read_behaviors(_need(paths, "test_behaviors")))
        print(format_table(metrics))
    return EXIT_OK


def _load_model(args):
    vocab_path = args.vocab or os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "vocab.txt")
    if not os.path.exists(vocab_path):
        raise DataError(f"vocabulary file not found: {vocab_path}")
    vocab = Vocabulary.load(vocab_path)
    ckpt = load_checkpoint(args.checkpoint, expected_vocab_hash=vocab.digest())
    records = read_news_jsonl(args.news)
    cfg = ckpt.config
    store = NewsStore.from_records(records, vocab, ckpt.categories, cfg.max_title_len, cfg.max_body_len)
    return NAML(cfg, ckpt.params), store, vocab


def cmd_evaluate(args):
    model, store, _ = _load_model(args)
    impressions = read_behaviors(args.behaviors)
    metrics = evaluate(model, store, impressions, first_only=args.first_only)
    print(format_table(metrics))
    print(f"impressions used {metrics.n_impressions_used}, skipped {metrics.n_impressions_skipped}")
    if metrics.diagnostics.get("unknown_news"):
        print(f"unknown news ids: {metrics.diagnostics['unknown_news']}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(metrics.as_dict(per_impression=True), fh, indent=1, sort_keys=True)
            fh.write("\n")
    return EXIT_OK


def predict_scores(model, store, history, candidates):
    """Scores for ``candidates`` given a browsed-news ``history``; the same
    path evaluation uses. An empty history gives all-zero scores."""
    imp = Impression("predict", "predict", list(history), list(candidates), [0] * len(candidates))
    return score_impressions(model, store, [imp])[0]


def cmd_predict(args):
    model, store, _ = _load_model(args)
    candidates = _split_ids(args.candidates)
    if not candidates:
        raise DataError("no candidates given")
    scores = predict_scores(model, store, _split_ids(args.history), candidates)
    order = ranking(scores)
    if args.top_k is not None:
        if args.top_k < 1:
            raise ConfigError("--top-k must be >= 1")
        order = order[: args.top_k]
    for rank, i in enumerate(order, 1):
        print(json.dumps({"rank": rank, "news_id": candidates[i], "score": float(scores[i])}))
    return EXIT_OK


def _tokens(vocab, ids, length):
    return [vocab.itos[int(i)] for i in ids[:length]]


def attention_records(model, store, vocab, news_ids=None, impressions=None, user_id=None):
    """JSON-ready attention traces: one record per news item, then one per user.

    Word weights cover only real tokens; view weights are listed with the
    active view names; user records carry the news-level weights over the
    (most recent) history.
    """
    ids = news_ids if news_ids is not None else [n.news_id for n in store.items]
    rows = store.rows(ids)
    out = []
    for start in range(0, len(rows), 256):
        chunk = rows[start:start + 256]
        batch = store.arrays.take(chunk, trim=False)
        vec = model.encode_news(batch, trace=True)
        tr = vec.trace
        for j, r in enumerate(chunk):
            rec = {"type": "news", "news_id": ids[start + j], "views": tr["views"],
                   "view_alpha": [float(a) for a in tr["view_alpha"][j]]}
            for view, ids_, lens in (("title", batch.title_ids, batch.title_len),
                                     ("body", batch.body_ids, batch.body_len)):
                if f"{view}_alpha" in tr:
                    n = int(lens[j])
                    rec[f"{view}_tokens"] = _tokens(vocab, ids_[j], n)
                    rec[f"{view}_alpha"] = [float(a) for a in tr[f"{view}_alpha"][j][:n]]
            out.append(rec)
    if impressions:
        seen = set()
        vectors = model.encode_all(store)
        n_max = model.cfg.max_history
        for imp in impressions:
            if (user_id is not None and imp.user_id != user_id) or imp.user_id in seen:
                continue
            seen.add(imp.user_id)
            hist = imp.history[-n_max:]
            h_rows = np.zeros((1, n_max), dtype=np.int64)
            h_rows[0, : len(hist)] = store.rows(hist)
            with no_grad():
                user = model.encode_users(Tensor(vectors), h_rows, np.array([len(hist)]))
            out.append({"type": "user", "user_id": imp.user_id, "history": list(hist),
                        "alpha": [float(a) for a in user.alpha.data[0][: len(hist)]]})
    return out


def cmd_dump_attention(args):
    model, store, vocab = _load_model(args)
    impressions = read_behaviors(args.behaviors) if args.behaviors else None
    records = attention_records(model, store, vocab, _split_ids(args.news_ids), impressions, args.user_id)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote {len(records)} records -> {args.out}")
    return EXIT_OK


def cmd_gen_synthetic(args):
    d = {}
    if args.spec:
        try:
            with open(args.spec, encoding="utf-8") as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"spec file not found: {args.spec}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON: {exc.msg}") from None
    if args.seed is not None:
        d["seed"] = args.seed
    data = generate(SyntheticSpec.from_dict(d))
    paths = data.write(args.out)
    pos, neg = class_ratio(data.impressions)
    print(f"{len(data.news)} news, {len(data.impressions)} impressions, positive:negative 1:{neg / max(pos, 1):.2f}")
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return EXIT_OK


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "dump-attention": cmd_dump_attention,
    "gen-synthetic": cmd_gen_synthetic,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, CheckpointError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
