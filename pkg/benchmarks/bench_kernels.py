"""Compare the compiled and NumPy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times unfold/fold/scatter on training-sized arrays and one full training
step (forward, backward, Adam) of a small model, once per backend.
"""

import argparse
import timeit

import numpy as np

from naml import kernels
from naml.config import TrainConfig
from naml.model import NAML
from naml.tensor import backward
from naml.text import NewsBatch
from naml.trainer import Adam


def kernel_cases(rng):
    x = rng.standard_normal((1000, 40, 64)).astype(np.float32)
    g = rng.standard_normal((1000, 40, 3 * 64)).astype(np.float32)
    table = np.zeros((5000, 64), dtype=np.float32)
    ids = rng.integers(0, 5000, size=40000)
    rows = rng.standard_normal((40000, 64)).astype(np.float32)
    return {
        "unfold_same": lambda: kernels.unfold_same(x, 1),
        "fold_same": lambda: kernels.fold_same(g, 1, 64),
        "scatter_add_rows": lambda: kernels.scatter_add_rows(table, ids, rows),
    }


def train_step_case(rng):
    cfg = TrainConfig(word_dim=64, cat_dim=32, n_filters=64, dense_dim=64, query_dim=32, seed=0)
    n_news, V = 600, 5000
    model = NAML.create(cfg, V, 21, 41)
    t_len = rng.integers(6, 15, size=n_news)
    b_len = rng.integers(20, 61, size=n_news)
    title = np.where(np.arange(14) < t_len[:, None], rng.integers(2, V, size=(n_news, 14)), 0)
    body = np.where(np.arange(60) < b_len[:, None], rng.integers(2, V, size=(n_news, 60)), 0)
    news = NewsBatch(title, t_len, body, b_len, rng.integers(1, 21, n_news), rng.integers(1, 41, n_news))
    hist = rng.integers(0, n_news, size=(100, cfg.max_history))
    hist_len = rng.integers(5, 21, size=100)
    cands = rng.integers(0, n_news, size=(100, cfg.neg_ratio + 1))
    opt = Adam(model.params, cfg.lr)
    drop = np.random.default_rng(1)

    def step():
        loss = model.batch_loss(news, hist, hist_len, cands, training=True, rng=drop)
        model.zero_grad()
        backward(loss)
        opt.step()

    return step


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    cases["train_step"] = train_step_case(rng)

    backends = ["python"]
    try:
        kernels.use_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled extension not built; timing the NumPy fallback only")

    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        for name, fn in cases.items():
            fn()  # warm up
            results[name, backend] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    print(f"{'case':<18}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in cases:
        line = f"{name:<18}" + "".join(f"{results[name, b] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            line += f"{results[name, 'python'] / results[name, 'cython']:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
