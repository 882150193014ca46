"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--k 128] [--cands 1763]

Sizes default to the greedy design at n = 1763 with a 128-wide top
dictionary. Also checks that both backends agree on every input.
"""

import argparse
import statistics
import time

import numpy as np

from hadcs import kernels
from hadcs._accel import HAS_NUMBA


def timeit(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--k", type=int, default=128)
    ap.add_argument("--cands", type=int, default=1763)
    ap.add_argument("--signals", type=int, default=234)
    args = ap.parse_args()
    if not HAS_NUMBA:
        raise SystemExit("numba unavailable (or HADCS_DISABLE_NUMBA set); nothing to compare")

    rng = np.random.default_rng(0)
    k = args.k
    Y = rng.standard_normal((args.cands, k))
    G = Y[:40].T @ Y[:40]
    D = rng.standard_normal((k * 4, k))
    D /= np.linalg.norm(D, axis=0)
    X = rng.standard_normal((k * 4, args.signals))
    DtD, DtX = D.T @ D, D.T @ X
    step = 1.0 / np.linalg.norm(D, 2) ** 2

    cases = {
        "gram_coherence": (
            lambda: kernels._gram_coherence_nb(G),
            lambda: kernels._gram_coherence_np(G),
        ),
        "candidate_scores": (
            lambda: kernels._candidate_scores_nb(G, Y, np.empty(len(Y))),
            lambda: kernels._candidate_scores_np(G, Y, np.empty(len(Y))),
        ),
        "ista(50 it)": (
            lambda: kernels._ista_nb(DtD, DtX, np.zeros((k, args.signals)), 0.01 * step, step, 50),
            lambda: kernels._ista_np(DtD, DtX, np.zeros((k, args.signals)), 0.01 * step, step, 50),
        ),
    }
    print(f"{'kernel':<18}{'numba s':>12}{'numpy s':>12}{'speedup':>10}  agree")
    for name, (nb, npf) in cases.items():
        a = nb()  # warm-up / compile
        b = npf()
        agree = np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-10, atol=1e-12)
        t_nb = timeit(nb, args.repeat)
        t_np = timeit(npf, args.repeat)
        print(f"{name:<18}{t_nb:>12.5f}{t_np:>12.5f}{t_np / t_nb:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
