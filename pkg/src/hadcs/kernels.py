"""Hot numeric kernels with numba and pure-numpy implementations.

The public names at the bottom bind to the numba versions when
:data:`hadcs._accel.HAS_NUMBA` is true, else to the numpy versions. Both
variants are always importable (``*_nb`` / ``*_np``) so tests and the
benchmark can compare them directly.
"""

import numpy as np

from ._accel import HAS_NUMBA, njit, prange

ZERO_NORM = 1e-12


# --------------------------------------------------------------------------
# coherence of a Gram matrix
# --------------------------------------------------------------------------


@njit(cache=True)
def _gram_coherence_nb(G):
    k = G.shape[0]
    norms = np.empty(k)
    for i in range(k):
        d = G[i, i]
        norms[i] = np.sqrt(d) if d > 0.0 else 0.0
    best = -1.0
    bi = -1
    bj = -1
    for i in range(k):
        ni = norms[i]
        if ni < ZERO_NORM:
            continue
        for j in range(i + 1, k):
            nj = norms[j]
            if nj < ZERO_NORM:
                continue
            v = abs(G[i, j]) / (ni * nj)
            if v > best:
                best = v
                bi = i
                bj = j
    return best, bi, bj


def _gram_coherence_np(G):
    G = np.asarray(G, dtype=np.float64)
    d = np.diag(G).copy()
    norms = np.sqrt(np.clip(d, 0.0, None))
    valid = norms >= ZERO_NORM
    idx = np.flatnonzero(valid)
    if idx.size < 2:
        return -1.0, -1, -1
    sub = np.abs(G[np.ix_(idx, idx)]) / np.outer(norms[idx], norms[idx])
    iu = np.triu_indices(idx.size, k=1)
    vals = sub[iu]
    # first maximum in row-major (i, j) order, matching the loop kernel
    pos = int(np.argmax(vals))
    return float(vals[pos]), int(idx[iu[0][pos]]), int(idx[iu[1][pos]])


# --------------------------------------------------------------------------
# greedy row selection: score every candidate row against a running Gram
# --------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def _candidate_scores_nb(G, Y, out):
    c = Y.shape[0]
    k = Y.shape[1]
    for m in prange(c):
        y = Y[m]
        norms = np.empty(k)
        for i in range(k):
            d = G[i, i] + y[i] * y[i]
            norms[i] = np.sqrt(d) if d > 0.0 else 0.0
        best = -1.0
        for i in range(k):
            ni = norms[i]
            if ni < ZERO_NORM:
                continue
            yi = y[i]
            for j in range(i + 1, k):
                nj = norms[j]
                if nj < ZERO_NORM:
                    continue
                v = abs(G[i, j] + yi * y[j]) / (ni * nj)
                if v > best:
                    best = v
        out[m] = best
    return out


def _candidate_scores_np(G, Y, out, chunk_elems=2_000_000):
    G = np.asarray(G, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    k = G.shape[0]
    iu = np.triu_indices(k, k=1)
    g_up = G[iu]
    diag = np.diag(G)
    step = max(1, chunk_elems // max(1, iu[0].size))
    for start in range(0, Y.shape[0], step):
        y = Y[start : start + step]
        norms = np.sqrt(np.clip(diag[None, :] + y * y, 0.0, None))
        ni = norms[:, iu[0]]
        nj = norms[:, iu[1]]
        num = np.abs(g_up[None, :] + y[:, iu[0]] * y[:, iu[1]])
        ok = (ni >= ZERO_NORM) & (nj >= ZERO_NORM)
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(ok, num / (ni * nj), -1.0)
        out[start : start + step] = v.max(axis=1) if v.shape[1] else -1.0
    return out


# --------------------------------------------------------------------------
# ISTA inner loop for layer-wise sparse coding (many signals at once)
# --------------------------------------------------------------------------


@njit(cache=True)
def _ista_nb(DtD, DtX, Z, thresh, step, iters):
    k, m = Z.shape
    for _ in range(iters):
        R = DtD @ Z
        for a in range(k):
            for b in range(m):
                v = Z[a, b] - step * (R[a, b] - DtX[a, b])
                if v > thresh:
                    Z[a, b] = v - thresh
                elif v < -thresh:
                    Z[a, b] = v + thresh
                else:
                    Z[a, b] = 0.0
    return Z


def _ista_np(DtD, DtX, Z, thresh, step, iters):
    for _ in range(iters):
        V = Z - step * (DtD @ Z - DtX)
        Z = np.sign(V) * np.maximum(np.abs(V) - thresh, 0.0)
    return Z


if HAS_NUMBA:
    gram_coherence = _gram_coherence_nb
    candidate_scores = _candidate_scores_nb
    ista = _ista_nb
else:
    gram_coherence = _gram_coherence_np
    candidate_scores = _candidate_scores_np
    ista = _ista_np
