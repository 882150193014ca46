"""Layered dictionary learning.

A stack of ``K`` dictionaries ``D1 (N x K2), D2 (K2 x K3), ...`` decodes
the top-layer code ``zK`` to an image ``P' = D1 @ D2 @ ... @ DK @ zK``.
Codes are found layer by layer (``z1`` sparse-codes the image against
``D1``, ``z2`` sparse-codes ``z1`` against ``D2``, ...). Training
minimises

    sum_i alpha_i ||z_i||_1 + beta ||P' - P||^2 + gamma ||S P' - T||^2

by alternating code and dictionary updates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .provenance import strip_header
from .channel import Image, MeasurementVector
from .rng import generator
from .sensing import CoherenceReport, SensingMatrix, mutual_coherence

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DIVERGENCE_LIMIT = 1e12
DEFAULT_DIMS = (1763, 512, 128)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    alphas: tuple[float, ...] = (0.01, 0.01)
    beta: float = 1.0
    gamma: float = 1.0
    epochs: int = 100
    code_iters: int = 100
    dict_step: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        if any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be nonnegative")
        if self.beta < 0 or self.gamma < 0 or not (self.beta > 0 or self.gamma > 0):
            raise ValueError("beta and gamma must be nonnegative, at least one positive")
        if self.epochs < 1 or self.code_iters < 1:
            raise ValueError("epochs and code_iters must be positive")
        if not self.dict_step > 0:
            raise ValueError("dict_step must be positive")


@dataclass(eq=False)
class DictionaryStack:
    layers: list[np.ndarray]
    seed: int = 0
    epochs_trained: int = 0
    alphas: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a stack needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError(f"layer shapes do not chain: {a.shape} -> {b.shape}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.layers[0].shape[0]] + [D.shape[1] for D in self.layers]

    @property
    def depth(self) -> int:
        return len(self.layers)

    def default_alphas(self) -> tuple[float, ...]:
        return self.alphas if self.alphas is not None else (0.01,) * self.depth

    def product(self) -> np.ndarray:
        return _chain(self.layers)

    def column_norms(self) -> list[np.ndarray]:
        return [np.linalg.norm(D, axis=0) for D in self.layers]


@dataclass(eq=False)
class CodeStack:
    codes: list[np.ndarray]

    @property
    def top(self) -> np.ndarray:
        return self.codes[-1]


@dataclass(frozen=True)
class LossBreakdown:
    """Loss terms. ``image_mse`` and ``meas_mse`` are unweighted squared
    errors; ``l1_codes`` already carries the alphas; ``total`` applies
    beta and gamma once."""

    l1_codes: float
    image_mse: float
    meas_mse: float
    total: float


def _normalize_cols(D: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(D, axis=0)
    norms[norms == 0] = 1.0
    return D / norms


def init_stack(layer_dims: Sequence[int], seed: int = 0) -> DictionaryStack:
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError("layer_dims needs at least an input and one code dimension")
    if min(dims) < 1:
        raise ValueError("all layer dims must be >= 1")
    rng = generator(seed)
    layers = [_normalize_cols(rng.standard_normal((a, b))) for a, b in zip(dims, dims[1:])]
    return DictionaryStack(layers, seed=seed)


# --------------------------------------------------------------------------
# coding
# --------------------------------------------------------------------------


def _lipschitz(D: np.ndarray) -> float:
    s = np.linalg.norm(D, 2)
    return float(s * s)


def encode_array(stack: DictionaryStack, X: np.ndarray, alphas, iters: int, warm=None) -> list[np.ndarray]:
    """Layer-wise ISTA on the columns of ``X``.

    Layer ``i`` solves ``0.5 ||x - D_i z||^2 + alpha_i ||z||_1`` for every
    column with step ``1/||D_i||^2``. ``warm`` optionally supplies starting
    codes per layer.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != stack.layer_dims[0]:
        raise ValueError(f"input length {X.shape[0]} != stack input dim {stack.layer_dims[0]}")
    alphas = list(alphas)
    if len(alphas) != stack.depth:
        raise ValueError(f"need {stack.depth} alphas, got {len(alphas)}")
    codes = []
    cur = X
    for i, D in enumerate(stack.layers):
        lip = _lipschitz(D)
        step = 1.0 / lip if lip > 0 else 1.0
        DtD = np.ascontiguousarray(D.T @ D)
        DtX = np.ascontiguousarray(D.T @ cur)
        if warm is not None:
            Z = np.array(warm[i], dtype=np.float64, order="C")
        else:
            Z = np.zeros((D.shape[1], cur.shape[1]))
        Z = kernels.ista(DtD, DtX, Z, alphas[i] * step, step, iters)
        codes.append(Z)
        cur = Z
    return codes


def encode(stack: DictionaryStack, img: Image, cfg: TrainConfig) -> CodeStack:
    codes = encode_array(stack, img.flat(), cfg.alphas, cfg.code_iters)
    return CodeStack([c[:, 0] for c in codes])


def decode_array(stack: DictionaryStack, top: np.ndarray) -> np.ndarray:
    out = np.asarray(top, dtype=np.float64)
    if out.shape[0] != stack.layer_dims[-1]:
        raise ValueError(f"top code length {out.shape[0]} != {stack.layer_dims[-1]}")
    for D in reversed(stack.layers):
        out = D @ out
    return out


def decode(stack: DictionaryStack, codes: CodeStack, p: int | None = None, q: int | None = None) -> Image:
    flat = decode_array(stack, codes.top)
    if p is None:
        p, q = 1, flat.size
    elif q is None:
        q = flat.size // p
    return Image.from_flat(flat, p, q)


# --------------------------------------------------------------------------
# loss
# --------------------------------------------------------------------------


def loss(
    stack: DictionaryStack,
    codes: CodeStack,
    img: Image,
    s: SensingMatrix,
    t: MeasurementVector,
    cfg: TrainConfig,
) -> LossBreakdown:
    if len(codes.codes) != stack.depth:
        raise ValueError("code stack depth does not match dictionary stack")
    if len(cfg.alphas) != stack.depth:
        raise ValueError("alphas length does not match dictionary stack")
    if s.cols != img.n or len(t) != s.rows:
        raise ValueError("image, sensing matrix and measurements are inconsistent")
    rec = decode_array(stack, codes.top)
    l1 = sum(a * float(np.abs(z).sum()) for a, z in zip(cfg.alphas, codes.codes))
    e1 = float(np.sum((rec - img.flat()) ** 2))
    e2 = float(np.sum((s.as_float() @ rec - t.values) ** 2))
    return LossBreakdown(l1, e1, e2, l1 + cfg.beta * e1 + cfg.gamma * e2)


def _chain(layers):
    B = layers[0]
    for D in layers[1:]:
        B = B @ D
    return B


def chain_codes(layers, top: np.ndarray) -> list[np.ndarray]:
    """Intermediate codes implied by a top-layer code: ``z_i = D_{i+1} z_{i+1}``."""
    codes = [np.asarray(top, dtype=np.float64)]
    for D in reversed(layers[1:]):
        codes.append(D @ codes[-1])
    return codes[::-1]


def _batch_terms(layers, top, X, S, T, alphas):
    """Per-image (l1, e1, e2) arrays for a batch with images as columns."""
    codes = chain_codes(layers, top)
    P = _chain(layers) @ top
    R = P - X
    M = S @ P - T
    l1 = sum(a * np.abs(z).sum(axis=0) for a, z in zip(alphas, codes))
    return l1, np.sum(R * R, axis=0), np.sum(M * M, axis=0)


def _mean_breakdown(l1, e1, e2, cfg: TrainConfig) -> LossBreakdown:
    tot = l1 + cfg.beta * e1 + cfg.gamma * e2
    return LossBreakdown(float(np.mean(l1)), float(np.mean(e1)), float(np.mean(e2)), float(np.mean(tot)))


def _renormalize(layers, top):
    """Unit-normalise every layer's columns without changing the decode.

    Column norms of layer ``i`` are pushed into the rows of layer ``i+1``
    (or into the top code for the last layer).
    """
    layers = list(layers)
    top = top.copy()
    for i, D in enumerate(layers):
        c = np.linalg.norm(D, axis=0)
        c[c == 0] = 1.0
        layers[i] = D / c
        if i + 1 < len(layers):
            layers[i + 1] = c[:, None] * layers[i + 1]
        else:
            top = c[:, None] * top
    return layers, top


def _ridge(A: np.ndarray) -> float:
    return 1e-9 * max(float(np.trace(A)) / A.shape[0], 1e-300)


class _Objective:
    """Mean training loss over the corpus at fixed data."""

    def __init__(self, X, S, T, cfg: TrainConfig):
        self.X, self.S, self.T, self.cfg = X, S, T, cfg

    def __call__(self, layers, top) -> LossBreakdown:
        l1, e1, e2 = _batch_terms(layers, top, self.X, self.S, self.T, self.cfg.alphas)
        return _mean_breakdown(l1, e1, e2, self.cfg)

    def weight(self, R):
        """``W @ R`` with ``W = beta I + gamma S^T S``."""
        return self.cfg.beta * R + self.cfg.gamma * (self.S.T @ (self.S @ R))


def _line_search(obj, current: float, make, eta: float, tries: int = 30):
    """Largest ``eta`` (halving from the given one) whose candidate does not
    raise the loss. Returns ``(candidate, breakdown, eta)`` or ``None``."""
    for _ in range(tries):
        cand = make(eta)
        bd = obj(*cand)
        if bd.total <= current:
            return cand, bd, eta
        eta *= 0.5
    return None


def _code_target(obj: _Objective, layers) -> np.ndarray:
    """Weighted least-squares top code ``argmin ||W^1/2 (B z - X)||^2``."""
    B = _chain(layers)
    SB = obj.S @ B
    A = obj.cfg.beta * (B.T @ B) + obj.cfg.gamma * (SB.T @ SB)
    rhs = B.T @ obj.weight(obj.X)
    return np.linalg.solve(A + _ridge(A) * np.eye(A.shape[0]), rhs)


def _layer_target(obj: _Objective, layers, top, i: int) -> np.ndarray:
    """Exact minimiser of the smooth loss over layer ``i`` alone.

    With ``B = L D R`` and layer input ``C = R top`` the normal equations
    ``(L^T W L) D (C C^T) = L^T W X C^T`` separate; for the first layer
    ``L = I`` and W cancels.
    """
    C = chain_codes(layers, top)[i]
    CC = C @ C.T
    right = np.linalg.solve(CC + _ridge(CC) * np.eye(CC.shape[0]), C @ obj.X.T).T
    if i == 0:
        return right
    Lm = _chain(layers[:i])
    SL = obj.S @ Lm
    A = obj.cfg.beta * (Lm.T @ Lm) + obj.cfg.gamma * (SL.T @ SL)
    rhs = Lm.T @ obj.weight(right)
    return np.linalg.solve(A + _ridge(A) * np.eye(A.shape[0]), rhs)


def train(
    corpus: Sequence[Image],
    s: SensingMatrix,
    cfg: TrainConfig,
    layer_dims: Sequence[int] | None = None,
    stack: DictionaryStack | None = None,
) -> tuple[DictionaryStack, list[LossBreakdown]]:
    """Alternating minimisation of the layered loss over ``corpus``.

    Codes start from layer-wise sparse coding; afterwards the intermediate
    codes are the chained images of the top code. Each epoch

    (a) codes: the better of a warm-started layer-wise re-encode and a
        backtracked move toward the weighted least-squares code;
    (b) dictionaries: for each layer, a backtracked move toward that
        layer's exact block minimiser (a preconditioned gradient step with
        initial length ``dict_step``);
    (c) columns renormalised, with the scale pushed into the next layer so
        the decode is unchanged.

    Every move is accepted only if the loss does not rise, so the per-epoch
    mean losses are non-increasing.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    shapes = {img.pixels.shape for img in corpus}
    if len(shapes) != 1:
        raise ValueError(f"corpus images differ in shape: {sorted(shapes)}")
    X = np.stack([img.flat() for img in corpus], axis=1)
    if stack is None:
        dims = list(layer_dims) if layer_dims is not None else [X.shape[0], *DEFAULT_DIMS[1:]]
        stack = init_stack(dims, cfg.seed)
    if stack.layer_dims[0] != X.shape[0]:
        raise ValueError("stack input dimension does not match corpus images")
    if len(cfg.alphas) != stack.depth:
        raise ValueError(f"need {stack.depth} alphas, got {len(cfg.alphas)}")
    if s.cols != X.shape[0]:
        raise ValueError("sensing matrix does not match corpus image size")
    S = s.as_float()
    obj = _Objective(X, S, S @ X, cfg)

    layers = [D.copy() for D in stack.layers]
    top = encode_array(stack, X, cfg.alphas, cfg.code_iters)[-1]
    cur = obj(layers, top)
    etas = [cfg.dict_step] * len(layers)
    code_eta = 1.0
    history: list[LossBreakdown] = []
    for epoch in range(cfg.epochs):
        # (a) codes
        warm = chain_codes(layers, top)
        fresh = encode_array(DictionaryStack(layers), X, cfg.alphas, cfg.code_iters, warm=warm)[-1]
        bd = obj(layers, fresh)
        if bd.total <= cur.total:
            top, cur = fresh, bd
        target = _code_target(obj, layers)
        base = top
        found = _line_search(obj, cur.total, lambda e: (layers, base + e * (target - base)), min(1.0, 2 * code_eta))
        if found is not None:
            (_, top), cur, code_eta = found

        # (b) + (c) dictionaries, one block at a time
        for i in range(len(layers)):
            target = _layer_target(obj, layers, top, i)
            base_layers, base_top = layers, top

            def make(e, i=i, target=target):
                trial = list(base_layers)
                trial[i] = base_layers[i] + e * (target - base_layers[i])
                return _renormalize(trial, base_top)

            found = _line_search(obj, cur.total, make, min(1.0, 2 * etas[i]))
            if found is not None:
                (layers, top), cur, etas[i] = found

        if not np.isfinite(cur.total) or cur.total > DIVERGENCE_LIMIT:
            raise TrainingDiverged(f"loss {cur.total:.3e} at epoch {epoch} exceeds {DIVERGENCE_LIMIT:.0e}")
        history.append(cur)
        log.debug("epoch %d %s", epoch, cur)

    out = DictionaryStack(layers, stack.seed, stack.epochs_trained + cfg.epochs, cfg.alphas)
    return out, history


def mutual_coherence_effective(s: SensingMatrix, stack: DictionaryStack) -> CoherenceReport:
    if s.cols != stack.layer_dims[0]:
        raise ValueError("sensing matrix columns do not match stack input dimension")
    return mutual_coherence(s.as_float() @ stack.product())


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------


def save_stack(stack: DictionaryStack, path) -> None:
    alphas = ",".join(repr(float(a)) for a in stack.default_alphas())
    with open(path, "w") as fh:
        fh.write(f"# hadcs-dictionary v{FORMAT_VERSION}\n")
        fh.write(f"layer_dims={','.join(str(d) for d in stack.layer_dims)}\n")
        fh.write(f"seed={stack.seed}\nepochs={stack.epochs_trained}\nalphas={alphas}\n")
        for i, D in enumerate(stack.layers):
            fh.write(f"# layer {i} {D.shape[0]} {D.shape[1]}\n")
            for row in D:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_stack(path) -> DictionaryStack:
    lines = strip_header(Path(path).read_text().splitlines())
    if not lines or not lines[0].startswith("# hadcs-dictionary v"):
        raise ValueError("not a hadcs dictionary file")
    version = int(lines[0].rsplit("v", 1)[1])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dictionary format version {version}")
    meta = dict(line.split("=", 1) for line in lines[1:5])
    dims = [int(d) for d in meta["layer_dims"].split(",")]
    pos = 5
    layers = []
    for a, b in zip(dims, dims[1:]):
        header = lines[pos].split()
        if header[1] != "layer" or (int(header[3]), int(header[4])) != (a, b):
            raise ValueError(f"bad layer header: {lines[pos]!r}")
        rows = lines[pos + 1 : pos + 1 + a]
        layers.append(np.array([[float(v) for v in r.split()] for r in rows]).reshape(a, b))
        pos += 1 + a
    alphas = tuple(float(a) for a in meta["alphas"].split(","))
    return DictionaryStack(layers, int(meta["seed"]), int(meta["epochs"]), alphas)


def save_loss_trace(history: Sequence[LossBreakdown], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,l1_codes,image_mse,meas_mse,total\n")
        for i, h in enumerate(history):
            fh.write(f"{i},{h.l1_codes!r},{h.image_mse!r},{h.meas_mse!r},{h.total!r}\n")
