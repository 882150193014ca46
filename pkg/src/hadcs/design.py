"""Choose which mask shifts to measure by minimising mutual coherence."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .provenance import strip_header
from .rng import derive_seed, generator
from .sensing import (
    CoherenceReport,
    MaskKind,
    MaskMatrix,
    SensingMatrix,
    build_sensing_matrix,
    coherence_of_gram,
    format_shifts,
    mutual_coherence,
    parse_shifts,
)


class Strategy(str, enum.Enum):
    GREEDY = "GreedyForward"
    RANDOM = "RandomBaseline"


@dataclass(frozen=True)
class DesignConfig:
    L: int
    candidate_shifts: tuple[int, ...] | None = None
    strategy: Strategy = Strategy.GREEDY
    restarts: int = 1
    seed: int = 0
    exchange_passes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.candidate_shifts is not None:
            object.__setattr__(self, "candidate_shifts", tuple(int(c) for c in self.candidate_shifts))
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")
        if self.exchange_passes < 0:
            raise ValueError("exchange_passes must be nonnegative")


def _candidates(mask: MaskMatrix, cfg: DesignConfig) -> np.ndarray:
    cands = np.arange(mask.order) if cfg.candidate_shifts is None else np.array(cfg.candidate_shifts, dtype=np.int64)
    if len(set(cands.tolist())) != cands.size:
        raise ValueError("candidate shifts must be distinct")
    if cands.size and (cands.min() < 0 or cands.max() >= mask.order):
        raise ValueError("candidate shift out of range")
    if cfg.L > cands.size:
        raise ValueError(f"L={cfg.L} exceeds the {cands.size} available candidate shifts")
    return cands


def effective_rows(mask: MaskMatrix, cands: np.ndarray, basis: np.ndarray | None) -> np.ndarray:
    rows = mask.entries[cands].astype(np.float64)
    return rows if basis is None else rows @ basis


def greedy_order(Y: np.ndarray, L: int, first: int) -> tuple[list[int], list[float]]:
    """Greedy forward selection over the rows of ``Y``.

    Starts from row ``first`` and repeatedly appends the row that keeps the
    coherence of the selected rows lowest; ties go to the lowest row index.
    Returns the selected row indices and the coherence after each step.
    """
    c, k = Y.shape
    G = np.outer(Y[first], Y[first])
    chosen = [first]
    avail = np.ones(c, dtype=bool)
    avail[first] = False
    trace = [_score_gram(G)]
    scores = np.empty(c)
    for _ in range(1, L):
        idx = np.flatnonzero(avail)
        sub = scores[: idx.size]
        _scores(G, Y, idx, sub)
        # np.argmin returns the first minimum, i.e. the lowest index
        best = int(idx[int(np.argmin(sub))])
        chosen.append(best)
        avail[best] = False
        G += np.outer(Y[best], Y[best])
        trace.append(float(sub.min()))
    return chosen, trace


def _scores(G, Y, idx, out):
    kernels.candidate_scores(G, np.ascontiguousarray(Y[idx]), out)
    # fewer than two usable columns scores -1 in the kernel; coherence is 0 there
    np.maximum(out, 0.0, out=out)
    return out


def exchange(Y: np.ndarray, rows: list[int], passes: int) -> tuple[list[int], float]:
    """Swap refinement of a row selection.

    For each selected slot in turn, the row is replaced by the unselected
    row giving the lowest coherence, if that is strictly lower than the
    current value. Forward selection alone stalls on plateaus where every
    candidate ties (e.g. coherence 1 while duplicate columns remain);
    exchanges escape them. Stops after ``passes`` sweeps or a sweep with
    no improvement.
    """
    rows = list(rows)
    sub = Y[rows]
    G = sub.T @ sub
    mu = _score_gram(G)
    avail = np.ones(Y.shape[0], dtype=bool)
    avail[rows] = False
    buf = np.empty(Y.shape[0])
    for _ in range(passes):
        improved = False
        for slot in range(len(rows)):
            old = rows[slot]
            Gm = G - np.outer(Y[old], Y[old])
            idx = np.flatnonzero(avail)
            if not idx.size:
                return rows, mu
            sc = _scores(Gm, Y, idx, buf[: idx.size])
            k = int(np.argmin(sc))
            if sc[k] < mu - 1e-12:
                new = int(idx[k])
                rows[slot] = new
                avail[old], avail[new] = True, False
                G = Gm + np.outer(Y[new], Y[new])
                mu = float(sc[k])
                improved = True
        if not improved:
            break
    return rows, mu


def _score_gram(G: np.ndarray) -> float:
    mu, i, _ = kernels.gram_coherence(np.ascontiguousarray(G))
    return float(mu) if i >= 0 else 0.0


def _start_row(Y: np.ndarray, rng: np.random.Generator) -> int:
    """Best single row, scanning candidates in a seeded random order."""
    order = rng.permutation(Y.shape[0])
    best, best_score = -1, np.inf
    for r in order:
        sc = _score_gram(np.outer(Y[r], Y[r]))
        if sc < best_score:
            best, best_score = int(r), sc
    return best


def design_rows(mask: MaskMatrix, stack=None, cfg: DesignConfig | None = None) -> SensingMatrix:
    """Pick ``cfg.L`` shifts of ``mask``.

    GreedyForward minimises the coherence of ``S @ D`` (``D`` the chained
    dictionary, when a stack is given) or of ``S`` alone: forward selection
    followed by ``cfg.exchange_passes`` sweeps of :func:`exchange`. RandomBaseline
    draws ``L`` distinct shifts uniformly. Either way the best of
    ``cfg.restarts`` seeded attempts is returned.
    """
    if cfg is None:
        raise ValueError("a DesignConfig is required")
    cands = _candidates(mask, cfg)
    basis = stack.product() if stack is not None else None
    if basis is not None and basis.shape[0] != mask.order:
        raise ValueError("dictionary input dimension does not match mask order")
    Y = effective_rows(mask, cands, basis)

    best_rows, best_mu = None, np.inf
    for restart in range(cfg.restarts):
        rng = generator(derive_seed(cfg.seed, f"design-{cfg.strategy.value}", restart))
        if cfg.L == cands.size:
            rows = list(range(cands.size))
        elif cfg.strategy is Strategy.RANDOM:
            rows = [int(r) for r in rng.choice(cands.size, cfg.L, replace=False)]
        else:
            rows, _ = greedy_order(Y, cfg.L, _start_row(Y, rng))
            if cfg.exchange_passes:
                rows, _ = exchange(Y, rows, cfg.exchange_passes)
        sub = Y[rows]
        mu = _score_gram(sub.T @ sub) if cfg.L > 0 else 0.0
        if mu < best_mu:
            best_rows, best_mu = rows, mu
    return build_sensing_matrix(mask, [int(cands[r]) for r in best_rows])


def greedy_prefixes(mask: MaskMatrix, stack, L_max: int, seed: int = 0, restarts: int = 1, candidate_shifts=None):
    """One forward-selection pass per restart up to ``L_max`` rows.

    Returns ``(shift_orders, coherence_traces)``; the forward-only design for
    any ``L <= L_max`` is the ``L``-prefix of the restart with lowest
    ``trace[L-1]``, identical to ``design_rows`` with ``exchange_passes=0``.
    Sweeps over many ``L`` use this to share one pass.
    """
    cfg = DesignConfig(L=L_max, candidate_shifts=candidate_shifts, restarts=restarts, seed=seed)
    cands = _candidates(mask, cfg)
    basis = stack.product() if stack is not None else None
    Y = effective_rows(mask, cands, basis)
    orders, traces = [], []
    for restart in range(restarts):
        rng = generator(derive_seed(seed, f"design-{Strategy.GREEDY.value}", restart))
        rows, trace = greedy_order(Y, L_max, _start_row(Y, rng))
        orders.append([int(cands[r]) for r in rows])
        traces.append(trace)
    return orders, traces


def prefix_design(mask: MaskMatrix, orders, traces, L: int) -> SensingMatrix:
    if L == mask.order:
        return build_sensing_matrix(mask, range(mask.order))
    best = min(range(len(orders)), key=lambda r: (traces[r][L - 1], r))
    return build_sensing_matrix(mask, orders[best][:L])


@dataclass(frozen=True)
class DesignReport:
    coherence: CoherenceReport
    shifts: tuple[int, ...]
    effective: bool


def design_report(s: SensingMatrix, stack=None) -> DesignReport:
    if stack is not None:
        A = s.as_float() @ stack.product()
        return DesignReport(mutual_coherence(A), s.shifts, True)
    return DesignReport(mutual_coherence(s), s.shifts, False)


def save_shifts(s: SensingMatrix, path, kind: MaskKind | None = None) -> None:
    src = s.source
    kind = kind or (src.kind if src is not None else MaskKind.TWIN_PRIME)
    n = src.order if src is not None else s.cols
    with open(path, "w") as fh:
        fh.write(f"# hadcs-shifts kind={MaskKind(kind).value} n={n} L={s.rows}\n")
        fh.write(format_shifts(s.shifts) + "\n")


def load_shifts(path) -> tuple[dict[str, str], list[int]]:
    lines = strip_header(Path(path).read_text().splitlines())
    if not lines or not lines[0].startswith("# hadcs-shifts"):
        raise ValueError("not a hadcs shifts file")
    meta = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    shifts = parse_shifts(lines[1] if len(lines) > 1 else "")
    if len(shifts) != int(meta["L"]):
        raise ValueError("shift count does not match header")
    return meta, shifts


def coherence_of_rows(mask: MaskMatrix, shifts: Sequence[int], stack=None) -> float:
    Y = effective_rows(mask, np.asarray(shifts), stack.product() if stack is not None else None)
    return coherence_of_gram(Y.T @ Y).mu
