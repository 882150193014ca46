"""BER trials, per-letter maximum lossless compression ratio and sweeps."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import multiprocessing as mp
import numpy as np

from .channel import Image, NoiseSpec, add_noise, measure, pixel_power
from .corpus import LETTERS, render_letter
from .design import Strategy, DesignConfig, design_rows, greedy_prefixes, prefix_design
from .reconstruction import SolverConfig, binary_threshold, lasso_fista, reconstruct_dl
from .rng import derive_seed
from .sensing import MaskMatrix, SensingMatrix, build_sensing_matrix

log = logging.getLogger(__name__)

M_GRID = tuple(range(1, 17))
SNR_GRID = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0)
RECORD_COLUMNS = ("letter", "M", "L", "snr_db", "seed", "solver", "ber", "iters")


class Solver(str, enum.Enum):
    LASSO = "Lasso"
    DLCSNET = "DLCSNet"


@dataclass(frozen=True)
class EvalRecord:
    letter: str
    M: float
    L: int
    snr_db: float
    seed: int
    solver: Solver
    ber: float
    iters: int

    @property
    def key(self) -> tuple:
        return (self.letter, self.L, self.snr_db, self.seed, Solver(self.solver).value)

    def row(self) -> list[str]:
        return [
            self.letter,
            f"{self.M:.6f}",
            str(self.L),
            _fmt_snr(self.snr_db),
            str(self.seed),
            Solver(self.solver).value,
            f"{self.ber:.9f}",
            str(self.iters),
        ]


@dataclass(frozen=True)
class SweepSummary:
    per_letter_max_M: dict[str, int]
    mean_M: float
    median_M: float
    snr_db: float
    solver: Solver | None = None


def _fmt_snr(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def ber(a: Image, b: Image) -> float:
    """Fraction of differing pixels between two binary images."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(f"shape mismatch: {a.pixels.shape} vs {b.pixels.shape}")
    for img in (a, b):
        if not np.isin(img.pixels, (0.0, 1.0)).all():
            raise ValueError("ber expects binary images")
    return float(np.count_nonzero(a.pixels != b.pixels)) / a.n


def trial(
    letter: str,
    M: float,
    snr_db: float,
    seed: int,
    solver: Solver | str,
    design: SensingMatrix,
    stack=None,
    *,
    lasso_cfg: SolverConfig | None = None,
    dl_cfg: SolverConfig | None = None,
    theta: float = 0.5,
) -> EvalRecord:
    """render -> measure -> add_noise -> reconstruct -> threshold -> BER."""
    solver = Solver(solver)
    src = design.source
    if src is None:
        raise ValueError("design must carry its source mask for image geometry")
    n = design.cols
    if round(n / M) != design.rows:
        raise ValueError(f"design has L={design.rows} rows, expected round({n}/{M}) = {round(n / M)}")
    img = render_letter(letter, src.p, src.q)
    t = measure(design, img)
    noise_seed = derive_seed(seed, "noise", LETTERS.index(letter), design.rows)
    t = add_noise(t, NoiseSpec(snr_db, noise_seed), max(pixel_power(img), 1e-12))
    if solver is Solver.LASSO:
        res = lasso_fista(design, t, None, lasso_cfg or SolverConfig())
    else:
        if stack is None:
            raise ValueError("DLCSNet trials need a dictionary stack")
        res = reconstruct_dl(design, t, stack, dl_cfg or SolverConfig())
    out = binary_threshold(res.image, theta)
    return EvalRecord(letter, n / design.rows, design.rows, float(snr_db), int(seed), solver, ber(out, img), res.iters_used)


# --------------------------------------------------------------------------
# evaluation context: designs per (solver, L), solver settings, seeds
# --------------------------------------------------------------------------


@dataclass
class EvalContext:
    """Everything a trial needs besides (letter, M, snr, seed, solver).

    ``dl_design`` is the strategy used for DLCSNet rows (greedy on the
    effective matrix by default); the canonical LASSO baseline always
    uses seeded pseudo-random rows.
    """

    mask: MaskMatrix
    stack: object = None
    M_grid: tuple[int, ...] = M_GRID
    trials_per_M: int = 10
    master_seed: int = 0
    lasso_cfg: SolverConfig = field(default_factory=lambda: SolverConfig(lam=1.0, max_iters=3000, tol=1e-9))
    dl_cfg: SolverConfig = field(default_factory=lambda: SolverConfig(max_iters=1000, tol=1e-8))
    dl_design: Strategy = Strategy.GREEDY
    design_restarts: int = 1
    theta: float = 0.5
    _designs: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.mask.order

    def L_of(self, M: float) -> int:
        return max(1, round(self.n / M))

    def seeds(self, count: int | None = None) -> list[int]:
        count = self.trials_per_M if count is None else count
        return [derive_seed(self.master_seed, "trial", j) for j in range(count)]

    def design(self, solver: Solver | str, M: float) -> SensingMatrix:
        solver = Solver(solver)
        L = self.L_of(M)
        key = (solver, L)
        if key in self._designs:
            return self._designs[key]
        if L == self.n:
            s = build_sensing_matrix(self.mask, range(self.n))
        elif solver is Solver.DLCSNET and self.dl_design is Strategy.GREEDY:
            self._greedy_upto(L)
            orders, traces = self._designs["greedy"]
            s = prefix_design(self.mask, orders, traces, L)
        else:
            strategy = Strategy.RANDOM
            seed = derive_seed(self.master_seed, "design", L)
            s = design_rows(self.mask, None, DesignConfig(L=L, strategy=strategy, seed=seed))
        self._designs[key] = s
        return s

    def _greedy_upto(self, L: int) -> None:
        have = self._designs.get("greedy")
        if have is not None and len(have[0][0]) >= L:
            return
        L_max = max([self.L_of(m) for m in self.M_grid if self.L_of(m) < self.n] + [L])
        seed = derive_seed(self.master_seed, "design")
        self._designs["greedy"] = greedy_prefixes(self.mask, self.stack, L_max, seed=seed, restarts=self.design_restarts)

    def prepare(self, solvers: Iterable[Solver | str]) -> None:
        """Build every design up front (before forking workers)."""
        for solver in solvers:
            for M in self.M_grid:
                self.design(solver, M)

    def run_trial(self, letter: str, M: float, snr_db: float, seed: int, solver: Solver | str) -> EvalRecord:
        return trial(
            letter,
            M,
            snr_db,
            seed,
            solver,
            self.design(solver, M),
            self.stack,
            lasso_cfg=self.lasso_cfg,
            dl_cfg=self.dl_cfg,
            theta=self.theta,
        )


def max_lossless_M(
    letter: str,
    snr_db: float,
    solver: Solver | str,
    trials_per_M: int | None,
    ctx: EvalContext,
    cache: dict | None = None,
    records: list | None = None,
) -> int:
    """Largest grid M at which every trial seed reconstructs with BER 0.

    The grid is scanned from the top; at each M the seeds run in order and
    the scan moves on at the first failure. Returns 1 when no M passes.
    ``cache`` maps record keys to previously computed records (journal
    resume); every record used is appended to ``records``.
    """
    seeds = ctx.seeds(trials_per_M)
    for M in sorted(ctx.M_grid, reverse=True):
        L = ctx.L_of(M)
        ok = True
        for seed in seeds:
            key = (letter, L, float(snr_db), seed, Solver(solver).value)
            rec = cache.get(key) if cache is not None else None
            if rec is None:
                rec = ctx.run_trial(letter, M, snr_db, seed, solver)
                if cache is not None:
                    cache[key] = rec
            if records is not None:
                records.append(rec)
            if rec.ber > 0:
                ok = False
                break
        if ok:
            return int(M)
    return 1


def summarize(records: Sequence[EvalRecord], letters: Sequence[str] | None = None) -> SweepSummary:
    """Mean and median of per-letter max lossless M over one (solver, SNR)."""
    if not records:
        raise ValueError("no records to summarize")
    snrs = {r.snr_db for r in records}
    solvers = {Solver(r.solver) for r in records}
    if len(snrs) != 1 or len(solvers) != 1:
        raise ValueError("summarize expects records for a single SNR and solver")
    present = sorted({r.letter for r in records})
    if letters is not None:
        missing = sorted(set(letters) - set(present))
        if missing:
            raise ValueError(f"records do not cover letters {missing}")
    by_letter: dict[str, dict[int, list[float]]] = {}
    for r in records:
        by_letter.setdefault(r.letter, {}).setdefault(round(r.M), []).append(r.ber)
    per = {}
    for letter in present:
        passing = [m for m, bers in by_letter[letter].items() if all(b == 0 for b in bers)]
        per[letter] = max(passing) if passing else 1
    vals = list(per.values())
    return SweepSummary(per, float(statistics.fmean(vals)), float(statistics.median(vals)), snrs.pop(), solvers.pop())


# --------------------------------------------------------------------------
# sweep with journal
# --------------------------------------------------------------------------

_WORKER_CTX: EvalContext | None = None


def _init_worker(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx
    os.environ.setdefault("OMP_NUM_THREADS", "1")


def _run_job(job):
    letter, snr, solver, trials, cache = job
    records: list[EvalRecord] = []
    m = max_lossless_M(letter, snr, solver, trials, _WORKER_CTX, dict(cache), records)
    return job[:3], m, records


def record_to_json(r: EvalRecord) -> str:
    d = asdict(r)
    d["solver"] = Solver(r.solver).value
    d["snr_db"] = _fmt_snr(r.snr_db)
    return json.dumps(d, sort_keys=True)


def record_from_json(line: str) -> EvalRecord:
    d = json.loads(line)
    d["solver"] = Solver(d["solver"])
    d["snr_db"] = float(d["snr_db"])
    return EvalRecord(**d)


def load_journal(path) -> dict:
    cache = {}
    p = Path(path)
    if not p.exists():
        return cache
    with open(p) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = record_from_json(line)
            except (ValueError, KeyError, TypeError):
                # a torn final line from an interrupted run
                continue
            cache[rec.key] = rec
    return cache


def _drop_torn_tail(path) -> None:
    """Cut a partial last line left by an interrupted writer."""
    p = Path(path)
    if not p.exists():
        return
    data = p.read_bytes()
    if data and not data.endswith(b"\n"):
        p.write_bytes(data[: data.rfind(b"\n") + 1])


def sweep(
    letters: Sequence[str],
    snr_list: Sequence[float],
    solvers: Sequence[Solver | str],
    ctx: EvalContext,
    journal=None,
    workers: int = 1,
) -> tuple[list[SweepSummary], list[EvalRecord]]:
    """Run ``max_lossless_M`` for every (solver, snr, letter).

    Records are journaled as JSON lines (single writer, append-only) and a
    rerun with the same journal reuses them. Returned records are sorted,
    so the result does not depend on worker count or interruption.
    """
    if not letters or not snr_list or not solvers:
        raise ValueError("letters, snr_list and solvers must be nonempty")
    solvers = [Solver(s) for s in solvers]
    cache = load_journal(journal) if journal is not None else {}
    ctx.prepare(solvers)
    jobs = []
    for solver in solvers:
        for snr in snr_list:
            for letter in letters:
                sub = {k: v for k, v in cache.items() if k[0] == letter and k[2] == float(snr) and k[4] == solver.value}
                jobs.append((letter, float(snr), solver, ctx.trials_per_M, sub))

    if journal is not None:
        _drop_torn_tail(journal)
    fh = open(journal, "a") if journal is not None else None
    all_records: dict[tuple, EvalRecord] = {}
    try:
        if workers <= 1:
            _init_worker(ctx)
            results = map(_run_job, jobs)
        else:
            method = "fork" if "fork" in mp.get_all_start_methods() else "spawn"
            pool = ProcessPoolExecutor(workers, mp_context=mp.get_context(method), initializer=_init_worker, initargs=(ctx,))
            results = pool.map(_run_job, jobs)
        for _, _, recs in results:
            for r in recs:
                if r.key not in all_records:
                    all_records[r.key] = r
                    if fh is not None and r.key not in cache:
                        fh.write(record_to_json(r) + "\n")
                        fh.flush()
        if workers > 1:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()

    records = sorted(all_records.values(), key=_record_order)
    summaries = []
    for solver in solvers:
        for snr in snr_list:
            sub = [r for r in records if Solver(r.solver) is solver and r.snr_db == float(snr)]
            summaries.append(summarize(sub, letters))
    return summaries, records


def _record_order(r: EvalRecord):
    return (Solver(r.solver).value, r.snr_db, r.letter, -r.L, r.seed)


# --------------------------------------------------------------------------
# CSV export
# --------------------------------------------------------------------------


def records_csv(records: Sequence[EvalRecord], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def summary_csv(summaries: Sequence[SweepSummary], header: str | None = None) -> str:
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("solver", "snr_db", "letter", "max_M"))
    for s in summaries:
        solver = Solver(s.solver).value if s.solver is not None else ""
        for letter in sorted(s.per_letter_max_M):
            w.writerow((solver, _fmt_snr(s.snr_db), letter, s.per_letter_max_M[letter]))
        w.writerow((solver, _fmt_snr(s.snr_db), "mean", f"{s.mean_M:.6f}"))
        w.writerow((solver, _fmt_snr(s.snr_db), "median", f"{s.median_M:.6f}"))
    return buf.getvalue()


def plot_data_csv(summaries: Sequence[SweepSummary], header: str | None = None) -> str:
    """Long-form per-letter M vs SNR curves."""
    buf = io.StringIO()
    if header:
        buf.write(f"# {header}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("letter", "solver", "snr_db", "max_M"))
    rows = []
    for s in summaries:
        solver = Solver(s.solver).value if s.solver is not None else ""
        for letter, m in s.per_letter_max_M.items():
            rows.append((letter, solver, s.snr_db, m))
    for letter, solver, snr, m in sorted(rows):
        w.writerow((letter, solver, _fmt_snr(snr), m))
    return buf.getvalue()


def required_snr(summaries: Sequence[SweepSummary], target_M: float) -> dict[tuple[str, str], float | None]:
    """Lowest SNR at which each (solver, letter) reaches ``target_M``."""
    out: dict[tuple[str, str], float | None] = {}
    for s in sorted(summaries, key=lambda s: s.snr_db):
        solver = Solver(s.solver).value if s.solver is not None else ""
        for letter, m in s.per_letter_max_M.items():
            out.setdefault((solver, letter), None)
            if m >= target_M and out[(solver, letter)] is None:
                out[(solver, letter)] = s.snr_db
    return out
