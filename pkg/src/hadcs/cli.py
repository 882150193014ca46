"""Batch command-line front end.

    hadcs gen-mask | train | design | sweep | report  [--config FILE] [--out DIR]
          [--workers N] [--seed N] [--resume]

The config is a JSON file with the sections below (every key optional,
unknown keys rejected)::

    {"master_seed": 0,
     "mask":   {"kind": "TwinPrimeS", "p": 41, "q": 43},
     "design": {"L": 147, "strategy": "GreedyForward", "restarts": 1,
                "candidate_shifts": null, "use_dictionary": true},
     "train":  {"alphas": [0.01, 0.01], "beta": 1.0, "gamma": 1.0,
                "epochs": 100, "code_iters": 100, "dict_step": 1.0,
                "layer_dims": null, "letters": "A..Z", "augment": 0,
                "measure_rows": 147},
     "eval":   {"letters": "A..Z", "M_grid": [1, ..., 16], "snr_grid": [12.0],
                "seeds": 10, "solvers": ["Lasso", "DLCSNet"],
                "lasso_lam": 1.0, "lasso_max_iters": 3000, "lasso_tol": 1e-9,
                "dl_max_iters": 1000, "dl_tol": 1e-8,
                "dl_design": "GreedyForward", "design_restarts": 1,
                "theta": 0.5, "target_M": 5.0},
     "paths":  {"out_dir": "hadcs-out", "mask_file": "mask.txt",
                "dict_file": "dictionary.txt", "loss_file": "loss.csv",
                "shifts_file": "shifts.txt", "journal": "journal.jsonl"}}

Relative paths resolve against the output directory. The output directory
is ``--out``, else ``$HADCS_OUT_DIR``, else ``paths.out_dir``.

Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import LETTERS, augment, render_letter
from .design import DesignConfig, Strategy, design_report, design_rows, save_shifts
from .dictionary import DEFAULT_DIMS, TrainConfig, TrainingDiverged, load_stack, save_loss_trace, save_stack, train
from .evaluation import (
    EvalContext,
    EvalRecord,
    Solver,
    plot_data_csv,
    records_csv,
    required_snr,
    summarize,
    summary_csv,
    sweep,
)
from .provenance import config_hash, header_line
from .reconstruction import SolverConfig
from .rng import derive_seed, generator
from .sensing import MaskKind, build_sensing_matrix, make_mask, save_mask

log = logging.getLogger("hadcs")

OUT_ENV = "HADCS_OUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------


@dataclass
class MaskSection:
    kind: str = MaskKind.TWIN_PRIME.value
    p: int = 41
    q: int = 43


@dataclass
class DesignSection:
    L: int = 147
    strategy: str = Strategy.GREEDY.value
    restarts: int = 1
    candidate_shifts: list | None = None
    use_dictionary: bool = True


@dataclass
class TrainSection:
    alphas: list = field(default_factory=lambda: [0.01, 0.01])
    beta: float = 1.0
    gamma: float = 1.0
    epochs: int = 100
    code_iters: int = 100
    dict_step: float = 1.0
    layer_dims: list | None = None
    letters: str = LETTERS
    augment: int = 0
    measure_rows: int = 147


@dataclass
class EvalSection:
    letters: str = LETTERS
    M_grid: list = field(default_factory=lambda: list(range(1, 17)))
    snr_grid: list = field(default_factory=lambda: [12.0])
    seeds: int = 10
    solvers: list = field(default_factory=lambda: [Solver.LASSO.value, Solver.DLCSNET.value])
    lasso_lam: float | None = 1.0
    lasso_max_iters: int = 3000
    lasso_tol: float = 1e-9
    dl_max_iters: int = 1000
    dl_tol: float = 1e-8
    dl_design: str = Strategy.GREEDY.value
    design_restarts: int = 1
    theta: float = 0.5
    target_M: float = 5.0


@dataclass
class PathsSection:
    out_dir: str = "hadcs-out"
    mask_file: str = "mask.txt"
    dict_file: str = "dictionary.txt"
    loss_file: str = "loss.csv"
    shifts_file: str = "shifts.txt"
    journal: str = "journal.jsonl"


_SECTIONS = {
    "mask": MaskSection,
    "design": DesignSection,
    "train": TrainSection,
    "eval": EvalSection,
    "paths": PathsSection,
}


@dataclass
class RunConfig:
    master_seed: int = 0
    mask: MaskSection = field(default_factory=MaskSection)
    design: DesignSection = field(default_factory=DesignSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    paths: PathsSection = field(default_factory=PathsSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"master_seed", *_SECTIONS}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for name, klass in _SECTIONS.items():
            sub = d.get(name, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"section {name!r} must be an object")
            allowed = {f.name for f in dataclasses.fields(klass)}
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
            kw[name] = klass(**sub)
        seed = d.get("master_seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("master_seed must be a nonnegative integer")
        cfg = cls(master_seed=seed, **kw)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None

    def content_hash(self) -> str:
        """Hash of everything that affects results (paths excluded)."""
        d = self.to_dict()
        d.pop("paths")
        return config_hash(d)

    # validation is kept shallow here; component constructors do the rest
    def validate(self) -> None:
        try:
            MaskKind(self.mask.kind)
            Strategy(self.design.strategy)
            Strategy(self.eval.dl_design)
            for s in self.eval.solvers:
                Solver(s)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        for name, letters in (("train.letters", self.train.letters), ("eval.letters", self.eval.letters)):
            if not isinstance(letters, str) or set(letters) - set(LETTERS) or len(set(letters)) != len(letters):
                raise ConfigError(f"{name} must be distinct characters from A-Z")
        if not self.eval.letters:
            raise ConfigError("eval.letters is empty")
        if not self.eval.M_grid or any(not (isinstance(m, (int, float)) and m >= 1) for m in self.eval.M_grid):
            raise ConfigError("eval.M_grid must be a nonempty list of numbers >= 1")
        if not self.eval.snr_grid or not self.eval.solvers:
            raise ConfigError("eval.snr_grid and eval.solvers must be nonempty")
        if not (isinstance(self.eval.seeds, int) and self.eval.seeds >= 1):
            raise ConfigError("eval.seeds must be a positive integer")
        if self.train.augment < 0 or self.train.measure_rows < 1:
            raise ConfigError("train.augment must be >= 0 and train.measure_rows >= 1")
        if self.design.L < 1 or self.design.restarts < 1 or self.eval.design_restarts < 1:
            raise ConfigError("design.L and restarts must be positive")


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return RunConfig.from_json(text)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


@dataclass
class Run:
    cfg: RunConfig
    out: Path
    workers: int = 1
    resume: bool = False

    @property
    def hash(self) -> str:
        return self.cfg.content_hash()

    def path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.out / p

    def write(self, name: str, text: str) -> Path:
        """Write ``text`` behind a config-hash header, atomically."""
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        tmp.write_text(header_line(self.hash) + text)
        os.replace(tmp, p)
        return p

    def write_with(self, name: str, saver, *args) -> Path:
        """Run a module ``save_*`` function, then prepend the header."""
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        tmp = p.with_name(p.name + ".tmp")
        saver(*args, tmp)
        body = tmp.read_text()
        tmp.write_text(header_line(self.hash) + body)
        os.replace(tmp, p)
        return p

    def mask(self):
        m = self.cfg.mask
        return make_mask(m.kind, m.p, m.q)

    def stack(self, required: bool = True):
        p = self.path(self.cfg.paths.dict_file)
        if not p.exists():
            if required:
                raise FileNotFoundError(f"dictionary file {p} not found; run `hadcs train` first")
            return None
        return load_stack(p)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_gen_mask(run: Run) -> list[Path]:
    mask = run.mask()
    p = run.write_with(run.cfg.paths.mask_file, save_mask, mask)
    log.info("mask %s order %d -> %s", mask.kind.value, mask.order, p)
    return [p]


def train_corpus(cfg: RunConfig, p: int, q: int):
    letters = cfg.train.letters
    if not letters:
        raise ConfigError("train.letters is empty: nothing to train on")
    imgs = [render_letter(c, p, q) for c in letters]
    return augment(imgs, cfg.train.augment) if cfg.train.augment else imgs


def training_matrix(cfg: RunConfig, mask):
    """Seeded pseudo-random rows used for the measurement term of training."""
    L = cfg.train.measure_rows
    if L > mask.order:
        raise ConfigError(f"train.measure_rows={L} exceeds mask order {mask.order}")
    rng = generator(derive_seed(cfg.master_seed, "train-rows"))
    return build_sensing_matrix(mask, sorted(int(r) for r in rng.choice(mask.order, L, replace=False)))


def cmd_train(run: Run) -> list[Path]:
    cfg = run.cfg
    mask = run.mask()
    corpus = train_corpus(cfg, mask.p, mask.q)
    t = cfg.train
    dims = list(t.layer_dims) if t.layer_dims is not None else [mask.order, *DEFAULT_DIMS[1:]]
    if dims[0] != mask.order:
        raise ConfigError(f"train.layer_dims[0]={dims[0]} must equal the mask order {mask.order}")
    tc = TrainConfig(
        alphas=tuple(t.alphas),
        beta=t.beta,
        gamma=t.gamma,
        epochs=t.epochs,
        code_iters=t.code_iters,
        dict_step=t.dict_step,
        seed=derive_seed(cfg.master_seed, "dictionary"),
    )
    t0 = time.perf_counter()
    stack, history = train(corpus, training_matrix(cfg, mask), tc, layer_dims=dims)
    log.info("trained %s on %d images in %.1fs, loss %.4g -> %.4g", dims, len(corpus), time.perf_counter() - t0, history[0].total, history[-1].total)
    return [
        run.write_with(cfg.paths.dict_file, save_stack, stack),
        run.write_with(cfg.paths.loss_file, save_loss_trace, history),
    ]


def cmd_design(run: Run) -> list[Path]:
    cfg = run.cfg
    mask = run.mask()
    d = cfg.design
    stack = run.stack() if d.use_dictionary else None
    dc = DesignConfig(
        L=d.L,
        candidate_shifts=d.candidate_shifts,
        strategy=Strategy(d.strategy),
        restarts=d.restarts,
        seed=derive_seed(cfg.master_seed, "design"),
    )
    s = design_rows(mask, stack, dc)
    rep = design_report(s, stack)
    c = rep.coherence
    log.info("design L=%d mu=%.6f worst=%s", s.rows, c.mu, c.worst_pair)
    shifts = run.write_with(cfg.paths.shifts_file, save_shifts, s)
    report = run.write(
        "design_report.csv",
        "L,strategy,effective,mu,worst_i,worst_j,zero_columns\n"
        f"{s.rows},{dc.strategy.value},{int(rep.effective)},{c.mu!r},{c.worst_pair[0]},{c.worst_pair[1]},{len(c.zero_columns)}\n",
    )
    return [shifts, report]


def eval_context(cfg: RunConfig, mask, stack) -> EvalContext:
    e = cfg.eval
    return EvalContext(
        mask,
        stack,
        M_grid=tuple(e.M_grid),
        trials_per_M=e.seeds,
        master_seed=cfg.master_seed,
        lasso_cfg=SolverConfig(lam=e.lasso_lam, max_iters=e.lasso_max_iters, tol=e.lasso_tol),
        dl_cfg=SolverConfig(max_iters=e.dl_max_iters, tol=e.dl_tol),
        dl_design=Strategy(e.dl_design),
        design_restarts=e.design_restarts,
        theta=e.theta,
    )


def cmd_sweep(run: Run) -> list[Path]:
    cfg = run.cfg
    e = cfg.eval
    mask = run.mask()
    solvers = [Solver(s) for s in e.solvers]
    stack = run.stack() if Solver.DLCSNET in solvers else None
    ctx = eval_context(cfg, mask, stack)
    journal = run.path(cfg.paths.journal)
    journal.parent.mkdir(parents=True, exist_ok=True)
    if journal.exists() and not run.resume:
        journal.unlink()
    t0 = time.perf_counter()
    summaries, records = sweep(list(e.letters), [float(x) for x in e.snr_grid], solvers, ctx, journal, run.workers)
    log.info("sweep: %d records in %.1fs", len(records), time.perf_counter() - t0)
    for s in summaries:
        log.info("%s @ %s dB: mean M %.3f, median M %.1f", s.solver.value, s.snr_db, s.mean_M, s.median_M)
    return [
        run.write("records.csv", records_csv(records)),
        run.write("summary.csv", summary_csv(summaries)),
        run.write("plot_data.csv", plot_data_csv(summaries)),
        run.write("required_snr.csv", required_snr_csv(summaries, e.target_M)),
    ]


def required_snr_csv(summaries, target_M: float) -> str:
    rows = required_snr(summaries, target_M)
    lines = ["solver,letter,target_M,required_snr_db"]
    for (solver, letter), snr in sorted(rows.items()):
        lines.append(f"{solver},{letter},{target_M!r},{'' if snr is None else repr(snr)}")
    return "\n".join(lines) + "\n"


def read_records(path) -> list[EvalRecord]:
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    out = []
    for r in csv.DictReader(rows):
        out.append(
            EvalRecord(r["letter"], float(r["M"]), int(r["L"]), float(r["snr_db"]), int(r["seed"]), Solver(r["solver"]), float(r["ber"]), int(r["iters"]))
        )
    return out


def cmd_report(run: Run) -> list[Path]:
    cfg = run.cfg
    src = run.path("records.csv")
    records = read_records(src)
    if not records:
        raise ConfigError(f"{src} holds no records")
    groups: dict[tuple, list] = {}
    for r in records:
        groups.setdefault((r.solver.value, r.snr_db), []).append(r)
    summaries = [summarize(groups[k], list(cfg.eval.letters)) for k in sorted(groups)]
    lines = ["solver      snr_db   mean_M  median_M  per-letter max M"]
    for s in summaries:
        per = " ".join(f"{k}{v}" for k, v in sorted(s.per_letter_max_M.items()))
        lines.append(f"{s.solver.value:<10} {s.snr_db:>7.2f} {s.mean_M:>8.3f} {s.median_M:>9.1f}  {per}")
    req = required_snr(summaries, cfg.eval.target_M)
    lines.append("")
    lines.append(f"lowest grid SNR reaching M >= {cfg.eval.target_M:g}:")
    for (solver, letter), snr in sorted(req.items()):
        lines.append(f"  {solver:<10} {letter}  {'-' if snr is None else f'{snr:g} dB'}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    return [run.write("report.txt", text)]


COMMANDS = {
    "gen-mask": cmd_gen_mask,
    "train": cmd_train,
    "design": cmd_design,
    "sweep": cmd_sweep,
    "report": cmd_report,
}

HELP = {
    "gen-mask": "write the mask matrix",
    "train": "learn the dictionary stack",
    "design": "select measurement shifts",
    "sweep": "run the BER / max-M sweep",
    "report": "summarise records.csv",
}


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hadcs", description="Hadamard-mask compressed sensing simulator")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and paths.out_dir)")
        p.add_argument("--workers", type=int, default=1, help="worker processes for sweep")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--resume", action="store_true", help="reuse the sweep journal")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve(args) -> Run:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.master_seed = args.seed
    if args.workers < 1:
        raise ConfigError("--workers must be positive")
    out = args.out or os.environ.get(OUT_ENV) or cfg.paths.out_dir
    return Run(cfg, Path(out), args.workers, args.resume)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        run = resolve(args)
        run.out.mkdir(parents=True, exist_ok=True)
        written = COMMANDS[args.command](run)
    # LinAlgError subclasses ValueError, so numerical failures go first
    except (TrainingDiverged, np.linalg.LinAlgError, ArithmeticError) as e:
        log.error("numerical failure: %s", e)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, TypeError) as e:
        log.error("config error: %s", e)
        return EXIT_CONFIG
    except OSError as e:
        log.error("I/O failure: %s", e)
        return EXIT_IO
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
