import json
import time

import numpy as np
import pytest

from hadcs.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, OUT_ENV, RunConfig, main
from hadcs.design import load_shifts
from hadcs.dictionary import load_stack
from hadcs.provenance import PREFIX, read_hash
from hadcs.sensing import load_mask, twin_prime_smatrix

SMALL = {
    "master_seed": 3,
    "mask": {"p": 11, "q": 13},
    "design": {"L": 36},
    "train": {"layer_dims": [143, 32, 16], "epochs": 5, "code_iters": 30, "measure_rows": 36},
    "eval": {"letters": "AIT", "M_grid": [2, 4], "snr_grid": [12.0], "seeds": 2, "lasso_max_iters": 500},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


@pytest.fixture
def small(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["train", "--config", cfg, "--out", str(out)]) == EXIT_OK
    return cfg, out


def test_config_round_trip():
    cfg = RunConfig.from_dict(SMALL)
    again = RunConfig.from_json(cfg.to_json())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
    assert RunConfig().to_dict() == RunConfig.from_dict({}).to_dict()


@pytest.mark.parametrize(
    "bad",
    [
        {"nope": 1},
        {"mask": {"colour": 1}},
        {"master_seed": -1},
        {"eval": {"solvers": ["Magic"]}},
        {"eval": {"letters": "ab"}},
        {"eval": {"M_grid": []}},
        {"design": {"strategy": "Best"}},
    ],
)
def test_config_errors_exit_2(tmp_path, bad):
    assert main(["gen-mask", "--config", write_cfg(tmp_path, bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_invalid_json_and_missing_config(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    assert main(["gen-mask", "--config", str(p), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["gen-mask", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_gen_mask_default(tmp_path):
    assert main(["gen-mask", "--out", str(tmp_path)]) == EXIT_OK
    m = load_mask(tmp_path / "mask.txt")
    assert m.order == 1763 and np.array_equal(m.entries, twin_prime_smatrix(41, 43).entries)
    assert (tmp_path / "mask.txt").read_text().startswith(PREFIX)


def test_gen_mask_small_and_rejected(tmp_path):
    ok = write_cfg(tmp_path, {"mask": {"p": 3, "q": 5}})
    assert main(["gen-mask", "--config", ok, "--out", str(tmp_path)]) == EXIT_OK
    assert load_mask(tmp_path / "mask.txt").order == 15
    bad = write_cfg(tmp_path, {"mask": {"p": 4, "q": 6}}, "bad.json")
    assert main(["gen-mask", "--config", bad, "--out", str(tmp_path / "b")]) == EXIT_CONFIG


def test_env_var_overrides_out_dir(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, {"mask": {"p": 3, "q": 5}, "paths": {"out_dir": str(tmp_path / "cfgdir")}})
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envdir"))
    assert main(["gen-mask", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "envdir" / "mask.txt").exists()
    assert main(["gen-mask", "--config", cfg, "--out", str(tmp_path / "flag")]) == EXIT_OK
    assert (tmp_path / "flag" / "mask.txt").exists()
    monkeypatch.delenv(OUT_ENV)
    assert main(["gen-mask", "--config", cfg]) == EXIT_OK
    assert (tmp_path / "cfgdir" / "mask.txt").exists()


def test_train_deterministic_and_descends(small, tmp_path):
    cfg, out = small
    out2 = tmp_path / "again"
    assert main(["train", "--config", cfg, "--out", str(out2)]) == EXIT_OK
    assert (out / "dictionary.txt").read_bytes() == (out2 / "dictionary.txt").read_bytes()
    lines = [l for l in (out / "loss.csv").read_text().splitlines() if not l.startswith("#")]
    totals = [float(l.split(",")[-1]) for l in lines[1:]]
    assert totals[-1] < totals[0]
    st = load_stack(out / "dictionary.txt")
    assert st.layer_dims == [143, 32, 16]


def test_seed_flag_changes_outputs(small, tmp_path):
    cfg, out = small
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "s9"), "--seed", "9"]) == EXIT_OK
    a = (out / "dictionary.txt").read_text()
    b = (tmp_path / "s9" / "dictionary.txt").read_text()
    assert a.splitlines()[0] != b.splitlines()[0]  # config hash differs
    assert a.splitlines()[1:] != b.splitlines()[1:]


def test_train_empty_corpus(tmp_path):
    cfg = write_cfg(tmp_path, {**SMALL, "train": {**SMALL["train"], "letters": ""}})
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_train_divergence_exit_3(tmp_path, monkeypatch):
    import hadcs.cli as cli
    from hadcs.dictionary import TrainingDiverged

    def boom(*a, **k):
        raise TrainingDiverged("loss blew up")

    monkeypatch.setattr(cli, "train", boom)
    assert main(["train", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path)]) == EXIT_NUMERIC


def test_design_needs_dictionary(tmp_path):
    assert main(["design", "--config", write_cfg(tmp_path, SMALL), "--out", str(tmp_path / "empty")]) == EXIT_IO


def test_io_failure_exit_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["gen-mask", "--out", str(blocker / "sub")]) == EXIT_IO


def test_design_outputs(small):
    cfg, out = small
    assert main(["design", "--config", cfg, "--out", str(out)]) == EXIT_OK
    meta, shifts = load_shifts(out / "shifts.txt")
    assert len(shifts) == 36 and len(set(shifts)) == 36 and meta["n"] == "143"
    rep = (out / "design_report.csv").read_text().splitlines()
    assert rep[1].startswith("L,strategy") and rep[2].startswith("36,GreedyForward,1,")


def test_design_full_selection(small, tmp_path):
    cfg, out = small
    full = write_cfg(tmp_path, {**SMALL, "design": {"L": 143}}, "full.json")
    assert main(["design", "--config", full, "--out", str(out)]) == EXIT_OK
    assert load_shifts(out / "shifts.txt")[1] == list(range(143))


def test_sweep_smoke_report_and_headers(small):
    cfg, out = small
    t0 = time.perf_counter()
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert time.perf_counter() - t0 < 60
    h = RunConfig.from_dict(SMALL).content_hash()
    for name in ("records.csv", "summary.csv", "plot_data.csv", "required_snr.csv", "dictionary.txt", "loss.csv"):
        assert read_hash(out / name) == h
    summary = (out / "summary.csv").read_text()
    assert "Lasso,12.0,mean," in summary and "DLCSNet,12.0,median," in summary
    assert main(["report", "--config", cfg, "--out", str(out)]) == EXIT_OK
    assert "DLCSNet" in (out / "report.txt").read_text()


def test_sweep_resume_and_workers_identical(small, tmp_path):
    cfg, out = small
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
    first = {n: (out / n).read_bytes() for n in ("records.csv", "summary.csv", "plot_data.csv")}
    j = out / "journal.jsonl"
    lines = j.read_text().splitlines()
    j.write_text("\n".join(lines[: len(lines) // 3]) + "\n")
    assert main(["sweep", "--config", cfg, "--out", str(out), "--resume", "--workers", "2"]) == EXIT_OK
    for n, data in first.items():
        assert (out / n).read_bytes() == data


def test_report_without_records(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == EXIT_IO
