import itertools

import numpy as np
import pytest

from hadcs.design import (
    DesignConfig,
    Strategy,
    coherence_of_rows,
    design_report,
    design_rows,
    greedy_prefixes,
    load_shifts,
    prefix_design,
    save_shifts,
)
from hadcs.sensing import build_sensing_matrix, mutual_coherence


def exhaustive_best(mask, L, basis=None):
    best = np.inf
    for rows in itertools.combinations(range(mask.order), L):
        A = mask.entries[list(rows)].astype(float)
        if basis is not None:
            A = A @ basis
        best = min(best, mutual_coherence(A).mu)
    return best


def random_mean(mask, L, seeds, stack=None):
    return np.mean([design_report(design_rows(mask, stack, DesignConfig(L=L, strategy="RandomBaseline", seed=s)), stack).coherence.mu for s in seeds])


def test_full_selection(mask15):
    for strat in Strategy:
        s = design_rows(mask15, None, DesignConfig(L=15, strategy=strat))
        assert s.shifts == tuple(range(15))
        assert np.array_equal(s.entries, mask15.entries)
        rep = design_report(s)
        assert rep.shifts == tuple(range(15))
        assert rep.coherence.mu == pytest.approx(mutual_coherence(mask15.entries).mu)


def test_single_row(mask15):
    s = design_rows(mask15, None, DesignConfig(L=1))
    assert s.rows == 1
    assert design_report(s).coherence.mu == pytest.approx(1.0)


def test_config_errors(mask15):
    with pytest.raises(ValueError):
        design_rows(mask15, None, DesignConfig(L=16))
    with pytest.raises(ValueError):
        design_rows(mask15, None, DesignConfig(L=3, candidate_shifts=(1, 2)))
    with pytest.raises(ValueError):
        design_rows(mask15, None, DesignConfig(L=2, candidate_shifts=(1, 1, 2)))
    with pytest.raises(ValueError):
        DesignConfig(L=0)
    with pytest.raises(ValueError):
        DesignConfig(L=2, restarts=0)


def test_prefix_coherence_can_decrease(mask15):
    # More rows lengthen every column, and normalised inner products can
    # fall: on TwinPrimeS(3,5) the 4-row greedy prefix has coherence 1 and
    # the 5-row prefix sqrt(3)/2. Prefix coherence is therefore not
    # monotone nondecreasing in L.
    orders, traces = greedy_prefixes(mask15, None, 6, seed=2)
    assert traces[0][3] == pytest.approx(1.0)
    assert traces[0][4] == pytest.approx(np.sqrt(3) / 2)
    full = mutual_coherence(mask15.entries).mu
    assert full < traces[0][0]


def test_exchange_never_worsens(mask143, small_stack):
    stack, _ = small_stack
    for L in (5, 12, 25):
        fwd = design_report(design_rows(mask143, stack, DesignConfig(L=L, exchange_passes=0)), stack).coherence.mu
        ex = design_report(design_rows(mask143, stack, DesignConfig(L=L)), stack).coherence.mu
        assert ex <= fwd + 1e-12


def test_greedy_near_exhaustive(mask15):
    opt = exhaustive_best(mask15, 5)
    g = design_report(design_rows(mask15, None, DesignConfig(L=5, restarts=4))).coherence.mu
    assert g <= 1.1 * opt
    assert g <= random_mean(mask15, 5, range(100))


def test_greedy_beats_random_with_dictionary(mask143, small_stack):
    stack, _ = small_stack
    g = design_report(design_rows(mask143, stack, DesignConfig(L=20)), stack).coherence.mu
    assert g < random_mean(mask143, 20, range(50), stack)


def test_greedy_deterministic_and_distinct(mask143):
    cfg = DesignConfig(L=12, seed=5, restarts=2)
    a = design_rows(mask143, None, cfg)
    b = design_rows(mask143, None, cfg)
    assert a.shifts == b.shifts
    assert len(set(a.shifts)) == 12


def test_candidate_subset(mask143):
    cands = tuple(range(0, 143, 3))
    s = design_rows(mask143, None, DesignConfig(L=6, candidate_shifts=cands))
    assert set(s.shifts) <= set(cands)


def test_prefix_coherence_monotone(mask15):
    orders, traces = greedy_prefixes(mask15, None, 15, seed=1)
    mus = [coherence_of_rows(mask15, orders[0][:L]) for L in range(1, 16)]
    # the recorded trace is the coherence of each prefix
    assert np.allclose(traces[0], mus, atol=1e-12)


def test_prefix_design_matches_design_rows(mask143, small_stack):
    stack, _ = small_stack
    orders, traces = greedy_prefixes(mask143, stack, 30, seed=11, restarts=2)
    for L in (5, 17, 30):
        a = prefix_design(mask143, orders, traces, L)
        b = design_rows(mask143, stack, DesignConfig(L=L, seed=11, restarts=2, exchange_passes=0))
        assert a.shifts == b.shifts


def test_report_matches_recomputation(mask143, small_stack):
    stack, _ = small_stack
    s = design_rows(mask143, stack, DesignConfig(L=9))
    rep = design_report(s, stack)
    assert rep.effective
    assert rep.coherence.mu == pytest.approx(mutual_coherence(s.as_float() @ stack.product()).mu, abs=1e-12)


def test_shift_file_round_trip(tmp_path, mask143):
    s = design_rows(mask143, None, DesignConfig(L=7, seed=3))
    save_shifts(s, tmp_path / "s.txt")
    meta, shifts = load_shifts(tmp_path / "s.txt")
    assert tuple(shifts) == s.shifts
    assert meta == {"kind": "TwinPrimeS", "n": "143", "L": "7"}
    again = build_sensing_matrix(mask143, shifts)
    assert np.array_equal(again.entries, s.entries)
