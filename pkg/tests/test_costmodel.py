import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudoqpe.costmodel import (ARITH_CASES, SpeciesFeatures, block_encoding_total,
                                 gramian_arith_cost, n_boxes_for, prep_cost, pseudo_select_cost,
                                 qpe_iterations, qpe_total, shared_encoding_cost, species_features,
                                 with_qpe)
from pseudoqpe.errors import InputError
from pseudoqpe.system import from_bundled

bits_st = st.tuples(*[st.integers(1, 9)] * 3)


def _entry(entries, step):
    return sum(e.toffolis for e in entries if e.step == step)


def _report(name, bits, table, **kw):
    spec = from_bundled(name, bits)
    return block_encoding_total(species_features(spec.counts, table), spec.eta, spec.bits, spec.deltas,
                                spec.case(), **kw)


# ---------------------------------------------------------------- Gramian arithmetic

def test_general_norm_example():
    s1, s2, b = 18, 108, 20
    assert gramian_arith_cost("general", (6, 6, 6), b) == 2358 == 5 * s2 // 2 + 2 * s1 * s1 + 4 * b * s1


def test_general_dot_formula():
    s1, s2, b = 16, 86, 20
    assert gramian_arith_cost("general", (5, 5, 6), b, "dot") == math.ceil(2.5 * s2 + 3 * s1 * s1 + 4 * b * s1)


def test_diamond_norm_is_three_squarings():
    assert gramian_arith_cost("diamond", (6, 6, 6), 20) == 108


def test_orthogonal_cheaper_than_general():
    assert gramian_arith_cost("orthogonal", (6, 6, 7), 20) < gramian_arith_cost("general", (6, 6, 7), 20)


@settings(max_examples=200, deadline=None)
@given(bits=bits_st, b=st.integers(1, 40), case=st.sampled_from(ARITH_CASES), kind=st.sampled_from(["norm", "dot"]))
def test_every_case_no_dearer_than_general(bits, b, case, kind):
    assert 0 <= gramian_arith_cost(case, bits, b, kind) <= gramian_arith_cost("general", bits, b, kind)


def test_unknown_case_rejected():
    with pytest.raises(InputError):
        gramian_arith_cost("triclinic", (5, 5, 5), 20)


# ---------------------------------------------------------------- ledger pieces

def test_prep_transcription_pure_carbon():
    m, n, b, nuc, br = 4, 6, 20, 54, 7
    entries = prep_cost(m, n, b, nuc, br)
    lg = math.ceil(math.log2(m * n))
    expect = (4 * lg + 1) + m * n + b + lg + m * n + (30 * n + 2 * b) + (7 * math.ceil(math.log2(nuc)) + 2 * br - 6) + nuc
    assert sum(e.toffolis for e in entries) == expect


def test_prep_single_nucleus():
    assert _entry(prep_cost(4, 6, 20, 1, 7), "4") == 8


def test_prep_doubling_terms_doubles_the_lookups_only():
    a = {e.label: e.toffolis for e in prep_cost(4, 6, 20, 54, include_logs=False)}
    b = {e.label: e.toffolis for e in prep_cost(8, 6, 20, 54, include_logs=False)}
    for label in a:
        factor = 2 if "QROM" in label and "position" not in label else 1
        assert b[label] == factor * a[label], label


def test_select_arithmetic_near_quoted_totals():
    ni = SpeciesFeatures(11, 2, 3)
    skip = {"6", "7", "8a", "8e"}
    lin = sum(e.toffolis for e in pseudo_select_cost(ni, (6, 6, 6), 20, "linear:256", "general") if e.step not in skip)
    quad = sum(e.toffolis for e in pseudo_select_cost(ni, (6, 6, 6), 27, "quadratic:64", "general") if e.step not in skip)
    assert lin == pytest.approx(5000, rel=0.1)
    assert quad == pytest.approx(10000, rel=0.1)


def test_select_savings_for_simplest_species():
    full = pseudo_select_cost(SpeciesFeatures(11, 2, 3), (5, 5, 5), 20, "linear:256", "general")
    light = pseudo_select_cost(SpeciesFeatures(4, 0, 1), (5, 5, 5), 20, "linear:256", "general")
    for step in ("8c", "8f", "10"):
        assert _entry(light, step) == 0
    saved = sum(e.toffolis for e in full) - sum(e.toffolis for e in light)
    assert saved == 400 + 600 + 280
    mid = pseudo_select_cost(SpeciesFeatures(5, 1, 2), (5, 5, 5), 20, "linear:256", "general")
    assert _entry(mid, "10") == 80


def test_shared_entries():
    e = shared_encoding_cost(216, (6, 6, 6), 20, "diamond")
    assert _entry(e, "iv") == 16408
    assert _entry(shared_encoding_cost(1, (6, 6, 6), 20, "diamond"), "iv") == 4 * 18 + 4 - 8
    assert _entry(shared_encoding_cost(120, (5, 5, 7), 20, "hexagonal"), "ix") == 779
    assert _entry(e, "vi") == 3 * 108 + 3 * 400
    assert _entry(e, "iii") == 2 * (3 * 10 + 14 - 9)


def test_box_count():
    assert n_boxes_for((5, 5, 7), (1, 1, 0)) == 7
    assert n_boxes_for((6, 6, 6), (0, 0, 0)) == 6


# ---------------------------------------------------------------- totals

@pytest.mark.parametrize("name,bits,expect", [
    ("diamond", (6, 6, 6), 23576), ("LNO-C2m", (5, 5, 5), 18569), ("Pt-2x2", (5, 5, 7), 19627)])
def test_block_encoding_totals(table, name, bits, expect):
    assert _report(name, bits, table).c_be == pytest.approx(expect, rel=0.03)


def test_ledger_is_additive_and_non_negative(table, cells):
    for name, entry in cells.items():
        for bits in entry["bits"]:
            rep = _report(name, bits, table)
            assert rep.c_be == sum(e.toffolis for e in rep.entries)
            assert all(e.toffolis >= 0 for e in rep.entries)
            assert sum(rep.by_step().values()) == rep.c_be


def test_inverse_preparation_doubles_steps_one_to_five(table):
    rep = _report("diamond", (6, 6, 6), table)
    fwd = [e for e in rep.entries if e.step in {"1", "2", "3", "4", "5"} and not e.label.endswith("(inverse)")]
    inv = [e for e in rep.entries if e.label.endswith("(inverse)")]
    assert [e.toffolis for e in fwd] == [e.toffolis for e in inv]


@settings(max_examples=60, deadline=None)
@given(eta=st.integers(1, 500), bits=st.tuples(*[st.integers(3, 7)] * 3), b=st.integers(9, 30),
       case=st.sampled_from(ARITH_CASES))
def test_total_monotone(eta, bits, b, case):
    f = SpeciesFeatures(11, 2, 3, nuclei=16, max_nuclei_per_species=8)
    base = block_encoding_total(f, eta, bits, (0, 0, 0), case, b).c_be
    assert block_encoding_total(f, eta + 1, bits, (0, 0, 0), case, b).c_be >= base
    assert block_encoding_total(f, eta, bits, (0, 0, 0), case, b + 1).c_be >= base
    for axis in range(3):
        more = list(bits)
        more[axis] += 1
        assert block_encoding_total(f, eta, more, (0, 0, 0), case, max(b, max(more) + 2)).c_be >= base


def test_precision_must_cover_grid():
    with pytest.raises(InputError):
        block_encoding_total(SpeciesFeatures(4, 0, 1), 8, (6, 6, 6), (0, 0, 0), "general", b=7)


def test_qpe_formula():
    lam, eps, c = 3306248.0, 1.6e-3, 18569
    it = math.ceil(lam * math.pi / (2 * eps))
    assert qpe_iterations(lam, eps) == it
    assert qpe_total(c, lam, eps) == it * c
    assert qpe_total(c, lam, eps) % c == 0


def test_qpe_single_iteration_and_halving():
    assert qpe_total(1000, 1.0, math.pi) == 1000
    lam = 12345.678
    a, b = qpe_iterations(lam, 1e-3), qpe_iterations(lam, 5e-4)
    assert b in (2 * a - 1, 2 * a)


def test_qpe_inputs_validated():
    with pytest.raises(InputError):
        qpe_iterations(1.0, 0.0)
    with pytest.raises(InputError):
        qpe_iterations(-1.0, 1e-3)


def test_with_qpe_keeps_entries(table):
    rep = _report("LNO-C2m", (5, 5, 5), table)
    full = with_qpe(rep, 3.3e6, 1.6e-3)
    assert full.entries == rep.entries and full.qpe_toffolis == full.iterations * rep.c_be
