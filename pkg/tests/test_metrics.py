import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from mltsfnet.metrics import (EditStats, UndefinedMetricError, WerReport, corpus_stats, edit_stats,
                              parse_keyvalue_report, wer)

seqs = st.lists(st.integers(0, 4), max_size=8)


def test_identity():
    s = edit_stats(list("ABC"), list("ABC"))
    assert (s.substitutions, s.deletions, s.insertions) == (0, 0, 0)
    assert wer(s) == 0.0


def test_single_substitution():
    s = edit_stats(["MONTAG", "REGEN"], ["MONTAG", "SONNE"])
    assert (s.substitutions, s.deletions, s.insertions) == (1, 0, 0)
    assert wer(s) == 0.5


def test_pure_deletions_and_insertions():
    assert edit_stats([1, 2, 3], []) == EditStats(0, 3, 0, 3)
    assert edit_stats([], [1, 2]) == EditStats(0, 0, 2, 0)


def test_tie_order_prefers_substitution_then_deletion():
    # [A,B] -> [B]: either delete A (cost 1) or sub A->B and delete B (cost 2)
    assert edit_stats(["A", "B"], ["B"]) == EditStats(0, 1, 0, 2)
    # one substitution beats a deletion plus an insertion
    assert edit_stats(["A"], ["B"]) == EditStats(1, 0, 0, 1)


def test_formula_examples():
    assert wer(EditStats(0, 0, 0, 10)) == 0.0
    assert wer(EditStats(1, 1, 1, 10)) == pytest.approx(0.3)
    assert wer(EditStats(0, 0, 3, 2)) == 1.5
    with pytest.raises(UndefinedMetricError):
        wer(EditStats(0, 0, 1, 0))


def test_corpus_aggregates_counts_not_rates():
    pairs = [([1], [2]), ([1, 2, 3, 4], [1, 2, 3, 4])]
    total = corpus_stats(pairs)
    assert wer(total) == pytest.approx(1 / 5)
    assert wer(total) != pytest.approx((1.0 + 0.0) / 2)


def test_exhaustive_oracle_small():
    rng = np.random.default_rng(0)
    for _ in range(300):
        a = rng.integers(0, 3, size=int(rng.integers(0, 6))).tolist()
        b = rng.integers(0, 3, size=int(rng.integers(0, 6))).tolist()
        assert edit_stats(a, b).errors == oracles.min_edit_cost(a, b)
        assert oracles.min_edit_cost(a, b) == oracles.min_edit_cost_vectorized(a, b)


@settings(max_examples=300, deadline=None)
@given(a=seqs, b=seqs)
def test_counts_match_levenshtein_and_are_consistent(a, b):
    s = edit_stats(a, b)
    assert min(s.substitutions, s.deletions, s.insertions) >= 0
    assert s.errors == oracles.levenshtein(a, b)
    # every reference token is matched, substituted or deleted
    assert len(a) - s.deletions + s.insertions == len(b)
    assert s.ref_len == len(a)


@settings(max_examples=200, deadline=None)
@given(a=seqs, b=seqs)
def test_symmetry_swaps_deletions_and_insertions(a, b):
    ab, ba = edit_stats(a, b), edit_stats(b, a)
    assert ab.errors == ba.errors


@settings(max_examples=200, deadline=None)
@given(a=seqs, b=seqs, c=seqs)
def test_triangle_inequality(a, b, c):
    assert edit_stats(a, c).errors <= edit_stats(a, b).errors + edit_stats(b, c).errors


@settings(max_examples=100, deadline=None)
@given(a=st.lists(st.integers(0, 4), min_size=1, max_size=8))
def test_wer_of_self_is_zero(a):
    assert wer(edit_stats(a, a)) == 0.0


def test_report_rates_sum_to_wer_and_round_trip():
    rep = WerReport(EditStats(3, 2, 4, 40), 7)
    assert rep.sub_rate + rep.del_rate + rep.ins_rate == pytest.approx(rep.wer)
    parsed = parse_keyvalue_report(rep.to_keyvalue())
    assert parsed["wer"] == rep.wer and parsed["sentences"] == 7
    for key in ("wer", "del_rate", "ins_rate", "sub_rate"):
        assert key in parsed
    text = rep.to_text()
    assert "del/ins" in text and "WER" in text and "5.0/10.0" in text
