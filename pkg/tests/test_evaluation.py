import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quatkg.data import relation_cardinality, load_dataset
from quatkg.evaluation import (
    TIE_MODES,
    EvalReport,
    Metrics,
    category_report,
    category_report_dict,
    evaluate,
    evaluate_bruteforce,
    format_metrics_table,
    rank,
    rank_from_scores,
    resolve_rank,
)
from quatkg.model import HEAD, TAIL, ParamStore, init_params
from quatkg.synthetic import random_kg

from conftest import write_split_files


def test_strict_highest_is_rank_one():
    assert rank_from_scores([0.1, 0.9, 0.3], 1) == 1


def test_everything_filtered_is_rank_one():
    assert rank_from_scores([5.0, 0.0, 9.0, 9.0], 1, excluded=[0, 2, 3]) == 1


def test_hand_set_scores_with_filtered_competitor():
    # 5 entities; target 2 scores 0.5; entity 4 scores higher but forms a known triple
    scores = np.array([0.7, 0.1, 0.5, 0.5, 0.9])
    ordered = sorted(((s, e) for e, s in enumerate(scores) if e != 4), key=lambda x: -x[0])
    # brute force: 0.7 ahead, one tie with entity 3
    assert [e for _, e in ordered][:1] == [0]
    assert rank_from_scores(scores, 2, excluded=[4]) == 1 + 1 + 0
    assert rank_from_scores(scores, 2, excluded=[4], ties="pessimistic") == 3
    assert rank_from_scores(scores, 2, excluded=[4], ties="optimistic") == 2
    assert rank_from_scores(scores, 2) == 3


def test_target_never_filtered():
    assert rank_from_scores([0.0, 1.0, 2.0], 1, excluded=[1]) == 2


def test_tie_modes():
    assert resolve_rank(2, 5, "average") == 5
    assert resolve_rank(2, 5, "optimistic") == 3
    assert resolve_rank(2, 5, "pessimistic") == 8
    draws = {resolve_rank(2, 5, "random", np.random.default_rng(i)) for i in range(200)}
    assert draws == set(range(3, 9))
    with pytest.raises(ValueError):
        resolve_rank(0, 0, "random")
    with pytest.raises(ValueError):
        resolve_rank(0, 0, "median")


def test_metrics_single_rank_one():
    m = Metrics.from_ranks([1, 1])
    assert (m.mr, m.mrr, m.hits1, m.hits3, m.hits10) == (1.0, 1.0, 1.0, 1.0, 1.0)
    assert m.as_dict()["H@10"] == 100.0


def test_metrics_ranks_one_and_four():
    m = Metrics.from_ranks([1, 4])
    assert m.mr == 2.5 and m.mrr == 0.625
    assert m.as_dict()["H@3"] == 50.0 and m.as_dict()["H@10"] == 100.0 and m.as_dict()["H@1"] == 50.0
    assert Metrics.from_ranks([]) is None


def test_metrics_table_format():
    table = format_metrics_table([("both", Metrics.from_ranks([1, 4])), ("none", None)])
    row = table.splitlines()[1]
    assert row.split()[1:6] == ["2.5", "0.625", "100.0", "50.0", "50.0"]
    assert "--" in table.splitlines()[2]


@pytest.fixture(scope="module")
def kg50():
    ds = random_kg(50, 5, 150, 20, 40, seed=4)
    params = init_params(50, 5, 4, seed=9)
    return ds, params


@pytest.mark.parametrize("ties", TIE_MODES)
@pytest.mark.parametrize("variant", ["quatre", "quate"])
def test_fast_matches_bruteforce(kg50, ties, variant):
    ds, params = kg50
    fast = evaluate(params, variant, ds, "test", ties, seed=3)
    slow = evaluate_bruteforce(params, variant, ds, "test", ties, seed=3)
    assert np.array_equal(fast.head_ranks, slow.head_ranks)
    assert np.array_equal(fast.tail_ranks, slow.tail_ranks)
    assert fast.to_dict() == slow.to_dict()


@pytest.mark.parametrize("ties", TIE_MODES)
def test_bruteforce_with_ties(ties):
    # quantized embeddings give many exact ties
    ds = random_kg(20, 2, 60, 0, 20, seed=2)
    p = init_params(20, 2, 1, seed=1)
    p.entity[:] = np.sign(p.entity)
    p.entity[::3] = 0.0
    for t in (p.relation, p.rot1, p.rot2):
        t[:] = 0.0
        t[:, 0] = 1.0
    fast = evaluate(p, "quatre", ds, "test", ties, seed=0)
    slow = evaluate_bruteforce(p, "quatre", ds, "test", ties, seed=0)
    assert np.array_equal(fast.ranks(), slow.ranks())


def test_filtered_not_worse_than_raw(kg50):
    ds, params = kg50
    for i, tr in enumerate(ds.test[:15]):
        for side in (HEAD, TAIL):
            assert rank(params, "quatre", tr, side, ds) <= rank(params, "quatre", tr, side, None)


def test_probe_scoring_ranks(kg50):
    ds, params = kg50
    exact = evaluate(params, "quatre", ds, "test")
    probe = evaluate(params, "quatre", ds, "test", scoring="probe")
    assert np.abs(exact.ranks() - probe.ranks()).max() <= 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=30), st.floats(0.5, 100), st.data())
def test_shift_invariance(scores, shift, data):
    scores = np.round(np.array(scores), 3)
    target = data.draw(st.integers(0, len(scores) - 1))
    for ties in ("average", "optimistic", "pessimistic"):
        assert rank_from_scores(scores, target, ties=ties) == rank_from_scores(scores + shift, target, ties=ties)


def test_metric_consistency(kg50):
    ds, params = kg50
    rep = evaluate(params, "quatre", ds, "valid")
    d = rep.to_dict()
    assert abs(d["overall"]["MRR"] - float((1.0 / rep.ranks()).mean())) < 1e-12
    m = rep.metrics()
    assert 0 < m.mrr <= 1 and m.mr >= 1 and m.hits1 <= m.hits3 <= m.hits10
    json.loads(rep.to_json())
    assert "split: valid" in rep.to_table()


def test_constant_scorer_mrr():
    E = 40
    ds = random_kg(E, 2, 80, 0, 40, seed=6)
    zero = ParamStore(*(np.zeros((rows, 4, 2)) for rows in (E, 2, 2, 2)))
    m = evaluate(zero, "quatre", ds, "test").metrics()
    # each rank is 1 + floor(k / 2) with k competitors left after filtering
    expect = []
    for h, r, t in ds.test.tolist():
        k_tail = E - len(ds.known_tails(h, r))
        k_head = E - len(ds.known_heads(r, t))
        expect += [1 / (1 + k_tail // 2), 1 / (1 + k_head // 2)]
    assert m.mrr == pytest.approx(np.mean(expect), rel=1e-12)
    assert m.mrr == pytest.approx(2 / E, rel=0.25)
    assert evaluate(zero, "quatre", ds, "test", "optimistic").metrics().mrr == 1.0


def test_threads_do_not_change_ranks(kg50, monkeypatch):
    ds, params = kg50
    one = evaluate(params, "quatre", ds, "test", "random", seed=1, workers=1)
    four = evaluate(params, "quatre", ds, "test", "random", seed=1, workers=4)
    monkeypatch.setenv("QUATKG_THREADS", "3")
    env = evaluate(params, "quatre", ds, "test", "random", seed=1)
    assert one.to_dict() == four.to_dict() == env.to_dict()


def test_per_relation(kg50):
    ds, params = kg50
    rep = evaluate(params, "quatre", ds, "test")
    table = rep.per_relation()
    for label, cell in table.items():
        sel = rep.triples[:, 1] == cell["relation_id"]
        ranks = np.concatenate([rep.head_ranks[sel], rep.tail_ranks[sel]])
        assert cell["MRR"] == pytest.approx((1 / ranks).mean())
        assert ds.relation_labels[cell["relation_id"]] == label


def _two_category_kg(tmp_path):
    train = [("a", "m1", "x"), ("b", "m1", "x"), ("c", "m1", "y"), ("d", "m1", "y"),
             ("a", "one", "b"), ("c", "one", "d")]
    test = [("e", "m1", "x"), ("a", "m1", "y"), ("b", "one", "c")]
    return load_dataset(write_split_files(tmp_path, train, [], test))


def test_category_cells_match_regrouping(tmp_path):
    ds = _two_category_kg(tmp_path)
    cards = relation_cardinality(ds)
    assert cards[0].category == "M-1" and cards[1].category == "1-1"
    p = init_params(ds.n_entities, ds.n_relations, 3, seed=0)
    rep = evaluate(p, "quatre", ds, "test")
    cells = category_report(rep, cards)
    m1 = rep.triples[:, 1] == 0
    assert cells["M-1"]["head"] == Metrics.from_ranks(rep.head_ranks[m1])
    assert cells["M-1"]["tail"] == Metrics.from_ranks(rep.tail_ranks[m1])
    assert cells["1-1"]["tail"] == Metrics.from_ranks(rep.tail_ranks[~m1])
    assert cells["1-M"] == {"head": None, "tail": None}
    assert cells["M-M"]["head"] is None
    assert category_report_dict(cells)["1-M"]["head"] is None


def test_single_category_equals_overall(tmp_path):
    ds = _two_category_kg(tmp_path)
    p = init_params(ds.n_entities, ds.n_relations, 3, seed=0)
    rep = evaluate(p, "quatre", ds, "test", triples=ds.test[:2])
    cells = category_report(rep, relation_cardinality(ds))
    assert cells["M-1"]["head"] == rep.metrics("head")
    assert cells["M-1"]["tail"] == rep.metrics("tail")
    assert all(cells[c] == {"head": None, "tail": None} for c in ("1-1", "1-M", "M-M", "undefined"))


def test_undefined_category(tmp_path):
    d = write_split_files(tmp_path, [("a", "r", "b")], [], [("a", "s", "b")])
    ds = load_dataset(d)
    rep = evaluate(init_params(2, 2, 2, seed=0), "quatre", ds, "test")
    cells = category_report(rep, relation_cardinality(ds))
    assert cells["undefined"]["head"].count == 1
    assert cells["1-1"]["head"] is None


def test_report_sides():
    rep = EvalReport("test", np.array([[0, 0, 1]]), np.array([1]), np.array([4]))
    assert rep.metrics("head").mrr == 1.0 and rep.metrics("tail").mrr == 0.25
    with pytest.raises(ValueError):
        rep.ranks("middle")
