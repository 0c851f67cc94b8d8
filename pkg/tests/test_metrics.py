import random

import pytest

from kgneeds.metrics import AlignmentError, micro_prf, per_class_f1, per_class_scores


def test_hand_counted_fixture():
    r = micro_prf({"i1": {"l1"}, "i2": {"l1", "l2"}}, {"i1": {"l1", "l2"}, "i2": {"l2"}})
    assert (r.tp, r.fp, r.fn) == (2, 1, 1)
    assert r.micro_precision == r.micro_recall == r.micro_f1 == 2 / 3


def test_identity_and_empty():
    golds = {"a": {"x"}, "b": {"x", "y"}}
    r = micro_prf(golds, golds)
    assert r.micro_precision == r.micro_recall == r.micro_f1 == 1.0
    r = micro_prf({"a": set(), "b": set()}, golds)
    assert (r.micro_precision, r.micro_recall, r.micro_f1) == (0.0, 0.0, 0.0)


def test_per_class_simple():
    f1 = per_class_f1({"a": {"x"}, "b": set()}, {"a": {"x"}, "b": {"y"}}, ["x", "y", "z"])
    assert f1 == {"x": 1.0, "y": 0.0, "z": 0.0}
    assert per_class_f1({"a": set()}, {"a": {"x", "y"}}) == {"x": 0.0, "y": 0.0}


def test_five_instance_fixture():
    preds = {
        "i1": {"food", "rest"},
        "i2": {"food"},
        "i3": {"status"},
        "i4": set(),
        "i5": {"rest", "status"},
    }
    golds = {
        "i1": {"food"},
        "i2": {"food", "status"},
        "i3": {"status"},
        "i4": {"rest"},
        "i5": {"rest"},
    }
    table = per_class_scores(preds, golds, ["food", "rest", "status"])
    # food: tp 2 fp 0 fn 0; rest: tp 1 fp 1 fn 1; status: tp 1 fp 1 fn 1
    assert (table["food"].precision, table["food"].recall, table["food"].f1) == (1.0, 1.0, 1.0)
    assert (table["rest"].precision, table["rest"].recall, table["rest"].f1) == (0.5, 0.5, 0.5)
    assert (table["status"].tp, table["status"].fp, table["status"].fn) == (1, 1, 1)
    assert table["status"].f1 == 0.5
    assert [table[l].support for l in ("food", "rest", "status")] == [2, 2, 2]
    report = micro_prf(preds, golds, ["food", "rest", "status"])
    assert report.tp == sum(c.tp for c in table.values()) == 4
    assert (report.fp, report.fn) == (2, 2)
    assert report.micro_f1 == pytest.approx(4 / 6)


def test_misaligned_ids():
    with pytest.raises(AlignmentError, match="i3"):
        micro_prf({"i1": set(), "i3": set()}, {"i1": set(), "i2": set()})


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        micro_prf({"a": {"bogus"}}, {"a": set()}, ["x"])


def test_order_invariance_and_bounds():
    rng = random.Random(0)
    labels = ["a", "b", "c", "d"]
    ids = [f"i{k}" for k in range(30)]
    pick = lambda: {l for l in labels if rng.random() < 0.4}
    preds = {i: pick() for i in ids}
    golds = {i: pick() for i in ids}
    r1 = micro_prf(preds, golds, labels)
    shuffled = ids[:]
    rng.shuffle(shuffled)
    r2 = micro_prf({i: preds[i] for i in shuffled}, {i: golds[i] for i in shuffled}, labels)
    assert r1.to_json() == r2.to_json()
    assert 0 <= r1.micro_precision <= 1 and 0 <= r1.micro_f1 <= 1
    assert sum(c.support for c in r1.per_class.values()) == sum(len(g) for g in golds.values())


def test_report_formats():
    r = micro_prf({"a": {"x"}}, {"a": {"x"}}, ["x"])
    assert r.to_json()["zero_division"] == 0.0
    assert "micro" in r.table()
