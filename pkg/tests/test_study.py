import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import auc_pairs_oracle
from paperecg import study
from paperecg.study import (LabeledRecord, SearchGrid, accuracy, auc_pairs, confusion, grid_search, make_windows,
                            marginal, parse_table_csv, pos_weight, read_records_csv, record_from_series,
                            records_csv, roc_auc, select_config, split_counts, split_records, table_csv)


def records(n_pos, n_neg, length=3000, rng=None):
    rng = rng or np.random.default_rng(0)
    out = [LabeledRecord(f"p{i}", "V1", rng.normal(size=length), 1) for i in range(n_pos)]
    out += [LabeledRecord(f"n{i}", "V1", rng.normal(size=length), 0) for i in range(n_neg)]
    return out


# --- splits and windows --------------------------------------------------

def test_split_counts_examples():
    assert split_counts(110) == (77, 16, 17)
    assert split_counts(120) == (84, 18, 18)
    assert split_counts(5, (1.0, 0.0, 0.0)) == (5, 0, 0)


def test_split_records_deterministic_and_complete():
    recs = records(20, 30, length=10)
    a = split_records(recs, seed=3)
    b = split_records(recs, seed=3)
    assert [(r.record_id, r.split) for r in a] == [(r.record_id, r.split) for r in b]
    assert sorted(r.record_id for r in a) == sorted(r.record_id for r in recs)
    assert {s: sum(r.split == s for r in a) for s in study.SPLITS} == {"train": 35, "val": 8, "test": 7}
    assert all(r.split == "train" for r in split_records(recs, (1.0, 0.0, 0.0)))


def test_split_errors():
    with pytest.raises(ValueError):
        split_records(records(1, 1, 10), seed=0)
    with pytest.raises(ValueError):
        split_records(records(5, 5, 10), (0.5, 0.2, 0.2))


def test_windows_cardinality():
    pos = make_windows(split_records(records(30, 0), (1.0, 0.0, 0.0)))
    assert len(pos.windows) == 180 and all(w.label == 1 for w in pos.windows)
    neg = make_windows(split_records(records(0, 80), (1.0, 0.0, 0.0)))
    assert len(neg.windows) == 480
    one = make_windows(split_records(records(2, 2, 500), (1.0, 0.0, 0.0)))
    assert len(one.windows) == 4
    with pytest.raises(ValueError):
        make_windows(records(1, 0, 400))


def test_windows_non_overlapping_and_no_leakage():
    recs = split_records(records(20, 20, 1200), seed=1)
    ds = make_windows(recs)
    for r in recs:
        ws = [w for w in ds.windows if w.record_id == r.record_id]
        assert len(ws) == 2                       # trailing 200 samples dropped
        assert {w.split for w in ws} == {r.split}
        assert np.array_equal(np.concatenate([w.x for w in ws]), r.samples[:1000])


def test_pos_weight_examples():
    full = make_windows(split_records(records(30, 80), (1.0, 0.0, 0.0)))
    assert pos_weight(full) == pytest.approx(480 / 180)
    assert round(pos_weight(full), 3) == 2.667
    bal = make_windows(split_records(records(5, 5), (1.0, 0.0, 0.0)))
    assert pos_weight(bal) == 1.0
    with pytest.raises(ValueError):
        pos_weight(make_windows(split_records(records(0, 5), (1.0, 0.0, 0.0))))


# --- metrics -------------------------------------------------------------

def test_accuracy_examples():
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert accuracy([0.5], [1]) == 0.0
    assert accuracy([0.7] * 4, [1, 0, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        accuracy([], [])


def test_auc_examples():
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])[1] == 1.0
    assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1])[1] == 0.0
    assert roc_auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0])[1] == 0.75
    with pytest.raises(ValueError, match="AUC undefined"):
        roc_auc([0.1, 0.2], [1, 1])


def test_roc_vertices_and_ties():
    roc, auc = roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
    assert [(f, t) for f, t, _ in roc] == [(0.0, 0.0), (1.0, 1.0)]
    assert auc == 0.5
    assert math.isinf(roc[0][2])


def test_confusion_examples():
    c = confusion([0.9, 0.8, 0.1], [1, 1, 0])
    assert c["fp"] == 0 and c["fn"] == 0
    c = confusion([0.9] * 10, [1] * 3 + [0] * 7)
    assert (c["tp"], c["fp"], c["tn"], c["fn"]) == (3, 7, 0, 0)
    n = c["normalized"]
    assert n["tp"] + n["fn"] == 1.0 and n["tn"] + n["fp"] == 1.0


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 200), st.integers(0, 2**31 - 1), st.booleans())
def test_auc_equals_pair_count(n, seed, coarse):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, n)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    s = r.integers(0, 5, n) / 4.0 if coarse else r.random(n)
    roc, auc = roc_auc(s, y)
    assert abs(auc - auc_pairs_oracle(s, y)) <= 1e-12
    assert abs(auc - auc_pairs(s, y)) <= 1e-12
    f = [p[0] for p in roc]
    t = [p[1] for p in roc]
    assert f == sorted(f) and t == sorted(t) and roc[-1][:2] == (1.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 200), st.integers(0, 2**31 - 1))
def test_confusion_marginals_and_permutation(n, seed):
    r = np.random.default_rng(seed)
    y = r.integers(0, 2, n)
    s = r.random(n)
    c = confusion(s, y)
    assert c["tp"] + c["fn"] == int(y.sum()) and c["fp"] + c["tn"] == int(n - y.sum())
    assert (c["tp"] + c["tn"]) / n == accuracy(s, y)
    p = r.permutation(n)
    c2 = confusion(s[p], y[p])
    assert {k: c[k] for k in ("tp", "fp", "tn", "fn")} == {k: c2[k] for k in ("tp", "fp", "tn", "fn")}


# --- grid search ---------------------------------------------------------

def test_grid_cardinality():
    g = SearchGrid()
    cells = g.cells()
    assert len(cells) == 3 * 108
    assert sum(c["lead_set"] == "V1" for c in cells) == 108
    with pytest.raises(ValueError):
        SearchGrid(epochs=())
    with pytest.raises(ValueError):
        SearchGrid(lead_sets=("V7",))


def mock_runner(best_lr=1e-3):
    def run(cell, data, seed):
        r = np.random.default_rng(seed)
        auc = 0.6 + 0.1 * r.random() + (0.25 if cell["lr"] == best_lr else 0.0)
        return {"val_loss": 50 + r.random(), "val_auc": auc, "val_acc": 0.6, "test_loss": 1.0,
                "test_auc": auc, "test_acc": 0.6}
    return run


def small_grid():
    return SearchGrid(epochs=(5, 10), lr=(1e-2, 1e-3, 1e-4), hidden=(100, 150), layers=(1, 2), lead_sets=("V1",))


def test_mock_dominating_lr_selected():
    res = grid_search(small_grid(), None, seed=0, runner=mock_runner(1e-4))
    assert res.chosen["V1"]["lr"] == 1e-4
    assert len(res.table) == 24 and not res.failed


def test_marginals_recompute_from_emitted_table():
    res = grid_search(small_grid(), None, seed=4, runner=mock_runner())
    back = parse_table_csv(table_csv(res.table))
    rows = [r for r in back if r["lead_set"] == "V1" and r["status"] == "ok"]
    for entry in res.marginals["V1"]:
        sel = [r for r in rows if all(r[k] == v for k, v in entry["fixed"].items())]
        m = marginal(sel, entry["param"], entry["value"])
        assert m["val_auc"] == entry["val_auc"] and m["val_loss"] == entry["val_loss"]
        assert m["n"] == entry["n"]
    assert select_config(rows)[0] == res.chosen["V1"]


def test_failed_cells_excluded():
    def run(cell, data, seed):
        if cell["lr"] == 1e-2:
            raise study.neural.TrainingDiverged(2, 5, float("nan"))
        return mock_runner()(cell, data, seed)
    res = grid_search(small_grid(), None, runner=run)
    assert len(res.failed) == 8 and all("diverged" in r["error"] for r in res.failed)
    assert res.chosen["V1"]["lr"] != 1e-2
    assert all(e["value"] != 1e-2 or e["n"] == 0 for e in res.marginals["V1"] if e["param"] == "lr")


def test_tie_breaks_on_loss_then_accuracy():
    base = {"epochs": 5, "hidden": 100, "layers": 1, "status": "ok"}
    table = [dict(base, lr=1e-2, val_auc=0.8, val_loss=3.0, val_acc=0.5),
             dict(base, lr=1e-3, val_auc=0.8, val_loss=2.0, val_acc=0.5)]
    assert select_config(table)[0]["lr"] == 1e-3
    table[1]["val_loss"] = 3.0
    table[0]["val_acc"] = 0.9
    assert select_config(table)[0]["lr"] == 1e-2


# --- files ---------------------------------------------------------------

def test_records_csv_round_trip(rng):
    recs = records(2, 1, length=3000, rng=rng)
    back = read_records_csv(records_csv(recs))
    assert [(r.record_id, r.label) for r in back] == [(r.record_id, r.label) for r in recs]
    assert all(np.allclose(a.samples, b.samples, rtol=1e-8) for a, b in zip(back, recs))


def test_records_csv_errors():
    with pytest.raises(ValueError, match="line 1"):
        read_records_csv("id,lead\n")
    head = "record_id,lead,label," + ",".join(f"sample_{i}" for i in range(3)) + "\n"
    with pytest.raises(ValueError, match="line 2"):
        read_records_csv(head + "a,V1,1,0,0\n", length=3)
    with pytest.raises(ValueError, match="line 2"):
        read_records_csv(head + "a,V1,2,0,0,0\n", length=3)


def test_record_from_series_truncates():
    r = record_from_series("x", "V1", np.arange(3100.0), 1)
    assert len(r.samples) == 3000 and r.samples[-1] == 2999.0
    with pytest.raises(ValueError):
        record_from_series("x", "V1", np.arange(10.0), 1)
