"""Datasets, metrics, and the hyperparameter grid search."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import neural

RECORD_LENGTH = 3000
WINDOW = 500
SPLITS = ("train", "val", "test")
SEARCH_ORDER = ("epochs", "lr", "hidden", "layers")
LEAD_SETS = {"V1": ("V1",), "V2": ("V2",), "both": ("V1", "V2")}


@dataclass(eq=False)
class LabeledRecord:
    record_id: str
    lead: str
    samples: np.ndarray
    label: int
    split: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.label not in (0, 1):
            raise ValueError(f"record {self.record_id}: label must be 0 or 1")
        if self.samples.ndim != 1 or not np.all(np.isfinite(self.samples)):
            raise ValueError(f"record {self.record_id}: samples must be a finite 1-D sequence")


@dataclass(eq=False)
class Window:
    x: np.ndarray
    label: int
    record_id: str
    split: str
    lead: str


@dataclass(eq=False)
class WindowedDataset:
    windows: list

    def select(self, split: str | None = None, leads=None) -> list:
        return [w for w in self.windows
                if (split is None or w.split == split) and (leads is None or w.lead in leads)]

    def pairs(self, split: str, leads=None) -> list:
        return [(w.x, w.label) for w in self.select(split, leads)]


# --- splitting and windowing ---------------------------------------------

def split_counts(n: int, fractions=(0.70, 0.15, 0.15)) -> tuple:
    """Rounded counts for all but the last split; the last takes the remainder.

    Exact halves round to even, so 110 records give 77/16/17.
    """
    counts = [int(round(f * n)) for f in fractions[:-1]]
    return tuple(counts + [n - sum(counts)])


def split_records(records, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> list:
    """Shuffle, tag each record with a split name, return the tagged copies."""
    records = list(records)
    if len(fractions) != len(SPLITS) or abs(math.fsum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("fractions must be three non-negative values summing to 1")
    active = sum(1 for f in fractions if f > 0)
    if len(records) < active:
        raise ValueError(f"{len(records)} records cannot fill {active} splits")
    counts = split_counts(len(records), fractions)
    if any(c < 0 for c in counts):
        raise ValueError("split counts went negative; check fractions")
    order = np.random.default_rng(seed).permutation(len(records))
    tags = [name for name, c in zip(SPLITS, counts) for _ in range(c)]
    out = []
    for tag, idx in zip(tags, order):
        r = records[idx]
        out.append(LabeledRecord(r.record_id, r.lead, r.samples, r.label, tag))
    return out


def make_windows(records, window: int = WINDOW) -> WindowedDataset:
    """Non-overlapping windows per record; a trailing remainder is dropped."""
    out = []
    for r in records:
        n = len(r.samples)
        if window > n:
            raise ValueError(f"window {window} exceeds record {r.record_id} length {n}")
        for k in range(n // window):
            out.append(Window(r.samples[k * window:(k + 1) * window].copy(), r.label, r.record_id, r.split, r.lead))
    return WindowedDataset(out)


def pos_weight(dataset: WindowedDataset, split: str = "train", leads=None) -> float:
    ws = dataset.select(split, leads)
    pos = sum(1 for w in ws if w.label == 1)
    neg = len(ws) - pos
    if pos == 0:
        raise ValueError(f"no positive windows in the {split} split")
    return neg / pos


# --- metrics -------------------------------------------------------------

def _check(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if s.shape != y.shape or s.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    return s, y


def accuracy(scores, labels, threshold: float = 0.5) -> float:
    s, y = _check(scores, labels)
    if s.size == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.mean((s > threshold).astype(np.int64) == y))


def confusion(scores, labels, threshold: float = 0.5) -> dict:
    s, y = _check(scores, labels)
    pred = s > threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    tn = int(np.sum(~pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    pos, neg = tp + fn, fp + tn
    norm = {
        "tp": tp / pos if pos else 0.0, "fn": fn / pos if pos else 0.0,
        "tn": tn / neg if neg else 0.0, "fp": fp / neg if neg else 0.0,
    }
    return {"tp": tp, "fp": fp, "tn": tn, "fn": fn, "normalized": norm}


def roc_auc(scores, labels):
    """ROC vertices ``(fpr, tpr, threshold)`` from a +inf sentinel down, and trapezoidal AUC.

    Scores at or above a threshold count as positive; tied scores form one vertex.
    """
    s, y = _check(scores, labels)
    P = int(np.sum(y == 1))
    N = int(np.sum(y == 0))
    if P == 0 or N == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    roc = [(0.0, 0.0, math.inf)]
    tp = fp = 0
    area2 = 0  # twice the area, times P*N, kept as an exact integer
    i = 0
    while i < s.size:
        j = i
        while j < s.size and s[j] == s[i]:
            j += 1
        dtp = int(np.sum(y[i:j] == 1))
        dfp = (j - i) - dtp
        area2 += dfp * (2 * tp + dtp)
        tp += dtp
        fp += dfp
        roc.append((fp / N, tp / P, float(s[i])))
        i = j
    return roc, area2 / (2 * P * N)


def auc_pairs(scores, labels) -> float:
    """P(score_pos > score_neg) + P(tie) / 2, by brute force."""
    s, y = _check(scores, labels)
    pos, neg = s[y == 1], s[y == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC undefined: labels contain a single class")
    d = pos[:, None] - neg[None, :]
    wins = 2 * int(np.sum(d > 0)) + int(np.sum(d == 0))
    return wins / (2 * pos.size * neg.size)


@dataclass
class EvalReport:
    accuracy: float
    loss: float
    roc: list
    auc: float
    confusion: dict
    split: str = ""
    lead_set: str = ""
    n: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["roc"] = [[f, t, ("inf" if math.isinf(th) else th)] for f, t, th in self.roc]
        return d


def evaluate(model, pairs, pos_weight_value: float = 1.0, split: str = "", lead_set: str = "") -> EvalReport:
    if not pairs:
        raise ValueError(f"nothing to evaluate in split {split!r}")
    scores, labels, losses = [], [], []
    for x, y in pairs:
        p, cache = neural.forward_sequence(model, x, train=False)
        scores.append(p)
        labels.append(y)
        losses.append(neural.loss_from_logit(cache.logit, y, pos_weight_value))
    try:
        roc, auc = roc_auc(scores, labels)
    except ValueError:
        roc, auc = [], float("nan")
    return EvalReport(accuracy(scores, labels), math.fsum(losses), roc, auc,
                      confusion(scores, labels), split, lead_set, len(pairs))


def roc_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    buf.write("fpr,tpr,threshold\n")
    for f, t, th in report.roc:
        buf.write(f"{f:.17g},{t:.17g},{'inf' if math.isinf(th) else format(th, '.17g')}\n")
    return buf.getvalue()


# --- grid search ---------------------------------------------------------

@dataclass
class SearchGrid:
    epochs: tuple = (5, 10, 15)
    lr: tuple = (1e-2, 1e-3, 1e-4, 1e-5)
    hidden: tuple = (100, 150, 200)
    layers: tuple = (1, 2, 3)
    lead_sets: tuple = ("V1", "V2", "both")

    def __post_init__(self):
        for name in SEARCH_ORDER + ("lead_sets",):
            v = tuple(getattr(self, name))
            if not v:
                raise ValueError(f"grid option list {name!r} is empty")
            setattr(self, name, v)
        for ls in self.lead_sets:
            if ls not in LEAD_SETS:
                raise ValueError(f"unknown lead set {ls!r}")

    def cells(self) -> list:
        out = []
        for ls in self.lead_sets:
            for e, lr, h, nl in itertools.product(self.epochs, self.lr, self.hidden, self.layers):
                out.append({"lead_set": ls, "epochs": e, "lr": lr, "hidden": h, "layers": nl})
        return out


REFERENCE_V1_CONFIG = {"epochs": 15, "lr": 1e-3, "hidden": 150, "layers": 1}

METRIC_FIELDS = ("val_loss", "val_auc", "val_acc", "test_loss", "test_auc", "test_acc")
TABLE_FIELDS = ("run", "lead_set", "epochs", "lr", "hidden", "layers", "seed", "status") + METRIC_FIELDS + ("error",)


def cell_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def run_cell(cell: dict, data: WindowedDataset, seed: int, dropout: float = 0.25) -> dict:
    """Train one configuration and score it on the validation and test splits."""
    leads = LEAD_SETS[cell["lead_set"]]
    train_pairs = data.pairs("train", leads)
    w = pos_weight(data, "train", leads)
    model = neural.LstmModel.init(1, int(cell["hidden"]), int(cell["layers"]), dropout, seed,
                                  {"lead_set": cell["lead_set"]})
    cfg = neural.TrainConfig(int(cell["epochs"]), float(cell["lr"]), w, seed)
    neural.train(model, train_pairs, cfg)
    val = evaluate(model, data.pairs("val", leads), w, "val", cell["lead_set"])
    test = evaluate(model, data.pairs("test", leads), w, "test", cell["lead_set"])
    return {"val_loss": val.loss, "val_auc": val.auc, "val_acc": val.accuracy,
            "test_loss": test.loss, "test_auc": test.auc, "test_acc": test.accuracy}


def _run_one(args):
    i, cell, data, seed, runner = args
    s = cell_seed(seed, i)
    row = {"run": i, **cell, "seed": s}
    try:
        metrics = runner(cell, data, s)
        if not all(math.isfinite(float(metrics[k])) for k in ("val_loss", "val_auc", "val_acc")):
            raise neural.TrainingDiverged(-1, -1, float("nan"))
        row.update({k: float(metrics.get(k, float("nan"))) for k in METRIC_FIELDS})
        row["status"] = "ok"
        row["error"] = ""
    except (neural.TrainingDiverged, ValueError, FloatingPointError) as exc:
        row.update({k: float("nan") for k in METRIC_FIELDS})
        row["status"] = "failed"
        row["error"] = str(exc)
    return row


def marginal(rows: list, param: str, value) -> dict:
    sel = [r for r in rows if r[param] == value]
    n = len(sel)
    if n == 0:
        return {"n": 0, "val_auc": float("nan"), "val_loss": float("nan"), "val_acc": float("nan")}
    return {
        "n": n,
        "val_auc": math.fsum(r["val_auc"] for r in sel) / n,
        "val_loss": math.fsum(r["val_loss"] for r in sel) / n,
        "val_acc": math.fsum(r["val_acc"] for r in sel) / n,
    }


def select_config(table: list, order=SEARCH_ORDER):
    """Sequential marginal selection for one lead set.

    For each parameter in turn, average the validation metrics over every
    remaining combination for each candidate value, keep the value with the
    highest mean AUC (then lowest mean loss, then highest mean accuracy), and
    restrict the table to it. Failed runs take no part.
    """
    rows = [r for r in table if r.get("status", "ok") == "ok"]
    if not rows:
        raise ValueError("no successful runs to select from")
    chosen, trail = {}, []
    for param in order:
        values = sorted({r[param] for r in rows})
        scored = []
        for v in values:
            m = marginal(rows, param, v)
            trail.append({"param": param, "value": v, "fixed": dict(chosen), **m})
            scored.append((v, m))
        best_v, _ = min(scored, key=lambda vm: (-vm[1]["val_auc"], vm[1]["val_loss"], -vm[1]["val_acc"]))
        chosen[param] = best_v
        rows = [r for r in rows if r[param] == best_v]
    return chosen, trail


@dataclass
class SearchResult:
    table: list
    chosen: dict            # lead set -> config
    marginals: dict         # lead set -> selection trail
    failed: list = field(default_factory=list)


def grid_search(grid: SearchGrid, data: WindowedDataset, seed: int = 0, runner=None, jobs: int = 1) -> SearchResult:
    runner = runner or run_cell
    cells = grid.cells()
    tasks = [(i, c, data, seed, runner) for i, c in enumerate(cells)]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            table = list(ex.map(_run_one, tasks))
    else:
        table = [_run_one(t) for t in tasks]
    table.sort(key=lambda r: r["run"])
    chosen, trails = {}, {}
    for ls in grid.lead_sets:
        rows = [r for r in table if r["lead_set"] == ls]
        try:
            chosen[ls], trails[ls] = select_config(rows)
        except ValueError:
            chosen[ls], trails[ls] = None, []
    return SearchResult(table, chosen, trails, [r for r in table if r["status"] != "ok"])


def table_csv(table: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_FIELDS)
    for r in table:
        out = []
        for k in TABLE_FIELDS:
            v = r.get(k, "")
            out.append(format(v, ".17g") if isinstance(v, float) else v)
        w.writerow(out)
    return buf.getvalue()


def parse_table_csv(text: str) -> list:
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        row = dict(r)
        for k in ("run", "epochs", "hidden", "layers", "seed"):
            row[k] = int(row[k])
        for k in ("lr",) + METRIC_FIELDS:
            row[k] = float(row[k])
        rows.append(row)
    return rows


# --- ingestion -----------------------------------------------------------

def read_records_csv(text: str, length: int = RECORD_LENGTH) -> list:
    """``record_id,lead,label,sample_0..sample_{length-1}`` rows."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or [h.strip() for h in header[:3]] != ["record_id", "lead", "label"]:
        raise ValueError("line 1: expected header record_id,lead,label,sample_0,...")
    if len(header) - 3 != length:
        raise ValueError(f"line 1: expected {length} sample columns, found {len(header) - 3}")
    out = []
    for ln, r in enumerate(reader, start=2):
        if not r:
            continue
        if len(r) != length + 3:
            raise ValueError(f"line {ln}: expected {length + 3} fields, got {len(r)}")
        try:
            out.append(LabeledRecord(r[0], r[1], np.array(r[3:], dtype=np.float64), int(r[2])))
        except ValueError as exc:
            raise ValueError(f"line {ln}: {exc}") from None
    return out


def records_csv(records, length: int = RECORD_LENGTH) -> str:
    buf = io.StringIO()
    buf.write("record_id,lead,label," + ",".join(f"sample_{i}" for i in range(length)) + "\n")
    for r in records:
        if len(r.samples) != length:
            raise ValueError(f"record {r.record_id} has {len(r.samples)} samples, expected {length}")
        buf.write(f"{r.record_id},{r.lead},{r.label}," + ",".join(format(v, ".9g") for v in r.samples.tolist()) + "\n")
    return buf.getvalue()


def record_from_series(record_id: str, lead: str, values, label: int, length: int = RECORD_LENGTH) -> LabeledRecord:
    """Fix a digitized series to the instance length by truncation."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < length:
        raise ValueError(f"record {record_id}: {v.size} samples, need at least {length}")
    return LabeledRecord(record_id, lead, v[:length], label)
