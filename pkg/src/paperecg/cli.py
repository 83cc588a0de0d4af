"""Command-line interface: digitize, synth, train, evaluate, search, plot.

Exit codes: 0 success, 1 runtime or partial failure, 2 usage error.
Failures print one JSON object on stderr. Every command writes its fully
resolved configuration to ``<out>/resolved_config.json``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import extract, ioutil, layout, neural, pipeline, plots, study, synth

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _err(command: str, exc: BaseException, **extra) -> dict:
    return {"command": command, "error": type(exc).__name__, "message": str(exc), **extra}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _write(out: str, name: str, text: str) -> str:
    path = os.path.join(out, name)
    ioutil.atomic_write_text(path, text)
    return path


# --- digitize ------------------------------------------------------------

def read_manifest(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, list):
        raise UsageError(f"{path}: manifest must be a JSON array of sheet entries")
    base = os.path.dirname(os.path.abspath(path))
    out = []
    for k, e in enumerate(doc):
        if not isinstance(e, dict) or "path" not in e:
            raise UsageError(f"{path}: entry {k} needs at least a 'path'")
        e = dict(e)
        e["_resolved"] = e["path"] if os.path.isabs(e["path"]) else os.path.join(base, e["path"])
        e.setdefault("id", os.path.splitext(os.path.basename(e["path"]))[0])
        out.append(e)
    ids = [e["id"] for e in out]
    if len(set(ids)) != len(ids):
        raise UsageError(f"{path}: entry ids must be unique")
    return out


def digitize_entry(entry: dict, cfg: dict, type_flag=None, seed: int = 0) -> tuple:
    """Digitize one manifest entry; returns ``(result, profile)``."""
    try:
        st = layout.classify_sheet(entry, type_flag)
    except ValueError as exc:
        raise ValueError(f"entry {entry['id']!r}: {exc}") from None
    over = cfgmod.profile_overrides(cfg, st)
    over.update(entry.get("overrides") or {})
    profile = layout.profile_for(st, over)
    image = ioutil.read_image(entry["_resolved"])
    ex = cfg["extract"]
    res = pipeline.digitize_sheet(
        image, st, profile=profile, hough=cfgmod.hough_config(cfg), seed=seed,
        crop_rect=entry.get("manual_crop"), upsample=int(ex["upsample"]),
        speed=float(ex["speed_mm_s"]), gain=float(ex["gain_mm_mv"]),
        trailing_threshold=int(ex["trailing_threshold"]))
    return res, profile


def _digitize_job(args):
    entry, cfg, type_flag, seed, out, with_plots = args
    record = {"id": entry["id"], "path": entry["path"]}
    try:
        res, profile = digitize_entry(entry, cfg, type_flag, seed)
    except Exception as exc:  # isolate per-sheet failures
        record.update(status="failed", error=type(exc).__name__, message=str(exc))
        return record, []
    d = os.path.join(out, entry["id"])
    files = []
    for lr in res.leads:
        ts = lr.upsampled
        files.append(_write(d, f"{lr.lead}.csv", extract.series_csv(ts)))
        files.append(_write(d, f"{lr.lead}.json", extract.sidecar_json(ts, res.sheet_type.label, res.provenance)))
    prov = {"id": entry["id"], "path": entry["path"], "sheet_type": res.sheet_type.label,
            "angle": res.angle, "no_lines": res.no_lines, "warnings": res.warnings,
            "profile": profile.to_dict(), "stages": res.provenance}
    files.append(_write(d, "provenance.json", _dump(prov)))
    if with_plots and res.leads:
        files.append(_write(d, "trace.svg", plots.trace_svg([lr.upsampled for lr in res.leads], entry["id"])))
    rows = []
    if "label" in entry:
        for lr in res.leads:
            v = lr.upsampled.values
            if v.size >= study.RECORD_LENGTH:
                rows.append(study.record_from_series(entry["id"], lr.lead, v, int(entry["label"])))
    record.update(status="ok", leads=[lr.lead for lr in res.leads], warnings=res.warnings)
    return record, rows


def cmd_digitize(args, cfg) -> int:
    entries = read_manifest(args.manifest)
    jobs = [(e, cfg, args.type, args.seed, args.out, args.plots) for e in entries]
    if args.jobs > 1 and len(jobs) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            done = list(ex.map(_digitize_job, jobs))
    else:
        done = [_digitize_job(j) for j in jobs]
    summary = [r for r, _ in done]
    records = [row for _, rows in done for row in rows]
    _write(args.out, "digitize_summary.json", _dump(summary))
    if records:
        _write(args.out, "records.csv", study.records_csv(records))
    failed = [r for r in summary if r["status"] != "ok"]
    for r in failed:
        print(json.dumps({"command": "digitize", "entry": r["id"], "error": r["error"], "message": r["message"]}),
              file=sys.stderr)
    print(f"digitized {len(summary) - len(failed)}/{len(summary)} sheets")
    return EXIT_FAIL if failed else EXIT_OK


# --- synth ---------------------------------------------------------------

def _synth_spec(args, brugada: bool, rotation: float) -> synth.SynthSpec:
    kw = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            kw = json.load(fh)
    if args.type is not None:
        kw["sheet_type"] = args.type
    if args.leads:
        kw["leads"] = tuple(args.leads.split(","))
    for name in ("duration", "heart_rate", "noise", "specks"):
        v = getattr(args, name)
        if v is not None:
            kw[name] = v
    if args.no_glyphs:
        kw["glyphs"] = False
    if args.flat:
        kw["waves"] = []
    kw["rotation"] = rotation
    kw["brugada"] = brugada
    return synth.SynthSpec(**kw)


def write_sheet(sheet: synth.Sheet, d: str, fmt: str = "pnm") -> str:
    """Image, per-lead truth CSVs, truth JSON and per-class masks into ``d``."""
    rgb = sheet.image.ndim == 3
    ext = "png" if fmt == "png" else ("ppm" if rgb else "pgm")
    name = f"sheet.{ext}"
    ioutil.write_image(os.path.join(d, name), sheet.image)
    for t in sheet.truths:
        _write(d, f"truth_{t.lead}.csv", synth.truth_csv(t))
    _write(d, "truth.json", sheet.truth_json())
    mext = "png" if fmt == "png" else "pgm"
    for k, cname in enumerate(synth.CLASS_NAMES):
        ioutil.write_image(os.path.join(d, f"mask_{cname}.{mext}"), (sheet.classes == k).astype(np.uint8) * 255)
    return name


def cmd_synth(args, cfg) -> int:
    rng = np.random.default_rng(args.seed)
    manifest = []
    n = args.count
    for i in range(n):
        s = args.seed if n == 1 else study.cell_seed(args.seed, i)
        if args.brugada_fraction is not None:
            bru = i < int(round(args.brugada_fraction * n))
        else:
            bru = args.brugada
        if args.rotation_range:
            rot = float(rng.uniform(-args.rotation_range, args.rotation_range))
        else:
            rot = args.rotation
        spec = _synth_spec(args, bru, rot)
        sheet = synth.render(spec, s)
        sub = "" if n == 1 else f"sheet_{i:04d}"
        d = os.path.join(args.out, sub)
        name = write_sheet(sheet, d, args.format)
        manifest.append({"id": sub or "sheet", "path": os.path.join(sub, name) if sub else name,
                         "type": spec.sheet_type.label, "label": int(bru), "rotation": rot, "seed": s})
    _write(args.out, "manifest.json", _dump(manifest))
    print(f"wrote {n} sheet(s) to {args.out}")
    return EXIT_OK


# --- training and evaluation ---------------------------------------------

def load_dataset(path: str, cfg: dict, seed: int):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    tr = cfg["train"]
    recs = study.read_records_csv(text, int(tr["record_length"]))
    if not recs:
        raise ValueError(f"{path}: no records")
    # split by record id so every lead of a record lands in the same split
    ids = sorted({r.record_id for r in recs})
    tagged = study.split_records([study.LabeledRecord(i, "", np.zeros(1), 0) for i in ids],
                                 tuple(tr["fractions"]), seed)
    where = {r.record_id: r.split for r in tagged}
    recs = [study.LabeledRecord(r.record_id, r.lead, r.samples, r.label, where[r.record_id]) for r in recs]
    return recs, study.make_windows(recs, int(tr["window"]))


def _pos_weight(cfg, data, leads) -> float:
    pw = cfg["train"]["pos_weight"]
    return study.pos_weight(data, "train", leads) if pw == "auto" else float(pw)


def cmd_train(args, cfg) -> int:
    tr = cfg["train"]
    recs, data = load_dataset(args.data, cfg, args.seed)
    leads = study.LEAD_SETS[tr["lead_set"]]
    pairs = data.pairs("train", leads)
    w = _pos_weight(cfg, data, leads)
    model = neural.LstmModel.init(1, int(tr["hidden"]), int(tr["layers"]), float(tr["dropout"]), args.seed,
                                  {"lead_set": tr["lead_set"], "seed": args.seed, "pos_weight": w,
                                   "fractions": list(tr["fractions"]), "window": int(tr["window"])})
    log = []

    def progress(epoch, loss):
        log.append({"epoch": epoch + 1, "train_loss": loss})
        if args.verbose:
            print(f"epoch {epoch + 1}/{tr['epochs']} loss {loss:.6f}", flush=True)

    neural.train(model, pairs, neural.TrainConfig(int(tr["epochs"]), float(tr["lr"]), w, args.seed), progress)
    neural.save_model(os.path.join(args.out, "model.json"), model)
    split = {r.record_id: r.split for r in recs}
    _write(args.out, "train_log.json", _dump({"pos_weight": w, "windows": len(pairs), "epochs": log,
                                              "split": dict(sorted(split.items()))}))
    print(f"trained on {len(pairs)} windows, pos_weight {w:.6g}, final loss {log[-1]['train_loss']:.6f}")
    return EXIT_OK


TABLE1 = (("Val Total Loss", "val", "loss"), ("Val AUC", "val", "auc"), ("Val ACC", "val", "accuracy"),
          ("Test AUC", "test", "auc"), ("Test ACC", "test", "accuracy"))


def cmd_evaluate(args, cfg) -> int:
    if not os.path.exists(args.model):
        raise FileNotFoundError(f"checkpoint not found: {args.model}")
    model = neural.load_model(args.model)
    meta = model.metadata
    seed = int(meta.get("seed", args.seed))
    cfg = cfgmod.merge(cfg, {"train": {"fractions": meta.get("fractions", cfg["train"]["fractions"]),
                                       "window": meta.get("window", cfg["train"]["window"])}})
    _, data = load_dataset(args.data, cfg, seed)
    ls = meta.get("lead_set", cfg["train"]["lead_set"])
    leads = study.LEAD_SETS[ls]
    w = float(meta.get("pos_weight", _pos_weight(cfg, data, leads)))
    reports = {s: study.evaluate(model, data.pairs(s, leads), w, s, ls) for s in ("val", "test")}
    for s, rep in reports.items():
        _write(args.out, f"roc_{s}.csv", study.roc_csv(rep))
    table = {name: getattr(reports[s], attr) for name, s, attr in TABLE1}
    doc = {"lead_set": ls, "pos_weight": w, "table": table,
           "reports": {s: r.to_dict() for s, r in reports.items()}}
    _write(args.out, "report.json", _dump(doc))
    for name, _, _ in TABLE1:
        print(f"{name:<15} {table[name]:.6f}")
    return EXIT_OK


def cmd_search(args, cfg) -> int:
    _, data = load_dataset(args.data, cfg, args.seed)
    sg = cfg["search"]
    grid = study.SearchGrid(tuple(sg["epochs"]), tuple(sg["lr"]), tuple(sg["hidden"]),
                            tuple(sg["layers"]), tuple(sg["lead_sets"]))
    dropout = float(cfg["train"]["dropout"])

    res = study.grid_search(grid, data, args.seed, _Runner(dropout), args.jobs)
    _write(args.out, "search_table.csv", study.table_csv(res.table))
    _write(args.out, "search_selection.json", _dump({"chosen": res.chosen, "marginals": res.marginals,
                                                     "runs": len(res.table), "failed": len(res.failed)}))
    for ls, c in res.chosen.items():
        print(f"{ls}: {json.dumps(c, sort_keys=True)}")
    return EXIT_FAIL if res.failed else EXIT_OK


class _Runner:
    """Picklable grid-cell runner carrying the dropout rate."""

    def __init__(self, dropout: float):
        self.dropout = dropout

    def __call__(self, cell, data, seed):
        return study.run_cell(cell, data, seed, self.dropout)


# --- plot ----------------------------------------------------------------

def _detect_kind(path: str, text: str) -> str:
    if path.endswith(".csv"):
        head = text.split("\n", 1)[0].strip()
        if head.startswith("fpr,tpr"):
            return "roc"
        return "trace"
    doc = json.loads(text)
    if isinstance(doc, dict) and "reports" in doc:
        return "roc"
    return "profile"


def cmd_plot(args, cfg) -> int:
    inputs = args.inputs
    texts = []
    for p in inputs:
        with open(p, encoding="utf-8") as fh:
            texts.append(fh.read())
    kind = args.kind or _detect_kind(inputs[0], texts[0])
    if kind == "trace":
        series = [extract.parse_series_csv(t, os.path.splitext(os.path.basename(p))[0]) for p, t in zip(inputs, texts)]
        svg = plots.trace_svg(series, args.title or "trace")
    elif kind == "roc":
        curves = []
        for p, t in zip(inputs, texts):
            if p.endswith(".csv"):
                curves.append((os.path.basename(p), _parse_roc_csv(t)))
            else:
                doc = json.loads(t)
                for s, rep in sorted(doc["reports"].items()):
                    curves.append((f"{doc.get('lead_set', '')} {s} AUC {rep['auc']:.3f}",
                                   [(r[0], r[1]) for r in rep["roc"]]))
        svg = plots.roc_svg(curves, args.title or "ROC")
    elif kind == "profile":
        doc = json.loads(texts[0])
        seg = [s for s in doc.get("stages", []) if s.get("stage") == "segment" and "profile" in s]
        if not seg:
            raise ValueError(f"{inputs[0]}: no row profile recorded (Type 1 sheets are segmented by lookup)")
        svg = plots.profile_svg(seg[0]["profile"], seg[0]["peaks"], seg[0]["cuts"], args.title or "row profile")
    else:
        raise UsageError(f"unknown plot kind {kind!r}")
    target = args.output or os.path.join(args.out, f"{kind}.svg")
    ioutil.atomic_write_text(target, svg)
    print(target)
    return EXIT_OK


def _parse_roc_csv(text: str) -> list:
    lines = text.strip().split("\n")
    if not lines or lines[0].strip() != "fpr,tpr,threshold":
        raise ValueError("line 1: expected header fpr,tpr,threshold")
    out = []
    for ln, row in enumerate(lines[1:], start=2):
        parts = row.split(",")
        if len(parts) != 3:
            raise ValueError(f"line {ln}: expected 3 fields, got {len(parts)}")
        try:
            f, t = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise ValueError(f"line {ln}: {exc}") from None
        if not (math.isfinite(f) and math.isfinite(t)):
            raise ValueError(f"line {ln}: non-finite rate")
        out.append((f, t))
    return out


# --- argument parsing ----------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="global seed (default 0)")
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default .)")
    p.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel workers (default 1)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="paperecg", parents=[common],
                                 description="Digitize paper ECG sheets and classify recovered leads.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("digitize", parents=[common], help="run the digitization pipeline over a manifest")
    p.add_argument("manifest", help="JSON array of {path, type, manual_crop, overrides}")
    p.add_argument("--type", default=None, help="sheet type for every entry (overrides the manifest)")
    p.add_argument("--plots", action="store_true", help="also write an SVG trace overlay per sheet")

    p = sub.add_parser("synth", parents=[common], help="render synthetic sheets with exact ground truth")
    p.add_argument("--type", default="3")
    p.add_argument("--spec", help="JSON file with SynthSpec fields")
    p.add_argument("--leads", help="comma-separated strip leads (Type 2/3)")
    p.add_argument("--duration", type=float)
    p.add_argument("--heart-rate", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--specks", type=int)
    p.add_argument("--rotation", type=float, default=0.0, help="degrees")
    p.add_argument("--rotation-range", type=float, default=0.0, help="draw rotations from U(-r, r)")
    p.add_argument("--brugada", action="store_true", help="add the Brugada-like ST/T pattern on V1/V2")
    p.add_argument("--brugada-fraction", type=float, help="with --count: fraction of Brugada sheets")
    p.add_argument("--no-glyphs", action="store_true")
    p.add_argument("--flat", action="store_true", help="flat waveform (baseline only)")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--format", choices=("pnm", "png"), default="pnm")

    p = sub.add_parser("train", parents=[common], help="train an LSTM on a records CSV")
    p.add_argument("data", help="records CSV: record_id,lead,label,sample_0..")
    p.add_argument("--lead-set", choices=sorted(study.LEAD_SETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("evaluate", parents=[common], help="score a checkpoint on the val/test splits")
    p.add_argument("model")
    p.add_argument("data")

    p = sub.add_parser("search", parents=[common], help="grid search with marginal selection")
    p.add_argument("data")

    p = sub.add_parser("plot", parents=[common], help="SVG of a series CSV, ROC CSV/report, or row profile")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--kind", choices=("trace", "roc", "profile"))
    p.add_argument("--title")
    p.add_argument("-o", "--output", help="SVG path (default <out>/<kind>.svg)")
    return ap


COMMANDS = {"digitize": cmd_digitize, "synth": cmd_synth, "train": cmd_train,
            "evaluate": cmd_evaluate, "search": cmd_search, "plot": cmd_plot}


def _flag_overrides(args) -> dict:
    over = {"seed": args.seed, "jobs": args.jobs}
    if args.command == "train":
        tr = {k: getattr(args, a) for k, a in (("lead_set", "lead_set"), ("epochs", "epochs"), ("lr", "lr"),
                                                ("hidden", "hidden"), ("layers", "layers"))
              if getattr(args, a) is not None}
        if tr:
            over["train"] = tr
    return over


def _arg_record(args) -> dict:
    skip = {"config", "out", "seed", "jobs", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and not k.startswith("_")}


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.config = getattr(args, "config", None)
    args.out = getattr(args, "out", ".")
    args.jobs = getattr(args, "jobs", 1)
    if args.jobs < 1:
        print(_dump(_err(args.command, UsageError("--jobs must be >= 1"))), file=sys.stderr, end="")
        return EXIT_USAGE
    try:
        cfg = cfgmod.load(args.config)
        if not hasattr(args, "seed"):
            args.seed = int(cfg["seed"])
        if args.jobs == 1:
            args.jobs = int(cfg["jobs"])
        cfg = cfgmod.merge(cfg, _flag_overrides(args))
    except (OSError, ValueError) as exc:
        print(_dump(_err(args.command, exc)), file=sys.stderr, end="")
        return EXIT_USAGE
    try:
        os.makedirs(args.out, exist_ok=True)
        _write(args.out, "resolved_config.json", cfgmod.resolved_json(cfg, args.command, _arg_record(args)))
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(_dump(_err(args.command, exc)), file=sys.stderr, end="")
        return EXIT_USAGE
    except Exception as exc:
        print(_dump(_err(args.command, exc)), file=sys.stderr, end="")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
