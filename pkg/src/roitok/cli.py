"""Command-line entry point: ``roitok <subcommand> [options]``.

Options come from three layers, later ones winning: built-in defaults, a JSON
config file (``--config`` or the ``ROITOK_CONFIG`` environment variable), and
command-line flags. A config file may hold top-level keys shared across
subcommands and per-subcommand sections, e.g. ``{"seed": 3, "budget":
{"s_v": 5}}``; keys that no subcommand knows are rejected.

Exit codes: 0 success, 1 validation error, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import reference
from .budget import (
    BudgetBand,
    as_fraction,
    count_tokens,
    efficiency_report,
    feasible_vision_sizes,
    solve_pooling,
)
from .ingestion import (
    DEFAULT_CLASS_MAP,
    ConstructionCaps,
    apply_construction_filters,
    corpus_stats,
    load_corpus,
)
from .metrics import (
    DOMAINS,
    DetRecord,
    GoldBox,
    KieRecord,
    PredBox,
    score_detection,
    score_kie,
)
from .pooling import backbone_stub, init_params, load_params, prepare_image, tokenize_document
from .types import BBox, PoolingConfig, RoiClass

CONFIG_ENV = "ROITOK_CONFIG"

EXIT_OK, EXIT_VALIDATION, EXIT_INTERNAL = 0, 1, 2


class ValidationError(Exception):
    pass


DEFAULTS: dict[str, dict] = {
    "tokenize": {"corpus": None, "out": None, "params": None, "s_t": 1, "s_v": 4, "s_g": 8,
                 "d": 256, "levels": 4, "base_stride": 8, "sampling_ratio": 2, "seed": 0,
                 "jobs": 1, "image_root": None, "save_vectors": False},
    "budget": {"n_text": 0, "n_vision": 0, "s_t": 1, "s_v": 4, "s_g": 8, "expected": False,
               "format": "kv"},
    "solve-pooling": {"n_text_avg": reference.CORPUS_AVG_TEXT_REGIONS,
                      "n_vision_avg": reference.CORPUS_AVG_VISION_REGIONS,
                      "band_lower": 476, "band_upper": 676, "s_t": 1, "link": 2, "d": 256,
                      "format": "kv"},
    "ingest": {"input": None, "out": None, "stats_out": None, "seed": 0, "train_cap": 50_000,
               "test_cap": 1_000, "max_boxes": 1_000, "schema_version": 1, "class_map": None,
               "lenient": False},
    "stats": {"input": None, "out": None, "format": "md", "schema_version": 1, "class_map": None},
    "eval-kie": {"gold": None, "pred": None, "out": None, "format": "md", "average": "micro"},
    "eval-det": {"gold": None, "pred": None, "out": None, "format": "md"},
    "report": {"input": None, "reference": False, "out": None, "format": "md",
               "baseline_label": "baseline", "ours_label": "ours"},
}

# keys only settable from a config file
CONFIG_ONLY = {"class_map"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _add(p, sub, name, type=None, help="", **kw):
    default = DEFAULTS[sub][name]
    flag = "--" + name.replace("_", "-")
    suffix = f" (default: {default})" if default not in (None, False) else ""
    if type is bool:
        p.add_argument(flag, dest=name, action="store_true", default=None, help=help + suffix)
    else:
        p.add_argument(flag, dest=name, type=type, default=None, help=help + suffix, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roitok", description="Region-based document image tokenization toolkit.")
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV} if set)")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = subs.add_parser("tokenize", help="tokenize every page of an annotation corpus")
    _add(p, "tokenize", "corpus", Path, "annotation corpus (JSON lines)")
    _add(p, "tokenize", "out", Path, "output directory for layout files and summary.csv")
    _add(p, "tokenize", "params", Path, "parameter file (.npz); seeded init if omitted")
    for n in ("s_t", "s_v", "s_g", "d", "levels", "base_stride", "sampling_ratio", "seed", "jobs"):
        _add(p, "tokenize", n, int)
    _add(p, "tokenize", "image_root", Path, "directory for relative image paths (default: corpus dir)")
    _add(p, "tokenize", "save_vectors", bool, "also write <id>.vectors.npy")

    p = subs.add_parser("budget", help="image-token count for one page")
    _add(p, "budget", "n_text", Fraction, "number of text regions")
    _add(p, "budget", "n_vision", Fraction, "number of vision regions")
    for n in ("s_t", "s_v", "s_g"):
        _add(p, "budget", n, int)
    _add(p, "budget", "expected", bool, "allow fractional (average) region counts")
    _add(p, "budget", "format", str, choices=("kv", "table"))

    p = subs.add_parser("solve-pooling", help="largest vision pooling size keeping tokens in band")
    _add(p, "solve-pooling", "n_text_avg", Fraction, "average text regions per page")
    _add(p, "solve-pooling", "n_vision_avg", Fraction, "average vision regions per page")
    _add(p, "solve-pooling", "band_lower", Fraction, "exclusive lower bound on total tokens")
    _add(p, "solve-pooling", "band_upper", Fraction, "inclusive upper bound on total tokens")
    for n in ("s_t", "link", "d"):
        _add(p, "solve-pooling", n, int)
    _add(p, "solve-pooling", "format", str, choices=("kv", "table"))

    p = subs.add_parser("ingest", help="validate, cap and filter an annotation corpus")
    _add(p, "ingest", "input", Path, "input corpus")
    _add(p, "ingest", "out", Path, "filtered corpus output")
    _add(p, "ingest", "stats_out", Path, "write a Markdown statistics report here")
    for n in ("seed", "train_cap", "test_cap", "max_boxes", "schema_version"):
        _add(p, "ingest", n, int)
    _add(p, "ingest", "lenient", bool, "skip bad lines (reported on stderr) instead of failing")

    p = subs.add_parser("stats", help="corpus statistics")
    p.add_argument("input_files", nargs="*", type=Path, help="corpus shards")
    _add(p, "stats", "out", Path, "write the report here instead of stdout")
    _add(p, "stats", "format", str, choices=("md", "csv"))
    _add(p, "stats", "schema_version", int)

    p = subs.add_parser("eval-kie", help="entity-label F1 of KIE predictions")
    _add(p, "eval-kie", "gold", Path, "gold records (JSON lines)")
    _add(p, "eval-kie", "pred", Path, "predictions (JSON lines: id, prediction)")
    _add(p, "eval-kie", "out", Path, "directory for f1.csv and f1.md")
    _add(p, "eval-kie", "format", str, choices=("md", "csv"))
    _add(p, "eval-kie", "average", str, choices=("micro", "macro"))

    p = subs.add_parser("eval-det", help="COCO-style AP of region detections")
    _add(p, "eval-det", "gold", Path, "gold boxes (JSON lines)")
    _add(p, "eval-det", "pred", Path, "predicted boxes (JSON lines)")
    _add(p, "eval-det", "out", Path, "directory for detection.csv and detection.md")
    _add(p, "eval-det", "format", str, choices=("md", "csv"))

    p = subs.add_parser("report", help="image-token efficiency against a baseline")
    _add(p, "report", "input", Path, "CSV with columns dataset, ours, baseline[, group]")
    _add(p, "report", "reference", bool, "use the built-in published KIE token counts")
    _add(p, "report", "out", Path, "directory for efficiency.csv/.md and plot.csv")
    _add(p, "report", "format", str, choices=("md", "csv"))
    _add(p, "report", "baseline_label", str)
    _add(p, "report", "ours_label", str)
    return parser


def resolve_options(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and explicit flags for the chosen subcommand."""
    cmd = args.command
    opts = dict(DEFAULTS[cmd])
    cfg_path = args.config or os.environ.get(CONFIG_ENV)
    if cfg_path:
        try:
            cfg = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ValidationError(f"cannot read config {cfg_path}: {e}") from None
        if not isinstance(cfg, dict):
            raise ValidationError("config file must hold a JSON object")
        known = set().union(*DEFAULTS.values())
        for key, value in cfg.items():
            if key in DEFAULTS:
                if not isinstance(value, dict):
                    raise ValidationError(f"config section {key!r} must be an object")
                bad = set(value) - set(DEFAULTS[key])
                if bad:
                    raise ValidationError(f"unknown keys in config section {key!r}: {sorted(bad)}")
            elif key not in known:
                raise ValidationError(f"unknown config key {key!r}")
            elif key in opts:
                opts[key] = value
        if isinstance(cfg.get(cmd), dict):
            opts.update(cfg[cmd])
    for key, value in vars(args).items():
        if key in opts and key not in CONFIG_ONLY and value is not None:
            opts[key] = value
    if cmd == "stats" and args.input_files:
        opts["input"] = args.input_files
    return opts


def _require(opts, *names):
    missing = [n for n in names if opts.get(n) in (None, [], "")]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join(
            "--" + n.replace("_", "-") for n in missing))


def write_atomic(path, data) -> None:
    """Write text or bytes via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _num(x) -> str:
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{float(x):.6f}".rstrip("0").rstrip(".")


def _kv(pairs) -> str:
    return "".join(f"{k}={v}\n" for k, v in pairs)


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


# -- subcommands ---------------------------------------------------------------

def cmd_budget(opts, out) -> int:
    cfg = PoolingConfig(opts["s_t"], opts["s_v"], opts["s_g"], 1)
    nt, nv = as_fraction(opts["n_text"]), as_fraction(opts["n_vision"])
    expected = bool(opts["expected"])
    if not expected:
        if nt.denominator != 1 or nv.denominator != 1:
            raise ValidationError("region counts must be integers (use --expected for averages)")
        nt, nv = int(nt), int(nv)
    b = count_tokens(nt, nv, cfg, expected=expected)
    pairs = [(k, _num(v)) for k, v in b.as_dict().items()]
    if opts["format"] == "kv":
        out.write(_kv(pairs))
    else:
        out.write(_table([("component", "tokens"), *pairs]))
    return EXIT_OK


def cmd_solve_pooling(opts, out) -> int:
    band = BudgetBand(as_fraction(opts["band_lower"]), as_fraction(opts["band_upper"]))
    args = (as_fraction(opts["n_text_avg"]), as_fraction(opts["n_vision_avg"]), band,
            opts["s_t"], opts["link"], opts["d"])
    feasible = feasible_vision_sizes(*args)
    cfg = solve_pooling(*args)
    total = count_tokens(args[0], args[1], cfg, expected=True).total
    if opts["format"] == "kv":
        out.write(_kv([("s_t", cfg.s_t), ("s_v", cfg.s_v), ("s_g", cfg.s_g),
                       ("total", _num(total)), ("feasible_s_v", ",".join(map(str, feasible)))]))
    else:
        rows = [("s_v", "s_g", "expected_total", "chosen")]
        rows += [(s, opts["link"] * s, _num(t), "*" if s == cfg.s_v else "") for s, t in feasible.items()]
        out.write(_table(rows))
    return EXIT_OK


def _safe_name(image_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", image_id)


def _load_page(record, image_root: Path) -> np.ndarray:
    if record.image_path is None:
        w, h = record.page_size
        return np.ones((int(round(h)), int(round(w))), dtype=np.float64)
    path = Path(record.image_path)
    if not path.is_absolute():
        path = image_root / path
    if not path.exists():
        raise ValidationError(f"{record.image_id}: image {path} not found")
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def cmd_tokenize(opts, out) -> int:
    _require(opts, "corpus", "out")
    corpus = Path(opts["corpus"])
    cfg = PoolingConfig(opts["s_t"], opts["s_v"], opts["s_g"], opts["d"])
    params = load_params(opts["params"], cfg.d) if opts["params"] else init_params(cfg.d, opts["seed"])
    records = list(load_corpus(corpus))
    if not records:
        raise ValidationError(f"{corpus}: empty corpus")
    names = [_safe_name(r.image_id) for r in records]
    if len(set(names)) != len(names):
        raise ValidationError("image ids collide after filename sanitizing")
    image_root = Path(opts["image_root"]) if opts["image_root"] else corpus.parent
    out_dir = Path(opts["out"])

    def run(record):
        page = prepare_image(_load_page(record, image_root))
        pyr = backbone_stub(page, cfg, opts["levels"], opts["base_stride"], opts["seed"])
        return tokenize_document(pyr, record.roi_set(), cfg, params, opts["sampling_ratio"])

    jobs = max(1, int(opts["jobs"]))
    with ThreadPoolExecutor(jobs) as pool:
        sequences = list(pool.map(run, records))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["image_id", "n_text", "n_vision", "spatial", "semantic_text", "semantic_vision",
                "semantic_cross", "total", "formula_total"])
    grand = 0
    for record, name, seq in zip(records, names, sequences):
        c = seq.counts
        formula = count_tokens(record.n_text, record.n_vision, cfg).total
        if c.total != formula:
            raise RuntimeError(f"{record.image_id}: {c.total} tokens but formula gives {formula}")
        layout = {
            "image_id": record.image_id,
            "pooling": {"s_t": cfg.s_t, "s_v": cfg.s_v, "s_g": cfg.s_g, "d": cfg.d},
            "counts": {"spatial": c.spatial, "semantic_text": c.semantic_text,
                       "semantic_vision": c.semantic_vision, "semantic_cross": c.semantic_cross,
                       "total": c.total},
            "tokens": [[p.region_id, p.branch.value, p.slot] for p in seq.provenance],
        }
        write_atomic(out_dir / f"{name}.layout.json", json.dumps(layout, separators=(",", ":")) + "\n")
        if opts["save_vectors"]:
            vbuf = io.BytesIO()
            np.save(vbuf, seq.vectors)
            write_atomic(out_dir / f"{name}.vectors.npy", vbuf.getvalue())
        w.writerow([record.image_id, record.n_text, record.n_vision, c.spatial, c.semantic_text,
                    c.semantic_vision, c.semantic_cross, c.total, _num(formula)])
        grand += c.total
    write_atomic(out_dir / "summary.csv", buf.getvalue())
    out.write(_kv([("documents", len(records)), ("total_tokens", grand),
                   ("mean_tokens", _num(Fraction(grand, len(records))))]))
    return EXIT_OK


def _load_records(paths, opts, diagnostics=None):
    class_map = opts.get("class_map") or DEFAULT_CLASS_MAP
    max_boxes = opts.get("max_boxes", 1000)
    records = []
    for path in paths:
        records.extend(load_corpus(path, opts["schema_version"], class_map, max_boxes, diagnostics))
    return records


def cmd_ingest(opts, out) -> int:
    _require(opts, "input", "out")
    diagnostics = [] if opts["lenient"] else None
    records = _load_records([opts["input"]], opts, diagnostics)
    for lineno, msg in diagnostics or ():
        print(f"{opts['input']}:{lineno}: skipped: {msg}", file=sys.stderr)
    caps = ConstructionCaps(opts["train_cap"], opts["test_cap"], opts["max_boxes"])
    kept = apply_construction_filters(records, caps, opts["seed"])
    write_atomic(opts["out"], "".join(r.to_line() + "\n" for r in kept))
    if kept and opts["stats_out"]:
        write_atomic(opts["stats_out"], corpus_stats(kept).to_markdown())
    out.write(_kv([("read", len(records)), ("kept", len(kept)),
                   ("flagged_too_many_boxes", sum(r.n_boxes > caps.max_boxes for r in records)),
                   ("skipped_lines", len(diagnostics or ()))]))
    return EXIT_OK


def cmd_stats(opts, out) -> int:
    _require(opts, "input")
    paths = opts["input"] if isinstance(opts["input"], list) else [opts["input"]]
    records = _load_records(paths, opts)
    if not records:
        raise ValidationError("empty corpus")
    stats = corpus_stats(records)
    text = stats.to_markdown() if opts["format"] == "md" else stats.to_csv()
    if opts["out"]:
        write_atomic(opts["out"], text)
    else:
        out.write(text)
    return EXIT_OK


def _read_jsonl(path):
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValidationError(f"{path}:{lineno}: malformed JSON: {e.msg}") from None
            if not isinstance(obj, dict):
                raise ValidationError(f"{path}:{lineno}: expected a JSON object")
            rows.append((lineno, obj))
    return rows


def _check_keys(path, lineno, obj, required, optional=()):
    missing = set(required) - set(obj)
    unknown = set(obj) - set(required) - set(optional)
    if missing or unknown:
        raise ValidationError(f"{path}:{lineno}: missing {sorted(missing)}, unknown {sorted(unknown)}")


def load_kie(gold_path, pred_path) -> list[KieRecord]:
    preds = {}
    for lineno, obj in _read_jsonl(pred_path):
        _check_keys(pred_path, lineno, obj, ("id", "prediction"))
        if obj["id"] in preds:
            raise ValidationError(f"{pred_path}:{lineno}: duplicate id {obj['id']!r}")
        preds[obj["id"]] = obj["prediction"]
    records, seen = [], set()
    for lineno, obj in _read_jsonl(gold_path):
        _check_keys(gold_path, lineno, obj, ("id", "image_id", "dataset", "domain", "question", "gold"),
                    ("label_set",))
        if obj["domain"] not in DOMAINS:
            raise ValidationError(f"{gold_path}:{lineno}: domain must be one of {DOMAINS}")
        if obj["id"] in seen:
            raise ValidationError(f"{gold_path}:{lineno}: duplicate id {obj['id']!r}")
        seen.add(obj["id"])
        try:
            records.append(KieRecord(obj["image_id"], obj["question"], obj["gold"], preds.get(obj["id"]),
                                     obj["dataset"], obj["domain"], tuple(obj.get("label_set", ()))))
        except ValueError as e:
            raise ValidationError(f"{gold_path}:{lineno}: {e}") from None
    stray = set(preds) - seen
    if stray:
        raise ValidationError(f"{pred_path}: predictions for unknown ids {sorted(stray)[:5]}")
    return records


def _write_reports(opts, out, stem, csv_text, md_text):
    if opts["out"]:
        write_atomic(Path(opts["out"]) / f"{stem}.csv", csv_text)
        write_atomic(Path(opts["out"]) / f"{stem}.md", md_text)
    out.write(md_text if opts["format"] == "md" else csv_text)


def cmd_eval_kie(opts, out) -> int:
    _require(opts, "gold", "pred")
    records = load_kie(opts["gold"], opts["pred"])
    if not records:
        raise ValidationError("no gold records")
    report = score_kie(records, average=opts["average"])
    _write_reports(opts, out, "f1", report.to_csv(), report.to_markdown())
    return EXIT_OK


def _boxes(path, lineno, obj, scored):
    page = obj.get("page_size")
    out = []
    for i, b in enumerate(obj["boxes"]):
        keys = {"bbox", "class", "score"} if scored else {"bbox", "class"}
        if not isinstance(b, dict) or set(b) != keys:
            raise ValidationError(f"{path}:{lineno}: box {i} needs keys {sorted(keys)}")
        try:
            x1, y1, x2, y2 = (float(v) for v in b["bbox"])
            if page:
                x1, x2 = x1 / page[0], x2 / page[0]
                y1, y2 = y1 / page[1], y2 / page[1]
            cls = RoiClass(b["class"])
            if cls is RoiClass.WHOLE_IMAGE:
                raise ValueError("whole_image is not a detection class")
            if scored:
                out.append(PredBox(BBox.clipped(x1, y1, x2, y2), cls, float(b["score"])))
            else:
                out.append(GoldBox(BBox(x1, y1, x2, y2), cls))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"{path}:{lineno}: box {i}: {e}") from None
    return tuple(out)


def load_detections(gold_path, pred_path) -> list[DetRecord]:
    preds = {}
    for lineno, obj in _read_jsonl(pred_path):
        _check_keys(pred_path, lineno, obj, ("image_id", "boxes"), ("page_size",))
        if obj["image_id"] in preds:
            raise ValidationError(f"{pred_path}:{lineno}: duplicate image_id {obj['image_id']!r}")
        preds[obj["image_id"]] = _boxes(pred_path, lineno, obj, True)
    records = []
    for lineno, obj in _read_jsonl(gold_path):
        _check_keys(gold_path, lineno, obj, ("image_id", "boxes"), ("page_size",))
        records.append(DetRecord(obj["image_id"], _boxes(gold_path, lineno, obj, False),
                                 preds.pop(obj["image_id"], ())))
    if preds:
        raise ValidationError(f"{pred_path}: predictions for unknown images {sorted(preds)[:5]}")
    return records


def cmd_eval_det(opts, out) -> int:
    _require(opts, "gold", "pred")
    records = load_detections(opts["gold"], opts["pred"])
    if not records:
        raise ValidationError("no gold records")
    report = score_detection(records)
    _write_reports(opts, out, "detection", report.to_csv(), report.to_markdown())
    return EXIT_OK


def read_token_counts(path):
    """Token-count CSV -> (ours, baseline, groups)."""
    ours, base, groups = {}, {}, {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        if not {"dataset", "ours", "baseline"} <= cols or cols - {"dataset", "ours", "baseline", "group"}:
            raise ValidationError(f"{path}: expected columns dataset, ours, baseline[, group]")
        for row in reader:
            name = row["dataset"]
            if name in ours:
                raise ValidationError(f"{path}: duplicate dataset {name!r}")
            try:
                ours[name], base[name] = float(row["ours"]), float(row["baseline"])
            except ValueError:
                raise ValidationError(f"{path}: non-numeric token count for {name!r}") from None
            if row.get("group"):
                groups.setdefault(row["group"], []).append(name)
    return ours, base, groups


def cmd_report(opts, out) -> int:
    if opts["reference"]:
        ours, base = reference.REGION_TOKENIZER_TOKENS, reference.DOCOWL15_TOKENS
        groups = reference.GROUPS
    else:
        _require(opts, "input")
        ours, base, groups = read_token_counts(opts["input"])
    rep = efficiency_report(ours, base, groups)
    md = rep.to_markdown(opts["ours_label"], opts["baseline_label"])
    if opts["out"]:
        write_atomic(Path(opts["out"]) / "efficiency.csv", rep.to_csv())
        write_atomic(Path(opts["out"]) / "efficiency.md", md)
        write_atomic(Path(opts["out"]) / "plot.csv", rep.to_plot_csv())
    out.write(md if opts["format"] == "md" else rep.to_csv())
    out.write(f"overall reduction: {rep.overall.rounded_ratio}x\n")
    return EXIT_OK


COMMANDS = {
    "tokenize": cmd_tokenize,
    "budget": cmd_budget,
    "solve-pooling": cmd_solve_pooling,
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "eval-kie": cmd_eval_kie,
    "eval-det": cmd_eval_det,
    "report": cmd_report,
}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        opts = resolve_options(args)
        return COMMANDS[args.command](opts, out)
    except (ValidationError, ValueError, KeyError, OSError) as e:
        print(f"roitok {args.command}: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as e:  # noqa: BLE001
        print(f"roitok {args.command}: internal error: {e!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
