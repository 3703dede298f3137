"""Evaluation metrics: entity-label F1 for KIE and COCO-style detection AP.

KIE scores are micro-averaged within a dataset by default and then
arithmetically averaged across datasets (in-domain, out-of-domain, overall).
Detection AP follows the COCO recipe: greedy score-ordered matching per
image, precision envelope, 101 recall points, averaged over IoU thresholds
0.50:0.05:0.95 and over classes.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .types import BBox, RoiClass

IN_DOMAIN = "in-domain"
OUT_OF_DOMAIN = "out-of-domain"
DOMAINS = (IN_DOMAIN, OUT_OF_DOMAIN)

COCO_IOU_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
DETECTION_CLASSES = (RoiClass.TEXT, RoiClass.VISION)


# -- KIE / SER F1 ------------------------------------------------------------

def normalize_label(s: str | None) -> str:
    """Trim, collapse internal whitespace and case-fold."""
    if s is None:
        return ""
    return " ".join(s.split()).casefold()


@dataclass(frozen=True)
class KieRecord:
    """One question about a text segment, with its gold entity label and the model's answer.

    An empty or missing prediction is an abstention: it counts toward the
    gold total but not toward the prediction total.
    """

    image_id: str
    question: str
    gold: str
    prediction: str | None
    dataset: str = "default"
    domain: str = IN_DOMAIN
    label_set: tuple[str, ...] = ()

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        if not normalize_label(self.gold):
            raise ValueError(f"{self.image_id}: empty gold label")
        if self.label_set and normalize_label(self.gold) not in {normalize_label(x) for x in self.label_set}:
            raise ValueError(f"{self.image_id}: gold label {self.gold!r} not in its label set")


@dataclass(frozen=True)
class F1Counts:
    tp: int = 0
    n_pred: int = 0
    n_gold: int = 0

    def __add__(self, other: F1Counts) -> F1Counts:
        return F1Counts(self.tp + other.tp, self.n_pred + other.n_pred, self.n_gold + other.n_gold)

    @property
    def precision(self) -> float:
        return self.tp / self.n_pred if self.n_pred else 0.0

    @property
    def recall(self) -> float:
        return self.tp / self.n_gold if self.n_gold else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def f1_score(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def kie_counts(records: Iterable[KieRecord], normalizer: Callable = normalize_label) -> F1Counts:
    tp = n_pred = n_gold = 0
    for r in records:
        gold, pred = normalizer(r.gold), normalizer(r.prediction)
        n_gold += 1
        if pred:
            n_pred += 1
            tp += pred == gold
    return F1Counts(tp, n_pred, n_gold)


def _macro_prf(records, normalizer):
    per_label: dict[str, list[int]] = {}
    for r in records:
        gold, pred = normalizer(r.gold), normalizer(r.prediction)
        per_label.setdefault(gold, [0, 0, 0])[2] += 1
        if pred:
            per_label.setdefault(pred, [0, 0, 0])[1] += 1
            if pred == gold:
                per_label[gold][0] += 1
    scores = [F1Counts(*c) for c in per_label.values()]
    p = float(np.mean([c.precision for c in scores]))
    r = float(np.mean([c.recall for c in scores]))
    f = float(np.mean([c.f1 for c in scores]))
    return p, r, f


@dataclass(frozen=True)
class ScoreRow:
    name: str
    domain: str | None
    precision: float
    recall: float
    f1: float
    counts: F1Counts | None = None


@dataclass(frozen=True)
class F1Report:
    average: str
    datasets: tuple[ScoreRow, ...]
    in_domain: ScoreRow | None
    out_of_domain: ScoreRow | None
    overall: ScoreRow

    def row(self, name: str) -> ScoreRow:
        for r in self.rows():
            if r.name == name:
                return r
        raise KeyError(name)

    def rows(self) -> list[ScoreRow]:
        """Datasets grouped by domain, each group followed by its average, then overall."""
        out = []
        for domain, avg in ((IN_DOMAIN, self.in_domain), (OUT_OF_DOMAIN, self.out_of_domain)):
            out.extend(r for r in self.datasets if r.domain == domain)
            if avg is not None:
                out.append(avg)
        out.append(self.overall)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "domain", "precision", "recall", "f1", "tp", "n_pred", "n_gold", "average"])
        for r in self.rows():
            c = r.counts
            w.writerow([r.name, r.domain or "", f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f1:.6f}",
                        c.tp if c else "", c.n_pred if c else "", c.n_gold if c else "", self.average])
        return buf.getvalue()

    def to_markdown(self) -> str:
        rows = self.rows()
        header = "| | " + " | ".join(r.name for r in rows) + " |"
        sep = "|---|" + "---|" * len(rows)
        line = f"| F1 ({self.average}) | " + " | ".join(f"{100 * r.f1:.1f}" for r in rows) + " |"
        return "\n".join([header, sep, line]) + "\n"


def _mean_row(name, domain, rows):
    return ScoreRow(name, domain, float(np.mean([r.precision for r in rows])),
                    float(np.mean([r.recall for r in rows])), float(np.mean([r.f1 for r in rows])))


def score_kie(records: Iterable[KieRecord], normalizer: Callable = normalize_label,
              average: str = "micro") -> F1Report:
    """Per-dataset F1 plus domain and overall averages.

    ``average="micro"`` pools counts over a dataset's records;
    ``average="macro"`` averages per-entity-label scores instead.
    """
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")
    by_dataset: dict[str, list[KieRecord]] = {}
    for r in records:
        by_dataset.setdefault(r.dataset, []).append(r)
    if not by_dataset:
        raise ValueError("no KIE records to score")
    rows = []
    for name, recs in by_dataset.items():
        domains = {r.domain for r in recs}
        if len(domains) > 1:
            raise ValueError(f"dataset {name!r} mixes domains {sorted(domains)}")
        counts = kie_counts(recs, normalizer)
        if average == "micro":
            p, rc, f = counts.precision, counts.recall, counts.f1
        else:
            p, rc, f = _macro_prf(recs, normalizer)
        rows.append(ScoreRow(name, domains.pop(), p, rc, f, counts))
    ind = [r for r in rows if r.domain == IN_DOMAIN]
    ood = [r for r in rows if r.domain == OUT_OF_DOMAIN]
    return F1Report(
        average,
        tuple(rows),
        _mean_row("Avg (ID)", IN_DOMAIN, ind) if ind else None,
        _mean_row("Avg (OOD)", OUT_OF_DOMAIN, ood) if ood else None,
        _mean_row("Overall", None, rows),
    )


# -- detection ---------------------------------------------------------------

def iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


@dataclass(frozen=True)
class GoldBox:
    bbox: BBox
    cls: RoiClass


@dataclass(frozen=True)
class PredBox:
    bbox: BBox
    cls: RoiClass
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class DetRecord:
    image_id: str
    gold: tuple[GoldBox, ...]
    predictions: tuple[PredBox, ...]


def match_image(gold: Sequence[BBox], preds: Sequence[tuple[BBox, float]],
                threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy COCO matching inside one image for one class.

    Predictions are visited by descending score; each takes the unmatched
    gold box with the highest IoU, provided that IoU reaches ``threshold``.
    Returns (scores, is_true_positive) in visiting order.
    """
    order = sorted(range(len(preds)), key=lambda i: -preds[i][1])
    taken = [False] * len(gold)
    scores = np.empty(len(order))
    tp = np.zeros(len(order), dtype=bool)
    for rank, i in enumerate(order):
        box, score = preds[i]
        scores[rank] = score
        best, best_iou = -1, -1.0
        for g, gbox in enumerate(gold):
            o = iou(box, gbox)
            if not taken[g] and o >= threshold and o > best_iou:
                best, best_iou = g, o
        if best >= 0:
            taken[best] = True
            tp[rank] = True
    return scores, tp


@dataclass
class MatchTable:
    """Match outcomes per (class, threshold), mergeable across shards of images."""

    thresholds: tuple[float, ...]
    scores: dict = field(default_factory=dict)  # (cls, t) -> list of score arrays
    tps: dict = field(default_factory=dict)
    n_gold: dict = field(default_factory=dict)  # cls -> int

    def __add__(self, other: MatchTable) -> MatchTable:
        if self.thresholds != other.thresholds:
            raise ValueError("cannot merge match tables with different thresholds")
        out = MatchTable(self.thresholds)
        for src in (self, other):
            for k, v in src.scores.items():
                out.scores.setdefault(k, []).extend(v)
            for k, v in src.tps.items():
                out.tps.setdefault(k, []).extend(v)
            for k, v in src.n_gold.items():
                out.n_gold[k] = out.n_gold.get(k, 0) + v
        return out


def match_detections(records: Iterable[DetRecord], iou_thresholds=COCO_IOU_THRESHOLDS,
                     classes=DETECTION_CLASSES) -> MatchTable:
    table = MatchTable(tuple(iou_thresholds))
    for rec in records:
        for c in classes:
            gold = [g.bbox for g in rec.gold if g.cls is c]
            preds = [(p.bbox, p.score) for p in rec.predictions if p.cls is c]
            table.n_gold[c] = table.n_gold.get(c, 0) + len(gold)
            for t in table.thresholds:
                s, tp = match_image(gold, preds, t)
                table.scores.setdefault((c, t), []).append(s)
                table.tps.setdefault((c, t), []).append(tp)
    return table


def average_precision(scores: np.ndarray, tp: np.ndarray, n_gold: int,
                      recall_points: np.ndarray = RECALL_POINTS) -> float:
    """Interpolated AP of a ranked detection list against ``n_gold`` gold boxes."""
    if n_gold <= 0:
        raise ValueError("AP is undefined without gold boxes")
    if len(scores) == 0:
        return 0.0
    order = np.argsort(-scores, kind="mergesort")
    tp = np.asarray(tp, dtype=bool)[order]
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / n_gold
    precision = ctp / np.maximum(ctp + cfp, np.finfo(np.float64).tiny)
    # precision envelope: best precision at this recall or any higher one
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, recall_points, side="left")
    q = np.where(idx < len(precision), precision[np.minimum(idx, len(precision) - 1)], 0.0)
    return float(q.mean())


@dataclass(frozen=True)
class DetReport:
    ap: float
    ap50: float
    ap_text: float | None
    ap_vision: float | None
    thresholds: tuple[float, ...]
    per_class: dict  # RoiClass -> tuple of AP per threshold

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["AP", "AP50", "AP_text", "AP_vision"])
        w.writerow([_fmt(self.ap), _fmt(self.ap50), _fmt(self.ap_text), _fmt(self.ap_vision)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        vals = " | ".join(_fmt(v, 3) for v in (self.ap, self.ap50, self.ap_text, self.ap_vision))
        return "| AP | AP50 | AP_text | AP_vision |\n|---|---|---|---|\n| " + vals + " |\n"


def _fmt(v, places=6):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else f"{v:.{places}f}"


def integrate(table: MatchTable, classes=DETECTION_CLASSES) -> DetReport:
    per_class = {}
    for c in classes:
        n = table.n_gold.get(c, 0)
        if n == 0:
            warnings.warn(f"no gold boxes of class {c.value!r}; excluded from AP", stacklevel=3)
            continue
        per_class[c] = tuple(
            average_precision(np.concatenate(table.scores[(c, t)]),
                              np.concatenate(table.tps[(c, t)]), n)
            for t in table.thresholds)
    if not per_class:
        raise ValueError("no gold boxes in any class")
    grid = np.array(list(per_class.values()))  # (classes, thresholds)
    if 0.5 in table.thresholds:
        ap50 = float(grid[:, table.thresholds.index(0.5)].mean())
    else:
        ap50 = float("nan")

    def cls_ap(c):
        return float(np.mean(per_class[c])) if c in per_class else None

    return DetReport(float(grid.mean()), ap50, cls_ap(RoiClass.TEXT), cls_ap(RoiClass.VISION),
                     table.thresholds, per_class)


def score_detection(records: Iterable[DetRecord], iou_thresholds=COCO_IOU_THRESHOLDS,
                    classes=DETECTION_CLASSES) -> DetReport:
    records = list(records)
    if not records:
        raise ValueError("no detection records to score")
    return integrate(match_detections(records, iou_thresholds, classes), classes)
