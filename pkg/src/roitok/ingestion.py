"""Annotation corpora: line-delimited JSON records, construction filters, statistics.

One record per line::

    {"schema_version": 1, "image_id": "doc-17", "image_path": "img/doc-17.png",
     "page_size": [width, height], "source_dataset": "docbank", "split": "train",
     "rois": [{"bbox": [x1, y1, x2, y2], "class": "text"}, ...]}

Boxes are pixel coordinates in the file. Raw class labels are mapped to
``text``/``vision`` through a per-dataset class map; the whole-image region is
never serialized.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import numbers
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .types import BBox, RoI, RoiClass, RoiSet, finalize_roi_set

SCHEMA_VERSION = 1
TRAIN_SPLITS = frozenset({"train"})
TEST_SPLITS = frozenset({"test", "val", "validation", "dev"})
TOO_MANY_BOXES = "too_many_boxes"

_RECORD_KEYS = {"schema_version", "image_id", "image_path", "page_size",
                "source_dataset", "split", "rois"}

#: raw label -> "text" | "vision" | None (drop the box); "*" matches any other label
DEFAULT_CLASS_MAP: dict[str, dict[str, str | None]] = {
    "*": {"text": "text", "vision": "vision"},
    "ai2d": {"text": "text", "blob": "vision"},
    "docbank": {"text": "text", "figure": "vision"},
    "doclaynet": {"text": "text", "picture": "vision"},
    "scicap": {"text": "text", "figure": "vision"},
    "scienceqa": {"text": "text", "figure": "vision"},
    # vision regions for these come from an external layout model's "figure" class
    "klc": {"text": "text", "figure": "vision"},
    "pwc": {"text": "text", "figure": "vision"},
}


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotatedBox:
    x1: float
    y1: float
    x2: float
    y2: float
    cls: RoiClass

    def to_json(self) -> dict:
        return {"bbox": [self.x1, self.y1, self.x2, self.y2], "class": self.cls.value}


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    image_path: str | None
    page_size: tuple  # (width, height) in pixels
    source_dataset: str
    split: str
    rois: tuple[AnnotatedBox, ...]
    flags: frozenset = field(default=frozenset(), compare=False)

    @property
    def n_text(self) -> int:
        return sum(b.cls is RoiClass.TEXT for b in self.rois)

    @property
    def n_vision(self) -> int:
        return sum(b.cls is RoiClass.VISION for b in self.rois)

    @property
    def n_boxes(self) -> int:
        return len(self.rois)

    def normalized_rois(self) -> list[RoI]:
        w, h = self.page_size
        return [RoI(i, BBox.from_pixels(b.x1, b.y1, b.x2, b.y2, w, h), b.cls)
                for i, b in enumerate(self.rois)]

    def roi_set(self) -> RoiSet:
        return finalize_roi_set(self.normalized_rois())

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "image_id": self.image_id,
            "image_path": self.image_path,
            "page_size": list(self.page_size),
            "source_dataset": self.source_dataset,
            "split": self.split,
            "rois": [b.to_json() for b in self.rois],
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, separators=(",", ":"))


def _is_number(x) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


def _map_class(label, dataset: str, class_map: Mapping) -> RoiClass | None:
    for table in (class_map.get(dataset.lower(), {}), class_map.get("*", {})):
        if label in table:
            target = table[label]
            return None if target is None else RoiClass(target)
    raise CorpusError(f"unknown class {label!r} for dataset {dataset!r}")


def parse_record(obj, schema_version: int = SCHEMA_VERSION, class_map: Mapping | None = None,
                 max_boxes: int = 1000) -> AnnotationRecord:
    """Validate one decoded JSON object and build a record (raises CorpusError)."""
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    if not isinstance(obj, dict):
        raise CorpusError("record is not a JSON object")
    unknown = set(obj) - _RECORD_KEYS
    missing = _RECORD_KEYS - set(obj) - {"image_path"}
    if unknown or missing:
        raise CorpusError(f"schema violation: missing {sorted(missing)}, unknown {sorted(unknown)}")
    if obj["schema_version"] != schema_version:
        raise CorpusError(f"schema_version {obj['schema_version']!r}, expected {schema_version}")
    image_id = obj["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise CorpusError("image_id must be a non-empty string")
    dataset, split = obj["source_dataset"], obj["split"]
    if not isinstance(dataset, str) or not dataset:
        raise CorpusError("source_dataset must be a non-empty string")
    if split not in TRAIN_SPLITS | TEST_SPLITS:
        raise CorpusError(f"unknown split {split!r}")
    image_path = obj.get("image_path")
    if image_path is not None and not isinstance(image_path, str):
        raise CorpusError("image_path must be a string or null")
    page = obj["page_size"]
    if not (isinstance(page, list) and len(page) == 2 and all(_is_number(v) and v > 0 for v in page)):
        raise CorpusError(f"page_size must be [width, height] > 0, got {page!r}")
    w, h = page
    if not isinstance(obj["rois"], list):
        raise CorpusError("rois must be a list")
    boxes = []
    for i, roi in enumerate(obj["rois"]):
        if not isinstance(roi, dict) or set(roi) != {"bbox", "class"}:
            raise CorpusError(f"roi {i}: expected keys bbox and class")
        bb = roi["bbox"]
        if not (isinstance(bb, list) and len(bb) == 4 and all(_is_number(v) for v in bb)):
            raise CorpusError(f"roi {i}: bbox must be four numbers")
        x1, y1, x2, y2 = bb
        if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
            raise CorpusError(f"roi {i}: box {bb} outside page {w}x{h} or degenerate")
        cls = _map_class(roi["class"], dataset, class_map)
        if cls is not None:
            boxes.append(AnnotatedBox(x1, y1, x2, y2, cls))
    flags = frozenset({TOO_MANY_BOXES}) if len(boxes) > max_boxes else frozenset()
    return AnnotationRecord(image_id, image_path, (w, h), dataset, split, tuple(boxes), flags)


def load_corpus(path, schema_version: int = SCHEMA_VERSION, class_map: Mapping | None = None,
                max_boxes: int = 1000, diagnostics: list | None = None) -> Iterator[AnnotationRecord]:
    """Stream validated records from a line-delimited file.

    Bad lines raise CorpusError naming the line, unless a ``diagnostics``
    list is passed, in which case ``(line_number, message)`` is appended and
    the line skipped. Records with more than ``max_boxes`` boxes are kept
    but carry the ``too_many_boxes`` flag.
    """
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as e:
                    raise CorpusError(f"malformed JSON: {e.msg}") from None
                yield parse_record(obj, schema_version, class_map, max_boxes)
            except CorpusError as e:
                if diagnostics is None:
                    raise CorpusError(f"{path}:{lineno}: {e}") from None
                diagnostics.append((lineno, str(e)))


def write_corpus(path, records: Iterable[AnnotationRecord]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_line() + "\n")
            n += 1
    return n


# -- construction filters ----------------------------------------------------

@dataclass(frozen=True)
class ConstructionCaps:
    train_cap: int = 50_000
    test_cap: int = 1_000
    max_boxes: int = 1_000

    def cap_for(self, split: str) -> int:
        return self.train_cap if split in TRAIN_SPLITS else self.test_cap


def sample_key(seed: int, dataset: str, image_id: str) -> bytes:
    msg = f"{seed}\x1f{dataset}\x1f{image_id}".encode()
    return hashlib.blake2b(msg, digest_size=8).digest()


def apply_construction_filters(records: Iterable[AnnotationRecord],
                               caps: ConstructionCaps = ConstructionCaps(),
                               seed: int = 0) -> list[AnnotationRecord]:
    """Cap each (dataset, split) by seeded sampling, then drop crowded pages.

    Sampling keeps the ``cap`` records with the smallest hash of
    (seed, dataset, image_id), so the kept set does not depend on file order.
    Records with more than ``max_boxes`` boxes (text and vision together) are
    dropped after sampling. Survivors keep their input order.
    """
    records = list(records)
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        groups[(r.source_dataset, r.split)].append(i)
    keep = set()
    for (dataset, split), idx in groups.items():
        cap = caps.cap_for(split)
        if len(idx) <= cap:
            keep.update(idx)
            continue
        ranked = sorted(idx, key=lambda i: (sample_key(seed, dataset, records[i].image_id),
                                            records[i].image_id))
        keep.update(ranked[:cap])
    return [r for i, r in enumerate(records) if i in keep and r.n_boxes <= caps.max_boxes]


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class SplitCounts:
    records: int = 0
    text_boxes: int = 0
    vision_boxes: int = 0

    def __add__(self, other: SplitCounts) -> SplitCounts:
        return SplitCounts(self.records + other.records, self.text_boxes + other.text_boxes,
                           self.vision_boxes + other.vision_boxes)

    @property
    def boxes(self) -> int:
        return self.text_boxes + self.vision_boxes


@dataclass(frozen=True)
class CorpusStats:
    """Counts keyed by (dataset, split); totals and averages are derived."""

    per_group: Mapping[tuple[str, str], SplitCounts]

    def __add__(self, other: CorpusStats) -> CorpusStats:
        merged = dict(self.per_group)
        for k, v in other.per_group.items():
            merged[k] = merged.get(k, SplitCounts()) + v
        return CorpusStats(merged)

    def _sum(self, keep=lambda key: True) -> SplitCounts:
        total = SplitCounts()
        for k, v in self.per_group.items():
            if keep(k):
                total = total + v
        return total

    @property
    def total(self) -> SplitCounts:
        return self._sum()

    def per_dataset(self) -> dict[str, SplitCounts]:
        return {d: self._sum(lambda k, d=d: k[0] == d) for d in self.datasets}

    def per_split(self) -> dict[str, SplitCounts]:
        return {s: self._sum(lambda k, s=s: k[1] == s) for s in self.splits}

    @property
    def datasets(self) -> list[str]:
        return sorted({k[0] for k in self.per_group})

    @property
    def splits(self) -> list[str]:
        return sorted({k[1] for k in self.per_group})

    @property
    def n_text_avg(self) -> Fraction:
        t = self.total
        return Fraction(t.text_boxes, t.records)

    @property
    def n_vision_avg(self) -> Fraction:
        t = self.total
        return Fraction(t.vision_boxes, t.records)

    def samples_table(self) -> list[list]:
        """Rows: split; columns: datasets then Total (record counts)."""
        rows = [["split", *self.datasets, "Total"]]
        for s in self.splits:
            counts = [self.per_group.get((d, s), SplitCounts()).records for d in self.datasets]
            rows.append([s, *counts, sum(counts)])
        return rows

    def boxes_table(self) -> list[list]:
        rows = [["split", "text_boxes", "vision_boxes", "total"]]
        for s, c in self.per_split().items():
            rows.append([s, c.text_boxes, c.vision_boxes, c.boxes])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "split", "records", "text_boxes", "vision_boxes"])
        for (d, s), c in sorted(self.per_group.items()):
            w.writerow([d, s, c.records, c.text_boxes, c.vision_boxes])
        return buf.getvalue()

    def to_markdown(self) -> str:
        def table(rows):
            out = ["| " + " | ".join(str(c) for c in rows[0]) + " |",
                   "|" + "---|" * len(rows[0])]
            out += ["| " + " | ".join(f"{c:,}" if isinstance(c, int) else str(c) for c in r) + " |"
                    for r in rows[1:]]
            return "\n".join(out)

        avg = (f"average regions per page: text {float(self.n_text_avg):.2f}, "
               f"vision {float(self.n_vision_avg):.2f}")
        return "\n\n".join([table(self.samples_table()), table(self.boxes_table()), avg]) + "\n"


def corpus_stats(records: Iterable[AnnotationRecord]) -> CorpusStats:
    per: dict[tuple[str, str], SplitCounts] = {}
    for r in records:
        key = (r.source_dataset, r.split)
        per[key] = per.get(key, SplitCounts()) + SplitCounts(1, r.n_text, r.n_vision)
    if not per:
        raise ValueError("empty corpus")
    return CorpusStats(per)
