"""
Building an annotation corpus
=============================

Write a small JSON-lines corpus, load it back with validation, apply the
sampling caps and the crowded-page filter, and summarize it.
"""

import tempfile
from pathlib import Path

import numpy as np

from roitok import ConstructionCaps, apply_construction_filters, corpus_stats, load_corpus, write_corpus
from roitok.ingestion import AnnotatedBox, AnnotationRecord
from roitok.types import RoiClass

rng = np.random.default_rng(0)


def synthetic_page(i, dataset, split):
    n_text = int(rng.integers(0, 40)) if i % 50 else 1500  # every 50th page is crowded
    boxes = [AnnotatedBox(10.0, 10.0 + j, 200.0, 11.0 + j, RoiClass.TEXT) for j in range(n_text)]
    if rng.uniform() < 0.3:
        boxes.append(AnnotatedBox(50.0, 400.0, 500.0, 700.0, RoiClass.VISION))
    return AnnotationRecord(f"{dataset}-{i}", None, (612, 2000), dataset, split, tuple(boxes))


records = [synthetic_page(i, ds, sp) for ds in ("docbank", "ai2d") for sp in ("train", "test")
           for i in range(300)]

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "corpus.jsonl"
    write_corpus(path, records)
    loaded = list(load_corpus(path))
    print("loaded", len(loaded), "records; flagged as crowded:", sum(bool(r.flags) for r in loaded))

# Small caps so the effect shows: 200 train and 100 test pages per dataset.
kept = apply_construction_filters(loaded, ConstructionCaps(train_cap=200, test_cap=100), seed=0)
print("kept", len(kept))

stats = corpus_stats(kept)
print(stats.to_markdown())
