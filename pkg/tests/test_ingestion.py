import json
from fractions import Fraction

import pytest

from roitok.budget import solve_pooling
from roitok.ingestion import (
    TOO_MANY_BOXES,
    AnnotatedBox,
    AnnotationRecord,
    ConstructionCaps,
    CorpusError,
    apply_construction_filters,
    corpus_stats,
    load_corpus,
    write_corpus,
)
from roitok.types import RoiClass

T, V = RoiClass.TEXT, RoiClass.VISION


def raw(image_id, rois=(), dataset="docbank", split="train", page=(100, 200), **extra):
    obj = {"schema_version": 1, "image_id": image_id, "image_path": f"img/{image_id}.png",
           "page_size": list(page), "source_dataset": dataset, "split": split,
           "rois": [{"bbox": list(b), "class": c} for b, c in rois]}
    obj.update(extra)
    return obj


def write_lines(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


def record(image_id, n_text=0, n_vision=0, dataset="docbank", split="train"):
    boxes = [AnnotatedBox(0, 0, 1, 1, T)] * n_text + [AnnotatedBox(0, 0, 2, 2, V)] * n_vision
    return AnnotationRecord(image_id, None, (10, 10), dataset, split, tuple(boxes))


class TestLoad:
    def test_three_records(self, tmp_path):
        p = write_lines(tmp_path / "c.jsonl", [
            raw("a", [((0, 0, 10, 10), "text"), ((10, 20, 90, 180), "figure")]),
            raw("b", [((5, 5, 6, 6), "text")], split="test"),
            raw("c", [], dataset="doclaynet", split="val"),
        ])
        recs = list(load_corpus(p))
        assert [r.image_id for r in recs] == ["a", "b", "c"]
        assert (recs[0].n_text, recs[0].n_vision) == (1, 1)
        rs = recs[0].roi_set()
        assert rs.detected[1].bbox.as_tuple() == (0.1, 0.1, 0.9, 0.9)
        assert len(recs[2].roi_set()) == 1

    def test_out_of_bounds_names_line(self, tmp_path):
        p = write_lines(tmp_path / "c.jsonl", [raw("a"), raw("b", [((0, 0, 101, 10), "text")])])
        with pytest.raises(CorpusError, match=r"c\.jsonl:2: roi 0"):
            list(load_corpus(p))

    @pytest.mark.parametrize("bad", [
        {"schema_version": 2},
        {"split": "holdout"},
        {"page_size": [0, 10]},
        {"extra_key": 1},
        {"image_id": ""},
        {"rois": [{"bbox": [0, 0, 1], "class": "text"}]},
        {"rois": [{"bbox": [5, 0, 5, 1], "class": "text"}]},
        {"rois": [{"bbox": [0, 0, 1, 1], "class": "table"}]},
    ])
    def test_schema_violations(self, tmp_path, bad):
        p = write_lines(tmp_path / "c.jsonl", [{**raw("a"), **bad}])
        with pytest.raises(CorpusError, match="c.jsonl:1"):
            list(load_corpus(p))

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps(raw("a")) + "\n{nope\n")
        with pytest.raises(CorpusError, match=":2: malformed JSON"):
            list(load_corpus(p))

    def test_diagnostics_mode_skips_bad_lines(self, tmp_path):
        p = write_lines(tmp_path / "c.jsonl", [raw("a"), raw("b", split="??"), raw("c")])
        diag = []
        assert [r.image_id for r in load_corpus(p, diagnostics=diag)] == ["a", "c"]
        assert len(diag) == 1 and diag[0][0] == 2

    def test_crowded_page_is_flagged(self, tmp_path):
        boxes = [((0, 0, 1, 1), "text")] * 1200
        p = write_lines(tmp_path / "c.jsonl", [raw("big", boxes), raw("small", boxes[:3])])
        big, small = load_corpus(p)
        assert TOO_MANY_BOXES in big.flags and big.n_boxes == 1200
        assert not small.flags

    def test_class_map(self, tmp_path):
        cmap = {"mine": {"word": "text", "chart": "vision", "footer": None}}
        p = write_lines(tmp_path / "c.jsonl", [raw("a", [((0, 0, 1, 1), "word"), ((0, 0, 2, 2), "chart"),
                                                          ((0, 0, 3, 3), "footer")], dataset="mine")])
        (r,) = load_corpus(p, class_map=cmap)
        assert (r.n_text, r.n_vision) == (1, 1)
        with pytest.raises(CorpusError, match="unknown class"):
            list(load_corpus(p))

    def test_null_image_path(self, tmp_path):
        p = write_lines(tmp_path / "c.jsonl", [raw("a", image_path=None)])
        assert next(load_corpus(p)).image_path is None

    def test_round_trip(self, tmp_path):
        src = write_lines(tmp_path / "a.jsonl", [
            raw("a", [((0.5, 1.25, 10, 10), "text"), ((3, 3, 90, 100), "figure")]),
            raw("b", [], split="test", page=(612.5, 792)),
        ])
        first = list(load_corpus(src))
        write_corpus(tmp_path / "b.jsonl", first)
        second = list(load_corpus(tmp_path / "b.jsonl"))
        assert first == second
        write_corpus(tmp_path / "c.jsonl", second)
        assert (tmp_path / "b.jsonl").read_bytes() == (tmp_path / "c.jsonl").read_bytes()


class TestConstructionFilters:
    def test_box_limit_boundary(self):
        recs = [record("a", 999), record("b", 1000), record("c", 1001)]
        assert [r.image_id for r in apply_construction_filters(recs)] == ["a", "b"]

    def test_limit_counts_text_and_vision_together(self):
        kept = apply_construction_filters([record("a", 990, 11), record("b", 990, 10)])
        assert [r.image_id for r in kept] == ["b"]

    def test_train_cap(self):
        recs = [record(f"p{i}") for i in range(60_000)]
        a = apply_construction_filters(recs, seed=7)
        b = apply_construction_filters(recs, seed=7)
        assert len(a) == 50_000
        assert [r.image_id for r in a] == [r.image_id for r in b]
        c = apply_construction_filters(recs, seed=8)
        assert {r.image_id for r in a} != {r.image_id for r in c}

    def test_sample_independent_of_input_order(self):
        recs = [record(f"p{i}", split="test") for i in range(1500)]
        a = {r.image_id for r in apply_construction_filters(recs, seed=1)}
        b = {r.image_id for r in apply_construction_filters(recs[::-1], seed=1)}
        assert a == b and len(a) == 1000

    def test_caps_are_per_dataset_and_split(self):
        caps = ConstructionCaps(train_cap=3, test_cap=2)
        recs = ([record(f"a{i}", dataset="x") for i in range(5)]
                + [record(f"b{i}", dataset="y") for i in range(5)]
                + [record(f"c{i}", dataset="x", split="test") for i in range(5)])
        kept = apply_construction_filters(recs, caps)
        stats = corpus_stats(kept)
        assert stats.per_group[("x", "train")].records == 3
        assert stats.per_group[("y", "train")].records == 3
        assert stats.per_group[("x", "test")].records == 2

    def test_sampling_happens_before_box_filter(self):
        # of 4 sampled pages, crowded ones are dropped afterwards rather than replaced
        caps = ConstructionCaps(train_cap=4, test_cap=4, max_boxes=5)
        recs = [record(f"p{i}", 10 if i % 2 else 1) for i in range(8)]
        kept = apply_construction_filters(recs, caps)
        assert len(kept) < 4
        sampled = apply_construction_filters(recs, ConstructionCaps(4, 4, 10_000))
        assert [r.image_id for r in kept] == [r.image_id for r in sampled if r.n_boxes <= 5]


class TestStats:
    def test_averages(self):
        s = corpus_stats([record("a", 10, 1), record("b", 20, 0)])
        assert (s.n_text_avg, s.n_vision_avg) == (15, Fraction(1, 2))

    def test_empty_page(self):
        s = corpus_stats([record("a")])
        assert (s.n_text_avg, s.n_vision_avg) == (0, 0)

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            corpus_stats([])

    def test_shards_add_up(self):
        recs = [record(f"p{i}", i % 7, i % 2, dataset="xy"[i % 2], split=("train", "test")[i % 3 == 0])
                for i in range(100)]
        whole = corpus_stats(recs)
        merged = corpus_stats(recs[:37]) + corpus_stats(recs[37:])
        assert merged.per_group == whole.per_group
        assert merged.total == whole.total

    def test_tables(self):
        s = corpus_stats([record("a", 2, 1, "x"), record("b", 1, 0, "y", "test")])
        assert s.samples_table() == [["split", "x", "y", "Total"], ["test", 0, 1, 1], ["train", 1, 0, 1]]
        assert s.boxes_table()[1:] == [["test", 1, 0, 1], ["train", 2, 1, 3]]
        assert s.to_csv().splitlines()[1] == "x,train,1,2,1"
        assert "text 1.50, vision 0.50" in s.to_markdown()

    def test_synthetic_corpus_feeds_the_solver(self):
        # 100 pages averaging 293.37 text and 0.71 vision regions
        recs = [record(f"p{i}", 293 + (i < 37), int(i < 71)) for i in range(100)]
        s = corpus_stats(recs)
        assert (s.n_text_avg, s.n_vision_avg) == (Fraction("293.37"), Fraction("0.71"))
        cfg = solve_pooling(s.n_text_avg, s.n_vision_avg)
        assert (cfg.s_v, cfg.s_g) == (4, 8)
