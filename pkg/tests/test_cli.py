import io
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from roitok.budget import count_tokens
from roitok.cli import main
from roitok.types import PoolingConfig

DATA = Path(__file__).parent / "data"


def run(*argv):
    out = io.StringIO()
    code = main([str(a) for a in argv], out=out)
    return code, out.getvalue()


def kv(text):
    return dict(line.split("=", 1) for line in text.strip().splitlines())


def page(image_id, rois, image_path=None, size=(200, 300), split="train"):
    return {"schema_version": 1, "image_id": image_id, "image_path": image_path,
            "page_size": list(size), "source_dataset": "docbank", "split": split,
            "rois": [{"bbox": b, "class": c} for b, c in rois]}


@pytest.fixture
def corpus(tmp_path):
    rng = np.random.default_rng(5)
    Image.fromarray(rng.integers(0, 256, (300, 200, 3), dtype=np.uint8)).save(tmp_path / "p1.png")
    pages = [
        page("p1", [([10, 10, 100, 30], "text"), ([10, 40, 150, 60], "text"),
                    ([20, 100, 180, 280], "figure")], image_path="p1.png"),
        page("p2", []),
        page("p3/odd id", [([5, 5, 50, 15], "text")] * 4),
    ]
    path = tmp_path / "corpus.jsonl"
    path.write_text("".join(json.dumps(p) + "\n" for p in pages))
    return path


class TestTokenize:
    def test_counts_and_files(self, corpus, tmp_path):
        out_dir = tmp_path / "out"
        code, text = run("tokenize", "--corpus", corpus, "--out", out_dir, "--d", 16, "--save-vectors")
        assert code == 0
        cfg = PoolingConfig(d=16)
        expected = [count_tokens(2, 1, cfg).total, count_tokens(0, 0, cfg).total, count_tokens(4, 0, cfg).total]
        assert kv(text)["documents"] == "3"
        assert int(kv(text)["total_tokens"]) == sum(expected)
        layout = json.loads((out_dir / "p1.layout.json").read_text())
        assert layout["counts"]["total"] == expected[0] == 86
        assert layout["tokens"][0] == [-1, "spatial", 0]
        assert np.load(out_dir / "p3_odd_id.vectors.npy").shape == (expected[2], 16)
        summary = (out_dir / "summary.csv").read_text().splitlines()
        assert summary[2].startswith("p2,0,0,1,0,0,64,65")

    def test_rerun_is_byte_identical(self, corpus, tmp_path):
        for name in ("a", "b"):
            assert run("tokenize", "--corpus", corpus, "--out", tmp_path / name, "--d", 8,
                       "--save-vectors", "--jobs", 1 if name == "a" else 3)[0] == 0
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f

    def test_empty_corpus(self, tmp_path):
        (tmp_path / "empty.jsonl").write_text("")
        assert run("tokenize", "--corpus", tmp_path / "empty.jsonl", "--out", tmp_path / "o")[0] == 1

    def test_missing_image(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text(json.dumps(page("x", [], image_path="nope.png")) + "\n")
        assert run("tokenize", "--corpus", path, "--out", tmp_path / "o", "--d", 4)[0] == 1

    def test_params_file(self, corpus, tmp_path):
        from roitok.pooling import init_params, save_params

        save_params(tmp_path / "p.npz", init_params(8, seed=4))
        assert run("tokenize", "--corpus", corpus, "--out", tmp_path / "o", "--d", 8,
                   "--params", tmp_path / "p.npz")[0] == 0
        assert run("tokenize", "--corpus", corpus, "--out", tmp_path / "o", "--d", 6,
                   "--params", tmp_path / "p.npz")[0] == 1


class TestBudget:
    def test_dense_page(self):
        code, text = run("budget", "--n-text", 293, "--n-vision", 1)
        assert code == 0
        assert kv(text)["total"] == "668"

    def test_expected_mode(self):
        code, text = run("budget", "--n-text", "293.37", "--n-vision", "0.71", "--expected")
        assert code == 0 and kv(text)["total"] == "663.81"

    def test_fraction_without_expected_is_rejected(self):
        assert run("budget", "--n-text", "1.5")[0] == 1

    def test_table_format(self):
        code, text = run("budget", "--format", "table")
        assert code == 0 and text.splitlines()[-1].split() == ["total", "65"]

    def test_solve_pooling(self):
        code, text = run("solve-pooling")
        assert code == 0
        assert kv(text) == {"s_t": "1", "s_v": "4", "s_g": "8", "total": "663.81", "feasible_s_v": "1,2,3,4"}

    def test_solve_pooling_infeasible(self):
        assert run("solve-pooling", "--n-text-avg", 0, "--n-vision-avg", 0,
                   "--band-lower", 0, "--band-upper", 4)[0] == 1


class TestIngestAndStats:
    def test_ingest_filters(self, tmp_path):
        rows = [page(f"p{i}", [([0, 0, 1, 1], "text")] * n) for i, n in enumerate([999, 1000, 1001])]
        src = tmp_path / "in.jsonl"
        src.write_text("".join(json.dumps(r) + "\n" for r in rows) + "not json\n")
        assert run("ingest", "--input", src, "--out", tmp_path / "o.jsonl")[0] == 1
        code, text = run("ingest", "--input", src, "--out", tmp_path / "o.jsonl", "--lenient",
                         "--stats-out", tmp_path / "stats.md")
        assert code == 0
        assert kv(text) == {"read": "3", "kept": "2", "flagged_too_many_boxes": "1", "skipped_lines": "1"}
        assert len((tmp_path / "o.jsonl").read_text().splitlines()) == 2
        assert "text 999.50" in (tmp_path / "stats.md").read_text()

    def test_stats_shards(self, corpus, tmp_path):
        code, text = run("stats", corpus, corpus, "--format", "csv")
        assert code == 0
        assert text.splitlines()[1] == "docbank,train,6,12,2"


class TestEval:
    def test_kie(self, tmp_path):
        gold = [{"id": i, "image_id": "x", "dataset": "D", "domain": "in-domain", "question": "q", "gold": g}
                for i, g in enumerate(["Total", "Date", "Company", "Address"])]
        preds = [{"id": 0, "prediction": "total"}, {"id": 1, "prediction": "date"},
                 {"id": 2, "prediction": "address"}]
        (tmp_path / "g.jsonl").write_text("".join(json.dumps(r) + "\n" for r in gold))
        (tmp_path / "p.jsonl").write_text("".join(json.dumps(r) + "\n" for r in preds))
        code, text = run("eval-kie", "--gold", tmp_path / "g.jsonl", "--pred", tmp_path / "p.jsonl",
                         "--format", "csv", "--out", tmp_path / "rep")
        assert code == 0
        overall = text.strip().splitlines()[-1].split(",")
        assert overall[0] == "Overall" and float(overall[4]) == pytest.approx(4 / 7, abs=1e-6)
        assert (tmp_path / "rep" / "f1.md").exists()

    def test_kie_unknown_prediction_id(self, tmp_path):
        (tmp_path / "g.jsonl").write_text(json.dumps(
            {"id": 0, "image_id": "x", "dataset": "D", "domain": "in-domain", "question": "q", "gold": "a"}) + "\n")
        (tmp_path / "p.jsonl").write_text(json.dumps({"id": 9, "prediction": "a"}) + "\n")
        assert run("eval-kie", "--gold", tmp_path / "g.jsonl", "--pred", tmp_path / "p.jsonl")[0] == 1

    def test_det_perfect(self, tmp_path):
        gold = {"image_id": "a", "page_size": [200, 100],
                "boxes": [{"bbox": [20, 10, 80, 50], "class": "text"}, {"bbox": [100, 0, 200, 100], "class": "vision"}]}
        pred = dict(gold, boxes=[dict(b, score=0.9) for b in gold["boxes"]])
        (tmp_path / "g.jsonl").write_text(json.dumps(gold) + "\n")
        (tmp_path / "p.jsonl").write_text(json.dumps(pred) + "\n")
        code, text = run("eval-det", "--gold", tmp_path / "g.jsonl", "--pred", tmp_path / "p.jsonl",
                         "--format", "csv")
        assert code == 0
        assert text.splitlines()[1] == "1.000000,1.000000,1.000000,1.000000"

    def test_det_bad_class(self, tmp_path):
        (tmp_path / "g.jsonl").write_text(json.dumps(
            {"image_id": "a", "boxes": [{"bbox": [0, 0, 1, 1], "class": "whole_image"}]}) + "\n")
        (tmp_path / "p.jsonl").write_text("")
        assert run("eval-det", "--gold", tmp_path / "g.jsonl", "--pred", tmp_path / "p.jsonl")[0] == 1


class TestReport:
    def test_token_csv(self, tmp_path):
        code, text = run("report", "--input", DATA / "token_counts.csv", "--out", tmp_path)
        assert code == 0
        assert text.strip().endswith("overall reduction: 3.6x")
        assert "(9.7×↓)" in (tmp_path / "efficiency.md").read_text()
        assert (tmp_path / "plot.csv").read_text().splitlines()[0] == "dataset,tokens_ours,tokens_baseline"

    def test_reference_matches_csv(self):
        assert run("report", "--reference")[1] == run("report", "--input", DATA / "token_counts.csv")[1]

    def test_bad_csv(self, tmp_path):
        (tmp_path / "t.csv").write_text("dataset,ours\nA,1\n")
        assert run("report", "--input", tmp_path / "t.csv")[0] == 1


class TestConfig:
    def test_layering(self, tmp_path, monkeypatch):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"s_v": 2, "budget": {"n_text": 10}}))
        code, text = run("--config", cfg, "budget")
        assert code == 0 and kv(text)["total"] == str(count_tokens(10, 0, PoolingConfig(1, 2, 8)).total)
        # flags beat the config file
        code, text = run("--config", cfg, "budget", "--n-text", 1)
        assert kv(text)["total"] == str(count_tokens(1, 0, PoolingConfig(1, 2, 8)).total)
        # the environment variable is picked up when --config is absent
        monkeypatch.setenv("ROITOK_CONFIG", str(cfg))
        assert kv(run("budget")[1])["semantic_text"] == "10"

    def test_unknown_keys(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"colour": 1}))
        assert run("--config", cfg, "budget")[0] == 1
        cfg.write_text(json.dumps({"budget": {"s_x": 1}}))
        assert run("--config", cfg, "budget")[0] == 1

    def test_unreadable_config(self, tmp_path):
        assert run("--config", tmp_path / "missing.json", "budget")[0] == 1

    def test_usage_errors(self):
        assert run()[0] == 1
        assert run("budget", "--s-v", "many")[0] == 1
        assert run("frobnicate")[0] == 1
        assert run("--help")[0] == 0
