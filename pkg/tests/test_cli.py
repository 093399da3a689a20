import json

import numpy as np
import pytest

from fisherprobe.cli import main
from fisherprobe.data import Example
from fisherprobe.fim import lambda_max
from fisherprobe.models import (
    ModelSpec,
    build_model,
    load_checkpoint,
    save_checkpoint,
)


def run_cli(*argv):
    return main([str(a) for a in argv])


def write_embeddings(path, dim=4, tokens=("best", "worst", "movie", "the", "a")):
    rng = np.random.default_rng(7)
    lines = []
    for tok in tokens:
        vec = rng.normal(size=dim)
        lines.append(tok + " " + " ".join(f"{v:.6f}" for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def text_fixture(tmp_path):
    """Small embedding file + trained-ish checkpoint + dataset files."""
    emb = write_embeddings(tmp_path / "vecs.txt")
    from fisherprobe.data import load_embeddings

    table = load_embeddings(emb)
    spec = ModelSpec(kind="textcnn", embedding_dim=4, filter_widths=(1, 2),
                     filters_per_width=4, max_len=8, dropout=0.5)
    model = build_model(spec, seed=3, embeddings=table)
    ckpt = tmp_path / "model.json"
    save_checkpoint(model, ckpt)
    data = tmp_path / "data.jsonl"
    rows = [
        {"id": "r0", "text": "best movie", "label": "pos"},
        {"id": "r1", "text": "worst movie", "label": "neg"},
        {"id": "r2", "text": "the movie", "label": "pos"},
    ]
    data.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    return {"emb": emb, "ckpt": ckpt, "data": data, "model": model,
            "table": table, "dir": tmp_path}


class TestTrainCommand:
    def test_synthetic_train_writes_checkpoint(self, tmp_path, capsys):
        ckpt = tmp_path / "m.json"
        report = tmp_path / "r.json"
        code = run_cli("train", "--synthetic", "--n-per-class", 150,
                       "--epochs", 120, "--seed", 0,
                       "--out", ckpt, "--report", report)
        assert code == 0
        out = capsys.readouterr().out
        assert "valid accuracy" in out
        acc = json.loads(report.read_text())["best_valid_acc"]
        assert acc >= 0.95
        model = load_checkpoint(ckpt)
        assert model.spec.kind == "mlp"

    def test_synthetic_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for out in (a, b):
            assert run_cli("train", "--synthetic", "--n-per-class", 80,
                           "--epochs", 40, "--seed", 5, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_embedding_file_exit_2(self, tmp_path, capsys):
        code = run_cli("train", "--data", tmp_path / "x.jsonl",
                       "--embeddings", tmp_path / "missing_vectors.txt",
                       "--out", tmp_path / "m.json")
        assert code == 2
        assert "missing_vectors.txt" in capsys.readouterr().err


class TestScoreCommand:
    def test_score_dataset(self, text_fixture, tmp_path, capsys):
        out = tmp_path / "scored.jsonl"
        code = run_cli("score", "--checkpoint", text_fixture["ckpt"],
                       "--embeddings", text_fixture["emb"],
                       "--data", text_fixture["data"], "--out", out)
        assert code == 0
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(rows) == 3
        assert {r["id"] for r in rows} == {"r0", "r1", "r2"}
        printed = capsys.readouterr().out
        assert "median" in printed

    def test_score_matches_library(self, text_fixture, tmp_path):
        out = tmp_path / "scored.jsonl"
        run_cli("score", "--checkpoint", text_fixture["ckpt"],
                "--embeddings", text_fixture["emb"],
                "--data", text_fixture["data"], "--out", out)
        rows = {r["id"]: r for r in map(json.loads, out.read_text().splitlines())}
        want = lambda_max(text_fixture["model"],
                          Example(id="r0", label=1, text="best movie"))
        assert rows["r0"]["lambda_max"] == want.lambda_max

    def test_sort_flag_orders_descending(self, text_fixture, tmp_path):
        out = tmp_path / "scored.jsonl"
        run_cli("score", "--checkpoint", text_fixture["ckpt"],
                "--embeddings", text_fixture["emb"],
                "--data", text_fixture["data"], "--out", out, "--sort")
        lams = [json.loads(l)["lambda_max"] for l in out.read_text().splitlines()]
        assert lams == sorted(lams, reverse=True)

    def test_top_eigvec_flag(self, text_fixture, tmp_path):
        out = tmp_path / "scored.jsonl"
        run_cli("score", "--checkpoint", text_fixture["ckpt"],
                "--embeddings", text_fixture["emb"],
                "--data", text_fixture["data"], "--out", out, "--top-eigvec")
        for line in out.read_text().splitlines():
            row = json.loads(line)
            vec = np.asarray(row["top_eigenvector"])
            assert abs(np.linalg.norm(vec) - 1.0) <= 1e-10


class TestPairsCommand:
    def write_pairs(self, path, rows):
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_identical_pairs_zero_stats(self, text_fixture, tmp_path):
        pairs = self.write_pairs(tmp_path / "p.jsonl", [
            {"id": "p0", "original_text": "best movie",
             "perturbed_text": "best movie",
             "original_label": 1, "perturbed_label": 1},
            {"id": "p1", "original_text": "the movie",
             "perturbed_text": "the movie",
             "original_label": 1, "perturbed_label": 1},
        ])
        out, summary = tmp_path / "rep.jsonl", tmp_path / "sum.json"
        code = run_cli("pairs", "--checkpoint", text_fixture["ckpt"],
                       "--embeddings", text_fixture["emb"], "--pairs", pairs,
                       "--out", out, "--summary", summary)
        assert code == 0
        stats = json.loads(summary.read_text())
        assert stats["mean"] == 0.0 and stats["std"] == 0.0
        assert stats["frac_le_threshold"] == 1.0

    def test_two_pair_summary_matches_hand_computation(self, text_fixture, tmp_path):
        texts = [("best movie", "worst movie"), ("the movie", "a movie")]
        pairs = self.write_pairs(tmp_path / "p.jsonl", [
            {"id": f"p{i}", "original_text": o, "perturbed_text": p,
             "original_label": 1, "perturbed_label": 0}
            for i, (o, p) in enumerate(texts)
        ])
        out, summary = tmp_path / "rep.jsonl", tmp_path / "sum.json"
        hist = tmp_path / "hist.csv"
        run_cli("pairs", "--checkpoint", text_fixture["ckpt"],
                "--embeddings", text_fixture["emb"], "--pairs", pairs,
                "--out", out, "--summary", summary, "--hist", hist)
        model = text_fixture["model"]
        deltas = []
        for orig, pert in texts:
            lo = lambda_max(model, Example(id="o", label=1, text=orig)).lambda_max
            lp = lambda_max(model, Example(id="p", label=0, text=pert)).lambda_max
            deltas.append(lp - lo)
        stats = json.loads(summary.read_text())
        assert stats["mean"] == np.mean(deltas)
        assert stats["std"] == float(np.std(deltas))
        assert hist.read_text().startswith("bin_left,bin_right,mass_a,mass_b")

    def test_overlap_report_emitted(self, text_fixture, tmp_path):
        scored = tmp_path / "scored.jsonl"
        run_cli("score", "--checkpoint", text_fixture["ckpt"],
                "--embeddings", text_fixture["emb"],
                "--data", text_fixture["data"], "--out", scored)
        pairs = self.write_pairs(tmp_path / "p.jsonl", [
            {"id": "p0", "original_text": "best movie",
             "perturbed_text": "worst movie",
             "original_label": 1, "perturbed_label": 0},
        ])
        out, summary = tmp_path / "rep.jsonl", tmp_path / "sum.json"
        code = run_cli("pairs", "--checkpoint", text_fixture["ckpt"],
                       "--embeddings", text_fixture["emb"], "--pairs", pairs,
                       "--out", out, "--summary", summary,
                       "--overlap", scored, "--bins", 20)
        assert code == 0
        rep = json.loads(summary.read_text())["overlap"]
        assert 0.0 <= rep["overlap_percent"] <= 100.0
        assert len(rep["mass_a"]) == 20


class TestSyntheticCommand:
    def test_outputs_and_determinism(self, tmp_path, capsys):
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        for out in (out1, out2):
            code = run_cli("synthetic", "--out-dir", out, "--seed", 1,
                           "--n-per-class", 60, "--epochs", 80)
            assert code == 0
        assert (out1 / "points.csv").read_bytes() == (out2 / "points.csv").read_bytes()
        assert (out1 / "top_eigenvectors.csv").read_bytes() == \
            (out2 / "top_eigenvectors.csv").read_bytes()
        lines = (out1 / "top_eigenvectors.csv").read_text().splitlines()
        assert len(lines) == 21  # header + 20 rows
        for line in lines[1:]:
            _, _, v1, v2 = map(float, line.split(","))
            assert abs(np.hypot(v1, v2) - 1.0) <= 1e-10
        points = (out1 / "points.csv").read_text().splitlines()
        assert len(points) == 121
        assert "spearman" in capsys.readouterr().out


class TestBadUsage:
    def test_unknown_checkpoint(self, tmp_path, capsys):
        code = run_cli("score", "--checkpoint", tmp_path / "none.json",
                       "--out", tmp_path / "o.jsonl", "--synthetic")
        assert code == 2
        assert "none.json" in capsys.readouterr().err

    def test_mlp_checkpoint_needs_synthetic_flag(self, tmp_path, capsys):
        spec = ModelSpec(kind="mlp", layer_widths=(2, 4, 2))
        ckpt = tmp_path / "mlp.json"
        save_checkpoint(build_model(spec, seed=0), ckpt)
        code = run_cli("score", "--checkpoint", ckpt,
                       "--data", tmp_path / "d.jsonl",
                       "--out", tmp_path / "o.jsonl")
        assert code == 2
