import numpy as np
import pytest
from fastapi.testclient import TestClient

from fisherprobe.data import Example
from fisherprobe.fim import lambda_max
from fisherprobe.models import EmbeddingTable, ModelSpec, build_model
from fisherprobe.service import create_app


def flip_model():
    """Tiny sentiment CNN crafted so substituting "best" -> "worst" is
    guaranteed to flip the prediction: filters read the first embedding
    coordinate, which is +1 for "best" and -1 for "worst"."""
    tokens = ["best", "worst", "movie", "the", "fine"]
    matrix = np.array([
        [1.0, 0.0, 0.2, 0.0],
        [-1.0, 0.0, 0.2, 0.0],
        [0.0, 0.4, -0.1, 0.3],
        [0.0, 0.1, 0.1, -0.2],
        [0.2, -0.3, 0.0, 0.1],
    ])
    table = EmbeddingTable.from_arrays(tokens, matrix, source_hash="fixture")
    spec = ModelSpec(kind="textcnn", embedding_dim=4, filter_widths=(1,),
                     filters_per_width=2, max_len=6, dropout=0.0)
    model = build_model(spec, seed=0, embeddings=table)
    model.params["conv1_w"] = np.array([[[1.0, -1.0],
                                         [0.0, 0.0],
                                         [0.0, 0.0],
                                         [0.0, 0.0]]])
    model.params["conv1_b"] = np.zeros(2)
    model.params["out_w"] = np.array([[-2.0, 2.0], [2.0, -2.0]])
    model.params["out_b"] = np.zeros(2)
    return model


@pytest.fixture(scope="module")
def client():
    model = flip_model()
    examples = [
        Example(id="e0", label=1, text="best movie"),
        Example(id="e1", label=0, text="worst movie"),
        Example(id="e2", label=1, text="the fine movie"),
    ]
    app = create_app(model, model_hash="abc123", examples=examples)
    return TestClient(app, raise_server_exceptions=False)


class TestHealth:
    def test_health(self, client):
        resp = client.get("/health")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok", "model_hash": "abc123"}


class TestScore:
    def test_identical_responses(self, client):
        a = client.post("/score", json={"text": "best movie"})
        b = client.post("/score", json={"text": "best movie"})
        assert a.status_code == 200
        assert a.content == b.content

    def test_matches_library_bit_exact(self, client):
        resp = client.post("/score", json={"text": "best movie"}).json()
        want = lambda_max(flip_model(), Example(id="x", label=0, text="best movie"))
        assert resp["lambda_max"] == want.lambda_max
        assert resp["probs"] == [float(p) for p in want.probs]
        assert resp["prediction"] == want.prediction
        assert resp["tokens"] == ["best", "movie"]

    def test_empty_text_422(self, client):
        resp = client.post("/score", json={"text": "   "})
        assert resp.status_code == 422

    def test_malformed_body_400(self, client):
        resp = client.post("/score", json={"nope": 1})
        assert resp.status_code == 400


class TestPerturb:
    def test_empty_substitutions_zero_delta(self, client):
        resp = client.post("/perturb",
                           json={"text": "best movie", "substitutions": []})
        body = resp.json()
        assert resp.status_code == 200
        assert body["delta"] == 0.0
        assert body["flipped"] is False

    def test_flip_substitution(self, client):
        resp = client.post("/perturb", json={
            "text": "best movie",
            "substitutions": [{"position": 0, "replacement": "worst"}],
        })
        body = resp.json()
        assert body["original"]["prediction"] == 1
        assert body["perturbed"]["prediction"] == 0
        assert body["flipped"] is True
        assert body["perturbed"]["text"] == "worst movie"

    def test_out_of_range_position_422(self, client):
        resp = client.post("/perturb", json={
            "text": "best movie",
            "substitutions": [{"position": 9, "replacement": "x"}],
        })
        assert resp.status_code == 422

    def test_delta_matches_two_scores(self, client):
        orig = client.post("/score", json={"text": "best movie"}).json()
        pert = client.post("/score", json={"text": "worst movie"}).json()
        resp = client.post("/perturb", json={
            "text": "best movie",
            "substitutions": [{"position": 0, "replacement": "worst"}],
        }).json()
        assert resp["delta"] == pert["lambda_max"] - orig["lambda_max"]


class TestExamples:
    def test_sorted_descending_by_default(self, client):
        body = client.get("/examples").json()
        lams = [row["lambda_max"] for row in body["examples"]]
        assert lams == sorted(lams, reverse=True)
        assert body["total"] == 3

    def test_sort_ascending(self, client):
        body = client.get("/examples", params={"sort": "lambda_asc"}).json()
        lams = [row["lambda_max"] for row in body["examples"]]
        assert lams == sorted(lams)

    def test_pagination(self, client):
        page = client.get("/examples", params={"offset": 1, "limit": 1}).json()
        assert len(page["examples"]) == 1
        beyond = client.get("/examples", params={"offset": 10, "limit": 5}).json()
        assert beyond["examples"] == []

    def test_unknown_sort_400(self, client):
        assert client.get("/examples", params={"sort": "zzz"}).status_code == 400

    def test_detail_includes_attribution(self, client):
        body = client.get("/examples/e2").json()
        assert body["id"] == "e2"
        assert body["tokens"] == ["the", "fine", "movie"]
        assert len(body["token_scores"]) == len(body["tokens"])

    def test_detail_404(self, client):
        assert client.get("/examples/unknown").status_code == 404

    def test_detail_lambda_matches_list(self, client):
        listed = {r["id"]: r["lambda_max"]
                  for r in client.get("/examples").json()["examples"]}
        detail = client.get("/examples/e0").json()
        assert detail["lambda_max"] == listed["e0"]


class TestCrossInterfaceConsistency:
    def test_http_score_equals_cli_score_bit_exact(self, tmp_path):
        import json

        from fisherprobe.cli import main as cli_main
        from fisherprobe.models import save_checkpoint

        model = flip_model()
        ckpt = tmp_path / "ckpt.json"
        save_checkpoint(model, ckpt)
        emb = tmp_path / "vecs.txt"
        rows = ["best 1.0 0.0 0.2 0.0", "worst -1.0 0.0 0.2 0.0",
                "movie 0.0 0.4 -0.1 0.3", "the 0.0 0.1 0.1 -0.2",
                "fine 0.2 -0.3 0.0 0.1"]
        emb.write_text("\n".join(rows) + "\n")
        data = tmp_path / "d.jsonl"
        data.write_text(json.dumps({"id": "e0", "text": "best movie",
                                    "label": "pos"}) + "\n")
        out = tmp_path / "scored.jsonl"
        # note: the fixture table hash differs from the file's, so rebuild
        # the checkpoint against the real embedding file
        from fisherprobe.data import load_embeddings
        from fisherprobe.models import load_checkpoint

        table = load_embeddings(emb)
        model.embeddings = table
        model.vocab_hash = table.source_hash
        save_checkpoint(model, ckpt)
        assert cli_main(["score", "--checkpoint", str(ckpt),
                         "--embeddings", str(emb), "--data", str(data),
                         "--out", str(out)]) == 0
        cli_row = json.loads(out.read_text().splitlines()[0])

        served = load_checkpoint(ckpt, embeddings=table)
        app = create_app(served, model_hash="h")
        local = TestClient(app)
        http_row = local.post("/score", json={"text": "best movie"}).json()
        assert http_row["lambda_max"] == cli_row["lambda_max"]
        assert http_row["probs"] == cli_row["probs"]
        assert http_row["eigenvalues"] == cli_row["eigenvalues"]
        assert http_row["prediction"] == cli_row["prediction"]


class TestPrecomputedRows:
    def test_scored_rows_reused(self):
        model = flip_model()
        examples = [Example(id="e0", label=1, text="best movie")]
        row = lambda_max(model, examples[0]).to_record()
        row["lambda_max"] = 123.456  # sentinel: service must not rescore
        app = create_app(model, model_hash="h", examples=examples,
                         scored_rows=[row])
        client = TestClient(app)
        got = client.get("/examples").json()["examples"][0]
        assert got["lambda_max"] == 123.456
