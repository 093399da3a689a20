#!/usr/bin/env python3
"""Build the integration-test fixture: a tiny embedding file, a sentiment
CNN checkpoint crafted so "best" -> "worst" flips the prediction, a small
dataset, a pairs file, and the pairs-command outputs the UI round-trip
test compares against.

Usage: python3 scripts/make_fixture.py <out_dir>
"""

import json
import pathlib
import sys

import numpy as np

from fisherprobe.cli import main as cli_main
from fisherprobe.data import load_embeddings
from fisherprobe.models import ModelSpec, build_model, save_checkpoint

TOKENS = {
    "best": [1.0, 0.0, 0.2, 0.0],
    "worst": [-1.0, 0.0, 0.2, 0.0],
    "movie": [0.0, 0.4, -0.1, 0.3],
    "the": [0.0, 0.1, 0.1, -0.2],
    "fine": [0.2, -0.3, 0.0, 0.1],
    "plot": [0.1, 0.2, -0.2, 0.0],
}


def main(out_dir: str) -> int:
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    emb = out / "embeddings.txt"
    emb.write_text(
        "\n".join(tok + " " + " ".join(f"{v:.6f}" for v in vec)
                  for tok, vec in TOKENS.items()) + "\n",
        encoding="utf-8",
    )
    table = load_embeddings(emb)

    # width-1 filters read embedding coordinate 0, which is +1 for "best"
    # and -1 for "worst"; the output layer maps that to the sentiment
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
    ckpt = out / "checkpoint.json"
    save_checkpoint(model, ckpt)

    data = out / "dataset.jsonl"
    rows = [
        {"id": "e0", "text": "best movie", "label": "pos"},
        {"id": "e1", "text": "worst movie", "label": "neg"},
        {"id": "e2", "text": "the fine movie", "label": "pos"},
        {"id": "e3", "text": "the plot", "label": "neg"},
    ]
    data.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

    pairs = out / "pairs.jsonl"
    pairs.write_text(json.dumps({
        "id": "flip0",
        "original_text": "best movie",
        "perturbed_text": "worst movie",
        "original_label": "pos",
        "perturbed_label": "neg",
    }) + "\n")

    code = cli_main([
        "pairs", "--checkpoint", str(ckpt), "--embeddings", str(emb),
        "--pairs", str(pairs), "--out", str(out / "pair_report.jsonl"),
        "--summary", str(out / "pair_summary.json"),
    ])
    if code != 0:
        return code
    print(f"fixture written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1] if len(sys.argv) > 1 else "test-fixtures"))
