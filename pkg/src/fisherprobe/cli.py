"""Command-line entry points: train, score, pairs, synthetic, serve.

Every number any command writes goes through the same scoring functions
the HTTP service uses, so file and service outputs agree bit for bit.
Set FISHER_PROBE_THREADS to parallelize dataset scoring (default 1).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import fim, probe
from .data import (
    DataError,
    GaussianMixtureSpec,
    load_dataset,
    load_embeddings,
    load_pairs,
    sample_mixture,
)
from .models import CheckpointError, ModelSpec, load_checkpoint, save_checkpoint
from .training import TrainConfig, train

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Fatal CLI problem; message printed, maps to exit code 2."""


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FISHER_PROBE_THREADS", "1")))
    except ValueError:
        return 1


def _label_map(arg: str) -> dict[str, int]:
    names = [n.strip() for n in arg.split(",") if n.strip()]
    if len(names) < 2:
        raise CliError(f"--labels needs at least two names, got {arg!r}")
    return {name: i for i, name in enumerate(names)}


def _require_file(path, what: str):
    if path is None:
        raise CliError(f"missing required {what}")
    if not os.path.exists(path):
        raise CliError(f"{what} not found: {path}")
    return path


def _load_table(args):
    return load_embeddings(_require_file(args.embeddings, "embedding file"))


def _load_model(args):
    path = _require_file(args.checkpoint, "checkpoint")
    embeddings = None
    if args.embeddings is not None:
        embeddings = _load_table(args)
    model = load_checkpoint(path, embeddings=embeddings)
    if model.spec.kind == "textcnn" and model.embeddings is None:
        raise CliError("text-model checkpoint needs --embeddings")
    with open(path, "rb") as fh:
        model_hash = hashlib.sha256(fh.read()).hexdigest()
    return model, model_hash


# ---------------------------------------------------------------------------
# train


def cmd_train(args) -> int:
    if args.synthetic:
        mixture = GaussianMixtureSpec(n_per_class=args.n_per_class, seed=args.seed)
        data = sample_mixture(mixture)
        spec = ModelSpec(kind="mlp", layer_widths=(2, 16, 2), num_classes=2)
        cfg = TrainConfig.for_synthetic(seed=args.seed,
                                        epochs=args.epochs or 200)
        embeddings = None
    else:
        table = _load_table(args)
        data = load_dataset(_require_file(args.data, "dataset"), args.format,
                            _label_map(args.labels))
        spec = ModelSpec(kind="textcnn", num_classes=len(_label_map(args.labels)),
                         embedding_dim=table.dim, max_len=args.max_len)
        cfg = TrainConfig.for_textcnn(seed=args.seed, epochs=args.epochs or 5)
        embeddings = table
    model, report = train(spec, data, cfg, embeddings=embeddings)
    save_checkpoint(model, args.out)
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
            fh.write("\n")
    print(f"checkpoint written to {args.out}")
    print(f"valid accuracy {report.best_valid_acc:.4f} (epoch {report.best_epoch})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# score


def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def cmd_score(args) -> int:
    model, _ = _load_model(args)
    if args.synthetic:
        data = sample_mixture(GaussianMixtureSpec(n_per_class=args.n_per_class,
                                                  seed=args.seed))
    elif model.spec.kind == "mlp":
        raise CliError("mlp checkpoints score synthetic points; pass --synthetic")
    else:
        data = load_dataset(_require_file(args.data, "dataset"), args.format,
                            _label_map(args.labels))
    results = fim.score_dataset(model, data, threads=_threads())
    scored = [r for r in results if r is not None]
    failed = len(results) - len(scored)
    rows = []
    for r in scored:
        rec = r.to_record()
        if args.top_eigvec and r.top_eigenvector is not None:
            rec["top_eigenvector"] = [float(v) for v in r.top_eigenvector]
        rows.append(rec)
    if args.sort:
        rows.sort(key=lambda rec: -rec["lambda_max"])
    _write_jsonl(args.out, rows)
    lams = sorted(r.lambda_max for r in scored)
    if lams:
        print(f"scored {len(scored)}/{len(results)} examples -> {args.out}")
        print(f"lambda_max min {lams[0]:.6g} median {lams[len(lams) // 2]:.6g} "
              f"max {lams[-1]:.6g}")
    if failed:
        print(f"{failed} example(s) failed; see log", file=sys.stderr)
    return EXIT_OK if failed <= 0.01 * len(results) else EXIT_FAILURES


# ---------------------------------------------------------------------------
# pairs


def cmd_pairs(args) -> int:
    model, _ = _load_model(args)
    label_map = _label_map(args.labels) if args.labels else None
    pairs = load_pairs(_require_file(args.pairs, "pairs file"), label_map)
    records, stats = probe.score_pairs(model, pairs, threshold=args.threshold)
    _write_jsonl(args.out, [r.to_record() for r in records])
    summary = stats.to_dict()
    overlap = None
    if args.overlap:
        base_rows = _read_jsonl(_require_file(args.overlap, "scored base file"))
        base = [row["lambda_max"] for row in base_rows]
        pair_lams = [r.lambda_original for r in records]
        overlap = probe.histogram_overlap(base, pair_lams, bins=args.bins)
        summary["overlap"] = overlap.to_dict()
    with open(args.summary, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    if args.hist:
        deltas = [r.delta for r in records]
        hist = probe.histogram_overlap(deltas, deltas, bins=args.bins)
        with open(args.hist, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_left", "bin_right", "mass_a", "mass_b"])
            for i in range(hist.bins):
                writer.writerow([repr(hist.edges[i]), repr(hist.edges[i + 1]),
                                 repr(hist.mass_a[i]), repr(hist.mass_b[i])])
    skipped = len(pairs) - len(records)
    print(f"scored {len(records)}/{len(pairs)} pairs -> {args.out}")
    print(f"delta mean {stats.mean:.6g} std {stats.std:.6g} "
          f"frac<=thr {stats.frac_le_threshold:.4f} frac>thr {stats.frac_gt_threshold:.4f}")
    if overlap is not None:
        print(f"overlap {overlap.overlap_percent:.2f}%")
    return EXIT_OK if skipped <= 0.01 * len(pairs) else EXIT_FAILURES


def _read_jsonl(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# synthetic end-to-end experiment


@dataclass
class SyntheticResult:
    model: object
    examples: list
    lambdas: list[float]
    distances: list[float]
    spearman: float
    valid_acc: float
    top_vectors: list[tuple[float, float, float, float]]  # x1, x2, v1, v2


def run_synthetic(seed: int = 0, n_per_class: int = 500, epochs: int = 200,
                  top_n: int = 20) -> SyntheticResult:
    """Sample the two-Gaussian mixture, train the MLP, score every point
    and measure rank agreement between difficulty and boundary distance."""
    from scipy.stats import spearmanr

    mixture = GaussianMixtureSpec(n_per_class=n_per_class, seed=seed)
    data = sample_mixture(mixture)
    cfg = TrainConfig.for_synthetic(seed=seed, epochs=epochs)
    spec = ModelSpec(kind="mlp", layer_widths=(2, 16, 2), num_classes=2)
    model, report = train(spec, data, cfg)
    results = fim.score_dataset(model, data, threads=_threads())
    lambdas = [r.lambda_max for r in results]
    distances = [probe.boundary_distance(model, ex.point) for ex in data]
    rho = float(spearmanr(lambdas, distances).statistic)
    order = sorted(range(len(data)), key=lambda i: -lambdas[i])[:top_n]
    top_vectors = []
    for i in order:
        vec = results[i].top_eigenvector
        top_vectors.append((float(data[i].point[0]), float(data[i].point[1]),
                            float(vec[0]), float(vec[1])))
    return SyntheticResult(model=model, examples=data, lambdas=lambdas,
                           distances=distances, spearman=rho,
                           valid_acc=report.best_valid_acc,
                           top_vectors=top_vectors)


def cmd_synthetic(args) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    result = run_synthetic(seed=args.seed, n_per_class=args.n_per_class,
                           epochs=args.epochs or 200)
    points_path = os.path.join(args.out_dir, "points.csv")
    with open(points_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "label", "lambda_max", "boundary_distance"])
        for ex, lam, dist in zip(result.examples, result.lambdas, result.distances):
            writer.writerow([repr(float(ex.point[0])), repr(float(ex.point[1])),
                             ex.label, repr(lam), repr(dist)])
    vec_path = os.path.join(args.out_dir, "top_eigenvectors.csv")
    with open(vec_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "v1", "v2"])
        for x1, x2, v1, v2 in result.top_vectors:
            writer.writerow([repr(x1), repr(x2), repr(v1), repr(v2)])
    if args.checkpoint_out:
        save_checkpoint(result.model, args.checkpoint_out)
    print(f"points -> {points_path}")
    print(f"top eigenvectors -> {vec_path}")
    print(f"valid accuracy {result.valid_acc:.4f}")
    print(f"spearman(lambda_max, boundary_distance) = {result.spearman:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    model, model_hash = _load_model(args)
    examples = None
    if args.data:
        examples = load_dataset(_require_file(args.data, "dataset"), args.format,
                                _label_map(args.labels))
    scored_rows = _read_jsonl(args.scored) if args.scored else None
    app = create_app(model, model_hash, examples=examples,
                     scored_rows=scored_rows, threads=_threads(),
                     attribution_steps=args.steps)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fisherprobe",
        description="Train small classifiers and measure per-example "
                    "difficulty as the top eigenvalue of the input-space "
                    "Fisher information metric.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier and write a checkpoint")
    p.add_argument("--synthetic", action="store_true",
                   help="train the 2-d mixture MLP instead of a text model")
    p.add_argument("--data")
    p.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--labels", default="neg,pos",
                   help="comma-separated label names in index order")
    p.add_argument("--embeddings")
    p.add_argument("--max-len", type=int, default=400)
    p.add_argument("--epochs", type=int)
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="write per-example difficulty scores")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--data")
    p.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--labels", default="neg,pos")
    p.add_argument("--synthetic", action="store_true",
                   help="score a freshly sampled synthetic mixture")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sort", action="store_true",
                   help="order output by lambda_max descending")
    p.add_argument("--top-eigvec", action="store_true",
                   help="emit the unit top eigenvector per row")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("pairs", help="score (original, perturbed) pairs")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--pairs", required=True)
    p.add_argument("--labels", default="neg,pos")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--overlap", help="scored JSONL of base examples to "
                                     "compute histogram overlap against")
    p.add_argument("--out", required=True)
    p.add_argument("--summary", required=True)
    p.add_argument("--hist")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("synthetic",
                       help="full 2-d experiment: sample, train, score, "
                            "boundary distances, top eigenvectors")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--epochs", type=int)
    p.add_argument("--checkpoint-out")
    p.set_defaults(func=cmd_synthetic)

    p = sub.add_parser("serve", help="HTTP scoring/attribution service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--data")
    p.add_argument("--format", choices=("jsonl", "tsv"), default="jsonl")
    p.add_argument("--labels", default="neg,pos")
    p.add_argument("--scored", help="precomputed scored JSONL to serve")
    p.add_argument("--steps", type=int, default=128,
                   help="integrated-gradients steps for attribution views")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (CliError, DataError, CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
