"""Data ingestion: tokenizer, embedding/dataset/pair readers, and the
two-Gaussian synthetic generator.

All loaders are pure and preserve file order.  Label maps are explicit
configuration and never inferred from the data.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

import numpy as np

from .models import EmbeddingTable

_BREAK_RE = re.compile(r"<br\s*/?>", re.IGNORECASE)
_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")


class DataError(ValueError):
    """Malformed input file or record."""


@dataclass
class Example:
    """One labeled example: raw text, or a 2-d point for synthetic data."""

    id: str
    label: int
    text: str | None = None
    point: np.ndarray | None = None


@dataclass
class PairedExample:
    """An (original, perturbed) text pair, e.g. a contrast-set edit."""

    id: str
    original_text: str
    perturbed_text: str
    original_label: int
    perturbed_label: int


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Two-component 2-d Gaussian mixture; defaults match the synthetic
    benchmark setup (means [-2,-2] and [3.5,3.5], identity and
    [[2,1],[1,2]] covariances)."""

    mu1: tuple[float, float] = (-2.0, -2.0)
    mu2: tuple[float, float] = (3.5, 3.5)
    sigma1: tuple = ((1.0, 0.0), (0.0, 1.0))
    sigma2: tuple = ((2.0, 1.0), (1.0, 2.0))
    n_per_class: int = 500
    seed: int = 0


def tokenize(text: str) -> list[str]:
    """Lowercase, strip HTML break tags, split punctuation into tokens.

    Apostrophes stay inside words ("don't" is one token).  Empty text
    gives an empty list; callers needing tokens must reject it.
    """
    text = _BREAK_RE.sub(" ", text.lower())
    return _TOKEN_RE.findall(text)


def load_embeddings(path) -> EmbeddingTable:
    """Read a "token v1 .. vd" text file into an EmbeddingTable.

    The dimensionality is inferred from the first line.  Duplicate tokens
    keep their first occurrence.  The file's SHA-256 is recorded so
    checkpoints can pin the exact embedding release they trained against.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read embedding file {path}: {exc}") from exc
    source_hash = hashlib.sha256(raw).hexdigest()
    tokens: list[str] = []
    rows: list[list[float]] = []
    seen: set[str] = set()
    dim = None
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.rstrip().split(" ")
        token, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise DataError(f"{path}:{lineno}: no embedding values on first line")
        if len(values) != dim:
            raise DataError(
                f"{path}:{lineno}: expected {dim} values, found {len(values)}"
            )
        try:
            vec = [float(v) for v in values]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: non-numeric value ({exc})") from exc
        if token in seen:
            continue
        seen.add(token)
        tokens.append(token)
        rows.append(vec)
    if dim is None:
        raise DataError(f"{path}: empty embedding file")
    return EmbeddingTable.from_arrays(tokens, np.asarray(rows, dtype=np.float64),
                                      source_hash=source_hash)


def _resolve_label(value, label_map: dict[str, int], where: str) -> int:
    if isinstance(value, bool):
        raise DataError(f"{where}: boolean label {value!r}")
    if isinstance(value, int):
        if value < 0 or (label_map and value >= len(label_map)):
            raise DataError(f"{where}: integer label {value} out of range")
        return value
    if value in label_map:
        return label_map[value]
    raise DataError(
        f"{where}: unknown label {value!r}; valid labels: {sorted(label_map)}"
    )


def load_dataset(path, format: str, label_map: dict[str, int]) -> list[Example]:
    """Read a TSV ("label<TAB>text") or JSONL dataset in file order.

    JSONL records may carry an explicit "id"; otherwise ids are the
    zero-based record index.
    """
    if format not in ("jsonl", "tsv"):
        raise DataError(f"unknown dataset format {format!r}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    examples: list[Example] = []
    seen_ids: set[str] = set()
    index = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        if format == "tsv":
            if "\t" not in line:
                raise DataError(f"{where}: expected 'label<TAB>text'")
            label_str, text = line.split("\t", 1)
            ex_id = str(index)
            label = _resolve_label(label_str, label_map, where)
        else:
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc})") from exc
            if "text" not in rec or "label" not in rec:
                raise DataError(f"{where}: record needs 'text' and 'label'")
            text = rec["text"]
            ex_id = str(rec["id"]) if "id" in rec else str(index)
            label = _resolve_label(rec["label"], label_map, where)
        if ex_id in seen_ids:
            raise DataError(f"{where}: duplicate id {ex_id!r}")
        seen_ids.add(ex_id)
        examples.append(Example(id=ex_id, label=label, text=text))
        index += 1
    return examples


PAIR_FIELDS = ("original_text", "perturbed_text", "original_label", "perturbed_label")


def load_pairs(path, label_map: dict[str, int] | None = None) -> list[PairedExample]:
    """Read a JSONL file of (original, perturbed) pairs in file order."""
    label_map = label_map or {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read pairs file {path}: {exc}") from exc
    pairs: list[PairedExample] = []
    index = 0
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid JSON ({exc})") from exc
        missing = [f for f in PAIR_FIELDS if f not in rec]
        if missing:
            raise DataError(f"{where}: missing field(s) {missing}")
        for side in ("original_text", "perturbed_text"):
            if not tokenize(rec[side]):
                raise DataError(f"{where}: {side} tokenizes to nothing")
        pairs.append(
            PairedExample(
                id=str(rec["id"]) if "id" in rec else str(index),
                original_text=rec["original_text"],
                perturbed_text=rec["perturbed_text"],
                original_label=_resolve_label(rec["original_label"], label_map, where),
                perturbed_label=_resolve_label(rec["perturbed_label"], label_map, where),
            )
        )
        index += 1
    return pairs


def _cholesky_2x2(sigma, name: str) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.shape != (2, 2) or not np.allclose(sigma, sigma.T, atol=1e-12):
        raise ValueError(f"{name} must be a symmetric 2x2 matrix")
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    return chol


def sample_mixture(spec: GaussianMixtureSpec) -> list[Example]:
    """Draw 2*n_per_class points, class 0 first; deterministic per seed.

    Sampling goes through the Cholesky factor L of each covariance, so
    L @ L.T reconstructs the requested covariance exactly.
    """
    if spec.n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    l1 = _cholesky_2x2(spec.sigma1, "sigma1")
    l2 = _cholesky_2x2(spec.sigma2, "sigma2")
    rng = np.random.default_rng(spec.seed)
    z1 = rng.standard_normal((spec.n_per_class, 2))
    z2 = rng.standard_normal((spec.n_per_class, 2))
    pts1 = np.asarray(spec.mu1) + z1 @ l1.T
    pts2 = np.asarray(spec.mu2) + z2 @ l2.T
    examples = [
        Example(id=f"s{i}", label=0, point=pts1[i]) for i in range(spec.n_per_class)
    ]
    examples += [
        Example(id=f"s{spec.n_per_class + i}", label=1, point=pts2[i])
        for i in range(spec.n_per_class)
    ]
    return examples
