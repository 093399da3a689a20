"""Classifier architectures and checkpoints.

Two model kinds are supported: a small MLP over 2-d points and a
convolutional text classifier (parallel filter widths, ReLU,
max-over-time pooling, dropout, single linear output) over frozen
pretrained word embeddings.  Embeddings are not parameters: they stay
fixed during training so per-example difficulty scores live in the same
input space across checkpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .autograd import Graph, Node, as_tensor, forward

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

CHECKPOINT_MAGIC = "fisherprobe-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, mismatched or malformed checkpoint file."""


@dataclass
class EmbeddingTable:
    """Frozen token -> row-index -> vector lookup.

    The matrix carries two extra rows after the loaded vocabulary: PAD
    (all zeros) and UNK (mean of all loaded rows).
    """

    dim: int
    vocab: dict[str, int]
    matrix: np.ndarray
    pad_index: int
    unk_index: int
    source_hash: str | None = None

    def __post_init__(self):
        if self.matrix.shape != (len(self.vocab) + 2, self.dim):
            raise ValueError(
                f"embedding matrix shape {self.matrix.shape} inconsistent with "
                f"vocab of {len(self.vocab)} tokens and dim {self.dim}"
            )
        if np.any(self.matrix[self.pad_index] != 0.0):
            raise ValueError("PAD row must be exactly zero")

    @classmethod
    def from_arrays(cls, tokens: list[str], matrix: np.ndarray, source_hash=None):
        """Build a table from loaded rows, appending PAD and UNK."""
        matrix = as_tensor(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != len(tokens):
            raise ValueError("one matrix row per token required")
        if len(tokens) != len(set(tokens)):
            raise ValueError("duplicate tokens in embedding rows")
        dim = matrix.shape[1]
        pad = np.zeros((1, dim))
        unk = matrix.mean(axis=0, keepdims=True)
        full = np.concatenate([matrix, pad, unk], axis=0)
        vocab = {tok: i for i, tok in enumerate(tokens)}
        return cls(
            dim=dim,
            vocab=vocab,
            matrix=full,
            pad_index=len(tokens),
            unk_index=len(tokens) + 1,
            source_hash=source_hash,
        )

    def token_id(self, token) -> int:
        """Row index for a token string (UNK for OOV) or a raw index."""
        if isinstance(token, (int, np.integer)):
            idx = int(token)
            if not 0 <= idx < self.matrix.shape[0]:
                raise IndexError(f"token index {idx} out of range")
            return idx
        if token == PAD_TOKEN:
            return self.pad_index
        return self.vocab.get(token, self.unk_index)


def embed(tokens, table: EmbeddingTable) -> np.ndarray:
    """Look up an n x d matrix for a token sequence (strings or indices)."""
    if len(tokens) == 0:
        raise ValueError("cannot embed an empty token sequence")
    ids = [table.token_id(t) for t in tokens]
    return table.matrix[ids].copy()


@dataclass(frozen=True)
class ModelSpec:
    """Architecture descriptor for the two supported model kinds.

    mlp: ``layer_widths`` lists every layer size, input through output.
    textcnn: conv filters of each width in ``filter_widths``, ReLU,
    max-over-time pooling, dropout before the output layer; inputs are
    ``max_len`` x ``embedding_dim`` embedded sentences.
    """

    kind: str
    num_classes: int = 2
    layer_widths: tuple[int, ...] | None = None
    nonlinearity: str = "tanh"
    filter_widths: tuple[int, ...] = (3, 4, 5)
    filters_per_width: int = 100
    dropout: float = 0.5
    embedding_dim: int | None = None
    max_len: int = 400

    def __post_init__(self):
        if self.kind not in ("mlp", "textcnn"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind == "mlp":
            if not self.layer_widths or len(self.layer_widths) < 2:
                raise ValueError("mlp needs at least input and output widths")
            if any(w < 1 for w in self.layer_widths):
                raise ValueError("layer widths must be positive")
            if self.layer_widths[-1] != self.num_classes:
                raise ValueError("last mlp layer width must equal num_classes")
            if self.nonlinearity not in ("tanh", "relu"):
                raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        else:
            if not self.embedding_dim or self.embedding_dim < 1:
                raise ValueError("textcnn needs a positive embedding_dim")
            if not self.filter_widths or any(w < 1 for w in self.filter_widths):
                raise ValueError("filter widths must be positive")
            if len(set(self.filter_widths)) != len(self.filter_widths):
                raise ValueError("filter widths must be distinct")
            if max(self.filter_widths) > self.max_len:
                raise ValueError("filter widths must not exceed max_len")
            if self.filters_per_width < 1:
                raise ValueError("filters_per_width must be positive")
            if not 0.0 <= self.dropout < 1.0:
                raise ValueError("dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_widths"] = list(self.layer_widths) if self.layer_widths else None
        d["filter_widths"] = list(self.filter_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        if d.get("layer_widths") is not None:
            d["layer_widths"] = tuple(d["layer_widths"])
        if d.get("filter_widths") is not None:
            d["filter_widths"] = tuple(d["filter_widths"])
        return cls(**d)


@dataclass
class Model:
    """A trained (or freshly initialized) differentiable classifier."""

    spec: ModelSpec
    graph: Graph
    params: dict[str, np.ndarray]
    embeddings: EmbeddingTable | None = None
    vocab_hash: str | None = None

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    def logprobs(self, x) -> np.ndarray:
        return forward(self.graph, x, self.params)


def mlp_graph(widths: tuple[int, ...], nonlinearity: str = "tanh") -> Graph:
    params: dict[str, tuple[int, ...]] = {}
    nodes: list[Node] = []
    prev = "x"
    last = len(widths) - 2
    for i in range(len(widths) - 1):
        params[f"w{i}"] = (widths[i], widths[i + 1])
        params[f"b{i}"] = (widths[i + 1],)
        nodes.append(Node(f"lin{i}", "matmul", (prev, f"w{i}")))
        nodes.append(Node(f"pre{i}", "add", (f"lin{i}", f"b{i}")))
        prev = f"pre{i}"
        if i < last:
            nodes.append(Node(f"act{i}", nonlinearity, (prev,)))
            prev = f"act{i}"
    nodes.append(Node("logp", "log_softmax", (prev,)))
    return Graph(input_shape=(widths[0],), param_shapes=params, nodes=tuple(nodes))


def textcnn_graph(spec: ModelSpec) -> Graph:
    d, nf = spec.embedding_dim, spec.filters_per_width
    params: dict[str, tuple[int, ...]] = {}
    nodes: list[Node] = []
    pools = []
    for w in spec.filter_widths:
        params[f"conv{w}_w"] = (w, d, nf)
        params[f"conv{w}_b"] = (nf,)
        nodes.append(Node(f"conv{w}", "conv1d", ("x", f"conv{w}_w")))
        nodes.append(Node(f"conv{w}_pre", "add", (f"conv{w}", f"conv{w}_b")))
        nodes.append(Node(f"conv{w}_act", "relu", (f"conv{w}_pre",)))
        nodes.append(Node(f"pool{w}", "max_over_time", (f"conv{w}_act",)))
        pools.append(f"pool{w}")
    total = nf * len(spec.filter_widths)
    params["out_w"] = (total, spec.num_classes)
    params["out_b"] = (spec.num_classes,)
    nodes.append(Node("features", "concat", tuple(pools)))
    nodes.append(Node("drop", "dropout", ("features",), rate=spec.dropout))
    nodes.append(Node("logits", "matmul", ("drop", "out_w")))
    nodes.append(Node("logits_b", "add", ("logits", "out_b")))
    nodes.append(Node("logp", "log_softmax", ("logits_b",)))
    return Graph(input_shape=(None, d), param_shapes=params, nodes=tuple(nodes))


def build_graph(spec: ModelSpec) -> Graph:
    if spec.kind == "mlp":
        return mlp_graph(tuple(spec.layer_widths), spec.nonlinearity)
    return textcnn_graph(spec)


def init_params(graph: Graph, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases; bit-reproducible per seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in graph.param_shapes.items():
        if len(shape) == 1:
            params[name] = np.zeros(shape, dtype=np.float64)
            continue
        if len(shape) == 2:
            fan_in, fan_out = shape
        else:  # conv filters (w, d, F)
            fan_in, fan_out = shape[0] * shape[1], shape[2]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    return params


def build_model(spec: ModelSpec, seed: int, embeddings: EmbeddingTable | None = None) -> Model:
    """Deterministically initialize a model; same seed, same bytes."""
    if spec.kind == "textcnn" and embeddings is not None:
        if embeddings.dim != spec.embedding_dim:
            raise ValueError(
                f"embedding dim {embeddings.dim} != spec dim {spec.embedding_dim}"
            )
    graph = build_graph(spec)
    params = init_params(graph, seed)
    vocab_hash = embeddings.source_hash if embeddings is not None else None
    return Model(spec=spec, graph=graph, params=params,
                 embeddings=embeddings, vocab_hash=vocab_hash)


def param_count(model: Model) -> int:
    return sum(p.size for p in model.params.values())


# ---------------------------------------------------------------------------
# checkpoint container: versioned JSON with a magic header and row-major
# float64 parameter payloads (layout documented in README)


def save_checkpoint(model: Model, path) -> None:
    payload = {
        "format": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "spec": model.spec.to_dict(),
        "vocab_hash": model.vocab_hash,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in model.params.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path, embeddings: EmbeddingTable | None = None) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if payload.get("format") != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a {CHECKPOINT_MAGIC} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    spec = ModelSpec.from_dict(payload["spec"])
    graph = build_graph(spec)
    params: dict[str, np.ndarray] = {}
    for name, shape in graph.param_shapes.items():
        if name not in payload["params"]:
            raise CheckpointError(f"checkpoint missing parameter {name!r}")
        entry = payload["params"][name]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if tuple(arr.shape) != tuple(shape):
            raise CheckpointError(f"parameter {name!r} has wrong shape {arr.shape}")
        params[name] = arr
    vocab_hash = payload.get("vocab_hash")
    if embeddings is not None and vocab_hash is not None:
        if embeddings.source_hash != vocab_hash:
            raise CheckpointError(
                "embedding file does not match the one used at training time "
                f"(hash {embeddings.source_hash} != {vocab_hash})"
            )
    return Model(spec=spec, graph=graph, params=params,
                 embeddings=embeddings, vocab_hash=vocab_hash)
