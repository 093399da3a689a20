"""Minimal reverse-mode differentiation over dense float64 arrays.

A Graph is a static description of a small feed-forward classifier: a
topologically ordered tuple of primitive ops ending in a log-softmax over
class logits.  One interpreter handles forward evaluation and
vector-Jacobian products, so input gradients (identity seed, one row per
class) and parameter gradients (cross-entropy seed) share a single code
path.

Conventions:
  * every value is a float64 ndarray; NaN/Inf anywhere is an error
  * per-example shapes are declared on the graph; any *leading* axes of
    the actual input are treated as batch axes by every op
  * gradient seeds may carry extra leading axes beyond the batch axes
    (e.g. one per output class); they broadcast through the backward
    rules, which is how the full input Jacobian is taken in one pass
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Floor for emitted log-probabilities; keeps -log p and KL terms finite
# at saturated predictions.  One ulp below log(1e-12) so the clamped
# probability itself stays <= 1e-12 after exponentiation.
P_EPS = 1e-12
LOG_EPS = float(np.nextafter(np.log(P_EPS), -np.inf))

INPUT = "x"  # reserved name for the graph input

OPS = (
    "matmul",
    "add",
    "relu",
    "tanh",
    "conv1d",
    "max_over_time",
    "concat",
    "dropout",
    "log_softmax",
)


class GraphError(ValueError):
    """Graph construction or shape-consistency failure."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in an exposed computation."""


def as_tensor(x) -> np.ndarray:
    """Coerce to a float64 array, rejecting non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class Node:
    """One primitive op.  ``inputs`` name earlier nodes, params, or 'x'."""

    name: str
    op: str
    inputs: tuple[str, ...]
    rate: float = 0.0  # dropout only


@dataclass(frozen=True)
class Graph:
    """Immutable op list with declared per-example input shape.

    ``input_shape`` may use None for a variable leading (time) axis.
    ``param_shapes`` fixes the name, order and shape of every parameter.
    The last node is the output and must be a log_softmax of shape [C].
    """

    input_shape: tuple
    param_shapes: dict[str, tuple[int, ...]]
    nodes: tuple[Node, ...] = field(default_factory=tuple)

    def __post_init__(self):
        shapes = _infer_shapes(self)
        out = shapes[self.nodes[-1].name]
        if self.nodes[-1].op != "log_softmax" or len(out) != 1:
            raise GraphError("graph must end in a log_softmax node of shape [C]")

    @property
    def num_classes(self) -> int:
        return _infer_shapes(self)[self.nodes[-1].name][0]

    @property
    def output(self) -> str:
        return self.nodes[-1].name


def _shape_match(actual: tuple, declared: tuple) -> bool:
    if len(actual) != len(declared):
        return False
    return all(d is None or a == d for a, d in zip(actual, declared))


def _infer_shapes(graph: Graph) -> dict[str, tuple]:
    """Validate the graph and return per-example shapes for every name."""
    shapes: dict[str, tuple] = {INPUT: tuple(graph.input_shape)}
    for pname, pshape in graph.param_shapes.items():
        if pname == INPUT or pname in shapes:
            raise GraphError(f"parameter name {pname!r} collides")
        shapes[pname] = tuple(pshape)
    for node in graph.nodes:
        if node.name in shapes:
            raise GraphError(f"duplicate node name {node.name!r}")
        if node.op not in OPS:
            raise GraphError(f"unknown op {node.op!r}")
        for ref in node.inputs:
            if ref not in shapes:
                raise GraphError(
                    f"node {node.name!r} references undefined input {ref!r}"
                )
        ins = [shapes[ref] for ref in node.inputs]
        shapes[node.name] = _op_shape(node, ins)
    return shapes


def _op_shape(node: Node, ins: list[tuple]) -> tuple:
    op = node.op
    if op == "matmul":
        (xs, ws) = ins
        if len(xs) != 1 or len(ws) != 2 or xs[0] != ws[0]:
            raise GraphError(f"matmul shape mismatch at {node.name!r}: {xs} @ {ws}")
        return (ws[1],)
    if op == "add":
        (a, b) = ins
        if a[len(a) - len(b):] != b:
            raise GraphError(f"add shape mismatch at {node.name!r}: {a} + {b}")
        return a
    if op in ("relu", "tanh", "dropout"):
        return ins[0]
    if op == "conv1d":
        (xs, ws) = ins
        if len(xs) != 2 or len(ws) != 3 or xs[1] != ws[1]:
            raise GraphError(f"conv1d shape mismatch at {node.name!r}: {xs}, {ws}")
        n, w = xs[0], ws[0]
        if n is not None and n < w:
            raise GraphError(f"conv1d filter width {w} exceeds input length {n}")
        return (None if n is None else n - w + 1, ws[2])
    if op == "max_over_time":
        (xs,) = ins
        if len(xs) != 2:
            raise GraphError(f"max_over_time expects a 2-d input at {node.name!r}")
        return (xs[1],)
    if op == "concat":
        if any(len(s) != 1 for s in ins):
            raise GraphError(f"concat expects vector inputs at {node.name!r}")
        return (sum(s[0] for s in ins),)
    if op == "log_softmax":
        (xs,) = ins
        if len(xs) != 1:
            raise GraphError(f"log_softmax expects a vector at {node.name!r}")
        return xs
    raise GraphError(f"unknown op {op!r}")


def check_params(graph: Graph, params: dict[str, np.ndarray]) -> None:
    missing = set(graph.param_shapes) - set(params)
    extra = set(params) - set(graph.param_shapes)
    if missing or extra:
        raise GraphError(f"param set mismatch: missing={missing} extra={extra}")
    for name, shape in graph.param_shapes.items():
        if tuple(params[name].shape) != tuple(shape):
            raise GraphError(
                f"param {name!r} has shape {params[name].shape}, want {shape}"
            )


# ---------------------------------------------------------------------------
# forward


def _im2col(x: np.ndarray, w: int) -> np.ndarray:
    """(..., n, d) -> (..., n-w+1, w*d) sliding windows."""
    win = np.lib.stride_tricks.sliding_window_view(x, w, axis=-2)
    # sliding_window_view appends the window axis: (..., L, d, w)
    win = np.swapaxes(win, -1, -2)  # (..., L, w, d)
    return win.reshape(win.shape[:-2] + (-1,))


def _eval(node: Node, vals: list[np.ndarray], dropout_rng) -> tuple[np.ndarray, dict]:
    """Evaluate one node; returns (value, cache-for-backward)."""
    op = node.op
    if op == "matmul":
        x, w = vals
        return x @ w, {}
    if op == "add":
        a, b = vals
        return a + b, {}
    if op == "relu":
        return np.maximum(vals[0], 0.0), {}
    if op == "tanh":
        return np.tanh(vals[0]), {}
    if op == "conv1d":
        x, w = vals
        if x.shape[-2] < w.shape[0]:
            raise GraphError(
                f"conv1d input length {x.shape[-2]} below filter width {w.shape[0]}"
            )
        cols = _im2col(x, w.shape[0])
        wmat = w.reshape(-1, w.shape[2])
        return cols @ wmat, {"cols": cols}
    if op == "max_over_time":
        x = vals[0]
        idx = np.argmax(x, axis=-2)
        return np.take_along_axis(x, idx[..., None, :], axis=-2)[..., 0, :], {"idx": idx}
    if op == "concat":
        return np.concatenate(vals, axis=-1), {"widths": [v.shape[-1] for v in vals]}
    if op == "dropout":
        x = vals[0]
        if dropout_rng is None or node.rate == 0.0:
            return x, {"mask": None}
        keep = dropout_rng.random(x.shape) >= node.rate
        mask = keep / (1.0 - node.rate)
        return x * mask, {"mask": mask}
    if op == "log_softmax":
        z = vals[0]
        s = z - z.max(axis=-1, keepdims=True)
        logp = s - np.log(np.exp(s).sum(axis=-1, keepdims=True))
        out = np.maximum(logp, LOG_EPS)
        return out, {"p": np.exp(logp), "open": logp > LOG_EPS}
    raise GraphError(f"unknown op {op!r}")


def forward_cache(
    graph: Graph,
    x: np.ndarray,
    params: dict[str, np.ndarray],
    dropout_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Evaluate the graph; returns (log-probs, cache for backward).

    ``x`` may carry leading batch axes before the declared input shape.
    Dropout is active only when ``dropout_rng`` is given (training).
    """
    check_params(graph, params)
    x = np.asarray(x, dtype=np.float64)
    decl = tuple(graph.input_shape)
    if x.ndim < len(decl) or not _shape_match(x.shape[x.ndim - len(decl):], decl):
        raise GraphError(f"input shape {x.shape} does not end in {decl}")
    values: dict[str, np.ndarray] = {INPUT: x}
    for name, p in params.items():
        values[name] = np.asarray(p, dtype=np.float64)
    op_cache: dict[str, dict] = {}
    for node in graph.nodes:
        vals = [values[ref] for ref in node.inputs]
        out, cache = _eval(node, vals, dropout_rng)
        if not np.all(np.isfinite(out)):
            raise NonFiniteError(f"non-finite value at node {node.name!r}")
        values[node.name] = out
        op_cache[node.name] = cache
    return values[graph.output], {"values": values, "ops": op_cache}


def forward(graph: Graph, x, params: dict[str, np.ndarray]) -> np.ndarray:
    """Log-probability vector (last axis C); exp of entries sums to 1."""
    out, _ = forward_cache(graph, x, params)
    return out


# ---------------------------------------------------------------------------
# backward


def _sum_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    for ax, s in enumerate(shape):
        if s == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _outer_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum outer products of the last axes of a and b over all leading
    axes, broadcasting those first; returns (a_last, b_last)."""
    lead = np.broadcast_shapes(a.shape[:-1], b.shape[:-1])
    am = np.broadcast_to(a, lead + a.shape[-1:]).reshape(-1, a.shape[-1])
    bm = np.broadcast_to(b, lead + b.shape[-1:]).reshape(-1, b.shape[-1])
    return np.tensordot(am, bm, axes=(0, 0))


def _vjp(node: Node, g: np.ndarray, vals: list[np.ndarray], out: np.ndarray, cache: dict):
    """Per-op gradient contributions, one per input ref."""
    op = node.op
    if op == "matmul":
        x, w = vals
        return [g @ w.T, _outer_sum(x, g)]
    if op == "add":
        return [g, g]
    if op == "relu":
        return [g * (out > 0.0)]
    if op == "tanh":
        return [g * (1.0 - out * out)]
    if op == "conv1d":
        x, w = vals
        cols, wmat = cache["cols"], w.reshape(-1, w.shape[2])
        gc = (g @ wmat.T).reshape(g.shape[:-1] + (w.shape[0], w.shape[1]))
        lead = np.broadcast_shapes(gc.shape[: gc.ndim - 3], x.shape[: x.ndim - 2])
        gx = np.zeros(lead + x.shape[-2:], dtype=np.float64)
        length = gc.shape[-3]
        for t in range(w.shape[0]):
            gx[..., t : t + length, :] += gc[..., :, t, :]
        gw = _outer_sum(cols, g).reshape(w.shape)
        return [gx, gw]
    if op == "max_over_time":
        x = vals[0]
        idx = cache["idx"][..., None, :]  # (batch..., 1, F)
        gexp = g[..., None, :]
        lead = np.broadcast_shapes(gexp.shape[: gexp.ndim - 2], x.shape[: x.ndim - 2])
        gx = np.zeros(lead + x.shape[-2:], dtype=np.float64)
        np.put_along_axis(gx, np.broadcast_to(idx, gexp.shape), gexp, axis=-2)
        return [gx]
    if op == "concat":
        splits = np.cumsum(cache["widths"][:-1])
        return list(np.split(g, splits, axis=-1))
    if op == "dropout":
        mask = cache["mask"]
        return [g if mask is None else g * mask]
    if op == "log_softmax":
        gm = g * cache["open"]
        return [gm - cache["p"] * gm.sum(axis=-1, keepdims=True)]
    raise GraphError(f"unknown op {op!r}")


def backward(
    graph: Graph,
    cache: dict,
    seed: np.ndarray,
    want_input: bool = True,
    want_params: bool = False,
) -> tuple[np.ndarray | None, dict[str, np.ndarray] | None]:
    """Vector-Jacobian product through the cached forward pass.

    ``seed`` has shape extra_axes + batch_axes + (C,).  The input gradient
    keeps all leading axes of the seed; parameter gradients are summed
    down to each parameter's shape.
    """
    values, ops = cache["values"], cache["ops"]
    grads: dict[str, np.ndarray] = {graph.output: np.asarray(seed, dtype=np.float64)}
    gparams: dict[str, np.ndarray] = {}
    param_shapes = graph.param_shapes
    for node in reversed(graph.nodes):
        g = grads.pop(node.name, None)
        if g is None:
            continue
        vals = [values[ref] for ref in node.inputs]
        contribs = _vjp(node, g, vals, values[node.name], ops[node.name])
        for ref, contrib in zip(node.inputs, contribs):
            if ref in param_shapes:
                if not want_params:
                    continue
                contrib = _sum_to(contrib, param_shapes[ref])
                if ref in gparams:
                    gparams[ref] = gparams[ref] + contrib
                else:
                    gparams[ref] = contrib
            else:
                if ref in grads:
                    grads[ref] = grads[ref] + contrib
                else:
                    grads[ref] = contrib
    gx = None
    if want_input:
        gx = grads.get(INPUT)
        if gx is None:
            gx = np.zeros_like(values[INPUT])
        if not np.all(np.isfinite(gx)):
            raise NonFiniteError("non-finite input gradient")
    if want_params:
        for name, shape in param_shapes.items():
            if name not in gparams:
                gparams[name] = np.zeros(shape, dtype=np.float64)
            elif not np.all(np.isfinite(gparams[name])):
                raise NonFiniteError(f"non-finite gradient for param {name!r}")
        return gx, gparams
    return gx, None


def grad_input(graph: Graph, x, params: dict[str, np.ndarray], output_index: int) -> np.ndarray:
    """d log p(y=output_index | x) / dx, same shape as ``x``."""
    C = graph.num_classes
    if not 0 <= output_index < C:
        raise IndexError(f"class index {output_index} out of range for C={C}")
    out, cache = forward_cache(graph, x, params)
    seed = np.zeros(out.shape, dtype=np.float64)
    seed[..., output_index] = 1.0
    gx, _ = backward(graph, cache, seed)
    return gx


def grad_params(
    graph: Graph,
    batch: np.ndarray,
    labels,
    params: dict[str, np.ndarray],
    dropout_rng: np.random.Generator | None = None,
) -> dict[str, np.ndarray]:
    """Gradient of mean cross-entropy over the batch w.r.t. every param."""
    batch = np.asarray(batch, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if batch.ndim != len(graph.input_shape) + 1 or labels.ndim != 1:
        raise GraphError("grad_params expects one leading batch axis")
    if batch.shape[0] == 0:
        raise GraphError("empty batch")
    C = graph.num_classes
    if labels.min() < 0 or labels.max() >= C:
        raise IndexError(f"label out of range for C={C}")
    out, cache = forward_cache(graph, batch, params, dropout_rng=dropout_rng)
    seed = np.zeros(out.shape, dtype=np.float64)
    seed[np.arange(batch.shape[0]), labels] = -1.0 / batch.shape[0]
    _, gparams = backward(graph, cache, seed, want_input=False, want_params=True)
    return gparams
