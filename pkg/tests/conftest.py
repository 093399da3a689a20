"""Shared fixtures and independent numerical oracles.

The oracles here (central finite differences, dense-matrix eigensolver,
closed-form logistic gradients) deliberately avoid the library's own
backward pass and Jacobi solver so every check is dual-route.
"""

import numpy as np
import pytest

from fisherprobe.autograd import LOG_EPS, forward
from fisherprobe.models import EmbeddingTable, ModelSpec, build_model


# ---------------------------------------------------------------------------
# finite-difference oracles (forward evaluations only)


def fd_grad_input(graph, x, params, output_index, h=1e-5):
    """Central-difference gradient of log p(output_index) w.r.t. x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    xf = x.reshape(-1)
    for i in range(xf.size):
        orig = xf[i]
        xf[i] = orig + h
        hi = forward(graph, x, params)[output_index]
        xf[i] = orig - h
        lo = forward(graph, x, params)[output_index]
        xf[i] = orig
        flat[i] = (hi - lo) / (2 * h)
    return grad


def _mean_ce(graph, batch, labels, params):
    logp = forward(graph, batch, params)
    picked = np.maximum(logp[np.arange(len(labels)), labels], LOG_EPS)
    return float(-picked.mean())


def fd_grad_params(graph, batch, labels, params, h=1e-5):
    """Central-difference gradient of mean cross-entropy per param scalar."""
    grads = {}
    for name, p in params.items():
        g = np.zeros_like(p)
        pf = p.reshape(-1)
        gf = g.reshape(-1)
        for i in range(pf.size):
            orig = pf[i]
            pf[i] = orig + h
            hi = _mean_ce(graph, batch, labels, params)
            pf[i] = orig - h
            lo = _mean_ce(graph, batch, labels, params)
            pf[i] = orig
            gf[i] = (hi - lo) / (2 * h)
        grads[name] = g
    return grads


def rel_err(got, want):
    got = np.asarray(got, dtype=np.float64).ravel()
    want = np.asarray(want, dtype=np.float64).ravel()
    return float(np.linalg.norm(got - want) / (np.linalg.norm(want) + 1e-12))


# ---------------------------------------------------------------------------
# random model zoo


def random_mlp(rng, in_dim=None, num_classes=None, nonlinearity=None):
    in_dim = in_dim or int(rng.integers(2, 7))
    hidden = int(rng.integers(3, 9))
    num_classes = num_classes or int(rng.integers(2, 5))
    nonlinearity = nonlinearity or ("tanh" if rng.random() < 0.5 else "relu")
    spec = ModelSpec(kind="mlp", layer_widths=(in_dim, hidden, num_classes),
                     num_classes=num_classes, nonlinearity=nonlinearity)
    model = build_model(spec, seed=int(rng.integers(0, 2**31)))
    for k in model.params:
        model.params[k] = rng.normal(0.0, 0.6, size=model.params[k].shape)
    return model


def tiny_table(rng, vocab_size=12, dim=4):
    tokens = [f"w{i}" for i in range(vocab_size)]
    matrix = rng.normal(0.0, 1.0, size=(vocab_size, dim))
    return EmbeddingTable.from_arrays(tokens, matrix)


def random_textcnn(rng, dim=4, max_len=7, num_classes=2, dropout=0.0):
    table = tiny_table(rng, dim=dim)
    spec = ModelSpec(kind="textcnn", num_classes=num_classes, embedding_dim=dim,
                     filter_widths=(2, 3), filters_per_width=3, dropout=dropout,
                     max_len=max_len)
    model = build_model(spec, seed=int(rng.integers(0, 2**31)), embeddings=table)
    for k in model.params:
        model.params[k] = rng.normal(0.0, 0.6, size=model.params[k].shape)
    return model


def fresh_textcnn(rng, dim=8, max_len=12, filters=10, widths=(2, 3)):
    """Freshly initialized text CNN (Glorot weights, zero biases)."""
    table = tiny_table(rng, dim=dim)
    spec = ModelSpec(kind="textcnn", num_classes=2, embedding_dim=dim,
                     filter_widths=widths, filters_per_width=filters,
                     dropout=0.5, max_len=max_len)
    return build_model(spec, seed=int(rng.integers(0, 2**31)), embeddings=table)


def random_model(rng):
    if rng.random() < 0.5:
        return random_mlp(rng)
    return random_textcnn(rng, num_classes=int(rng.integers(2, 4)))


def random_input_for(model, rng):
    if model.spec.kind == "mlp":
        return rng.normal(0.0, 1.0, size=model.graph.input_shape)
    n = int(rng.integers(max(model.spec.filter_widths), model.spec.max_len + 1))
    return rng.normal(0.0, 1.0, size=(n, model.spec.embedding_dim))


# ---------------------------------------------------------------------------
# closed-form logistic model: logits (w.x + b, 0)


def logistic_model(w, b=0.0):
    w = np.asarray(w, dtype=np.float64)
    spec = ModelSpec(kind="mlp", layer_widths=(w.size, 2), num_classes=2)
    model = build_model(spec, seed=0)
    model.params["w0"] = np.stack([w, np.zeros_like(w)], axis=1)
    model.params["b0"] = np.array([float(b), 0.0])
    return model


def dense_fim(jac):
    """Explicitly assembled D x D metric (test-side oracle)."""
    return jac.J.T @ (jac.p[:, None] * jac.J)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
