"""Per-example difficulty via the input-space Fisher information metric.

For a classifier p(y|x) the metric G = sum_y p_y grad log p_y grad log
p_y^T is the second-order coefficient of KL(p(.|x) || p(.|x+eta)) under a
small input perturbation eta.  Its largest eigenvalue measures how hard
the output distribution can be pushed by a unit perturbation, i.e. how
close the example sits to the decision boundary.

Because the expected score is zero, G has rank at most C-1, so its
nonzero spectrum is read off the C x C Gram matrix
M = diag(sqrt(p)) J J^T diag(sqrt(p)) instead of the D x D metric.
Eigen-decomposition of M uses cyclic Jacobi rotations; no external
linear-algebra routine is involved on this path.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autograd import as_tensor, backward, forward_cache
from .data import Example, tokenize
from .models import Model, PAD_TOKEN, embed

log = logging.getLogger(__name__)

# eigenvalues of a PSD metric may round slightly negative; anything beyond
# this is a numerical failure, anything inside is clamped to zero
EIG_FLOOR = -1e-8


class EigenSolverError(RuntimeError):
    """Jacobi sweep cap exceeded before off-diagonal convergence."""


@dataclass
class LogProbJacobian:
    """Rows of d(log p_y)/dx over the flattened input, plus class probs.

    ``mask`` marks input coordinates that belong to real content; PAD
    coordinates are zeroed and excluded so padding never contributes a
    perturbation direction.
    """

    J: np.ndarray  # (C, D)
    p: np.ndarray  # (C,)
    mask: np.ndarray  # (D,) bool

    def __post_init__(self):
        if self.J.ndim != 2 or self.p.ndim != 1 or self.J.shape[0] != self.p.shape[0]:
            raise ValueError("Jacobian/probability shape mismatch")
        if self.mask.shape != (self.J.shape[1],):
            raise ValueError("mask length must match flattened input size")


@dataclass
class FimResult:
    """Spectrum summary for one example; lambda_max is the difficulty."""

    lambda_max: float
    eigenvalues: list[float]  # descending, clamped at 0
    top_eigenvector: np.ndarray | None  # unit norm, None when spectrum is empty
    example_id: str | None = None
    probs: list[float] = field(default_factory=list)
    prediction: int = 0
    label: int | None = None
    n_tokens: int | None = None

    def to_record(self) -> dict:
        """Plain-JSON row for scored output (one scoring path for CLI and
        HTTP: both emit exactly this)."""
        rec = {
            "id": self.example_id,
            "label": self.label,
            "prediction": int(self.prediction),
            "probs": [float(p) for p in self.probs],
            "lambda_max": float(self.lambda_max),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "n_tokens": self.n_tokens,
        }
        if self.n_tokens:
            rec["lambda_per_token"] = float(self.lambda_max) / self.n_tokens
        return rec


def jacobi_eigh(m: np.ndarray, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
    rotations.

    Returns (eigenvalues, eigenvectors-as-columns), unsorted.  Converges
    when the off-diagonal Frobenius norm drops below 1e-12 (scaled by the
    matrix norm when that norm exceeds 1); raises EigenSolverError at the
    sweep cap.
    """
    a = np.array(m, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise ValueError("jacobi_eigh needs a symmetric square matrix")
    v = np.eye(n)
    if n == 1:
        return np.array([a[0, 0]]), v
    tol = 1e-12 * max(1.0, float(np.linalg.norm(a)))

    def offdiag(mat):
        off = mat - np.diag(np.diag(mat))
        return float(np.linalg.norm(off))

    for _ in range(max_sweeps):
        if offdiag(a) < tol:
            return np.diag(a).copy(), v
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < tol / (n * n):
                    continue
                # rotation angle zeroing a[p, q]
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p, rot_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * rot_p - s * rot_q
                a[:, q] = s * rot_p + c * rot_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if offdiag(a) < tol:
        return np.diag(a).copy(), v
    raise EigenSolverError(
        f"Jacobi solver did not converge in {max_sweeps} sweeps "
        f"(off-diagonal norm {offdiag(a):.3e}, tol {tol:.3e})"
    )


def encode_example(model: Model, example: Example):
    """Model input for an example: (x, coordinate mask, n_tokens, tokens).

    Text is tokenized, truncated to the model's max length and padded up
    to it, so every code path (training batches, CLI scoring, HTTP
    scoring) sees identical activations for the same sentence.
    """
    if model.spec.kind == "mlp":
        if example.point is None:
            raise ValueError(f"example {example.id!r} has no point for an mlp model")
        x = np.asarray(example.point, dtype=np.float64)
        return x, np.ones(x.size, dtype=bool), None, None
    if example.text is None:
        raise ValueError(f"example {example.id!r} has no text for a text model")
    if model.embeddings is None:
        raise ValueError("text model has no embedding table attached")
    tokens = tokenize(example.text)[: model.spec.max_len]
    if not tokens:
        raise ValueError(f"example {example.id!r} tokenizes to nothing")
    n_real = len(tokens)
    padded = tokens + [PAD_TOKEN] * (model.spec.max_len - n_real)
    x = embed(padded, model.embeddings)
    mask = np.zeros(x.shape, dtype=bool)
    mask[:n_real, :] = True
    return x, mask.ravel(), n_real, tokens


def jacobian(model: Model, x: np.ndarray, mask: np.ndarray | None = None) -> LogProbJacobian:
    """All C rows of d(log p_y)/dx at one input, PAD coordinates zeroed."""
    x = np.asarray(x, dtype=np.float64)
    out, cache = forward_cache(model.graph, x, model.params)
    c = out.shape[-1]
    seed = np.eye(c)  # leading class axis broadcasts through the backward pass
    gx, _ = backward(model.graph, cache, seed)
    j = gx.reshape(c, -1)
    p = np.exp(out)
    if mask is None:
        mask = np.ones(j.shape[1], dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool).ravel()
        j = np.where(mask, j, 0.0)
    return LogProbJacobian(J=j, p=p, mask=mask)


def fim_spectrum(jac: LogProbJacobian, want_all_vectors: bool = False):
    """Spectrum of G = J^T diag(p) J via the C x C Gram matrix.

    The top eigenvector is reconstructed in input space from the Gram
    eigenpair and sign-fixed (largest-magnitude coordinate positive).
    With ``want_all_vectors`` returns (FimResult, eigenvectors) where
    column i pairs with eigenvalue i (zero columns for null directions).
    """
    sqrt_p = np.sqrt(jac.p)
    a = sqrt_p[:, None] * jac.J
    gram = a @ a.T
    eigvals, eigvecs = jacobi_eigh(gram)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    clamped = [float(max(v, 0.0)) for v in eigvals]
    lam = clamped[0] if clamped else 0.0

    def input_vector(i: int) -> np.ndarray | None:
        raw = jac.J.T @ (sqrt_p * eigvecs[:, i])
        norm = np.linalg.norm(raw)
        if norm == 0.0 or clamped[i] <= 0.0:
            return None
        vec = raw / norm
        anchor = np.argmax(np.abs(vec))
        if vec[anchor] < 0:
            vec = -vec
        return vec

    top = input_vector(0) if clamped and clamped[0] > 0.0 else None
    result = FimResult(
        lambda_max=lam,
        eigenvalues=clamped,
        top_eigenvector=top,
        probs=[float(p) for p in jac.p],
        prediction=int(np.argmax(jac.p)),
    )
    if want_all_vectors:
        d = jac.J.shape[1]
        cols = []
        for i in range(len(clamped)):
            vec = input_vector(i)
            cols.append(vec if vec is not None else np.zeros(d))
        return result, np.stack(cols, axis=1)
    return result


def lambda_max(model: Model, example: Example) -> FimResult:
    """Difficulty score for one example: encode, Jacobian, top eigenvalue."""
    x, mask, n_tokens, _ = encode_example(model, example)
    jac = jacobian(model, x, mask)
    result = fim_spectrum(jac)
    result.example_id = example.id
    result.label = example.label
    result.n_tokens = n_tokens
    return result


def fim_quadratic_form(jac: LogProbJacobian, eta: np.ndarray) -> float:
    """eta^T G eta = sum_y p_y (J[y] . eta)^2 without assembling G."""
    proj = jac.J @ np.asarray(eta, dtype=np.float64).ravel()
    return float(np.sum(jac.p * proj * proj))


def kl_quadratic_check(model: Model, x: np.ndarray, eta: np.ndarray) -> tuple[float, float]:
    """Exact KL(p(.|x) || p(.|x+eta)) next to its quadratic approximation.

    The quadratic form carries the 1/2 from the Taylor expansion; the
    difficulty score elsewhere stays the raw eigenvalue, which only
    rescales (never reorders) per-example comparisons.
    """
    x = as_tensor(x)
    eta = as_tensor(eta)
    if eta.shape != x.shape:
        raise ValueError("eta must have the same shape as x")
    logp = model.logprobs(x)
    logq = model.logprobs(x + eta)
    p = np.exp(logp)
    kl = float(np.sum(p * (logp - logq)))
    jac = jacobian(model, x)
    quad = 0.5 * fim_quadratic_form(jac, eta)
    return kl, quad


def score_dataset(model: Model, examples: list[Example], threads: int = 1):
    """lambda_max per example, order preserved; failures come back as None
    and are logged so a bad row never sinks the batch."""
    if not examples:
        raise ValueError("score_dataset needs a nonempty dataset")

    def one(example: Example):
        try:
            return lambda_max(model, example)
        except Exception as exc:
            log.warning("scoring failed for example %s: %s", example.id, exc)
            return None

    if threads <= 1:
        return [one(ex) for ex in examples]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, examples))
