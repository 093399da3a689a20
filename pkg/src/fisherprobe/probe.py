"""Perturbation machinery: Integrated-Gradients attribution, important
token selection, word substitution, paired eigenvalue-delta statistics,
histogram overlap and the 2-d boundary-distance oracle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autograd import as_tensor, backward, forward_cache
from .data import Example, PairedExample, tokenize
from .fim import encode_example, lambda_max
from .models import Model

log = logging.getLogger(__name__)


@dataclass
class AttributionResult:
    """Per-token Integrated-Gradients scores for one example."""

    token_scores: list[float]
    completeness_residual: float
    target_class: int
    steps: int
    attributions: np.ndarray | None = None  # coordinate-level, (max_len, d)


@dataclass
class PairedRecord:
    """Difficulty delta for one (original, perturbed) pair."""

    id: str
    lambda_original: float
    lambda_perturbed: float
    delta: float
    prediction_original: int
    prediction_perturbed: int
    flipped: bool

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "lambda_original": float(self.lambda_original),
            "lambda_perturbed": float(self.lambda_perturbed),
            "delta": float(self.delta),
            "prediction_original": int(self.prediction_original),
            "prediction_perturbed": int(self.prediction_perturbed),
            "flipped": bool(self.flipped),
        }


@dataclass
class DeltaStats:
    """Population statistics over per-pair deltas."""

    n: int
    mean: float
    std: float  # population (n divisor), so summaries rebuild bit-for-bit
    threshold: float
    frac_le_threshold: float
    frac_gt_threshold: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "std": self.std,
            "threshold": self.threshold,
            "frac_le_threshold": self.frac_le_threshold,
            "frac_gt_threshold": self.frac_gt_threshold,
        }


@dataclass
class OverlapReport:
    """Histogram-intersection overlap of two samples on a shared binning."""

    bins: int
    lo: float
    hi: float
    overlap_percent: float
    mass_a: list[float]
    mass_b: list[float]
    edges: list[float]

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "range": [self.lo, self.hi],
            "overlap_percent": self.overlap_percent,
            "mass_a": self.mass_a,
            "mass_b": self.mass_b,
            "edges": self.edges,
        }


def path_attributions(x: np.ndarray, baseline: np.ndarray, grad_batch_fn,
                      steps: int, rule: str = "midpoint") -> np.ndarray:
    """(x - baseline) * path-average gradient over ``steps`` intervals.

    ``grad_batch_fn`` maps a stack of path points to their gradients, one
    row per point.  Both rules are exact for linear functions at any
    steps >= 2.  Midpoint is the default: with a zero baseline every ReLU
    of a fresh network sits exactly on its kink at the path start, where
    a closed rule samples the (measure-zero) wrong one-sided gradient and
    completeness degrades to first order.
    """
    if steps < 2:
        raise ValueError("integrated gradients needs steps >= 2")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != x.shape:
        raise ValueError("baseline must have the same shape as x")
    if rule == "midpoint":
        alphas = (np.arange(steps) + 0.5) / steps
        weights = np.full(steps, 1.0 / steps)
    elif rule == "trapezoid":
        alphas = np.linspace(0.0, 1.0, steps + 1)
        weights = np.full(steps + 1, 1.0 / steps)
        weights[0] = weights[-1] = 0.5 / steps
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    points = baseline + alphas.reshape((-1,) + (1,) * x.ndim) * (x - baseline)
    grads = grad_batch_fn(points)
    avg_grad = np.tensordot(weights, grads, axes=(0, 0))
    return (x - baseline) * avg_grad


def integrated_gradients(model: Model, example: Example, target: int,
                         steps: int = 128, baseline: str = "pad",
                         rule: str = "midpoint") -> AttributionResult:
    """IG attribution of log p(target|x) against the all-PAD baseline.

    PAD rows are zero, so the "pad" and "zero" baselines coincide and
    padding positions get exactly zero attribution.  Per-token scores sum
    each real token's embedding coordinates.
    """
    if baseline not in ("zero", "pad"):
        raise ValueError(f"unknown baseline {baseline!r}")
    x, _, n_tokens, _ = encode_example(model, example)
    c = model.num_classes
    if not 0 <= target < c:
        raise IndexError(f"target class {target} out of range")
    base = np.zeros_like(x)

    def grad_batch(points):
        out, cache = forward_cache(model.graph, points, model.params)
        seed = np.zeros(out.shape)
        seed[:, target] = 1.0
        gx, _ = backward(model.graph, cache, seed)
        return gx

    attr = path_attributions(x, base, grad_batch, steps, rule=rule)
    f_x = float(model.logprobs(x)[target])
    f_base = float(model.logprobs(base)[target])
    residual = abs(float(attr.sum()) - (f_x - f_base))
    if n_tokens is None:  # point input: one score per coordinate
        scores = [float(v) for v in np.atleast_1d(attr)]
    else:
        scores = [float(v) for v in attr[:n_tokens].sum(axis=-1)]
    return AttributionResult(
        token_scores=scores,
        completeness_residual=residual,
        target_class=target,
        steps=steps,
        attributions=attr,
    )


def important_tokens(attr: AttributionResult, top_k: int | None = None,
                     fraction_of_max: float | None = None) -> list[int]:
    """Positions of the most important tokens by |score|.

    top_k: the k largest, ties broken toward earlier positions.
    fraction_of_max: every position with |score| >= f * max|score|.
    """
    if (top_k is None) == (fraction_of_max is None):
        raise ValueError("pass exactly one of top_k or fraction_of_max")
    scores = np.abs(np.asarray(attr.token_scores, dtype=np.float64))
    if scores.size == 0:
        raise ValueError("no token scores to rank")
    if top_k is not None:
        if top_k <= 0:
            raise ValueError("top_k must be positive")
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        return order[:top_k]
    if not 0.0 < fraction_of_max <= 1.0:
        raise ValueError("fraction_of_max must be in (0, 1]")
    cut = fraction_of_max * scores.max()
    return [i for i, s in enumerate(scores) if s >= cut]


def apply_substitutions(example: Example, subs: list[tuple[int, str]]) -> Example:
    """Replace tokens at given positions (replacements may be multi-token);
    the result is re-joined and re-tokenized.  The original is untouched."""
    if example.text is None:
        raise ValueError("substitutions need a text example")
    tokens = tokenize(example.text)
    positions = [p for p, _ in subs]
    if len(set(positions)) != len(positions):
        raise ValueError("substitution positions must be distinct")
    for pos, _ in subs:
        if not 0 <= pos < len(tokens):
            raise IndexError(
                f"substitution position {pos} out of range for {len(tokens)} tokens"
            )
    new_tokens = list(tokens)
    for pos, replacement in subs:
        new_tokens[pos] = replacement
    new_text = " ".join(t for t in new_tokens if t != "")
    return Example(id=example.id, label=example.label, text=new_text)


def delta_stats(deltas, threshold: float = 0.0) -> DeltaStats:
    """Mean, population std and threshold tail fractions of the deltas.

    Both tail fractions (<= and >) are reported because "did the
    perturbation make the example harder" reads differently depending on
    which side of the threshold one counts."""
    deltas = np.asarray(deltas, dtype=np.float64)
    if deltas.size == 0:
        raise ValueError("delta_stats needs at least one delta")
    frac_le = float(np.mean(deltas <= threshold))
    return DeltaStats(
        n=int(deltas.size),
        mean=float(deltas.mean()),
        std=float(deltas.std()),  # population divisor
        threshold=threshold,
        frac_le_threshold=frac_le,
        frac_gt_threshold=1.0 - frac_le,
    )


def score_pairs(model: Model, pairs: list[PairedExample], threshold: float = 0.0
                ) -> tuple[list[PairedRecord], DeltaStats]:
    """lambda_max before/after perturbation for each pair, plus summary
    statistics of the deltas.  Failing pairs are logged and skipped."""
    if not pairs:
        raise ValueError("score_pairs needs a nonempty pair list")
    records: list[PairedRecord] = []
    for pair in pairs:
        try:
            orig = lambda_max(model, Example(id=pair.id, label=pair.original_label,
                                             text=pair.original_text))
            pert = lambda_max(model, Example(id=pair.id, label=pair.perturbed_label,
                                             text=pair.perturbed_text))
        except Exception as exc:
            log.warning("pair %s failed: %s", pair.id, exc)
            continue
        records.append(PairedRecord(
            id=pair.id,
            lambda_original=orig.lambda_max,
            lambda_perturbed=pert.lambda_max,
            delta=pert.lambda_max - orig.lambda_max,
            prediction_original=orig.prediction,
            prediction_perturbed=pert.prediction,
            flipped=orig.prediction != pert.prediction,
        ))
    if not records:
        raise ValueError("every pair failed to score")
    return records, delta_stats([r.delta for r in records], threshold)


def histogram_overlap(a, b, bins: int = 50) -> OverlapReport:
    """100 * sum_i min(pa_i, pb_i) over a shared binning of both samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("histogram_overlap needs two nonempty samples")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo = float(min(a.min(), b.min()))
    hi = float(max(a.max(), b.max()))
    if lo == hi:  # degenerate range: everything lands in one bin
        lo, hi = lo - 0.5, hi + 0.5
    counts_a, edges = np.histogram(a, bins=bins, range=(lo, hi))
    counts_b, _ = np.histogram(b, bins=bins, range=(lo, hi))
    mass_a = counts_a / a.size
    mass_b = counts_b / b.size
    overlap = 100.0 * float(np.minimum(mass_a, mass_b).sum())
    return OverlapReport(
        bins=bins,
        lo=lo,
        hi=hi,
        overlap_percent=overlap,
        mass_a=[float(v) for v in mass_a],
        mass_b=[float(v) for v in mass_b],
        edges=[float(v) for v in edges],
    )


def boundary_distance(model: Model, point, radius: float = 20.0,
                      tol: float = 1e-9, march_steps: int = 400) -> float:
    """Euclidean distance from a 2-d point to the p = 0.5 level set.

    Marches along +/- the logit-difference gradient to bracket a sign
    change, then bisects.  Returns inf when no crossing lies within
    ``radius`` in either direction.
    """
    if model.spec.kind != "mlp" or model.graph.input_shape != (2,):
        raise ValueError("boundary_distance needs a 2-d binary mlp model")
    if model.num_classes != 2:
        raise ValueError("boundary_distance needs a binary model")
    point = as_tensor(point).reshape(2)

    def margin(x):
        logp = model.logprobs(x)
        return logp[..., 1] - logp[..., 0]

    h0 = float(margin(point))
    if h0 == 0.0:
        return 0.0
    out, cache = forward_cache(model.graph, point, model.params)
    seed = np.array([-1.0, 1.0])
    grad, _ = backward(model.graph, cache, seed)
    norm = float(np.linalg.norm(grad))
    if norm == 0.0:
        return float("inf")
    direction = grad / norm

    ts = np.linspace(0.0, radius, march_steps + 1)[1:]
    best = float("inf")
    for sign in (1.0, -1.0):
        candidates = point + sign * ts[:, None] * direction
        values = margin(candidates)
        crossing = np.nonzero(np.sign(values) != np.sign(h0))[0]
        if crossing.size == 0:
            continue
        k = int(crossing[0])
        t_lo = 0.0 if k == 0 else float(ts[k - 1])
        t_hi = float(ts[k])
        while t_hi - t_lo > tol:
            mid = 0.5 * (t_lo + t_hi)
            if np.sign(margin(point + sign * mid * direction)) == np.sign(h0):
                t_lo = mid
            else:
                t_hi = mid
        best = min(best, 0.5 * (t_lo + t_hi))
    return best
