"""Local HTTP service behind the explorer UI.

Scoring and perturbation go through exactly the functions the CLI uses;
the service holds an immutable model, so concurrent requests never share
mutable state and repeated requests return identical bytes.
"""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import fim, probe
from .data import Example
from .models import Model

log = logging.getLogger(__name__)


class SubstitutionBody(BaseModel):
    position: int
    replacement: str


class ScoreBody(BaseModel):
    text: str


class PerturbBody(BaseModel):
    text: str
    substitutions: list[SubstitutionBody]


def _score_text(model: Model, text: str, ex_id: str = "adhoc") -> dict:
    example = Example(id=ex_id, label=0, text=text)
    try:
        result = fim.lambda_max(model, example)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    rec = result.to_record()
    rec.pop("label", None)
    # token list is server-side state the UI must not recompute locally
    rec["tokens"] = fim.encode_example(model, example)[3]
    return rec


def create_app(model: Model, model_hash: str, examples: list[Example] | None = None,
               scored_rows: list[dict] | None = None, threads: int = 1,
               attribution_steps: int = 128) -> FastAPI:
    """Assemble the service around one immutable model.

    ``examples`` enables the /examples browsing endpoints; scores are
    precomputed at startup unless matching ``scored_rows`` (a scored
    JSONL, e.g. from the score command) are supplied.
    """
    app = FastAPI(title="fisherprobe", version="0.1.0")

    by_id: dict[str, dict] = {}
    rows: list[dict] = []
    texts: dict[str, str] = {}
    if examples:
        for ex in examples:
            texts[ex.id] = ex.text
        precomputed = {row["id"]: row for row in scored_rows or []}
        missing = [ex for ex in examples if ex.id not in precomputed]
        fresh: dict[str, dict] = {}
        if missing:
            log.info("scoring %d examples at startup", len(missing))
            for ex, result in zip(missing, fim.score_dataset(model, missing,
                                                             threads=threads)):
                if result is not None:
                    fresh[ex.id] = result.to_record()
        for ex in examples:
            row = precomputed.get(ex.id) or fresh.get(ex.id)
            if row is not None:
                rows.append(row)
                by_id[ex.id] = row
    attribution_cache: dict[str, list[float]] = {}

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        log.exception("request failed")
        return JSONResponse(status_code=500, content={"detail": "internal error"})

    @app.get("/health")
    def health():
        return {"status": "ok", "model_hash": model_hash}

    @app.get("/examples")
    def list_examples(sort: str = "lambda_desc", offset: int = 0, limit: int = 50):
        if sort not in ("lambda_desc", "lambda_asc"):
            raise HTTPException(status_code=400, detail=f"unknown sort {sort!r}")
        if offset < 0 or limit < 1:
            raise HTTPException(status_code=400, detail="bad offset/limit")
        ordered = sorted(rows, key=lambda r: r["lambda_max"],
                         reverse=(sort == "lambda_desc"))
        page = ordered[offset : offset + limit]
        return {"total": len(ordered), "offset": offset, "limit": limit,
                "examples": page}

    @app.get("/examples/{example_id}")
    def example_detail(example_id: str):
        row = by_id.get(example_id)
        if row is None:
            raise HTTPException(status_code=404, detail=f"unknown id {example_id!r}")
        detail = dict(row)
        example = Example(id=example_id, label=row.get("label") or 0,
                          text=texts[example_id])
        detail["tokens"] = fim.encode_example(model, example)[3]
        if example_id not in attribution_cache:
            attr = probe.integrated_gradients(model, example,
                                              target=int(row["prediction"]),
                                              steps=attribution_steps)
            attribution_cache[example_id] = attr.token_scores
        detail["token_scores"] = attribution_cache[example_id]
        return detail

    @app.post("/score")
    def score(body: ScoreBody):
        return _score_text(model, body.text)

    @app.post("/perturb")
    def perturb(body: PerturbBody):
        original = Example(id="adhoc", label=0, text=body.text)
        subs = [(s.position, s.replacement) for s in body.substitutions]
        try:
            perturbed = probe.apply_substitutions(original, subs)
        except (ValueError, IndexError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        orig_rec = _score_text(model, body.text)
        pert_rec = _score_text(model, perturbed.text)
        pert_rec["text"] = perturbed.text
        delta = pert_rec["lambda_max"] - orig_rec["lambda_max"]
        return {
            "original": orig_rec,
            "perturbed": pert_rec,
            "delta": delta,
            "flipped": orig_rec["prediction"] != pert_rec["prediction"],
        }

    return app
