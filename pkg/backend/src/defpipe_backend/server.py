"""HTTP service implementing the pipeline's scorer/generator wire protocol."""

from __future__ import annotations

import logging
import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field, model_validator

from . import modeling
from .config import BackendConfig

logger = logging.getLogger(__name__)


class ScoreRequest(BaseModel):
    jargon: str
    sentence: str


class ScoreBatchRequest(BaseModel):
    jargons: list[str]
    sentences: list[str]

    @model_validator(mode="after")
    def _parallel(self) -> "ScoreBatchRequest":
        if len(self.jargons) != len(self.sentences):
            raise ValueError("jargons and sentences must be parallel arrays")
        return self


class GenerateRequest(BaseModel):
    input: str
    max_len: int = Field(default=96, ge=1, le=1024)
    beam_size: int = Field(default=4, ge=1, le=16)


def create_app(config: BackendConfig) -> FastAPI:
    """Load both models and wire up the routes; refuses to start on load failure."""
    try:
        scorer = modeling.load_scorer(config.scorer_path, config.device)
        generator = modeling.load_generator(config.generator_path, config.device)
    except Exception as exc:
        raise RuntimeError(f"cannot start backend, model load failed: {exc}") from exc

    app = FastAPI(title="defpipe-backend")
    inference_lock = threading.Lock()

    @app.get("/health")
    def health() -> dict:
        return {"scorer": scorer.name, "generator": generator.name}

    @app.post("/score")
    def score(req: ScoreRequest) -> dict:
        with inference_lock:
            confidence = modeling.score_pairs(
                scorer, [req.jargon], [req.sentence], max_length=config.max_input_length
            )[0]
        return {"confidence": confidence}

    @app.post("/score_batch")
    def score_batch(req: ScoreBatchRequest) -> dict:
        if not req.jargons:
            return {"confidences": []}
        with inference_lock:
            confidences = modeling.score_pairs(
                scorer, req.jargons, req.sentences, max_length=config.max_input_length
            )
        return {"confidences": confidences}

    @app.post("/generate")
    def generate(req: GenerateRequest) -> dict:
        if not req.input.strip():
            raise HTTPException(status_code=422, detail="input must be nonempty")
        with inference_lock:
            text, logprobs = modeling.generate_definition(
                generator,
                req.input,
                max_len=req.max_len,
                beam_size=req.beam_size,
                max_input_length=config.max_input_length,
            )
        return {"definition": text, "token_logprobs": logprobs, "backend_id": generator.name}

    return app


def serve(config: BackendConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="info")
