"""HTTP surface over one spec session.

Every mutating endpoint returns the full updated chunk list so clients never
diverge from the store. Clarification is two-phase: /change/check and
/change/apply may answer with a clarification question instead of flags; the
client re-posts the same body plus the user's answer.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import bench as bench_mod
from .engine import (
    ChangeRequest,
    DetectionReport,
    check_for_conflicts,
    local_rewrite,
    make_change,
    should_request_clarification,
    suggest_strategies,
    underline_words,
)
from .errors import (
    BenchmarkLoadError,
    ChunkNotFoundError,
    ProviderError,
    SpecFormatError,
    StateTransitionError,
)
from .gateway import LlmGateway
from .graph import KnowledgeGraph, PprConfig, induce_graph, update_for_chunk
from .store import ChunkState, IntentSpec

MARKDOWN_SUFFIXES = {".md", ".markdown", ".txt"}


class SessionState:
    """One active spec, its graph, and the sidecar persistence around them."""

    def __init__(
        self,
        spec: IntentSpec,
        gateway: LlmGateway,
        spec_path: Optional[Path] = None,
        spec_format: str = "markdown_list",
        ppr: Optional[PprConfig] = None,
    ):
        self.spec = spec
        self.gateway = gateway
        self.spec_path = Path(spec_path) if spec_path else None
        self.spec_format = spec_format
        self.ppr = ppr or PprConfig()
        self.graph: Optional[KnowledgeGraph] = None
        self.last_request: Optional[ChangeRequest] = None
        self.lock = threading.Lock()

    # -- loading / persistence --------------------------------------------

    @classmethod
    def open(
        cls,
        spec_path: str | Path,
        gateway: LlmGateway,
        ppr: Optional[PprConfig] = None,
    ) -> "SessionState":
        path = Path(spec_path)
        spec_format = "markdown_list" if path.suffix.lower() in MARKDOWN_SUFFIXES else "spec_json"
        spec = IntentSpec.load(path.read_bytes(), format=spec_format)
        session = cls(spec, gateway, spec_path=path, spec_format=spec_format, ppr=ppr)
        review = session.review_path()
        if review and review.exists():
            spec.restore_review_state(json.loads(review.read_text(encoding="utf-8")))
        kg = session.graph_path()
        if kg and kg.exists():
            session.graph = KnowledgeGraph.from_json(kg.read_text(encoding="utf-8"))
        return session

    def review_path(self) -> Optional[Path]:
        return self.spec_path.with_name(self.spec_path.name + ".review.json") if self.spec_path else None

    def graph_path(self) -> Optional[Path]:
        return self.spec_path.with_name(self.spec_path.name + ".kg.json") if self.spec_path else None

    def ensure_graph(self) -> KnowledgeGraph:
        if self.graph is None:
            self.graph = induce_graph(self.spec, self.gateway)
        return self.graph

    def save(self) -> None:
        """Write the spec file plus sidecars; review state never reaches markdown."""
        if not self.spec_path:
            return
        if self.spec_format == "markdown_list":
            self.spec_path.write_text(self.spec.to_markdown(), encoding="utf-8")
        else:
            self.spec_path.write_text(self.spec.to_spec_json() + "\n", encoding="utf-8")
        self.review_path().write_text(
            json.dumps(self.spec.to_review_dict(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        if self.graph is not None:
            self.graph_path().write_text(self.graph.to_json() + "\n", encoding="utf-8")

    # -- graph maintenance ---------------------------------------------------

    def refresh_chunk(self, chunk_id: str, new_text: str) -> list[str]:
        """KG update on confirmation; warn-only on failure."""
        if self.graph is None:
            return []
        self.graph = update_for_chunk(self.graph, chunk_id, new_text, self.gateway)
        return list(self.graph.warnings)


class ChangeBody(BaseModel):
    action: str
    new_info: str
    target: Optional[str] = None
    steer: Optional[str] = None
    clarification: Optional[str] = None


class TextBody(BaseModel):
    text: str


class SteerBody(BaseModel):
    steer: Optional[str] = None


class BenchBody(BaseModel):
    method: str = "kg_pagerank"
    dataset_path: str
    direct_only: bool = False
    fpr: bool = False
    rng_seed: int = 0


def create_app(session: SessionState) -> FastAPI:
    app = FastAPI(title="specmerge", docs_url=None, redoc_url=None)

    def chunk_list() -> list[dict]:
        return [c.to_dict() for c in session.spec]

    def with_chunks(extra: Optional[dict] = None, warnings: Optional[list[str]] = None) -> dict:
        payload = dict(extra or {})
        payload["chunks"] = chunk_list()
        if warnings:
            payload.setdefault("warnings", []).extend(warnings)
        return payload

    @app.exception_handler(ChunkNotFoundError)
    async def _not_found(request: Request, exc: ChunkNotFoundError):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.exception_handler(StateTransitionError)
    async def _conflict(request: Request, exc: StateTransitionError):
        return JSONResponse(status_code=409, content={"detail": str(exc)})

    @app.exception_handler(ProviderError)
    async def _provider(request: Request, exc: ProviderError):
        return JSONResponse(
            status_code=502, content={"detail": str(exc), "warnings": [str(exc)]}
        )

    @app.exception_handler(SpecFormatError)
    async def _format(request: Request, exc: SpecFormatError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(BenchmarkLoadError)
    async def _bench_error(request: Request, exc: BenchmarkLoadError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    async def _validation(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/spec")
    def get_spec():
        return {"version": 1, "chunks": chunk_list()}

    @app.get("/graph")
    def get_graph():
        if session.graph is None:
            return {"nodes": [], "edges": [], "built": False}
        return {**session.graph.to_dict(), "built": True}

    @app.post("/chunks")
    def add_info(body: TextBody):
        with session.lock:
            chunk = session.spec.add_info(body.text, origin="user")
            warnings = session.refresh_chunk(chunk.id, chunk.text)
            session.save()
            return with_chunks({"added": chunk.id}, warnings)

    def _change_flow(body: ChangeBody, apply: bool):
        request = ChangeRequest(
            action=body.action,
            new_info=body.new_info,
            target=body.target,
            steer=body.steer,
            clarification=body.clarification,
        )
        with session.lock:
            if request.clarification is None:
                question = should_request_clarification(session.spec, request, session.gateway)
                if question:
                    return with_chunks(
                        {
                            "clarification_needed": question,
                            "flags": [],
                            "warnings": [],
                            "latency_ms": 0.0,
                        }
                    )
            graph = session.ensure_graph()
            runner = make_change if apply else check_for_conflicts
            report: DetectionReport = runner(session.spec, graph, request, session.gateway, session.ppr)
            session.last_request = request
            session.save()
            extra = report.to_json_dict()
            if apply:
                extra["proposals"] = report.proposals
                extra["rewrite_failed"] = report.rewrite_failed
            return with_chunks(extra)

    @app.post("/change/check")
    def change_check(body: ChangeBody):
        return _change_flow(body, apply=False)

    @app.post("/change/apply")
    def change_apply(body: ChangeBody):
        return _change_flow(body, apply=True)

    @app.post("/chunks/{chunk_id}/local-rewrite")
    def chunk_local_rewrite(chunk_id: str, body: SteerBody):
        with session.lock:
            local_rewrite(session.spec, chunk_id, session.last_request, session.gateway, body.steer)
            session.save()
            return with_chunks()

    @app.post("/chunks/{chunk_id}/strategies")
    def chunk_strategies(chunk_id: str):
        chunk = session.spec.get(chunk_id)
        return {"strategies": suggest_strategies(chunk, session.last_request, session.gateway)}

    @app.post("/chunks/{chunk_id}/underline")
    def chunk_underline(chunk_id: str):
        with session.lock:
            chunk = session.spec.get(chunk_id)
            spans = underline_words(chunk, session.last_request, session.gateway)
            session.spec.set_underlines(chunk_id, spans)
            session.save()
            return with_chunks({"spans": [list(s) for s in spans]})

    @app.post("/chunks/{chunk_id}/propose-edit")
    def chunk_propose_edit(chunk_id: str, body: TextBody):
        with session.lock:
            session.spec.transition(chunk_id, "propose_edit", text=body.text, origin="user")
            session.save()
            return with_chunks()

    @app.post("/chunks/{chunk_id}/resolve")
    def chunk_resolve(chunk_id: str):
        with session.lock:
            chunk = session.spec.get(chunk_id)
            was_delete = chunk.state is ChunkState.PROPOSED_DELETE
            new_text = chunk.proposed_text if chunk.proposed_text is not None else None
            session.spec.transition(chunk_id, "resolve")
            warnings: list[str] = []
            if was_delete:
                warnings = session.refresh_chunk(chunk_id, "")
            elif new_text is not None:
                warnings = session.refresh_chunk(chunk_id, new_text)
            session.save()
            return with_chunks(None, warnings)

    @app.post("/chunks/{chunk_id}/revert")
    def chunk_revert(chunk_id: str):
        with session.lock:
            session.spec.transition(chunk_id, "revert")
            session.save()
            return with_chunks()

    @app.post("/chunks/{chunk_id}/clear")
    def chunk_clear(chunk_id: str):
        with session.lock:
            session.spec.transition(chunk_id, "clear")
            session.save()
            return with_chunks()

    @app.delete("/chunks/{chunk_id}")
    def chunk_delete(chunk_id: str):
        with session.lock:
            session.spec.transition(chunk_id, "propose_delete", origin="user")
            session.save()
            return with_chunks()

    @app.post("/revert-all")
    def revert_all():
        with session.lock:
            session.spec.revert_all()
            session.save()
            return with_chunks()

    @app.post("/clear-conflicts")
    def clear_conflicts():
        with session.lock:
            session.spec.clear_all_conflicts()
            session.save()
            return with_chunks()

    @app.post("/bench/run")
    def bench_run(body: BenchBody):
        dataset = bench_mod.load_benchmark(body.dataset_path)
        cfg = bench_mod.EvalConfig(ppr=session.ppr, direct_only=body.direct_only)
        if body.fpr:
            levels = bench_mod.run_fpr_experiment(
                dataset,
                bench_mod.FprExperimentConfig(rng_seed=body.rng_seed, direct_only=body.direct_only),
                session.gateway,
            )
            return {
                "dataset": dataset.name,
                "levels": [
                    {
                        "fpr": lv.fpr,
                        "mean_f1": lv.mean_f1,
                        "mean_latency_ms": lv.mean_latency_ms,
                        "mean_achieved_fpr": lv.mean_achieved_fpr,
                    }
                    for lv in levels
                ],
            }
        report = bench_mod.run_method(body.method, dataset, session.gateway, cfg)
        return report.to_json_dict()

    return app


def serve(session: SessionState, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    uvicorn.run(create_app(session), host=host, port=port, log_level="warning")
