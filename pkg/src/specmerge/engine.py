"""Core flows: impact analysis, make-change, and the local resolution aids.

Detection and generation are kept strictly separate: ``check_for_conflicts``
flags chunks and never touches text, while ``make_change`` runs the same
detection and then proposes rewrites over only the flagged chunks. Every
change the model suggests lands as a pending proposal for human review; a
classifier failure on a candidate degrades to an ambiguous flag instead of a
dropped verdict, because a missed conflict is the one unrecoverable outcome.
"""

from __future__ import annotations

import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .errors import CountMismatchError, ProviderError, ResponseParseError
from .gateway import (
    ACTION_INSTRUCTIONS,
    DELETE,
    LlmGateway,
    action_prompt,
    parse_conflict_json,
    parse_word_list,
    split_numbered_items,
)
from .graph import KnowledgeGraph, PprConfig, retrieve_candidates
from .store import (
    Chunk,
    ChunkState,
    ConflictClass,
    ConflictVerdict,
    FLAGGED_STATES,
    IntentSpec,
)

ACTIONS = ("add", "change", "edit")


@dataclass
class ChangeRequest:
    """The user's semantic commit: what to integrate and how."""

    action: str
    new_info: str
    target: Optional[str] = None
    steer: Optional[str] = None
    clarification: Optional[str] = None

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got {self.action!r}")
        if not self.new_info or not self.new_info.strip():
            raise ValueError("new_info must be non-empty")
        if (self.target is not None) != (self.action == "edit"):
            raise ValueError("target is required exactly when action is 'edit'")

    def classification_text(self) -> str:
        """New info with steering and clarification folded in for the classifier."""
        parts = [self.new_info]
        if self.steer:
            parts.append(f"User steering: {self.steer}")
        if self.clarification:
            parts.append(f"User clarification: {self.clarification}")
        return "\n\n".join(parts)


@dataclass
class DetectionReport:
    candidates: list[tuple[str, float]] = field(default_factory=list)
    verdicts: dict[str, ConflictVerdict] = field(default_factory=dict)
    flagged: list[str] = field(default_factory=list)
    proposals: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    latency_ms: float = 0.0
    retrieval_latency_ms: float = 0.0
    classify_latencies_ms: list[float] = field(default_factory=list)
    rewrite_failed: bool = False

    def score_of(self, chunk_id: str) -> float:
        for cid, score in self.candidates:
            if cid == chunk_id:
                return score
        return 0.0

    def to_json_dict(self) -> dict:
        return {
            "flags": [
                {
                    "chunk_id": cid,
                    "class": self.verdicts[cid].conflict_class.value,
                    "reasoning": self.verdicts[cid].reasoning,
                    "score": self.score_of(cid),
                }
                for cid in self.flagged
            ],
            "warnings": list(self.warnings),
            "latency_ms": self.latency_ms,
        }


_COERCED_REASON = "unparseable classifier output"


def _classify_pair(
    gateway: LlmGateway, existing: str, new: str
) -> tuple[ConflictVerdict, float, Optional[str]]:
    """One pairwise classification; failures coerce to ambiguous."""
    try:
        response = gateway.ask("conflict_classify", existing=existing, new=new)
    except ProviderError as exc:
        return (
            ConflictVerdict(ConflictClass.AMBIGUOUS, f"classifier unavailable: {exc}"),
            0.0,
            f"classifier call failed, coerced to ambiguous: {exc}",
        )
    try:
        return parse_conflict_json(response.text), response.latency_ms, None
    except ResponseParseError:
        return (
            ConflictVerdict(ConflictClass.AMBIGUOUS, _COERCED_REASON),
            response.latency_ms,
            f"unparseable classifier output coerced to ambiguous: {response.text[:80]!r}",
        )


def _apply_flag(spec: IntentSpec, chunk_id: str, verdict: ConflictVerdict) -> bool:
    """Flag a chunk per its verdict; re-flags via clear when already flagged."""
    chunk = spec.get(chunk_id)
    if chunk.state in FLAGGED_STATES:
        spec.transition(chunk_id, "clear")
        chunk = spec.get(chunk_id)
    if chunk.state is not ChunkState.NEUTRAL:
        return False
    event = "flag_direct" if verdict.conflict_class is ConflictClass.DIRECT else "flag_ambiguous"
    spec.transition(chunk_id, event, verdict=verdict)
    return True


def check_for_conflicts(
    spec: IntentSpec,
    graph: KnowledgeGraph,
    request: ChangeRequest,
    gateway: LlmGateway,
    cfg: Optional[PprConfig] = None,
) -> DetectionReport:
    """Impact analysis: retrieve, classify, flag. No text is modified."""
    start = time.perf_counter()
    retrieval = retrieve_candidates(graph, spec, request, gateway, cfg)
    report = DetectionReport(
        candidates=list(retrieval.ranked),
        warnings=list(retrieval.warnings),
        retrieval_latency_ms=retrieval.latency_ms,
    )

    new_text = request.classification_text()
    candidate_ids = [cid for cid, _ in retrieval.ranked]
    texts = {cid: spec.get(cid).text for cid in candidate_ids}

    def classify(cid: str):
        return cid, _classify_pair(gateway, texts[cid], new_text)

    results: dict[str, tuple[ConflictVerdict, float, Optional[str]]] = {}
    if len(candidate_ids) > 1 and gateway.max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=gateway.max_in_flight) as pool:
            for cid, outcome in pool.map(classify, candidate_ids):
                results[cid] = outcome
    else:
        for cid in candidate_ids:
            results[cid] = classify(cid)[1]

    # merge deterministically by ordinal regardless of completion order
    for cid in sorted(candidate_ids, key=lambda c: spec.get(c).ordinal):
        verdict, latency, warning = results[cid]
        report.verdicts[cid] = verdict
        report.classify_latencies_ms.append(latency)
        if warning:
            report.warnings.append(f"{cid}: {warning}")
        if verdict.conflict_class is ConflictClass.NONE:
            continue
        if _apply_flag(spec, cid, verdict):
            report.flagged.append(cid)
        else:
            report.warnings.append(f"{cid}: verdict recorded but chunk has a pending proposal")

    report.latency_ms = (time.perf_counter() - start) * 1000.0
    return report


_ADD_PREFIX = "ADD:"


def _request_rewrite(
    gateway: LlmGateway, flagged: list[Chunk], request: ChangeRequest
) -> tuple[list, Optional[str]]:
    """Global rewrite of the flagged chunks; returns items aligned to them.

    Accepts exactly len(flagged) items, or one extra trailing "ADD:" item
    carrying a brand-new text. One retry on a count mismatch, then the
    rewrite is abandoned (detection results survive).
    """
    all_docs = "\n".join(f"{i + 1}. {chunk.text}" for i, chunk in enumerate(flagged))
    variables = {
        "action_instructions": ACTION_INSTRUCTIONS[request.action],
        "newInfo": request.classification_text(),
        "all_docs": all_docs,
    }
    last_error: Optional[CountMismatchError] = None
    for _ in range(2):
        response = gateway.ask("global_rewrite", **variables)
        items = split_numbered_items(response.text)
        added: Optional[str] = None
        if len(items) == len(flagged) + 1 and items[-1].startswith(_ADD_PREFIX):
            added = items[-1][len(_ADD_PREFIX):].strip()
            items = items[:-1]
        if len(items) == len(flagged):
            resolved = [DELETE if item.strip() == "DELETE" else item for item in items]
            return resolved, added
        last_error = CountMismatchError(len(flagged), len(items), response.text)
    raise last_error


def make_change(
    spec: IntentSpec,
    graph: KnowledgeGraph,
    request: ChangeRequest,
    gateway: LlmGateway,
    cfg: Optional[PprConfig] = None,
) -> DetectionReport:
    """Detection plus AI-proposed resolutions, all pending human review."""
    start = time.perf_counter()
    report = check_for_conflicts(spec, graph, request, gateway, cfg)

    if request.action == "edit":
        spec.transition(request.target, "propose_edit", text=request.new_info, origin="user")
        report.proposals.append(
            {"chunk_id": request.target, "kind": "edit", "text": request.new_info}
        )
    if request.action == "add":
        added = spec.propose_add(request.new_info, origin="ai")
        report.proposals.append({"chunk_id": added.id, "kind": "add", "text": request.new_info})

    flagged_chunks = [spec.get(cid) for cid in report.flagged]
    flagged_chunks.sort(key=lambda c: c.ordinal)
    if flagged_chunks:
        try:
            items, extra_add = _request_rewrite(gateway, flagged_chunks, request)
        except CountMismatchError as exc:
            report.rewrite_failed = True
            report.warnings.append(
                f"global rewrite abandoned after retry: expected {exc.expected} items, got {exc.got}"
            )
            report.latency_ms = (time.perf_counter() - start) * 1000.0
            return report
        except ProviderError as exc:
            report.rewrite_failed = True
            report.warnings.append(f"global rewrite abandoned: {exc}")
            report.latency_ms = (time.perf_counter() - start) * 1000.0
            return report

        for chunk, item in zip(flagged_chunks, items):
            if item is DELETE:
                spec.transition(chunk.id, "propose_delete", origin="ai")
                report.proposals.append({"chunk_id": chunk.id, "kind": "delete", "text": ""})
            elif item.strip() == chunk.text.strip():
                report.proposals.append({"chunk_id": chunk.id, "kind": "keep", "text": chunk.text})
            else:
                spec.transition(chunk.id, "propose_edit", text=item, origin="ai")
                report.proposals.append({"chunk_id": chunk.id, "kind": "edit", "text": item})
        if extra_add:
            added = spec.propose_add(extra_add, origin="ai")
            report.proposals.append({"chunk_id": added.id, "kind": "add", "text": extra_add})

    report.latency_ms = (time.perf_counter() - start) * 1000.0
    return report


def should_request_clarification(
    spec: IntentSpec, request: ChangeRequest, gateway: LlmGateway
) -> Optional[str]:
    """Ask the router whether this change deserves a clarification round.

    Best-effort: any failure means "proceed without a question".
    """
    all_docs = "\n".join(f"{i + 1}. {chunk.text}" for i, chunk in enumerate(spec))
    try:
        response = gateway.ask(
            "clarify_router", all_docs=all_docs, action=request.action, new_info=request.new_info
        )
    except ProviderError:
        return None
    for line in response.text.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("QUESTION:"):
            question = stripped[len("QUESTION:"):].strip()
            return question or None
    return None


def local_rewrite(
    spec: IntentSpec,
    chunk_id: str,
    request: Optional[ChangeRequest],
    gateway: LlmGateway,
    steer: Optional[str] = None,
) -> Chunk:
    """Let the AI propose a rewrite of one chunk; no-op if nothing changes."""
    chunk = spec.get(chunk_id)
    reasoning = chunk.verdict.reasoning if chunk.verdict else ""
    response = gateway.ask(
        "local_rewrite",
        existing=chunk.text,
        new=request.classification_text() if request else "",
        reasoning=reasoning,
        steer=steer or "",
    )
    proposed = response.text.strip()
    if not proposed or proposed == chunk.text.strip():
        return chunk
    return spec.transition(chunk_id, "propose_edit", text=proposed, origin="ai")


def suggest_strategies(
    chunk: Chunk, request: Optional[ChangeRequest], gateway: LlmGateway
) -> list[str]:
    """Up to three short resolution options; decorative, so failures are []."""
    try:
        response = gateway.ask(
            "resolution_strategies",
            existing=chunk.text,
            new=request.classification_text() if request else "",
            reasoning=chunk.verdict.reasoning if chunk.verdict else "",
        )
    except ProviderError:
        return []
    return [item for item in split_numbered_items(response.text) if item][:3]


def underline_words(
    chunk: Chunk, request: Optional[ChangeRequest], gateway: LlmGateway
) -> list[tuple[int, int]]:
    """Byte spans of the whole words that contribute most to the conflict."""
    try:
        response = gateway.ask(
            "underline_words",
            existing=chunk.text,
            new=request.classification_text() if request else "",
        )
        words = parse_word_list(response.text)
    except (ProviderError, ResponseParseError):
        return []
    return locate_word_spans(chunk.text, words)


def locate_word_spans(text: str, words: list[str]) -> list[tuple[int, int]]:
    """Whole-word occurrences as non-overlapping byte ranges; misses dropped."""
    spans: list[tuple[int, int]] = []
    for word in dict.fromkeys(words):
        word = word.strip()
        if not word:
            continue
        for m in re.finditer(rf"\b{re.escape(word)}\b", text):
            byte_start = len(text[: m.start()].encode("utf-8"))
            byte_end = byte_start + len(m.group(0).encode("utf-8"))
            spans.append((byte_start, byte_end))
    spans.sort()
    merged: list[tuple[int, int]] = []
    for span in spans:
        if merged and span[0] < merged[-1][1]:
            continue
        merged.append(span)
    return merged
