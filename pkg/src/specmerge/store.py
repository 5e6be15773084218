"""Intent specification store.

An intent spec is an ordered list of chunks, each a committed piece of text
plus review state: conflict flags, pending proposals, and an event log that
makes every change auditable and revertible. Committed text only ever changes
through ``resolve``; everything else is reversible bookkeeping.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional

from .errors import ChunkNotFoundError, SpecFormatError, StateTransitionError


class ChunkState(str, Enum):
    NEUTRAL = "neutral"
    DIRECT_CONFLICT = "direct_conflict"
    AMBIGUOUS_CONFLICT = "ambiguous_conflict"
    PROPOSED_EDIT = "proposed_edit"
    PROPOSED_ADD = "proposed_add"
    PROPOSED_DELETE = "proposed_delete"


FLAGGED_STATES = frozenset({ChunkState.DIRECT_CONFLICT, ChunkState.AMBIGUOUS_CONFLICT})
PROPOSAL_STATES = frozenset(
    {ChunkState.PROPOSED_EDIT, ChunkState.PROPOSED_ADD, ChunkState.PROPOSED_DELETE}
)


class ConflictClass(str, Enum):
    DIRECT = "direct"
    AMBIGUOUS = "ambiguous"
    NONE = "none"


@dataclass(frozen=True)
class ConflictVerdict:
    """Classification of one (existing chunk, new info) pair."""

    conflict_class: ConflictClass
    reasoning: str = ""

    def __post_init__(self) -> None:
        if self.conflict_class is not ConflictClass.NONE and not self.reasoning:
            raise ValueError("reasoning required for a non-none verdict")

    def to_dict(self) -> dict:
        return {"class": self.conflict_class.value, "reasoning": self.reasoning}

    @classmethod
    def from_dict(cls, d: dict) -> "ConflictVerdict":
        return cls(ConflictClass(d["class"]), d.get("reasoning", ""))


# Flag state a proposal returns to on revert, keyed by its stored verdict class.
_CLASS_TO_FLAG = {
    ConflictClass.DIRECT: ChunkState.DIRECT_CONFLICT,
    ConflictClass.AMBIGUOUS: ChunkState.AMBIGUOUS_CONFLICT,
    ConflictClass.NONE: ChunkState.NEUTRAL,
}
_FLAG_TO_CLASS = {v: k for k, v in _CLASS_TO_FLAG.items()}


@dataclass
class Chunk:
    """One unit of the intent specification.

    ``text`` is the committed content. ``proposed_text`` is present exactly in
    the three proposed_* states (empty string for proposed_delete). ``verdict``
    is present in every non-neutral state; for proposals that were never
    flagged it carries class=none, which is also what ``revert`` uses to find
    the pre-proposal state. ``underlined_spans`` are byte ranges into the
    UTF-8 encoding of ``text``.
    """

    id: str
    ordinal: int
    text: str
    state: ChunkState = ChunkState.NEUTRAL
    proposed_text: Optional[str] = None
    verdict: Optional[ConflictVerdict] = None
    underlined_spans: list[tuple[int, int]] = field(default_factory=list)
    origin: str = "user"

    def validate(self) -> None:
        if (self.proposed_text is not None) != (self.state in PROPOSAL_STATES):
            raise ValueError(
                f"chunk {self.id}: proposed_text presence inconsistent with state {self.state.value}"
            )
        if self.state is ChunkState.PROPOSED_DELETE and self.proposed_text != "":
            raise ValueError(f"chunk {self.id}: proposed_delete requires the empty marker")
        if (self.verdict is not None) != (self.state is not ChunkState.NEUTRAL):
            raise ValueError(
                f"chunk {self.id}: verdict presence inconsistent with state {self.state.value}"
            )
        limit = len(self.text.encode("utf-8"))
        prev_end = 0
        for start, end in self.underlined_spans:
            if not (0 <= start < end <= limit):
                raise ValueError(f"chunk {self.id}: span ({start},{end}) out of bounds")
            if start < prev_end:
                raise ValueError(f"chunk {self.id}: spans overlap or are unsorted")
            prev_end = end

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "ordinal": self.ordinal,
            "text": self.text,
            "state": self.state.value,
            "proposed_text": self.proposed_text,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "underlined_spans": [list(s) for s in self.underlined_spans],
            "origin": self.origin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Chunk":
        return cls(
            id=d["id"],
            ordinal=d["ordinal"],
            text=d["text"],
            state=ChunkState(d["state"]),
            proposed_text=d.get("proposed_text"),
            verdict=ConflictVerdict.from_dict(d["verdict"]) if d.get("verdict") else None,
            underlined_spans=[tuple(s) for s in d.get("underlined_spans", [])],
            origin=d.get("origin", "user"),
        )


@dataclass(frozen=True)
class SpecSnapshot:
    revision: int
    chunks: tuple[Chunk, ...]
    label: Optional[str] = None


@dataclass(frozen=True)
class LogEvent:
    seq: int
    kind: str
    chunk_id: Optional[str]
    payload: dict


_BULLET_RE = re.compile(r"^\s*(?:[-*]|\d+\.|#{1,6})\s+")


class IntentSpec:
    """Ordered chunk list with the review-state machine and revert history.

    Single-writer: callers serialize mutations externally (the HTTP service
    holds one lock per session); reads over a quiesced store are safe from
    any thread.
    """

    def __init__(self) -> None:
        self.chunks: list[Chunk] = []
        self.snapshots: list[SpecSnapshot] = []
        self.events: list[LogEvent] = []
        self._next_id = 0

    # -- construction ----------------------------------------------------

    @classmethod
    def load(cls, source: bytes | str, format: str = "markdown_list") -> "IntentSpec":
        """Load a document into an all-neutral spec and record snapshot 0.

        markdown_list: each bullet/numbered/header line becomes one chunk
        (marker stripped); consecutive unmarked lines form one paragraph
        chunk; blank lines separate paragraphs. spec_json: the versioned
        chunk-list schema; ids are preserved.
        """
        if isinstance(source, bytes):
            source = source.decode("utf-8")
        spec = cls()
        if format == "markdown_list":
            for text in _split_markdown_chunks(source):
                spec._append_neutral(text, chunk_id=spec._fresh_id())
        elif format == "spec_json":
            for chunk_id, text in _parse_spec_json(source):
                spec._append_neutral(text, chunk_id=chunk_id)
            # keep fresh ids clear of preserved "cN" ids
            for chunk in spec.chunks:
                m = re.fullmatch(r"c(\d+)", chunk.id)
                if m:
                    spec._next_id = max(spec._next_id, int(m.group(1)) + 1)
        else:
            raise SpecFormatError(f"unknown format {format!r}", field="format")
        spec.snapshot("loaded document")
        return spec

    def _fresh_id(self) -> str:
        cid = f"c{self._next_id}"
        self._next_id += 1
        return cid

    def _append_neutral(self, text: str, chunk_id: str) -> Chunk:
        chunk = Chunk(id=chunk_id, ordinal=len(self.chunks), text=text)
        self.chunks.append(chunk)
        return chunk

    # -- lookups ---------------------------------------------------------

    def get(self, chunk_id: str) -> Chunk:
        for chunk in self.chunks:
            if chunk.id == chunk_id:
                return chunk
        raise ChunkNotFoundError(f"unknown chunk id {chunk_id!r}")

    def __iter__(self) -> Iterator[Chunk]:
        return iter(self.chunks)

    def __len__(self) -> int:
        return len(self.chunks)

    def committed_texts(self) -> list[str]:
        return [c.text for c in self.chunks]

    def flagged(self) -> list[Chunk]:
        return [c for c in self.chunks if c.state in FLAGGED_STATES]

    # -- the state machine -----------------------------------------------

    def transition(self, chunk_id: str, event: str, **kwargs) -> Optional[Chunk]:
        """Apply one review event to a chunk.

        Events: flag_direct/flag_ambiguous (verdict=...), propose_edit
        (text=..., origin=...), propose_delete, resolve, revert, clear.
        Returns the updated chunk, or None when the chunk was removed
        (resolve on proposed_delete, revert on proposed_add).
        """
        chunk = self.get(chunk_id)
        state = chunk.state

        if event in ("flag_direct", "flag_ambiguous"):
            if state is not ChunkState.NEUTRAL:
                raise StateTransitionError(state.value, event)
            wanted = ConflictClass.DIRECT if event == "flag_direct" else ConflictClass.AMBIGUOUS
            verdict: ConflictVerdict = kwargs["verdict"]
            if verdict.conflict_class is not wanted:
                raise ValueError(f"{event} requires a {wanted.value} verdict")
            chunk.state = _CLASS_TO_FLAG[verdict.conflict_class]
            chunk.verdict = verdict
            self._log(event, chunk_id, {"verdict": verdict.to_dict()})

        elif event == "propose_edit":
            if state not in FLAGGED_STATES and state is not ChunkState.NEUTRAL:
                raise StateTransitionError(state.value, event)
            text = kwargs["text"]
            origin = kwargs.get("origin", "ai")
            if chunk.verdict is None:
                chunk.verdict = ConflictVerdict(ConflictClass.NONE)
            chunk.state = ChunkState.PROPOSED_EDIT
            chunk.proposed_text = text
            chunk.origin = origin
            self._log(event, chunk_id, {"text": text, "origin": origin})

        elif event == "propose_delete":
            if state not in FLAGGED_STATES and state is not ChunkState.NEUTRAL:
                raise StateTransitionError(state.value, event)
            if chunk.verdict is None:
                chunk.verdict = ConflictVerdict(ConflictClass.NONE)
            chunk.state = ChunkState.PROPOSED_DELETE
            chunk.proposed_text = ""
            chunk.origin = kwargs.get("origin", "ai")
            self._log(event, chunk_id, {"origin": chunk.origin})

        elif event == "resolve":
            if state is ChunkState.NEUTRAL:
                raise StateTransitionError(state.value, event)
            self._log(event, chunk_id, {})
            if state is ChunkState.PROPOSED_DELETE:
                self._remove(chunk)
                return None
            if state in (ChunkState.PROPOSED_EDIT, ChunkState.PROPOSED_ADD):
                chunk.text = chunk.proposed_text or ""
            chunk.proposed_text = None
            chunk.verdict = None
            chunk.state = ChunkState.NEUTRAL
            chunk.underlined_spans = []

        elif event == "revert":
            if state not in PROPOSAL_STATES:
                raise StateTransitionError(state.value, event)
            self._log(event, chunk_id, {})
            if state is ChunkState.PROPOSED_ADD:
                self._remove(chunk)
                return None
            prior = _CLASS_TO_FLAG[chunk.verdict.conflict_class]
            chunk.proposed_text = None
            chunk.state = prior
            if prior is ChunkState.NEUTRAL:
                chunk.verdict = None

        elif event == "clear":
            if state not in FLAGGED_STATES:
                raise StateTransitionError(state.value, event)
            chunk.state = ChunkState.NEUTRAL
            chunk.verdict = None
            chunk.underlined_spans = []
            self._log(event, chunk_id, {})

        else:
            raise StateTransitionError(state.value, event)

        return chunk

    def propose_add(self, text: str, origin: str = "ai", _chunk_id: Optional[str] = None) -> Chunk:
        """Append a new chunk pending review (no committed text yet)."""
        chunk = Chunk(
            id=_chunk_id or self._fresh_id(),
            ordinal=len(self.chunks),
            text="",
            state=ChunkState.PROPOSED_ADD,
            proposed_text=text,
            verdict=ConflictVerdict(ConflictClass.NONE),
            origin=origin,
        )
        self.chunks.append(chunk)
        self._log("propose_add", chunk.id, {"text": text, "origin": origin})
        return chunk

    def add_info(self, text: str, origin: str = "user", _chunk_id: Optional[str] = None) -> Chunk:
        """Commit a manually added chunk immediately (no review round)."""
        chunk = self._append_neutral(text, chunk_id=_chunk_id or self._fresh_id())
        chunk.origin = origin
        self._log("add_info", chunk.id, {"text": text, "origin": origin})
        return chunk

    def set_underlines(self, chunk_id: str, spans: Iterable[tuple[int, int]]) -> Chunk:
        chunk = self.get(chunk_id)
        chunk.underlined_spans = sorted((int(s), int(e)) for s, e in spans)
        chunk.validate()
        self._log("set_underlines", chunk_id, {"spans": [list(s) for s in chunk.underlined_spans]})
        return chunk

    def _remove(self, chunk: Chunk) -> None:
        self.chunks.remove(chunk)
        for i, c in enumerate(self.chunks):
            c.ordinal = i

    # -- global actions ---------------------------------------------------

    def revert_all(self) -> None:
        """Drop every pending proposal, restoring pre-proposal states."""
        self._log("revert_all", None, {})
        for chunk in list(self.chunks):
            if chunk.state is ChunkState.PROPOSED_ADD:
                self._remove(chunk)
            elif chunk.state in PROPOSAL_STATES:
                prior = _CLASS_TO_FLAG[chunk.verdict.conflict_class]
                chunk.proposed_text = None
                chunk.state = prior
                if prior is ChunkState.NEUTRAL:
                    chunk.verdict = None

    def clear_all_conflicts(self) -> None:
        """Put every flagged chunk back into a neutral state (texts untouched)."""
        self._log("clear_all_conflicts", None, {})
        for chunk in self.chunks:
            if chunk.state in FLAGGED_STATES:
                chunk.state = ChunkState.NEUTRAL
                chunk.verdict = None
                chunk.underlined_spans = []

    # -- snapshots ---------------------------------------------------------

    def snapshot(self, label: Optional[str] = None) -> int:
        revision = len(self.snapshots)
        frozen = tuple(copy.deepcopy(c) for c in self.chunks)
        self.snapshots.append(SpecSnapshot(revision=revision, chunks=frozen, label=label))
        self._log("snapshot", None, {"label": label, "revision": revision})
        return revision

    def restore(self, revision: int) -> None:
        """Make the spec identical to a recorded snapshot; records a new one."""
        if not (0 <= revision < len(self.snapshots)):
            raise ChunkNotFoundError(f"unknown revision {revision}")
        self._log("restore", None, {"revision": revision})
        self.chunks = [copy.deepcopy(c) for c in self.snapshots[revision].chunks]
        self.snapshot(f"restore of revision {revision}")

    # -- event log ----------------------------------------------------------

    def _log(self, kind: str, chunk_id: Optional[str], payload: dict) -> None:
        self.events.append(LogEvent(len(self.events), kind, chunk_id, payload))

    def replay(self) -> "IntentSpec":
        """Rebuild the spec by applying the event log to snapshot 0."""
        if not self.snapshots:
            raise ValueError("no snapshot 0 to replay from")
        twin = IntentSpec()
        twin.chunks = [copy.deepcopy(c) for c in self.snapshots[0].chunks]
        twin._next_id = self._next_id_after_load()
        for event in self.events:
            twin._apply_logged(event)
        return twin

    def _next_id_after_load(self) -> int:
        base = 0
        for chunk in self.snapshots[0].chunks:
            m = re.fullmatch(r"c(\d+)", chunk.id)
            if m:
                base = max(base, int(m.group(1)) + 1)
        return base

    def _apply_logged(self, event: LogEvent) -> None:
        kind, cid, p = event.kind, event.chunk_id, event.payload
        if kind in ("flag_direct", "flag_ambiguous"):
            self.transition(cid, kind, verdict=ConflictVerdict.from_dict(p["verdict"]))
        elif kind == "propose_edit":
            self.transition(cid, kind, text=p["text"], origin=p["origin"])
        elif kind == "propose_delete":
            self.transition(cid, kind, origin=p["origin"])
        elif kind in ("resolve", "revert", "clear"):
            self.transition(cid, kind)
        elif kind == "propose_add":
            self.propose_add(p["text"], origin=p["origin"], _chunk_id=cid)
        elif kind == "add_info":
            self.add_info(p["text"], origin=p["origin"], _chunk_id=cid)
        elif kind == "set_underlines":
            self.set_underlines(cid, [tuple(s) for s in p["spans"]])
        elif kind == "revert_all":
            self.revert_all()
        elif kind == "clear_all_conflicts":
            self.clear_all_conflicts()
        elif kind == "snapshot":
            self.snapshot(p["label"])
        elif kind == "restore":
            self.restore(p["revision"])
        elif kind == "review_overlay":
            self.restore_review_state({"chunks": p["chunks"], "next_id": p["next_id"]})
        else:
            raise ValueError(f"unknown event kind {kind!r}")

    # -- serialization -----------------------------------------------------

    def to_spec_json(self) -> str:
        payload = {
            "version": 1,
            "chunks": [{"id": c.id, "text": c.text, "state": c.state.value} for c in self.chunks],
        }
        return json.dumps(payload, ensure_ascii=False, indent=2)

    def to_markdown(self) -> str:
        """One "- " line per committed chunk; pending adds are excluded."""
        lines = []
        for chunk in self.chunks:
            if chunk.state is ChunkState.PROPOSED_ADD:
                continue
            lines.append("- " + " ".join(chunk.text.splitlines()))
        return "\n".join(lines) + ("\n" if lines else "")

    def to_review_dict(self) -> dict:
        """Full-fidelity dump (review sidecar / snapshot wire format)."""
        return {
            "revision": len(self.snapshots) - 1,
            "chunks": [c.to_dict() for c in self.chunks],
            "next_id": self._next_id,
        }

    def restore_review_state(self, payload: dict) -> None:
        """Overlay a review sidecar: replaces chunk list wholesale."""
        chunks = [Chunk.from_dict(d) for d in payload["chunks"]]
        self.chunks = chunks
        self._next_id = max(self._next_id, payload.get("next_id", 0))
        self.validate()
        self._log("review_overlay", None, {"chunks": [c.to_dict() for c in self.chunks],
                                           "next_id": self._next_id})

    def validate(self) -> None:
        ordinals = [c.ordinal for c in self.chunks]
        if ordinals != list(range(len(self.chunks))):
            raise ValueError("ordinals are not dense from 0")
        seen = set()
        for chunk in self.chunks:
            if chunk.id in seen:
                raise ValueError(f"duplicate chunk id {chunk.id}")
            seen.add(chunk.id)
            chunk.validate()


def _split_markdown_chunks(source: str) -> list[str]:
    """Bullet/numbered/header lines are single chunks; bare lines join into
    paragraphs; blank lines separate paragraphs."""
    chunks: list[str] = []
    paragraph: list[str] = []

    def flush() -> None:
        if paragraph:
            chunks.append("\n".join(paragraph))
            paragraph.clear()

    for line in source.splitlines():
        if not line.strip():
            flush()
            continue
        m = _BULLET_RE.match(line)
        if m:
            flush()
            chunks.append(line[m.end():].strip())
        else:
            paragraph.append(line.strip())
    flush()
    return [c for c in chunks if c]


def _parse_spec_json(source: str) -> list[tuple[str, str]]:
    try:
        payload = json.loads(source) if source.strip() else {"version": 1, "chunks": []}
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"invalid JSON: {exc}", field="document") from exc
    if not isinstance(payload, dict):
        raise SpecFormatError("spec_json root must be an object", field="document")
    if payload.get("version") != 1:
        raise SpecFormatError("unsupported or missing version", field="version")
    chunks = payload.get("chunks")
    if not isinstance(chunks, list):
        raise SpecFormatError("chunks must be a list", field="chunks")
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    valid_states = {s.value for s in ChunkState}
    for i, entry in enumerate(chunks):
        where = f"chunks[{i}]"
        if not isinstance(entry, dict):
            raise SpecFormatError(f"{where} must be an object", field=where)
        for key in ("id", "text", "state"):
            if key not in entry:
                raise SpecFormatError(f"{where} missing {key!r}", field=f"{where}.{key}")
        if not isinstance(entry["id"], str) or not entry["id"]:
            raise SpecFormatError(f"{where}.id must be a non-empty string", field=f"{where}.id")
        if not isinstance(entry["text"], str):
            raise SpecFormatError(f"{where}.text must be a string", field=f"{where}.text")
        if entry["state"] not in valid_states:
            raise SpecFormatError(
                f"{where}.state {entry['state']!r} is not a chunk state", field=f"{where}.state"
            )
        if entry["id"] in seen:
            raise SpecFormatError(f"duplicate id {entry['id']!r}", field=f"{where}.id")
        seen.add(entry["id"])
        out.append((entry["id"], entry["text"]))
    return out


def load_spec(source: bytes | str, format: str = "markdown_list") -> IntentSpec:
    return IntentSpec.load(source, format=format)
