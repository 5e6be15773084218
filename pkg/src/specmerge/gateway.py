"""Uniform access to language-model completions.

Prompt texts live in versioned template files under ``prompts/`` so prompt
iteration needs no code change. Three providers share one interface: a live
OpenAI-compatible chat-completions client, a strict scripted provider keyed
by (template, variables digest) for deterministic tests, and a static
provider that answers per template regardless of variables.

The parsers in this module never raise anything but the typed errors in
``errors.py``, no matter the input.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import requests

from .errors import (
    CountMismatchError,
    FixtureMissError,
    ProviderError,
    ResponseParseError,
)
from .store import Chunk, ConflictClass, ConflictVerdict

TEMPLATE_NAMES = (
    "conflict_classify",
    "entity_extract",
    "global_rewrite",
    "local_rewrite",
    "clarify_router",
    "underline_words",
    "resolution_strategies",
    "drop_all_docs",
    "inksync_edits",
)

_PLACEHOLDER_RE = re.compile(r"(?<!\{)\{([A-Za-z_][A-Za-z0-9_]*)\}(?!\})")


def placeholders(text: str) -> set[str]:
    return set(_PLACEHOLDER_RE.findall(text))


def render_text(text: str, variables: dict[str, str]) -> str:
    """Substitute {name} placeholders; {{ and }} escape literal braces.

    Raises ValueError if any placeholder is unbound.
    """
    missing = placeholders(text) - set(variables)
    if missing:
        raise ValueError(f"unbound placeholders: {sorted(missing)}")
    rendered = _PLACEHOLDER_RE.sub(lambda m: str(variables[m.group(1)]), text)
    return rendered.replace("{{", "{").replace("}}", "}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system_text: str
    input_text: str

    def render(self, variables: dict[str, str]) -> tuple[str, str]:
        return render_text(self.system_text, variables), render_text(self.input_text, variables)


def _read_template_file(filename: str) -> str:
    path = resources.files("specmerge.prompts").joinpath(filename)
    text = path.read_text(encoding="utf-8")
    # one trailing newline is a file convention, not prompt content
    return text[:-1] if text.endswith("\n") else text


def load_catalog() -> dict[str, PromptTemplate]:
    catalog: dict[str, PromptTemplate] = {}
    for name in TEMPLATE_NAMES:
        try:
            system = _read_template_file(f"{name}.system.txt")
        except FileNotFoundError:
            system = ""
        catalog[name] = PromptTemplate(name, system, _read_template_file(f"{name}.input.txt"))
    return catalog


def action_prompt(action: str) -> str:
    """Baseline action preamble: one text for add/edit, another for change."""
    if action in ("add", "edit"):
        return _read_template_file("action_add.txt")
    if action == "change":
        return _read_template_file("action_change.txt")
    raise ValueError(f"unknown action {action!r}")


ACTION_INSTRUCTIONS = {"add": "to add to", "change": "to integrate into", "edit": "to integrate into"}


# -- completion plumbing ---------------------------------------------------


@dataclass(frozen=True)
class CompletionRequest:
    template: str
    variables: dict[str, str]
    model: str = ""
    temperature: float = 0.0


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    latency_ms: float
    provider: str


def variables_digest(variables: dict[str, str]) -> str:
    canonical = json.dumps(variables, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ScriptedProvider:
    """Replays fixture responses keyed by "template:digest". Misses raise."""

    name = "scripted"

    def __init__(self, responses: Optional[dict[str, str]] = None):
        self.responses = dict(responses or {})

    @classmethod
    def from_file(cls, path: str) -> "ScriptedProvider":
        with open(path, encoding="utf-8") as f:
            return cls(json.load(f))

    def to_file(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.responses, f, ensure_ascii=False, indent=2, sort_keys=True)

    def add(self, template: str, variables: dict[str, str], response: str) -> None:
        self.responses[f"{template}:{variables_digest(variables)}"] = response

    def complete(self, request: CompletionRequest, system: str, user: str) -> str:
        key = f"{request.template}:{variables_digest(request.variables)}"
        if key not in self.responses:
            raise FixtureMissError(request.template, variables_digest(request.variables))
        return self.responses[key]


class StaticProvider:
    """Answers each template with a fixed response, whatever the variables."""

    name = "static"

    def __init__(self, by_template: Optional[dict[str, str]] = None, default: Optional[str] = None):
        self.by_template = dict(by_template or {})
        self.default = default

    def complete(self, request: CompletionRequest, system: str, user: str) -> str:
        if request.template in self.by_template:
            return self.by_template[request.template]
        if self.default is not None:
            return self.default
        raise FixtureMissError(request.template, "static-default")


class LiveProvider:
    """OpenAI-compatible chat-completions client with bounded retry."""

    name = "live"

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: Optional[str] = None,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff: float = 0.5,
    ):
        self.base_url = (base_url or os.environ.get("LLM_BASE_URL", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("LLM_API_KEY", "")
        self.model = model or os.environ.get("LLM_MODEL", "")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff

    def complete(self, request: CompletionRequest, system: str, user: str) -> str:
        if not self.base_url:
            raise ProviderError("no provider configured (LLM_BASE_URL unset)")
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        body = {
            "model": request.model or self.model,
            "temperature": request.temperature,
            "messages": messages,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff * (2**attempt))
        raise ProviderError(f"provider failed after {self.max_retries + 1} attempts: {last_error}")


class LlmGateway:
    """Renders templates and dispatches completions through one provider.

    ``max_in_flight`` bounds concurrent calls (classification fan-out).
    """

    def __init__(
        self,
        provider,
        model: str = "",
        temperature: float = 0.0,
        max_in_flight: int = 8,
        catalog: Optional[dict[str, PromptTemplate]] = None,
    ):
        self.provider = provider
        self.model = model
        self.temperature = temperature
        self.max_in_flight = max_in_flight
        self.catalog = catalog or load_catalog()
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        template = self.catalog[request.template]
        system, user = template.render(request.variables)
        start = time.perf_counter()
        with self._gate:
            text = self.provider.complete(request, system, user)
        latency_ms = (time.perf_counter() - start) * 1000.0
        return CompletionResponse(text=text, latency_ms=latency_ms, provider=self.provider.name)

    def ask(self, template: str, **variables: str) -> CompletionResponse:
        return self.complete(
            CompletionRequest(
                template=template,
                variables={k: str(v) for k, v in variables.items()},
                model=self.model,
                temperature=self.temperature,
            )
        )


# -- response parsers ------------------------------------------------------

_DECODER = json.JSONDecoder()


def _first_json_value(raw: str, opener: str):
    """First parseable JSON value in raw starting at an opener character."""
    for i, ch in enumerate(raw):
        if ch == opener:
            try:
                value, _ = _DECODER.raw_decode(raw[i:])
            except json.JSONDecodeError:
                continue
            return value
    return None


_CLASS_TOKENS = {
    "yes": ConflictClass.DIRECT,
    "ambiguous": ConflictClass.AMBIGUOUS,
    "no": ConflictClass.NONE,
}


def parse_conflict_json(raw: str) -> ConflictVerdict:
    """Extract the classifier's JSON verdict, tolerating fences and prose.

    yes -> direct, ambiguous -> ambiguous, no -> none (case-insensitive).
    """
    obj = _first_json_value(raw, "{")
    if not isinstance(obj, dict):
        raise ResponseParseError("no JSON object in classifier output", raw)
    token = obj.get("is_conflicting")
    if not isinstance(token, str):
        raise ResponseParseError("missing is_conflicting", raw)
    cls = _CLASS_TOKENS.get(token.strip().strip(".,").lower())
    if cls is None:
        raise ResponseParseError(f"is_conflicting token {token!r} not recognized", raw)
    reasoning = obj.get("reasoning")
    reasoning = reasoning if isinstance(reasoning, str) else ""
    if cls is not ConflictClass.NONE and not reasoning:
        raise ResponseParseError("conflict verdict without reasoning", raw)
    return ConflictVerdict(cls, reasoning)


class _DeleteMarker:
    __slots__ = ()

    def __repr__(self) -> str:
        return "DELETE"


DELETE = _DeleteMarker()

_ITEM_RE = re.compile(r"^\s{0,3}(\d+)\.\s?", re.MULTILINE)
_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*$", re.MULTILINE)


def split_numbered_items(raw: str) -> list[str]:
    """Bodies of "N." items in order; bodies run until the next item."""
    text = _FENCE_RE.sub("", raw)
    matches = list(_ITEM_RE.finditer(text))
    items = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        items.append(text[m.end():end].strip())
    return items


def parse_numbered_list(raw: str, expected_n: int) -> list:
    """Exactly expected_n items; a body of "DELETE" becomes the marker."""
    if expected_n < 1:
        raise ValueError("expected_n must be >= 1")
    items = split_numbered_items(raw)
    if len(items) != expected_n:
        raise CountMismatchError(expected_n, len(items), raw)
    return [DELETE if item.strip() == "DELETE" else item for item in items]


@dataclass(frozen=True)
class EditOp:
    original_text: str
    replace_text: str
    document_id: object = None


def parse_edits_json(raw: str) -> list[EditOp]:
    obj = _first_json_value(raw, "{")
    if not isinstance(obj, dict) or "edits" not in obj:
        raise ResponseParseError("no JSON object with an edits key", raw)
    edits = obj["edits"]
    if not isinstance(edits, list):
        raise ResponseParseError("edits is not a list", raw)
    out = []
    for entry in edits:
        if not isinstance(entry, dict):
            continue
        original = entry.get("original_text")
        replacement = entry.get("replace_text")
        if isinstance(original, str) and isinstance(replacement, str) and original:
            out.append(EditOp(original, replacement, entry.get("document_id")))
    return out


def bind_edits(edits: list[EditOp], chunks: list[Chunk]) -> list[tuple[str, EditOp]]:
    """Locate each edit's original_text verbatim in some chunk.

    The response's document_id is ignored on purpose; the first chunk (by
    ordinal) containing the text wins, and unlocatable edits are dropped.
    """
    bound = []
    for edit in edits:
        for chunk in chunks:
            if edit.original_text in chunk.text:
                bound.append((chunk.id, edit))
                break
    return bound


def parse_triples_json(raw: str) -> list[tuple[str, str, str]]:
    """JSON triple list from the extraction prompt; tolerant of dict form."""
    value = _first_json_value(raw, "[")
    if not isinstance(value, list):
        raise ResponseParseError("no JSON list in extraction output", raw)
    triples = []
    for entry in value:
        if isinstance(entry, list) and len(entry) == 3:
            s, r, o = entry
        elif isinstance(entry, dict) and {"subject", "relation", "object"} <= set(entry):
            s, r, o = entry["subject"], entry["relation"], entry["object"]
        else:
            continue
        if all(isinstance(x, str) for x in (s, r, o)):
            triples.append((s, r, o))
    return triples


def parse_word_list(raw: str) -> list[str]:
    value = _first_json_value(raw, "[")
    if not isinstance(value, list):
        raise ResponseParseError("no JSON list in underline output", raw)
    return [w for w in value if isinstance(w, str) and w.strip()]
