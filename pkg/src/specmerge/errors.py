"""Exception types shared across the package."""

from __future__ import annotations


class SpecmergeError(Exception):
    """Base class for all package errors."""


class SpecFormatError(SpecmergeError):
    """A document or spec_json payload violates the expected format."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class ChunkNotFoundError(SpecmergeError):
    """Referenced chunk id (or snapshot revision) does not exist."""


class StateTransitionError(SpecmergeError):
    """Requested event is illegal from the chunk's current state."""

    def __init__(self, state: str, event: str):
        super().__init__(f"event {event!r} is illegal from state {state!r}")
        self.state = state
        self.event = event


class ProviderError(SpecmergeError):
    """Completion provider failed after exhausting retries."""


class FixtureMissError(ProviderError):
    """Scripted provider has no entry for the requested key."""

    def __init__(self, template: str, digest: str):
        super().__init__(f"no scripted response for {template}:{digest}")
        self.template = template
        self.digest = digest


class ResponseParseError(SpecmergeError):
    """Model output could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class CountMismatchError(ResponseParseError):
    """Numbered-list response had the wrong number of items."""

    def __init__(self, expected: int, got: int, raw: str):
        super().__init__(f"expected {expected} numbered items, got {got}", raw)
        self.expected = expected
        self.got = got


class BenchmarkLoadError(SpecmergeError):
    """Benchmark file violates the dataset schema or its manifest."""
