"""Benchmark datasets, baselines, confusion-matrix metrics, FPR experiment.

A dataset is a chunk list plus prepared modifications, each with the ground
truth set of chunks it conflicts with. Three methods are comparable:
``kg_pagerank`` (graph retrieval + pairwise classification), ``drop_all_docs``
(every chunk in one prompt, CONFLICT/IDS/PASS protocol) and ``inksync``
(string-replace edit suggestions; a chunk counts as predicted when an edit's
original_text matches it verbatim).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .engine import ChangeRequest, check_for_conflicts
from .errors import BenchmarkLoadError, ProviderError, ResponseParseError
from .gateway import (
    LlmGateway,
    action_prompt,
    bind_edits,
    parse_conflict_json,
    parse_edits_json,
)
from .graph import PprConfig, induce_graph
from .store import ConflictClass, IntentSpec

METHODS = ("kg_pagerank", "drop_all_docs", "inksync")

# Published chunk/case counts for the known dataset names.
KNOWN_DATASET_COUNTS = {
    "labyrinth": (35, 17),
    "mars": (30, 25),
    "finmem": (30, 17),
    "cursorrules": (65, 19),
}


@dataclass(frozen=True)
class BenchmarkCase:
    id: str
    action: str
    new_info: str
    target: Optional[str]
    ground_truth: frozenset[str]

    def to_request(self) -> ChangeRequest:
        return ChangeRequest(action=self.action, new_info=self.new_info, target=self.target)


@dataclass
class Benchmark:
    name: str
    chunks: list[tuple[str, str]]
    cases: list[BenchmarkCase]

    def chunk_ids(self) -> list[str]:
        return [cid for cid, _ in self.chunks]

    def fresh_spec(self) -> IntentSpec:
        payload = {
            "version": 1,
            "chunks": [{"id": cid, "text": text, "state": "neutral"} for cid, text in self.chunks],
        }
        return IntentSpec.load(json.dumps(payload), format="spec_json")


def load_benchmark(path: str) -> Benchmark:
    """Load and validate a dataset file against the schema and its manifest."""
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise BenchmarkLoadError(f"{path}: {exc}") from exc

    def fail(where: str, message: str):
        raise BenchmarkLoadError(f"{path}: {where}: {message}")

    if not isinstance(payload, dict):
        fail("$", "root must be an object")
    name = payload.get("name")
    if not isinstance(name, str) or not name:
        fail("name", "must be a non-empty string")

    chunks: list[tuple[str, str]] = []
    seen_ids: set[str] = set()
    raw_chunks = payload.get("chunks")
    if not isinstance(raw_chunks, list) or not raw_chunks:
        fail("chunks", "must be a non-empty list")
    for i, entry in enumerate(raw_chunks):
        where = f"chunks[{i}]"
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str) or not isinstance(entry.get("text"), str):
            fail(where, "must be an object with string id and text")
        if entry["id"] in seen_ids:
            fail(where, f"duplicate chunk id {entry['id']!r}")
        seen_ids.add(entry["id"])
        chunks.append((entry["id"], entry["text"]))

    cases: list[BenchmarkCase] = []
    raw_cases = payload.get("cases")
    if not isinstance(raw_cases, list):
        fail("cases", "must be a list")
    for i, entry in enumerate(raw_cases):
        where = f"cases[{i}]"
        if not isinstance(entry, dict):
            fail(where, "must be an object")
        case_id = entry.get("id")
        action = entry.get("action")
        new_info = entry.get("new_info")
        target = entry.get("target")
        truth = entry.get("ground_truth")
        if not isinstance(case_id, str) or not case_id:
            fail(f"{where}.id", "must be a non-empty string")
        if action not in ("add", "change", "edit"):
            fail(f"{where}.action", f"unknown action {action!r}")
        if not isinstance(new_info, str) or not new_info.strip():
            fail(f"{where}.new_info", "must be a non-empty string")
        if (target is not None) != (action == "edit"):
            fail(f"{where}.target", "required exactly when action is 'edit'")
        if target is not None and target not in seen_ids:
            fail(f"{where}.target", f"unknown chunk id {target!r}")
        if not isinstance(truth, list):
            fail(f"{where}.ground_truth", "must be a list")
        for cid in truth:
            if cid not in seen_ids:
                fail(f"{where}.ground_truth", f"unknown chunk id {cid!r}")
        if target is not None and target in truth:
            fail(f"{where}.ground_truth", "must not contain the edit target")
        cases.append(BenchmarkCase(case_id, action, new_info, target, frozenset(truth)))

    expected = KNOWN_DATASET_COUNTS.get(name.strip().lower())
    expected_chunks = payload.get("expected_chunks", expected[0] if expected else None)
    expected_cases = payload.get("expected_cases", expected[1] if expected else None)
    if expected_chunks is not None and len(chunks) != expected_chunks:
        fail("chunks", f"manifest expects {expected_chunks} chunks, found {len(chunks)}")
    if expected_cases is not None and len(cases) != expected_cases:
        fail("cases", f"manifest expects {expected_cases} cases, found {len(cases)}")

    return Benchmark(name=name, chunks=chunks, cases=cases)


# -- metrics -------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float


def compute_metrics(predicted: set, truth: set, universe_size: int) -> Metrics:
    """Confusion-matrix scores over a chunk universe.

    Conventions: empty truth and empty prediction score 1.0 on
    precision/recall/F1; a single zero denominator scores that metric 0.
    """
    tp = len(predicted & truth)
    fp = len(predicted - truth)
    fn = len(truth - predicted)
    tn = universe_size - tp - fp - fn
    accuracy = (tp + tn) / universe_size if universe_size else 1.0
    if not truth and not predicted:
        precision = recall = f1 = 1.0
    else:
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return Metrics(tp, fp, fn, tn, accuracy, precision, recall, f1)


@dataclass
class CaseResult:
    case_id: str
    predicted: set[str] = field(default_factory=set)
    metrics: Optional[Metrics] = None
    retrieval_recall: Optional[float] = None
    classify_latency_ms: float = 0.0
    retrieval_latency_ms: float = 0.0
    failed: bool = False
    warnings: list[str] = field(default_factory=list)


METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass
class MetricsReport:
    method: str
    dataset: str
    model: str
    cases: list[CaseResult]
    aggregates: dict[str, tuple[float, float]] = field(default_factory=dict)
    warning_count: int = 0

    def scored_cases(self) -> list[CaseResult]:
        return [c for c in self.cases if not c.failed]

    def aggregate(self) -> None:
        scored = self.scored_cases()
        self.warning_count = sum(len(c.warnings) for c in self.cases)
        for metric in METRIC_NAMES:
            values = [getattr(c.metrics, metric) for c in scored]
            if values:
                arr = np.asarray(values, dtype=float)
                self.aggregates[metric] = (float(arr.mean()), float(arr.std()))
            else:
                self.aggregates[metric] = (math.nan, math.nan)
        retrieval = [c.retrieval_recall for c in scored if c.retrieval_recall is not None]
        if retrieval:
            arr = np.asarray(retrieval, dtype=float)
            self.aggregates["retrieval_recall"] = (float(arr.mean()), float(arr.std()))

    def mean_classify_latency_ms(self) -> float:
        scored = self.scored_cases()
        if not scored:
            return 0.0
        return float(np.mean([c.classify_latency_ms for c in scored]))

    def to_json_dict(self) -> dict:
        def clean(x: float) -> Optional[float]:
            return None if math.isnan(x) else x

        return {
            "method": self.method,
            "dataset": self.dataset,
            "model": self.model,
            "cases": [
                {
                    "case_id": c.case_id,
                    "failed": c.failed,
                    "predicted": sorted(c.predicted),
                    "metrics": None
                    if c.metrics is None
                    else {
                        "tp": c.metrics.tp,
                        "fp": c.metrics.fp,
                        "fn": c.metrics.fn,
                        "tn": c.metrics.tn,
                        "accuracy": c.metrics.accuracy,
                        "precision": c.metrics.precision,
                        "recall": c.metrics.recall,
                        "f1": c.metrics.f1,
                    },
                    "retrieval_recall": c.retrieval_recall,
                    "classify_latency_ms": c.classify_latency_ms,
                    "retrieval_latency_ms": c.retrieval_latency_ms,
                    "warnings": c.warnings,
                }
                for c in self.cases
            ],
            "aggregates": {
                k: {"mean": clean(v[0]), "std": clean(v[1])} for k, v in self.aggregates.items()
            },
            "mean_classify_latency_ms": self.mean_classify_latency_ms(),
            "warning_count": self.warning_count,
            "failed_cases": [c.case_id for c in self.cases if c.failed],
        }


def markdown_table(reports: list[MetricsReport]) -> str:
    """One row per method, mean ± stddev per metric."""
    lines = [
        "| method | accuracy | precision | recall | f1 |",
        "| --- | --- | --- | --- | --- |",
    ]
    for report in reports:
        cells = []
        for metric in METRIC_NAMES:
            mean, std = report.aggregates.get(metric, (math.nan, math.nan))
            cells.append("n/a" if math.isnan(mean) else f"{mean:.3f} ± {std:.3f}")
        lines.append(f"| {report.method} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


@dataclass
class EvalConfig:
    ppr: PprConfig = field(default_factory=PprConfig)
    direct_only: bool = False
    model: str = ""


def _positive_classes(cfg: EvalConfig) -> set[ConflictClass]:
    if cfg.direct_only:
        return {ConflictClass.DIRECT}
    return {ConflictClass.DIRECT, ConflictClass.AMBIGUOUS}


def _docs_for_case(bench: Benchmark, case: BenchmarkCase) -> list[tuple[str, str]]:
    """Chunks presented to a baseline; the edit target is excluded."""
    return [(cid, text) for cid, text in bench.chunks if cid != case.target]


def _numbered(docs: list[tuple[str, str]]) -> str:
    return "\n".join(f"{i + 1}. {text}" for i, (_, text) in enumerate(docs))


_IDS_RE = re.compile(r"IDS:(.*)$", re.IGNORECASE)


def parse_drop_all_docs_response(raw: str, docs: list[tuple[str, str]]) -> tuple[set[str], list[str]]:
    """Map a CONFLICT/IDS/PASS response to chunk ids (1-based positions)."""
    warnings: list[str] = []
    ids: list[int] = []
    for line in raw.splitlines():
        m = _IDS_RE.search(line)
        if m:
            ids.extend(int(tok) for tok in re.findall(r"\d+", m.group(1)))
    if ids:
        predicted = set()
        for one_based in ids:
            if 1 <= one_based <= len(docs):
                predicted.add(docs[one_based - 1][0])
            else:
                warnings.append(f"id {one_based} out of range, ignored")
        return predicted, warnings
    if re.search(r"\bPASS\b", raw):
        return set(), warnings
    warnings.append("response had neither IDS: nor PASS; recorded as zero predictions")
    return set(), warnings


def run_method(
    method: str,
    bench: Benchmark,
    gateway: LlmGateway,
    cfg: Optional[EvalConfig] = None,
) -> MetricsReport:
    """Score one method over every case; failed cases leave the aggregates."""
    cfg = cfg or EvalConfig()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    report = MetricsReport(
        method=method, dataset=bench.name, model=cfg.model or gateway.model, cases=[]
    )

    graph = None
    if method == "kg_pagerank":
        graph = induce_graph(bench.fresh_spec(), gateway)

    positives = _positive_classes(cfg)
    for case in bench.cases:
        result = CaseResult(case_id=case.id)
        report.cases.append(result)
        universe = len(bench.chunks) - (1 if case.target else 0)
        try:
            if method == "kg_pagerank":
                spec = bench.fresh_spec()
                detection = check_for_conflicts(spec, graph, case.to_request(), gateway, cfg.ppr)
                result.warnings.extend(detection.warnings)
                result.predicted = {
                    cid
                    for cid, verdict in detection.verdicts.items()
                    if verdict.conflict_class in positives
                }
                candidates = {cid for cid, _ in detection.candidates}
                result.retrieval_recall = (
                    len(candidates & case.ground_truth) / len(case.ground_truth)
                    if case.ground_truth
                    else 1.0
                )
                result.retrieval_latency_ms = detection.retrieval_latency_ms
                if detection.classify_latencies_ms:
                    result.classify_latency_ms = float(np.mean(detection.classify_latencies_ms))
            elif method == "drop_all_docs":
                docs = _docs_for_case(bench, case)
                response = gateway.ask(
                    "drop_all_docs",
                    action_prompt=action_prompt(case.action),
                    all_docs=_numbered(docs),
                    new_info=case.new_info,
                )
                result.classify_latency_ms = response.latency_ms
                result.predicted, warnings = parse_drop_all_docs_response(response.text, docs)
                result.warnings.extend(warnings)
            else:  # inksync
                docs = _docs_for_case(bench, case)
                response = gateway.ask(
                    "inksync_edits",
                    action_prompt=action_prompt(case.action),
                    all_docs=_numbered(docs),
                    new_info=case.new_info,
                )
                result.classify_latency_ms = response.latency_ms
                spec = bench.fresh_spec()
                doc_ids = {cid for cid, _ in docs}
                chunks = [c for c in spec if c.id in doc_ids]
                try:
                    edits = parse_edits_json(response.text)
                except ResponseParseError as exc:
                    result.warnings.append(f"unparseable edits, zero predictions: {exc}")
                    edits = []
                result.predicted = {cid for cid, _ in bind_edits(edits, chunks)}
        except ProviderError as exc:
            result.failed = True
            result.warnings.append(f"provider failure, case excluded: {exc}")
            continue
        result.metrics = compute_metrics(result.predicted, set(case.ground_truth), universe)

    report.aggregate()
    return report


# -- FPR sensitivity / latency experiment --------------------------------------


@dataclass(frozen=True)
class FprExperimentConfig:
    fpr_levels: tuple[float, ...] = (0.0, 0.5, 0.9)
    rng_seed: int = 0
    direct_only: bool = False

    def __post_init__(self) -> None:
        if list(self.fpr_levels) != sorted(self.fpr_levels):
            raise ValueError("fpr_levels must be sorted ascending")
        if any(not (0.0 <= f < 1.0) for f in self.fpr_levels):
            raise ValueError("fpr_levels must be in [0, 1)")


def injected_count(truth_size: int, fpr: float) -> int:
    """k such that k/(k+truth_size) is as close as possible to fpr."""
    if truth_size <= 0:
        return 0
    return int(math.floor(fpr * truth_size / (1.0 - fpr) + 0.5))


@dataclass
class FprLevelResult:
    fpr: float
    mean_f1: float
    mean_latency_ms: float
    mean_achieved_fpr: float
    per_case: list[dict] = field(default_factory=list)


def run_fpr_experiment(
    bench: Benchmark,
    cfg: FprExperimentConfig,
    gateway: LlmGateway,
) -> list[FprLevelResult]:
    """Oracle-retrieval study: classify ground truth plus injected noise.

    Retrieval is bypassed; each case's classifier input is its ground-truth
    chunks plus enough sampled non-conflicting chunks to reach the target
    false positive rate (seeded, without replacement, capped by supply).
    """
    cases = [c for c in bench.cases if c.ground_truth]
    texts = dict(bench.chunks)
    positives = (
        {ConflictClass.DIRECT}
        if cfg.direct_only
        else {ConflictClass.DIRECT, ConflictClass.AMBIGUOUS}
    )
    results: list[FprLevelResult] = []
    for level_idx, fpr in enumerate(cfg.fpr_levels):
        rows: list[dict] = []
        for case_idx, case in enumerate(cases):
            truth = set(case.ground_truth)
            pool = sorted(cid for cid, _ in bench.chunks if cid not in truth and cid != case.target)
            k = min(injected_count(len(truth), fpr), len(pool))
            rng = np.random.default_rng([cfg.rng_seed, case_idx, level_idx])
            injected = sorted(rng.choice(pool, size=k, replace=False).tolist()) if k else []
            achieved = k / (k + len(truth)) if (k + len(truth)) else 0.0

            input_ids = sorted(truth | set(injected))
            predicted: set[str] = set()
            latencies: list[float] = []
            warnings: list[str] = []
            for cid in input_ids:
                try:
                    response = gateway.ask(
                        "conflict_classify", existing=texts[cid], new=case.new_info
                    )
                    latencies.append(response.latency_ms)
                    verdict = parse_conflict_json(response.text)
                except ProviderError as exc:
                    warnings.append(f"{cid}: classifier failed, coerced ambiguous: {exc}")
                    verdict = None
                except ResponseParseError:
                    warnings.append(f"{cid}: unparseable verdict, coerced ambiguous")
                    verdict = None
                if verdict is None:
                    predicted.add(cid)  # ambiguous coercion counts as positive
                elif verdict.conflict_class in positives:
                    predicted.add(cid)
            metrics = compute_metrics(predicted, truth, len(input_ids))
            rows.append(
                {
                    "case_id": case.id,
                    "injected": injected,
                    "achieved_fpr": achieved,
                    "f1": metrics.f1,
                    "mean_latency_ms": float(np.mean(latencies)) if latencies else 0.0,
                    "warnings": warnings,
                }
            )
        results.append(
            FprLevelResult(
                fpr=fpr,
                mean_f1=float(np.mean([r["f1"] for r in rows])) if rows else 0.0,
                mean_latency_ms=float(np.mean([r["mean_latency_ms"] for r in rows])) if rows else 0.0,
                mean_achieved_fpr=float(np.mean([r["achieved_fpr"] for r in rows])) if rows else 0.0,
                per_case=rows,
            )
        )
    return results
