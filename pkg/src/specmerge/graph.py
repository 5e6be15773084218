"""Entity/relation graph over spec chunks and PageRank-based retrieval.

The graph is induced by LLM triple extraction, one call per chunk, with each
entity keeping the set of chunks that mention it. Retrieval seeds the graph
with the entities of the incoming change, runs Personalized PageRank over the
undirected adjacency, and scores each chunk as the sum of its entities'
scores. Graph builds never abort on a bad extraction: the chunk contributes
nothing and a warning is recorded (a dropped chunk is a potential missed
conflict, the one outcome this pipeline is designed to avoid).
"""

from __future__ import annotations

import copy
import json
import re
import string
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from .errors import ProviderError, ResponseParseError
from .gateway import LlmGateway, parse_triples_json
from .store import IntentSpec

if TYPE_CHECKING:  # pragma: no cover
    from .engine import ChangeRequest

_WS_RE = re.compile(r"\s+")
_EDGE_PUNCT = string.punctuation + string.whitespace


def normalize_key(name: str) -> str:
    """Lowercase, collapse whitespace, strip edge punctuation."""
    return _WS_RE.sub(" ", name.lower()).strip(_EDGE_PUNCT)


@dataclass
class EntityNode:
    id: str
    canonical_name: str
    norm_key: str
    mentions: set[str] = field(default_factory=set)


@dataclass
class RelationEdge:
    src: str
    dst: str
    label: str
    provenance: set[str] = field(default_factory=set)


class KnowledgeGraph:
    def __init__(self) -> None:
        self.nodes: dict[str, EntityNode] = {}
        self.edges: dict[tuple[str, str, str], RelationEdge] = {}
        self.warnings: list[str] = []
        self._by_key: dict[str, str] = {}
        self._next_id = 0

    # -- construction / mutation -----------------------------------------

    def _node_for(self, name: str) -> Optional[EntityNode]:
        key = normalize_key(name)
        if not key:
            return None
        node_id = self._by_key.get(key)
        if node_id is None:
            node_id = f"e{self._next_id}"
            self._next_id += 1
            node = EntityNode(id=node_id, canonical_name=name, norm_key=key)
            self.nodes[node_id] = node
            self._by_key[key] = node_id
            return node
        return self.nodes[node_id]

    def add_triple(self, subject: str, relation: str, obj: str, chunk_id: str) -> None:
        """Insert a triple extracted from chunk_id; dedupes by norm_key."""
        src = self._node_for(subject)
        dst = self._node_for(obj)
        for node in (src, dst):
            if node is not None:
                node.mentions.add(chunk_id)
        if src is None or dst is None or src.id == dst.id:
            return
        key = (src.id, dst.id, relation)
        edge = self.edges.get(key)
        if edge is None:
            self.edges[key] = RelationEdge(src.id, dst.id, relation, {chunk_id})
        else:
            edge.provenance.add(chunk_id)

    def remove_chunk(self, chunk_id: str) -> None:
        """Drop all trace of a chunk; prune nodes left without mentions."""
        for key in list(self.edges):
            edge = self.edges[key]
            edge.provenance.discard(chunk_id)
            if not edge.provenance:
                del self.edges[key]
        pruned = set()
        for node_id in list(self.nodes):
            node = self.nodes[node_id]
            node.mentions.discard(chunk_id)
            if not node.mentions:
                pruned.add(node_id)
                del self._by_key[node.norm_key]
                del self.nodes[node_id]
        if pruned:
            for key in list(self.edges):
                if key[0] in pruned or key[1] in pruned:
                    del self.edges[key]

    def copy(self) -> "KnowledgeGraph":
        twin = KnowledgeGraph()
        twin.nodes = {nid: copy.deepcopy(n) for nid, n in self.nodes.items()}
        twin.edges = {k: copy.deepcopy(e) for k, e in self.edges.items()}
        twin._by_key = dict(self._by_key)
        twin._next_id = self._next_id
        return twin

    # -- queries ------------------------------------------------------------

    def node_by_key(self, norm_key: str) -> Optional[EntityNode]:
        node_id = self._by_key.get(norm_key)
        return self.nodes[node_id] if node_id else None

    def match_nodes(self, name: str) -> list[EntityNode]:
        """Exact norm_key match, else whole-word substring in either direction."""
        key = normalize_key(name)
        if not key:
            return []
        exact = self.node_by_key(key)
        if exact is not None:
            return [exact]
        pattern = re.compile(rf"\b{re.escape(key)}\b")
        matched = []
        for node in self.nodes.values():
            if pattern.search(node.norm_key) or re.search(
                rf"\b{re.escape(node.norm_key)}\b", key
            ):
                matched.append(node)
        return sorted(matched, key=lambda n: n.norm_key)

    def structure(self) -> tuple[frozenset, frozenset]:
        """Id-free view for equality checks across rebuilds."""
        nodes = frozenset(
            (n.norm_key, frozenset(n.mentions)) for n in self.nodes.values()
        )
        edges = frozenset(
            (self.nodes[e.src].norm_key, self.nodes[e.dst].norm_key, e.label, frozenset(e.provenance))
            for e in self.edges.values()
        )
        return nodes, edges

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "canonical_name": n.canonical_name,
                    "norm_key": n.norm_key,
                    "mentions": sorted(n.mentions),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.norm_key)
            ],
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "label": e.label,
                    "provenance": sorted(e.provenance),
                }
                for e in sorted(self.edges.values(), key=lambda e: (e.src, e.dst, e.label))
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_dict(cls, payload: dict) -> "KnowledgeGraph":
        graph = cls()
        max_id = 0
        for nd in payload.get("nodes", []):
            node = EntityNode(
                id=nd["id"],
                canonical_name=nd["canonical_name"],
                norm_key=nd["norm_key"],
                mentions=set(nd.get("mentions", [])),
            )
            graph.nodes[node.id] = node
            graph._by_key[node.norm_key] = node.id
            m = re.fullmatch(r"e(\d+)", node.id)
            if m:
                max_id = max(max_id, int(m.group(1)) + 1)
        for ed in payload.get("edges", []):
            key = (ed["src"], ed["dst"], ed["label"])
            graph.edges[key] = RelationEdge(
                ed["src"], ed["dst"], ed["label"], set(ed.get("provenance", []))
            )
        graph._next_id = max_id
        return graph

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeGraph":
        return cls.from_dict(json.loads(text))


def _extract_triples(gateway: LlmGateway, text: str) -> list[tuple[str, str, str]]:
    response = gateway.ask("entity_extract", text=text)
    return parse_triples_json(response.text)


def induce_graph(spec: IntentSpec, gateway: LlmGateway) -> KnowledgeGraph:
    """Pre-processing phase: one extraction call per chunk."""
    graph = KnowledgeGraph()
    for chunk in spec:
        try:
            triples = _extract_triples(gateway, chunk.text)
        except (ResponseParseError, ProviderError) as exc:
            graph.warnings.append(f"extraction failed for {chunk.id}: {exc}")
            continue
        for s, r, o in triples:
            graph.add_triple(s, r, o, chunk.id)
    return graph


def update_for_chunk(
    graph: KnowledgeGraph, chunk_id: str, new_text: str, gateway: LlmGateway
) -> KnowledgeGraph:
    """New graph version with chunk_id re-extracted (or removed when empty)."""
    updated = graph.copy()
    updated.remove_chunk(chunk_id)
    if new_text:
        try:
            triples = _extract_triples(gateway, new_text)
        except (ResponseParseError, ProviderError) as exc:
            updated.warnings.append(f"extraction failed for {chunk_id}: {exc}")
            triples = []
        for s, r, o in triples:
            updated.add_triple(s, r, o, chunk_id)
    return updated


# -- Personalized PageRank ---------------------------------------------------


@dataclass(frozen=True)
class PprConfig:
    damping: float = 0.85
    tol: float = 1e-8
    max_iters: int = 100
    top_k: int = 20

    def __post_init__(self) -> None:
        if not (0.0 < self.damping < 1.0):
            raise ValueError("damping must be in (0, 1)")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class PprResult:
    scores: dict[str, float]
    iterations: int
    converged: bool


def personalized_pagerank(
    graph: KnowledgeGraph, seeds: Iterable[str], cfg: Optional[PprConfig] = None
) -> PprResult:
    """Iterate r = (1-d)*v + d*M*r to an L1 fixed point.

    v is uniform over the seed nodes; M is the column-stochastic transition
    over the undirected (binary) adjacency; nodes without neighbors return
    their full mass to v. Deterministic for fixed inputs: node order is the
    sorted norm_key order.
    """
    cfg = cfg or PprConfig()
    seed_ids = set(seeds)
    if not seed_ids:
        raise ValueError("seed set must be non-empty")
    unknown = seed_ids - set(graph.nodes)
    if unknown:
        raise ValueError(f"seeds not in graph: {sorted(unknown)}")

    order = sorted(graph.nodes.values(), key=lambda n: n.norm_key)
    index = {node.id: i for i, node in enumerate(order)}
    n = len(order)

    adjacency = np.zeros((n, n))
    for edge in graph.edges.values():
        i, j = index[edge.src], index[edge.dst]
        adjacency[i, j] = 1.0
        adjacency[j, i] = 1.0

    degree = adjacency.sum(axis=0)
    connected = degree > 0
    transition = np.zeros((n, n))
    transition[:, connected] = adjacency[:, connected] / degree[connected]

    v = np.zeros(n)
    for sid in seed_ids:
        v[index[sid]] = 1.0 / len(seed_ids)

    d = cfg.damping
    r = v.copy()
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iters + 1):
        dangling_mass = r[~connected].sum()
        r_next = (1.0 - d) * v + d * (transition @ r + dangling_mass * v)
        if np.abs(r_next - r).sum() < cfg.tol:
            r = r_next
            converged = True
            break
        r = r_next

    scores = {node.id: float(r[index[node.id]]) for node in order}
    return PprResult(scores=scores, iterations=iterations, converged=converged)


# -- retrieval ----------------------------------------------------------------


@dataclass
class RetrievalResult:
    ranked: list[tuple[str, float]]
    matched_seeds: list[str]
    fallback: bool
    warnings: list[str] = field(default_factory=list)
    latency_ms: float = 0.0


def retrieve_candidates(
    graph: KnowledgeGraph,
    spec: IntentSpec,
    request: "ChangeRequest",
    gateway: LlmGateway,
    cfg: Optional[PprConfig] = None,
) -> RetrievalResult:
    """Rank chunks by relevance to the change request.

    Seed entities come from extracting the request's new_info; they match
    nodes by norm_key then whole-word substring. A chunk scores the sum of
    its mentioned entities' PPR scores. When nothing matches (or extraction
    fails) every chunk is returned uniformly so that downstream
    classification sees the full store rather than silently missing one.
    The edit target is never a candidate.
    """
    cfg = cfg or PprConfig()
    start = time.perf_counter()
    warnings: list[str] = []
    ordinal = {chunk.id: chunk.ordinal for chunk in spec}
    eligible = [c.id for c in spec if c.id != request.target]

    seed_ids: list[str] = []
    try:
        triples = _extract_triples(gateway, request.new_info)
        names = []
        for s, _, o in triples:
            names.extend((s, o))
        matched: dict[str, None] = {}
        for name in names:
            for node in graph.match_nodes(name):
                matched[node.id] = None
        seed_ids = list(matched)
    except (ResponseParseError, ProviderError) as exc:
        warnings.append(f"seed extraction failed: {exc}")

    def uniform() -> RetrievalResult:
        score = 1.0 / len(eligible) if eligible else 0.0
        ranked = [(cid, score) for cid in sorted(eligible, key=ordinal.get)]
        return RetrievalResult(
            ranked=ranked,
            matched_seeds=[],
            fallback=True,
            warnings=warnings,
            latency_ms=(time.perf_counter() - start) * 1000.0,
        )

    if not seed_ids:
        if not warnings:
            warnings.append("no seed entity matched the graph; returning all chunks")
        return uniform()

    ppr = personalized_pagerank(graph, seed_ids, cfg)
    if not ppr.converged:
        warnings.append(f"pagerank did not converge within {cfg.max_iters} iterations")

    chunk_scores: dict[str, float] = {}
    for node in graph.nodes.values():
        node_score = ppr.scores[node.id]
        if node_score <= 0.0:
            continue
        for cid in node.mentions:
            if cid in ordinal:
                chunk_scores[cid] = chunk_scores.get(cid, 0.0) + node_score

    positive = [
        (cid, score)
        for cid, score in chunk_scores.items()
        if score > 0.0 and cid != request.target
    ]
    positive.sort(key=lambda pair: (-pair[1], ordinal.get(pair[0], 0)))
    ranked = positive[: cfg.top_k]
    return RetrievalResult(
        ranked=ranked,
        matched_seeds=sorted(seed_ids),
        fallback=False,
        warnings=warnings,
        latency_ms=(time.perf_counter() - start) * 1000.0,
    )
