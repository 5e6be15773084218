"""Shared fixtures: a 10-chunk toy game spec with exhaustive scripted responses.

The scenario: new information announces the planet's storms end for good.
Retrieval seeds on the "sandstorms" entity, whose graph component touches
chunks 1, 8 and 9; the scripted classifier flags them direct/ambiguous/direct
and the scripted global rewrite produces one edit, one DELETE and one keep.
"""

from __future__ import annotations

import json

import pytest

from specmerge import IntentSpec, LlmGateway, ScriptedProvider

TOY_CHUNKS = [
    "The game is set on a desert planet named Kharos.",
    "Sandstorms sweep the dunes every night cycle.",
    "The hero rides a giant beetle between oasis towns.",
    "Water is the only tradable currency.",
    "Combat uses a turn-based initiative queue.",
    "The palette is warm ochre and rust tones.",
    "Town elders give the hero navigation puzzles.",
    "A compass artifact always points to the nearest oasis.",
    "Night travel is impossible due to the storms.",
    "The final boss is the storm itself.",
]

NEW_INFO = "The planet's climate calms permanently after the opening quest, ending all storms."
INERT_INFO = "The soundtrack uses only percussion instruments."

CHUNK_TRIPLES = {
    0: [["the game", "is set on", "Kharos"]],
    1: [["sandstorms", "sweep", "the dunes"]],
    2: [["the hero", "rides", "a giant beetle"]],
    3: [["water", "is", "tradable currency"]],
    4: [["combat", "uses", "initiative queue"]],
    5: [["the palette", "uses", "ochre tones"]],
    6: [["town elders", "give", "navigation puzzles"]],
    7: [["compass artifact", "points to", "nearest oasis"]],
    8: [["night travel", "blocked by", "sandstorms"]],
    9: [["the final boss", "is", "sandstorms"]],
}

NEW_INFO_TRIPLES = [
    ["the climate", "calms after", "the opening quest"],
    ["the climate", "ends", "sandstorms"],
]

# ordinal -> (token, reasoning) for candidates of the storm scenario
CLASSIFY = {
    1: ("yes", "Storms are said to end permanently, yet this chunk has them recur nightly."),
    8: ("ambiguous", "If all storms end, night travel might become possible again."),
    9: ("yes", "The final boss is the storm, which the new information removes."),
}

REWRITE_ITEMS = [
    "Sandstorms sweep the dunes only during the opening quest.",
    "DELETE",
    TOY_CHUNKS[9],
]

FLAGGED_ORDINALS = [1, 8, 9]


def toy_markdown() -> str:
    return "\n".join(f"- {text}" for text in TOY_CHUNKS) + "\n"


def classify_response(token: str, reasoning: str) -> str:
    return json.dumps({"reasoning": reasoning, "is_conflicting": token})


def build_toy_provider() -> ScriptedProvider:
    provider = ScriptedProvider()
    for i, text in enumerate(TOY_CHUNKS):
        provider.add("entity_extract", {"text": text}, json.dumps(CHUNK_TRIPLES[i]))
    provider.add("entity_extract", {"text": NEW_INFO}, json.dumps(NEW_INFO_TRIPLES))
    provider.add(
        "entity_extract",
        {"text": INERT_INFO},
        json.dumps([["the soundtrack", "uses", "percussion"]]),
    )
    for i, text in enumerate(TOY_CHUNKS):
        token, reasoning = CLASSIFY.get(i, ("no", ""))
        provider.add(
            "conflict_classify", {"existing": text, "new": NEW_INFO}, classify_response(token, reasoning)
        )
        provider.add(
            "conflict_classify", {"existing": text, "new": INERT_INFO}, classify_response("no", "")
        )
    flagged_docs = "\n".join(
        f"{k + 1}. {TOY_CHUNKS[i]}" for k, i in enumerate(FLAGGED_ORDINALS)
    )
    provider.add(
        "global_rewrite",
        {"action_instructions": "to add to", "newInfo": NEW_INFO, "all_docs": flagged_docs},
        "\n".join(f"{k + 1}. {item}" for k, item in enumerate(REWRITE_ITEMS)),
    )
    return provider


@pytest.fixture
def toy_spec() -> IntentSpec:
    return IntentSpec.load(toy_markdown(), format="markdown_list")


@pytest.fixture
def toy_provider() -> ScriptedProvider:
    return build_toy_provider()


@pytest.fixture
def toy_gateway(toy_provider) -> LlmGateway:
    return LlmGateway(toy_provider)


# -- synthetic benchmark ------------------------------------------------------
#
# n chunks in hub groups of five: chunk i mentions module M<i> and hub H<i//5>,
# so seeding any module reaches its whole group. Each case's new_info extracts
# the modules of its ground-truth chunks (or nothing, for fallback cases), and
# the scripted classifier answers yes exactly on ground truth.


def synthetic_case(k: int, action: str, truth: list[int], target: int | None = None, fallback: bool = False) -> dict:
    return {"k": k, "action": action, "truth": truth, "target": target, "fallback": fallback}


def build_synthetic_bench(
    dirpath, cases: list[dict], n_chunks: int = 30, name: str = "synthetic"
) -> tuple[str, ScriptedProvider]:
    chunk_texts = [f"System rule {i}: module M{i} depends on hub H{i // 5}." for i in range(n_chunks)]
    chunk_ids = [f"s{i}" for i in range(n_chunks)]
    provider = ScriptedProvider()
    for i, text in enumerate(chunk_texts):
        provider.add(
            "entity_extract", {"text": text}, json.dumps([[f"M{i}", "depends on", f"H{i // 5}"]])
        )

    case_entries = []
    for case in cases:
        new_info = f"Update {case['k']}: modules {sorted(case['truth'])} switch to the new policy."
        if case["fallback"]:
            triples = [["M999", "switches to", "the new policy"]]
        else:
            triples = [[f"M{j}", "switches to", "the new policy"] for j in sorted(case["truth"])]
        provider.add("entity_extract", {"text": new_info}, json.dumps(triples))
        for i, text in enumerate(chunk_texts):
            token = "yes" if i in case["truth"] else "no"
            reasoning = f"rule {i} is named by the update" if token == "yes" else ""
            provider.add(
                "conflict_classify",
                {"existing": text, "new": new_info},
                classify_response(token, reasoning),
            )
        case_entries.append(
            {
                "id": f"case{case['k']}",
                "action": case["action"],
                "new_info": new_info,
                "target": None if case["target"] is None else chunk_ids[case["target"]],
                "ground_truth": [chunk_ids[j] for j in sorted(case["truth"])],
            }
        )

    payload = {
        "name": name,
        "chunks": [{"id": cid, "text": text} for cid, text in zip(chunk_ids, chunk_texts)],
        "cases": case_entries,
    }
    path = str(dirpath / f"{name}.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, ensure_ascii=False, indent=2)
    return path, provider


DEFAULT_SYNTH_CASES = [
    synthetic_case(1, "add", [0, 3]),
    synthetic_case(2, "add", [5]),
    synthetic_case(3, "change", [10, 12, 14]),
    synthetic_case(4, "add", [7, 8], fallback=True),
    synthetic_case(5, "edit", [21, 22], target=20),
]
