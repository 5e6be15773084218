from __future__ import annotations

import json

import pytest

from specmerge import ScriptedProvider
from specmerge.cli import cli_main
from specmerge.gateway import action_prompt

from conftest import (
    INERT_INFO,
    NEW_INFO,
    REWRITE_ITEMS,
    TOY_CHUNKS,
    build_toy_provider,
    toy_markdown,
)


@pytest.fixture
def workdir(tmp_path):
    spec_path = tmp_path / "spec.md"
    spec_path.write_text(toy_markdown(), encoding="utf-8")
    fixtures_path = tmp_path / "fixtures.json"
    provider = build_toy_provider()
    provider.add(
        "entity_extract",
        {"text": REWRITE_ITEMS[0]},
        json.dumps([["sandstorms", "limited to", "the opening quest"]]),
    )
    provider.to_file(str(fixtures_path))
    return tmp_path, spec_path, fixtures_path


def run(args) -> int:
    return cli_main([str(a) for a in args])


def test_check_exit_3_on_direct_conflict(workdir, capsys):
    _, spec_path, fixtures = workdir
    code = run(["check", "--spec", spec_path, "--fixtures", fixtures, "--new-info", NEW_INFO])
    out = capsys.readouterr().out
    assert code == 3
    assert "[direct] c1:" in out
    assert "[ambiguous] c8:" in out
    assert "reason:" in out


def test_check_exit_0_without_conflicts(workdir, capsys):
    _, spec_path, fixtures = workdir
    code = run(["check", "--spec", spec_path, "--fixtures", fixtures, "--new-info", INERT_INFO])
    assert code == 0
    assert "no conflicts flagged" in capsys.readouterr().out


def test_check_writes_nothing(workdir):
    tmp_path, spec_path, fixtures = workdir
    before = spec_path.read_text(encoding="utf-8")
    run(["check", "--spec", spec_path, "--fixtures", fixtures, "--new-info", NEW_INFO])
    assert spec_path.read_text(encoding="utf-8") == before
    assert not (tmp_path / "spec.md.review.json").exists()
    assert not (tmp_path / "spec.md.kg.json").exists()


def test_init_builds_graph_sidecar(workdir, capsys):
    tmp_path, spec_path, fixtures = workdir
    code = run(["init", "--spec", spec_path, "--fixtures", fixtures])
    assert code == 0
    assert "graph built" in capsys.readouterr().out
    sidecar = tmp_path / "spec.md.kg.json"
    assert sidecar.exists()
    payload = json.loads(sidecar.read_text(encoding="utf-8"))
    assert {"nodes", "edges"} <= set(payload)


def test_apply_stages_proposals_without_yes(workdir, capsys):
    tmp_path, spec_path, fixtures = workdir
    code = run(["apply", "--spec", spec_path, "--fixtures", fixtures, "--new-info", NEW_INFO])
    assert code == 0
    out = capsys.readouterr().out
    assert "staged in the review sidecar" in out
    assert spec_path.read_text(encoding="utf-8") == toy_markdown()  # markdown untouched
    review = json.loads((tmp_path / "spec.md.review.json").read_text(encoding="utf-8"))
    states = {c["id"]: c["state"] for c in review["chunks"]}
    assert states["c1"] == "proposed_edit"
    assert states["c8"] == "proposed_delete"


def test_apply_yes_commits_proposals(workdir):
    _, spec_path, fixtures = workdir
    code = run(["apply", "--spec", spec_path, "--fixtures", fixtures, "--new-info", NEW_INFO, "--yes"])
    assert code == 0
    lines = spec_path.read_text(encoding="utf-8").splitlines()
    assert f"- {REWRITE_ITEMS[0]}" in lines  # edit committed
    assert f"- {TOY_CHUNKS[8]}" not in lines  # delete committed
    assert f"- {NEW_INFO}" in lines  # add committed
    assert f"- {TOY_CHUNKS[9]}" in lines  # kept chunk untouched


def test_apply_then_revert_all(workdir):
    tmp_path, spec_path, fixtures = workdir
    run(["apply", "--spec", spec_path, "--fixtures", fixtures, "--new-info", NEW_INFO])
    code = run(["revert", "--spec", spec_path, "--fixtures", fixtures, "--all"])
    assert code == 0
    review = json.loads((tmp_path / "spec.md.review.json").read_text(encoding="utf-8"))
    states = {c["id"]: c["state"] for c in review["chunks"]}
    assert states["c1"] == "direct_conflict"  # back to its flag
    assert "proposed_edit" not in states.values()
    texts = [c["text"] for c in review["chunks"]]
    assert texts == TOY_CHUNKS


def test_add_appends_committed_chunk(workdir):
    _, spec_path, fixtures = workdir
    code = run(["add", "--spec", spec_path, "--fixtures", fixtures, "--text", "A new rule."])
    assert code == 0
    assert spec_path.read_text(encoding="utf-8").splitlines()[-1] == "- A new rule."


def test_bench_writes_report_with_case_rows(tmp_path, capsys):
    chunks = [{"id": f"c{i}", "text": f"Labyrinth note {i}"} for i in range(35)]
    cases = [
        {"id": f"m{i}", "action": "add", "new_info": f"mod {i}", "target": None, "ground_truth": []}
        for i in range(17)
    ]
    dataset = tmp_path / "labyrinth.json"
    dataset.write_text(json.dumps({"name": "Labyrinth", "chunks": chunks, "cases": cases}))

    provider = ScriptedProvider()
    all_docs = "\n".join(f"{i + 1}. Labyrinth note {i}" for i in range(35))
    for i in range(17):
        provider.add(
            "drop_all_docs",
            {"action_prompt": action_prompt("add"), "all_docs": all_docs, "new_info": f"mod {i}"},
            "PASS",
        )
    fixtures = tmp_path / "fx.json"
    provider.to_file(str(fixtures))

    out_path = tmp_path / "report.json"
    code = run([
        "bench", "--method", "drop_all_docs", "--dataset", dataset,
        "--fixtures", fixtures, "--out", out_path,
    ])
    assert code == 0
    assert "| drop_all_docs |" in capsys.readouterr().out
    payload = json.loads(out_path.read_text(encoding="utf-8"))
    assert len(payload["cases"]) == 17
    assert payload["aggregates"]["recall"]["mean"] == 1.0  # empty-truth convention


def test_bench_fpr_mode(tmp_path, capsys):
    from conftest import DEFAULT_SYNTH_CASES, build_synthetic_bench

    path, provider = build_synthetic_bench(tmp_path, DEFAULT_SYNTH_CASES)
    fixtures = tmp_path / "fx.json"
    provider.to_file(str(fixtures))
    out_path = tmp_path / "fpr.json"
    code = run(["bench", "--dataset", path, "--fixtures", fixtures, "--fpr", "--out", out_path])
    assert code == 0
    out = capsys.readouterr().out
    assert "fpr=0.00" in out and "fpr=0.90" in out
    payload = json.loads(out_path.read_text(encoding="utf-8"))
    assert [lv["fpr"] for lv in payload["levels"]] == [0.0, 0.5, 0.9]


def test_usage_error_is_exit_1(workdir):
    _, spec_path, fixtures = workdir
    assert run(["check", "--spec", spec_path, "--fixtures", fixtures]) == 1  # missing --new-info
    assert run(["bogus-command"]) == 1


def test_missing_files_are_exit_2(tmp_path, workdir):
    _, spec_path, fixtures = workdir
    assert run(["check", "--spec", tmp_path / "absent.md", "--fixtures", fixtures, "--new-info", "x"]) == 2
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert run(["bench", "--dataset", bad, "--fixtures", fixtures]) == 2


def test_unconfigured_provider_is_exit_4(workdir, monkeypatch):
    _, spec_path, _ = workdir
    monkeypatch.delenv("LLM_BASE_URL", raising=False)
    assert run(["check", "--spec", spec_path, "--new-info", "x"]) == 4
