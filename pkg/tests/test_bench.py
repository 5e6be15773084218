from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest

from specmerge import (
    BenchmarkLoadError,
    EvalConfig,
    FprExperimentConfig,
    LlmGateway,
    ScriptedProvider,
    StaticProvider,
    compute_metrics,
    injected_count,
    load_benchmark,
    markdown_table,
    run_fpr_experiment,
    run_method,
)
from specmerge.bench import parse_drop_all_docs_response
from specmerge.gateway import action_prompt

from conftest import DEFAULT_SYNTH_CASES, build_synthetic_bench, synthetic_case


@pytest.fixture
def synth(tmp_path):
    path, provider = build_synthetic_bench(tmp_path, DEFAULT_SYNTH_CASES)
    return load_benchmark(path), provider, path


# -- loading -----------------------------------------------------------------


def test_load_benchmark_valid(synth):
    bench, _, _ = synth
    assert bench.name == "synthetic"
    assert len(bench.chunks) == 30
    assert len(bench.cases) == 5
    assert bench.cases[4].target == "s20"


def test_load_benchmark_unknown_ground_truth_chunk(tmp_path):
    payload = {
        "name": "bad",
        "chunks": [{"id": "a", "text": "t"}],
        "cases": [
            {"id": "k1", "action": "add", "new_info": "n", "target": None, "ground_truth": ["zz"]}
        ],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(BenchmarkLoadError, match=r"cases\[0\].ground_truth"):
        load_benchmark(str(path))


def test_load_benchmark_target_rules(tmp_path):
    base = {"name": "bad", "chunks": [{"id": "a", "text": "t"}, {"id": "b", "text": "u"}]}
    missing_target = dict(base, cases=[{"id": "k", "action": "edit", "new_info": "n", "target": None, "ground_truth": []}])
    target_in_truth = dict(base, cases=[{"id": "k", "action": "edit", "new_info": "n", "target": "a", "ground_truth": ["a"]}])
    for payload, pattern in ((missing_target, "target"), (target_in_truth, "ground_truth")):
        path = tmp_path / "case.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(BenchmarkLoadError, match=pattern):
            load_benchmark(str(path))


def test_known_dataset_manifest_counts(tmp_path):
    chunks = [{"id": f"c{i}", "text": f"t{i}"} for i in range(35)]
    cases = [
        {"id": f"m{i}", "action": "add", "new_info": f"n{i}", "target": None, "ground_truth": []}
        for i in range(17)
    ]
    good = tmp_path / "labyrinth.json"
    good.write_text(json.dumps({"name": "Labyrinth", "chunks": chunks, "cases": cases}))
    bench = load_benchmark(str(good))
    assert len(bench.chunks) == 35 and len(bench.cases) == 17

    bad = tmp_path / "labyrinth_bad.json"
    bad.write_text(json.dumps({"name": "Labyrinth", "chunks": chunks[:-1], "cases": cases}))
    with pytest.raises(BenchmarkLoadError, match="manifest expects 35"):
        load_benchmark(str(bad))


def test_explicit_manifest_counts(tmp_path):
    payload = {
        "name": "custom",
        "expected_chunks": 2,
        "expected_cases": 0,
        "chunks": [{"id": "a", "text": "t"}],
        "cases": [],
    }
    path = tmp_path / "custom.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(BenchmarkLoadError, match="manifest expects 2"):
        load_benchmark(str(path))


# -- compute_metrics ------------------------------------------------------------


def test_metrics_hand_computed_example():
    m = compute_metrics({"c1", "c3"}, {"c1", "c2"}, 10)
    assert (m.tp, m.fp, m.fn, m.tn) == (1, 1, 1, 7)
    assert m.accuracy == pytest.approx(0.8)
    assert m.precision == pytest.approx(0.5)
    assert m.recall == pytest.approx(0.5)
    assert m.f1 == pytest.approx(0.5)


def test_metrics_empty_empty_convention():
    m = compute_metrics(set(), set(), 5)
    assert m.accuracy == 1.0
    assert m.precision == m.recall == m.f1 == 1.0


def test_metrics_single_zero_denominator():
    m = compute_metrics(set(), {"c1"}, 5)
    assert m.recall == 0.0 and m.f1 == 0.0 and m.precision == 0.0
    assert m.accuracy == pytest.approx(0.8)
    m2 = compute_metrics({"c1"}, set(), 5)
    assert m2.precision == 0.0 and m2.recall == 0.0 and m2.f1 == 0.0


def brute_force_metrics(predicted, truth, universe):
    tp = fp = fn = tn = 0
    for item in universe:
        p, t = item in predicted, item in truth
        tp += p and t
        fp += p and not t
        fn += (not p) and t
        tn += (not p) and (not t)
    acc = (tp + tn) / len(universe) if universe else 1.0
    if not truth and not predicted:
        prec = rec = f1 = 1.0
    else:
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return tp, fp, fn, tn, acc, prec, rec, f1


def test_metrics_match_brute_force_recount():
    rng = random.Random(99)
    for _ in range(300):
        size = rng.randint(1, 40)
        universe = [f"u{i}" for i in range(size)]
        predicted = {u for u in universe if rng.random() < 0.3}
        truth = {u for u in universe if rng.random() < 0.25}
        m = compute_metrics(predicted, truth, size)
        tp, fp, fn, tn, acc, prec, rec, f1 = brute_force_metrics(predicted, truth, universe)
        assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
        for got, want in ((m.accuracy, acc), (m.precision, prec), (m.recall, rec), (m.f1, f1)):
            assert abs(got - want) <= 1e-12


# -- baseline response parsing ------------------------------------------------------


DOCS = [("a", "alpha text"), ("b", "bravo text"), ("c", "charlie text"), ("d", "delta"), ("e", "echo")]


def test_drop_all_docs_pass_means_empty():
    predicted, warnings = parse_drop_all_docs_response("PASS", DOCS)
    assert predicted == set() and warnings == []


def test_drop_all_docs_ids_map_one_based():
    predicted, _ = parse_drop_all_docs_response("CONFLICT: overlap\nIDS: 2, 5", DOCS)
    assert predicted == {"b", "e"}


def test_drop_all_docs_out_of_range_ignored_with_warning():
    predicted, warnings = parse_drop_all_docs_response("CONFLICT: x\nIDS: 1, 9", DOCS)
    assert predicted == {"a"}
    assert any("out of range" in w for w in warnings)


def test_drop_all_docs_unparseable_is_zero_predictions():
    predicted, warnings = parse_drop_all_docs_response("no idea", DOCS)
    assert predicted == set()
    assert warnings


# -- run_method ------------------------------------------------------------------------


def test_kg_pagerank_perfect_oracle(synth):
    bench, provider, _ = synth
    report = run_method("kg_pagerank", bench, LlmGateway(provider), EvalConfig())
    assert not any(c.failed for c in report.cases)
    for case in report.cases:
        assert case.metrics.precision == 1.0
        assert case.metrics.recall == 1.0
        assert case.metrics.f1 == 1.0
        assert case.retrieval_recall == 1.0
    assert report.aggregates["recall"][0] == 1.0
    assert report.aggregates["f1"] == (1.0, 0.0)


def test_kg_pagerank_always_ambiguous_recall_one(synth):
    bench, _, _ = synth
    gateway = LlmGateway(
        StaticProvider(
            {
                "entity_extract": "[]",
                "conflict_classify": '{"reasoning":"might clash","is_conflicting":"ambiguous"}',
            }
        )
    )
    report = run_method("kg_pagerank", bench, gateway, EvalConfig())
    for case_result, case in zip(report.cases, bench.cases):
        eligible = len(bench.chunks) - (1 if case.target else 0)
        assert case_result.metrics.recall == 1.0
        assert case_result.metrics.precision == pytest.approx(len(case.ground_truth) / eligible)


def test_drop_all_docs_method(synth):
    bench, provider, _ = synth
    # scripted responses: PASS for case1, IDS for case2, garbage for case3,
    # PASS for case4, IDS (positions within the filtered list) for case5
    responses = {
        "case1": "PASS",
        "case2": "CONFLICT: rule 5 is contradicted\nIDS: 6",
        "case3": "gibberish",
        "case4": "PASS",
        "case5": "CONFLICT: rules 21 and 22\nIDS: 21, 22",
    }
    for case in bench.cases:
        docs = [(cid, text) for cid, text in bench.chunks if cid != case.target]
        all_docs = "\n".join(f"{i + 1}. {t}" for i, (_, t) in enumerate(docs))
        provider.add(
            "drop_all_docs",
            {
                "action_prompt": action_prompt(case.action),
                "all_docs": all_docs,
                "new_info": case.new_info,
            },
            responses[case.id],
        )
    report = run_method("drop_all_docs", bench, LlmGateway(provider), EvalConfig())
    by_id = {c.case_id: c for c in report.cases}
    assert by_id["case1"].predicted == set()
    assert by_id["case2"].predicted == {"s5"}
    assert by_id["case2"].metrics.recall == 1.0
    assert by_id["case3"].predicted == set()
    assert by_id["case3"].warnings
    # case5: docs exclude target s20, so positions 21,22 name s21,s22
    assert by_id["case5"].predicted == {"s21", "s22"}
    assert by_id["case5"].metrics.f1 == 1.0


def test_inksync_method_binds_verbatim_and_drops_misses(synth):
    bench, provider, _ = synth
    texts = dict(bench.chunks)
    for case in bench.cases:
        docs = [(cid, text) for cid, text in bench.chunks if cid != case.target]
        all_docs = "\n".join(f"{i + 1}. {t}" for i, (_, t) in enumerate(docs))
        if case.id == "case2":
            edits = {"edits": [
                {"document_id": 1, "original_text": texts["s5"], "replace_text": "x"},
                {"document_id": 2, "original_text": "not present anywhere", "replace_text": "y"},
            ]}
            response = json.dumps(edits)
        else:
            response = '{"edits": []}'
        provider.add(
            "inksync_edits",
            {
                "action_prompt": action_prompt(case.action),
                "all_docs": all_docs,
                "new_info": case.new_info,
            },
            response,
        )
    report = run_method("inksync", bench, LlmGateway(provider), EvalConfig())
    by_id = {c.case_id: c for c in report.cases}
    assert by_id["case2"].predicted == {"s5"}
    assert by_id["case2"].metrics.f1 == 1.0
    assert by_id["case1"].predicted == set()


def test_provider_failure_excludes_case_from_aggregates(synth):
    bench, provider, _ = synth
    # fixtures for all but case3 (its drop_all_docs response is missing)
    for case in bench.cases:
        if case.id == "case3":
            continue
        docs = [(cid, text) for cid, text in bench.chunks if cid != case.target]
        all_docs = "\n".join(f"{i + 1}. {t}" for i, (_, t) in enumerate(docs))
        provider.add(
            "drop_all_docs",
            {
                "action_prompt": action_prompt(case.action),
                "all_docs": all_docs,
                "new_info": case.new_info,
            },
            "PASS",
        )
    report = run_method("drop_all_docs", bench, LlmGateway(provider), EvalConfig())
    failed = [c for c in report.cases if c.failed]
    assert [c.case_id for c in failed] == ["case3"]
    assert len(report.scored_cases()) == 4
    values = [c.metrics.accuracy for c in report.scored_cases()]
    assert report.aggregates["accuracy"][0] == pytest.approx(float(np.mean(values)))


def test_direct_only_mode(synth):
    bench, provider, _ = synth
    gateway = LlmGateway(
        StaticProvider(
            {
                "entity_extract": "[]",
                "conflict_classify": '{"reasoning":"maybe","is_conflicting":"ambiguous"}',
            }
        )
    )
    report = run_method("kg_pagerank", bench, gateway, EvalConfig(direct_only=True))
    for case_result in report.cases:
        assert case_result.predicted == set()


def test_aggregate_two_pass_oracle(synth):
    bench, provider, _ = synth
    report = run_method("kg_pagerank", bench, LlmGateway(provider), EvalConfig())
    values = [c.metrics.accuracy for c in report.scored_cases()]
    mean = sum(values) / len(values)
    variance = sum((x - mean) ** 2 for x in values) / len(values)
    assert abs(report.aggregates["accuracy"][0] - mean) <= 1e-12
    assert abs(report.aggregates["accuracy"][1] - math.sqrt(variance)) <= 1e-12


def test_markdown_table_renders_all_methods(synth):
    bench, provider, _ = synth
    report = run_method("kg_pagerank", bench, LlmGateway(provider), EvalConfig())
    table = markdown_table([report])
    assert "| method | accuracy | precision | recall | f1 |" in table
    assert "| kg_pagerank |" in table
    assert "±" in table


def test_report_json_round_trips(synth):
    bench, provider, _ = synth
    report = run_method("kg_pagerank", bench, LlmGateway(provider), EvalConfig())
    payload = json.loads(json.dumps(report.to_json_dict()))
    assert payload["method"] == "kg_pagerank"
    assert len(payload["cases"]) == 5
    assert payload["aggregates"]["recall"]["mean"] == 1.0


# -- FPR experiment -------------------------------------------------------------------


def test_injected_count_arithmetic():
    assert injected_count(2, 0.5) == 2
    assert injected_count(1, 0.9) == 9
    assert injected_count(4, 0.0) == 0


def test_fpr_zero_level_uses_ground_truth_exactly(synth):
    bench, provider, _ = synth
    results = run_fpr_experiment(bench, FprExperimentConfig(fpr_levels=(0.0,)), LlmGateway(provider))
    level = results[0]
    for row, case in zip(level.per_case, [c for c in bench.cases if c.ground_truth]):
        assert row["injected"] == []
        assert row["achieved_fpr"] == 0.0
    assert level.mean_f1 == 1.0  # perfect oracle on exactly the truth


def test_fpr_injection_counts_and_reproducibility(synth):
    bench, provider, _ = synth
    cfg = FprExperimentConfig(fpr_levels=(0.0, 0.5, 0.9), rng_seed=7)
    first = run_fpr_experiment(bench, cfg, LlmGateway(provider))
    second = run_fpr_experiment(bench, cfg, LlmGateway(provider))
    for lv1, lv2 in zip(first, second):
        assert [r["injected"] for r in lv1.per_case] == [r["injected"] for r in lv2.per_case]
    half = first[1]
    for row, case in zip(half.per_case, [c for c in bench.cases if c.ground_truth]):
        assert len(row["injected"]) == len(case.ground_truth)
        assert not set(row["injected"]) & set(case.ground_truth)


def test_fpr_insufficient_pool_records_achieved(tmp_path):
    # 3 chunks, truth of 1: fpr 0.9 wants 9 injected but only 2 are available
    path, provider = build_synthetic_bench(
        tmp_path, [synthetic_case(1, "add", [0])], n_chunks=3, name="tiny"
    )
    bench = load_benchmark(path)
    results = run_fpr_experiment(
        bench, FprExperimentConfig(fpr_levels=(0.9,)), LlmGateway(provider)
    )
    row = results[0].per_case[0]
    assert len(row["injected"]) == 2
    assert row["achieved_fpr"] == pytest.approx(2 / 3)


def test_fpr_config_validation():
    with pytest.raises(ValueError):
        FprExperimentConfig(fpr_levels=(0.5, 0.0))
    with pytest.raises(ValueError):
        FprExperimentConfig(fpr_levels=(1.0,))
