"""Command-line interface: scriptable impact analysis and memory updates.

Exit codes: 0 success / no direct conflicts, 1 usage, 2 I/O or format
problems, 3 direct conflicts found (check), 4 provider failure. `check`
performs zero writes; `apply` stages proposals in the review sidecar and
only rewrites the spec file itself under --yes.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from . import bench as bench_mod
from .engine import ChangeRequest, check_for_conflicts, make_change
from .errors import BenchmarkLoadError, ProviderError, SpecFormatError
from .gateway import LiveProvider, LlmGateway, ScriptedProvider
from .service import SessionState, serve as serve_app
from .store import ChunkState, ConflictClass, PROPOSAL_STATES


def _make_gateway(fixtures: Optional[str], model: str) -> LlmGateway:
    if fixtures:
        return LlmGateway(ScriptedProvider.from_file(fixtures), model=model)
    provider = LiveProvider(model=model or None)
    if not provider.base_url:
        raise ProviderError("no provider configured: pass --fixtures or set LLM_BASE_URL")
    return LlmGateway(provider, model=model)


def _open_session(spec_path: str, fixtures: Optional[str], model: str) -> SessionState:
    return SessionState.open(spec_path, _make_gateway(fixtures, model))


_COMMON = [
    click.option("--spec", "spec_path", required=True, type=click.Path(), help="Spec file (.md or .json)."),
    click.option("--fixtures", default=None, type=click.Path(), help="Scripted-provider fixture file."),
    click.option("--model", default="", help="Model id for the live provider."),
]


def common_options(fn):
    for opt in reversed(_COMMON):
        fn = opt(fn)
    return fn


@click.group()
def cli():
    """Conflict-aware updates to intent specifications."""


@cli.command()
@common_options
def init(spec_path, fixtures, model):
    """Build the knowledge-graph sidecar for a spec (one-time pre-processing)."""
    session = _open_session(spec_path, fixtures, model)
    graph = session.ensure_graph()
    session.save()
    click.echo(f"graph built: {len(graph.nodes)} entities, {len(graph.edges)} relations")
    for warning in graph.warnings:
        click.echo(f"warning: {warning}", err=True)


def _request_from_options(action, new_info, target, steer, clarification) -> ChangeRequest:
    try:
        return ChangeRequest(
            action=action, new_info=new_info, target=target, steer=steer, clarification=clarification
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


@cli.command()
@common_options
@click.option("--new-info", required=True, help="The new information to test against the spec.")
@click.option("--action", default="add", type=click.Choice(["add", "change", "edit"]))
@click.option("--target", default=None, help="Chunk id being edited (action=edit).")
@click.option("--steer", default=None)
@click.option("--clarification", default=None)
@click.pass_context
def check(ctx, spec_path, fixtures, model, new_info, action, target, steer, clarification):
    """Impact analysis: print flagged chunks, write nothing.

    Exits 3 when at least one direct conflict is found.
    """
    session = _open_session(spec_path, fixtures, model)
    request = _request_from_options(action, new_info, target, steer, clarification)
    report = check_for_conflicts(
        session.spec, session.ensure_graph(), request, session.gateway, session.ppr
    )
    direct = 0
    for cid in report.flagged:
        verdict = report.verdicts[cid]
        tag = verdict.conflict_class.value
        if verdict.conflict_class is ConflictClass.DIRECT:
            direct += 1
        click.echo(f"[{tag}] {cid}: {session.spec.get(cid).text}")
        click.echo(f"    reason: {verdict.reasoning}")
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    if not report.flagged:
        click.echo("no conflicts flagged")
    if direct:
        ctx.exit(3)


@cli.command()
@common_options
@click.option("--new-info", required=True)
@click.option("--action", default="add", type=click.Choice(["add", "change", "edit"]))
@click.option("--target", default=None)
@click.option("--steer", default=None)
@click.option("--clarification", default=None)
@click.option("--yes", is_flag=True, help="Accept all proposals and rewrite the spec file.")
def apply(spec_path, fixtures, model, new_info, action, target, steer, clarification, yes):
    """Run make-change; stage proposals, or commit them with --yes."""
    session = _open_session(spec_path, fixtures, model)
    request = _request_from_options(action, new_info, target, steer, clarification)
    session.spec.snapshot("before apply")
    report = make_change(session.spec, session.ensure_graph(), request, session.gateway, session.ppr)
    for proposal in report.proposals:
        click.echo(f"{proposal['kind']:>6}  {proposal['chunk_id']}: {proposal['text']}")
    for warning in report.warnings:
        click.echo(f"warning: {warning}", err=True)
    if yes:
        for chunk in [c for c in session.spec if c.state in PROPOSAL_STATES]:
            was_delete = chunk.state is ChunkState.PROPOSED_DELETE
            new_text = chunk.proposed_text
            session.spec.transition(chunk.id, "resolve")
            session.refresh_chunk(chunk.id, "" if was_delete else (new_text or ""))
        click.echo("proposals applied")
    else:
        click.echo("proposals staged in the review sidecar; re-run with --yes to commit")
    session.save()


@cli.command()
@common_options
@click.option("--text", required=True, help="Information to add as a committed chunk.")
def add(spec_path, fixtures, model, text):
    """Add a piece of information directly (no review round)."""
    session = _open_session(spec_path, fixtures, model)
    chunk = session.spec.add_info(text, origin="user")
    if session.graph is not None:
        session.refresh_chunk(chunk.id, chunk.text)
    session.save()
    click.echo(f"added {chunk.id}")


@cli.command()
@common_options
@click.option("--all", "revert_all", is_flag=True, required=True, help="Drop every pending proposal.")
def revert(spec_path, fixtures, model, revert_all):
    """Revert pending proposals back to their pre-proposal states."""
    session = _open_session(spec_path, fixtures, model)
    session.spec.revert_all()
    session.save()
    click.echo("all proposals reverted")


@cli.command()
@click.option("--method", default="kg_pagerank", type=click.Choice(list(bench_mod.METHODS)))
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option(
    "--out",
    "out_path",
    default=None,
    type=click.Path(),
    help="Report JSON destination (default: <dataset>.report.json).",
)
@click.option("--fixtures", default=None, type=click.Path())
@click.option("--model", default="")
@click.option("--direct-only", is_flag=True, help="Count only direct conflicts as positive.")
@click.option("--fpr", is_flag=True, help="Run the FPR-sensitivity experiment instead.")
@click.option("--rng-seed", default=0, type=int)
def bench(method, dataset_path, out_path, fixtures, model, direct_only, fpr, rng_seed):
    """Score a method on a dataset and write the report."""
    gateway = _make_gateway(fixtures, model)
    dataset = bench_mod.load_benchmark(dataset_path)
    out_path = out_path or f"{dataset_path}.report.json"
    if fpr:
        levels = bench_mod.run_fpr_experiment(
            dataset,
            bench_mod.FprExperimentConfig(rng_seed=rng_seed, direct_only=direct_only),
            gateway,
        )
        payload = {
            "dataset": dataset.name,
            "levels": [
                {
                    "fpr": lv.fpr,
                    "mean_f1": lv.mean_f1,
                    "mean_latency_ms": lv.mean_latency_ms,
                    "mean_achieved_fpr": lv.mean_achieved_fpr,
                    "per_case": lv.per_case,
                }
                for lv in levels
            ],
        }
        for lv in levels:
            click.echo(f"fpr={lv.fpr:.2f}  f1={lv.mean_f1:.3f}  latency={lv.mean_latency_ms:.1f}ms")
    else:
        report = bench_mod.run_method(
            method, dataset, gateway, bench_mod.EvalConfig(direct_only=direct_only, model=model)
        )
        payload = report.to_json_dict()
        click.echo(bench_mod.markdown_table([report]), nl=False)
    Path(out_path).write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    click.echo(f"report written to {out_path}")


@cli.command()
@common_options
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8765, type=int)
def serve(spec_path, fixtures, model, host, port):
    """Run the HTTP service for the review UI."""
    session = _open_session(spec_path, fixtures, model)
    serve_app(session, host=host, port=port)


def cli_main(argv: Optional[list[str]] = None) -> int:
    try:
        result = cli.main(args=argv, standalone_mode=False)
        return result if isinstance(result, int) else 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except (SpecFormatError, BenchmarkLoadError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ProviderError as exc:
        click.echo(f"provider error: {exc}", err=True)
        return 4


def main() -> None:
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    main()
