"""``pds-sim``: run scenarios under the simulated network and analyze them."""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click

from . import EXIT_USAGE
from ..errors import AuditError, PdsError, ScenarioError
from ..sim_harness import audit_transcript, load_scenario, run_scenario
from ..sim_harness.collusion import MODEL_NOTE, attempt_reconstruction, view_from_dumps


@click.group()
def main():
    """Scenario runner and privacy analysis over recorded runs."""


def _write_outputs(run, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "transcript.jsonl", "w", encoding="utf-8") as fh:
        for entry in run.transcript_entries:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    dumps_dir = out_dir / "dumps"
    dumps_dir.mkdir(exist_ok=True)
    for node_id, dump in run.dumps.items():
        with open(dumps_dir / f"{node_id}.json", "w", encoding="utf-8") as fh:
            json.dump(dump, fh, indent=2, sort_keys=True)
    results = [
        {"id": op.id, "op": op.op, "actor": op.actor, "alias": res.alias,
         "outcome": res.outcome, "reason": res.reason}
        for op, res in run.results
    ]
    with open(out_dir / "results.json", "w", encoding="utf-8") as fh:
        json.dump(results, fh, indent=2)


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None, help="override the scenario seed")
@click.option("--audit", "do_audit", is_flag=True, default=False,
              help="append a leak audit of the run's transcript")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="write transcript, store dumps, and results here")
@click.option("--output", type=click.Choice(["text", "json"]), default="text")
def run(scenario_path, seed, do_audit, out_dir, output):
    """Execute one scenario deterministically."""
    try:
        scenario = load_scenario(scenario_path)
        if seed is not None:
            scenario.seed = seed
        result = run_scenario(scenario)
    except (ScenarioError, PdsError) as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    report = None
    if do_audit:
        try:
            report = audit_transcript(result.transcript_entries, roles=result.roles,
                                      known_pds=result.known_pds,
                                      pn_stores=result.pn_stores())
        except AuditError as exc:
            click.echo(f"audit error: {exc}", err=True)
            sys.exit(EXIT_USAGE)

    if out_dir:
        _write_outputs(result, Path(out_dir))

    if output == "json":
        doc = {
            "scenario": scenario.name,
            "seed": scenario.seed,
            "results": [
                {"id": op.id, "op": op.op, "actor": op.actor, "alias": res.alias,
                 "outcome": res.outcome, "reason": res.reason}
                for op, res in result.results
            ],
        }
        if report is not None:
            doc["audit"] = report.to_json()
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        for op, res in result.results:
            line = f"{op.id}: {op.op} {res.alias} by {op.actor} -> {res.outcome}"
            if res.reason:
                line += f" ({res.reason})"
            click.echo(line)
        if report is not None:
            click.echo(f"{len(report.findings)} findings "
                       f"({report.messages_checked} messages audited)")
            for f in report.findings:
                click.echo(f"  {f.rule} line {f.line} {f.op}/{f.step}: {f.detail}")

    sys.exit(1 if report is not None and not report.passed else 0)


@main.command()
@click.option("--dump", "dump_dir", required=True, type=click.Path(file_okay=False, exists=True),
              help="dumps directory from a `pds-sim run --out` invocation")
@click.option("--nodes", "node_list", required=True,
              help="comma-separated node ids the adversary controls")
@click.option("--target", "target_mk", required=True, help="master key of the target item")
@click.option("--output", type=click.Choice(["text", "json"]), default="text")
def collude(dump_dir, node_list, target_mk, output):
    """What a colluding subset of nodes can learn about one item."""
    node_ids = [n.strip() for n in node_list.split(",") if n.strip()]
    dumps_dir = Path(dump_dir)
    if dumps_dir.name != "dumps" and (dumps_dir / "dumps").is_dir():
        dumps_dir = dumps_dir / "dumps"
    try:
        view = view_from_dumps(dumps_dir, node_ids)
    except FileNotFoundError as exc:
        click.echo(f"unknown node id: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    result = attempt_reconstruction(view, target_mk)
    if output == "json":
        doc = {
            "note": MODEL_NOTE,
            "view": node_ids,
            "target": target_mk,
            "bytes": result.got_bytes,
            "attribution": result.got_attribution,
        }
        if result.got_bytes:
            doc["data_base64"] = base64.b64encode(result.data).decode("ascii")
        if result.got_attribution:
            doc["owner"] = result.attribution.owner
            doc["processors"] = result.attribution.processors
            doc["metadata"] = result.attribution.metadata
        click.echo(json.dumps(doc, sort_keys=True))
    else:
        click.echo(f"# {MODEL_NOTE}")
        click.echo(f"view: {', '.join(node_ids)}")
        click.echo(f"bytes: {'yes' if result.got_bytes else 'no'}, "
                   f"attribution: {'yes' if result.got_attribution else 'no'}")
        if result.got_attribution:
            click.echo(f"owner: {result.attribution.owner}; "
                       f"processors: {', '.join(result.attribution.processors)}; "
                       f"metadata: {json.dumps(result.attribution.metadata, sort_keys=True)}")
    sys.exit(0)


if __name__ == "__main__":
    main()
