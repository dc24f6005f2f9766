"""``pdsctl``: drive the six data operations against a live cluster.

The tool is itself a short-lived processing node: it binds the configured
listen address (chunk deliveries and grants arrive there), performs one
blocking operation, and exits. Retrieved data goes to stdout or a file
the operator names; the tool never writes it anywhere else.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sys

import click

from . import EXIT_DENIED, EXIT_INTERNAL, EXIT_OK, EXIT_TIMEOUT, EXIT_USAGE
from ..errors import ParameterError, PdsError
from ..keyspace import Identity
from ..nodes import ProcessingNode
from ..transport import TcpNode
from .config import load_config

logger = logging.getLogger("pdsctl")

# protocol reasons pass through to operators verbatim; this table is the
# whole mapping to exit codes and is pinned by a golden-file test
REASON_EXIT = {
    "unknown_kr": EXIT_DENIED,
    "revoked": EXIT_DENIED,
    "wrong_processor": EXIT_DENIED,
    "not_owner": EXIT_DENIED,
    "deleted": EXIT_DENIED,
    "unknown": EXIT_INTERNAL,
    "missing_chunk": EXIT_INTERNAL,
    "duplicate_mk": EXIT_INTERNAL,
    "mixed_generations": EXIT_INTERNAL,
    "inconsistent_total": EXIT_INTERNAL,
    "grantee_unreachable": EXIT_INTERNAL,
}


def exit_code_for(result) -> int:
    if result.ok:
        return EXIT_OK
    if result.outcome == "timeout":
        return EXIT_TIMEOUT
    if result.outcome == "denied":
        return REASON_EXIT.get(result.reason, EXIT_DENIED)
    return REASON_EXIT.get(result.reason, EXIT_INTERNAL)


class _Client:
    def __init__(self, config_path: str, output: str, show_kr: bool):
        self.output = output
        self.show_kr = show_kr
        try:
            self.loaded = load_config(config_path)
        except (ParameterError, OSError, ValueError) as exc:
            click.echo(f"bad config: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        if self.loaded.node.role != "processing":
            click.echo("pdsctl needs a processing-role config", err=True)
            sys.exit(EXIT_USAGE)
        self.transport = TcpNode(self.loaded.node.node_id, self.loaded.listen_host,
                                 self.loaded.listen_port, peers=self.loaded.endpoints)
        try:
            self.node = ProcessingNode(self.loaded.node, self.transport)
        except (ParameterError, PdsError) as exc:
            click.echo(f"cannot start client node: {exc}", err=True)
            sys.exit(EXIT_USAGE)
        self.transport.start(self.node.handle)

    def finish(self, handle, *, pd_to=None) -> None:
        result = handle.wait(self.loaded.node.timeout_ms / 1000.0 + 5.0)
        self.transport.stop()
        self.node.close()
        if result is None:
            click.echo("internal: operation never resolved", err=True)
            sys.exit(EXIT_INTERNAL)

        summary = {
            "ok": result.ok,
            "op": result.op,
            "alias": result.alias,
            "outcome": result.outcome,
            "reason": result.reason,
            "detail": {k: v for k, v in result.detail.items()
                       if k != "kr" or self.show_kr},
        }
        raw_to_stdout = False
        if result.ok and result.value is not None:
            summary["detail"]["bytes"] = len(result.value)
            summary["detail"]["sha256"] = hashlib.sha256(result.value).hexdigest()
            if pd_to == "-":
                sys.stdout.buffer.write(result.value)
                sys.stdout.buffer.flush()
                raw_to_stdout = True
            elif pd_to:
                with open(pd_to, "wb") as fh:
                    fh.write(result.value)

        if self.output == "json":
            line = json.dumps(summary, sort_keys=True)
            click.echo(line, err=raw_to_stdout)
        elif not raw_to_stdout:
            if result.ok:
                click.echo(f"{result.op} {result.alias}: ok"
                           + (f" kr={result.detail.get('kr')}"
                              if self.show_kr and "kr" in result.detail else ""))
        if not result.ok:
            click.echo(f"{result.outcome}: {result.reason}", err=True)
        sys.exit(exit_code_for(result))


def _parse_identity(text: str) -> Identity:
    name, _, addr = text.partition("@")
    if not name:
        raise click.UsageError("identity must be <name> or <name>@<addr>")
    return Identity(name=name, location=addr or name)


def _read_data(source: str) -> bytes:
    if source == "-":
        return sys.stdin.buffer.read()
    with open(source, "rb") as fh:
        return fh.read()


@click.group()
@click.option("--config", "config_path", envvar="PDS_CONFIG", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", type=click.Choice(["text", "json"]), default="text")
@click.option("--show-kr", is_flag=True, default=False,
              help="print raw key references (debugging only)")
@click.pass_context
def main(ctx, config_path, output, show_kr):
    """Store, read, update, delete, share, and revoke private data."""
    ctx.obj = (config_path, output, show_kr)


def _client(ctx) -> _Client:
    return _Client(*ctx.obj)


def _begin(ctx, fn, *args, **kwargs):
    client = _client(ctx)
    try:
        return client, fn(client.node)(*args, **kwargs)
    except ParameterError as exc:
        client.transport.stop()
        client.node.close()
        click.echo(f"usage: {exc}", err=True)
        sys.exit(EXIT_USAGE)


@main.command()
@click.option("--alias", required=True)
@click.option("--data", "data_src", required=True,
              help="file with the private data, or - for stdin")
@click.option("--meta", "meta_kv", multiple=True, help="k=v metadata label")
@click.option("--chunks", type=int, default=None)
@click.pass_context
def store(ctx, alias, data_src, meta_kv, chunks):
    md = {}
    for kv in meta_kv:
        key, sep, value = kv.partition("=")
        if not sep:
            raise click.UsageError(f"--meta {kv!r} is not k=v")
        md[key] = value
    data = _read_data(data_src)
    client, handle = _begin(ctx, lambda node: node.begin_store,
                            alias, data, md, chunks)
    client.finish(handle)


@main.command()
@click.option("--alias", required=True)
@click.option("--out", "out_path", default="-",
              help="write data to this file; - for stdout (default)")
@click.pass_context
def read(ctx, alias, out_path):
    client, handle = _begin(ctx, lambda node: node.begin_retrieve, alias)
    client.finish(handle, pd_to=out_path)


@main.command()
@click.option("--alias", required=True)
@click.option("--data", "data_src", required=True)
@click.pass_context
def update(ctx, alias, data_src):
    data = _read_data(data_src)
    client, handle = _begin(ctx, lambda node: node.begin_update, alias, data)
    client.finish(handle)


@main.command()
@click.option("--alias", required=True)
@click.pass_context
def delete(ctx, alias):
    client, handle = _begin(ctx, lambda node: node.begin_delete, alias)
    client.finish(handle)


@main.command()
@click.option("--alias", required=True)
@click.option("--to", "grantee", required=True, help="<name>@<addr> of the grantee")
@click.option("--grant-alias", default=None,
              help="alias suggested to the grantee (default: same alias)")
@click.pass_context
def share(ctx, alias, grantee, grant_alias):
    identity = _parse_identity(grantee)
    client, handle = _begin(ctx, lambda node: node.begin_share,
                            alias, identity, grant_alias)
    client.finish(handle)


@main.command()
@click.option("--alias", required=True)
@click.option("--from", "revokee", required=True, help="identity name to revoke")
@click.pass_context
def revoke(ctx, alias, revokee):
    identity = _parse_identity(revokee)
    client, handle = _begin(ctx, lambda node: node.begin_revoke, alias, identity)
    client.finish(handle)


if __name__ == "__main__":
    main()
