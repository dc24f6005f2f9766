"""``pds-node``: run one node of any role until signaled."""

from __future__ import annotations

import logging
import signal
import sys
import threading

import click

from . import EXIT_USAGE
from ..errors import ParameterError, PdsError
from ..nodes import AuditNode, IndexNode, ProcessingNode, StorageNode
from ..transport import TcpNode
from .config import load_config

logger = logging.getLogger("pds-node")

_NODE_CLASSES = {
    "audit": AuditNode,
    "index": IndexNode,
    "storage": StorageNode,
    "processing": ProcessingNode,
}


@click.command()
@click.option("--config", "config_path", envvar="PDS_CONFIG", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--verbose", is_flag=True, default=False)
def main(config_path: str, verbose: bool) -> None:
    """Serve one node; the data-dir log is replayed on start."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        loaded = load_config(config_path)
    except (ParameterError, OSError, ValueError) as exc:
        click.echo(f"bad config: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    transport = TcpNode(loaded.node.node_id, loaded.listen_host, loaded.listen_port,
                        peers=loaded.endpoints)
    try:
        node = _NODE_CLASSES[loaded.node.role](loaded.node, transport)
    except (ParameterError, PdsError) as exc:
        click.echo(f"cannot start node: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    transport.start(node.handle)
    logger.info("%s node %s listening on %s:%d", node.role, node.address,
                transport.listen_host, transport.listen_port)

    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    stop.wait()
    logger.info("shutting down")
    transport.stop()
    node.close()


if __name__ == "__main__":
    main()
