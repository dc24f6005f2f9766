"""Operator tooling: pds-node, pdsctl, pds-sim."""

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DENIED = 3
EXIT_TIMEOUT = 4
EXIT_INTERNAL = 5
