"""Private Data System: self-sovereign storage of private data.

Data is split into undecipherable chunks spread across storage nodes,
indexed by anonymizing keys, and reachable only through key references
resolved by an audit node. Six choreographed operations (store, retrieve,
update, delete, share, revoke) run across four node roles without a
central conductor.

Subpackages and modules:

- ``keyspace``      key and correlation-tag generation and encoding
- ``secret_split``  XOR n-of-n splitting and recombination
- ``kvstore``       append-only, tombstoning key-value store
- ``protocol``      message schemas, framing, choreography table
- ``nodes``         the four role state machines
- ``transport``     deterministic simulated network and TCP backends
- ``sim_harness``   scenario runner, collusion analyzer, leak auditor
- ``cli``           pds-node / pdsctl / pds-sim entry points
"""

__version__ = "0.1.0"
