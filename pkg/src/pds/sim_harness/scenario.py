"""Declarative scenario scripts and their runner.

A scenario file is JSON: ``{"name", "seed", "nodes": [...], "ops": [...],
"faults": [...], "net": {...}}``. Each op is ``{"id", "op", "actor",
"params", "after"}``; ``after`` may be omitted (runs after the previous
op), ``"start"`` (runs immediately, enabling concurrency), one op id, or
a list of op ids. Faults are ``{"kind": "kill_restart", "node", "after"}``
and fire when the named op completes.

The same script runs under the simulated network (deterministically,
faults allowed) or over TCP loopback (zero-loss, no faults), which is how
backend equivalence is checked.
"""

from __future__ import annotations

import json
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParameterError, ScenarioError
from ..nodes.base import OUTCOME_FAILED, OpResult
from ..transport import SimNetConfig
from .cluster import ClusterSpec, SimCluster, TcpCluster, cluster_from_roster

logger = logging.getLogger(__name__)

OP_KINDS = ("store", "retrieve", "update", "delete", "share", "revoke")
FAULT_KINDS = ("kill_restart",)


@dataclass
class ScenarioOp:
    id: str
    op: str
    actor: str
    params: dict
    after: list[str]


@dataclass
class ScenarioFault:
    kind: str
    node: str
    after: str


@dataclass
class Scenario:
    name: str
    seed: int
    roster: list[dict]
    ops: list[ScenarioOp]
    faults: list[ScenarioFault] = field(default_factory=list)
    net: dict = field(default_factory=dict)

    def net_config(self) -> SimNetConfig:
        lat = self.net.get("latency_ms", [1, 5])
        return SimNetConfig(
            seed=self.seed,
            latency_min_ms=int(lat[0]),
            latency_max_ms=int(lat[1]),
            drop_prob=float(self.net.get("drop_prob", 0.0)),
            reorder_window_ms=int(self.net.get("reorder_window_ms", 0)),
        )


def load_scenario(source: str | Path | dict) -> Scenario:
    """Parse and validate a scenario; reference errors are rejected here,
    before anything runs."""
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        default_name = Path(source).stem
    else:
        doc, default_name = source, "inline"

    roster = doc.get("nodes", [])
    spec = cluster_from_roster(roster)  # validates roles and completeness
    identities = set(spec.processing.values())
    if len(identities) != len(spec.processing):
        raise ScenarioError("processing identities must be distinct")
    node_ids = set(spec.roles())

    ops: list[ScenarioOp] = []
    seen_ids: set[str] = set()
    aliases: dict[str, set[str]] = {name: set() for name in identities}
    prev_id: str | None = None
    for i, raw in enumerate(doc.get("ops", [])):
        op_id = raw.get("id", f"op{i + 1}")
        kind = raw.get("op")
        actor = raw.get("actor")
        params = raw.get("params", {})
        if op_id in seen_ids:
            raise ScenarioError(f"duplicate op id {op_id!r}")
        if kind not in OP_KINDS:
            raise ScenarioError(f"{op_id}: unknown op {kind!r}")
        if actor not in identities:
            raise ScenarioError(f"{op_id}: undeclared actor {actor!r}")
        after_raw = raw.get("after")
        if after_raw is None:
            after = [prev_id] if prev_id else []
        elif after_raw == "start":
            after = []
        elif isinstance(after_raw, str):
            after = [after_raw]
        else:
            after = list(after_raw)
        for dep in after:
            if dep not in seen_ids:
                raise ScenarioError(f"{op_id}: depends on unknown op {dep!r}")

        alias = params.get("alias")
        if not alias:
            raise ScenarioError(f"{op_id}: missing alias")
        if kind == "store":
            aliases[actor].add(alias)
        elif alias not in aliases[actor]:
            raise ScenarioError(f"{op_id}: {actor!r} has no alias {alias!r}")
        if kind in ("store", "update") and "data" not in params:
            raise ScenarioError(f"{op_id}: missing data")
        if kind == "share":
            target = params.get("to")
            if target not in identities:
                raise ScenarioError(f"{op_id}: share target {target!r} undeclared")
            aliases[target].add(params.get("grant_alias", alias))
        if kind == "revoke" and params.get("from") not in identities:
            raise ScenarioError(f"{op_id}: revoke target undeclared")

        ops.append(ScenarioOp(id=op_id, op=kind, actor=actor, params=params, after=after))
        seen_ids.add(op_id)
        prev_id = op_id

    faults: list[ScenarioFault] = []
    for raw in doc.get("faults", []):
        if raw.get("kind") not in FAULT_KINDS:
            raise ScenarioError(f"unknown fault kind {raw.get('kind')!r}")
        if raw.get("node") not in node_ids:
            raise ScenarioError(f"fault names unknown node {raw.get('node')!r}")
        if raw.get("after") not in seen_ids:
            raise ScenarioError(f"fault after unknown op {raw.get('after')!r}")
        faults.append(ScenarioFault(kind=raw["kind"], node=raw["node"], after=raw["after"]))

    return Scenario(
        name=doc.get("name", default_name),
        seed=int(doc.get("seed", 0)),
        roster=roster,
        ops=ops,
        faults=faults,
        net=doc.get("net", {}),
    )


def _op_data(op: ScenarioOp, rng: random.Random) -> bytes | None:
    spec = op.params.get("data")
    if spec is None:
        return None
    if isinstance(spec, dict) and "random" in spec:
        return rng.randbytes(int(spec["random"]))
    if isinstance(spec, dict) and "text" in spec:
        return spec["text"].encode("utf-8")
    if isinstance(spec, dict) and "base64" in spec:
        import base64

        return base64.b64decode(spec["base64"])
    raise ScenarioError(f"{op.id}: unsupported data spec {spec!r}")


@dataclass
class ScenarioRun:
    """Everything a verifier needs from one run."""

    scenario: Scenario
    results: list[tuple[ScenarioOp, OpResult]]
    dumps: dict[str, dict]
    transcript_entries: list[dict]
    known_pds: list[bytes]
    roles: dict[str, str]
    pn_stats: dict[str, dict]

    def result_vector(self) -> list[tuple]:
        return [(op.id, *res.brief()) for op, res in self.results]

    def result_for(self, op_id: str) -> OpResult:
        for op, res in self.results:
            if op.id == op_id:
                return res
        raise KeyError(op_id)

    def pn_stores(self) -> dict[str, dict]:
        return {nid: d["records"] for nid, d in self.dumps.items()
                if d["role"] == "processing"}


class _Driver:
    """Dependency-ordered op launcher shared by both backends."""

    def __init__(self, scenario: Scenario, cluster, data_rng: random.Random,
                 now_ms):
        self.scenario = scenario
        self.cluster = cluster
        self.data_rng = data_rng
        self.now_ms = now_ms
        self.data_cache: dict[str, bytes | None] = {
            op.id: _op_data(op, data_rng) for op in scenario.ops
        }
        self.known_pds = [d for d in self.data_cache.values() if d]
        self.completed: dict[str, OpResult] = {}
        self.running: dict[str, object] = {}
        # ops blocked on an alias that a still-in-flight grant will create
        self.waiting: dict[str, int] = {}
        self.faults_by_op: dict[str, list[ScenarioFault]] = {}
        for fault in scenario.faults:
            self.faults_by_op.setdefault(fault.after, []).append(fault)

    def _begin(self, op: ScenarioOp):
        pn = self.cluster.pn(op.actor)
        params = op.params
        alias = params["alias"]
        data = self.data_cache[op.id]
        if op.op == "store":
            return pn.begin_store(alias, data, params.get("meta"), params.get("chunks"))
        if op.op == "retrieve":
            return pn.begin_retrieve(alias)
        if op.op == "update":
            return pn.begin_update(alias, data)
        if op.op == "delete":
            return pn.begin_delete(alias)
        if op.op == "share":
            grantee = self.cluster.pn(params["to"]).identity
            return pn.begin_share(alias, grantee, params.get("grant_alias"))
        if op.op == "revoke":
            return pn.begin_revoke(alias, self.cluster.pn(params["from"]).identity)
        raise ScenarioError(f"unknown op kind {op.op!r}")

    def start_eligible(self) -> None:
        for op in self.scenario.ops:
            if op.id in self.completed or op.id in self.running:
                continue
            if not all(dep in self.completed for dep in op.after):
                continue
            try:
                self.running[op.id] = self._begin(op)
                self.waiting.pop(op.id, None)
            except ParameterError as exc:
                if "unknown alias" in str(exc):
                    # a share grant for it may still be in flight; retry
                    # until the operation timeout budget runs out
                    entry = self.waiting.setdefault(
                        op.id, (self.now_ms() + self.cluster.spec.timeout_ms, str(exc)))
                    if self.now_ms() < entry[0]:
                        continue
                    self.waiting.pop(op.id, None)
                self._fail(op, f"precondition: {exc}")

    def _fail(self, op: ScenarioOp, reason: str) -> None:
        self.completed[op.id] = OpResult(op=op.op, alias=op.params.get("alias"),
                                         outcome=OUTCOME_FAILED, reason=reason)
        self._after_completion(op.id)

    def fail_waiting(self) -> None:
        """Give up on alias-blocked ops (the alias will never appear)."""
        for op_id in list(self.waiting):
            _, reason = self.waiting.pop(op_id)
            op = next(o for o in self.scenario.ops if o.id == op_id)
            self._fail(op, f"precondition: {reason}")

    def _after_completion(self, op_id: str) -> None:
        for fault in self.faults_by_op.get(op_id, []):
            logger.info("fault: kill_restart %s after %s", fault.node, op_id)
            self.cluster.kill_restart(fault.node)

    def harvest(self) -> bool:
        """Move finished handles to completed; True if anything moved."""
        moved = False
        for op_id, handle in list(self.running.items()):
            if getattr(handle, "done", False):
                self.completed[op_id] = handle.result
                del self.running[op_id]
                self._after_completion(op_id)
                moved = True
        return moved

    @property
    def all_done(self) -> bool:
        return len(self.completed) == len(self.scenario.ops)

    def results(self) -> list[tuple[ScenarioOp, OpResult]]:
        return [(op, self.completed[op.id]) for op in self.scenario.ops]


def run_scenario(scenario: Scenario | str | Path | dict, backend: str = "sim",
                 data_dir: str | Path | None = None,
                 transcript_path: str | Path | None = None) -> ScenarioRun:
    """Execute a scenario; deterministic under fixed seed on the sim backend."""
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    if backend not in ("sim", "tcp"):
        raise ScenarioError(f"unknown backend {backend!r}")
    if backend == "tcp" and scenario.faults:
        raise ScenarioError("fault schedules run only on the sim backend")

    import tempfile

    own_dir = None
    if data_dir is None:
        own_dir = tempfile.TemporaryDirectory(prefix="pds-run-")
        data_dir = own_dir.name

    spec = cluster_from_roster(scenario.roster, seed=scenario.seed)
    data_rng = random.Random(f"{scenario.seed}:data")

    if backend == "sim":
        cluster = SimCluster(spec, data_dir, scenario.net_config(), transcript_path)
    else:
        cluster = TcpCluster(spec, data_dir, transcript_path)

    try:
        now_ms = cluster.net.now_ms if backend == "sim" else \
            (lambda: int(time.monotonic() * 1000))
        driver = _Driver(scenario, cluster, data_rng, now_ms)
        driver.start_eligible()
        if backend == "sim":
            net = cluster.net
            while not driver.all_done:
                if driver.harvest() or driver.waiting:
                    driver.start_eligible()
                if driver.all_done:
                    break
                if net.step():
                    continue
                # queue drained: alias-blocked ops will never unblock, and
                # handles without pending state (their node was restarted
                # mid-flight) will never resolve
                driver.fail_waiting()
                if driver.running:
                    for op_id in list(driver.running):
                        op = next(o for o in scenario.ops if o.id == op_id)
                        driver.completed[op_id] = OpResult(
                            op=op.op, alias=op.params.get("alias"),
                            outcome=OUTCOME_FAILED, reason="node_restarted")
                        del driver.running[op_id]
                        driver._after_completion(op_id)
                    driver.start_eligible()
                elif not driver.all_done:
                    driver.start_eligible()
                    if not driver.running and not driver.waiting and not driver.all_done:
                        raise ScenarioError("scenario stalled with ops unstarted")
        else:
            deadline = time.monotonic() + 120.0
            while not driver.all_done:
                if driver.harvest():
                    driver.start_eligible()
                    continue
                if driver.waiting:
                    driver.start_eligible()
                if time.monotonic() > deadline:
                    raise ScenarioError("tcp scenario run exceeded 120s")
                time.sleep(0.002)

        pn_stats = {nid: dict(node.stats) for nid, node in cluster.nodes.items()
                    if node.role == "processing"}
        run = ScenarioRun(
            scenario=scenario,
            results=driver.results(),
            dumps=cluster.dumps(),
            transcript_entries=list(cluster.transcript.entries),
            known_pds=driver.known_pds,
            roles=spec.roles(),
            pn_stats=pn_stats,
        )
        return run
    finally:
        cluster.close()
        if own_dir is not None:
            own_dir.cleanup()
