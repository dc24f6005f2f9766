"""Scenario runner and privacy verifiers (collusion analyzer, leak auditor)."""

from .cluster import ClusterSpec, SimCluster, TcpCluster, cluster_from_roster
from .collusion import AdversaryView, ReconstructionResult, attempt_reconstruction, snapshot_view
from .leakaudit import LeakFinding, LeakReport, audit_transcript
from .scenario import Scenario, ScenarioRun, load_scenario, run_scenario

__all__ = [
    "ClusterSpec",
    "SimCluster",
    "TcpCluster",
    "cluster_from_roster",
    "AdversaryView",
    "ReconstructionResult",
    "attempt_reconstruction",
    "snapshot_view",
    "LeakFinding",
    "LeakReport",
    "audit_transcript",
    "Scenario",
    "ScenarioRun",
    "load_scenario",
    "run_scenario",
]
