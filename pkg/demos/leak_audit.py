"""Audit real scenario traffic, then prove the auditor has teeth.

First every scenario in the corpus runs and its full-payload transcript
is checked against the five leak rules (all clean). Then one message of
the canonical run is doctored to echo the private data, and the audit
flags it.

Run:  python demos/leak_audit.py
"""

import base64
import copy
from pathlib import Path

from pds.sim_harness import audit_transcript, run_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    print("auditing the scenario corpus:")
    canonical = None
    for path in sorted(SCENARIOS.glob("*.json")):
        run = run_scenario(str(path))
        report = audit_transcript(run.transcript_entries, roles=run.roles,
                                  known_pds=run.known_pds, pn_stores=run.pn_stores())
        print(f"  {path.stem:24s} {report.messages_checked:4d} messages, "
              f"{len(report.findings)} findings")
        if path.stem == "canonical":
            canonical = run

    print("\nnow doctor one grant to echo the stored data:")
    entries = copy.deepcopy(canonical.transcript_entries)
    victim = next(e for e in entries if e["kind"] == "send" and e["step"] == "StoreGrant")
    victim["payload"]["mk"] = base64.b64encode(canonical.known_pds[0]).decode()
    report = audit_transcript(entries, roles=canonical.roles,
                              known_pds=canonical.known_pds,
                              pn_stores=canonical.pn_stores())
    print(report.to_text())


if __name__ == "__main__":
    main()
