"""Walk all six operations across a simulated cluster.

One owner (alice) stores a secret, shares it with bob, updates it in
place, revokes bob, and finally deletes it. Every hop of every
choreography lands in the transcript printed at the end.

Run:  python demos/walkthrough.py
"""

import tempfile

from pds.sim_harness import ClusterSpec, SimCluster


def show(label, result):
    extra = f" value={result.value!r}" if result.value is not None else ""
    reason = f" reason={result.reason}" if result.reason else ""
    print(f"{label:28s} -> {result.outcome}{reason}{extra}")


def main():
    spec = ClusterSpec(processing={"pn-1": "alice", "pn-2": "bob"}, seed=2026)
    with tempfile.TemporaryDirectory() as data_dir:
        cluster = SimCluster(spec, data_dir)
        alice, bob = cluster.pn("alice"), cluster.pn("bob")

        secret = b"passport number K-0424242, expires 2031"
        show("alice stores 'passport'",
             cluster.run(alice.begin_store("passport", secret,
                                           {"type": "passport", "country": "RO"}, 3))[0])
        show("alice reads it back", cluster.run(alice.begin_retrieve("passport"))[0])

        show("alice shares with bob",
             cluster.run(alice.begin_share("passport", bob.identity))[0])
        show("bob reads the grant", cluster.run(bob.begin_retrieve("passport"))[0])

        renewed = b"passport number K-0424242, expires 2041 (renewed)"
        show("alice updates in place", cluster.run(alice.begin_update("passport", renewed))[0])
        show("bob sees the new data", cluster.run(bob.begin_retrieve("passport"))[0])

        show("alice revokes bob", cluster.run(alice.begin_revoke("passport", bob.identity))[0])
        show("bob is now denied", cluster.run(bob.begin_retrieve("passport"))[0])
        show("alice still reads", cluster.run(alice.begin_retrieve("passport"))[0])

        show("alice deletes", cluster.run(alice.begin_delete("passport"))[0])
        show("even alice now fails", cluster.run(alice.begin_retrieve("passport"))[0])

        counts = cluster.transcript.counts()
        print(f"\ntraffic: {counts['send']} sends, {counts['deliver']} deliveries, "
              f"{counts['drop']} drops")
        print("note: bob's store still lists the alias, but its reference is dead;")
        print("the storage nodes still hold chunks, but the index entry is a tombstone.")
        cluster.close()


if __name__ == "__main__":
    main()
