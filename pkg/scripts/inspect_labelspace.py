#!/usr/bin/env python3
"""Summarize a labelspace.json file.

Prints label counts by status, a provenance histogram, pending borderline
pairs, and the promotion audit trail (every refinement promotion with the
frequency / similarity / gamma values that justified it at the time).
"""

from __future__ import annotations

import argparse
from collections import Counter

from openlabels.labelspace import LabelSpace


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("path", help="path to a labelspace.json file")
    parser.add_argument("--log-tail", type=int, default=0, metavar="N",
                        help="also print the last N mutation log entries")
    args = parser.parse_args()

    space = LabelSpace.load(args.path)
    labels = [space.labels[i] for i in sorted(space.labels)]

    status_counts = Counter(l.status for l in labels)
    provenance_counts = Counter(l.provenance for l in labels)
    print(f"version {space.version}, {len(labels)} labels, "
          f"{len(space.pairs)} pairs ({len(space.pending_pairs())} pending)")
    print("by status:     " + ", ".join(f"{s}={n}" for s, n in sorted(status_counts.items())))
    print("by provenance: " + ", ".join(f"{p}={n}" for p, n in sorted(provenance_counts.items())))

    print("\nlabels:")
    for label in labels:
        print(f"  {label.id:>4} [{label.status:>7}] {label.name}  "
              f"({label.provenance}, v{label.created_at_version})")

    pending = space.pending_pairs()
    if pending:
        print("\npending pairs (needs review):")
        for pair in pending:
            a = space.labels[pair.label_a].name
            b = space.labels[pair.label_b].name
            opinion = f", judge said {pair.judge_opinion!r}" if pair.judge_opinion else ""
            print(f"  #{pair.id} {a!r} vs {b!r}  sim={pair.similarity:.4f}{opinion}")

    promotions = [
        rec for rec in space.log
        if rec["op"] == "add_label"
        and rec["payload"].get("provenance") == "refine-promotion"
    ]
    if promotions:
        print("\npromotion audit trail:")
        for rec in promotions:
            p = rec["payload"]
            print(f"  v{rec['version']} {p['name']!r}: frequency={p['frequency']}"
                  f" max_similarity={p['max_similarity']:.4f} gamma={p['gamma']:.4f}")

    if args.log_tail > 0:
        print(f"\nlast {min(args.log_tail, len(space.log))} log entries:")
        for rec in space.log[-args.log_tail:]:
            keys = ", ".join(sorted(rec["payload"]))
            print(f"  v{rec['version']} {rec['op']} ({keys})")


if __name__ == "__main__":
    main()
