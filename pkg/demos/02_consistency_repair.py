"""Watch the repair loop resolve a logically impossible label pair.

A comparison pair ("A ranks above B" / "B ranks above A") cannot both be
True. We label both True on purpose, then let the repair procedure
enumerate the consistent joint labels, score each one, and apply the best.
"""

from random import Random

from icm.consistency import (
    consistency_fix,
    consistent_options,
    derive_links,
    inconsistency_count,
)
from icm.data import Assignment, parse_dataset
from icm.predictor import PlantedConceptOracle, balanced_concept
from icm.scorer import MODE_EXACT, Scorer

RECORDS = """\
{"id": "fwd", "claim": "Comparison: essay-a ranks above essay-b.\\nI think this Claim is", "partner_id": "rev", "orientation": "forward"}
{"id": "rev", "claim": "Comparison: essay-b ranks above essay-a.\\nI think this Claim is", "partner_id": "fwd", "orientation": "reverse"}
"""


def main():
    dataset = parse_dataset(RECORDS)
    links = derive_links(dataset)
    link = links[0]
    print(f"derived link: {link.first} <-> {link.second}, forbidden joints {sorted(link.forbidden)}")

    concept = balanced_concept(3, dataset.ids())
    print(f"hidden concept says: {concept}")
    scorer = Scorer(dataset, links, PlantedConceptOracle(concept),
                    alpha=50.0, mode=MODE_EXACT, context_budget=4)

    assignment = Assignment({"fwd": "True", "rev": "True"})
    print(f"\nstart: both True -> inconsistency count {inconsistency_count(assignment, links)}")

    print("utilities of every consistent relabeling:")
    for option in consistent_options(link, dataset.label_space):
        u = scorer.utility(Assignment({"fwd": option[0], "rev": option[1]})).utility
        print(f"  {option}: U = {u:+.3f}")

    consistency_fix(assignment, links, scorer, Random(0))
    print(f"\nafter repair: fwd={assignment.get('fwd')} rev={assignment.get('rev')} "
          f"(inconsistency {inconsistency_count(assignment, links)}, "
          f"U = {scorer.utility(assignment).utility:+.3f})")


if __name__ == "__main__":
    main()
