"""Dataset parsing, invariants, serialization round-trips, and accuracy."""

import json

import pytest
from hypothesis import given, strategies as st

from icm.data import (
    Assignment,
    Dataset,
    DatasetError,
    EvaluationError,
    Example,
    LabelSpace,
    accuracy,
    parse_dataset,
    serialize_dataset,
    serialize_labels,
)


def record(ex_id, claim="Claim text.\nI think this Claim is", **extra):
    obj = {"id": ex_id, "claim": claim}
    obj.update(extra)
    return json.dumps(obj)


PAIR_STREAM = "\n".join(
    [
        record("a", partner_id="b", orientation="forward"),
        record("b", partner_id="a", orientation="reverse"),
    ]
)


class TestParsing:
    def test_minimal_asymmetry_pair(self):
        dataset = parse_dataset(PAIR_STREAM)
        assert len(dataset) == 2
        assert dataset["a"].partner_id == "b"
        assert dataset["a"].orientation == "forward"
        assert dataset["b"].orientation == "reverse"

    def test_dangling_partner_rejected(self):
        stream = record("a", partner_id="ghost", orientation="forward")
        with pytest.raises(DatasetError, match="dangling partner"):
            parse_dataset(stream)

    def test_orientation_without_partner_rejected(self):
        stream = record("a", orientation="forward")
        with pytest.raises(DatasetError, match="orientation without partner"):
            parse_dataset(stream)

    def test_duplicate_id_rejected_with_line_number(self):
        stream = "\n".join([record("a"), record("a")])
        with pytest.raises(DatasetError, match="line 2"):
            parse_dataset(stream)

    def test_malformed_line_carries_line_number(self):
        stream = "\n".join([record("a"), "{not json"])
        with pytest.raises(DatasetError, match="line 2"):
            parse_dataset(stream)

    def test_final_answer_requires_group_key(self):
        stream = record("a", final_answer="5")
        with pytest.raises(DatasetError, match="final_answer without group_key"):
            parse_dataset(stream)

    def test_unknown_field_rejected(self):
        stream = json.dumps({"id": "a", "claim": "x", "mystery": 1})
        with pytest.raises(DatasetError, match="unknown fields"):
            parse_dataset(stream)

    def test_golden_label_outside_label_space_rejected(self):
        stream = record("a", golden_label="Maybe")
        with pytest.raises(DatasetError, match="not in label space"):
            parse_dataset(stream)

    def test_mismatched_partner_orientation_rejected(self):
        stream = "\n".join(
            [
                record("a", partner_id="b", orientation="forward"),
                record("b", partner_id="a", orientation="forward"),
            ]
        )
        with pytest.raises(DatasetError, match="does not point back"):
            parse_dataset(stream)

    def test_large_stream_parses_completely(self):
        # benchmark-scale ingest: 2,560 records in one stream
        stream = "\n".join(record(f"q{i}") for i in range(2560))
        dataset = parse_dataset(stream)
        assert len(dataset) == 2560

    def test_blank_lines_ignored(self):
        dataset = parse_dataset(record("a") + "\n\n" + record("b") + "\n")
        assert len(dataset) == 2


class TestRoundTrip:
    def test_serialize_parse_identity(self):
        stream = "\n".join(
            [
                record("a", partner_id="b", orientation="forward", golden_label="True"),
                record("b", partner_id="a", orientation="reverse", golden_label="False"),
                record("c", group_key="q1", final_answer="5"),
                record(
                    "d",
                    group_key="q1",
                    final_answer="7",
                    custom_links=[{"other": "c", "forbidden": [["True", "True"]]}],
                ),
            ]
        )
        first = serialize_dataset(parse_dataset(stream))
        second = serialize_dataset(parse_dataset(first))
        assert first == second

    @given(
        st.lists(
            st.tuples(st.booleans(), st.sampled_from(["True", "False"])),
            min_size=1,
            max_size=12,
        )
    )
    def test_round_trip_with_golden_subsets(self, rows):
        lines = []
        for i, (has_gold, gold) in enumerate(rows):
            extra = {"golden_label": gold} if has_gold else {}
            lines.append(record(f"ex{i}", **extra))
        first = serialize_dataset(parse_dataset("\n".join(lines)))
        assert serialize_dataset(parse_dataset(first)) == first

    def test_label_output_format(self):
        dataset = parse_dataset("\n".join([record("a"), record("b")]))
        assignment = Assignment({"a": "True"})
        out = serialize_labels(dataset, assignment)
        rows = [json.loads(line) for line in out.splitlines()]
        assert rows == [
            {"id": "a", "claim": "Claim text.\nI think this Claim is", "label": "True", "source": "icm"}
        ]


class TestGoldenFirewall:
    def test_examples_carry_no_golden_attribute(self):
        dataset = parse_dataset(record("a", golden_label="True"))
        example = dataset["a"]
        assert not hasattr(example, "golden_label")
        assert dataset.golden_label_of("a") == "True"
        assert dataset.golden_labels() == {"a": "True"}

    def test_golden_map_is_a_copy(self):
        dataset = parse_dataset(record("a", golden_label="True"))
        view = dataset.golden_labels()
        view["a"] = "False"
        assert dataset.golden_label_of("a") == "True"


class TestAccuracy:
    def _dataset(self, n=10):
        stream = "\n".join(record(f"e{i}", golden_label="True") for i in range(n))
        return parse_dataset(stream)

    def test_identity_scores_one(self):
        dataset = self._dataset()
        assignment = Assignment({f"e{i}": "True" for i in range(10)})
        assert accuracy(assignment, dataset) == 1.0

    def test_partial_agreement(self):
        dataset = self._dataset()
        labels = {f"e{i}": ("True" if i < 8 else "False") for i in range(10)}
        assert accuracy(Assignment(labels), dataset) == 0.8

    def test_all_flipped_scores_zero(self):
        dataset = self._dataset()
        assignment = Assignment({f"e{i}": "False" for i in range(10)})
        assert accuracy(assignment, dataset) == 0.0

    def test_no_golden_labels_errors(self):
        dataset = parse_dataset(record("a"))
        with pytest.raises(EvaluationError, match="no golden labels"):
            accuracy(Assignment({"a": "True"}), dataset)

    def test_unlabeled_golden_example_errors_with_ids(self):
        dataset = self._dataset(3)
        with pytest.raises(EvaluationError, match=r"\['e1', 'e2'\]"):
            accuracy(Assignment({"e0": "True"}), dataset)

    @given(st.permutations(list(range(6))))
    def test_invariant_under_example_order(self, order):
        lines = [record(f"e{i}", golden_label="True" if i % 2 else "False") for i in order]
        dataset = parse_dataset("\n".join(lines))
        labels = {f"e{i}": "True" for i in range(6)}
        assert accuracy(Assignment(labels), dataset) == pytest.approx(0.5)


class TestTypes:
    def test_label_space_needs_two_distinct_labels(self):
        with pytest.raises(ValueError):
            LabelSpace(labels=("True",))
        with pytest.raises(ValueError):
            LabelSpace(labels=("True", "True"))

    def test_assignment_version_counts_mutations(self):
        assignment = Assignment()
        assignment.set("a", "True")
        assignment.set("a", "False")
        assert assignment.version == 2
        clone = assignment.clone()
        clone.set("b", "True")
        assert assignment.version == 2
        assert "b" not in assignment

    def test_dataset_rejects_self_partner(self):
        with pytest.raises(DatasetError, match="own partner"):
            Dataset([Example(id="a", claim_text="x", partner_id="a", orientation="forward")])
