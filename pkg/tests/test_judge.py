"""Judge rubric arithmetic, prompt labeling, and verdict parsing."""

import itertools
import random

import pytest

from revtraits import judge
from revtraits.errors import ArgumentError, MetricError, SchemaError
from revtraits.judge import (
    DIMENSIONS,
    WEIGHTS,
    JudgeVerdict,
    QualityDimensions,
    build_judge_prompt,
    composite_score,
    computed_agreement,
    parse_verdict,
    resolve_labels,
)


def dims(**kw):
    base = dict(evidence_quality=5, reasoning_clarity=5, trait_understanding=5,
                evidence_specificity=5, conclusion_accuracy=5)
    base.update(kw)
    return QualityDimensions(**base)


VERDICT_XML = """<judgment>
    <initial>
        <trait>
            <name>Openness</name>
            <score>Moderate to High</score>
            <consistency>High</consistency>
            <sufficiency>Moderate</sufficiency>
            <evidence>Several reviews describe flexible problem-solving.</evidence>
        </trait>
    </initial>
    <evaluations>
        <model>
            <label>Model A</label>
            <evidence_quality>8</evidence_quality>
            <reasoning_clarity>7</reasoning_clarity>
            <trait_understanding>9</trait_understanding>
            <evidence_specificity>6</evidence_specificity>
            <conclusion_accuracy>8</conclusion_accuracy>
            <feedback>Good grounding in quotes.</feedback>
        </model>
        <model>
            <label>Model B</label>
            <evidence_quality>5</evidence_quality>
            <reasoning_clarity>6</reasoning_clarity>
            <trait_understanding>7</trait_understanding>
            <evidence_specificity>4</evidence_specificity>
            <conclusion_accuracy>5</conclusion_accuracy>
            <feedback>Vague citations.</feedback>
        </model>
    </evaluations>
    <consensus>
        <score>Moderate to High</score>
        <agreement>0.82</agreement>
        <reliability>0.91</reliability>
    </consensus>
</judgment>"""


class TestCompositeScore:
    def test_weights_sum_to_one(self):
        assert abs(sum(WEIGHTS.values()) - 1.0) < 1e-15

    def test_all_tens(self):
        assert abs(composite_score(dims(**{d: 10 for d in DIMENSIONS})) - 10.0) <= 1e-12

    def test_all_zeros(self):
        assert composite_score(dims(**{d: 0 for d in DIMENSIONS})) == 0.0

    def test_evidence_quality_only(self):
        d = dims(evidence_quality=10, reasoning_clarity=0, trait_understanding=0,
                 evidence_specificity=0, conclusion_accuracy=0)
        assert abs(composite_score(d) - 2.5) <= 1e-12

    def test_single_dimension_weights(self):
        expected = {"evidence_quality": 2.5, "reasoning_clarity": 2.0,
                    "trait_understanding": 2.0, "evidence_specificity": 1.5,
                    "conclusion_accuracy": 2.0}
        for dim, value in expected.items():
            d = dims(**{k: (10 if k == dim else 0) for k in DIMENSIONS})
            assert abs(composite_score(d) - value) <= 1e-12

    def test_linear_and_monotone(self):
        rng = random.Random(3)
        for _ in range(100):
            base = {d: rng.randint(0, 9) for d in DIMENSIONS}
            for dim in DIMENSIONS:
                higher = dict(base)
                higher[dim] = base[dim] + 1
                delta = composite_score(dims(**higher)) - composite_score(dims(**base))
                assert abs(delta - WEIGHTS[dim]) <= 1e-12

    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            dims(evidence_quality=11)
        with pytest.raises(ValueError):
            dims(conclusion_accuracy=-1)


class TestBuildJudgePrompt:
    def test_labels_in_order_exactly_once(self):
        system, user = build_judge_prompt("Jane Smith", "reviews...", "Openness",
                                          ["out1", "out2", "out3"])
        for label in ("Model A", "Model B", "Model C"):
            assert user.count(f"=== {label} ===") == 1
        assert user.index("Model A") < user.index("Model B") < user.index("Model C")

    def test_dimension_names_in_fixed_order(self):
        system, _ = build_judge_prompt("J", "doc", "Openness", ["x"])
        positions = [system.index(t) for t in (
            "Evidence Quality", "Reasoning Clarity", "Trait Understanding",
            "Evidence Specificity", "Conclusion Accuracy",
        )]
        assert positions == sorted(positions)

    def test_three_steps_described(self):
        system, _ = build_judge_prompt("J", "doc", "Openness", ["x"])
        assert "Step 1" in system and "Step 2" in system and "Step 3" in system

    def test_order_preserved_from_caller(self):
        _, user_ab = build_judge_prompt("J", "doc", "IQC", ["first", "second"])
        _, user_ba = build_judge_prompt("J", "doc", "IQC", ["second", "first"])
        assert user_ab.index("first") < user_ab.index("second")
        assert user_ba.index("second") < user_ba.index("first")

    def test_empty_outputs_rejected(self):
        with pytest.raises(ArgumentError):
            build_judge_prompt("J", "doc", "IQC", [])


class TestParseVerdict:
    def test_full_fixture(self):
        parsed = parse_verdict(VERDICT_XML, "Openness")
        assert parsed.initial_assessment.score_label == "Moderate to High"
        assert set(parsed.per_label) == {"Model A", "Model B"}
        a = parsed.per_label["Model A"].dimensions
        assert (a.evidence_quality, a.conclusion_accuracy) == (8, 8)
        assert parsed.consensus_label == "Moderate to High"
        assert parsed.agreement == 0.82
        assert parsed.reliability == 0.91

    def test_prose_outside_envelope_tolerated(self):
        parsed = parse_verdict("Here you go:\n" + VERDICT_XML + "\nCheers", "Openness")
        assert parsed.consensus_label == "Moderate to High"

    def test_dimension_out_of_range(self):
        bad = VERDICT_XML.replace("<evidence_quality>8</evidence_quality>",
                                  "<evidence_quality>11</evidence_quality>")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_RANGE"

    def test_agreement_out_of_range(self):
        bad = VERDICT_XML.replace("<agreement>0.82</agreement>",
                                  "<agreement>1.2</agreement>")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_RANGE"

    def test_missing_reliability(self):
        bad = VERDICT_XML.replace("        <reliability>0.91</reliability>\n", "")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_SCHEMA"

    def test_missing_envelope(self):
        with pytest.raises(SchemaError) as err:
            parse_verdict("nothing here", "Openness")
        assert err.value.code == "E_NO_ENVELOPE"

    def test_wrong_trait_in_initial(self):
        with pytest.raises(SchemaError) as err:
            parse_verdict(VERDICT_XML, "Extraversion")
        assert err.value.code == "E_BAD_TRAIT"

    def test_duplicate_label(self):
        bad = VERDICT_XML.replace("<label>Model B</label>", "<label>Model A</label>")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_DUP"

    def test_non_integer_dimension(self):
        bad = VERDICT_XML.replace("<evidence_quality>8</evidence_quality>",
                                  "<evidence_quality>8.5</evidence_quality>")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_SCHEMA"

    def test_invalid_consensus_enum(self):
        bad = VERDICT_XML.replace("<score>Moderate to High</score>\n        <agreement>",
                                  "<score>Medium</score>\n        <agreement>")
        with pytest.raises(SchemaError) as err:
            parse_verdict(bad, "Openness")
        assert err.value.code == "E_ENUM"


class TestResolveLabels:
    def test_blinding_table_applied(self):
        parsed = parse_verdict(VERDICT_XML, "Openness")
        table = {"Model A": "gpt-x", "Model B": "claude-y"}
        verdict = resolve_labels(parsed, table, "p1", "Openness")
        assert set(verdict.per_model) == {"gpt-x", "claude-y"}
        assert verdict.per_model["gpt-x"].dimensions.evidence_quality == 8

    def test_permuted_table_keeps_association(self):
        parsed = parse_verdict(VERDICT_XML, "Openness")
        swapped = {"Model A": "claude-y", "Model B": "gpt-x"}
        verdict = resolve_labels(parsed, swapped, "p1", "Openness")
        assert verdict.per_model["claude-y"].dimensions.evidence_quality == 8
        assert verdict.per_model["gpt-x"].dimensions.evidence_quality == 5

    def test_unknown_label_rejected(self):
        parsed = parse_verdict(VERDICT_XML, "Openness")
        with pytest.raises(SchemaError):
            resolve_labels(parsed, {"Model A": "gpt-x"}, "p1", "Openness")

    def test_verdict_invariants(self):
        parsed = parse_verdict(VERDICT_XML, "Openness")
        with pytest.raises(ValueError):
            JudgeVerdict(
                physician_id="p1", trait="Openness",
                initial_assessment=parsed.initial_assessment,
                per_model={}, consensus_label="High",
                cross_model_agreement=0.5, reliability=0.5,
            )


class TestComputedAgreement:
    def test_identical_scores(self):
        assert computed_agreement([0.5, 0.5, 0.5]) == 1.0

    def test_extreme_disagreement(self):
        assert computed_agreement([0.0, 1.0]) == 0.0

    def test_hand_example(self):
        value = computed_agreement([0.5, 0.75, 0.75])
        assert abs(value - (1.0 - (0.25 + 0.25 + 0.0) / 3)) <= 1e-12

    def test_permutation_symmetry(self):
        scores = [0.0, 0.25, 1.0, 0.5]
        base = computed_agreement(scores)
        for perm in itertools.permutations(scores):
            assert abs(computed_agreement(list(perm)) - base) <= 1e-12

    def test_equals_one_iff_all_equal(self):
        rng = random.Random(4)
        for _ in range(100):
            scores = [rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]) for _ in range(4)]
            value = computed_agreement(scores)
            if len(set(scores)) == 1:
                assert value == 1.0
            else:
                assert value < 1.0

    def test_missing_scores_skipped(self):
        assert computed_agreement([0.5, None, 0.5]) == 1.0

    def test_fewer_than_two_raises(self):
        with pytest.raises(MetricError):
            computed_agreement([0.5, None])
