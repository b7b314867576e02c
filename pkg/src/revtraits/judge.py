"""LLM-as-a-judge: three-step quality assessment of competing extractions.

The judge sees the physician's reviews plus anonymized model outputs
("Model A", "Model B", ...; the caller owns the blinding table) and must
(1) form its own independent assessment of the trait, (2) rate each model
on five 0-10 quality dimensions, and (3) issue a consensus score with
agreement and reliability estimates, all inside a strict XML envelope.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from string import ascii_uppercase
from typing import Optional, Sequence
from xml.etree import ElementTree

from .errors import ArgumentError, MetricError, SchemaError
from .schema import (
    QUALITY_LABELS,
    SCORE_LABELS,
    TRAIT_DEFINITIONS,
    TraitAssessment,
    TraitFramework,
    framework_for_trait,
)

DIMENSIONS = (
    "evidence_quality",
    "reasoning_clarity",
    "trait_understanding",
    "evidence_specificity",
    "conclusion_accuracy",
)

DIMENSION_TITLES = {
    "evidence_quality": "Evidence Quality",
    "reasoning_clarity": "Reasoning Clarity",
    "trait_understanding": "Trait Understanding",
    "evidence_specificity": "Evidence Specificity",
    "conclusion_accuracy": "Conclusion Accuracy",
}

WEIGHTS = {
    "evidence_quality": 0.25,
    "reasoning_clarity": 0.20,
    "trait_understanding": 0.20,
    "evidence_specificity": 0.15,
    "conclusion_accuracy": 0.20,
}

assert abs(sum(WEIGHTS.values()) - 1.0) < 1e-12, "rubric weights must sum to 1"


@dataclass(frozen=True)
class QualityDimensions:
    evidence_quality: int
    reasoning_clarity: int
    trait_understanding: int
    evidence_specificity: int
    conclusion_accuracy: int

    def __post_init__(self):
        for dim in DIMENSIONS:
            value = getattr(self, dim)
            if not isinstance(value, int) or not 0 <= value <= 10:
                raise ValueError(f"{dim} must be an integer in [0, 10], got {value!r}")

    def as_dict(self) -> dict[str, int]:
        return {dim: getattr(self, dim) for dim in DIMENSIONS}


@dataclass(frozen=True)
class ModelEvaluation:
    dimensions: QualityDimensions
    feedback: str = ""


@dataclass
class JudgeVerdict:
    physician_id: str
    trait: str
    initial_assessment: TraitAssessment
    per_model: dict[str, ModelEvaluation]
    consensus_label: str
    cross_model_agreement: float
    reliability: float

    def __post_init__(self):
        if not self.per_model:
            raise ValueError("per_model must be non-empty")
        for value in (self.cross_model_agreement, self.reliability):
            if not 0.0 <= value <= 1.0:
                raise ValueError("agreement and reliability must lie in [0, 1]")


def composite_score(d: QualityDimensions) -> float:
    """Weighted rubric score on the 0-10 scale."""
    return sum(WEIGHTS[dim] * getattr(d, dim) for dim in DIMENSIONS)


def anon_labels(count: int) -> list[str]:
    if count < 1:
        raise ArgumentError("need at least one model output")
    if count > len(ascii_uppercase):
        raise ArgumentError(f"too many model outputs ({count})")
    return [f"Model {ascii_uppercase[i]}" for i in range(count)]


_JUDGE_SYSTEM = """You are a senior evaluation expert assessing the quality of trait extractions from physician reviews.

You will receive a physician's patient reviews and several anonymized model outputs, each assessing the same trait. Follow this three-step protocol:

Step 1 - Initial Independent Judgment: Analyze the reviews yourself, without considering the model outputs, and form your own assessment of the trait.

Step 2 - Comparative Model Evaluation: Rate each model output on five dimensions, each as an integer from 0 to 10:
- Evidence Quality (weight 25%): how well the cited evidence supports the trait conclusion.
- Reasoning Clarity (weight 20%): logical coherence and interpretability of the rationale.
- Trait Understanding (weight 20%): whether the model correctly interprets the trait definition.
- Evidence Specificity (weight 15%): precision and detail of the behavioral observations.
- Conclusion Accuracy (weight 20%): whether the final score aligns with the supporting evidence.

Step 3 - Final Integrated Judgment: Synthesize the model assessments with your own analysis into a consensus score, a cross-model agreement value in [0, 1], and a reliability value in [0, 1].

Output strictly in XML with this structure and nothing outside it:
<judgment>
    <initial>
        <trait>
            <name>TRAIT NAME</name>
            <score>One of [No Evidence, Low, Low to Moderate, Moderate, Moderate to High, High]</score>
            <consistency>One of [Low, Moderate, High]</consistency>
            <sufficiency>One of [Low, Moderate, High]</sufficiency>
            <evidence>2-3 sentences grounding your own judgment in the reviews.</evidence>
        </trait>
    </initial>
    <evaluations>
        <model>
            <label>Model A</label>
            <evidence_quality>0-10</evidence_quality>
            <reasoning_clarity>0-10</reasoning_clarity>
            <trait_understanding>0-10</trait_understanding>
            <evidence_specificity>0-10</evidence_specificity>
            <conclusion_accuracy>0-10</conclusion_accuracy>
            <feedback>Short critique.</feedback>
        </model>
    </evaluations>
    <consensus>
        <score>One of [No Evidence, Low, Low to Moderate, Moderate, Moderate to High, High]</score>
        <agreement>0.0-1.0</agreement>
        <reliability>0.0-1.0</reliability>
    </consensus>
</judgment>"""


def build_judge_prompt(physician_name: str, document: str, trait: str,
                       blinded_outputs: Sequence[str]) -> tuple[str, str]:
    """Build the judge's two-message prompt.

    ``blinded_outputs`` must already be anonymized and in presentation
    order; labels Model A, B, ... are attached positionally here, so the
    caller's blinding table maps them back to real model ids.
    """
    if not blinded_outputs:
        raise ArgumentError("blinded_outputs must be non-empty")
    labels = anon_labels(len(blinded_outputs))
    definition = TRAIT_DEFINITIONS.get(trait, "")
    parts = [
        f"Trait under evaluation: {trait}",
        f"Trait definition: {definition}",
        f"The Physician to focus is: {physician_name}",
        "",
        "The reviews related to the physician are:",
        "",
        document,
        "",
        "Anonymized model outputs to evaluate:",
    ]
    for label, output in zip(labels, blinded_outputs):
        parts.append("")
        parts.append(f"=== {label} ===")
        parts.append(output)
    return _JUDGE_SYSTEM, "\n".join(parts)


@dataclass
class ParsedVerdict:
    """Verdict with per-label ratings, before the blinding table is applied."""

    initial_assessment: TraitAssessment
    per_label: dict[str, ModelEvaluation]
    consensus_label: str
    agreement: float
    reliability: float


def _text(elem: ElementTree.Element) -> str:
    return (elem.text or "").strip()


def _only_child(parent: ElementTree.Element, tag: str) -> ElementTree.Element:
    found = [c for c in parent if c.tag == tag]
    if len(found) != 1:
        raise SchemaError(
            f"expected exactly one <{tag}> in <{parent.tag}>, found {len(found)}",
            code="E_SCHEMA",
            fragment=parent.tag,
        )
    return found[0]


def _parse_initial_trait(elem: ElementTree.Element, fw: TraitFramework,
                         expected_trait: str) -> TraitAssessment:
    fields = {}
    for child in elem:
        if child.tag in fields:
            raise SchemaError(f"duplicate <{child.tag}> in initial trait",
                              code="E_SCHEMA", fragment=child.tag)
        fields[child.tag] = _text(child)
    for required in ("name", "score", "consistency", "sufficiency", "evidence"):
        if required not in fields:
            raise SchemaError(f"initial trait missing <{required}>",
                              code="E_SCHEMA", fragment=required)
    name = fields["name"]
    if name != expected_trait:
        raise SchemaError(
            f"initial trait names {name!r}, expected {expected_trait!r}",
            code="E_BAD_TRAIT", fragment=name,
        )
    if fields["score"] not in SCORE_LABELS:
        raise SchemaError(f"invalid score token {fields['score']!r}",
                          code="E_ENUM", fragment=fields["score"])
    for key in ("consistency", "sufficiency"):
        if fields[key] not in QUALITY_LABELS:
            raise SchemaError(f"invalid {key} token {fields[key]!r}",
                              code="E_ENUM", fragment=fields[key])
    return TraitAssessment(
        name=name, score_label=fields["score"], evidence=fields["evidence"],
        consistency=fields["consistency"], sufficiency=fields["sufficiency"],
    )


def _parse_int_field(parent: ElementTree.Element, tag: str) -> int:
    elem = _only_child(parent, tag)
    raw = _text(elem)
    try:
        value = int(raw)
    except ValueError:
        raise SchemaError(f"<{tag}> is not an integer: {raw!r}",
                          code="E_SCHEMA", fragment=raw)
    if not 0 <= value <= 10:
        raise SchemaError(f"<{tag}> value {value} outside [0, 10]",
                          code="E_RANGE", fragment=raw)
    return value


def _parse_unit_field(parent: ElementTree.Element, tag: str) -> float:
    elem = _only_child(parent, tag)
    raw = _text(elem)
    try:
        value = float(raw)
    except ValueError:
        raise SchemaError(f"<{tag}> is not a number: {raw!r}",
                          code="E_SCHEMA", fragment=raw)
    if not 0.0 <= value <= 1.0:
        raise SchemaError(f"<{tag}> value {value} outside [0, 1]",
                          code="E_RANGE", fragment=raw)
    return value


def parse_verdict(raw_text: str, trait: str) -> ParsedVerdict:
    """Strictly parse a judge response for the given trait."""
    fw = framework_for_trait(trait)
    start = raw_text.find("<judgment>")
    end = raw_text.rfind("</judgment>")
    if start == -1 or end == -1:
        raise SchemaError("no <judgment> envelope found", code="E_NO_ENVELOPE",
                          fragment=raw_text[:200])
    try:
        root = ElementTree.fromstring(raw_text[start:end + len("</judgment>")])
    except ElementTree.ParseError as exc:
        raise SchemaError(f"verdict is not well-formed XML: {exc}",
                          code="E_SCHEMA", fragment=raw_text[start:start + 300])

    initial = _only_child(root, "initial")
    trait_elem = _only_child(initial, "trait")
    initial_assessment = _parse_initial_trait(trait_elem, fw, trait)

    evaluations = _only_child(root, "evaluations")
    per_label: dict[str, ModelEvaluation] = {}
    for model_elem in evaluations:
        if model_elem.tag != "model":
            raise SchemaError(f"unexpected element <{model_elem.tag}> in <evaluations>",
                              code="E_SCHEMA", fragment=model_elem.tag)
        label = _text(_only_child(model_elem, "label"))
        if not label:
            raise SchemaError("model evaluation missing label", code="E_SCHEMA",
                              fragment="label")
        if label in per_label:
            raise SchemaError(f"duplicate model label {label!r}", code="E_DUP",
                              fragment=label)
        dims = QualityDimensions(**{d: _parse_int_field(model_elem, d) for d in DIMENSIONS})
        feedback_elems = [c for c in model_elem if c.tag == "feedback"]
        feedback = _text(feedback_elems[0]) if feedback_elems else ""
        per_label[label] = ModelEvaluation(dimensions=dims, feedback=feedback)
    if not per_label:
        raise SchemaError("verdict contains no model evaluations", code="E_SCHEMA",
                          fragment="evaluations")

    consensus = _only_child(root, "consensus")
    consensus_label = _text(_only_child(consensus, "score"))
    if consensus_label not in SCORE_LABELS:
        raise SchemaError(f"invalid consensus score {consensus_label!r}",
                          code="E_ENUM", fragment=consensus_label)
    agreement = _parse_unit_field(consensus, "agreement")
    reliability = _parse_unit_field(consensus, "reliability")
    return ParsedVerdict(
        initial_assessment=initial_assessment,
        per_label=per_label,
        consensus_label=consensus_label,
        agreement=agreement,
        reliability=reliability,
    )


def resolve_labels(parsed: ParsedVerdict, blinding_table: dict[str, str],
                   physician_id: str, trait: str) -> JudgeVerdict:
    """Re-key per-label ratings to true model ids using the blinding table."""
    missing = set(parsed.per_label) - set(blinding_table)
    if missing:
        raise SchemaError(
            f"verdict rates unknown label(s): {', '.join(sorted(missing))}",
            code="E_SCHEMA", fragment=",".join(sorted(missing)),
        )
    per_model = {
        blinding_table[label]: evaluation
        for label, evaluation in parsed.per_label.items()
    }
    return JudgeVerdict(
        physician_id=physician_id,
        trait=trait,
        initial_assessment=parsed.initial_assessment,
        per_model=per_model,
        consensus_label=parsed.consensus_label,
        cross_model_agreement=parsed.agreement,
        reliability=parsed.reliability,
    )


def computed_agreement(scores: Sequence[Optional[float]]) -> float:
    """1 minus the mean pairwise absolute score difference across models.

    A reproducible surrogate stored beside the judge's own agreement figure.
    """
    present = [s for s in scores if s is not None]
    if len(present) < 2:
        raise MetricError("agreement undefined for fewer than 2 model scores",
                          code="E_DEGENERATE")
    diffs = [abs(a - b) for a, b in combinations(present, 2)]
    return 1.0 - sum(diffs) / len(diffs)
