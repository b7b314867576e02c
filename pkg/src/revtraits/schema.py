"""Trait vocabulary, strict envelope parsing, and score normalization.

Extraction responses arrive as an XML envelope (``<personality>`` for the
Big Five, ``<result>`` for the healthcare judgment traits) holding exactly
five ``<trait>`` blocks. Parsing is deliberately unforgiving: anything the
envelope schema does not allow raises :class:`~revtraits.errors.SchemaError`
with a typed code, and recovery is the caller's retry loop, never silent
repair. Prose outside the envelope is tolerated (models drift); content
inside is not.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional
from xml.etree import ElementTree
from xml.sax.saxutils import escape

from .errors import SchemaError

BIG_FIVE = ("Openness", "Conscientiousness", "Extraversion", "Agreeableness", "Neuroticism")
SUB_FIVE = ("IQC", "PCC", "SPS", "SCO", "STS")
ALL_TRAITS = BIG_FIVE + SUB_FIVE

SCORE_LABELS = ("No Evidence", "Low", "Low to Moderate", "Moderate", "Moderate to High", "High")
QUALITY_LABELS = ("Low", "Moderate", "High")

# Ordinal labels onto the unit grid; "No Evidence" maps to missing, not 0.
SCORE_VALUES = {
    "Low": 0.0,
    "Low to Moderate": 0.25,
    "Moderate": 0.5,
    "Moderate to High": 0.75,
    "High": 1.0,
}
QUALITY_VALUES = {"Low": 0.0, "Moderate": 0.5, "High": 1.0}

SCORE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
QUALITY_GRID = (0.0, 0.5, 1.0)

# Displayed verbatim to annotators alongside each task.
TRAIT_DEFINITIONS = {
    "Openness": (
        "Reflects intellectual curiosity, creativity, and receptiveness to new ideas "
        "and approaches—traits that may influence diagnostic flexibility and problem-solving."
    ),
    "Conscientiousness": (
        "Denotes organization, reliability, and attention to detail—qualities associated "
        "with thoroughness in care and adherence to plans."
    ),
    "Extraversion": (
        "Captures sociability, assertiveness, and enthusiasm—potentially shaping a "
        "patient's experience of engagement and interpersonal energy."
    ),
    "Agreeableness": (
        "Represents compassion, cooperativeness, and empathy—factors strongly linked to "
        "respectful, patient-centered communication."
    ),
    "Neuroticism": (
        "Indicates emotional instability and reactivity—higher levels may be perceived "
        "as anxiety or reduced confidence in clinical interactions."
    ),
    "IQC": (
        "Encompasses the physician's tone, clarity, listening, and empathy—reflecting "
        "the moment-to-moment communication style during patient encounters."
    ),
    "PCC": (
        "Reflects the patient's subjective impression of the physician's medical "
        "expertise, professionalism, and confidence in decision-making."
    ),
    "SPS": (
        "Captures whether the physician is attentive to the patient's preferences, "
        "comfort, and emotional well-being—core to the patient experience."
    ),
    "SCO": (
        "Indicates whether the physician expresses concern for recovery, treatment "
        "success, and long-term health—often cited in reviews mentioning follow-up "
        "or care continuity."
    ),
    "STS": (
        "Refers to broader reputational indicators, such as being widely recommended, "
        "trusted by families, or praised by other patients—serving as social proof "
        "of trustworthiness."
    ),
}


@dataclass(frozen=True)
class TraitFramework:
    """One of the two five-trait extraction frameworks."""

    kind: str
    trait_names: tuple[str, ...]
    envelope_tag: str

    def __post_init__(self):
        if len(self.trait_names) != 5:
            raise ValueError("framework must declare exactly 5 traits")


BIGFIVE = TraitFramework(kind="bigfive", trait_names=BIG_FIVE, envelope_tag="personality")
SUBFIVE = TraitFramework(kind="subfive", trait_names=SUB_FIVE, envelope_tag="result")

_FRAMEWORKS = {"bigfive": BIGFIVE, "subfive": SUBFIVE}


def framework(kind: str) -> TraitFramework:
    try:
        return _FRAMEWORKS[kind]
    except KeyError:
        raise ValueError(f"unknown framework {kind!r}; expected one of {sorted(_FRAMEWORKS)}")


def framework_for_trait(trait: str) -> TraitFramework:
    if trait in BIG_FIVE:
        return BIGFIVE
    if trait in SUB_FIVE:
        return SUBFIVE
    raise ValueError(f"unknown trait {trait!r}")


@dataclass(frozen=True)
class TraitAssessment:
    """One trait's parsed assessment: label score plus evidence and quality flags."""

    name: str
    score_label: str
    evidence: str
    consistency: str
    sufficiency: str


_CHILD_FIELDS = ("name", "score", "evidence", "consistency", "sufficiency")


def _extract_envelope(raw_text: str, tag: str) -> str:
    opens = [m.start() for m in re.finditer(f"<{tag}>", raw_text)]
    closes = [m.start() for m in re.finditer(f"</{tag}>", raw_text)]
    if not opens or not closes:
        raise SchemaError(
            f"no <{tag}> envelope found in response",
            code="E_NO_ENVELOPE",
            fragment=raw_text[:200],
        )
    if len(opens) > 1 or len(closes) > 1:
        raise SchemaError(
            f"expected exactly one <{tag}> envelope, found {max(len(opens), len(closes))}",
            code="E_SCHEMA",
            fragment=raw_text[:200],
        )
    start, end = opens[0], closes[0] + len(tag) + 3
    if end <= start:
        raise SchemaError(
            f"malformed <{tag}> envelope", code="E_SCHEMA", fragment=raw_text[:200]
        )
    return raw_text[start:end]


def _element_text(elem: ElementTree.Element) -> str:
    return (elem.text or "").strip()


def _parse_trait_element(elem: ElementTree.Element, fw: TraitFramework) -> TraitAssessment:
    fragment = ElementTree.tostring(elem, encoding="unicode")[:300]
    if elem.tag != "trait":
        raise SchemaError(
            f"unexpected element <{elem.tag}> inside envelope", code="E_SCHEMA", fragment=fragment
        )
    if (elem.text or "").strip():
        raise SchemaError("stray text inside <trait>", code="E_SCHEMA", fragment=fragment)

    seen: dict[str, str] = {}
    for child in elem:
        if child.tag not in _CHILD_FIELDS:
            raise SchemaError(
                f"unexpected field <{child.tag}> in trait", code="E_SCHEMA", fragment=fragment
            )
        if child.tag in seen:
            raise SchemaError(
                f"duplicate field <{child.tag}> in trait", code="E_SCHEMA", fragment=fragment
            )
        if len(child) > 0:
            raise SchemaError(
                f"field <{child.tag}> must hold text only", code="E_SCHEMA", fragment=fragment
            )
        if (child.tail or "").strip():
            raise SchemaError("stray text inside <trait>", code="E_SCHEMA", fragment=fragment)
        seen[child.tag] = _element_text(child)
    missing = [f for f in _CHILD_FIELDS if f not in seen]
    if missing:
        raise SchemaError(
            f"trait missing field(s): {', '.join(missing)}", code="E_SCHEMA", fragment=fragment
        )

    name = seen["name"]
    if name not in ALL_TRAITS:
        raise SchemaError(f"unknown trait name {name!r}", code="E_BAD_TRAIT", fragment=name)
    if name not in fw.trait_names:
        raise SchemaError(
            f"trait {name!r} does not belong to the {fw.kind} framework",
            code="E_BAD_TRAIT",
            fragment=name,
        )
    score = seen["score"]
    if score not in SCORE_LABELS:
        raise SchemaError(f"invalid score token {score!r}", code="E_ENUM", fragment=score)
    for field in ("consistency", "sufficiency"):
        if seen[field] not in QUALITY_LABELS:
            raise SchemaError(
                f"invalid {field} token {seen[field]!r}", code="E_ENUM", fragment=seen[field]
            )
    evidence = seen["evidence"]
    if score != "No Evidence" and not evidence:
        raise SchemaError(
            f"empty evidence with score {score!r}", code="E_SCHEMA", fragment=fragment
        )
    return TraitAssessment(
        name=name,
        score_label=score,
        evidence=evidence,
        consistency=seen["consistency"],
        sufficiency=seen["sufficiency"],
    )


def parse_envelope(raw_text: str, fw: TraitFramework) -> list[TraitAssessment]:
    """Parse an extraction response into exactly five validated assessments.

    Returns the assessments in the framework's declared trait order. Raises
    :class:`SchemaError` with codes E_NO_ENVELOPE, E_SCHEMA, E_COUNT, E_DUP,
    E_BAD_TRAIT, or E_ENUM; see the error messages for the offending fragment.
    """
    envelope = _extract_envelope(raw_text, fw.envelope_tag)
    try:
        root = ElementTree.fromstring(envelope)
    except ElementTree.ParseError as exc:
        raise SchemaError(
            f"envelope is not well-formed XML: {exc}", code="E_SCHEMA", fragment=envelope[:300]
        )

    if (root.text or "").strip():
        raise SchemaError(
            "stray text inside envelope", code="E_SCHEMA", fragment=(root.text or "").strip()[:100]
        )
    for child in root:
        if child.tag != "trait":
            raise SchemaError(
                f"unexpected element <{child.tag}> inside envelope",
                code="E_SCHEMA",
                fragment=child.tag,
            )
        if (child.tail or "").strip():
            raise SchemaError(
                "stray text inside envelope",
                code="E_SCHEMA",
                fragment=(child.tail or "").strip()[:100],
            )

    traits = list(root)
    if len(traits) != 5:
        raise SchemaError(
            f"expected 5 traits, found {len(traits)}", code="E_COUNT", fragment=envelope[:200]
        )

    parsed: dict[str, TraitAssessment] = {}
    for elem in traits:
        assessment = _parse_trait_element(elem, fw)
        if assessment.name in parsed:
            raise SchemaError(
                f"duplicate trait {assessment.name!r}", code="E_DUP", fragment=assessment.name
            )
        parsed[assessment.name] = assessment
    # count==5, names valid, no duplicates => every framework trait present
    return [parsed[name] for name in fw.trait_names]


def serialize_envelope(assessments: list[TraitAssessment], fw: TraitFramework) -> str:
    """Render assessments back into the canonical envelope XML."""
    lines = [f"<{fw.envelope_tag}>"]
    for a in assessments:
        lines.append("    <trait>")
        lines.append(f"        <name>{escape(a.name)}</name>")
        lines.append(f"        <score>{escape(a.score_label)}</score>")
        lines.append(f"        <consistency>{escape(a.consistency)}</consistency>")
        lines.append(f"        <sufficiency>{escape(a.sufficiency)}</sufficiency>")
        lines.append(f"        <evidence>{escape(a.evidence)}</evidence>")
        lines.append("    </trait>")
    lines.append(f"</{fw.envelope_tag}>")
    return "\n".join(lines)


def serialize_trait(assessment: TraitAssessment) -> str:
    """One trait block without the surrounding envelope (judge/annotation views)."""
    return "\n".join(
        [
            "<trait>",
            f"    <name>{escape(assessment.name)}</name>",
            f"    <score>{escape(assessment.score_label)}</score>",
            f"    <consistency>{escape(assessment.consistency)}</consistency>",
            f"    <sufficiency>{escape(assessment.sufficiency)}</sufficiency>",
            f"    <evidence>{escape(assessment.evidence)}</evidence>",
            "</trait>",
        ]
    )


def normalize_score(label: str) -> Optional[float]:
    """Ordinal score label to the {0, 0.25, 0.5, 0.75, 1} grid; No Evidence -> None."""
    if label == "No Evidence":
        return None
    try:
        return SCORE_VALUES[label]
    except KeyError:
        raise ValueError(f"invalid score label {label!r}")


def normalize_quality(label: str) -> float:
    """Consistency/sufficiency label to the {0, 0.5, 1} grid."""
    try:
        return QUALITY_VALUES[label]
    except KeyError:
        raise ValueError(f"invalid quality label {label!r}")


@dataclass(frozen=True)
class TraitScore:
    """Numeric view of one trait's assessment; None marks No Evidence."""

    score: Optional[float]
    consistency: Optional[float]
    sufficiency: Optional[float]


@dataclass(frozen=True)
class PhysicianTraitProfile:
    """Per-physician numeric scores over all ten traits.

    ``emotional_stability`` is the reverse-coded Neuroticism score
    (1 - neuroticism) and is missing whenever Neuroticism is.
    """

    physician_id: str
    traits: dict[str, TraitScore]
    emotional_stability: Optional[float]

    def score(self, trait: str) -> Optional[float]:
        return self.traits[trait].score


def assemble_profile(
    physician_id: str,
    bigfive: list[TraitAssessment],
    subfive: list[TraitAssessment],
) -> PhysicianTraitProfile:
    """Combine validated assessments from both frameworks into one numeric profile."""
    traits: dict[str, TraitScore] = {}
    for a in list(bigfive) + list(subfive):
        if a.name in traits:
            raise SchemaError(
                f"duplicate trait {a.name!r} across frameworks", code="E_DUP", fragment=a.name
            )
        traits[a.name] = TraitScore(
            score=normalize_score(a.score_label),
            consistency=normalize_quality(a.consistency),
            sufficiency=normalize_quality(a.sufficiency),
        )
    missing = [t for t in ALL_TRAITS if t not in traits]
    if missing:
        raise SchemaError(
            f"profile missing trait(s): {', '.join(missing)}",
            code="E_COUNT",
            fragment=",".join(missing),
        )
    neuroticism = traits["Neuroticism"].score
    emotional_stability = None if neuroticism is None else 1.0 - neuroticism
    return PhysicianTraitProfile(
        physician_id=physician_id, traits=traits, emotional_stability=emotional_stability
    )
