"""Trait extraction over the gateway: prompting, parsing, retry, attribution.

Each task sends the framework's two-message prompt for one physician and
expects the strict five-trait envelope back. Parse or validation failures
retry with an incremented attempt number, which both changes the cache key
and appends a visible attempt marker to the user message. The attribution
check is advisory: a failure is recorded on the result, never fatal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .corpus import ProfileDocument
from .errors import ExtractionFailedError, SchemaError
from .gateway import ChatGateway, ChatRequest
from .prompts import attempt_marker, build_prompt
from .schema import TraitAssessment, TraitFramework, parse_envelope


@dataclass(frozen=True)
class ExtractionTask:
    physician_id: str
    framework: TraitFramework
    profile: ProfileDocument
    model_id: str
    attempt_limit: int = 3
    temperature: float = 0.0

    def __post_init__(self):
        if self.attempt_limit < 1:
            raise ValueError("attempt_limit must be >= 1")


@dataclass
class AttributionCheck:
    ok: bool
    notes: list[str] = field(default_factory=list)


@dataclass
class ExtractionResult:
    physician_id: str
    framework: TraitFramework
    model_id: str
    assessments: list[TraitAssessment]
    raw_text: str
    attempts: int
    attribution: AttributionCheck


_DOCTOR_NAME = re.compile(r"\bDr\.?\s+([A-Z][A-Za-z'\-]+)")


def validate_attribution(profile: ProfileDocument, assessments: list[TraitAssessment]) -> AttributionCheck:
    """Flag evidence that names a physician other than the profile's.

    Heuristic containment check: every "Dr. <Name>" token in the evidence
    must either match the profile surname or appear somewhere in the review
    body (patients often mention other doctors). Evidence without name
    tokens passes vacuously.
    """
    surname = profile.physician_name.split()[-1].lower() if profile.physician_name.split() else ""
    body_lower = profile.body.lower()
    notes: list[str] = []
    for a in assessments:
        for match in _DOCTOR_NAME.finditer(a.evidence):
            token = match.group(1)
            if token.lower() == surname:
                continue
            if token.lower() in body_lower:
                continue
            notes.append(
                f"{a.name}: evidence names 'Dr. {token}' but profile is for "
                f"{profile.physician_name!r} and the name is absent from the reviews"
            )
    return AttributionCheck(ok=not notes, notes=notes)


def extract(task: ExtractionTask, gateway: ChatGateway) -> ExtractionResult:
    """Run one extraction task, retrying parse failures up to the attempt limit."""
    system, base_user = build_prompt(task.framework, task.profile.physician_name,
                                     task.profile.body)
    last_error: Optional[SchemaError] = None
    for attempt in range(1, task.attempt_limit + 1):
        request = ChatRequest(
            model_id=task.model_id,
            system_message=system,
            user_message=attempt_marker(base_user, attempt),
            temperature=task.temperature,
            attempt_number=attempt,
        )
        response = gateway.send(request)
        try:
            assessments = parse_envelope(response.text, task.framework)
        except SchemaError as exc:
            last_error = exc
            continue
        return ExtractionResult(
            physician_id=task.physician_id,
            framework=task.framework,
            model_id=task.model_id,
            assessments=assessments,
            raw_text=response.text,
            attempts=attempt,
            attribution=validate_attribution(task.profile, assessments),
        )
    raise ExtractionFailedError(
        f"extraction failed for physician {task.physician_id!r} "
        f"({task.framework.kind}, {task.model_id}) after {task.attempt_limit} attempts: "
        f"{last_error}",
        attempts=task.attempt_limit,
        last_error=last_error,
    )
