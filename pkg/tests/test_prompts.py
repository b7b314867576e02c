"""Prompt fidelity: golden-file byte equality and placeholder handling."""

from pathlib import Path

import pytest

from revtraits import prompts
from revtraits.errors import TemplateError
from revtraits.schema import BIGFIVE, SUBFIVE

GOLDEN = Path(__file__).parent / "data" / "golden"


def _golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


class TestSystemTemplates:
    def test_bigfive_system_golden(self):
        system, _ = prompts.build_prompt(BIGFIVE, "Dr. A", "B")
        assert system == _golden("bigfive_system.txt")

    def test_subfive_system_golden(self):
        system, _ = prompts.build_prompt(SUBFIVE, "Dr. A", "B")
        assert system == _golden("subfive_system.txt")

    def test_bigfive_opener(self):
        assert prompts.BIGFIVE_SYSTEM.startswith("You are an expert psychologist.")

    def test_subfive_opener(self):
        assert prompts.SUBFIVE_SYSTEM.startswith(
            "You are an expert analyst evaluating patient perceptions"
        )

    def test_subfive_contains_all_trait_definitions(self):
        for heading in (
            "1. IQC - Interpersonal Qualities & Communication",
            "2. PCC - Perceived Clinical Competence",
            "3. SPS - Sensitivity to Patient Satisfaction",
            "4. SCO - Sensitivity to Clinical Outcomes",
            "5. STS - Social Trust Signals",
        ):
            assert heading in prompts.SUBFIVE_SYSTEM

    def test_envelope_tags_in_instructions(self):
        assert "<personality>...</personality>" in prompts.BIGFIVE_SYSTEM
        assert "<result>" in prompts.SUBFIVE_SYSTEM

    def test_example_blocks_preserve_wrap_spacing(self):
        # the example blocks wrap mid-sentence with a trailing space
        assert "While Dr. Smith \n" in prompts.BIGFIVE_SYSTEM
        assert 'step by step." \n' in prompts.SUBFIVE_SYSTEM


class TestUserMessage:
    def test_exact_two_message_shape(self):
        _, user = prompts.build_prompt(BIGFIVE, "Dr. A", "B")
        assert user == "The Physician to focus is: Dr. A\n\nThe review related to the physician is: \n\nB"

    def test_user_message_golden(self):
        body = _golden("profile_six_reviews.txt")
        _, user = prompts.build_prompt(BIGFIVE, "Maria Alvarez", body)
        assert user == _golden("user_message_six_reviews.txt")

    def test_same_user_template_both_frameworks(self):
        _, user_b5 = prompts.build_prompt(BIGFIVE, "Dr. X", "doc")
        _, user_s5 = prompts.build_prompt(SUBFIVE, "Dr. X", "doc")
        assert user_b5 == user_s5

    def test_deterministic(self):
        assert prompts.build_prompt(BIGFIVE, "Dr. A", "B") == \
            prompts.build_prompt(BIGFIVE, "Dr. A", "B")

    def test_empty_document_rejected(self):
        with pytest.raises(TemplateError):
            prompts.build_prompt(BIGFIVE, "Dr. A", "")

    def test_unknown_placeholder_rejected(self):
        with pytest.raises(TemplateError):
            prompts.render_user_message(
                "A", "B", template="Focus: {physician_name} from {clinic}"
            )


class TestAttemptMarker:
    def test_first_attempt_unmarked(self):
        assert prompts.attempt_marker("base", 1) == "base"

    def test_later_attempts_marked(self):
        assert prompts.attempt_marker("base", 2) == "base\n\n[Attempt 2]"
        assert prompts.attempt_marker("base", 3) == "base\n\n[Attempt 3]"
