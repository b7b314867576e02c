"""Prompt templates for the two extraction agents.

Both agents share the same two-message structure: a fixed system message
carrying the analytical instructions, and a user message naming the
physician and carrying the concatenated review document. The template
bytes are load-bearing (cache keys and golden tests hash them), so edit
with care; several example lines intentionally end with a trailing space.
"""

from __future__ import annotations

import re

from .errors import TemplateError
from .schema import TraitFramework

# The example blocks wrap mid-sentence with a trailing space before each
# break; explicit \n escapes keep those bytes safe from whitespace trimming.
_BIGFIVE_EXAMPLE = (
    "<personality>\n"
    "    <trait>\n"
    "        <name>Openness</name>\n"
    "        <score>Moderate</score>\n"
    "        <consistency>High</consistency>\n"
    "        <sufficiency>High</sufficiency>\n"
    "        <evidence>[CHANGE THIS TO YOUR REASONING. EXAMPLE: While Dr. Smith \n"
    '        reviews patient histories thoroughly ("asked a lot of questions"), \n'
    '        she reacts rigidly when patients propose ideas ("offended when I \n'
    '        requested a blood test"), suggesting moderate openness with limited \n'
    "        flexibility.]</evidence>\n"
    "    </trait>\n"
    "    ...\n"
    "</personality>"
)

_SUBFIVE_EXAMPLE = (
    "<result>\n"
    "    <trait>\n"
    "        <name>IQC</name>\n"
    "        <score>Moderate to High</score>\n"
    "        <consistency>High</consistency>\n"
    "        <sufficiency>Moderate</sufficiency>\n"
    '        <evidence>"She was very kind and explained everything step by step." \n'
    "        Several reviews emphasize clear communication and warmth during \n"
    "        the visit.</evidence>\n"
    "    </trait>\n"
    "    ...\n"
    "</result>"
)

BIGFIVE_SYSTEM = """You are an expert psychologist.

Based on the provided patient reviews, analyze the Big Five personality traits for the focused physician:
- Openness
- Conscientiousness
- Extraversion
- Agreeableness
- Neuroticism

Output Instructions:
- Keep in mind that the reviews are about a physician, not a patient.
- If the reviews contain no evidence for a trait, output "No Evidence" for the score.
- When finding evidence for a trait, make sure the evidence is related to the physician, not others.
- Output strictly in XML format.
- For each trait, you must generate:
    - <name>: Must be one of [Openness, Conscientiousness, Extraversion, Agreeableness, Neuroticism].
    - <score>: Must be selected from [No Evidence, Low, Low to Moderate, Moderate, Moderate to High, High]. If no evidence is found, output "No Evidence". If any evidence is found, output the score that best describes the evidence.
    - <evidence>: Write 2-3 sentences that combine reasoning with direct quotes or paraphrased examples from the reviews.
    - <consistency>: Must be selected from [Low, Moderate, High]. High consistency means the trait is consistently mentioned across multiple reviews.
    - <sufficiency>: Must be selected from [Low, Moderate, High]. High sufficiency means the trait is supported by sufficient evidence from the reviews.

Formatting:
- Output must be strictly within <personality>...</personality> tags.
- Use the following structure exactly for each trait:

Example:
@EXAMPLE@

Strictly follow this format and do not include any extra text outside the XML block."""
BIGFIVE_SYSTEM = BIGFIVE_SYSTEM.replace("@EXAMPLE@", _BIGFIVE_EXAMPLE)

SUBFIVE_SYSTEM = """You are an expert analyst evaluating patient perceptions of physicians based on their online reviews.

Your task is to analyze the physician along five key subjective dimensions that commonly shape patient decision-making. Use the abbreviations below in the XML <name> tags, but rely on the full trait definitions and examples to guide your judgment.

Trait Definitions:

1. IQC - Interpersonal Qualities & Communication
This trait reflects how the doctor interacts with patients during the visit — including tone, empathy, clarity, listening, and respectful communication. It focuses on the doctor's behavioral style in the moment.
- High IQC: "She explained everything clearly and made me feel comfortable."
- Low IQC: "He was cold, barely spoke, and didn't seem to listen."

2. PCC - Perceived Clinical Competence
This refers to the patient's subjective impression of the doctor's medical skill, judgment, and professionalism. It reflects whether the doctor comes across as knowledgeable, accurate, and effective.
- High PCC: "She diagnosed me quickly and clearly explained the options."
- Low PCC: "He misdiagnosed me and seemed unsure."

3. SPS - Sensitivity to Patient Satisfaction
This trait measures whether the doctor appears to care about how the patient feels - whether they're respected, satisfied, and emotionally supported. It captures efforts to accommodate patient preferences or emotions.
- High SPS: "He asked me if I was comfortable with the plan and if I had any concerns."
- Low SPS: "She ignored my discomfort and didn't ask how I felt."

How it differs from IQC:
- IQC is about how the doctor communicates or behaves (e.g., warm, respectful, clear).
- SPS is about whether the doctor is motivated to ensure patient comfort and satisfaction.

4. SCO - Sensitivity to Clinical Outcomes
This trait reflects whether the doctor seems to care about the patient's recovery, treatment success, or long-term health outcome. It includes follow-up contact or comments showing concern for the result.
- High SCO: "She called a few days later to check on how I was doing."
- Low SCO: "After the visit, I never heard from him again."

How it differs from PCC:
- PCC is about how capable or knowledgeable the doctor appears.
- SCO is about how much the doctor cares about the result of treatment over time.

5. STS - Social Trust Signals
This dimension captures references to the doctor's broader reputation - whether other patients trust them, recommend them, or speak highly of them. It includes social proof or repeated use by families.
- High STS: "My whole family goes to her, and she's always amazing."
- Low STS: No mention of trust or general recommendation by others.

Output Instructions:
- Use only the review information to evaluate each trait.
- If no evidence exists for a trait, mark it as "No Evidence".
- Output must be strictly in XML format, using the following structure for each trait:

For each trait, include:
- <name>: One of [IQC, PCC, SPS, SCO, STS]
- <score>: One of [No Evidence, Low, Low to Moderate, Moderate, Moderate to High, High]
- <evidence>: 2-3 sentences combining reasoning with quotes or paraphrased patient language.
- <consistency>: [Low, Moderate, High] — How consistently the trait appears across multiple reviews.
- <sufficiency>: [Low, Moderate, High] — Whether enough evidence is present to justify the score.

Example:
@EXAMPLE@

Do not include any extra text outside the XML block."""
SUBFIVE_SYSTEM = SUBFIVE_SYSTEM.replace("@EXAMPLE@", _SUBFIVE_EXAMPLE)

HUMAN_TEMPLATE = (
    "The Physician to focus is: {physician_name}\n"
    "\n"
    "The review related to the physician is: \n"
    "\n"
    "{document}"
)

_SYSTEM_TEMPLATES = {"bigfive": BIGFIVE_SYSTEM, "subfive": SUBFIVE_SYSTEM}

_KNOWN_PLACEHOLDERS = {"physician_name", "document"}


def render_user_message(physician_name: str, document: str, template: str = HUMAN_TEMPLATE) -> str:
    """Substitute the two placeholders; any other {token} in the template is an error."""
    unknown = set(re.findall(r"\{([a-z_]+)\}", template)) - _KNOWN_PLACEHOLDERS
    if unknown:
        raise TemplateError(f"unsubstituted placeholder(s): {', '.join(sorted(unknown))}")
    return template.replace("{physician_name}", physician_name).replace("{document}", document)


def build_prompt(fw: TraitFramework, physician_name: str, document: str) -> tuple[str, str]:
    """(system_message, user_message) for one extraction call."""
    if not document:
        raise TemplateError("profile document is empty")
    system = _SYSTEM_TEMPLATES[fw.kind]
    return system, render_user_message(physician_name, document)


def attempt_marker(user_message: str, attempt_number: int) -> str:
    """Progressive attempt numbering; attempt 1 is the unmarked base prompt."""
    if attempt_number <= 1:
        return user_message
    return f"{user_message}\n\n[Attempt {attempt_number}]"
