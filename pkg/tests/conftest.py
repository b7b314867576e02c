"""Shared fixtures: in-memory stores, fixture corpora, scripted responses.

The scripted-response helpers mirror exactly the requests the pipeline
builds (same prompts, same attempt numbering), compute their digests, and
drop canned response files into a directory the ScriptedProvider reads.
Canned content is seeded per (physician, trait, model) so every run of the
suite sees identical bytes.
"""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from revtraits import corpus, judge, prompts, reports
from revtraits.gateway import ChatRequest, cache_key
from revtraits.schema import (
    ALL_TRAITS,
    QUALITY_LABELS,
    SCORE_LABELS,
    TraitAssessment,
    framework,
    serialize_envelope,
    serialize_trait,
)
from revtraits.store import Store

FIXTURE_CORPUS = Path(__file__).parent / "data" / "fixture_corpus.jsonl"

EXTRACTION_MODELS = ("scripted:alpha", "scripted:beta")
JUDGE_MODEL = "scripted:judge"

_EVIDENCE_SCORES = tuple(label for label in SCORE_LABELS if label != "No Evidence")


@pytest.fixture
def store(tmp_path) -> Store:
    return Store(tmp_path / "store.db")


@pytest.fixture
def ingested_store(store) -> Store:
    with open(FIXTURE_CORPUS, "r", encoding="utf-8") as fh:
        result = corpus.ingest(store, fh)
    assert not result.errors
    return store


def canned_assessment(pid: str, trait: str, model: str) -> TraitAssessment:
    """Deterministic synthetic assessment for scripted fixtures."""
    rng = random.Random(f"{pid}|{trait}|{model}")
    # occasional No Evidence keeps the missing-score path exercised
    if rng.random() < 0.1:
        return TraitAssessment(
            name=trait, score_label="No Evidence", evidence="",
            consistency="Low", sufficiency="Low",
        )
    return TraitAssessment(
        name=trait,
        score_label=rng.choice(_EVIDENCE_SCORES),
        evidence=f"Reviews of {pid} repeatedly mention behavior relevant to {trait}.",
        consistency=rng.choice(QUALITY_LABELS),
        sufficiency=rng.choice(QUALITY_LABELS),
    )


def canned_envelope(pid: str, kind: str, model: str) -> str:
    fw = framework(kind)
    assessments = [canned_assessment(pid, trait, model) for trait in fw.trait_names]
    return serialize_envelope(assessments, fw)


def canned_verdict(pid: str, trait: str, labels: list[str]) -> str:
    rng = random.Random(f"verdict|{pid}|{trait}")
    initial = canned_assessment(pid, trait, "judge-initial")
    lines = ["<judgment>", "    <initial>"]
    lines.append("        " + serialize_trait(initial).replace("\n", "\n        "))
    lines.append("    </initial>")
    lines.append("    <evaluations>")
    for label in labels:
        lines.append("        <model>")
        lines.append(f"            <label>{label}</label>")
        for dim in judge.DIMENSIONS:
            lines.append(f"            <{dim}>{rng.randint(3, 10)}</{dim}>")
        lines.append(f"            <feedback>Assessment quality notes for {label}.</feedback>")
        lines.append("        </model>")
    lines.append("    </evaluations>")
    lines.append("    <consensus>")
    lines.append(f"        <score>{rng.choice(_EVIDENCE_SCORES)}</score>")
    lines.append(f"        <agreement>{rng.randint(0, 100) / 100:.2f}</agreement>")
    lines.append(f"        <reliability>{rng.randint(0, 100) / 100:.2f}</reliability>")
    lines.append("    </consensus>")
    lines.append("</judgment>")
    return "\n".join(lines)


def write_extraction_fixtures(fixture_dir: Path, store: Store,
                              models=EXTRACTION_MODELS) -> None:
    """Scripted responses for every (physician, framework, model) extraction."""
    fixture_dir.mkdir(parents=True, exist_ok=True)
    for pid in store.iter_physician_ids():
        record = corpus.load_record(store, pid)
        if not record.reviews:
            continue
        profile = corpus.build_profile(record)
        for kind in ("bigfive", "subfive"):
            fw = framework(kind)
            system, user = prompts.build_prompt(fw, profile.physician_name, profile.body)
            for model in models:
                request = ChatRequest(
                    model_id=model, system_message=system, user_message=user,
                    temperature=0.0, attempt_number=1,
                )
                text = canned_envelope(pid, kind, model)
                (fixture_dir / f"{cache_key(request)}.txt").write_text(
                    text, encoding="utf-8"
                )


def write_judge_fixtures(fixture_dir: Path, store: Store, seed: int = 0,
                         models=EXTRACTION_MODELS, judge_model=JUDGE_MODEL) -> None:
    """Scripted judge responses matching run_judging's prompts and blinding order.

    Model outputs are reconstructed from the deterministic canned assessments,
    so the store only needs the corpus (extractions may or may not be present).
    """
    fixture_dir.mkdir(parents=True, exist_ok=True)
    for pid in store.iter_physician_ids():
        record = corpus.load_record(store, pid)
        if not record.reviews:
            continue
        profile = corpus.build_profile(record)
        for trait in ALL_TRAITS:
            outputs = {m: canned_assessment(pid, trait, m) for m in models}
            order = list(models)
            random.Random(f"{seed}:{pid}:{trait}").shuffle(order)
            blinded = [serialize_trait(outputs[m]) for m in order]
            system, user = judge.build_judge_prompt(
                profile.physician_name, profile.body, trait, blinded
            )
            request = ChatRequest(
                model_id=judge_model, system_message=system, user_message=user,
                temperature=0.0, attempt_number=1,
            )
            labels = judge.anon_labels(len(order))
            text = canned_verdict(pid, trait, labels)
            (fixture_dir / f"{cache_key(request)}.txt").write_text(text, encoding="utf-8")


@pytest.fixture
def extracted_store(ingested_store, tmp_path) -> Store:
    """Store with extractions for both models persisted via the real pipeline."""
    from revtraits.gateway import ChatGateway, make_provider, scripted_config

    fixtures = tmp_path / "fixtures"
    write_extraction_fixtures(fixtures, ingested_store)
    pids = sorted(corpus.filter_eligible(ingested_store))
    for model in EXTRACTION_MODELS:
        config = scripted_config(fixtures)
        gateway = ChatGateway(make_provider(config), config, cache=ingested_store)
        reports.run_extraction(ingested_store, gateway, model,
                               ["bigfive", "subfive"], pids)
    return ingested_store
