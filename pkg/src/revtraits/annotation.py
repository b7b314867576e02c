"""Human-as-a-judge annotation service.

HTTP+JSON workflow mirroring the LLM judge protocol: annotators first
record an independent assessment of the trait (step 1, with model outputs
hidden), then rate each anonymized output on the five quality dimensions
(step 2), then issue a consensus verdict (step 3). Model identities exist
only in the server-side blinding table; no response ever carries one.
"""

from __future__ import annotations

import math
import random
import secrets
from dataclasses import dataclass
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import corpus, metrics
from .errors import ArgumentError, MetricError, RevtraitsError
from .judge import DIMENSIONS, ModelEvaluation, QualityDimensions, anon_labels, composite_score
from .schema import (
    ALL_TRAITS,
    QUALITY_LABELS,
    SCORE_LABELS,
    TRAIT_DEFINITIONS,
    TraitAssessment,
    serialize_trait,
)
from .store import Store

API_VERSION = 1


class ServiceError(RevtraitsError):
    def __init__(self, message: str, *, code: str, status: int):
        super().__init__(message, code=code)
        self.status = status


def _error(code: str, message: str, status: int) -> ServiceError:
    return ServiceError(message, code=code, status=status)


# ---------------------------------------------------------------------------
# batch creation
# ---------------------------------------------------------------------------

@dataclass
class BatchResult:
    task_ids: list[str]
    duplicate_groups: int


def issue_token(store: Store, annotator_id: str, display_name: str = "") -> str:
    token = secrets.token_urlsafe(24)
    store.add_annotator(annotator_id, token, display_name)
    return token


def create_batch(store: Store, physician_ids: list[str], traits: list[str],
                 models: list[str], overlap_fraction: float, seed: int = 0,
                 calibration: bool = False) -> BatchResult:
    """Create blinded annotation tasks for every (physician, trait) pair.

    ``overlap_fraction`` of the tasks (floor rule) are duplicated to a
    second annotator for inter-rater reliability. Presentation order of the
    model outputs is randomized per task with a recorded seed.
    """
    if not physician_ids or not traits or not models:
        raise ArgumentError("physician_ids, traits, and models must be non-empty")
    if not 0.0 <= overlap_fraction <= 1.0:
        raise ArgumentError("overlap_fraction must be in [0, 1]")
    unknown = [t for t in traits if t not in ALL_TRAITS]
    if unknown:
        raise ArgumentError(f"unknown trait(s): {', '.join(unknown)}")
    annotators = store.annotator_ids()
    if not annotators:
        raise ArgumentError("no annotators registered")

    gaps = [
        (pid, trait, model)
        for pid in physician_ids
        for trait in traits
        for model in models
        if store.extraction_trait(pid, model, trait) is None
    ]
    if gaps:
        listing = "; ".join(f"{p}/{t}/{m}" for p, t, m in gaps[:20])
        raise _error(
            "E_INCOMPLETE",
            f"missing extraction outputs for {len(gaps)} (physician, trait, model) "
            f"combination(s): {listing}",
            status=409,
        )

    pairs = [(pid, trait) for pid in physician_ids for trait in traits]
    n_dup = math.floor(overlap_fraction * len(pairs))
    if n_dup > 0 and len(annotators) < 2:
        raise ArgumentError("overlap requires at least 2 annotators")

    rng = random.Random(seed)
    dup_indices = set(rng.sample(range(len(pairs)), n_dup)) if n_dup else set()

    task_ids: list[str] = []
    groups = 0
    seq = store.next_task_seq()
    for index, (pid, trait) in enumerate(pairs):
        primary = annotators[index % len(annotators)]
        group_id = None
        if index in dup_indices:
            groups += 1
            group_id = f"dg-{seq:06d}"
        for copy in range(2 if group_id else 1):
            annotator = primary if copy == 0 else annotators[
                (index + 1) % len(annotators)
            ]
            shuffle_seed = rng.getrandbits(31)
            order = list(models)
            random.Random(shuffle_seed).shuffle(order)
            labels = anon_labels(len(order))
            outputs = []
            for label, model in zip(labels, order):
                row = store.extraction_trait(pid, model, trait)
                assessment = TraitAssessment(
                    name=row["trait"], score_label=row["score_label"],
                    evidence=row["evidence"], consistency=row["consistency"],
                    sufficiency=row["sufficiency"],
                )
                outputs.append((label, model, serialize_trait(assessment), row["evidence"]))
            task_id = f"t{seq:06d}"
            store.insert_task(task_id, pid, trait, annotator, group_id,
                              calibration, shuffle_seed, seq, outputs)
            task_ids.append(task_id)
            seq += 1
    return BatchResult(task_ids=task_ids, duplicate_groups=groups)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _step2_composites(store: Store, task_id: str) -> Optional[dict[str, float]]:
    """model_id -> composite rubric score from the task's step-2 payload."""
    payload = store.rating(task_id, 2)
    if payload is None:
        return None
    label_to_model = {
        row["anon_label"]: row["model_id"] for row in store.task_outputs(task_id)
    }
    out = {}
    for label, rating in payload["ratings"].items():
        dims = QualityDimensions(**{d: rating[d] for d in DIMENSIONS})
        out[label_to_model[label]] = composite_score(dims)
    return out


def _step2_dimensions(store: Store, task_id: str) -> Optional[dict[str, dict[str, int]]]:
    payload = store.rating(task_id, 2)
    if payload is None:
        return None
    label_to_model = {
        row["anon_label"]: row["model_id"] for row in store.task_outputs(task_id)
    }
    return {
        label_to_model[label]: {d: rating[d] for d in DIMENSIONS}
        for label, rating in payload["ratings"].items()
    }


def interrater_report(store: Store) -> dict:
    """Per-trait reliability across duplicate-group annotator pairs."""
    groups = store.duplicate_groups()
    complete_pairs = []
    for group_id, task_ids in groups.items():
        tasks = [store.get_task(t) for t in task_ids]
        done = [t for t in tasks if t is not None and t["status"] == "complete"]
        if len(done) >= 2:
            complete_pairs.append((group_id, done[0], done[1]))
    if not complete_pairs:
        raise _error("E_EMPTY", "no duplicate groups with 2 completed ratings", status=404)

    by_trait: dict[str, dict] = {}
    for group_id, task_a, task_b in complete_pairs:
        trait = task_a["trait"]
        bucket = by_trait.setdefault(
            trait, {"x": [], "y": [], "labels_a": [], "labels_b": [], "groups": 0}
        )
        comp_a = _step2_composites(store, task_a["task_id"])
        comp_b = _step2_composites(store, task_b["task_id"])
        for model in sorted(set(comp_a) & set(comp_b)):
            bucket["x"].append(comp_a[model])
            bucket["y"].append(comp_b[model])
        bucket["labels_a"].append(store.rating(task_a["task_id"], 3)["consensus_label"])
        bucket["labels_b"].append(store.rating(task_b["task_id"], 3)["consensus_label"])
        bucket["groups"] += 1

    rows = []
    for trait in sorted(by_trait):
        bucket = by_trait[trait]
        try:
            r = metrics.pearson(bucket["x"], bucket["y"])
        except MetricError:
            r = None
        try:
            kappa = metrics.cohens_kappa(bucket["labels_a"], bucket["labels_b"])
        except MetricError:
            kappa = None
        rows.append({
            "trait": trait,
            "pearson_composite": r,
            "kappa_consensus": kappa,
            "n_pairs": len(bucket["x"]),
            "n_groups": bucket["groups"],
        })
    return {"v": API_VERSION, "traits": rows}


def human_vs_llm_report(store: Store, judge_model: Optional[str] = None) -> dict:
    """Correlation of human step-2 ratings against the LLM judge's ratings."""
    judges = store.judge_models()
    if judge_model is None:
        if len(judges) != 1:
            raise _error(
                "E_EMPTY",
                f"specify judge_model; store has {len(judges)} judge(s)",
                status=404 if not judges else 400,
            )
        judge_model = judges[0]

    per_trait: dict[str, dict[str, list[float]]] = {}
    per_dim: dict[str, dict[str, list[float]]] = {d: {"x": [], "y": []} for d in DIMENSIONS}
    for task in store.completed_tasks():
        human_dims = _step2_dimensions(store, task["task_id"])
        if human_dims is None:
            continue
        for model_id, dims in human_dims.items():
            judge_row = store.judge_rating(
                task["physician_id"], task["trait"], judge_model, model_id
            )
            if judge_row is None:
                continue
            human_comp = composite_score(QualityDimensions(**dims))
            judge_comp = composite_score(
                QualityDimensions(**{d: judge_row[d] for d in DIMENSIONS})
            )
            bucket = per_trait.setdefault(task["trait"], {"x": [], "y": []})
            bucket["x"].append(human_comp)
            bucket["y"].append(judge_comp)
            for d in DIMENSIONS:
                per_dim[d]["x"].append(float(dims[d]))
                per_dim[d]["y"].append(float(judge_row[d]))

    if not per_trait:
        raise _error("E_EMPTY", "no overlapping human and judge ratings", status=404)

    def _r(bucket):
        try:
            return metrics.pearson(bucket["x"], bucket["y"])
        except MetricError:
            return None

    return {
        "v": API_VERSION,
        "traits": [
            {"trait": trait, "r": _r(bucket), "n": len(bucket["x"])}
            for trait, bucket in sorted(per_trait.items())
        ],
        "dimensions": [
            {"dimension": d, "r": _r(per_dim[d]), "n": len(per_dim[d]["x"])}
            for d in DIMENSIONS
        ],
    }


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

class Step1Payload(BaseModel):
    v: int = API_VERSION
    score_label: str
    evidence: str = ""
    consistency: str
    sufficiency: str


class Step2Rating(BaseModel):
    evidence_quality: int
    reasoning_clarity: int
    trait_understanding: int
    evidence_specificity: int
    conclusion_accuracy: int
    feedback: str = ""


class Step2Payload(BaseModel):
    v: int = API_VERSION
    ratings: dict[str, Step2Rating]


class Step3Payload(BaseModel):
    v: int = API_VERSION
    consensus_label: str
    agreement: float
    reliability: float


class BatchPayload(BaseModel):
    v: int = API_VERSION
    physician_ids: list[str]
    traits: list[str]
    models: list[str]
    overlap_fraction: float = 0.0
    seed: int = 0
    calibration: bool = False


_STEP_ORDER = {"step1": 1, "step2": 2, "step3": 3, "complete": 4}


def create_app(store: Store, admin_token: str,
               ui_dist: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="revtraits annotation service")

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"v": API_VERSION, "error": {"code": exc.code, "message": str(exc)}},
        )

    @app.exception_handler(RevtraitsError)
    async def _package_error(request: Request, exc: RevtraitsError):
        return JSONResponse(
            status_code=400,
            content={"v": API_VERSION, "error": {"code": exc.code, "message": str(exc)}},
        )

    def annotator_auth(authorization: Optional[str] = Header(None)):
        if not authorization or not authorization.startswith("Bearer "):
            raise _error("E_AUTH", "missing bearer token", status=401)
        row = store.annotator_by_token(authorization.removeprefix("Bearer "))
        if row is None:
            raise _error("E_AUTH", "unknown token", status=401)
        return row

    def admin_auth(authorization: Optional[str] = Header(None)):
        if authorization != f"Bearer {admin_token}":
            raise _error("E_AUTH", "admin token required", status=403)

    def _task_view(task) -> dict:
        step = _STEP_ORDER[task["status"]]
        physician = store.get_physician(task["physician_id"])
        record = corpus.load_record(store, task["physician_id"])
        profile = corpus.build_profile(record)
        view = {
            "v": API_VERSION,
            "task_id": task["task_id"],
            "step": step,
            "trait": task["trait"],
            "trait_definition": TRAIT_DEFINITIONS[task["trait"]],
            "physician_name": physician["display_name"],
            "profile": profile.body,
            "calibration": bool(task["calibration"]),
        }
        if step >= 2:
            # model outputs stay hidden until the independent step-1 judgment lands
            view["outputs"] = [
                {
                    "label": row["anon_label"],
                    "assessment_xml": row["assessment_xml"],
                    "reasoning": row["reasoning"],
                }
                for row in store.task_outputs(task["task_id"])
            ]
            view["rubric_weights"] = {
                "evidence_quality": 0.25, "reasoning_clarity": 0.20,
                "trait_understanding": 0.20, "evidence_specificity": 0.15,
                "conclusion_accuracy": 0.20,
            }
        if step >= 3:
            view["own_step1"] = store.rating(task["task_id"], 1)
            view["own_step2"] = store.rating(task["task_id"], 2)
        return view

    @app.post("/api/sessions")
    def open_session(annotator=Depends(annotator_auth)):
        done, total = store.task_progress(annotator["annotator_id"])
        return {
            "v": API_VERSION,
            "annotator_id": annotator["annotator_id"],
            "display_name": annotator["display_name"],
            "progress": {"done": done, "total": total},
        }

    @app.get("/api/tasks/next")
    def next_task(annotator=Depends(annotator_auth)):
        task = store.next_open_task(annotator["annotator_id"])
        if task is None:
            raise _error("E_DONE", "no open tasks", status=404)
        return _task_view(task)

    def _load_task_for_step(task_id: str, step: int, annotator) -> dict:
        task = store.get_task(task_id)
        if task is None or task["assigned_to"] != annotator["annotator_id"]:
            raise _error("E_NOT_FOUND", f"no task {task_id!r} assigned to you", status=404)
        current = _STEP_ORDER[task["status"]]
        if current == step:
            return task
        if current > step:
            raise _error("E_CONFLICT", f"step {step} already submitted", status=409)
        raise _error("E_ORDER", f"task is awaiting step {current}, not step {step}",
                     status=409)

    @app.post("/api/tasks/{task_id}/step1")
    def submit_step1(task_id: str, payload: Step1Payload, annotator=Depends(annotator_auth)):
        _load_task_for_step(task_id, 1, annotator)
        if payload.score_label not in SCORE_LABELS:
            raise _error("E_ENUM", f"invalid score_label {payload.score_label!r}", status=400)
        if payload.consistency not in QUALITY_LABELS:
            raise _error("E_ENUM", f"invalid consistency {payload.consistency!r}", status=400)
        if payload.sufficiency not in QUALITY_LABELS:
            raise _error("E_ENUM", f"invalid sufficiency {payload.sufficiency!r}", status=400)
        if payload.score_label != "No Evidence" and not payload.evidence.strip():
            raise _error("E_RANGE", "evidence required unless score is No Evidence",
                         status=400)
        store.save_rating(task_id, annotator["annotator_id"], 1, payload.model_dump())
        store.advance_task(task_id, "step1", "step2")
        return {"v": API_VERSION, "task_id": task_id, "accepted_step": 1, "next_step": 2}

    @app.post("/api/tasks/{task_id}/step2")
    def submit_step2(task_id: str, payload: Step2Payload, annotator=Depends(annotator_auth)):
        _load_task_for_step(task_id, 2, annotator)
        expected = {row["anon_label"] for row in store.task_outputs(task_id)}
        got = set(payload.ratings)
        if got != expected:
            raise _error(
                "E_SCHEMA",
                f"ratings must cover exactly the labels {sorted(expected)}",
                status=400,
            )
        for label, rating in payload.ratings.items():
            for d in DIMENSIONS:
                value = getattr(rating, d)
                if not 0 <= value <= 10:
                    raise _error(
                        "E_RANGE", f"{label} {d} value {value} outside [0, 10]", status=400
                    )
        store.save_rating(task_id, annotator["annotator_id"], 2, payload.model_dump())
        store.advance_task(task_id, "step2", "step3")
        return {"v": API_VERSION, "task_id": task_id, "accepted_step": 2, "next_step": 3}

    @app.post("/api/tasks/{task_id}/step3")
    def submit_step3(task_id: str, payload: Step3Payload, annotator=Depends(annotator_auth)):
        _load_task_for_step(task_id, 3, annotator)
        if payload.consensus_label not in SCORE_LABELS:
            raise _error("E_ENUM", f"invalid consensus_label {payload.consensus_label!r}",
                         status=400)
        for name, value in (("agreement", payload.agreement),
                            ("reliability", payload.reliability)):
            if not 0.0 <= value <= 1.0:
                raise _error("E_RANGE", f"{name} value {value} outside [0, 1]", status=400)
        store.save_rating(task_id, annotator["annotator_id"], 3, payload.model_dump())
        store.advance_task(task_id, "step3", "complete")
        done, total = store.task_progress(annotator["annotator_id"])
        return {
            "v": API_VERSION, "task_id": task_id, "accepted_step": 3,
            "task_complete": True, "progress": {"done": done, "total": total},
        }

    @app.get("/api/progress")
    def progress(annotator=Depends(annotator_auth)):
        done, total = store.task_progress(annotator["annotator_id"])
        return {"v": API_VERSION, "done": done, "total": total}

    @app.post("/api/batches", dependencies=[Depends(admin_auth)])
    def post_batch(payload: BatchPayload):
        result = create_batch(
            store, payload.physician_ids, payload.traits, payload.models,
            payload.overlap_fraction, seed=payload.seed, calibration=payload.calibration,
        )
        return {
            "v": API_VERSION,
            "created": len(result.task_ids),
            "task_ids": result.task_ids,
            "duplicate_groups": result.duplicate_groups,
        }

    @app.get("/api/reports/interrater", dependencies=[Depends(admin_auth)])
    def get_interrater():
        return interrater_report(store)

    @app.get("/api/reports/human-vs-llm", dependencies=[Depends(admin_auth)])
    def get_human_vs_llm(judge_model: Optional[str] = None):
        return human_vs_llm_report(store, judge_model)

    if ui_dist:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
