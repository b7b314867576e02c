"""Annotation service: auth, blinding, staged reveal, step order, reports."""

import json

import pytest
from fastapi.testclient import TestClient

from revtraits import annotation, metrics, reports
from revtraits.annotation import create_app, create_batch, issue_token
from revtraits.errors import ArgumentError
from revtraits.judge import DIMENSIONS, QualityDimensions, composite_score
from revtraits.schema import ALL_TRAITS

from conftest import EXTRACTION_MODELS, JUDGE_MODEL, write_judge_fixtures

ADMIN = "admin-secret-token"


@pytest.fixture
def service(extracted_store):
    store = extracted_store
    tokens = {
        "ann-1": issue_token(store, "ann-1", "Annotator One"),
        "ann-2": issue_token(store, "ann-2", "Annotator Two"),
    }
    app = create_app(store, ADMIN)
    client = TestClient(app, raise_server_exceptions=False)
    return store, client, tokens


def auth(token):
    return {"Authorization": f"Bearer {token}"}


def step1_payload(score="Moderate"):
    return {"v": 1, "score_label": score, "evidence": "Own reading of the reviews.",
            "consistency": "High", "sufficiency": "Moderate"}


def step2_payload(labels, value=7):
    return {"v": 1, "ratings": {
        label: {**{d: value for d in DIMENSIONS}, "feedback": f"notes for {label}"}
        for label in labels
    }}


def step3_payload():
    return {"v": 1, "consensus_label": "Moderate", "agreement": 0.8,
            "reliability": 0.9}


def make_batch(store, pids, traits, overlap=0.0, seed=0):
    return create_batch(store, pids, traits, list(EXTRACTION_MODELS),
                        overlap_fraction=overlap, seed=seed)


def complete_task(client, token, score="Moderate", value=7):
    task = client.get("/api/tasks/next", headers=auth(token)).json()
    tid = task["task_id"]
    r = client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                    json=step1_payload(score))
    assert r.status_code == 200, r.text
    revealed = client.get("/api/tasks/next", headers=auth(token)).json()
    labels = [o["label"] for o in revealed["outputs"]]
    r = client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                    json=step2_payload(labels, value))
    assert r.status_code == 200, r.text
    r = client.post(f"/api/tasks/{tid}/step3", headers=auth(token),
                    json=step3_payload())
    assert r.status_code == 200, r.text
    return tid


class TestAuthAndSessions:
    def test_session_requires_token(self, service):
        _, client, _ = service
        assert client.post("/api/sessions").status_code == 401

    def test_session_returns_identity(self, service):
        store, client, tokens = service
        r = client.post("/api/sessions", headers=auth(tokens["ann-1"]))
        assert r.status_code == 200
        body = r.json()
        assert body["v"] == 1
        assert body["annotator_id"] == "ann-1"

    def test_admin_endpoints_reject_annotator_tokens(self, service):
        _, client, tokens = service
        r = client.get("/api/reports/interrater", headers=auth(tokens["ann-1"]))
        assert r.status_code == 403


class TestBatchCreation:
    def test_no_overlap_no_duplicates(self, service):
        store, _, _ = service
        result = make_batch(store, ["p001", "p002"], ["Openness"], overlap=0.0)
        assert result.duplicate_groups == 0
        assert len(result.task_ids) == 2

    def test_full_overlap_duplicates_everything(self, service):
        store, _, _ = service
        result = make_batch(store, ["p001", "p002"], ["Openness"], overlap=1.0)
        assert result.duplicate_groups == 2
        assert len(result.task_ids) == 4

    def test_floor_rule(self, service):
        store, _, _ = service
        # 10 primary tasks at overlap 0.2 -> exactly 2 duplicate groups
        result = make_batch(store, [f"p{i:03d}" for i in range(1, 6)],
                            ["Openness", "IQC"], overlap=0.2)
        assert result.duplicate_groups == 2
        assert len(result.task_ids) == 12

    def test_missing_extraction_listed(self, service):
        store, client, _ = service
        r = client.post("/api/batches", headers=auth(ADMIN), json={
            "v": 1, "physician_ids": ["p001", "nope"], "traits": ["Openness"],
            "models": list(EXTRACTION_MODELS), "overlap_fraction": 0.0,
        })
        assert r.status_code == 409
        body = r.json()
        assert body["error"]["code"] == "E_INCOMPLETE"
        assert "nope" in body["error"]["message"]

    def test_overlap_needs_two_annotators(self, tmp_path, extracted_store):
        store = extracted_store
        issue_token(store, "solo", "Solo")
        # wipe the fixture annotators registered by the service fixture if any
        with pytest.raises(ArgumentError):
            create_batch(store, ["p001", "p002", "p003"], ["Openness"],
                         list(EXTRACTION_MODELS), overlap_fraction=0.5,
                         seed=0)

    def test_duplicates_assigned_to_distinct_annotators(self, service):
        store, _, _ = service
        make_batch(store, ["p001", "p002", "p003"], ["PCC"], overlap=1.0)
        for group, task_ids in store.duplicate_groups().items():
            owners = {store.get_task(t)["assigned_to"] for t in task_ids}
            assert len(owners) == 2

    def test_http_batch_response_has_no_model_ids(self, service):
        store, client, _ = service
        r = client.post("/api/batches", headers=auth(ADMIN), json={
            "v": 1, "physician_ids": ["p001"], "traits": ["Openness"],
            "models": list(EXTRACTION_MODELS), "overlap_fraction": 0.0,
        })
        assert r.status_code == 200
        for model in EXTRACTION_MODELS:
            assert model not in r.text


class TestTaskFlowAndBlinding:
    def test_step1_view_hides_outputs(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        task = client.get("/api/tasks/next", headers=auth(tokens["ann-1"])).json()
        assert task["step"] == 1
        assert "outputs" not in task
        assert task["trait"] == "Openness"
        assert task["trait_definition"].startswith("Reflects intellectual curiosity")
        for model in EXTRACTION_MODELS:
            assert model not in json.dumps(task)

    def test_outputs_revealed_after_step1_with_anon_labels(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        token = tokens["ann-1"]
        task = client.get("/api/tasks/next", headers=auth(token)).json()
        client.post(f"/api/tasks/{task['task_id']}/step1", headers=auth(token),
                    json=step1_payload())
        revealed = client.get("/api/tasks/next", headers=auth(token)).json()
        assert revealed["task_id"] == task["task_id"]
        assert revealed["step"] == 2
        labels = [o["label"] for o in revealed["outputs"]]
        assert labels == ["Model A", "Model B"]
        for model in EXTRACTION_MODELS:
            assert model not in json.dumps(revealed)

    def test_next_task_stable_without_submission(self, service):
        store, client, tokens = service
        make_batch(store, ["p001", "p002"], ["IQC"])
        token = tokens["ann-1"]
        first = client.get("/api/tasks/next", headers=auth(token)).json()
        second = client.get("/api/tasks/next", headers=auth(token)).json()
        assert first["task_id"] == second["task_id"]

    def test_disjoint_assignments_without_overlap(self, service):
        store, client, tokens = service
        make_batch(store, ["p001", "p002", "p003", "p004"], ["SPS"])
        t1 = client.get("/api/tasks/next", headers=auth(tokens["ann-1"])).json()
        t2 = client.get("/api/tasks/next", headers=auth(tokens["ann-2"])).json()
        assert t1["task_id"] != t2["task_id"]

    def test_e_done_when_no_tasks(self, service):
        _, client, tokens = service
        r = client.get("/api/tasks/next", headers=auth(tokens["ann-1"]))
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "E_DONE"

    def test_full_flow_completes(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        tid = complete_task(client, tokens["ann-1"])
        assert store.get_task(tid)["status"] == "complete"
        progress = client.get("/api/progress", headers=auth(tokens["ann-1"])).json()
        assert progress == {"v": 1, "done": 1, "total": 1}


class TestStepOrderEnforcement:
    def _fresh_task(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        token = tokens["ann-1"]
        task = client.get("/api/tasks/next", headers=auth(token)).json()
        return client, token, task["task_id"]

    def test_step2_before_step1(self, service):
        client, token, tid = self._fresh_task(service)
        r = client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                        json=step2_payload(["Model A", "Model B"]))
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "E_ORDER"

    def test_step3_before_step2(self, service):
        client, token, tid = self._fresh_task(service)
        client.post(f"/api/tasks/{tid}/step1", headers=auth(token), json=step1_payload())
        r = client.post(f"/api/tasks/{tid}/step3", headers=auth(token),
                        json=step3_payload())
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "E_ORDER"

    def test_resubmission_conflicts(self, service):
        client, token, tid = self._fresh_task(service)
        client.post(f"/api/tasks/{tid}/step1", headers=auth(token), json=step1_payload())
        r = client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                        json=step1_payload())
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "E_CONFLICT"

    def test_completed_task_immutable(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        tid = complete_task(client, tokens["ann-1"])
        r = client.post(f"/api/tasks/{tid}/step3", headers=auth(tokens["ann-1"]),
                        json=step3_payload())
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "E_CONFLICT"

    def test_dimension_eleven_rejected(self, service):
        client, token, tid = self._fresh_task(service)
        client.post(f"/api/tasks/{tid}/step1", headers=auth(token), json=step1_payload())
        payload = step2_payload(["Model A", "Model B"])
        payload["ratings"]["Model A"]["evidence_quality"] = 11
        r = client.post(f"/api/tasks/{tid}/step2", headers=auth(token), json=payload)
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "E_RANGE"

    def test_agreement_out_of_bounds(self, service):
        client, token, tid = self._fresh_task(service)
        client.post(f"/api/tasks/{tid}/step1", headers=auth(token), json=step1_payload())
        labels = ["Model A", "Model B"]
        client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                    json=step2_payload(labels))
        bad = step3_payload()
        bad["agreement"] = 1.4
        r = client.post(f"/api/tasks/{tid}/step3", headers=auth(token), json=bad)
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "E_RANGE"

    def test_bad_enum_rejected(self, service):
        client, token, tid = self._fresh_task(service)
        r = client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                        json=step1_payload(score="Medium"))
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "E_ENUM"

    def test_step2_must_cover_all_labels(self, service):
        client, token, tid = self._fresh_task(service)
        client.post(f"/api/tasks/{tid}/step1", headers=auth(token), json=step1_payload())
        r = client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                        json=step2_payload(["Model A"]))
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "E_SCHEMA"

    def test_wrong_annotator_cannot_submit(self, service):
        store, client, tokens = service
        make_batch(store, ["p001"], ["Openness"])
        task = client.get("/api/tasks/next", headers=auth(tokens["ann-1"])).json()
        r = client.post(f"/api/tasks/{task['task_id']}/step1",
                        headers=auth(tokens["ann-2"]), json=step1_payload())
        assert r.status_code == 404


class TestInterraterReport:
    def test_identical_duplicate_ratings_perfect_agreement(self, service):
        store, client, tokens = service
        make_batch(store, ["p001", "p002", "p003"], ["Openness"], overlap=1.0)
        # both annotators rate identically, but with variance across tasks
        scores = {"p001": 4, "p002": 7, "p003": 9}
        consensus = {"p001": "Low", "p002": "Moderate", "p003": "High"}
        for token in (tokens["ann-1"], tokens["ann-2"]):
            for _ in range(3):
                task = client.get("/api/tasks/next", headers=auth(token)).json()
                tid = task["task_id"]
                pid = store.get_task(tid)["physician_id"]
                client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                            json=step1_payload())
                revealed = client.get("/api/tasks/next", headers=auth(token)).json()
                labels = [o["label"] for o in revealed["outputs"]]
                client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                            json=step2_payload(labels, value=scores[pid]))
                payload = step3_payload()
                payload["consensus_label"] = consensus[pid]
                client.post(f"/api/tasks/{tid}/step3", headers=auth(token), json=payload)
        report = client.get("/api/reports/interrater", headers=auth(ADMIN)).json()
        row = report["traits"][0]
        assert row["trait"] == "Openness"
        assert row["pearson_composite"] == pytest.approx(1.0)
        assert row["kappa_consensus"] == pytest.approx(1.0)
        assert row["n_groups"] == 3

    def test_report_equals_metrics_oracle(self, service):
        store, client, tokens = service
        make_batch(store, ["p001", "p002", "p003", "p004"], ["PCC"], overlap=1.0)
        # deterministic but different ratings per annotator
        per_annotator = {"ann-1": [3, 5, 7, 9], "ann-2": [4, 5, 6, 9]}
        consensus = {"ann-1": ["Low", "Moderate", "High", "High"],
                     "ann-2": ["Low", "Moderate", "Moderate", "High"]}
        for ann, token in tokens.items():
            for i in range(4):
                task = client.get("/api/tasks/next", headers=auth(token)).json()
                tid = task["task_id"]
                client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                            json=step1_payload())
                revealed = client.get("/api/tasks/next", headers=auth(token)).json()
                labels = [o["label"] for o in revealed["outputs"]]
                client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                            json=step2_payload(labels, value=per_annotator[ann][i]))
                payload = step3_payload()
                payload["consensus_label"] = consensus[ann][i]
                client.post(f"/api/tasks/{tid}/step3", headers=auth(token), json=payload)

        report = client.get("/api/reports/interrater", headers=auth(ADMIN)).json()
        row = report["traits"][0]

        # oracle: reconstruct pairs from the store and use metrics directly
        xs, ys, la, lb = [], [], [], []
        for group, task_ids in store.duplicate_groups().items():
            a, b = [store.get_task(t) for t in task_ids]
            comp = {}
            for task in (a, b):
                label_to_model = {
                    r["anon_label"]: r["model_id"]
                    for r in store.task_outputs(task["task_id"])
                }
                ratings = store.rating(task["task_id"], 2)["ratings"]
                comp[task["task_id"]] = {
                    label_to_model[lab]: composite_score(QualityDimensions(
                        **{d: ratings[lab][d] for d in DIMENSIONS}))
                    for lab in ratings
                }
            for model in sorted(comp[a["task_id"]]):
                xs.append(comp[a["task_id"]][model])
                ys.append(comp[b["task_id"]][model])
            la.append(store.rating(a["task_id"], 3)["consensus_label"])
            lb.append(store.rating(b["task_id"], 3)["consensus_label"])
        assert row["pearson_composite"] == pytest.approx(metrics.pearson(xs, ys), abs=1e-12)
        assert row["kappa_consensus"] == pytest.approx(metrics.cohens_kappa(la, lb), abs=1e-12)
        assert row["n_pairs"] == len(xs)

    def test_empty_report_is_e_empty(self, service):
        _, client, _ = service
        r = client.get("/api/reports/interrater", headers=auth(ADMIN))
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "E_EMPTY"

    def test_calibration_tasks_excluded(self, service):
        store, client, tokens = service
        create_batch(store, ["p001", "p002"], ["Openness"],
                     list(EXTRACTION_MODELS), overlap_fraction=1.0,
                     seed=3, calibration=True)
        scores = {"p001": 3, "p002": 8}
        for token in tokens.values():
            for _ in range(2):
                task = client.get("/api/tasks/next", headers=auth(token)).json()
                tid = task["task_id"]
                assert task["calibration"] is True
                pid = store.get_task(tid)["physician_id"]
                client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                            json=step1_payload())
                revealed = client.get("/api/tasks/next", headers=auth(token)).json()
                labels = [o["label"] for o in revealed["outputs"]]
                client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                            json=step2_payload(labels, value=scores[pid]))
                client.post(f"/api/tasks/{tid}/step3", headers=auth(token),
                            json=step3_payload())
        # all completed ratings are calibration tasks: reports stay empty
        r = client.get("/api/reports/interrater", headers=auth(ADMIN))
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "E_EMPTY"


class TestHumanVsLlmReport:
    @pytest.fixture
    def judged_service(self, service, tmp_path):
        store, client, tokens = service
        from revtraits import corpus
        from revtraits.gateway import ChatGateway, make_provider, scripted_config

        fixtures = tmp_path / "judge_fixtures"
        write_judge_fixtures(fixtures, store, seed=0)
        config = scripted_config(fixtures)
        gateway = ChatGateway(make_provider(config), config, cache=store)
        pids = sorted(corpus.filter_eligible(store))[:3]
        reports.run_judging(store, gateway, JUDGE_MODEL,
                            list(EXTRACTION_MODELS), pids, seed=0)
        return store, client, tokens, pids

    def test_copied_ratings_give_r_one(self, judged_service):
        store, client, tokens, pids = judged_service
        make_batch(store, pids, ["Openness", "IQC"])
        token_of = {"ann-1": tokens["ann-1"], "ann-2": tokens["ann-2"]}
        # each annotator copies the judge's stored dimension ratings exactly
        for ann, token in token_of.items():
            while True:
                r = client.get("/api/tasks/next", headers=auth(token))
                if r.status_code == 404:
                    break
                task = r.json()
                tid = task["task_id"]
                row = store.get_task(tid)
                client.post(f"/api/tasks/{tid}/step1", headers=auth(token),
                            json=step1_payload())
                revealed = client.get("/api/tasks/next", headers=auth(token)).json()
                label_to_model = {
                    o["anon_label"]: o["model_id"]
                    for o in store.task_outputs(tid)
                }
                ratings = {}
                for output in revealed["outputs"]:
                    model = label_to_model[output["label"]]
                    judge_row = store.judge_rating(
                        row["physician_id"], row["trait"], JUDGE_MODEL, model)
                    ratings[output["label"]] = {
                        **{d: judge_row[d] for d in DIMENSIONS},
                        "feedback": "copied",
                    }
                client.post(f"/api/tasks/{tid}/step2", headers=auth(token),
                            json={"v": 1, "ratings": ratings})
                client.post(f"/api/tasks/{tid}/step3", headers=auth(token),
                            json=step3_payload())
        report = client.get("/api/reports/human-vs-llm", headers=auth(ADMIN)).json()
        for row in report["traits"]:
            assert row["r"] == pytest.approx(1.0)
        total_pairs = sum(row["n"] for row in report["traits"])
        assert total_pairs == 3 * 2 * 2  # 3 physicians x 2 traits x 2 models

    def test_no_overlap_is_e_empty(self, service):
        _, client, _ = service
        r = client.get("/api/reports/human-vs-llm", headers=auth(ADMIN))
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "E_EMPTY"
