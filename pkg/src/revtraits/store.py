"""Single-file embedded store backing the whole pipeline.

One sqlite database holds physicians, reviews, extraction results, judge
verdicts, the response cache, and the human annotation workflow. Writes
are serialized behind a process-wide lock (single writer); readers may
share the handle across threads.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from pathlib import Path
from typing import Iterable, Iterator, Optional

_SCHEMA = """
CREATE TABLE IF NOT EXISTS physicians (
    physician_id   TEXT PRIMARY KEY,
    display_name   TEXT NOT NULL,
    gender         TEXT,
    specialty      TEXT,
    region         TEXT,
    overall_rating REAL
);
CREATE TABLE IF NOT EXISTS reviews (
    review_id    TEXT PRIMARY KEY,
    physician_id TEXT NOT NULL REFERENCES physicians(physician_id),
    platform     TEXT NOT NULL,
    text         TEXT NOT NULL,
    star_rating  INTEGER,
    submitted_at TEXT,
    UNIQUE (physician_id, text)
);
CREATE INDEX IF NOT EXISTS idx_reviews_physician ON reviews(physician_id);

CREATE TABLE IF NOT EXISTS response_cache (
    digest     TEXT PRIMARY KEY,
    model_id   TEXT NOT NULL,
    text       TEXT NOT NULL,
    created_at TEXT NOT NULL DEFAULT (datetime('now'))
);

CREATE TABLE IF NOT EXISTS extraction_runs (
    physician_id      TEXT NOT NULL,
    framework         TEXT NOT NULL,
    model_id          TEXT NOT NULL,
    raw_text          TEXT NOT NULL,
    attempts          INTEGER NOT NULL,
    attribution_ok    INTEGER NOT NULL,
    attribution_notes TEXT NOT NULL DEFAULT '',
    created_at        TEXT NOT NULL DEFAULT (datetime('now')),
    PRIMARY KEY (physician_id, framework, model_id)
);
CREATE TABLE IF NOT EXISTS extraction_traits (
    physician_id TEXT NOT NULL,
    framework    TEXT NOT NULL,
    model_id     TEXT NOT NULL,
    trait        TEXT NOT NULL,
    score_label  TEXT NOT NULL,
    evidence     TEXT NOT NULL,
    consistency  TEXT NOT NULL,
    sufficiency  TEXT NOT NULL,
    PRIMARY KEY (physician_id, model_id, trait)
);

CREATE TABLE IF NOT EXISTS judge_runs (
    physician_id        TEXT NOT NULL,
    trait               TEXT NOT NULL,
    judge_model         TEXT NOT NULL,
    raw_text            TEXT NOT NULL,
    initial_score       TEXT NOT NULL,
    initial_evidence    TEXT NOT NULL,
    initial_consistency TEXT NOT NULL,
    initial_sufficiency TEXT NOT NULL,
    consensus_label     TEXT NOT NULL,
    agreement           REAL NOT NULL,
    reliability         REAL NOT NULL,
    computed_agreement  REAL,
    created_at          TEXT NOT NULL DEFAULT (datetime('now')),
    PRIMARY KEY (physician_id, trait, judge_model)
);
CREATE TABLE IF NOT EXISTS judge_model_ratings (
    physician_id         TEXT NOT NULL,
    trait                TEXT NOT NULL,
    judge_model          TEXT NOT NULL,
    model_id             TEXT NOT NULL,
    evidence_quality     INTEGER NOT NULL,
    reasoning_clarity    INTEGER NOT NULL,
    trait_understanding  INTEGER NOT NULL,
    evidence_specificity INTEGER NOT NULL,
    conclusion_accuracy  INTEGER NOT NULL,
    feedback             TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (physician_id, trait, judge_model, model_id)
);

CREATE TABLE IF NOT EXISTS annotators (
    annotator_id TEXT PRIMARY KEY,
    token        TEXT NOT NULL UNIQUE,
    display_name TEXT NOT NULL DEFAULT ''
);
CREATE TABLE IF NOT EXISTS annotation_tasks (
    task_id         TEXT PRIMARY KEY,
    physician_id    TEXT NOT NULL,
    trait           TEXT NOT NULL,
    assigned_to     TEXT NOT NULL REFERENCES annotators(annotator_id),
    duplicate_group TEXT,
    calibration     INTEGER NOT NULL DEFAULT 0,
    shuffle_seed    INTEGER NOT NULL,
    status          TEXT NOT NULL DEFAULT 'step1',
    created_seq     INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS annotation_outputs (
    task_id        TEXT NOT NULL REFERENCES annotation_tasks(task_id),
    position       INTEGER NOT NULL,
    anon_label     TEXT NOT NULL,
    model_id       TEXT NOT NULL,
    assessment_xml TEXT NOT NULL,
    reasoning      TEXT NOT NULL,
    PRIMARY KEY (task_id, anon_label)
);
CREATE TABLE IF NOT EXISTS annotation_ratings (
    task_id      TEXT NOT NULL REFERENCES annotation_tasks(task_id),
    annotator_id TEXT NOT NULL,
    step         INTEGER NOT NULL,
    payload      TEXT NOT NULL,
    submitted_at TEXT NOT NULL DEFAULT (datetime('now')),
    PRIMARY KEY (task_id, step)
);
"""


class Store:
    """Handle to the embedded database. Safe for one writer and many readers."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    # -- low-level helpers -------------------------------------------------

    def write(self, sql: str, params: tuple = ()) -> sqlite3.Cursor:
        with self._lock:
            cur = self._conn.execute(sql, params)
            self._conn.commit()
            return cur

    def query(self, sql: str, params: tuple = ()) -> list[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def transaction(self):
        """Context manager serializing a multi-statement write."""
        return _Transaction(self)

    # -- physicians / reviews ----------------------------------------------

    def get_physician(self, physician_id: str) -> Optional[sqlite3.Row]:
        rows = self.query("SELECT * FROM physicians WHERE physician_id = ?", (physician_id,))
        return rows[0] if rows else None

    def upsert_physician(self, physician_id: str, display_name: str, gender, specialty,
                         region, overall_rating) -> Optional[list[str]]:
        """Insert or merge metadata. Returns conflicting field names, or None.

        Missing incoming values never overwrite; present values fill gaps;
        a present value contradicting a stored one is a conflict.
        """
        with self._lock:
            existing = self.get_physician(physician_id)
            if existing is None:
                self._conn.execute(
                    "INSERT INTO physicians VALUES (?,?,?,?,?,?)",
                    (physician_id, display_name, gender, specialty, region, overall_rating),
                )
                self._conn.commit()
                return None
            incoming = {
                "display_name": display_name,
                "gender": gender,
                "specialty": specialty,
                "region": region,
                "overall_rating": overall_rating,
            }
            conflicts = []
            updates = {}
            for field, value in incoming.items():
                if value is None:
                    continue
                stored = existing[field]
                if stored is None:
                    updates[field] = value
                elif stored != value:
                    conflicts.append(field)
            if conflicts:
                return conflicts
            if updates:
                sets = ", ".join(f"{f} = ?" for f in updates)
                self._conn.execute(
                    f"UPDATE physicians SET {sets} WHERE physician_id = ?",
                    (*updates.values(), physician_id),
                )
                self._conn.commit()
            return None

    def add_review(self, review_id: str, physician_id: str, platform: str, text: str,
                   star_rating, submitted_at) -> bool:
        """Insert one review; returns False when deduplicated away."""
        with self._lock:
            cur = self._conn.execute(
                "INSERT OR IGNORE INTO reviews VALUES (?,?,?,?,?,?)",
                (review_id, physician_id, platform, text, star_rating, submitted_at),
            )
            self._conn.commit()
            return cur.rowcount == 1

    def review_exists(self, review_id: str) -> Optional[sqlite3.Row]:
        rows = self.query("SELECT * FROM reviews WHERE review_id = ?", (review_id,))
        return rows[0] if rows else None

    def counts(self) -> tuple[int, int]:
        n_phys = self.query("SELECT COUNT(*) AS n FROM physicians")[0]["n"]
        n_rev = self.query("SELECT COUNT(*) AS n FROM reviews")[0]["n"]
        return n_phys, n_rev

    def review_counts(self) -> dict[str, int]:
        rows = self.query(
            "SELECT p.physician_id AS pid, COUNT(r.review_id) AS n "
            "FROM physicians p LEFT JOIN reviews r ON r.physician_id = p.physician_id "
            "GROUP BY p.physician_id"
        )
        return {row["pid"]: row["n"] for row in rows}

    def iter_physician_ids(self) -> list[str]:
        return [r["physician_id"] for r in
                self.query("SELECT physician_id FROM physicians ORDER BY physician_id")]

    def reviews_for(self, physician_id: str) -> list[sqlite3.Row]:
        return self.query(
            "SELECT * FROM reviews WHERE physician_id = ? ORDER BY review_id",
            (physician_id,),
        )

    # -- response cache -----------------------------------------------------

    def cache_get(self, digest: str) -> Optional[str]:
        rows = self.query("SELECT text FROM response_cache WHERE digest = ?", (digest,))
        return rows[0]["text"] if rows else None

    def cache_put(self, digest: str, model_id: str, text: str) -> None:
        self.write(
            "INSERT OR IGNORE INTO response_cache (digest, model_id, text) VALUES (?,?,?)",
            (digest, model_id, text),
        )

    # -- extraction results ---------------------------------------------------

    def save_extraction(self, physician_id: str, framework: str, model_id: str,
                        raw_text: str, attempts: int, attribution_ok: bool,
                        attribution_notes: str, assessments: Iterable) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO extraction_runs VALUES (?,?,?,?,?,?,?,datetime('now'))",
                (physician_id, framework, model_id, raw_text, attempts,
                 int(attribution_ok), attribution_notes),
            )
            for a in assessments:
                self._conn.execute(
                    "INSERT OR REPLACE INTO extraction_traits VALUES (?,?,?,?,?,?,?,?)",
                    (physician_id, framework, model_id, a.name, a.score_label,
                     a.evidence, a.consistency, a.sufficiency),
                )
            self._conn.commit()

    def has_extraction(self, physician_id: str, framework: str, model_id: str) -> bool:
        rows = self.query(
            "SELECT 1 FROM extraction_runs WHERE physician_id=? AND framework=? AND model_id=?",
            (physician_id, framework, model_id),
        )
        return bool(rows)

    def extraction_trait(self, physician_id: str, model_id: str, trait: str) -> Optional[sqlite3.Row]:
        rows = self.query(
            "SELECT * FROM extraction_traits WHERE physician_id=? AND model_id=? AND trait=?",
            (physician_id, model_id, trait),
        )
        return rows[0] if rows else None

    def extraction_traits_for(self, physician_id: str, framework: str, model_id: str) -> list[sqlite3.Row]:
        return self.query(
            "SELECT * FROM extraction_traits WHERE physician_id=? AND framework=? AND model_id=? "
            "ORDER BY trait",
            (physician_id, framework, model_id),
        )

    def extraction_models(self) -> list[str]:
        return [r["model_id"] for r in
                self.query("SELECT DISTINCT model_id FROM extraction_runs ORDER BY model_id")]

    def extracted_physicians(self, model_id: str, framework: str) -> list[str]:
        return [r["physician_id"] for r in self.query(
            "SELECT DISTINCT physician_id FROM extraction_runs "
            "WHERE model_id=? AND framework=? ORDER BY physician_id",
            (model_id, framework),
        )]

    # -- judge verdicts ---------------------------------------------------------

    def save_verdict(self, physician_id: str, trait: str, judge_model: str, raw_text: str,
                     initial, consensus_label: str, agreement: float, reliability: float,
                     computed_agreement: Optional[float], per_model: dict) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO judge_runs VALUES (?,?,?,?,?,?,?,?,?,?,?,?,datetime('now'))",
                (physician_id, trait, judge_model, raw_text, initial.score_label,
                 initial.evidence, initial.consistency, initial.sufficiency,
                 consensus_label, agreement, reliability, computed_agreement),
            )
            for model_id, evaluation in per_model.items():
                d = evaluation.dimensions
                self._conn.execute(
                    "INSERT OR REPLACE INTO judge_model_ratings VALUES (?,?,?,?,?,?,?,?,?,?)",
                    (physician_id, trait, judge_model, model_id,
                     d.evidence_quality, d.reasoning_clarity, d.trait_understanding,
                     d.evidence_specificity, d.conclusion_accuracy, evaluation.feedback),
                )
            self._conn.commit()

    def judge_runs(self, judge_model: str) -> list[sqlite3.Row]:
        return self.query(
            "SELECT * FROM judge_runs WHERE judge_model = ? ORDER BY physician_id, trait",
            (judge_model,),
        )

    def judge_models(self) -> list[str]:
        return [r["judge_model"] for r in
                self.query("SELECT DISTINCT judge_model FROM judge_runs ORDER BY judge_model")]

    def judge_rating(self, physician_id: str, trait: str, judge_model: str,
                     model_id: str) -> Optional[sqlite3.Row]:
        rows = self.query(
            "SELECT * FROM judge_model_ratings "
            "WHERE physician_id=? AND trait=? AND judge_model=? AND model_id=?",
            (physician_id, trait, judge_model, model_id),
        )
        return rows[0] if rows else None

    # -- annotation -----------------------------------------------------------

    def add_annotator(self, annotator_id: str, token: str, display_name: str = "") -> None:
        self.write(
            "INSERT INTO annotators VALUES (?,?,?)", (annotator_id, token, display_name)
        )

    def annotator_by_token(self, token: str) -> Optional[sqlite3.Row]:
        rows = self.query("SELECT * FROM annotators WHERE token = ?", (token,))
        return rows[0] if rows else None

    def annotator_ids(self) -> list[str]:
        return [r["annotator_id"] for r in
                self.query("SELECT annotator_id FROM annotators ORDER BY annotator_id")]

    def next_task_seq(self) -> int:
        rows = self.query("SELECT COALESCE(MAX(created_seq), 0) AS m FROM annotation_tasks")
        return rows[0]["m"] + 1

    def insert_task(self, task_id: str, physician_id: str, trait: str, assigned_to: str,
                    duplicate_group: Optional[str], calibration: bool, shuffle_seed: int,
                    created_seq: int, outputs: list[tuple[str, str, str, str]]) -> None:
        """outputs: (anon_label, model_id, assessment_xml, reasoning) in display order."""
        with self._lock:
            self._conn.execute(
                "INSERT INTO annotation_tasks VALUES (?,?,?,?,?,?,?,'step1',?)",
                (task_id, physician_id, trait, assigned_to, duplicate_group,
                 int(calibration), shuffle_seed, created_seq),
            )
            for pos, (label, model_id, xml, reasoning) in enumerate(outputs):
                self._conn.execute(
                    "INSERT INTO annotation_outputs VALUES (?,?,?,?,?,?)",
                    (task_id, pos, label, model_id, xml, reasoning),
                )
            self._conn.commit()

    def get_task(self, task_id: str) -> Optional[sqlite3.Row]:
        rows = self.query("SELECT * FROM annotation_tasks WHERE task_id = ?", (task_id,))
        return rows[0] if rows else None

    def next_open_task(self, annotator_id: str) -> Optional[sqlite3.Row]:
        rows = self.query(
            "SELECT * FROM annotation_tasks WHERE assigned_to = ? AND status != 'complete' "
            "ORDER BY created_seq LIMIT 1",
            (annotator_id,),
        )
        return rows[0] if rows else None

    def task_outputs(self, task_id: str) -> list[sqlite3.Row]:
        return self.query(
            "SELECT * FROM annotation_outputs WHERE task_id = ? ORDER BY position", (task_id,)
        )

    def advance_task(self, task_id: str, from_status: str, to_status: str) -> bool:
        """Atomic check-and-set on task status."""
        with self._lock:
            cur = self._conn.execute(
                "UPDATE annotation_tasks SET status = ? WHERE task_id = ? AND status = ?",
                (to_status, task_id, from_status),
            )
            self._conn.commit()
            return cur.rowcount == 1

    def save_rating(self, task_id: str, annotator_id: str, step: int, payload: dict) -> None:
        self.write(
            "INSERT INTO annotation_ratings (task_id, annotator_id, step, payload) VALUES (?,?,?,?)",
            (task_id, annotator_id, step, json.dumps(payload)),
        )

    def rating(self, task_id: str, step: int) -> Optional[dict]:
        rows = self.query(
            "SELECT payload FROM annotation_ratings WHERE task_id = ? AND step = ?",
            (task_id, step),
        )
        return json.loads(rows[0]["payload"]) if rows else None

    def task_progress(self, annotator_id: str) -> tuple[int, int]:
        rows = self.query(
            "SELECT COUNT(*) AS total, "
            "SUM(CASE WHEN status = 'complete' THEN 1 ELSE 0 END) AS done "
            "FROM annotation_tasks WHERE assigned_to = ?",
            (annotator_id,),
        )
        total = rows[0]["total"] or 0
        done = rows[0]["done"] or 0
        return done, total

    def duplicate_groups(self) -> dict[str, list[str]]:
        """duplicate_group -> task_ids, excluding calibration tasks."""
        groups: dict[str, list[str]] = {}
        for row in self.query(
            "SELECT duplicate_group, task_id FROM annotation_tasks "
            "WHERE duplicate_group IS NOT NULL AND calibration = 0 ORDER BY task_id"
        ):
            groups.setdefault(row["duplicate_group"], []).append(row["task_id"])
        return groups

    def completed_tasks(self) -> list[sqlite3.Row]:
        return self.query(
            "SELECT * FROM annotation_tasks WHERE status = 'complete' AND calibration = 0 "
            "ORDER BY created_seq"
        )


class _Transaction:
    def __init__(self, store: Store):
        self._store = store

    def __enter__(self):
        self._store._lock.acquire()
        return self._store._conn

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self._store._conn.commit()
            else:
                self._store._conn.rollback()
        finally:
            self._store._lock.release()
        return False
