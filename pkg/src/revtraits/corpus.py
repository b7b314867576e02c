"""Review corpus ingestion, eligibility filtering, and profile documents.

Input is JSONL, one object per line carrying a physician's metadata and a
single review; repeated lines for the same physician merge reviews. Reviews
are deduplicated on (physician_id, exact review text). Profile documents
concatenate a physician's reviews into one deterministic text body, the
unit of trait extraction.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .errors import ArgumentError, IngestError, MetadataConflictError
from .store import Store

PLATFORMS = ("healthgrades", "vitals", "ratemds", "yelp", "other")
GENDERS = ("male", "female", "unknown")


@dataclass(frozen=True)
class Review:
    review_id: str
    physician_id: str
    platform: str
    text: str
    star_rating: Optional[int] = None
    submitted_at: Optional[str] = None

    def __post_init__(self):
        if not self.review_id:
            raise ValueError("review_id must be non-empty")
        if not self.text.strip():
            raise ValueError("review text must be non-empty")
        if self.platform not in PLATFORMS:
            raise ValueError(f"unknown platform {self.platform!r}")
        if self.star_rating is not None and not 1 <= self.star_rating <= 5:
            raise ValueError(f"star_rating {self.star_rating} outside [1, 5]")


@dataclass
class PhysicianRecord:
    physician_id: str
    display_name: str
    gender: Optional[str] = None
    specialty: Optional[str] = None
    region: Optional[str] = None
    overall_rating: Optional[float] = None
    reviews: list[Review] = field(default_factory=list)

    def __post_init__(self):
        if self.gender is not None and self.gender not in GENDERS:
            raise ValueError(f"unknown gender {self.gender!r}")
        for review in self.reviews:
            if review.physician_id != self.physician_id:
                raise ValueError("review physician_id does not match record")


@dataclass(frozen=True)
class ProfileDocument:
    physician_id: str
    physician_name: str
    review_count: int
    body: str


@dataclass
class IngestResult:
    physicians: int
    reviews: int
    errors: list[IngestError] = field(default_factory=list)


def _parse_line(line: str, line_no: int) -> tuple[dict, Optional[dict]]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(f"line {line_no}: invalid JSON: {exc}", line_no=line_no)
    if not isinstance(obj, dict):
        raise IngestError(f"line {line_no}: expected a JSON object", line_no=line_no)
    physician_id = obj.get("physician_id")
    name = obj.get("name")
    if not physician_id or not isinstance(physician_id, str):
        raise IngestError(f"line {line_no}: missing physician_id", line_no=line_no)
    if not name or not isinstance(name, str):
        raise IngestError(f"line {line_no}: missing name", line_no=line_no)
    gender = obj.get("gender")
    if gender is not None and gender not in GENDERS:
        raise IngestError(f"line {line_no}: unknown gender {gender!r}", line_no=line_no)
    review = obj.get("review")
    if review is not None and not isinstance(review, dict):
        raise IngestError(f"line {line_no}: review must be an object", line_no=line_no)
    meta = {
        "physician_id": physician_id,
        "display_name": name,
        "gender": gender,
        "specialty": obj.get("specialty"),
        "region": obj.get("region"),
        "overall_rating": obj.get("overall_rating"),
    }
    rating = meta["overall_rating"]
    if rating is not None and not (isinstance(rating, (int, float)) and 1 <= rating <= 5):
        raise IngestError(f"line {line_no}: overall_rating outside [1, 5]", line_no=line_no)
    return meta, review


def _validate_review(review: dict, physician_id: str, line_no: int) -> Review:
    try:
        return Review(
            review_id=str(review.get("review_id") or ""),
            physician_id=physician_id,
            platform=review.get("platform") or "other",
            text=review.get("text") or "",
            star_rating=review.get("star_rating"),
            submitted_at=review.get("submitted_at"),
        )
    except (ValueError, TypeError) as exc:
        raise IngestError(f"line {line_no}: bad review: {exc}", line_no=line_no)


def ingest(store: Store, lines: Iterable[str]) -> IngestResult:
    """Stream JSONL lines into the store.

    Malformed lines and metadata conflicts are collected as per-line errors
    and ingestion continues; duplicate (physician_id, text) reviews collapse
    silently (first occurrence wins).
    """
    new_reviews = 0
    errors: list[IngestError] = []
    seen_physicians_before = {pid for pid in store.iter_physician_ids()}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            meta, review_obj = _parse_line(line, line_no)
        except IngestError as exc:
            errors.append(exc)
            continue
        pid = meta["physician_id"]
        conflicts = store.upsert_physician(
            pid, meta["display_name"], meta["gender"], meta["specialty"],
            meta["region"], meta["overall_rating"],
        )
        if conflicts:
            errors.append(MetadataConflictError(
                f"line {line_no}: physician {pid!r} metadata conflicts on: "
                f"{', '.join(conflicts)}",
                line_no=line_no,
                fields=conflicts,
            ))
            continue
        if review_obj is None:
            continue
        try:
            review = _validate_review(review_obj, pid, line_no)
        except IngestError as exc:
            errors.append(exc)
            continue
        existing = store.review_exists(review.review_id)
        if existing is not None:
            if existing["physician_id"] != pid or existing["text"] != review.text:
                errors.append(IngestError(
                    f"line {line_no}: review_id {review.review_id!r} already stored "
                    "with different content",
                    line_no=line_no,
                ))
            continue
        if store.add_review(review.review_id, pid, review.platform, review.text,
                            review.star_rating, review.submitted_at):
            new_reviews += 1
    n_phys, _ = store.counts()
    new_physicians = n_phys - len(seen_physicians_before)
    return IngestResult(physicians=new_physicians, reviews=new_reviews, errors=errors)


def filter_eligible(store: Store, min_reviews: int = 5, max_reviews: int = 100) -> set[str]:
    """Physicians whose review count lies in [min_reviews, max_reviews], inclusive."""
    if min_reviews > max_reviews:
        raise ArgumentError(
            f"min_reviews ({min_reviews}) exceeds max_reviews ({max_reviews})"
        )
    return {
        pid for pid, n in store.review_counts().items()
        if min_reviews <= n <= max_reviews
    }


def load_record(store: Store, physician_id: str) -> PhysicianRecord:
    row = store.get_physician(physician_id)
    if row is None:
        raise ArgumentError(f"unknown physician {physician_id!r}")
    reviews = [
        Review(
            review_id=r["review_id"],
            physician_id=r["physician_id"],
            platform=r["platform"],
            text=r["text"],
            star_rating=r["star_rating"],
            submitted_at=r["submitted_at"],
        )
        for r in store.reviews_for(physician_id)
    ]
    return PhysicianRecord(
        physician_id=row["physician_id"],
        display_name=row["display_name"],
        gender=row["gender"],
        specialty=row["specialty"],
        region=row["region"],
        overall_rating=row["overall_rating"],
        reviews=reviews,
    )


def build_profile(record: PhysicianRecord) -> ProfileDocument:
    """Concatenate the record's reviews into the extraction document.

    Blocks are "Review #<k>:\\n<text>" joined by blank lines, ordered by
    review_id so the body is byte-identical across runs.
    """
    if not record.reviews:
        raise ArgumentError(f"physician {record.physician_id!r} has no reviews")
    ordered = sorted(record.reviews, key=lambda r: r.review_id)
    blocks = [f"Review #{k}:\n{r.text}" for k, r in enumerate(ordered, start=1)]
    return ProfileDocument(
        physician_id=record.physician_id,
        physician_name=record.display_name,
        review_count=len(blocks),
        body="\n\n".join(blocks),
    )


def export_metadata(store: Store, path: str | Path) -> int:
    """Physician metadata plus review counts as a UTF-8 CSV; returns row count."""
    counts = store.review_counts()
    rows = store.query("SELECT * FROM physicians ORDER BY physician_id")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["physician_id", "display_name", "gender", "specialty", "region",
             "overall_rating", "review_count"]
        )
        for row in rows:
            writer.writerow([
                row["physician_id"], row["display_name"], row["gender"] or "",
                row["specialty"] or "", row["region"] or "",
                "" if row["overall_rating"] is None else row["overall_rating"],
                counts.get(row["physician_id"], 0),
            ])
    return len(rows)
