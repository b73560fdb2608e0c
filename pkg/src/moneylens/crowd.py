"""Crowd proposal/rating/verification aggregation.

Workers propose comparison objects for dollar amounts drawn from a fixed
25-rung ladder; other workers rate each proposal for helpfulness and
familiarity, and a third group verifies the object's real-world value. A
proposal survives when it is both acceptable (enough ratings, high enough
combined rating) and accurate (enough verifications, median close to the
ladder amount it was proposed for).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .references import ReferenceObject, content_id

__all__ = [
    "measurement_ladder",
    "Proposal",
    "RatingRecord",
    "VerificationRecord",
    "CrowdObject",
    "CrowdReference",
    "CrowdCorpus",
    "FunnelReport",
    "aggregate_ratings",
    "verify",
    "build_crowd_corpus",
    "read_proposals",
    "read_ratings",
    "read_verifications",
]

MIN_RATINGS = 5
MIN_TOTAL_RATING = 3
MIN_VERIFICATIONS = 3
MAX_MEDIAN_DEVIATION = Decimal("0.20")

STATUS_PROPOSED = "proposed"
STATUS_ACCEPTABLE = "acceptable"
STATUS_VERIFIED = "verified"
STATUS_REJECTED = "rejected"


def measurement_ladder() -> list[Decimal]:
    """The 25 dollar amounts proposals are anchored to: $1 .. $1 trillion.

    Rungs alternate 1x10^k and 3x10^k; the ladder tops out at $1e12, so the
    paired $3e12 rung falls outside the range.
    """
    ladder = []
    for k in range(13):
        ladder.append(Decimal(1).scaleb(k))
        ladder.append(Decimal(3).scaleb(k))
    return ladder[:25]


_LADDER_SET = frozenset(measurement_ladder())


@dataclass(frozen=True)
class Proposal:
    proposal_id: str
    anchor_value: Decimal
    phrase: str
    worker_id: str
    kb_entity_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.anchor_value not in _LADDER_SET:
            raise ValueError(f"anchor {self.anchor_value} is not on the measurement ladder")


@dataclass(frozen=True)
class RatingRecord:
    proposal_id: str
    helpfulness: int
    familiarity: int
    worker_id: str

    def __post_init__(self) -> None:
        for name in ("helpfulness", "familiarity"):
            score = getattr(self, name)
            if not (1 <= score <= 5):
                raise ValueError(f"{name} must be in 1..5, got {score}")


@dataclass(frozen=True)
class VerificationRecord:
    proposal_id: str
    verified_value: Decimal
    worker_id: str

    def __post_init__(self) -> None:
        if self.verified_value <= 0:
            raise ValueError("verified_value must be positive")


@dataclass(frozen=True)
class CrowdObject:
    """A proposal plus its aggregated rating and verification outcome."""

    proposal_id: str
    anchor_value: Decimal
    phrase: str
    worker_id: str
    kb_entity_id: Optional[str]
    total_rating: float
    rating_count: int
    verification_count: int
    median_verified: Optional[Decimal]
    status: str


def aggregate_ratings(
    ratings: Sequence[RatingRecord], helpfulness_weight: float = 0.5
) -> tuple[float, bool]:
    """Combined rating and acceptability for one proposal's ratings.

    The total is a weighted mean of the mean helpfulness and mean familiarity
    (equal weights by default); acceptable needs at least 5 ratings and a
    total of at least 3, inclusive. Computed exactly so the boundary does not
    depend on float rounding.
    """
    if not ratings:
        return 0.0, False
    n = len(ratings)
    mean_h = Fraction(sum(r.helpfulness for r in ratings), n)
    mean_f = Fraction(sum(r.familiarity for r in ratings), n)
    w = Fraction(helpfulness_weight)
    total = w * mean_h + (1 - w) * mean_f
    acceptable = n >= MIN_RATINGS and total >= MIN_TOTAL_RATING
    return float(total), acceptable


def _median(values: Sequence[Decimal]) -> Decimal:
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def verify(
    anchor_value: Decimal, verifications: Sequence[VerificationRecord]
) -> tuple[Optional[Decimal], bool]:
    """Median verified value and accuracy for one proposal.

    Accurate needs at least 3 verifications with the median within 20% of the
    anchor. Even-count medians average the middle two values.
    """
    if not verifications:
        return None, False
    median = _median([v.verified_value for v in verifications])
    deviation = abs(median - anchor_value) / anchor_value
    accurate = len(verifications) >= MIN_VERIFICATIONS and deviation <= MAX_MEDIAN_DEVIATION
    return median, accurate


@dataclass
class FunnelReport:
    """Counts through the proposed -> acceptable -> verified funnel."""

    proposed: int = 0
    acceptable: int = 0
    verified: int = 0
    skipped_unknown_ratings: int = 0
    skipped_unknown_verifications: int = 0
    skipped_self_ratings: int = 0
    skipped_duplicate_ratings: int = 0

    def to_dict(self) -> dict:
        return {
            "proposed": self.proposed,
            "acceptable": self.acceptable,
            "verified": self.verified,
            "skipped_unknown_ratings": self.skipped_unknown_ratings,
            "skipped_unknown_verifications": self.skipped_unknown_verifications,
            "skipped_self_ratings": self.skipped_self_ratings,
            "skipped_duplicate_ratings": self.skipped_duplicate_ratings,
        }

    def to_text(self) -> str:
        lines = [
            f"proposed    {self.proposed}",
            f"acceptable  {self.acceptable}",
            f"verified    {self.verified}",
        ]
        skipped = [
            ("ratings for unknown proposals", self.skipped_unknown_ratings),
            ("verifications for unknown proposals", self.skipped_unknown_verifications),
            ("self-ratings", self.skipped_self_ratings),
            ("duplicate ratings", self.skipped_duplicate_ratings),
        ]
        for label, count in skipped:
            if count:
                lines.append(f"skipped {label}: {count}")
        return "\n".join(lines)


def build_crowd_corpus(
    proposals: Sequence[Proposal],
    ratings: Sequence[RatingRecord],
    verifications: Sequence[VerificationRecord],
    helpfulness_weight: float = 0.5,
) -> tuple[list[CrowdObject], FunnelReport]:
    """Classify every proposal and count the funnel.

    Ratings from a proposal's own author are excluded, as are duplicate
    ratings by the same worker (first one wins). Ratings or verifications
    that reference unknown proposal ids are skipped and counted.
    """
    by_id = {p.proposal_id: p for p in proposals}
    if len(by_id) != len(proposals):
        raise ValueError("duplicate proposal ids")
    report = FunnelReport(proposed=len(proposals))

    ratings_for: dict[str, list[RatingRecord]] = {pid: [] for pid in by_id}
    seen_raters: set[tuple[str, str]] = set()
    for r in ratings:
        proposal = by_id.get(r.proposal_id)
        if proposal is None:
            report.skipped_unknown_ratings += 1
            continue
        if r.worker_id == proposal.worker_id:
            report.skipped_self_ratings += 1
            continue
        key = (r.worker_id, r.proposal_id)
        if key in seen_raters:
            report.skipped_duplicate_ratings += 1
            continue
        seen_raters.add(key)
        ratings_for[r.proposal_id].append(r)

    verifications_for: dict[str, list[VerificationRecord]] = {pid: [] for pid in by_id}
    for v in verifications:
        if v.proposal_id not in by_id:
            report.skipped_unknown_verifications += 1
            continue
        verifications_for[v.proposal_id].append(v)

    objects: list[CrowdObject] = []
    for p in proposals:
        rs = ratings_for[p.proposal_id]
        vs = verifications_for[p.proposal_id]
        total, acceptable = aggregate_ratings(rs, helpfulness_weight)
        median, accurate = verify(p.anchor_value, vs)
        if acceptable and accurate:
            status = STATUS_VERIFIED
        elif acceptable:
            status = STATUS_ACCEPTABLE
        elif len(rs) >= MIN_RATINGS:
            status = STATUS_REJECTED
        else:
            status = STATUS_PROPOSED
        if status in (STATUS_ACCEPTABLE, STATUS_VERIFIED):
            report.acceptable += 1
        if status == STATUS_VERIFIED:
            report.verified += 1
        objects.append(
            CrowdObject(
                proposal_id=p.proposal_id,
                anchor_value=p.anchor_value,
                phrase=p.phrase,
                worker_id=p.worker_id,
                kb_entity_id=p.kb_entity_id,
                total_rating=total,
                rating_count=len(rs),
                verification_count=len(vs),
                median_verified=median,
                status=status,
            )
        )
    return objects, report


@dataclass(frozen=True)
class CrowdReference:
    """A verified crowd object as served at runtime (value = ladder anchor)."""

    id: str
    phrase: str
    value: Decimal
    total_rating: float
    kb_entity_id: Optional[str] = None

    def __post_init__(self) -> None:
        if self.value <= 0:
            raise ValueError("crowd reference value must be positive")


class CrowdCorpus:
    """Lookup table of verified crowd references."""

    def __init__(self, references: Iterable[CrowdReference]):
        self.references = sorted(references, key=lambda r: r.id)
        ids = [r.id for r in self.references]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate crowd reference ids")

    def __len__(self) -> int:
        return len(self.references)

    def __iter__(self) -> Iterator[CrowdReference]:
        return iter(self.references)

    @classmethod
    def from_crowd_objects(cls, objects: Sequence[CrowdObject]) -> "CrowdCorpus":
        refs = [
            CrowdReference(
                id=content_id("crowd", o.phrase, o.anchor_value),
                phrase=o.phrase,
                value=o.anchor_value,
                total_rating=o.total_rating,
                kb_entity_id=o.kb_entity_id,
            )
            for o in objects
            if o.status == STATUS_VERIFIED
        ]
        return cls(refs)

    def to_reference_objects(self) -> list[ReferenceObject]:
        return [
            ReferenceObject(
                id=r.id,
                phrase=r.phrase,
                category="Dictionary",
                value=r.value,
                source="crowd",
                kb_entity_id=r.kb_entity_id,
            )
            for r in self.references
        ]

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as f:
            for r in self.references:
                rec = {
                    "id": r.id,
                    "phrase": r.phrase,
                    "value": format(r.value, "f"),
                    "total_rating": r.total_rating,
                }
                if r.kb_entity_id is not None:
                    rec["kb_entity_id"] = r.kb_entity_id
                f.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CrowdCorpus":
        path = Path(path)
        refs = []
        with path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    refs.append(
                        CrowdReference(
                            id=str(rec["id"]),
                            phrase=str(rec["phrase"]),
                            value=Decimal(str(rec["value"])),
                            total_rating=float(rec.get("total_rating", 0.0)),
                            kb_entity_id=rec.get("kb_entity_id"),
                        )
                    )
                except (ValueError, KeyError, TypeError, InvalidOperation) as exc:
                    raise ValueError(f"{path}:{lineno}: bad crowd reference: {exc}") from exc
        return cls(refs)


def _read_csv(path: str | Path, required: Sequence[str]):
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            missing = [c for c in required if row.get(c) in (None, "")]
            if missing:
                raise ValueError(f"{path}:{lineno}: missing columns {missing}")
            yield lineno, row


def read_proposals(path: str | Path) -> list[Proposal]:
    out = []
    for lineno, row in _read_csv(path, ("proposal_id", "anchor_value", "phrase", "worker_id")):
        try:
            out.append(
                Proposal(
                    proposal_id=row["proposal_id"],
                    anchor_value=Decimal(row["anchor_value"]),
                    phrase=row["phrase"],
                    worker_id=row["worker_id"],
                    kb_entity_id=row.get("kb_entity_id") or None,
                )
            )
        except (ValueError, InvalidOperation) as exc:
            raise ValueError(f"{path}:{lineno}: bad proposal: {exc}") from exc
    return out


def read_ratings(path: str | Path) -> list[RatingRecord]:
    out = []
    for lineno, row in _read_csv(path, ("proposal_id", "helpfulness", "familiarity", "worker_id")):
        try:
            out.append(
                RatingRecord(
                    proposal_id=row["proposal_id"],
                    helpfulness=int(row["helpfulness"]),
                    familiarity=int(row["familiarity"]),
                    worker_id=row["worker_id"],
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad rating: {exc}") from exc
    return out


def read_verifications(path: str | Path) -> list[VerificationRecord]:
    out = []
    for lineno, row in _read_csv(path, ("proposal_id", "verified_value", "worker_id")):
        try:
            out.append(
                VerificationRecord(
                    proposal_id=row["proposal_id"],
                    verified_value=Decimal(row["verified_value"]),
                    worker_id=row["worker_id"],
                )
            )
        except (ValueError, InvalidOperation) as exc:
            raise ValueError(f"{path}:{lineno}: bad verification: {exc}") from exc
    return out
