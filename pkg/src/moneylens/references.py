"""Reference-object corpus: ingestion, filtering, persistence, and lookup.

A reference object is a named entity with a known USD value ("the annual
revenue of Metropolitan Museum of Art") used as a comparison anchor. Objects
come from a hand-curated dictionary source, from knowledge-base dumps, or from
the crowd pipeline.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import unicodedata
from dataclasses import dataclass, field, fields
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Iterable, Iterator, Optional

__all__ = [
    "CATEGORIES",
    "DEFAULT_EXCLUDED_PROPERTIES",
    "ReferenceObject",
    "ReferenceCorpus",
    "IngestionReport",
    "CorpusFormatError",
    "ingest_knowledge_base",
    "ingest_dictionary",
    "content_id",
    "save_corpus",
    "load_corpus",
]

# Closed category set: the dictionary bucket plus the 11 knowledge-base
# property types kept after curation.
CATEGORIES = (
    "Dictionary",
    "Nominal GDP",
    "Nominal GDP per capita",
    "Annual budget",
    "Cost",
    "Endowment",
    "Market capitalization",
    "Net profit",
    "Price",
    "Total assets",
    "Annual revenue",
    "Total equity",
)

_CATEGORY_BY_CASEFOLD = {c.casefold(): c for c in CATEGORIES}

# Curated property exclusions, encoded declaratively instead of the original
# manual review. Extendable via the ``excluded_properties`` argument.
DEFAULT_EXCLUDED_PROPERTIES = ("GDP (PPP)", "total liabilities")

SOURCES = ("dictionary", "knowledge-base", "crowd")


class CorpusFormatError(ValueError):
    """A corpus or raw-record file violates the line-oriented schema."""

    def __init__(self, path: str | Path, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = str(path)
        self.line = line
        self.reason = reason


@dataclass(frozen=True)
class ReferenceObject:
    """A named entity with a positive USD value usable as a comparison anchor."""

    id: str
    phrase: str
    category: str
    value: Decimal
    source: str
    kb_entity_id: Optional[str] = None
    wiki_title: Optional[str] = None
    as_of: Optional[dt.date] = None

    def __post_init__(self) -> None:
        if self.value <= 0:
            raise ValueError(f"reference value must be positive, got {self.value}")
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "phrase": self.phrase,
            "category": self.category,
            "value": format(self.value, "f"),
            "source": self.source,
        }
        if self.kb_entity_id is not None:
            rec["kb_entity_id"] = self.kb_entity_id
        if self.wiki_title is not None:
            rec["wiki_title"] = self.wiki_title
        if self.as_of is not None:
            rec["as_of"] = self.as_of.isoformat()
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "ReferenceObject":
        required = {"id", "phrase", "category", "value", "source"}
        missing = required - rec.keys()
        if missing:
            raise ValueError(f"missing fields: {sorted(missing)}")
        return cls(
            id=str(rec["id"]),
            phrase=str(rec["phrase"]),
            category=str(rec["category"]),
            value=Decimal(str(rec["value"])),
            source=str(rec["source"]),
            kb_entity_id=rec.get("kb_entity_id"),
            wiki_title=rec.get("wiki_title"),
            as_of=dt.date.fromisoformat(rec["as_of"]) if "as_of" in rec else None,
        )


def content_id(source: str, phrase: str, value: Decimal) -> str:
    """Content hash of (source, phrase, value) so re-ingestion assigns stable ids."""
    payload = f"{source}|{phrase}|{format(value, 'f')}".encode("utf-8")
    return hashlib.blake2b(payload, digest_size=8).hexdigest()


class ReferenceCorpus:
    """Immutable collection of reference objects with id and category indexes."""

    def __init__(self, objects: Iterable[ReferenceObject]):
        self.objects: list[ReferenceObject] = sorted(objects, key=lambda o: o.id)
        self._by_id: dict[str, ReferenceObject] = {}
        self._by_category: dict[str, list[ReferenceObject]] = {}
        for obj in self.objects:
            if obj.id in self._by_id:
                raise ValueError(f"duplicate reference id {obj.id!r}")
            self._by_id[obj.id] = obj
            self._by_category.setdefault(obj.category, []).append(obj)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self) -> Iterator[ReferenceObject]:
        return iter(self.objects)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ReferenceCorpus) and self.objects == other.objects

    def get(self, object_id: str) -> ReferenceObject:
        return self._by_id[object_id]

    def by_category(self, category: str) -> list[ReferenceObject]:
        return list(self._by_category.get(category, []))

    def search(self, query: str, limit: int = 20) -> list[ReferenceObject]:
        """Case-insensitive substring search over phrases, id-ordered."""
        q = query.casefold()
        hits = [o for o in self.objects if q in o.phrase.casefold()]
        return hits[:limit]


@dataclass
class IngestionReport:
    """Per-filter drop counts from one knowledge-base ingestion run."""

    total: int = 0
    malformed: int = 0
    dropped_currency: int = 0
    dropped_nonpositive: int = 0
    dropped_stale: int = 0
    dropped_excluded_property: int = 0
    dropped_unlisted_property: int = 0
    kept: int = 0
    malformed_lines: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_text(self) -> str:
        lines = [f"records read            {self.total}"]
        lines.append(f"malformed (skipped)     {self.malformed}")
        lines.append(f"non-USD currency        {self.dropped_currency}")
        lines.append(f"non-positive value      {self.dropped_nonpositive}")
        lines.append(f"superseded by newer     {self.dropped_stale}")
        lines.append(f"excluded property       {self.dropped_excluded_property}")
        lines.append(f"unlisted property       {self.dropped_unlisted_property}")
        lines.append(f"kept                    {self.kept}")
        return "\n".join(lines)


@dataclass(frozen=True)
class _RawRecord:
    entity: str
    property: str
    currency: str
    value: Decimal
    timestamp: Optional[dt.date]
    entity_id: Optional[str]
    wiki_title: Optional[str]


def _parse_raw(rec: dict) -> _RawRecord:
    entity = str(rec["entity"]).strip()
    prop = str(rec["property"]).strip()
    currency = str(rec["currency"]).strip()
    if not entity or not prop or not currency:
        raise ValueError("entity, property and currency must be non-empty")
    value = Decimal(str(rec["value"]))
    if not value.is_finite():
        raise ValueError("value must be finite")
    ts = rec.get("timestamp")
    timestamp = dt.date.fromisoformat(str(ts)[:10]) if ts not in (None, "") else None
    return _RawRecord(
        entity=entity,
        property=prop,
        currency=currency,
        value=value,
        timestamp=timestamp,
        entity_id=rec.get("entity_id"),
        wiki_title=rec.get("wiki_title"),
    )


def _phrase_for(prop: str, entity: str) -> str:
    # Lowercase only the property's first character so acronyms survive
    # ("Nominal GDP" -> "the nominal GDP of ...").
    prop = prop[0].lower() + prop[1:] if prop else prop
    return f"the {prop} of {entity}"


def ingest_knowledge_base(
    records: Iterable[dict],
    excluded_properties: Iterable[str] = DEFAULT_EXCLUDED_PROPERTIES,
) -> tuple[list[ReferenceObject], IngestionReport]:
    """Filter raw entity/property records down to usable reference objects.

    Filters apply in order: (1) drop non-USD currencies; (2) drop non-positive
    values; (3) keep only the most recent record per (entity, property);
    (4) drop excluded properties, then properties outside the curated category
    set. Malformed records are skipped and counted, never raised.
    """
    excluded = {p.casefold() for p in excluded_properties}
    report = IngestionReport()

    parsed: list[_RawRecord] = []
    for lineno, rec in enumerate(records, start=1):
        report.total += 1
        try:
            parsed.append(_parse_raw(rec))
        except (KeyError, ValueError, TypeError, InvalidOperation):
            report.malformed += 1
            report.malformed_lines.append(lineno)

    stage: list[_RawRecord] = []
    for r in parsed:
        if r.currency.upper() != "USD":
            report.dropped_currency += 1
        else:
            stage.append(r)

    stage2 = []
    for r in stage:
        if r.value <= 0:
            report.dropped_nonpositive += 1
        else:
            stage2.append(r)

    # Most recent record wins per (entity, property). Records without a
    # timestamp sort earliest; exact ties break on value so the outcome is
    # independent of input order.
    latest: dict[tuple[str, str], _RawRecord] = {}
    for r in stage2:
        key = (r.entity, r.property.casefold())
        sort_key = (r.timestamp or dt.date.min, r.value)
        current = latest.get(key)
        if current is None or sort_key >= ((current.timestamp or dt.date.min), current.value):
            latest[key] = r
    report.dropped_stale = len(stage2) - len(latest)

    out: list[ReferenceObject] = []
    for r in latest.values():
        if r.property.casefold() in excluded:
            report.dropped_excluded_property += 1
            continue
        category = _CATEGORY_BY_CASEFOLD.get(r.property.casefold())
        if category is None or category == "Dictionary":
            report.dropped_unlisted_property += 1
            continue
        phrase = _phrase_for(r.property, r.entity)
        out.append(
            ReferenceObject(
                id=content_id("knowledge-base", phrase, r.value),
                phrase=phrase,
                category=category,
                value=r.value,
                source="knowledge-base",
                kb_entity_id=r.entity_id,
                wiki_title=unicodedata.normalize("NFC", r.wiki_title or r.entity),
                as_of=r.timestamp,
            )
        )
    out.sort(key=lambda o: o.id)
    report.kept = len(out)
    return out, report


def ingest_dictionary(records: Iterable[tuple[str, Decimal]]) -> list[ReferenceObject]:
    """Turn (phrase, value) pairs from a hand-curated source into objects.

    Phrases are used verbatim; every object lands in the Dictionary category.
    Non-positive values are rejected outright (curated input should be clean).
    """
    out = []
    for phrase, value in records:
        value = Decimal(str(value))
        if value <= 0:
            raise ValueError(f"dictionary value must be positive: {phrase!r} -> {value}")
        out.append(
            ReferenceObject(
                id=content_id("dictionary", phrase, value),
                phrase=phrase,
                category="Dictionary",
                value=value,
                source="dictionary",
            )
        )
    return out


def save_corpus(corpus: ReferenceCorpus, path: str | Path) -> None:
    """Write one JSON record per line, ordered by id (byte-stable)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        for obj in corpus.objects:
            f.write(json.dumps(obj.to_record(), sort_keys=True) + "\n")


def load_corpus(path: str | Path) -> ReferenceCorpus:
    """Read a corpus file, reporting schema violations with line numbers."""
    path = Path(path)
    objects = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                objects.append(ReferenceObject.from_record(rec))
            except (ValueError, TypeError, InvalidOperation) as exc:
                raise CorpusFormatError(path, lineno, str(exc)) from exc
    return ReferenceCorpus(objects)


def read_raw_records(path: str | Path) -> Iterator[dict]:
    """Yield raw knowledge-base records from a JSON-lines file."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except ValueError as exc:
                raise CorpusFormatError(path, lineno, str(exc)) from exc


def read_dictionary_records(path: str | Path) -> list[tuple[str, Decimal]]:
    """Read (phrase, value) pairs from a JSON-lines file."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append((str(rec["phrase"]), Decimal(str(rec["value"]))))
            except (ValueError, KeyError, TypeError, InvalidOperation) as exc:
                raise CorpusFormatError(path, lineno, str(exc)) from exc
    return out
