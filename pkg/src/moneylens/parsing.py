"""Dollar-amount detection in plain text.

Finds the three surface forms ``$<number>``, ``$<number> <scale>`` and
``<number> <scale> dollars`` (scale: thousand/million/billion/trillion) and
returns them as :class:`Measurement` values with exact decimal amounts and
character spans. Negative amounts and suffix abbreviations (k, m, bn) are
deliberately not matched.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional

__all__ = [
    "TextSpan",
    "Measurement",
    "extract_measurements",
    "magnitude_of",
    "parse_amount",
]

_SCALES = {
    "thousand": Decimal(10) ** 3,
    "million": Decimal(10) ** 6,
    "billion": Decimal(10) ** 9,
    "trillion": Decimal(10) ** 12,
}

# A number with optional well-formed comma grouping and an optional decimal
# part. The trailing lookahead rejects half-matches of malformed groupings
# such as "1,2345" (which would otherwise yield "1,234" or a bare "1").
_NUMBER = r"(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?(?!,?\d)"
_SCALE = r"(?:thousand|million|billion|trillion)"

_PATTERN = re.compile(
    rf"""
    (?<![-−])\$(?P<num1>{_NUMBER})(?:\s+(?P<scale1>{_SCALE}))?\b
    |
    (?<![\w$.,\-−])(?P<num2>{_NUMBER})\s+(?P<scale2>{_SCALE})\s+dollars\b
    """,
    re.IGNORECASE | re.VERBOSE,
)


@dataclass(frozen=True)
class TextSpan:
    """Half-open character range [start, end) into the source text."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def slice(self, text: str) -> str:
        return text[self.start : self.end]


@dataclass(frozen=True)
class Measurement:
    """A dollar amount found in text.

    ``value`` is an exact decimal (e.g. parsing "$0.92" yields 92/100, never a
    binary-float approximation). ``magnitude`` is floor(log10(value)) and is
    None for a zero amount.
    """

    value: Decimal
    raw: str
    span: TextSpan
    magnitude: Optional[int]

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("measurement value must be non-negative")
        if self.value > 0 and self.magnitude != magnitude_of(self.value):
            raise ValueError("magnitude inconsistent with value")


def magnitude_of(value: Decimal) -> int:
    """Floor of the base-10 logarithm of a positive decimal, computed exactly.

    Uses the decimal exponent representation rather than a float log, so the
    result is correct even where float rounding would flip it (e.g. 999,999).
    """
    value = Decimal(value)
    if value <= 0:
        raise ValueError(f"magnitude requires a positive value, got {value}")
    return value.adjusted()


def _to_value(number: str, scale: Optional[str]) -> Decimal:
    value = Decimal(number.replace(",", ""))
    if scale is not None:
        value *= _SCALES[scale.lower()]
    return value


def extract_measurements(text: str) -> list[Measurement]:
    """Return all dollar amounts in ``text``, left to right, non-overlapping.

    Longest match wins at each position (a trailing scale word is always
    consumed). Unparseable numerics are skipped, never raised.
    """
    out: list[Measurement] = []
    for m in _PATTERN.finditer(text):
        number = m.group("num1") or m.group("num2")
        scale = m.group("scale1") or m.group("scale2")
        try:
            value = _to_value(number, scale)
        except ArithmeticError:
            continue
        span = TextSpan(m.start(), m.end())
        magnitude = value.adjusted() if value > 0 else None
        out.append(Measurement(value=value, raw=m.group(0), span=span, magnitude=magnitude))
    return out


def parse_amount(text: str) -> Optional[Decimal]:
    """Parse a string that is exactly one dollar amount, else None.

    Used for round-trip checks: re-parsing a Measurement's ``raw`` must yield
    the same value.
    """
    found = extract_measurements(text)
    if len(found) == 1 and found[0].raw == text.strip():
        return found[0].value
    return None
