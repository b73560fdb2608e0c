"""Offline analysis of suggestion-selection logs.

Each trial records which policies' perspectives a participant saw for one
quote and which one, if any, they kept. From an append-only log of such
trials the harness computes per-policy keep rates, counterfactual keep rates
for policy subsets, magnitude-binned keep curves, and the simple
similarity-to-helpfulness regression. It also selects stratified stimulus
sets for label collection.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Mapping, Sequence

from .parsing import magnitude_of
from .policies import POLICIES

__all__ = [
    "SECTIONS",
    "CHOICE_NONE",
    "TrialRecord",
    "KeepRateReport",
    "CombinationReport",
    "keep_rates",
    "combination_keep_rate",
    "keep_rate_by_magnitude",
    "StimulusQuote",
    "select_stimuli",
    "similarity_helpfulness_ols",
    "read_trial_log",
    "write_trial_log",
]

SECTIONS = ("arts", "business", "health", "science", "sports", "technology", "us", "world")
CHOICE_NONE = "none"

# The study design covers quotes from $1 million up through the $10 trillion
# decade; stimulus binning is restricted to this range.
MIN_DECADE = 6
MAX_DECADE = 13

COUNTERFACTUAL_NOTE = (
    "Subset keep rates assume a participant who kept a policy's perspective "
    "would still keep it when fewer policies are shown."
)


@dataclass(frozen=True)
class TrialRecord:
    """One participant-quote selection event."""

    participant_id: str
    quote_id: str
    section: str
    focal_value: Decimal
    shown: frozenset[str]
    choice: str

    def __post_init__(self) -> None:
        if self.section not in SECTIONS:
            raise ValueError(f"unknown section {self.section!r}")
        if self.focal_value <= 0:
            raise ValueError("focal_value must be positive")
        unknown = self.shown - set(POLICIES)
        if unknown:
            raise ValueError(f"unknown policies shown: {sorted(unknown)}")
        if self.choice != CHOICE_NONE and self.choice not in self.shown:
            raise ValueError(f"choice {self.choice!r} was not among shown policies")


@dataclass
class KeepRateReport:
    """Per-policy keep rates plus the no-selection rate."""

    trial_count: int
    rates: dict[str, float]
    none_rate: float
    shown_counts: dict[str, int]
    choice_counts: dict[str, int]
    none_count: int
    per_participant: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trial_count": self.trial_count,
            "rates": dict(self.rates),
            "none_rate": self.none_rate,
            "shown_counts": dict(self.shown_counts),
            "choice_counts": dict(self.choice_counts),
            "none_count": self.none_count,
        }

    def to_text(self) -> str:
        lines = [f"trials: {self.trial_count}"]
        for policy in POLICIES:
            if policy in self.rates:
                lines.append(
                    f"  {policy:<13} kept {self.choice_counts[policy]:>4} "
                    f"of {self.shown_counts[policy]:>4} shown  rate {self.rates[policy]:.2f}"
                )
        lines.append(f"  {'none':<13} {self.none_count:>9} trials        rate {self.none_rate:.2f}")
        return "\n".join(lines)


def keep_rates(log: Sequence[TrialRecord]) -> KeepRateReport:
    """Keep rate per policy: times chosen divided by times shown."""
    if not log:
        raise ValueError("empty trial log")
    shown_counts = {p: 0 for p in POLICIES}
    choice_counts = {p: 0 for p in POLICIES}
    none_count = 0
    for t in log:
        for p in t.shown:
            shown_counts[p] += 1
        if t.choice == CHOICE_NONE:
            none_count += 1
        else:
            choice_counts[t.choice] += 1
    rates = {
        p: choice_counts[p] / shown_counts[p] for p in POLICIES if shown_counts[p] > 0
    }
    per_participant: dict[str, dict[str, float]] = {}
    for pid in sorted({t.participant_id for t in log}):
        trials = [t for t in log if t.participant_id == pid]
        breakdown = {}
        for p in POLICIES:
            shown = sum(1 for t in trials if p in t.shown)
            if shown:
                breakdown[p] = sum(1 for t in trials if t.choice == p) / shown
        breakdown[CHOICE_NONE] = sum(1 for t in trials if t.choice == CHOICE_NONE) / len(trials)
        per_participant[pid] = breakdown
    return KeepRateReport(
        trial_count=len(log),
        rates=rates,
        none_rate=none_count / len(log),
        shown_counts={p: c for p, c in shown_counts.items() if c > 0},
        choice_counts={p: choice_counts[p] for p in shown_counts if shown_counts[p] > 0},
        none_count=none_count,
        per_participant=per_participant,
    )


@dataclass
class CombinationReport:
    """Counterfactual keep rate when only a subset of policies is offered."""

    policies: tuple[str, ...]
    rate: float
    kept: int
    trial_count: int
    per_participant: dict[str, float]
    cumulative: list[tuple[float, float]]  # (participant mean, fraction at or above)
    note: str = COUNTERFACTUAL_NOTE

    def to_dict(self) -> dict:
        return {
            "policies": list(self.policies),
            "rate": self.rate,
            "kept": self.kept,
            "trial_count": self.trial_count,
            "per_participant": dict(self.per_participant),
            "cumulative": [list(point) for point in self.cumulative],
            "note": self.note,
        }

    def to_text(self) -> str:
        label = "+".join(self.policies) if self.policies else "(none)"
        return f"{label:<40} kept {self.kept:>4} of {self.trial_count:>4}  rate {self.rate:.2f}"


def combination_keep_rate(
    log: Sequence[TrialRecord], subset: Sequence[str]
) -> CombinationReport:
    """Keep rate if only ``subset`` policies had been offered.

    A trial counts as kept when its recorded choice falls in the subset; the
    empty subset has rate 0 by definition.
    """
    if not log:
        raise ValueError("empty trial log")
    subset_set = frozenset(subset)
    unknown = subset_set - set(POLICIES)
    if unknown:
        raise ValueError(f"unknown policies: {sorted(unknown)}")
    kept = sum(1 for t in log if t.choice in subset_set)

    per_participant: dict[str, float] = {}
    for pid in sorted({t.participant_id for t in log}):
        trials = [t for t in log if t.participant_id == pid]
        per_participant[pid] = sum(1 for t in trials if t.choice in subset_set) / len(trials)

    means = sorted(per_participant.values())
    n = len(means)
    cumulative = []
    for value in sorted(set(means)):
        at_or_above = sum(1 for m in means if m >= value)
        cumulative.append((value, at_or_above / n))

    ordered = tuple(p for p in POLICIES if p in subset_set)
    return CombinationReport(
        policies=ordered,
        rate=kept / len(log),
        kept=kept,
        trial_count=len(log),
        per_participant=per_participant,
        cumulative=cumulative,
    )


def keep_rate_by_magnitude(
    log: Sequence[TrialRecord], policy: str
) -> dict[int, float]:
    """Keep rate for one policy, binned by floor(log10(focal value)).

    Decades with no trials showing the policy are absent from the result,
    never reported as zero.
    """
    if not log:
        raise ValueError("empty trial log")
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    shown: dict[int, int] = {}
    kept: dict[int, int] = {}
    for t in log:
        if policy not in t.shown:
            continue
        decade = magnitude_of(t.focal_value)
        shown[decade] = shown.get(decade, 0) + 1
        if t.choice == policy:
            kept[decade] = kept.get(decade, 0) + 1
    return {d: kept.get(d, 0) / shown[d] for d in sorted(shown)}


@dataclass(frozen=True)
class StimulusQuote:
    """A candidate quote for label collection."""

    quote_id: str
    text: str
    section: str
    focal_value: Decimal

    def __post_init__(self) -> None:
        if self.focal_value <= 0:
            raise ValueError("focal_value must be positive")


def select_stimuli(
    quotes: Sequence[StimulusQuote],
    per_bin: int,
    similarity_scores: Mapping[str, float],
) -> dict[tuple[str, int], list[StimulusQuote]]:
    """Stratified stimulus selection over (section, magnitude decade) bins.

    Within each bin, quotes whose top-ranked reference is most similar win;
    similarity ties go to the earlier quote_id. Bins cover decades 6..13 and
    may be empty (quotes outside the range are ignored).
    """
    if per_bin <= 0:
        raise ValueError("per_bin must be positive")
    bins: dict[tuple[str, int], list[StimulusQuote]] = {}
    for q in quotes:
        decade = magnitude_of(q.focal_value)
        if not (MIN_DECADE <= decade <= MAX_DECADE):
            continue
        bins.setdefault((q.section, decade), []).append(q)
    selected: dict[tuple[str, int], list[StimulusQuote]] = {}
    for key in sorted(bins):
        candidates = sorted(
            bins[key], key=lambda q: (-similarity_scores[q.quote_id], q.quote_id)
        )
        selected[key] = candidates[:per_bin]
    return selected


def similarity_helpfulness_ols(
    pairs: Sequence[tuple[float, float]]
) -> tuple[float, float, float]:
    """(intercept, slope, R^2) of mean helpfulness on similarity score."""
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 pairs, got {len(pairs)}")
    xs = [float(x) for x, _ in pairs]
    ys = [float(y) for _, y in pairs]
    n = len(xs)
    x_mean = sum(xs) / n
    y_mean = sum(ys) / n
    var_x = sum((x - x_mean) ** 2 for x in xs)
    if var_x == 0.0:
        raise ValueError("similarity scores have zero variance")
    cov = sum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = cov / var_x
    intercept = y_mean - slope * x_mean
    ss_res = sum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    ss_tot = sum((y - y_mean) ** 2 for y in ys)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return intercept, slope, r2


def write_trial_log(path: str | Path, log: Sequence[TrialRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["participant_id", "quote_id", "section", "focal_value", "shown", "choice"]
        )
        for t in log:
            shown = ",".join(p for p in POLICIES if p in t.shown)
            writer.writerow(
                [t.participant_id, t.quote_id, t.section, format(t.focal_value, "f"), shown, t.choice]
            )


def read_trial_log(path: str | Path) -> list[TrialRecord]:
    """Read trial records; extra columns (timestamps, session ids) are ignored."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            try:
                shown = frozenset(p for p in (row["shown"] or "").split(",") if p)
                out.append(
                    TrialRecord(
                        participant_id=row["participant_id"],
                        quote_id=row["quote_id"],
                        section=row["section"],
                        focal_value=Decimal(row["focal_value"]),
                        shown=shown,
                        choice=row["choice"],
                    )
                )
            except (KeyError, TypeError, ValueError, InvalidOperation) as exc:
                raise ValueError(f"{path}:{lineno}: bad trial row: {exc}") from exc
    return out
