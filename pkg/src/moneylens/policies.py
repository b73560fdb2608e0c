"""The three suggestion policies and their display formatting.

* rule_based: fixed per-capita division by the US population, rounded to two
  significant digits.
* crowdsourced: nearest (in log space) verified crowd reference.
* contextual: candidates prefiltered by semantic similarity, then ranked by
  the learned helpfulness model.

All dollar arithmetic is exact decimal; floats appear only inside model
scoring. Formatting is deterministic so downstream snapshots are stable.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, localcontext
from fractions import Fraction
from typing import Optional, Protocol, Sequence

from .embedding import EmbeddingIndex, EmbeddingProvider, top_k_similar
from .parsing import Measurement
from .ranking import ClippedLinearRanker, featurize
from .references import ReferenceCorpus

__all__ = [
    "RULE_BASED",
    "CROWDSOURCED",
    "CONTEXTUAL",
    "POLICIES",
    "US_POPULATION",
    "PER_CAPITA_SUFFIX",
    "Perspective",
    "SuggestionBundle",
    "PolicyFailure",
    "round_sig",
    "per_capita",
    "format_multiplier",
    "crowdsourced_lookup",
    "contextual_rank",
    "suggest_all",
]

RULE_BASED = "rule_based"
CROWDSOURCED = "crowdsourced"
CONTEXTUAL = "contextual"
POLICIES = (RULE_BASED, CROWDSOURCED, CONTEXTUAL)

US_POPULATION = 325_000_000
PER_CAPITA_SUFFIX = "in the US"

_QUOTIENT_PRECISION = 50


class ComparableReference(Protocol):
    """Anything with a display phrase and a positive USD value."""

    id: str
    phrase: str
    value: Decimal


@dataclass(frozen=True)
class Perspective:
    """One formatted re-expression of a dollar amount."""

    policy: str
    phrase: str
    reference_id: Optional[str] = None
    multiplier: Optional[Decimal] = None
    per_capita_amount: Optional[Decimal] = None
    score: Optional[float] = None

    def __post_init__(self) -> None:
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.policy == RULE_BASED:
            if self.per_capita_amount is None or self.reference_id is not None:
                raise ValueError("rule_based perspectives carry an amount and no reference")
        else:
            if self.reference_id is None or self.multiplier is None:
                raise ValueError(f"{self.policy} perspectives carry a reference and multiplier")


@dataclass(frozen=True)
class SuggestionBundle:
    """Up to one perspective per policy, in fixed policy order."""

    measurement: Measurement
    options: tuple[Perspective, ...]

    def __post_init__(self) -> None:
        policies = [p.policy for p in self.options]
        if len(set(policies)) != len(policies):
            raise ValueError("bundle holds at most one perspective per policy")
        order = [p for p in POLICIES if p in policies]
        if policies != order:
            raise ValueError(f"options must follow policy order {POLICIES}")


@dataclass(frozen=True)
class PolicyFailure:
    """A policy that produced no option, and why."""

    policy: str
    kind: str  # "unavailable" (transport) or "error" (anything else)
    message: str

    def __str__(self) -> str:
        return f"{self.policy}: {self.message}"


def round_sig(x: Decimal, k: int) -> Decimal:
    """Round positive ``x`` to ``k`` significant digits, half away from zero.

    Exact decimal arithmetic throughout; idempotent and scale-equivariant
    (round_sig(10x, k) == 10 * round_sig(x, k)).
    """
    x = Decimal(x)
    if x <= 0:
        raise ValueError(f"round_sig requires a positive value, got {x}")
    if k < 1:
        raise ValueError(f"significant digits must be >= 1, got {k}")
    with localcontext() as ctx:
        ctx.prec = k + 2
        quantum = Decimal(1).scaleb(x.adjusted() - k + 1)
        return x.quantize(quantum, rounding=ROUND_HALF_UP)


def _plain(d: Decimal) -> str:
    """Fixed-point rendering without exponent or spurious trailing zeros."""
    s = format(d, "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s


def format_dollar_amount(amount: Decimal) -> str:
    """Comma-grouped amount for display inside a dollar phrase.

    Whole-dollar amounts above $1 drop the cents ("1,000", "600"); exactly $1
    and sub-dollar amounts keep at least two decimals ("1.00", "0.92",
    "0.90"), growing only when the value genuinely needs more ("0.0031").
    """
    if amount <= 0:
        raise ValueError("display amounts must be positive")
    if amount > 1 and amount == amount.to_integral_value():
        return f"{int(amount):,}"
    normalized = amount.normalize()
    if normalized.as_tuple().exponent >= -2:
        return f"{normalized.quantize(Decimal('0.01')):,f}"
    return f"{normalized:,f}"


def per_capita(
    value: Decimal,
    population: int = US_POPULATION,
    suffix: str = PER_CAPITA_SUFFIX,
) -> Perspective:
    """Per-person re-expression, rounded to two significant digits."""
    value = Decimal(value)
    if value <= 0:
        raise ValueError("per-capita requires a positive amount")
    if population <= 0:
        raise ValueError("population must be positive")
    with localcontext() as ctx:
        ctx.prec = _QUOTIENT_PRECISION
        amount = round_sig(value / Decimal(population), 2)
    phrase = f"about ${format_dollar_amount(amount)} per person {suffix}"
    return Perspective(policy=RULE_BASED, phrase=phrase, per_capita_amount=amount)


def format_multiplier(focal: Decimal, reference: ComparableReference) -> tuple[Decimal, str]:
    """Rounded multiplier and comparison phrase for ``focal`` vs. a reference.

    The multiplier focal/value is rounded to one significant digit; the
    rounded value picks exactly one template: equality, a times-multiple, or
    a percentage (itself rounded to one significant digit of the raw ratio).
    The reference phrase is used verbatim.
    """
    focal = Decimal(focal)
    if focal <= 0:
        raise ValueError("focal value must be positive")
    if reference.value <= 0:
        raise ValueError("reference value must be positive")
    with localcontext() as ctx:
        ctx.prec = _QUOTIENT_PRECISION
        ratio = focal / Decimal(reference.value)
        multiplier = round_sig(ratio, 1)
        if multiplier == 1:
            phrase = f"about the same size as {reference.phrase}"
        elif multiplier > 1:
            if multiplier == multiplier.to_integral_value():
                shown = f"{int(multiplier):,}"
            else:
                shown = _plain(multiplier)
            phrase = f"about {shown} times {reference.phrase}"
        else:
            percent = round_sig(ratio * 100, 1)
            phrase = f"about {_plain(percent)}% of {reference.phrase}"
    return multiplier, phrase


def _log_distance(value: Decimal, anchor: Decimal) -> Fraction:
    # max(v/a, a/v) is monotone in |ln(v/a)| and exact, so ties are exact too.
    v, a = Fraction(value), Fraction(anchor)
    return max(v, a) / min(v, a)


def crowdsourced_lookup(value: Decimal, crowd_corpus) -> Optional[Perspective]:
    """Nearest verified crowd reference in log space, or None when empty.

    Ties break toward the higher total rating, then the lower id.
    """
    value = Decimal(value)
    if value <= 0:
        raise ValueError("lookup requires a positive amount")
    if crowd_corpus is None or len(crowd_corpus) == 0:
        return None
    best = min(
        crowd_corpus,
        key=lambda obj: (_log_distance(value, obj.value), -obj.total_rating, obj.id),
    )
    multiplier, phrase = format_multiplier(value, best)
    return Perspective(
        policy=CROWDSOURCED, phrase=phrase, reference_id=best.id, multiplier=multiplier
    )


def contextual_rank(
    sentence: str,
    focal: Decimal,
    corpus: ReferenceCorpus,
    index: EmbeddingIndex,
    familiarity: dict[str, float],
    model: ClippedLinearRanker,
    provider: EmbeddingProvider,
    prefilter_k: int = 50,
    top_n: int = 1,
) -> list[Perspective]:
    """Highest-predicted-helpfulness references for a sentence and amount.

    Candidates are the ``prefilter_k`` most similar references (0 means all);
    each is scored by the model and the top ``top_n`` are phrased. Ties break
    by similarity, then id.
    """
    if len(corpus) == 0:
        raise ValueError("contextual ranking requires a non-empty corpus")
    if provider.name != index.provider_name:
        raise ValueError(
            f"provider mismatch: sentence from {provider.name!r}, "
            f"index from {index.provider_name!r}"
        )
    query = provider.embed(sentence)
    k = len(corpus) if prefilter_k <= 0 else min(prefilter_k, len(corpus))
    candidates = top_k_similar(query, corpus, index, k, provider_name=provider.name)

    scored = []
    for obj, similarity in candidates:
        fv = featurize(query, obj, focal, model.variant, index, familiarity)
        scored.append((model.predict_one(fv), similarity, obj))
    scored.sort(key=lambda item: (-item[0], -item[1], item[2].id))

    out = []
    for score, _, obj in scored[:top_n]:
        multiplier, phrase = format_multiplier(focal, obj)
        out.append(
            Perspective(
                policy=CONTEXTUAL,
                phrase=phrase,
                reference_id=obj.id,
                multiplier=multiplier,
                score=score,
            )
        )
    return out


@dataclass
class PolicyEngines:
    """Everything suggest_all needs, grouped; absent pieces disable policies."""

    population: int = US_POPULATION
    suffix: str = PER_CAPITA_SUFFIX
    crowd_corpus: Optional[object] = None
    corpus: Optional[ReferenceCorpus] = None
    index: Optional[EmbeddingIndex] = None
    familiarity: Optional[dict[str, float]] = None
    ranker: Optional[ClippedLinearRanker] = None
    provider: Optional[EmbeddingProvider] = None
    prefilter_k: int = 50
    enabled: Sequence[str] = POLICIES

    def contextual_ready(self) -> bool:
        return all(
            x is not None
            for x in (self.corpus, self.index, self.familiarity, self.ranker, self.provider)
        )


def suggest_all(
    sentence: str, measurement: Measurement, engines: PolicyEngines
) -> tuple[SuggestionBundle, list[PolicyFailure]]:
    """Build the bundle for one measurement; a failing policy is skipped.

    Failures come back alongside the bundle so callers can surface warnings
    without losing the options that did work.
    """
    if measurement.value <= 0:
        raise ValueError("cannot suggest perspectives for a zero amount")
    options: list[Perspective] = []
    failures: list[PolicyFailure] = []

    def attempt(policy, fn):
        if policy not in engines.enabled:
            return
        try:
            result = fn()
        except Exception as exc:  # noqa: BLE001 - isolate policies from each other
            kind = "unavailable" if _is_unavailable(exc) else "error"
            failures.append(PolicyFailure(policy, kind, str(exc)))
            return
        if result is not None:
            options.append(result)

    attempt(RULE_BASED, lambda: per_capita(measurement.value, engines.population, engines.suffix))
    attempt(CROWDSOURCED, lambda: crowdsourced_lookup(measurement.value, engines.crowd_corpus))

    def contextual():
        if not engines.contextual_ready():
            return None
        ranked = contextual_rank(
            sentence,
            measurement.value,
            engines.corpus,
            engines.index,
            engines.familiarity,
            engines.ranker,
            engines.provider,
            prefilter_k=engines.prefilter_k,
            top_n=1,
        )
        return ranked[0] if ranked else None

    attempt(CONTEXTUAL, contextual)
    return SuggestionBundle(measurement=measurement, options=tuple(options)), failures


def _is_unavailable(exc: Exception) -> bool:
    from .embedding import ProviderUnavailableError

    return isinstance(exc, ProviderUnavailableError)
