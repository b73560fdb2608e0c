"""Policy formatting and selection: rounding, templates, lookups, ranking."""
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moneylens.crowd import CrowdCorpus, CrowdReference
from moneylens.embedding import EmbeddingIndex, HashedNgramProvider
from moneylens.parsing import extract_measurements
from moneylens.policies import (
    CONTEXTUAL,
    CROWDSOURCED,
    POLICIES,
    PolicyEngines,
    Perspective,
    RULE_BASED,
    SuggestionBundle,
    contextual_rank,
    crowdsourced_lookup,
    format_dollar_amount,
    format_multiplier,
    per_capita,
    round_sig,
    suggest_all,
)
from moneylens.ranking import ClippedLinearRanker, feature_names
from moneylens.references import ReferenceCorpus, ReferenceObject, content_id

import numpy as np

positive_decimals = st.decimals(
    min_value=Decimal("1e-15"),
    max_value=Decimal("1e18"),
    allow_nan=False,
    allow_infinity=False,
    places=6,
).filter(lambda d: d > 0)


def ref(phrase, value, category="Dictionary", source="dictionary"):
    v = Decimal(value)
    return ReferenceObject(
        id=content_id(source, phrase, v), phrase=phrase, category=category, value=v, source=source
    )


class TestRoundSig:
    @pytest.mark.parametrize(
        "x,k,expected",
        [
            ("1015.38", 2, "1000"),
            ("0.9231", 2, "0.92"),
            ("596.9", 2, "600"),
            ("7", 1, "7"),
            ("0.3077", 2, "0.31"),
            ("1.94", 1, "2"),
            ("0.96", 1, "1"),
            ("0.94", 1, "0.9"),
            ("1.4999", 1, "1"),
            ("1.5", 1, "2"),
            ("135", 2, "140"),  # half away from zero
            ("125", 2, "130"),
            ("996", 2, "1000"),
        ],
    )
    def test_hand_computed(self, x, k, expected):
        assert round_sig(Decimal(x), k) == Decimal(expected)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            round_sig(Decimal(0), 2)
        with pytest.raises(ValueError):
            round_sig(Decimal(-1), 2)
        with pytest.raises(ValueError):
            round_sig(Decimal(5), 0)

    @given(x=positive_decimals, k=st.integers(min_value=1, max_value=6))
    def test_idempotent(self, x, k):
        once = round_sig(x, k)
        assert round_sig(once, k) == once

    @given(x=positive_decimals, k=st.integers(min_value=1, max_value=6))
    def test_scale_equivariant(self, x, k):
        assert round_sig(10 * x, k) == 10 * round_sig(x, k)

    @given(x=positive_decimals, k=st.integers(min_value=1, max_value=6))
    def test_at_most_k_significant_digits(self, x, k):
        rounded = round_sig(x, k).normalize()
        assert len(rounded.as_tuple().digits) <= k


class TestPerCapita:
    @pytest.mark.parametrize(
        "value,expected",
        [
            ("330e9", "about $1,000 per person in the US"),
            ("300e6", "about $0.92 per person in the US"),
            ("194e9", "about $600 per person in the US"),
            ("325e6", "about $1.00 per person in the US"),
            ("100e6", "about $0.31 per person in the US"),
            ("1e9", "about $3.10 per person in the US"),
            ("650e6", "about $2 per person in the US"),
            ("1e6", "about $0.0031 per person in the US"),
        ],
    )
    def test_phrases(self, value, expected):
        assert per_capita(Decimal(value)).phrase == expected

    def test_custom_population_and_suffix(self):
        p = per_capita(Decimal("83e9"), population=83_000_000, suffix="in Germany")
        assert p.phrase == "about $1,000 per person in Germany"

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            per_capita(Decimal(0))
        with pytest.raises(ValueError):
            per_capita(Decimal(10), population=0)

    def test_perspective_shape(self):
        p = per_capita(Decimal("330e9"))
        assert p.policy == RULE_BASED
        assert p.per_capita_amount == Decimal("1000")
        assert p.reference_id is None

    def test_runs_fast(self):
        import time

        start = time.perf_counter()
        for _ in range(100):
            per_capita(Decimal("330e9"))
        per_call = (time.perf_counter() - start) / 100
        assert per_call < 1e-3


class TestFormatDollarAmount:
    @pytest.mark.parametrize(
        "amount,expected",
        [
            ("1000", "1,000"),
            ("600", "600"),
            ("1", "1.00"),
            ("0.92", "0.92"),
            ("0.9", "0.90"),
            ("0.0031", "0.0031"),
            ("3.1", "3.10"),
            ("1200000", "1,200,000"),
        ],
    )
    def test_cases(self, amount, expected):
        assert format_dollar_amount(Decimal(amount)) == expected


class TestFormatMultiplier:
    def test_same_size(self):
        jet = ref("the cost of a private high-end jet", "1e8")
        m, phrase = format_multiplier(Decimal("1e8"), jet)
        assert m == 1
        assert phrase == "about the same size as the cost of a private high-end jet"

    def test_percent_small(self):
        military = ref("the United States military budget", "7e11")
        m, phrase = format_multiplier(Decimal("1e8"), military)
        assert phrase == "about 0.01% of the United States military budget"
        assert m == Decimal("0.0001")

    def test_percent_four(self):
        budget = ref("the United States Federal budget in 2020", "4.79e12")
        _, phrase = format_multiplier(Decimal("194e9"), budget)
        assert phrase == "about 4% of the United States Federal budget in 2020"

    def test_times_two(self):
        gates = ref("the value of the net worth of Bill Gates", "9.7e10")
        m, phrase = format_multiplier(Decimal("194e9"), gates)
        assert m == 2
        assert phrase == "about 2 times the value of the net worth of Bill Gates"

    def test_large_multiplier_grouped(self):
        cheap = ref("the cost of a paperback", "10")
        _, phrase = format_multiplier(Decimal("2e7"), cheap)
        assert phrase == "about 2,000,000 times the cost of a paperback"

    def test_fractional_percent(self):
        drought = ref("the cost of 1988 US drought", "7.5e10")
        _, phrase = format_multiplier(Decimal("3e8"), drought)
        assert phrase == "about 0.4% of the cost of 1988 US drought"

    def test_rejects_nonpositive_focal(self):
        with pytest.raises(ValueError):
            format_multiplier(Decimal(0), ref("x", "10"))

    @given(
        focal=positive_decimals,
        value=positive_decimals,
    )
    @settings(max_examples=300)
    def test_trichotomy(self, focal, value):
        reference = ref("the probe object", value)
        multiplier, phrase = format_multiplier(focal, reference)
        starts = (
            phrase.startswith("about the same size as "),
            phrase.startswith("about ") and " times " in phrase,
            phrase.startswith("about ") and "% of " in phrase,
        )
        assert sum(starts) == 1
        if multiplier == 1:
            assert starts[0]
        elif multiplier > 1:
            assert starts[1]
        else:
            assert starts[2]


def crowd_corpus(*entries):
    return CrowdCorpus(
        CrowdReference(
            id=f"c{i}", phrase=phrase, value=Decimal(value), total_rating=rating
        )
        for i, (phrase, value, rating) in enumerate(entries)
    )


class TestCrowdsourcedLookup:
    def test_exact_anchor_match(self):
        corpus = crowd_corpus(("the cost of a private high-end jet", "1e8", 4.2))
        p = crowdsourced_lookup(Decimal("1e8"), corpus)
        assert p.phrase == "about the same size as the cost of a private high-end jet"
        assert p.policy == CROWDSOURCED

    def test_nearest_in_log_space(self):
        corpus = crowd_corpus(
            ("the cost of a private high-end jet", "1e8", 4.2),
            ("the value of the net worth of Bill Gates", "1e11", 3.9),
        )
        p = crowdsourced_lookup(Decimal("194e9"), corpus)
        assert p.reference_id == "c1"
        assert p.phrase == "about 2 times the value of the net worth of Bill Gates"

    def test_exact_log_tie_broken_by_rating(self):
        # 1e7 sits exactly between 1e6 and 1e8 in log space (ratio 10 both ways).
        corpus = crowd_corpus(
            ("the low anchor", "1e6", 3.0),
            ("the high anchor", "1e8", 4.5),
        )
        p = crowdsourced_lookup(Decimal("1e7"), corpus)
        assert p.reference_id == "c1"  # higher rating wins

    def test_tie_on_rating_broken_by_id(self):
        corpus = crowd_corpus(
            ("the low anchor", "1e6", 4.0),
            ("the high anchor", "1e8", 4.0),
        )
        p = crowdsourced_lookup(Decimal("1e7"), corpus)
        assert p.reference_id == "c0"

    def test_empty_corpus_gives_none(self):
        assert crowdsourced_lookup(Decimal(100), CrowdCorpus([])) is None
        assert crowdsourced_lookup(Decimal(100), None) is None


def make_contextual_fixture():
    provider = HashedNgramProvider(dims=256)
    corpus = ReferenceCorpus(
        [
            ref("the total U.S. baseball salaries for all teams", "2.5e9"),
            ref("the nominal GDP of the United States", "2.1e13", category="Nominal GDP", source="knowledge-base"),
        ]
    )
    index = EmbeddingIndex.build(corpus, provider)
    familiarity = {o.id: 5.0 for o in corpus.objects}
    names = feature_names("V2")
    model = ClippedLinearRanker(variant="V2")
    model.coef_ = np.zeros(len(names))
    model.coef_[0] = 1.0  # similarity only
    model.intercept_ = 2.0
    model.feature_means_ = np.zeros(len(names))
    model.feature_scales_ = np.ones(len(names))
    model.n_features_in_ = len(names)
    return provider, corpus, index, familiarity, model


class TestContextualRank:
    SENTENCE = "The Cincinnati Reds spent over $100 million on salaries this year."

    def test_topical_reference_wins(self):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        ranked = contextual_rank(
            self.SENTENCE, Decimal("1e8"), corpus, index, familiarity, model, provider
        )
        assert len(ranked) == 1
        p = ranked[0]
        assert p.policy == CONTEXTUAL
        assert p.phrase == "about 4% of the total U.S. baseball salaries for all teams"
        assert p.score is not None

    def test_prefilter_noop_when_k_covers_corpus(self):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        small = contextual_rank(
            self.SENTENCE, Decimal("1e8"), corpus, index, familiarity, model, provider,
            prefilter_k=len(corpus),
        )
        everything = contextual_rank(
            self.SENTENCE, Decimal("1e8"), corpus, index, familiarity, model, provider,
            prefilter_k=0,
        )
        assert [p.reference_id for p in small] == [p.reference_id for p in everything]

    def test_top_n_distinct_references(self):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        ranked = contextual_rank(
            self.SENTENCE, Decimal("1e8"), corpus, index, familiarity, model, provider,
            top_n=3,
        )
        ids = [p.reference_id for p in ranked]
        assert len(ids) == 2  # corpus only holds two objects
        assert len(set(ids)) == len(ids)

    def test_empty_corpus_rejected(self):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        with pytest.raises(ValueError, match="non-empty"):
            contextual_rank(
                "text", Decimal(10), ReferenceCorpus([]), index, familiarity, model, provider
            )

    def test_provider_mismatch_rejected(self):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        other = HashedNgramProvider(dims=16)
        with pytest.raises(ValueError, match="provider mismatch"):
            contextual_rank(
                "text", Decimal(10), corpus, index, familiarity, model, other
            )


class TestSuggestAll:
    def engines(self, with_crowd=True, with_contextual=True):
        provider, corpus, index, familiarity, model = make_contextual_fixture()
        crowd = (
            crowd_corpus(("the cost of a private high-end jet", "1e8", 4.2))
            if with_crowd
            else None
        )
        return PolicyEngines(
            crowd_corpus=crowd,
            corpus=corpus if with_contextual else None,
            index=index if with_contextual else None,
            familiarity=familiarity if with_contextual else None,
            ranker=model if with_contextual else None,
            provider=provider,
        )

    def measurement(self, text="The team spent $100 million on salaries."):
        return extract_measurements(text)[0]

    def test_three_policies_in_fixed_order(self):
        bundle, failures = suggest_all(
            "The team spent $100 million on salaries.", self.measurement(), self.engines()
        )
        assert [p.policy for p in bundle.options] == list(POLICIES)
        assert failures == []

    def test_missing_crowd_corpus_gives_two(self):
        bundle, failures = suggest_all(
            "The team spent $100 million on salaries.",
            self.measurement(),
            self.engines(with_crowd=False),
        )
        assert [p.policy for p in bundle.options] == [RULE_BASED, CONTEXTUAL]
        assert failures == []

    def test_zero_measurement_rejected(self):
        m = extract_measurements("a $0 payout")[0]
        with pytest.raises(ValueError):
            suggest_all("a $0 payout", m, self.engines())

    def test_one_failing_policy_does_not_void_others(self):
        engines = self.engines()
        engines.ranker = ClippedLinearRanker(variant="V2")  # unfitted -> raises
        bundle, failures = suggest_all(
            "The team spent $100 million on salaries.", self.measurement(), engines
        )
        assert [p.policy for p in bundle.options] == [RULE_BASED, CROWDSOURCED]
        assert [f.policy for f in failures] == [CONTEXTUAL]
        assert failures[0].kind == "error"

    def test_bundle_rejects_out_of_order_options(self):
        m = self.measurement()
        rule = per_capita(m.value)
        crowd = crowdsourced_lookup(m.value, crowd_corpus(("a jet", "1e8", 4.0)))
        with pytest.raises(ValueError):
            SuggestionBundle(measurement=m, options=(crowd, rule))

    def test_bundle_rejects_duplicate_policy(self):
        m = self.measurement()
        rule = per_capita(m.value)
        with pytest.raises(ValueError):
            SuggestionBundle(measurement=m, options=(rule, rule))


class TestPerspectiveInvariants:
    def test_rule_based_requires_amount(self):
        with pytest.raises(ValueError):
            Perspective(policy=RULE_BASED, phrase="x")

    def test_reference_policies_require_reference(self):
        with pytest.raises(ValueError):
            Perspective(policy=CROWDSOURCED, phrase="x")
        with pytest.raises(ValueError):
            Perspective(policy=CONTEXTUAL, phrase="x", reference_id="r")
