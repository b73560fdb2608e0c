"""Keep rates, policy combinations, magnitude curves, stimuli, and OLS."""
import itertools
from decimal import Decimal

import numpy as np
import pytest

from moneylens.evaluation import (
    CHOICE_NONE,
    SECTIONS,
    StimulusQuote,
    TrialRecord,
    combination_keep_rate,
    keep_rate_by_magnitude,
    keep_rates,
    read_trial_log,
    select_stimuli,
    similarity_helpfulness_ols,
    write_trial_log,
)
from moneylens.policies import CONTEXTUAL, CROWDSOURCED, POLICIES, RULE_BASED

ALL = frozenset(POLICIES)


def trial(choice, participant="p0", quote="q0", section="us", focal="1e9", shown=ALL):
    return TrialRecord(
        participant_id=participant,
        quote_id=quote,
        section=section,
        focal_value=Decimal(focal),
        shown=frozenset(shown),
        choice=choice,
    )


def proportion_fixture():
    """100 trials with choices 24/17/24/35 across 10 participants."""
    choices = (
        [RULE_BASED] * 24 + [CROWDSOURCED] * 17 + [CONTEXTUAL] * 24 + [CHOICE_NONE] * 35
    )
    log = []
    for i, choice in enumerate(choices):
        log.append(
            trial(
                choice,
                participant=f"p{i % 10}",
                quote=f"q{i}",
                section=SECTIONS[i % len(SECTIONS)],
                focal=f"{1 + i % 9}e{6 + i % 8}",
            )
        )
    return log


class TestKeepRates:
    def test_paper_proportions_fixture(self):
        report = keep_rates(proportion_fixture())
        assert report.rates[RULE_BASED] == 0.24
        assert report.rates[CROWDSOURCED] == 0.17
        assert report.rates[CONTEXTUAL] == 0.24
        assert report.none_rate == 0.35

    def test_rates_sum_to_one_when_all_shown(self):
        report = keep_rates(proportion_fixture())
        total = sum(report.rates.values()) + report.none_rate
        assert total == pytest.approx(1.0, abs=1e-9)

    def test_partition_exact(self):
        report = keep_rates(proportion_fixture())
        assert sum(report.choice_counts.values()) + report.none_count == report.trial_count

    def test_all_none_log(self):
        report = keep_rates([trial(CHOICE_NONE, quote=f"q{i}") for i in range(5)])
        assert report.none_rate == 1.0
        assert all(rate == 0.0 for rate in report.rates.values())

    def test_single_trial(self):
        report = keep_rates([trial(RULE_BASED)])
        assert report.rates[RULE_BASED] == 1.0

    def test_rate_uses_shown_denominator(self):
        log = [
            trial(RULE_BASED, shown={RULE_BASED}),
            trial(CHOICE_NONE, shown={RULE_BASED}, quote="q1"),
            trial(CROWDSOURCED, shown={RULE_BASED, CROWDSOURCED}, quote="q2"),
        ]
        report = keep_rates(log)
        assert report.rates[RULE_BASED] == pytest.approx(1 / 3)
        assert report.rates[CROWDSOURCED] == 1.0
        assert CONTEXTUAL not in report.rates

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            keep_rates([])

    def test_choice_must_be_shown(self):
        with pytest.raises(ValueError):
            trial(CONTEXTUAL, shown={RULE_BASED})

    def test_per_participant_breakdown(self):
        log = [
            trial(RULE_BASED, participant="a"),
            trial(CHOICE_NONE, participant="a", quote="q1"),
            trial(CONTEXTUAL, participant="b"),
        ]
        report = keep_rates(log)
        assert report.per_participant["a"][RULE_BASED] == 0.5
        assert report.per_participant["a"][CHOICE_NONE] == 0.5
        assert report.per_participant["b"][CONTEXTUAL] == 1.0


class TestCombinations:
    def test_all_three_equals_one_minus_none(self):
        log = proportion_fixture()
        report = combination_keep_rate(log, POLICIES)
        none_rate = keep_rates(log).none_rate
        assert report.rate == pytest.approx(1.0 - none_rate, abs=1e-12)

    def test_empty_subset_rate_zero(self):
        report = combination_keep_rate(proportion_fixture(), ())
        assert report.rate == 0.0

    def test_single_policy_matches_direct_count(self):
        report = combination_keep_rate(proportion_fixture(), (RULE_BASED,))
        assert report.rate == 0.24

    def test_monotone_in_subset_inclusion(self):
        log = proportion_fixture()
        rates = {}
        for size in range(4):
            for subset in itertools.combinations(POLICIES, size):
                rates[frozenset(subset)] = combination_keep_rate(log, subset).rate
        for a, rate_a in rates.items():
            for b, rate_b in rates.items():
                if a <= b:
                    assert rate_a <= rate_b

    def test_cumulative_distribution_shape(self):
        log = proportion_fixture()
        report = combination_keep_rate(log, POLICIES)
        values = [v for v, _ in report.cumulative]
        fractions = [f for _, f in report.cumulative]
        assert values == sorted(values)
        assert fractions == sorted(fractions, reverse=True)
        assert fractions[0] == 1.0  # everyone is at or above the lowest mean

    def test_per_participant_means(self):
        log = [
            trial(RULE_BASED, participant="a"),
            trial(CHOICE_NONE, participant="a", quote="q1"),
            trial(CHOICE_NONE, participant="b"),
        ]
        report = combination_keep_rate(log, (RULE_BASED,))
        assert report.per_participant == {"a": 0.5, "b": 0.0}

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError):
            combination_keep_rate(proportion_fixture(), ("bogus",))


class TestMagnitudeCurve:
    def test_concentrated_choices_raise_high_bins(self):
        log = []
        i = 0
        for decade in range(6, 13):
            for _ in range(40):
                keep = decade >= 9
                log.append(
                    trial(
                        RULE_BASED if keep else CHOICE_NONE,
                        quote=f"q{i}",
                        focal=f"2e{decade}",
                    )
                )
                i += 1
        curve = keep_rate_by_magnitude(log, RULE_BASED)
        low = [curve[d] for d in range(6, 9)]
        high = [curve[d] for d in range(9, 13) if d in curve]
        assert max(low) < min(high)

    def test_near_flat_for_uniform_choices(self):
        rng = np.random.default_rng(0)
        log = []
        for i in range(8000):
            decade = 6 + i % 8
            choice = RULE_BASED if rng.random() < 0.3 else CHOICE_NONE
            log.append(trial(choice, quote=f"q{i}", focal=f"1e{decade}"))
        curve = keep_rate_by_magnitude(log, RULE_BASED)
        assert all(abs(rate - 0.3) < 0.05 for rate in curve.values())

    def test_single_magnitude_gives_one_bin(self):
        log = [trial(RULE_BASED, focal="5e9"), trial(CHOICE_NONE, quote="q1", focal="6e9")]
        curve = keep_rate_by_magnitude(log, RULE_BASED)
        assert list(curve) == [9]
        assert curve[9] == 0.5

    def test_empty_bins_absent_not_zero(self):
        log = [trial(RULE_BASED, focal="5e9")]
        curve = keep_rate_by_magnitude(log, RULE_BASED)
        assert 8 not in curve

    def test_policy_not_shown_excluded_from_denominator(self):
        log = [
            trial(RULE_BASED, shown={RULE_BASED}, focal="1e9"),
            trial(CHOICE_NONE, shown={CROWDSOURCED}, quote="q1", focal="1e9"),
        ]
        curve = keep_rate_by_magnitude(log, RULE_BASED)
        assert curve[9] == 1.0


class TestSelectStimuli:
    def quotes_for(self, per_bin_count):
        quotes, scores = [], {}
        n = 0
        for section in SECTIONS:
            for decade in range(6, 14):
                for j in range(per_bin_count):
                    qid = f"q{n:04d}"
                    quotes.append(
                        StimulusQuote(
                            quote_id=qid,
                            text=f"quote {qid}",
                            section=section,
                            focal_value=Decimal(f"{j + 1}e{decade}"),
                        )
                    )
                    scores[qid] = j / 10
                    n += 1
        return quotes, scores

    def test_full_bins_yield_192(self):
        quotes, scores = self.quotes_for(4)
        selected = select_stimuli(quotes, per_bin=3, similarity_scores=scores)
        assert len(selected) == 64
        assert sum(len(v) for v in selected.values()) == 192

    def test_identity_when_one_per_bin(self):
        quotes, scores = self.quotes_for(1)
        selected = select_stimuli(quotes, per_bin=1, similarity_scores=scores)
        assert sum(len(v) for v in selected.values()) == len(quotes)

    def test_highest_similarity_wins(self):
        quotes, scores = self.quotes_for(4)
        selected = select_stimuli(quotes, per_bin=2, similarity_scores=scores)
        for chosen in selected.values():
            assert [scores[q.quote_id] for q in chosen] == sorted(
                [scores[q.quote_id] for q in chosen], reverse=True
            )
            assert scores[chosen[0].quote_id] == 0.3  # j=3 scores highest

    def test_tie_broken_by_earlier_quote_id(self):
        quotes = [
            StimulusQuote("q2", "b", "us", Decimal("1e7")),
            StimulusQuote("q1", "a", "us", Decimal("2e7")),
        ]
        scores = {"q1": 0.5, "q2": 0.5}
        selected = select_stimuli(quotes, per_bin=1, similarity_scores=scores)
        assert selected[("us", 7)][0].quote_id == "q1"

    def test_out_of_range_decades_ignored(self):
        quotes = [StimulusQuote("q1", "a", "us", Decimal("1e5"))]
        assert select_stimuli(quotes, 1, {"q1": 0.5}) == {}

    def test_empty_bins_allowed(self):
        quotes = [StimulusQuote("q1", "a", "us", Decimal("1e7"))]
        selected = select_stimuli(quotes, 3, {"q1": 0.5})
        assert list(selected) == [("us", 7)]


class TestSimilarityHelpfulnessOls:
    def test_exact_line(self):
        pairs = [(x, 0.5 + 2 * x) for x in (0.0, 0.25, 0.5, 0.75)]
        intercept, slope, r2 = similarity_helpfulness_ols(pairs)
        assert intercept == pytest.approx(0.5)
        assert slope == pytest.approx(2.0)
        assert r2 == pytest.approx(1.0)

    def test_noisy_line_against_closed_form_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, size=50)
        y = 0.71 + 1.66 * x + 0.2 * rng.normal(size=50)
        intercept, slope, r2 = similarity_helpfulness_ols(list(zip(x, y)))
        # closed-form oracle via numpy lstsq on the design matrix
        design = np.column_stack([np.ones_like(x), x])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        assert intercept == pytest.approx(beta[0], abs=1e-10)
        assert slope == pytest.approx(beta[1], abs=1e-10)
        # slope standard error
        resid = y - design @ beta
        sigma2 = resid @ resid / (len(x) - 2)
        se = np.sqrt(sigma2 / np.sum((x - x.mean()) ** 2))
        assert abs(slope - 1.66) < 3 * se

    def test_too_few_pairs(self):
        with pytest.raises(ValueError):
            similarity_helpfulness_ols([(0.1, 1.0), (0.2, 2.0)])

    def test_degenerate_variance(self):
        with pytest.raises(ValueError):
            similarity_helpfulness_ols([(0.5, 1.0), (0.5, 2.0), (0.5, 3.0)])


class TestTrialLogFile:
    def test_round_trip(self, tmp_path):
        log = proportion_fixture()
        path = tmp_path / "log.csv"
        write_trial_log(path, log)
        assert read_trial_log(path) == log

    def test_extra_columns_ignored(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text(
            "participant_id,quote_id,section,focal_value,shown,choice,timestamp,session_id\n"
            'p1,q1,us,1000000000,"rule_based,crowdsourced,contextual",none,2024-01-01T00:00:00Z,s1\n'
        )
        log = read_trial_log(path)
        assert log[0].choice == CHOICE_NONE
        assert log[0].shown == ALL

    def test_bad_row_reports_line(self, tmp_path):
        path = tmp_path / "log.csv"
        path.write_text(
            "participant_id,quote_id,section,focal_value,shown,choice\n"
            "p1,q1,us,1e9,rule_based,contextual\n"
        )
        with pytest.raises(ValueError, match=":2"):
            read_trial_log(path)

    def test_determinism(self, tmp_path):
        log = proportion_fixture()
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trial_log(a, log)
        write_trial_log(b, log)
        assert a.read_bytes() == b.read_bytes()
        assert keep_rates(read_trial_log(a)).to_dict() == keep_rates(log).to_dict()
