# Copyright (c) 2024 consult contributors
#
# SPDX-License-Identifier: Apache-2.0

from fractions import Fraction as F
import math

from hypothesis import given, settings
from hypothesis import strategies as st
import numpy as np
import pytest

from consult.errors import InfiniteStep, ParameterRange, ZeroProbabilitySignal
from consult.model import (Belief, Consultant, Decision, Payoffs, Problem,
                           STOP_L, STOP_R, Violation, expit, is_symmetric,
                           log_odds_update, logit, posterior,
                           posterior_after_repeats, posterior_many,
                           signal_prob, stopping_value, validate_problem)

from problems import consultants, estimator, mixed_pair, revealer

beliefs = st.floats(0.0, 1.0)
interior = st.floats(1e-6, 1 - 1e-6)


def codes(problem):
    return [v.code for v in validate_problem(problem)]


class TestValidate:

    def test_mixed_problem_is_valid(self, mixed):
        assert validate_problem(mixed) == []

    def test_row_sum(self):
        bad = Consultant('b', ('r', 'l'), (0.5, 0.4), (0.5, 0.5))
        assert codes(Problem(0.5, (bad,), 0.1)) == ['row-sum']

    def test_cost_above_max_payoff_is_advisory(self, mixed):
        out = validate_problem(mixed.with_cost(1.5))
        assert [(v.code, v.severity) for v in out] == \
            [('cost-range', Violation.ADVISORY)]

    def test_structural_violations(self):
        j = Consultant('a', ('r', 'r'), (0.5, 0.5), (1.0,))
        got = codes(Problem(1.5, (j, j), -0.1, Payoffs(0.5, 0.5)))
        for code in ('duplicate-id', 'signal-duplicate', 'row-length',
                     'prior-range', 'payoff-normalization',
                     'cost-nonpositive'):
            assert code in got

    def test_no_consultants(self):
        assert 'no-consultants' in codes(Problem(0.5, (), 0.1))

    def test_exact_rows(self, quiet):
        assert validate_problem(quiet) == []


class TestPosterior:

    def test_estimator(self):
        assert posterior(0.5, estimator(0.8), 'r').p == pytest.approx(0.8)

    def test_uninformative_signal_keeps_belief(self):
        j = Consultant('u', ('a', 'b'), (0.3, 0.7), (0.3, 0.7))
        assert posterior(0.123, j, 'a').p == 0.123

    def test_revealing_signal_is_exact(self):
        assert posterior(0.3, revealer(0.05), 'r').p == 1.0
        assert posterior(0.3, revealer(0.05), 'l').p == 0.0

    def test_impossible_signal(self):
        j = Consultant('z', ('a', 'b'), (0.0, 1.0), (0.0, 1.0))
        with pytest.raises(ZeroProbabilitySignal):
            posterior(0.5, j, 'a')
        with pytest.raises(ZeroProbabilitySignal):
            posterior(0.0, revealer(0.05), 'r')

    def test_unknown_signal(self):
        with pytest.raises(KeyError):
            posterior(0.5, estimator(0.8), 'x')

    def test_signal_prob(self):
        assert signal_prob(0.5, estimator(0.8), 'r') == pytest.approx(0.5)
        assert signal_prob(0.3, revealer(0.05), 'null') == \
            pytest.approx(0.95)
        assert signal_prob(0.2, estimator(0.8), 'r') == pytest.approx(0.32)

    def test_repeats(self):
        j = estimator(0.8)
        assert posterior_after_repeats(0.5, j, 'r', 2).p == \
            pytest.approx(16 / 17, abs=1e-12)
        assert posterior_after_repeats(0.5, j, 'r', 3).p == \
            pytest.approx(0.512 / 0.520, abs=1e-12)
        assert posterior_after_repeats(0.37, j, 'l', 0).p == 0.37
        with pytest.raises(ParameterRange):
            posterior_after_repeats(0.5, j, 'r', -1)

    @given(p=interior, n=st.integers(0, 12), s=st.sampled_from(['r', 'l']))
    @settings(max_examples=50)
    def test_repeats_match_iteration(self, p, n, s):
        j = estimator(0.7)
        q = p
        for _ in range(n):
            q = posterior(q, j, s).p
        assert posterior_after_repeats(p, j, s, n).p == \
            pytest.approx(q, abs=1e-12)

    def test_log_odds(self):
        j = estimator(0.8)
        b = log_odds_update(0.5, j, 'r')
        assert b.log_odds == pytest.approx(math.log(4))
        b = log_odds_update(b, j, 'r')
        assert b.log_odds == pytest.approx(2 * math.log(4))
        assert b.p == pytest.approx(16 / 17, abs=1e-12)
        with pytest.raises(InfiniteStep):
            log_odds_update(0.5, revealer(0.05), 'r')

    def test_log_odds_uninformative(self):
        j = Consultant('u', ('a', 'b'), (0.3, 0.7), (0.3, 0.7))
        assert log_odds_update(0.25, j, 'a').log_odds == \
            pytest.approx(logit(0.25))

    @given(p=interior, s=st.sampled_from(['r', 'l']))
    @settings(max_examples=50)
    def test_log_odds_agrees_with_bayes(self, p, s):
        j = estimator(0.65)
        assert log_odds_update(p, j, s).p == \
            pytest.approx(posterior(p, j, s).p, abs=1e-12)


class TestProperties:

    @given(p=beliefs, j=consultants('j'))
    @settings(max_examples=200)
    def test_martingale(self, p, j):
        total = 0.0
        mass = 0.0
        for s in j.signals:
            prob = signal_prob(p, j, s)
            mass += prob
            if prob > 0:
                total += prob * posterior(p, j, s).p
        assert mass == pytest.approx(1.0, abs=1e-12)
        assert total == pytest.approx(p, abs=1e-12)

    @given(p=interior, a=consultants('a'), b=consultants('b'),
           data=st.data())
    @settings(max_examples=100)
    def test_commutation(self, p, a, b, data):
        s1 = data.draw(st.sampled_from(a.signals))
        s2 = data.draw(st.sampled_from(b.signals))
        try:
            x = posterior(posterior(p, a, s1), b, s2).p
            y = posterior(posterior(p, b, s2), a, s1).p
        except ZeroProbabilitySignal:
            return
        assert x == pytest.approx(y, abs=1e-12)

    @given(j=consultants('j'))
    def test_boundary_absorption(self, j):
        for p in (0.0, 1.0):
            for s in j.signals:
                if signal_prob(p, j, s) > 0:
                    assert posterior(p, j, s).p == p

    @given(p=st.floats(1e-9, 1 - 1e-9))
    def test_log_odds_round_trip(self, p):
        assert Belief.from_log_odds(Belief(p).log_odds).p == \
            pytest.approx(p, abs=1e-12)

    def test_logit_edges(self):
        assert logit(0.0) == -math.inf
        assert logit(1.0) == math.inf
        assert expit(-800.0) == 0.0
        assert expit(800.0) == 1.0


class TestTypes:

    def test_belief_range(self):
        with pytest.raises(ParameterRange):
            Belief(1.5)

    def test_decision_labels(self):
        assert STOP_R.label == 'stop:R'
        assert Decision.consult('c1').label == 'consult:c1'
        for d in (STOP_R, STOP_L, Decision.consult('x')):
            assert Decision.parse(d.label) == d
        with pytest.raises(ValueError):
            Decision.parse('jump:R')

    def test_revealing(self):
        v = revealer(0.05)
        assert v.is_revealing()
        assert v.revealing_mass('r') == pytest.approx(0.05)
        assert not estimator(0.8).reveals_any()
        assert estimator(0.8).q('r', 'r') == pytest.approx(0.8)

    def test_symmetry(self):
        assert is_symmetric(estimator(0.8))
        assert not is_symmetric(Consultant('x', ('r', 'l'), (0.8, 0.2),
                                           (0.3, 0.7)))

    def test_stopping_value(self):
        assert stopping_value(0.3, Payoffs()) == pytest.approx(0.7)
        assert stopping_value(0.3, Payoffs(1.0, 0.2)) == pytest.approx(0.3)

    def test_with_helpers(self, mixed):
        assert mixed.with_cost(0.3).cost == 0.3
        assert mixed.with_prior(0.2).prior == 0.2
        assert mixed.with_consultants(mixed.consultants[:1]).ids == ('c1',)
        assert mixed.consultant('c2').is_revealing()
        with pytest.raises(KeyError):
            mixed.consultant('zz')

    def test_posterior_many_matches_scalar(self):
        j = mixed_pair().consultant('c2')
        grid = np.linspace(0, 1, 11)
        for s in j.signals:
            lr, ll = j.likelihoods(s)
            got = posterior_many(grid, lr, ll)
            for p, g in zip(grid, got):
                if signal_prob(p, j, s) > 0:
                    assert g == pytest.approx(posterior(p, j, s).p,
                                              abs=1e-15)

    def test_exact_likelihoods(self):
        j = estimator(F(4, 5))
        assert j.likelihood('r', 'r') == F(4, 5)
        assert j.likelihoods('l') == (0.2, 0.8)
