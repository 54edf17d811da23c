import math
from fractions import Fraction

import numpy as np
from django.test import SimpleTestCase

from core.stats import (
    DomainError,
    ModelParams,
    alloc_prob,
    chernoff_log_bound,
    estimate_search_space,
    lpc_gain,
    p_prime,
    p_succ,
)


class ClosedFormTests(SimpleTestCase):
    def test_alloc_prob(self):
        self.assertEqual(alloc_prob(1, 3), Fraction(4, 7))
        self.assertEqual(alloc_prob(3, 3), Fraction(1, 7))
        for T in range(2, 9):
            self.assertEqual(sum(alloc_prob(i, T) for i in range(1, T + 1)), 1)

    def test_p_prime_sums_higher_components(self):
        self.assertEqual(p_prime(1, 4), Fraction(7, 15))
        for T in range(2, 8):
            self.assertEqual(p_prime(T, T), 0)
            for i in range(1, T + 1):
                self.assertEqual(p_prime(i, T), sum((alloc_prob(j, T) for j in range(i + 1, T + 1)), Fraction(0)))

    def test_p_succ(self):
        p = Fraction(1, 1 << 12)
        self.assertEqual(p_succ(p, 4, 4), p)
        self.assertAlmostEqual(float(p_succ(p, 1, 4)), 1.14e-4, delta=0.01e-4)

    def test_p_succ_decreases_with_depth(self):
        p = Fraction(1, 1 << 12)
        rates = [p_succ(p, i, 6) for i in range(1, 6)]
        self.assertTrue(all(b < a for a, b in zip(rates, rates[1:])))
        self.assertGreater(p_succ(p, 6, 6), rates[-1])

    def test_lpc_gain_roughly_doubles_per_depth(self):
        p = Fraction(1, 1 << 22)
        self.assertAlmostEqual(lpc_gain(p, 3, 6) / lpc_gain(p, 2, 6), 2, delta=0.2)

    def test_model_params(self):
        model = ModelParams(Fraction(1, 64), 4, 2)
        self.assertEqual(model.lpc_rate, Fraction(1, 64))
        self.assertEqual(model.brute_force_rate, p_succ(Fraction(1, 64), 2, 4))

    def test_domain_errors(self):
        for args in ((0, 3), (4, 3), (1, 0)):
            with self.assertRaises(DomainError):
                alloc_prob(*args)
        with self.assertRaises(DomainError):
            p_succ(Fraction(3, 2), 1, 3)
        with self.assertRaises(DomainError):
            ModelParams(Fraction(0), 3, 1)


class EstimateTests(SimpleTestCase):
    def test_reproduces_published_exponents(self):
        for n, k, exponent in (
            (1_000_000_000, 1, 30),
            (650_000_000, 4, 27),
            (1_100_000_000, 33, 25),
            (565_000_000, 61, 23),
        ):
            with self.subTest(n=n, k=k):
                self.assertEqual(estimate_search_space(n, k).exponent, exponent)

    def test_reports_neighbouring_bounds(self):
        result = estimate_search_space(1_100_000_000, 33)
        self.assertEqual(sorted(result.diagnostics), [23, 24, 26, 27])
        self.assertFalse(result.lower_bound_only)

    def test_zero_successes_is_a_lower_bound(self):
        with self.assertLogs("core.stats", level="WARNING"):
            result = estimate_search_space(1000, 0)
        self.assertTrue(result.lower_bound_only)
        self.assertEqual(result.exponent, 10)

    def test_rejects_bad_counts(self):
        with self.assertRaises(DomainError):
            estimate_search_space(0, 0)
        with self.assertRaises(DomainError):
            estimate_search_space(10, 11)

    def test_bound_is_trivial_at_mean(self):
        self.assertAlmostEqual(chernoff_log_bound(1 << 20, 1 << 10, 10), 0.0)

    def test_synthetic_campaigns_are_recovered(self):
        rng = np.random.default_rng(17)
        n = 10**8
        for exponent in (14, 18, 20):
            k = int(rng.binomial(n, 2.0**-exponent))
            result = estimate_search_space(n, k)
            self.assertEqual(result.exponent, exponent)
            self.assertGreater(result.chernoff_log_bound, -8)
            self.assertLess(chernoff_log_bound(n, k, exponent + 4), math.log(1e-6))
            self.assertLess(chernoff_log_bound(n, k, exponent - 4), math.log(1e-6))
