"""Model tests: MGFs, spectral quantities, samplers, special functions.

Independent oracles used here: scipy quadrature and special functions,
exhaustive enumeration of short chain paths, and Monte Carlo with explicit
standard-error budgets.
"""

import itertools
import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special

from winflow.models import (
    DeterministicService,
    ExponentialArrivals,
    ExponentialVbrService,
    LeftoverService,
    MarkovModulated2Service,
    MmooService,
    erlang_quantile,
    leftover_two_state,
    mmoo_as_two_state,
    regularized_lower_gamma,
)

MMOO = MmooService(p00=0.2, p11=0.9, peak=1.125)


class TestExponentialVbr:
    def test_mgf_closed_form(self):
        m = ExponentialVbrService(1.0)
        assert m.mgf_increment(-1.0) == pytest.approx(0.5, abs=1e-15)

    def test_mgf_divergence_is_a_value(self):
        m = ExponentialVbrService(1.0)
        assert m.mgf_increment(1.0) == math.inf
        assert m.mgf_increment(2.0) == math.inf
        assert math.isfinite(m.mgf_increment(0.999))

    def test_effective_capacity_closed_form(self):
        m = ExponentialVbrService(1.0)
        for theta in (0.3, 1.0, 7.0):
            assert m.effective_capacity(theta) == pytest.approx(
                math.log1p(theta) / theta, abs=1e-15
            )
        assert m.effective_capacity(1.0) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_effective_capacity_small_theta_limit_is_mean_rate(self):
        for model in (
            ExponentialVbrService(1.0),
            DeterministicService(2.5),
            MMOO,
        ):
            assert model.effective_capacity(1e-8) == pytest.approx(
                model.mean_rate, rel=1e-4
            )

    def test_effective_capacity_requires_positive_theta(self):
        with pytest.raises(ValueError):
            ExponentialVbrService(1.0).effective_capacity(0.0)

    @pytest.mark.parametrize("theta,cap", [(-0.7, 0.35), (-2.0, 1.5), (0.4, 0.8)])
    def test_censored_mgf_against_quadrature(self, theta, cap):
        m = ExponentialVbrService(1.3)
        # the integrand has a kink at the cap; tell the quadrature about it
        ref = scipy.integrate.quad(
            lambda x: math.exp(theta * min(x, cap)) * math.exp(-x / 1.3) / 1.3,
            0.0,
            250.0,
            points=[cap],
            limit=400,
        )[0]
        assert m.censored_mgf(theta, cap) == pytest.approx(ref, rel=1e-9)

    def test_censored_mgf_removable_singularity(self):
        m = ExponentialVbrService(2.0)
        at = m.censored_mgf(0.5, 1.0)
        near = m.censored_mgf(0.5 + 1e-9, 1.0)
        assert at == pytest.approx(1.0 + 1.0 / 2.0, rel=1e-9)
        assert near == pytest.approx(at, rel=1e-6)

    def test_sample_mean_matches_rate(self):
        path = ExponentialVbrService(1.0).sample_path(seed=42, T=1_000_000)
        assert np.mean(path) == pytest.approx(1.0, rel=5e-3)

    def test_sampling_is_deterministic(self):
        m = ExponentialVbrService(1.0)
        a = m.sample_path(seed=7, T=500)
        b = m.sample_path(seed=7, T=500)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, m.sample_path(seed=8, T=500))


class TestDeterministic:
    def test_mgf_and_censoring(self):
        m = DeterministicService(2.0)
        assert m.mgf_increment(0.5) == pytest.approx(math.e, rel=1e-15)
        assert m.censored_mgf(-1.0, 0.5) == pytest.approx(math.exp(-0.5), rel=1e-15)
        assert m.effective_capacity(3.0) == 2.0

    def test_zero_rate_acts_as_empty_process(self):
        m = DeterministicService(0.0)
        assert m.mgf_increment(5.0) == 1.0
        assert np.all(m.sample_path(seed=1, T=10) == 0.0)


class TestExponentialArrivals:
    def test_mgf_formula_and_divergence(self):
        a = ExponentialArrivals(0.1)
        assert a.mgf_increment(1.0) == pytest.approx(1.0 / 0.9, rel=1e-15)
        assert a.mgf_increment(10.0) == math.inf
        assert a.log_mgf_increment(1.0) == pytest.approx(-math.log(0.9), rel=1e-14)
        assert a.mgf_path(1.0, 3) == pytest.approx((1.0 / 0.9) ** 3, rel=1e-14)


class TestLeftover:
    def test_mgf_closed_form_against_monte_carlo(self):
        # E[exp(-theta (C - a))] = exp(-theta C) / (1 - lambda theta)
        C, lam, theta = 2.0, 1.0, 0.4
        left = LeftoverService(DeterministicService(C), ExponentialArrivals(lam))
        closed = left.mgf_increment(-theta)
        assert closed == pytest.approx(math.exp(-theta * C) / (1 - lam * theta), rel=1e-14)
        rng = np.random.default_rng(3)
        sample = np.exp(-theta * (C - rng.exponential(lam, 1_000_000)))
        se = sample.std(ddof=1) / math.sqrt(len(sample))
        assert abs(sample.mean() - closed) < 4 * se

    def test_mean_rate_and_stability(self):
        left = LeftoverService(DeterministicService(1.0), ExponentialArrivals(0.3))
        assert left.mean_rate == pytest.approx(0.7)
        assert left.is_stable
        assert not LeftoverService(
            DeterministicService(1.0), ExponentialArrivals(1.5)
        ).is_stable

    def test_paths_may_go_negative_and_average_out(self):
        left = LeftoverService(DeterministicService(1.0), ExponentialArrivals(0.5))
        path = left.sample_path(seed=11, T=200_000)
        assert np.min(path) < 0.0
        assert np.mean(path) == pytest.approx(0.5, abs=0.01)

    @pytest.mark.parametrize("cap", [0.25, 0.9, 5.0])
    def test_censored_mgf_against_quadrature(self, cap):
        C, lam, theta = 1.0, 0.6, -0.8
        left = LeftoverService(DeterministicService(C), ExponentialArrivals(lam))
        ref = scipy.integrate.quad(
            lambda a: math.exp(theta * min(C - a, cap)) * math.exp(-a / lam) / lam,
            0.0,
            300.0,
            limit=400,
        )[0]
        assert left.censored_mgf(theta, cap) == pytest.approx(ref, rel=1e-7)

    def test_censored_mgf_divergence(self):
        left = LeftoverService(DeterministicService(1.0), ExponentialArrivals(0.5))
        assert left.censored_mgf(-2.0, 0.5) == math.inf  # -theta = 1/lambda boundary


class TestMmoo:
    def test_derived_chain_quantities(self):
        assert MMOO.p01 == pytest.approx(0.8)
        assert MMOO.p10 == pytest.approx(0.1)
        assert MMOO.on_probability == pytest.approx(8.0 / 9.0, abs=1e-15)
        assert MMOO.correlation_eigenvalue == pytest.approx(0.1, abs=1e-15)
        assert MMOO.mean_rate == pytest.approx(1.0, abs=1e-12)

    def test_path_mgf_basics(self):
        assert MMOO.mgf_path(-1.0, 0) == 1.0
        assert MMOO.mgf_path(0.0, 5) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("theta", [-1.0, -0.25, 0.6])
    def test_path_mgf_matches_two_slot_enumeration(self, theta):
        p = MMOO.on_probability
        trans = {(0, 0): 0.2, (0, 1): 0.8, (1, 0): 0.1, (1, 1): 0.9}
        total = 0.0
        for x0, x1 in itertools.product((0, 1), repeat=2):
            weight = (p if x0 else 1 - p) * trans[(x0, x1)]
            total += weight * math.exp(theta * 1.125 * (x0 + x1))
        assert MMOO.mgf_path(theta, 2) == pytest.approx(total, rel=1e-14)

    def test_dominant_eigenvalue_at_zero_is_one(self):
        assert MMOO.eigen_m_plus(0.0) == pytest.approx(1.0, abs=1e-15)

    def test_effective_capacity_matches_quadratic_closed_form(self):
        for theta in np.geomspace(0.01, 100.0, 32):
            u = math.exp(-theta * MMOO.peak)
            tr = MMOO.p00 + MMOO.p11 * u
            closed = -math.log(0.5 * (tr + math.sqrt(tr * tr - 4 * 0.1 * u))) / theta
            assert abs(MMOO.effective_capacity(theta) - closed) <= 1e-12

    def test_fast_switching_chain_is_rejected(self):
        fast = MmooService(p00=0.0, p11=0.0, peak=1.0)  # p01 + p10 = 2
        with pytest.raises(ValueError, match="p01 \\+ p10"):
            fast.eigen_m_plus(-1.0)

    def test_spectral_weight_gives_exact_two_term_decomposition(self):
        from winflow.models import _two_state_eigs

        for theta in (-1.0, -0.3, 0.5):
            K = MMOO.k_theta(theta)
            assert 0.0 < K < 1.0
            minus, plus = _two_state_eigs(0.2, 0.9, *MMOO._state_mgfs(theta))
            assert K * plus + (1 - K) * minus == pytest.approx(
                MMOO.mgf_increment(theta), abs=1e-14
            )
            for t in range(1, 9):
                two_term = K * plus**t + (1 - K) * minus**t
                assert abs(MMOO.mgf_path(theta, t) - two_term) <= 1e-12

    def test_spectral_weight_rejects_degenerate_chain(self):
        # absorbing ON state with the state laws tuned so the two
        # eigenvalues collide (up to float noise) at theta = -1
        near = MarkovModulated2Service(
            p00=0.5,
            p11=1.0,
            law0=DeterministicService(0.3),
            law1=DeterministicService(0.3 + math.log(2.0)),
        )
        with pytest.raises(ValueError, match="coincide"):
            near.k_theta(-1.0)
        # identical state laws are a one-state chain in disguise: the
        # decomposition collapses onto the dominant eigenvalue exactly
        flat = MarkovModulated2Service(
            p00=0.6, p11=0.7, law0=DeterministicService(1.0), law1=DeterministicService(1.0)
        )
        assert flat.k_theta(0.3) == 1.0

    def test_frozen_chain_is_rejected(self):
        frozen = MmooService(p00=1.0, p11=1.0, peak=1.0)
        with pytest.raises(ValueError, match="steady state"):
            frozen.eigen_m_plus(-1.0)

    def test_steady_state_on_fraction(self):
        path = MMOO.sample_path(seed=2024, T=1_000_000)
        on_fraction = float(np.mean(path > 0))
        assert on_fraction == pytest.approx(8.0 / 9.0, rel=0.01)

    def test_long_path_sampler_is_deterministic(self):
        # long single paths use the sojourn-run branch of the chain sampler
        a = MMOO.sample_path(seed=6, T=50_000)
        b = MMOO.sample_path(seed=6, T=50_000)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, MMOO.sample_path(seed=7, T=50_000))

    def test_batch_sampler_matches_steady_state(self):
        rng = np.random.default_rng(5)
        paths = MMOO.sample_increments(rng, 64, 4000)
        assert float(np.mean(paths > 0)) == pytest.approx(8.0 / 9.0, rel=0.02)

    def test_on_sequence_probability(self):
        assert MMOO.on_sequence_probability([4]) == pytest.approx(8.0 / 9.0, abs=1e-15)
        assert MMOO.on_sequence_probability([0, 1]) >= MMOO.on_sequence_probability([0, 5])
        with pytest.raises(ValueError):
            MMOO.on_sequence_probability([3, 3])

    def test_on_sequence_probability_matches_enumeration(self):
        p = MMOO.on_probability
        trans = {(0, 0): 0.2, (0, 1): 0.8, (1, 0): 0.1, (1, 1): 0.9}
        total = 0.0
        for states in itertools.product((0, 1), repeat=3):
            if all(states):
                weight = (p if states[0] else 1 - p)
                for a, b in zip(states, states[1:]):
                    weight *= trans[(a, b)]
                total += weight
        assert MMOO.on_sequence_probability([0, 1, 2]) == pytest.approx(total, abs=1e-15)


class TestMarkovModulated2:
    def test_reduction_to_on_off_is_bit_for_bit(self):
        general = mmoo_as_two_state(MMOO)
        for theta in (-2.0, -0.5, 0.0, 0.7):
            assert general.mgf_increment(theta) == MMOO.mgf_increment(theta)
            assert general.eigen_m_plus(theta) == MMOO.eigen_m_plus(theta)
            for t in (1, 3, 9):
                assert general.mgf_path(theta, t) == MMOO.mgf_path(theta, t)
        rng_a = np.random.default_rng(99)
        rng_b = np.random.default_rng(99)
        a = MMOO.sample_increments(rng_a, 128, 16)
        b = general.sample_increments(rng_b, 128, 16)
        assert np.array_equal(a, b)

    def test_leftover_two_state_composition(self):
        cross = mmoo_as_two_state(MmooService(p00=0.4, p11=0.8, peak=0.5))
        left = leftover_two_state(1.0, cross)
        assert left.mean_rate == pytest.approx(1.0 - cross.mean_rate, abs=1e-14)
        # per-state means: state 0 leaves everything, state 1 leaves C - P
        assert left.law0.mean_rate == pytest.approx(1.0)
        assert left.law1.mean_rate == pytest.approx(0.5)
        assert math.isfinite(left.eigen_m_plus(-0.5))


class TestErlangQuantile:
    def test_exponential_closed_forms(self):
        assert erlang_quantile(1.0 - math.exp(-1.0), 1, 1.0) == pytest.approx(1.0, abs=1e-9)
        assert erlang_quantile(1e-6, 1, 1.0) == pytest.approx(
            -math.log1p(-1e-6), rel=1e-6
        )
        assert erlang_quantile(0.5, 1, 1.0) == pytest.approx(math.log(2.0), abs=1e-9)

    def test_against_scipy_inverse(self):
        for n in (1, 2, 5, 20, 80):
            for eps in (1e-9, 1e-4, 0.3, 0.97):
                mine = erlang_quantile(eps, n, 1.7)
                ref = scipy.special.gammaincinv(n, eps) * 1.7
                assert mine == pytest.approx(ref, rel=1e-7, abs=1e-12)

    def test_cdf_round_trip(self):
        x = erlang_quantile(0.123, 7, 2.0)
        assert regularized_lower_gamma(7, x / 2.0) == pytest.approx(0.123, abs=1e-9)

    def test_regularized_gamma_against_scipy(self):
        for a in (0.5, 1.0, 3.0, 12.0, 60.0):
            for x in (0.0, 0.2, 1.0, 5.0, 40.0, 200.0):
                assert regularized_lower_gamma(a, x) == pytest.approx(
                    float(scipy.special.gammainc(a, x)), abs=1e-12
                )

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            erlang_quantile(0.0, 1, 1.0)
        with pytest.raises(ValueError):
            erlang_quantile(0.5, 0, 1.0)
        with pytest.raises(ValueError):
            erlang_quantile(0.5, 1, 0.0)


class TestGroupedTimeCorrelation:
    """Exhaustive checks of the chain's positive time correlations."""

    def enumerate_grouped(self, theta, taus):
        horizon = max(taus) + 1
        p = MMOO.on_probability
        trans = {(0, 0): 0.2, (0, 1): 0.8, (1, 0): 0.1, (1, 1): 0.9}
        total = 0.0
        for states in itertools.product((0, 1), repeat=horizon):
            weight = p if states[0] else 1 - p
            for a, b in zip(states, states[1:]):
                weight *= trans[(a, b)]
            total += weight * math.exp(theta * 1.125 * sum(states[t] for t in taus))
        return total

    @pytest.mark.parametrize("theta", [0.8, -0.8])
    def test_spread_times_never_beat_contiguous_block(self, theta):
        for size in (2, 3):
            for taus in itertools.combinations(range(7), size):
                grouped = self.enumerate_grouped(theta, taus)
                assert grouped <= MMOO.mgf_path(theta, size) + 1e-12

    @pytest.mark.parametrize("theta", [1.0, -1.0])
    def test_path_mgf_supermultiplicative(self, theta):
        for s in range(13):
            for t in range(13):
                lhs = MMOO.mgf_path(theta, s) * MMOO.mgf_path(theta, t)
                assert lhs <= MMOO.mgf_path(theta, s + t) * (1 + 1e-12)

    @pytest.mark.parametrize("theta", [-2.0, -0.5, -0.1, 0.1, 0.5, 2.0])
    def test_spectral_sandwich(self, theta):
        m_plus = MMOO.eigen_m_plus(theta)
        mc = MMOO.mgf_increment(theta)
        K = MMOO.k_theta(theta)
        for t in range(1, 17):
            ms = MMOO.mgf_path(theta, t)
            assert mc**t <= ms * (1 + 1e-12)
            assert ms <= m_plus**t * (1 + 1e-12)
            assert ms >= K * m_plus**t * (1 - 1e-12)
