"""Adaptive grid recursion, count bound, envelope ratio constants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densbound.grid import EnvelopeFn, build_grid, envelope_constant, grid_count_bound


class TestBuildGrid:
    def test_zero_gamma_single_step(self):
        pi = EnvelopeFn.constant(1.0, 1.0)
        gamma = EnvelopeFn.constant(0.0, 1.0)
        grid = build_grid(pi, gamma, h=1.0, m_Q=1.0, T=1.0)
        assert grid.N == 1
        assert grid.times.tolist() == [0.0, 1.0]

    def test_constant_gamma_count(self):
        g, m_Q, T = 2.0, 1.0, 1.0
        pi = EnvelopeFn.constant(100.0, T)
        gamma = EnvelopeFn.constant(g, T)
        grid = build_grid(pi, gamma, h=100.0, m_Q=m_Q, T=T)
        assert grid.N == math.ceil(16.0 * m_Q**2 * g**2 * T)
        # every interior step stops on the integral criterion
        assert all(r == "tau" for r in grid.stop_reasons[:-1])

    def test_cubic_root_stopping_time(self):
        # gamma(t) = t: the first stopping time solves u^3/3 = 1/16
        pi = EnvelopeFn.constant(100.0, 1.0)
        gamma = EnvelopeFn(ts=np.linspace(0.0, 1.0, 2), vals=np.array([0.0, 1.0]))
        grid = build_grid(pi, gamma, h=100.0, m_Q=1.0, T=1.0)
        assert grid.times[1] == pytest.approx((3.0 / 16.0) ** (1.0 / 3.0), abs=1e-6)

    def test_positive_pi_required(self):
        pi = EnvelopeFn(ts=np.array([0.0, 1.0]), vals=np.array([0.0, 1.0]))
        gamma = EnvelopeFn.constant(0.0, 1.0)
        with pytest.raises(ValueError):
            build_grid(pi, gamma, h=1.0, m_Q=1.0, T=1.0)


class TestCountBound:
    def test_zero_gamma_value(self):
        pi = EnvelopeFn.constant(1.0, 1.0)
        gamma = EnvelopeFn.constant(0.0, 1.0)
        m_pi = 1.0
        assert grid_count_bound(pi, gamma, 1.0, 1.0, m_pi, 1.0) == pytest.approx(
            1.0 + m_pi
        )

    def test_constant_gamma_value(self):
        g, m_Q, T = 2.0, 1.0, 1.0
        pi = EnvelopeFn.constant(1e6, T)
        gamma = EnvelopeFn.constant(g, T)
        bound = grid_count_bound(pi, gamma, 1e6, m_Q, 1.0, T)
        assert bound == pytest.approx(16.0 * m_Q**2 * g**2 * T, rel=1e-4)

    def test_random_envelopes_respect_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            T = 1.0
            n = rng.integers(3, 9)
            ts = np.sort(np.concatenate([[0.0, T], rng.uniform(0, T, n - 2)]))
            ts = np.unique(ts)
            pi = EnvelopeFn(ts=ts, vals=rng.uniform(0.05, 2.0, len(ts)))
            gamma = EnvelopeFn(ts=ts, vals=rng.uniform(0.0, 2.0, len(ts)))
            h = rng.uniform(0.05, 1.0)
            m_Q = rng.uniform(1.0, 2.0)
            m_pi = envelope_constant((pi.ts, pi.vals), T, mode="scalar")
            grid = build_grid(pi, gamma, h, m_Q, T)
            bound = grid_count_bound(pi, gamma, h, m_Q, m_pi, T)
            assert grid.N <= bound * 1.01

    def test_per_step_certificate(self):
        rng = np.random.default_rng(5)
        T = 1.0
        ts = np.linspace(0.0, T, 9)
        pi = EnvelopeFn(ts=ts, vals=rng.uniform(0.1, 0.8, len(ts)))
        gamma = EnvelopeFn(ts=ts, vals=rng.uniform(0.2, 1.5, len(ts)))
        h = 0.4
        m_Q = 1.2
        m_pi = envelope_constant((pi.ts, pi.vals), T, mode="scalar")
        grid = build_grid(pi, gamma, h, m_Q, T)
        for k, reason in enumerate(grid.stop_reasons[:-1]):
            t0, t1 = grid.times[k], grid.times[k + 1]
            if reason == "tau":
                assert 16.0 * m_Q**2 * gamma.integral_sq(t0, t1) >= 1.0 - 1e-6
            elif reason == "pi":
                # pi(t) <= m_pi pi(t0) in-window makes the integral >= 1
                integral = (t1 - t0) * m_pi / float(pi(t0))
                assert integral >= 1.0 - 1e-9
            else:
                assert (t1 - t0) / h == pytest.approx(1.0)


class TestEnvelopeConstant:
    def test_exponential(self):
        c, h = 0.8, 0.3
        ts = np.linspace(0.0, 1.0, 201)
        m = envelope_constant((ts, np.exp(c * ts)), h, mode="scalar")
        assert m == pytest.approx(math.exp(abs(c) * h), rel=1e-6)

    def test_constant(self):
        ts = np.linspace(0.0, 1.0, 11)
        assert envelope_constant((ts, np.ones(11)), 0.5, mode="scalar") == 1.0

    def test_matrix_mode(self):
        ts = np.linspace(0.0, 1.0, 11)
        mats = [np.eye(2) * (1.0 + t) for t in ts]
        m = envelope_constant((ts, mats), 1.0, mode="matrix")
        assert m == pytest.approx(math.sqrt(2.0), rel=1e-10)

    def test_non_pd_rejected(self):
        ts = np.array([0.0, 1.0])
        with pytest.raises(ValueError):
            envelope_constant((ts, [np.eye(2), np.zeros((2, 2))]), 1.0, mode="matrix")

    @settings(max_examples=25, deadline=None)
    @given(
        h1=st.floats(0.05, 0.5),
        h2=st.floats(0.5, 1.0),
        seed=st.integers(0, 1000),
    )
    def test_monotone_in_window(self, h1, h2, seed):
        rng = np.random.default_rng(seed)
        ts = np.linspace(0.0, 1.0, 17)
        vals = rng.uniform(0.1, 2.0, len(ts))
        m1 = envelope_constant((ts, vals), h1, mode="scalar")
        m2 = envelope_constant((ts, vals), h2, mode="scalar")
        assert m2 >= m1 - 1e-12


class TestEnvelopeFn:
    def test_ratio_certificate_verified(self):
        ts = np.linspace(0.0, 1.0, 11)
        vals = np.exp(ts)
        with pytest.raises(ValueError):
            EnvelopeFn(ts=ts, vals=vals, m=1.0, h=0.5)
        EnvelopeFn(ts=ts, vals=vals, m=math.exp(0.5) + 1e-9, h=0.5)

    def test_exact_square_integral(self):
        # f(t) = t on [0,1]: integral of f^2 is 1/3 exactly
        f = EnvelopeFn(ts=np.array([0.0, 1.0]), vals=np.array([0.0, 1.0]))
        assert f.integral_sq(0.0, 1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
        assert f.integral_sq(0.25, 0.75) == pytest.approx(
            (0.75**3 - 0.25**3) / 3.0, abs=1e-15
        )

    def test_sq_increment_inf(self):
        f = EnvelopeFn.constant(0.0, 1.0)
        assert f.sq_increment_time(0.0, 0.1) == np.inf

    def test_refinement_invariance(self):
        # resampling the same function does not change the grid
        T = 1.0
        coarse = EnvelopeFn(ts=np.array([0.0, T]), vals=np.array([0.5, 1.5]))
        fine_ts = np.linspace(0.0, T, 101)
        fine = EnvelopeFn(ts=fine_ts, vals=np.interp(fine_ts, coarse.ts, coarse.vals))
        pi = EnvelopeFn.constant(10.0, T)
        g1 = build_grid(pi, coarse, 10.0, 1.0, T)
        g2 = build_grid(pi, fine, 10.0, 1.0, T)
        assert g1.N == g2.N
        assert np.allclose(g1.times, g2.times, atol=1e-9)
