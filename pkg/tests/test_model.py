"""Model layer: growth norm, spectral quantities, hypothesis checks."""

import numpy as np
import pytest

from densbound.model import (
    DiffusionModel,
    DimensionMismatchError,
    check_hypothesis_A,
    growth_norm,
    spectral,
)


def make_identity(q=2, C0=None, eps=None):
    return DiffusionModel(
        q=q,
        d=q,
        sigma=lambda x: np.eye(q),
        b=lambda x: np.zeros(q),
        eps=eps or (1,) + (0,) * q,
        C0=C0 or np.sqrt(q),
    )


class TestGrowthNorm:
    def test_only_constant_flag(self):
        m = make_identity(q=2, eps=(1, 0, 0))
        assert growth_norm(m, [7.0, -3.0]) == 1.0

    def test_euclidean_case(self):
        m = make_identity(q=2, eps=(0, 1, 1))
        assert growth_norm(m, [3.0, 4.0]) == 5.0

    def test_zero_point(self):
        m = make_identity(q=2, eps=(1, 1, 1))
        assert growth_norm(m, [0.0, 0.0]) == 1.0

    def test_dimension_mismatch(self):
        m = make_identity(q=2)
        with pytest.raises(DimensionMismatchError):
            growth_norm(m, [1.0, 2.0, 3.0])


class TestSpectral:
    def test_identity(self):
        m = make_identity(q=2, eps=(0, 1, 1))
        sp = spectral(m, [1.0, 0.0])
        assert sp.lambda_min == sp.lambda_max == 1.0
        assert sp.rho == pytest.approx(1.0)
        assert sp.detSS == pytest.approx(1.0)

    def test_diagonal(self):
        m = DiffusionModel(
            q=2, d=2,
            sigma=lambda x: np.diag([2.0, 3.0]),
            b=lambda x: np.zeros(2),
            eps=(1, 0, 0), C0=4.0,
        )
        sp = spectral(m, [0.0, 0.0])
        assert sp.lambda_min == pytest.approx(4.0)
        assert sp.lambda_max == pytest.approx(9.0)
        assert sp.rho == pytest.approx(2.0)
        assert sp.detSS == pytest.approx(36.0)

    def test_against_charpoly_oracle(self):
        # brute-force eigenvalues of sigma*sigma^T via the characteristic
        # polynomial roots, independent of the symmetric solver
        rng = np.random.default_rng(3)
        for _ in range(10):
            S = rng.standard_normal((3, 3))
            m = DiffusionModel(
                q=3, d=3, sigma=lambda x, S=S: S, b=lambda x: np.zeros(3),
                eps=(1, 0, 0, 0), C0=10.0,
            )
            sp = spectral(m, np.zeros(3))
            A = S @ S.T
            roots = np.sort(np.real(np.roots(np.poly(A))))
            assert sp.lambda_min == pytest.approx(max(roots[0], 0.0), abs=1e-10)
            assert sp.lambda_max == pytest.approx(roots[-1], abs=1e-10)

    def test_quadratic_form_bracketing(self):
        rng = np.random.default_rng(7)
        S = rng.standard_normal((3, 3))
        m = DiffusionModel(
            q=3, d=3, sigma=lambda x: S, b=lambda x: np.zeros(3),
            eps=(1, 0, 0, 0), C0=10.0,
        )
        sp = spectral(m, np.zeros(3))
        A = S @ S.T
        xi = rng.standard_normal((1000, 3))
        xi /= np.linalg.norm(xi, axis=1, keepdims=True)
        quad = np.einsum("ni,ij,nj->n", xi, A, xi)
        assert np.all(quad >= sp.lambda_min - 1e-9)
        assert np.all(quad <= sp.lambda_max + 1e-9)

    def test_degenerate_sigma_is_not_an_error(self):
        m = DiffusionModel(
            q=1, d=1, sigma=lambda x: np.zeros((1, 1)), b=lambda x: np.zeros(1),
            eps=(1, 0), C0=1.0,
        )
        sp = spectral(m, [0.0])
        assert sp.lambda_min == 0.0
        assert sp.rho == 0.0


class TestHypothesisCheck:
    def test_identity_passes(self):
        m = make_identity(q=2)
        rng = np.random.default_rng(0)
        samples = [(rng.standard_normal(2), rng.standard_normal(2)) for _ in range(5)]
        rep = check_hypothesis_A(m, samples)
        assert rep.passed
        assert rep.derived_ok

    def test_growth_violation_detected(self):
        m = DiffusionModel(
            q=1, d=1,
            sigma=lambda x: np.array([[x[0]]]),
            b=lambda x: np.zeros(1),
            eps=(1, 1), C0=0.5,
        )
        rep = check_hypothesis_A(m, [(np.array([2.0]), np.array([2.0]))])
        assert not rep.passed
        assert any("growth" in f for f in rep.failures)

    def test_sine_lipschitz_pair(self):
        q = 2
        m = DiffusionModel(
            q=q, d=q,
            sigma=lambda x: np.sin(x[0]) * np.eye(q),
            b=lambda x: np.zeros(q),
            eps=(1,) + (0,) * q, C0=float(q),
        )
        rep = check_hypothesis_A(m, [(np.zeros(q), np.eye(q)[0])])
        assert rep.margins["lipschitz"] >= 0

    def test_empty_samples_rejected(self):
        with pytest.raises(ValueError):
            check_hypothesis_A(make_identity(), [])

    def test_high_order_refused(self):
        with pytest.raises(ValueError):
            check_hypothesis_A(
                make_identity(), [(np.zeros(2), np.ones(2))], max_order=3
            )


class TestModelValidation:
    def test_eps_length(self):
        with pytest.raises(ValueError):
            DiffusionModel(
                q=2, d=2, sigma=lambda x: np.eye(2), b=lambda x: np.zeros(2),
                eps=(1, 0), C0=1.0,
            )

    def test_all_zero_eps(self):
        with pytest.raises(ValueError):
            DiffusionModel(
                q=1, d=1, sigma=lambda x: np.eye(1), b=lambda x: np.zeros(1),
                eps=(0, 0), C0=1.0,
            )

    def test_sigma_shape_check(self):
        m = DiffusionModel(
            q=2, d=3, sigma=lambda x: np.eye(2), b=lambda x: np.zeros(2),
            eps=(1, 0, 0), C0=1.0,
        )
        with pytest.raises(DimensionMismatchError):
            m.sigma_at(np.zeros(2))
