"""Diffusion model description: coefficients, growth norm, spectral quantities.

The state process is dX = sigma(X) dB + b(X) dt in R^q driven by a
d-dimensional Brownian motion.  Coefficient growth is measured against the
weighted norm N(x)^2 = eps_0 + sum_i eps_i |x_i|^2, which lets the same
machinery cover bounded, linear-growth and log-normal-type coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class DimensionMismatchError(ValueError):
    pass


class DegenerateModelError(RuntimeError):
    """Raised when sigma*sigma^T is singular where invertibility is required."""


@dataclass(frozen=True)
class DiffusionModel:
    """Immutable description of the SDE dX = sigma(X) dB + b(X) dt.

    sigma maps a point in R^q to a (q, d) matrix, b maps it to a vector in
    R^q.  eps holds the q+1 flags of the growth norm and C0 is the single
    growth/Lipschitz/derivative constant used by every hypothesis check.
    dsigma, if given, evaluates the analytic first derivatives as a
    (q, d, q) array (d sigma_ij / d x_k); finite differences are used
    otherwise.
    """

    q: int
    d: int
    sigma: Callable[[np.ndarray], np.ndarray]
    b: Callable[[np.ndarray], np.ndarray]
    eps: tuple
    C0: float
    name: str = "custom"
    dsigma: Callable[[np.ndarray], np.ndarray] | None = None
    # optional vectorized evaluators over (n, q) batches, returning
    # (n, q, d) and (n, q); Monte Carlo falls back to a loop without them
    sigma_batch: Callable[[np.ndarray], np.ndarray] | None = None
    b_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.q < 1 or self.d < 1:
            raise ValueError("q and d must be positive")
        if self.C0 <= 0:
            raise ValueError("C0 must be positive")
        eps = tuple(int(e) for e in self.eps)
        if len(eps) != self.q + 1:
            raise ValueError("eps must have q+1 entries")
        if any(e not in (0, 1) for e in eps):
            raise ValueError("eps entries must be 0 or 1")
        if not any(eps):
            raise ValueError("at least one eps flag must be 1")
        object.__setattr__(self, "eps", eps)

    def sigma_at(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        s = np.asarray(self.sigma(x), dtype=float)
        if s.shape != (self.q, self.d):
            raise DimensionMismatchError(
                f"sigma returned shape {s.shape}, expected {(self.q, self.d)}"
            )
        return s

    def b_at(self, x: np.ndarray) -> np.ndarray:
        x = self._check_point(x)
        v = np.asarray(self.b(x), dtype=float).reshape(-1)
        if v.shape != (self.q,):
            raise DimensionMismatchError(
                f"b returned shape {v.shape}, expected {(self.q,)}"
            )
        return v

    def a_at(self, x: np.ndarray) -> np.ndarray:
        """Diffusion matrix sigma*sigma^T at x (symmetric PSD)."""
        s = self.sigma_at(x)
        return s @ s.T

    def sigma_at_batch(self, X: np.ndarray) -> np.ndarray:
        """sigma over an (n, q) batch; loops when no vectorized form exists."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.sigma_batch is not None:
            s = np.asarray(self.sigma_batch(X), dtype=float)
            if s.shape != (len(X), self.q, self.d):
                raise DimensionMismatchError(
                    f"sigma_batch returned {s.shape}, expected {(len(X), self.q, self.d)}"
                )
            return s
        return np.stack([self.sigma_at(x) for x in X])

    def b_at_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.b_batch is not None:
            v = np.asarray(self.b_batch(X), dtype=float)
            if v.shape != (len(X), self.q):
                raise DimensionMismatchError(
                    f"b_batch returned {v.shape}, expected {(len(X), self.q)}"
                )
            return v
        return np.stack([self.b_at(x) for x in X])

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape != (self.q,):
            raise DimensionMismatchError(
                f"point has dimension {x.shape[0]}, model has q={self.q}"
            )
        return x


@dataclass(frozen=True)
class SpectralData:
    lambda_min: float
    lambda_max: float
    rho: float
    detSS: float


def growth_norm(model: DiffusionModel, x) -> float:
    """N(x) = sqrt(eps_0 + sum_i eps_i x_i^2)."""
    x = model._check_point(x)
    e = np.asarray(model.eps, dtype=float)
    return float(np.sqrt(e[0] + np.sum(e[1:] * x * x)))


def spectral(model: DiffusionModel, x) -> SpectralData:
    """Eigenvalue extremes, determinant and ellipticity ratio of sigma*sigma^T."""
    a = model.a_at(x)
    w = np.linalg.eigvalsh(a)
    lam_min = max(float(w[0]), 0.0)
    lam_max = max(float(w[-1]), 0.0)
    n = growth_norm(model, x)
    return SpectralData(
        lambda_min=lam_min,
        lambda_max=lam_max,
        rho=np.sqrt(lam_min) / n,
        detSS=max(float(np.prod(w)), 0.0),
    )


def _fd_step(x: np.ndarray) -> float:
    return 1e-5 * (1.0 + float(np.linalg.norm(x)))


def _coeff_derivatives(model: DiffusionModel, x: np.ndarray, order: int):
    """Finite-difference partials of sigma and b up to the given order.

    Returns the largest absolute entry over all partials of each order in
    {1, ..., order}.  Central differences; order is capped at 2 upstream.
    """
    h = _fd_step(x)
    worst = 0.0
    for k in range(model.q):
        ek = np.zeros(model.q)
        ek[k] = h
        ds = (model.sigma_at(x + ek) - model.sigma_at(x - ek)) / (2 * h)
        db = (model.b_at(x + ek) - model.b_at(x - ek)) / (2 * h)
        worst = max(worst, float(np.abs(ds).max()), float(np.abs(db).max()))
        if order >= 2:
            for l in range(model.q):
                el = np.zeros(model.q)
                el[l] = h
                d2s = (
                    model.sigma_at(x + ek + el)
                    - model.sigma_at(x + ek - el)
                    - model.sigma_at(x - ek + el)
                    + model.sigma_at(x - ek - el)
                ) / (4 * h * h)
                d2b = (
                    model.b_at(x + ek + el)
                    - model.b_at(x + ek - el)
                    - model.b_at(x - ek + el)
                    + model.b_at(x - ek - el)
                ) / (4 * h * h)
                worst = max(worst, float(np.abs(d2s).max()), float(np.abs(d2b).max()))
    return worst


@dataclass
class HypothesisReport:
    """Outcome of the sample-based growth/Lipschitz/derivative checks.

    margins holds the worst signed margin per check (positive = satisfied);
    failures lists human-readable descriptions of every violated check.
    derived_ok covers the eigenvalue/determinant consequences used only as
    sanity checks.
    """

    passed: bool
    margins: dict
    failures: list = field(default_factory=list)
    derived_ok: bool = True
    max_order_checked: int = 2
    declared_orders_unverified: bool = True

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "margins": self.margins,
            "failures": self.failures,
            "derived_ok": self.derived_ok,
            "max_order_checked": self.max_order_checked,
            "declared_orders_unverified": self.declared_orders_unverified,
        }


def check_hypothesis_A(
    model: DiffusionModel,
    samples: Sequence,
    max_order: int = 2,
    slack: float = 1e-9,
) -> HypothesisReport:
    """Check the growth bound, the Lipschitz bound on pairs, and bounded
    derivatives (finite differences, orders 0..max_order) with the model's C0.

    samples is a sequence of (x, y) pairs; the pointwise checks run on both
    entries, the Lipschitz check on the pair.  Derivative checks above order
    2 are numerically meaningless and refused.
    """
    if max_order > 2:
        raise ValueError("max_order above 2 is not supported (finite differences)")
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample set")

    C0 = model.C0
    q = model.q
    failures: list[str] = []
    m_growth = np.inf
    m_lip = np.inf
    m_deriv = np.inf
    derived_ok = True

    points = []
    for x, y in samples:
        points.append(np.asarray(x, dtype=float))
        points.append(np.asarray(y, dtype=float))

    for idx, x in enumerate(points):
        s = model.sigma_at(x)
        bv = model.b_at(x)
        lhs = float(max(np.linalg.norm(s, axis=1) + np.abs(bv)))
        margin = C0 * growth_norm(model, x) - lhs
        m_growth = min(m_growth, margin)
        if margin < -slack:
            failures.append(f"growth bound fails at sample point {idx}: "
                            f"{lhs:.6g} > C0*N = {C0 * growth_norm(model, x):.6g}")
        # derivative bounds start at order 1: the coefficients themselves are
        # allowed to grow like N(x), only their derivatives are bounded by C0
        if max_order >= 1:
            worst = _coeff_derivatives(model, x, max_order)
            margind = C0 - worst
            m_deriv = min(m_deriv, margind)
            if margind < -1e-4:  # fd noise tolerance
                failures.append(f"derivative bound fails at point {idx}: "
                                f"|D coeff| = {worst:.6g} > C0 = {C0:.6g}")
        # derived consequence: lambda* <= q C0^2 N^2
        sp = spectral(model, x)
        if sp.lambda_max > q * C0**2 * growth_norm(model, x) ** 2 + slack:
            derived_ok = False

    for idx, (x, y) in enumerate(samples):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        sx, sy = model.sigma_at(x), model.sigma_at(y)
        bx, by = model.b_at(x), model.b_at(y)
        lhs = float(max(np.linalg.norm(sx - sy, axis=1) + np.abs(bx - by)))
        rhs = C0 * float(np.linalg.norm(x - y))
        margin = rhs - lhs
        m_lip = min(m_lip, margin)
        if margin < -slack:
            failures.append(f"Lipschitz bound fails on pair {idx}")
        # derived consequences on pairs
        nx = growth_norm(model, x)
        dxy = float(np.linalg.norm(x - y))
        ax, ay = model.a_at(x), model.a_at(y)
        gap = float(np.abs(np.linalg.eigvalsh(ax - ay)).max())
        if gap > q * C0**2 * (2 * nx + dxy) * dxy + slack + 1e-12:
            derived_ok = False
        ddet = abs(float(np.linalg.det(ax)) - float(np.linalg.det(ay)))
        if ddet > math.factorial(q) * C0 ** (2 * q) * (2 * nx + dxy) ** (2 * q - 1) * dxy + slack + 1e-12:
            derived_ok = False

    return HypothesisReport(
        passed=not failures,
        margins={"growth": m_growth, "lipschitz": m_lip, "derivatives": m_deriv},
        failures=failures,
        derived_ok=derived_ok,
        max_order_checked=max_order,
    )
