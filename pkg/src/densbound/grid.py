"""Adaptive time grid driven by envelope functions and its size bound.

The grid recursion advances by the minimum of a fixed window h, the local
value of a radius-type envelope pi, and the stopping time at which the
running integral of gamma^2 reaches 1/(16 m_Q^2).  The number of steps is
certified against an integral bound evaluated by quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla


@dataclass(frozen=True)
class EnvelopeFn:
    """Piecewise-linear positive envelope with an optional ratio certificate.

    If m and h are given, f(s) <= m f(t) for all sampled |s - t| <= h is
    verified on construction.
    """

    ts: np.ndarray
    vals: np.ndarray
    m: float | None = None
    h: float | None = None

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        vals = np.asarray(self.vals, dtype=float)
        if ts.ndim != 1 or ts.shape != vals.shape or len(ts) < 2:
            raise ValueError("envelope needs matching 1-d sample arrays")
        if not np.all(np.diff(ts) > 0):
            raise ValueError("envelope times must be strictly increasing")
        # gamma-type envelopes may touch zero; pi-type positivity is enforced
        # where the envelope is used as a divisor
        if np.any(vals < 0):
            raise ValueError("envelope values must be nonnegative")
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "vals", vals)
        object.__setattr__(self, "_sq_cumsum", None)
        if self.m is not None and self.h is not None:
            got = envelope_constant((ts, vals), self.h, mode="scalar")
            if got > self.m * (1 + 1e-12):
                raise ValueError(
                    f"samples violate the declared ratio constant: need m >= {got:.6g}"
                )

    @classmethod
    def constant(cls, value: float, T: float, m: float = 1.0, h: float | None = None):
        return cls(ts=np.array([0.0, T]), vals=np.array([value, value]), m=m, h=h)

    @property
    def T(self) -> float:
        return float(self.ts[-1])

    def __call__(self, t):
        return np.interp(t, self.ts, self.vals)

    def _sq_segment_cumsum(self):
        """Exact integrals of the squared interpolant over each segment,
        cached after the first call."""
        if self._sq_cumsum is None:
            dt = np.diff(self.ts)
            a = self.vals[:-1]
            b = np.diff(self.vals) / dt
            seg = a * a * dt + a * b * dt**2 + (b * b / 3.0) * dt**3
            object.__setattr__(
                self, "_sq_cumsum", np.concatenate([[0.0], np.cumsum(seg)])
            )
        return self._sq_cumsum

    def integral_sq(self, t0: float, t1: float) -> float:
        """Exact integral of the squared interpolant over [t0, t1]."""
        t0 = max(t0, self.ts[0])
        t1 = min(t1, self.ts[-1])
        if t1 <= t0:
            return 0.0
        cum = self._sq_segment_cumsum()

        def upto(x):
            i = int(np.searchsorted(self.ts, x, side="right") - 1)
            i = min(max(i, 0), len(self.ts) - 2)
            dt = x - self.ts[i]
            a = self.vals[i]
            b = (self.vals[i + 1] - self.vals[i]) / (self.ts[i + 1] - self.ts[i])
            return cum[i] + a * a * dt + a * b * dt**2 + (b * b / 3.0) * dt**3

        return float(upto(t1) - upto(t0))

    def sq_increment_time(self, t0: float, amount: float) -> float:
        """Smallest u with int_{t0}^{t0+u} f^2 >= amount; inf if never reached
        before the end of the samples.  Bisection to 1e-12 relative."""
        total = self.integral_sq(t0, self.T)
        if total < amount:
            return np.inf
        lo, hi = 0.0, self.T - t0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.integral_sq(t0, t0 + mid) >= amount:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-12 * max(hi, 1e-30):
                break
        return hi


@dataclass(frozen=True)
class TimeGrid:
    times: np.ndarray
    stop_reasons: list
    tau_values: np.ndarray

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.times)


def build_grid(
    pi_fn: EnvelopeFn,
    gamma_fn: EnvelopeFn,
    h: float,
    m_Q: float,
    T: float,
) -> TimeGrid:
    """Run the grid recursion t_{k+1} = t_k + min(h, pi(t_k), tau_k) up to T.

    tau_k is the first time the running integral of gamma^2 reaches
    1/(16 m_Q^2).  The final point is clamped to exactly T, which only
    shrinks the last step.
    """
    if h <= 0 or T <= 0:
        raise ValueError("h and T must be positive")
    if m_Q < 1:
        raise ValueError("m_Q must be >= 1")
    if np.any(pi_fn.vals <= 0):
        raise ValueError("pi envelope must be strictly positive")
    level = 1.0 / (16.0 * m_Q**2)

    times = [0.0]
    reasons: list[str] = []
    taus = []
    t = 0.0
    while t < T:
        tau = gamma_fn.sq_increment_time(t, level)
        pi_t = float(pi_fn(t))
        step = min(h, pi_t, tau)
        taus.append(tau)
        if tau <= min(h, pi_t):
            reasons.append("tau")
        elif pi_t <= h:
            reasons.append("pi")
        else:
            reasons.append("h")
        if step <= 0:
            raise RuntimeError(f"grid recursion stalled at t={t:.6g}")
        t = t + step
        times.append(min(t, T))
        if len(times) > 10_000_000:
            raise RuntimeError("grid recursion exceeded 1e7 steps")
    times[-1] = T
    return TimeGrid(times=np.array(times), stop_reasons=reasons, tau_values=np.array(taus))


def grid_count_bound(
    pi_fn: EnvelopeFn,
    gamma_fn: EnvelopeFn,
    h: float,
    m_Q: float,
    m_pi: float,
    T: float,
    resolution: int = 4097,
) -> float:
    """Quadrature of int_0^T (1/h + m_pi/pi(t) + 16 m_Q^2 gamma(t)^2) dt.

    The grid recursion never produces more steps than this value (up to
    quadrature slack).
    """
    grid = np.unique(
        np.concatenate([np.linspace(0.0, T, resolution), pi_fn.ts, gamma_fn.ts])
    )
    grid = grid[(grid >= 0) & (grid <= T)]
    if np.any(pi_fn.vals <= 0):
        raise ValueError("pi envelope must be strictly positive")
    vals = 1.0 / h + m_pi / pi_fn(grid) + 16.0 * m_Q**2 * gamma_fn(grid) ** 2
    return float(np.trapezoid(vals, grid))


def envelope_constant(samples, h: float, mode: str = "scalar") -> float:
    """Smallest ratio constant m for the sampled envelope over windows of
    length h.

    scalar mode: samples = (ts, vals) with positive vals; m is the largest
    in-window value ratio.  matrix mode: samples = (ts, [Q_t]) with SPD
    matrices; m^2 is the largest in-window generalized eigenvalue of
    (Q_t, Q_s) over sampled pairs.
    """
    if mode == "scalar":
        ts, vals = samples
        ts = np.asarray(ts, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if np.any(vals <= 0):
            raise ValueError("scalar envelope samples must be positive")
        m = 1.0
        for i in range(len(ts)):
            window = np.abs(ts - ts[i]) <= h + 1e-15
            m = max(m, float(vals[window].max() / vals[i]))
        return m
    if mode == "matrix":
        ts, mats = samples
        ts = np.asarray(ts, dtype=float)
        mats = [np.asarray(Q, dtype=float) for Q in mats]
        for Q in mats:
            if np.linalg.eigvalsh(Q)[0] <= 0:
                raise ValueError("matrix envelope samples must be positive definite")
        m2 = 1.0
        for i in range(len(ts)):
            for j in range(len(ts)):
                if i == j or abs(ts[i] - ts[j]) > h + 1e-15:
                    continue
                # smallest c with Q_i <= c Q_j
                m2 = max(m2, float(sla.eigh(mats[i], mats[j], eigvals_only=True)[-1]))
        return float(np.sqrt(m2))
    raise ValueError("mode must be 'scalar' or 'matrix'")
