"""Universal constants and the explicit log-space lower-bound formulas.

Everything here is evaluated in natural-log space: the dimensional constant
contains 4^{3(q+3)^3}, which is ~1e115 already for q = 1 and cannot be held
in a float.  The truly universal constants the theory leaves symbolic
(p_star, c_star, mu_k, C_mp, K_q) default to placeholder values and are
echoed in every report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import EnvelopeFn, grid_count_bound
from .model import DiffusionModel, growth_norm, spectral
from .skeleton import Control, SkeletonPath, ThetaParams, GrowthWindow

LOG_2PI = math.log(2.0 * math.pi)

_OVERRIDE_FIELDS = ("p_star", "c_star", "mu_k", "C_mp", "K_q")


@dataclass(frozen=True)
class UniversalConstants:
    """Dimension-dependent constants, configurable where the theory is
    symbolic.  Defaults p_star=2, c_star=mu_k=C_mp=K_q=1 are placeholders,
    not derived values."""

    q: int
    p_star: float = 2.0
    c_star: float = 1.0
    mu_k: float = 1.0
    C_mp: float = 1.0
    K_q: float = 1.0

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("q must be >= 1")
        for name in _OVERRIDE_FIELDS:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def p_q(self) -> float:
        return 2.0 ** (2 * (self.q + 2)) * self.p_star

    @property
    def log_C_q(self) -> float:
        q = self.q
        return (
            math.log(self.c_star)
            + math.log(self.mu_k)
            + 2.0
            + (q / 2.0) * LOG_2PI
            + 3.0 * (q + 3) ** 3 * math.log(4.0)
            + (q + 3) * math.log(q + 1)
        )

    @property
    def m_q(self) -> float:
        return 4.0 ** (self.q + 3) * (self.q + 1) ** (self.q + 3)

    @property
    def log_K_diff_factor(self) -> float:
        """log of C_mp^2; combined with C0^6 in the diffusion constant."""
        return 2.0 * math.log(self.C_mp)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            **{name: getattr(self, name) for name in _OVERRIDE_FIELDS},
            "p_q": self.p_q,
            "log_C_q": self.log_C_q,
            "m_q": self.m_q,
        }


def make_constants(q: int, overrides: dict | None = None) -> UniversalConstants:
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(_OVERRIDE_FIELDS)
    if unknown:
        raise ValueError(f"unknown constant overrides: {sorted(unknown)}")
    return UniversalConstants(q=q, **{k: float(v) for k, v in overrides.items()})


class DegeneratePathError(RuntimeError):
    def __init__(self, t: float):
        self.time = t
        super().__init__(f"ellipticity degenerates along the path at t={t:.6g}")


@dataclass
class EllipticParams:
    """Tube parameters derived from the model along a path: covariance scale
    Q_t, tube radius r_t, increment-control K_t, plus the fixed exponents."""

    times: np.ndarray
    Q: np.ndarray  # (n, q, q), half the diffusion matrix
    r: np.ndarray
    K: np.ndarray
    a: float = 1.5
    nu_exp: float = 0.5


def elliptic_params(
    model: DiffusionModel, path: SkeletonPath, constants: UniversalConstants
) -> EllipticParams:
    q = model.q
    n = len(path.times)
    Q = np.empty((n, q, q))
    r = np.empty(n)
    K = np.empty(n)
    for i, (t, x) in enumerate(zip(path.times, path.states)):
        sp = spectral(model, x)
        if sp.rho <= 0 or sp.lambda_min <= 0:
            raise DegeneratePathError(t)
        Q[i] = 0.5 * model.a_at(x)
        r[i] = sp.rho**2 / (6.0 * q**1.5 * model.C0**3)
        K[i] = constants.C_mp * (1.0 / sp.rho + 1.0 / np.sqrt(sp.lambda_min))
    return EllipticParams(times=path.times, Q=Q, r=r, K=K)


@dataclass
class TubeCheckReport:
    n_probes: int
    n_violations: int
    worst_upper_margin: float
    worst_lower_margin: float
    violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def tube_ellipticity_check(
    model: DiffusionModel,
    path: SkeletonPath,
    params: EllipticParams,
    n_probe: int = 1000,
    seed: int = 0,
) -> TubeCheckReport:
    """Probe each tube cross-section for the two-sided matrix bounds.

    For X in the ball of Q_t^{-1}-radius r_t around x_t, the diffusion
    matrix must stay between Q_t and 2a*Q_t (= a times the on-path matrix).
    Violations mean the supplied C0 underestimates the true constant.
    """
    rng = np.random.default_rng(seed)
    q = model.q
    n_viol = 0
    worst_up = np.inf
    worst_lo = np.inf
    details = []
    for i, (t, x) in enumerate(zip(path.times, path.states)):
        w, V = np.linalg.eigh(params.Q[i])
        Qhalf = (V * np.sqrt(np.maximum(w, 0.0))) @ V.T
        upper = 2.0 * params.a * params.Q[i]
        # uniform in the unit ball, mapped through r_t * Q_t^{1/2}
        u = rng.standard_normal((n_probe, q))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        u *= rng.random((n_probe, 1)) ** (1.0 / q)
        for k in range(n_probe):
            X = x + params.r[i] * (Qhalf @ u[k])
            A = model.a_at(X)
            m_up = float(np.linalg.eigvalsh(upper - A)[0])
            m_lo = float(np.linalg.eigvalsh(A - params.Q[i])[0])
            worst_up = min(worst_up, m_up)
            worst_lo = min(worst_lo, m_lo)
            if m_up < -1e-12 or m_lo < -1e-12:
                n_viol += 1
                if len(details) < 20:
                    details.append(
                        {"t": float(t), "X": X.tolist(),
                         "upper_margin": m_up, "lower_margin": m_lo}
                    )
    return TubeCheckReport(
        n_probes=n_probe * len(path.times),
        n_violations=n_viol,
        worst_upper_margin=worst_up,
        worst_lower_margin=worst_lo,
        violations=details,
    )


@dataclass
class BoundInputs:
    """Everything the explicit formulas need, assembled from a model, an
    admissible control and its path."""

    pi_fn: EnvelopeFn
    gamma_fn: EnvelopeFn
    m_pi: float
    h_pi: float
    m_gamma: float
    h_gamma: float
    m_Q: float
    h_Q: float
    h: float
    alpha: float
    log_K_diff: float
    a: float
    detQ_T: float
    T: float

    def to_dict(self) -> dict:
        return {
            "m_pi": self.m_pi, "h_pi": self.h_pi,
            "m_gamma": self.m_gamma, "h_gamma": self.h_gamma,
            "m_Q": self.m_Q, "h_Q": self.h_Q, "h": self.h,
            "alpha": self.alpha, "log_K_diff": self.log_K_diff,
            "a": self.a, "detQ_T": self.detQ_T, "T": self.T,
        }


@dataclass
class BoundReport:
    """Log-space lower bound with its decomposition and full input trace."""

    formula_id: str
    log_lower_bound: float
    prefactor_log: float
    exponent: float
    trace: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(v):
            if isinstance(v, (np.floating, np.integer)):
                return float(v)
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            if isinstance(v, (list, tuple)):
                return [clean(x) for x in v]
            return v

        return {
            "formula_id": self.formula_id,
            "log_lower_bound": clean(self.log_lower_bound),
            "prefactor_log": clean(self.prefactor_log),
            "exponent": clean(self.exponent),
            "trace": clean(self.trace),
        }


def derive_envelopes(
    model: DiffusionModel,
    path: SkeletonPath,
    control: Control,
    theta: ThetaParams,
    constants: UniversalConstants,
) -> BoundInputs:
    """Assemble the envelope data for an admissible (control, path) pair.

    The radius envelope is constant, the slope envelope follows the control
    norm, and the covariance ratio constant comes from the growth-window
    choice h_G = 1/(2 sqrt(q) C0 nu).
    """
    q = model.q
    C0 = model.C0
    mu, chi = theta.mu, theta.chi
    T = control.T

    log_K_diff = 6.0 * math.log(C0) + constants.log_K_diff_factor
    # pi_t = 1/(K_q * K_diff) * 1/(mu^4 v (mu+chi)^2), a positive constant
    log_pi = -(
        math.log(constants.K_q)
        + log_K_diff
        + max(4.0 * math.log(mu), 2.0 * math.log(mu + chi))
    )
    pi_fn = EnvelopeFn.constant(math.exp(log_pi), T, m=1.0)

    nphi = np.linalg.norm(
        np.array([control.value_at(t) for t in path.times]), axis=1
    )
    gamma_vals = math.sqrt(2.0) * mu * C0 * nphi
    gamma_fn = EnvelopeFn(ts=path.times, vals=gamma_vals)

    m_Q = 4.0 * math.sqrt(q) * C0 * mu
    h_Q = 1.0 / (2.0 * math.sqrt(q) * C0 * theta.nu_ctl)
    m_gamma, h_gamma = theta.eta_ctl, theta.h_ctl
    m_pi, h_pi = 1.0, np.inf
    h = min(h_Q, h_pi, h_gamma)

    alpha = (
        math.log(8.0 * math.e * (2.0 * math.pi * q) ** 0.25)
        + math.log(m_Q)
        + 4.0 * math.log(m_gamma)
        + math.log(m_pi)
    )
    detQ_T = float(np.linalg.det(0.5 * model.a_at(path.xT)))
    return BoundInputs(
        pi_fn=pi_fn, gamma_fn=gamma_fn,
        m_pi=m_pi, h_pi=h_pi, m_gamma=m_gamma, h_gamma=h_gamma,
        m_Q=m_Q, h_Q=h_Q, h=h, alpha=alpha,
        log_K_diff=log_K_diff, a=1.5, detQ_T=detQ_T, T=T,
    )


def log_bound_evolution(N, q, a_list, H_list, a_N, detM_N) -> BoundReport:
    """Tube-chain rate and terminal density bound for an evolution sequence.

    a_list holds a_1..a_N (only a_1..a_{N-1} enter the rate), H_list holds
    H_1..H_N (only H_2..H_N enter).  Returns both the density bound and the
    tube probability bound in logs, plus the per-step chain product.
    """
    a_list = [float(a) for a in a_list]
    H_list = [float(H) for H in H_list]
    if N < 1 or len(a_list) != N or len(H_list) != N:
        raise ValueError("need N >= 1 and exactly N values of a and H")
    if any(a < 1 for a in a_list) or any(H < 1 for H in H_list):
        raise ValueError("a_k and H_k must be >= 1")
    if detM_N <= 0:
        raise ValueError("detM_N must be positive")
    if a_N < 1:
        raise ValueError("a_N must be >= 1")

    theta = (
        math.log(64.0 * math.e**2 * math.sqrt(2.0 * q * math.pi))
        + sum(math.log(a) for a in a_list[: N - 1]) / (2.0 * N)
        + sum(math.log(H) for H in H_list[1:]) / N
    )
    log_tube = -N * q * theta
    # per-step chain product: the step factor applied N-1 times
    log_chain = (
        -(N - 1) * math.log(8.0 ** (q + 1) * math.e**2 * (2.0 * q * math.pi) ** (q / 2.0))
        - (q / 2.0) * sum(math.log(a) for a in a_list[: N - 1])
        - q * sum(math.log(H) for H in H_list[1:])
    )
    prefactor = -(
        math.log(4.0) + 2.0 + (q / 2.0) * math.log(2.0 * math.pi * a_N)
        + 0.5 * math.log(detM_N)
    )
    return BoundReport(
        formula_id="thm15",
        log_lower_bound=prefactor + log_tube,
        prefactor_log=prefactor,
        exponent=-log_tube,
        trace={
            "N": N, "q": q, "theta_rate": theta,
            "log_tube_bound": log_tube, "log_chain_product": log_chain,
            "a_list": a_list, "H_list": H_list, "a_N": a_N, "detM_N": detM_N,
        },
    )


def log_bound_thm17(inputs: BoundInputs, a: float, q: int, T: float, detQ_T: float) -> BoundReport:
    """Density bound from the envelope form: prefactor minus
    q(alpha + a/2) times the grid-count integral."""
    if a < 1:
        raise ValueError("a must be >= 1")
    if detQ_T <= 0:
        raise ValueError("detQ_T must be positive")
    integral = grid_count_bound(
        inputs.pi_fn, inputs.gamma_fn, inputs.h, inputs.m_Q, inputs.m_pi, T
    )
    prefactor = -(
        math.log(4.0) + 2.0
        + (q / 2.0) * math.log(2.0 * math.pi * T * inputs.m_Q * a)
        + 0.5 * math.log(detQ_T)
    )
    exponent = q * (inputs.alpha + a / 2.0) * integral
    # the proof-internal rate form, reported alongside (see module notes)
    theta_step5_cap = inputs.alpha + a / 2.0
    return BoundReport(
        formula_id="thm17",
        log_lower_bound=prefactor - exponent,
        prefactor_log=prefactor,
        exponent=exponent,
        trace={
            "q": q, "T": T, "a": a, "detQ_T": detQ_T,
            "exponent_integral": integral,
            "alpha": inputs.alpha,
            "theta_step5_cap": theta_step5_cap,
            "inputs": inputs.to_dict(),
        },
    )


def log_bound_thm21(
    model: DiffusionModel,
    path: SkeletonPath,
    growth: GrowthWindow,
    mu: float,
    chi: float,
    constants: UniversalConstants,
    T: float,
    y,
) -> BoundReport:
    """Growth-envelope form of the density bound.

    Requires rho(x_t) >= 1/mu and sqrt(lambda_min(x_t)) >= 1/chi along the
    path and a valid growth window.
    """
    q = model.q
    C0 = model.C0
    if growth.h_G is None or growth.eta_M is None:
        raise ValueError("growth window is empty; cannot evaluate the bound")
    for t, x in zip(path.times, path.states):
        sp = spectral(model, x)
        if sp.rho < 1.0 / mu - 1e-12:
            raise ValueError(f"rho(x_t) < 1/mu at t={t:.6g}")
        if math.sqrt(sp.lambda_min) < 1.0 / chi - 1e-12:
            raise ValueError(f"sqrt(lambda_min) < 1/chi at t={t:.6g}")

    det_y = spectral(model, y).detSS
    if det_y <= 0:
        return BoundReport(
            formula_id="thm21", log_lower_bound=-math.inf,
            prefactor_log=-math.inf, exponent=math.inf,
            trace={"diagnostic": "det sigma*sigma^T (y) = 0"},
        )
    prefactor = -(
        math.log(4.0) + 2.0
        + (q / 2.0) * math.log(6.0 * mu * math.sqrt(q) * math.pi * T)
        + 0.5 * math.log(det_y)
    )
    int_M2 = float(np.trapezoid(growth.M**2, growth.times))
    log_K_diff = 6.0 * math.log(C0) + constants.log_K_diff_factor
    bracket = (
        (C0**2 * mu**4 / T) * int_M2
        + max(mu**4, (mu + chi) ** 2) * math.exp(log_K_diff)
        + 1.0 / min(growth.h_G, growth.h_M)
    )
    exponent = (
        constants.K_q
        * T
        * (1.0 + math.log(C0) + math.log(mu) + math.log(growth.eta_M))
        * bracket
    )
    return BoundReport(
        formula_id="thm21",
        log_lower_bound=prefactor - exponent,
        prefactor_log=prefactor,
        exponent=exponent,
        trace={
            "q": q, "T": T, "mu": mu, "chi": chi, "C0": C0,
            "eta_M": growth.eta_M, "h_G": growth.h_G, "h_M": growth.h_M,
            "int_M2": int_M2, "log_K_diff": log_K_diff,
            "det_sigma_y": det_y,
            "constants": constants.to_dict(),
        },
    )


def log_bound_thm24(
    model: DiffusionModel,
    theta: ThetaParams,
    d_theta: float,
    T: float,
    y,
    constants: UniversalConstants,
) -> BoundReport:
    """Skeleton-distance form of the density bound; the headline formula."""
    q = model.q
    C0 = model.C0
    mu, chi = theta.mu, theta.chi
    if d_theta < 0:
        raise ValueError("d_theta must be nonnegative (or infinite)")
    det_y = spectral(model, y).detSS
    trace = {
        "q": q, "T": T, "C0": C0, "d_theta": d_theta,
        "theta": {
            "mu": mu, "chi": chi, "nu_ctl": theta.nu_ctl,
            "eta_ctl": theta.eta_ctl, "h_ctl": theta.h_ctl, "T": theta.T,
        },
        "constants": constants.to_dict(),
    }
    if det_y <= 0:
        trace["diagnostic"] = "det sigma*sigma^T (y) = 0; prefactor undefined"
        return BoundReport(
            formula_id="thm24", log_lower_bound=-math.inf,
            prefactor_log=-math.inf, exponent=math.inf, trace=trace,
        )
    prefactor = -(
        math.log(4.0) + 2.0
        + (q / 2.0) * math.log(6.0 * mu * math.sqrt(q) * math.pi * T)
        + 0.5 * math.log(det_y)
    )
    trace["det_sigma_y"] = det_y
    if math.isinf(d_theta):
        trace["diagnostic"] = "d_theta infinite (admissible class empty or not found)"
        return BoundReport(
            formula_id="thm24", log_lower_bound=-math.inf,
            prefactor_log=prefactor, exponent=math.inf, trace=trace,
        )
    log_K_diff = 6.0 * math.log(C0) + constants.log_K_diff_factor
    bracket = (
        C0**4 * mu**4 * d_theta**2
        + T * (
            max(mu**4, (mu + chi) ** 2) * math.exp(log_K_diff)
            + 1.0 / theta.h_ctl
            + 2.0 * C0 * theta.nu_ctl * math.sqrt(q)
        )
    )
    exponent = constants.K_q * (1.0 + math.log(C0 * mu * theta.eta_ctl)) * bracket
    trace["log_K_diff"] = log_K_diff
    return BoundReport(
        formula_id="thm24",
        log_lower_bound=prefactor - exponent,
        prefactor_log=prefactor,
        exponent=exponent,
        trace=trace,
    )
