"""Discrete evolution chains: mollifier, Gaussian minorization, Gram
perturbation law, and a Monte Carlo simulator for the tube-chain bounds.

The chain is F_k = F_{k-1} + J_k + R_k with conditionally Gaussian J_k and
a small remainder R_k; remainders are restricted to the zero and
quadratic-increment families, the only ones whose norm condition is
checkable without the full variational machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import gamma as gamma_fn


@dataclass(frozen=True)
class Mollifier:
    """Compactly supported bump phi_eta(y) = eta^{-q} c exp(-1/(1-|y/eta|^2)).

    The normalizing constant is fixed at construction by radial quadrature
    over the unit ball, so the integral over R^q is 1.
    """

    q: int
    eta: float = 1.0

    def __post_init__(self):
        if self.q < 1 or self.eta <= 0:
            raise ValueError("need q >= 1 and eta > 0")
        surface = 2.0 * math.pi ** (self.q / 2.0) / gamma_fn(self.q / 2.0)
        radial, _ = integrate.quad(
            lambda r: r ** (self.q - 1) * math.exp(-1.0 / (1.0 - r * r)), 0.0, 1.0
        )
        object.__setattr__(self, "_c", 1.0 / (surface * radial))

    @property
    def c(self) -> float:
        return self._c

    def __call__(self, y) -> np.ndarray:
        """Vectorized evaluation; y has shape (..., q)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        r2 = np.sum((y / self.eta) ** 2, axis=-1)
        out = np.zeros_like(r2)
        inside = r2 < 1.0
        out[inside] = (
            self._c * self.eta ** (-self.q) * np.exp(-1.0 / (1.0 - r2[inside]))
        )
        return out


def mollifier_eval(m: Mollifier, y) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (m.q,):
        raise ValueError(f"point has dimension {len(y)}, mollifier has q={m.q}")
    return float(m(y[None, :])[0])


def _gauss_legendre_grid(q: int, eta: float, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    x = x * eta
    w = w * eta
    grids = np.meshgrid(*([x] * q), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrids = np.meshgrid(*([w] * q), indexing="ij")
    ws = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, ws


def gaussian_minorization_check(
    M, a: float, V, z, eta: float, C=None, nodes: int = 64, slack: float = 1e-8
):
    """Quadrature check of the mollified-Gaussian lower bound.

    For a Gaussian with covariance C pinched between M and a*M and center
    within M^{-1}-distance 1 of z, the mollified density at z is at least
    1/(e^2 (2 pi a)^{q/2} sqrt(det M)) for any mollifier scale below the
    square root of M's smallest eigenvalue.  Returns (lhs, rhs, pass).
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    q = M.shape[0]
    if q > 3:
        raise ValueError("tensor quadrature supported for q <= 3 only")
    V = np.asarray(V, dtype=float).reshape(q)
    z = np.asarray(z, dtype=float).reshape(q)
    if a < 1:
        raise ValueError("a must be >= 1")
    delta_M = float(np.linalg.eigvalsh(M)[0])
    if not (0 < eta < math.sqrt(delta_M)):
        raise ValueError("eta must lie in (0, sqrt(smallest eigenvalue of M))")
    dist = float(np.sqrt((V - z) @ np.linalg.solve(M, V - z)))
    if dist > 1.0 + 1e-12:
        raise ValueError("center violates the M^{-1}-distance condition")
    C = M if C is None else np.atleast_2d(np.asarray(C, dtype=float))
    if np.linalg.eigvalsh(a * M - C)[0] < -1e-10 or np.linalg.eigvalsh(C - M)[0] < -1e-10:
        raise ValueError("covariance must satisfy M <= C <= a*M")

    moll = Mollifier(q=q, eta=eta)
    pts, ws = _gauss_legendre_grid(q, eta, nodes)
    Cinv = np.linalg.inv(C)
    mean = V - z
    diff = pts - mean
    expo = -0.5 * np.einsum("ni,ij,nj->n", diff, Cinv, diff)
    gauss = np.exp(expo) / ((2 * math.pi) ** (q / 2.0) * math.sqrt(np.linalg.det(C)))
    lhs = float(np.sum(ws * moll(pts) * gauss))
    rhs = 1.0 / (math.e**2 * (2 * math.pi * a) ** (q / 2.0) * math.sqrt(np.linalg.det(M)))
    return lhs, rhs, lhs >= rhs - slack


def gram_perturbation_check(U, W, slack: float = 1e-10):
    """Eigenvalue perturbation law for Gram matrices.

    With Gram(A) = A A^T (rows indexing the q components):
    det(Gram(U+W))^{1/q} >= lambda_min(Gram(U))/2 - lambda_max(Gram(W)).
    Returns (lhs, rhs, pass); a failure would be a bug, not an input issue.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if U.shape != W.shape:
        raise ValueError("U and W must have the same shape")
    q = U.shape[0]
    g_sum = (U + W) @ (U + W).T
    det = max(float(np.linalg.det(g_sum)), 0.0)
    lhs = det ** (1.0 / q)
    rhs = 0.5 * float(np.linalg.eigvalsh(U @ U.T)[0]) - float(
        np.linalg.eigvalsh(W @ W.T)[-1]
    )
    return lhs, rhs, lhs >= rhs - slack


@dataclass
class StepSpec:
    """One chain step: Gaussian kernel matrix and a remainder family."""

    kernel: np.ndarray  # (q, d), J_k = kernel @ dB over the step
    remainder: str = "zero"  # "zero" | "quadratic"
    rem_eps: float = 0.0


@dataclass
class EvolutionConfig:
    """Parameters of a discrete chain, validated on construction."""

    times: np.ndarray  # N+1 grid times
    F0: np.ndarray
    M: list  # M_1..M_N, SPD (q, q)
    a: list  # a_1..a_N, >= 1
    H: list  # H_1..H_N, >= 1, H_k^2 M_k >= M_{k-1} verified for k >= 2
    x: list  # waypoints x_1..x_N
    steps: list  # StepSpec per step

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.F0 = np.asarray(self.F0, dtype=float)
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        N = self.N
        q = self.q
        if not (len(self.M) == len(self.a) == len(self.H) == len(self.x) == len(self.steps) == N):
            raise ValueError("per-step lists must all have length N")
        self.M = [np.atleast_2d(np.asarray(Mk, dtype=float)) for Mk in self.M]
        self.x = [np.asarray(xk, dtype=float).reshape(q) for xk in self.x]
        for k in range(N):
            if np.linalg.eigvalsh(self.M[k])[0] <= 0:
                raise ValueError(f"M_{k + 1} is not positive definite")
            if self.a[k] < 1 or self.H[k] < 1:
                raise ValueError("a_k and H_k must be >= 1")
            if k >= 1:
                gap = self.H[k] ** 2 * self.M[k] - self.M[k - 1]
                if np.linalg.eigvalsh(gap)[0] < -1e-10:
                    raise ValueError(f"H_{k + 1}^2 M_{k + 1} >= M_{k} fails")
            prev = self.F0 if k == 0 else self.x[k - 1]
            d = self.norm_k(k, self.x[k] - prev)
            if d > 0.25 + 1e-12:
                raise ValueError(
                    f"waypoint step {k + 1} too long: |x_k - x_(k-1)|_k = {d:.4g} > 1/4"
                )
            # ellipticity of the Gaussian part: a_k M_k >= C(J_k) >= M_k
            delta = self.times[k + 1] - self.times[k]
            ker = np.atleast_2d(np.asarray(self.steps[k].kernel, dtype=float))
            C = delta * ker @ ker.T
            if (np.linalg.eigvalsh(self.a[k] * self.M[k] - C)[0] < -1e-10
                    or np.linalg.eigvalsh(C - self.M[k])[0] < -1e-10):
                raise ValueError(f"step {k + 1} kernel violates M_k <= C(J_k) <= a_k M_k")

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def q(self) -> int:
        return len(np.atleast_1d(self.F0))

    def delta(self, k: int) -> float:
        return float(self.times[k + 1] - self.times[k])

    def delta_min_eig(self, k: int) -> float:
        return float(np.linalg.eigvalsh(self.M[k])[0])

    def norm_k(self, k: int, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ np.linalg.solve(self.M[k], v)))


def remainder_norm_threshold(cfg: EvolutionConfig, constants, k: int) -> float:
    """Log of the theoretical remainder-size threshold 1/(C_q a_k^{4(q+1)^2}).

    Astronomically small with the literal dimensional constant; the
    simulator therefore also accepts a user-relaxed threshold.
    """
    q = cfg.q
    return -(constants.log_C_q + 4.0 * (q + 1) ** 2 * math.log(cfg.a[k]))


def quadratic_remainder_l2_norm(eps: float, delta: float, M) -> float:
    """Closed-form L2-layer Sobolev norm (order 2) of R = eps*(dB)^2, scaled
    by M^{-1/2}, for a scalar step.

    |R|^2 + int |D R|^2 + int int |D^2 R|^2 = eps^2((dB)^4 + 4 delta (dB)^2
    + 4 delta^2); its second moment under dB ~ N(0, delta) gives
    E ||R||^2 = 11 eps^2 delta^2.
    """
    M = float(np.atleast_2d(np.asarray(M, dtype=float))[0, 0])
    return abs(eps) * delta * math.sqrt(11.0) / math.sqrt(M)


def _wilson_interval(successes: int, n: int, z: float = 2.5758293035489004):
    """99% Wilson score interval."""
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EvolutionStats:
    p_tube: list  # empirical P(A_k), k = 1..N
    p_tube_ci: tuple  # Wilson 99% CI for P(A_N)
    log_tube_bound: float  # -N q theta from the chain rate
    tube_pass: bool
    chain_pass: bool
    chain_details: list
    density_checks: list = field(default_factory=list)
    n_paths: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "p_tube": self.p_tube,
            "p_tube_ci": list(self.p_tube_ci),
            "log_tube_bound": self.log_tube_bound,
            "tube_pass": self.tube_pass,
            "chain_pass": self.chain_pass,
            "chain_details": self.chain_details,
            "density_checks": self.density_checks,
            "n_paths": self.n_paths,
            "seed": self.seed,
        }


def simulate_evolution(
    cfg: EvolutionConfig,
    z=None,
    eta: float | None = None,
    n_paths: int = 10_000,
    seed: int = 0,
    density_requests: list | None = None,
    n_inner: int = 200,
    density_path_cap: int = 20_000,
) -> EvolutionStats:
    """Monte Carlo of the chain, with tube-probability and mollified-density
    checks against the theoretical lower bounds.

    density_requests is a list of (k, z) pairs (1-based step index); for
    zero-remainder steps the conditional expectation is computed by
    quadrature per path, otherwise by nested Monte Carlo on a capped subset
    of tube paths.  Counter-based generator keyed on the seed, so results
    are reproducible and schedule independent.
    """
    if n_paths < 1000:
        raise ValueError("n_paths must be at least 1000")
    q = cfg.q
    N = cfg.N
    rng = np.random.default_rng(np.random.Philox(seed))

    F = np.tile(cfg.F0, (n_paths, 1))
    in_tube = np.ones(n_paths, dtype=bool)
    p_tube = []
    tube_counts = []
    F_prev_by_step = []
    for k in range(N):
        diff = F - cfg.x[k]
        Minv = np.linalg.inv(cfg.M[k])
        d2 = np.einsum("ni,ij,nj->n", diff, Minv, diff)
        in_tube &= d2 < 0.25  # strict |.|_k < 1/2
        tube_counts.append(int(in_tube.sum()))
        p_tube.append(in_tube.mean())
        F_prev_by_step.append(F.copy())

        step = cfg.steps[k]
        delta = cfg.delta(k)
        ker = np.atleast_2d(np.asarray(step.kernel, dtype=float))
        d_b = ker.shape[1]
        dB = rng.standard_normal((n_paths, d_b)) * math.sqrt(delta)
        J = dB @ ker.T
        if step.remainder == "zero":
            R = 0.0
        elif step.remainder == "quadratic":
            if d_b != q:
                raise ValueError("quadratic remainder requires kernel with d = q")
            R = step.rem_eps * dB**2
        else:
            raise ValueError(f"unknown remainder family {step.remainder!r}")
        F = F + J + R

    ci = _wilson_interval(tube_counts[-1], n_paths)

    # chain rate from the configured parameters
    theta = (
        math.log(64.0 * math.e**2 * math.sqrt(2.0 * q * math.pi))
        + sum(math.log(a) for a in cfg.a[: N - 1]) / (2.0 * N)
        + sum(math.log(H) for H in cfg.H[1:]) / N
    )
    log_tube_bound = -N * q * theta
    tube_pass = math.log(max(ci[0], 1e-300)) >= log_tube_bound

    # per-step factor check within 3 Monte Carlo standard errors
    chain_details = []
    chain_pass = True
    prev_count = n_paths
    for k in range(N):
        factor = 1.0 / (
            8.0 ** (q + 1)
            * cfg.H[k] ** q
            * math.e**2
            * (2.0 * q * (cfg.a[k - 1] if k >= 1 else cfg.a[0]) * math.pi) ** (q / 2.0)
        )
        p_k = tube_counts[k] / n_paths
        p_prev = prev_count / n_paths
        se = math.sqrt(max(p_k * (1 - p_k), 1e-12) / n_paths)
        ok = p_k >= factor * p_prev - 3.0 * se
        chain_pass &= ok
        chain_details.append(
            {"k": k + 1, "p_k": p_k, "p_prev": p_prev, "factor": factor, "pass": ok}
        )
        prev_count = tube_counts[k]

    # mollified conditional density checks
    density_checks = []
    if density_requests:
        for (k, zk) in density_requests:
            k0 = k - 1
            zk = np.asarray(zk, dtype=float).reshape(q)
            delta_k = cfg.delta(k0)
            eta_k = eta if eta is not None else 0.5 * math.sqrt(cfg.delta_min_eig(k0))
            if eta_k > math.sqrt(cfg.delta_min_eig(k0)):
                raise ValueError("eta exceeds sqrt of the smallest eigenvalue of M_k")
            dz = cfg.norm_k(k0, cfg.x[k0] - zk)
            bound = 1.0 / (
                4.0 * math.e**2
                * (2.0 * math.pi * cfg.a[k0]) ** (q / 2.0)
                * math.sqrt(np.linalg.det(cfg.M[k0]))
            )
            # recompute tube membership up to step k on the stored prefixes
            sel = np.ones(n_paths, dtype=bool)
            for i in range(k0 + 1):
                diff = F_prev_by_step[i] - cfg.x[i]
                Minv = np.linalg.inv(cfg.M[i])
                d2 = np.einsum("ni,ij,nj->n", diff, Minv, diff)
                sel &= d2 < 0.25
            Fprev = F_prev_by_step[k0][sel][:density_path_cap]
            step = cfg.steps[k0]
            ker = np.atleast_2d(np.asarray(step.kernel, dtype=float))
            C = delta_k * ker @ ker.T
            moll = Mollifier(q=q, eta=eta_k)
            if step.remainder == "zero":
                pts, ws = _gauss_legendre_grid(q, eta_k, 48)
                Cinv = np.linalg.inv(C)
                detC = float(np.linalg.det(C))
                vals = np.empty(len(Fprev))
                mpts = moll(pts)
                norm = (2 * math.pi) ** (q / 2.0) * math.sqrt(detC)
                for i, fp in enumerate(Fprev):
                    diff = pts - (fp - zk)
                    g = np.exp(-0.5 * np.einsum("ni,ij,nj->n", diff, Cinv, diff)) / norm
                    vals[i] = np.sum(ws * mpts * g)
            else:
                sub = np.random.default_rng(np.random.Philox(seed + 1))
                vals = np.empty(len(Fprev))
                d_b = ker.shape[1]
                for i, fp in enumerate(Fprev):
                    dB = sub.standard_normal((n_inner, d_b)) * math.sqrt(delta_k)
                    Fk = fp + dB @ ker.T + step.rem_eps * dB**2
                    vals[i] = moll(Fk - zk).mean()
            est = float(vals.mean()) if len(vals) else 0.0
            se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
            applicable = dz <= 0.5 + 1e-12
            density_checks.append(
                {
                    "k": k, "z": zk.tolist(), "eta": eta_k,
                    "estimate": est, "se": se, "bound": bound,
                    "z_in_range": applicable,
                    "pass": (not applicable) or est >= bound - 3 * se,
                    "n_tube_paths": int(len(vals)),
                }
            )

    return EvolutionStats(
        p_tube=[float(p) for p in p_tube],
        p_tube_ci=ci,
        log_tube_bound=log_tube_bound,
        tube_pass=tube_pass,
        chain_pass=chain_pass,
        chain_details=chain_details,
        density_checks=density_checks,
        n_paths=n_paths,
        seed=seed,
    )
