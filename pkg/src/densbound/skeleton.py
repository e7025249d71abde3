"""Skeleton paths: the controlled ODE dx = sigma(x) phi dt and its checks.

Controls are piecewise constant on a grid; the L2 class of the theory is
approached by grid refinement.  The integrator is classical RK4 restarted at
every control breakpoint, so the right-hand side is smooth on each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import DiffusionModel, DegenerateModelError, growth_norm, spectral


@dataclass(frozen=True)
class Control:
    """Piecewise-constant control: value values[k] on [grid[k], grid[k+1])."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.atleast_2d(np.asarray(self.values, dtype=float))
        if g.ndim != 1 or len(g) < 2:
            raise ValueError("control grid needs at least two times")
        if not np.all(np.diff(g) > 0):
            raise ValueError("control grid must be strictly increasing")
        if not np.isfinite(g).all() or not np.isfinite(v).all():
            raise ValueError("control contains non-finite entries")
        if g[0] != 0.0:
            raise ValueError("control grid must start at 0")
        if v.shape[0] != len(g) - 1:
            raise ValueError("need one value row per grid cell")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @property
    def T(self) -> float:
        return float(self.grid[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        """Right-continuous evaluation; the last cell is closed at T."""
        k = int(np.searchsorted(self.grid, t, side="right") - 1)
        k = min(max(k, 0), len(self.values) - 1)
        return self.values[k]


@dataclass(frozen=True)
class SkeletonPath:
    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    @property
    def x0(self) -> np.ndarray:
        return self.states[0]

    @property
    def xT(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class ThetaParams:
    """Admissibility parameters (mu, chi, nu_ctl, eta_ctl, h_ctl) plus horizon."""

    mu: float
    chi: float
    nu_ctl: float
    eta_ctl: float
    h_ctl: float
    T: float

    def __post_init__(self):
        if self.mu < 1 or self.eta_ctl < 1 or self.nu_ctl < 1:
            raise ValueError("mu, eta_ctl, nu_ctl must be >= 1")
        if self.chi <= 0 or self.h_ctl <= 0 or self.T <= 0:
            raise ValueError("chi, h_ctl, T must be positive")


class IntegrationBlowupError(RuntimeError):
    def __init__(self, t: float):
        self.time = t
        super().__init__(f"non-finite skeleton state at t={t:.6g}")


def integrate_skeleton(
    model: DiffusionModel, control: Control, x0, step: float,
    with_derivs: bool = True,
) -> SkeletonPath:
    """RK4 integration of dx = sigma(x) phi dt aligned to control breakpoints."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = model._check_point(x0)
    times = [0.0]
    states = [x.copy()]

    for k in range(len(control.values)):
        t0, t1 = control.grid[k], control.grid[k + 1]
        phi = control.values[k]
        n = max(1, int(np.ceil((t1 - t0) / step)))
        h = (t1 - t0) / n

        def f(y):
            return model.sigma_at(y) @ phi

        t = t0
        for _ in range(n):
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            if not np.isfinite(x).all():
                raise IntegrationBlowupError(t)
            times.append(t)
            states.append(x.copy())

    times = np.array(times)
    # snap accumulated roundoff on breakpoint times
    times[-1] = control.T
    states = np.array(states)
    if with_derivs:
        derivs = np.array(
            [model.sigma_at(s) @ control.value_at(t) for t, s in zip(times, states)]
        )
    else:
        derivs = np.zeros_like(states)
    return SkeletonPath(times=times, states=states, derivs=derivs)


def control_norm(control: Control) -> float:
    """Exact L2 norm of a piecewise-constant control."""
    dt = np.diff(control.grid)
    return float(np.sqrt(np.sum(np.sum(control.values**2, axis=1) * dt)))


def recover_control(model: DiffusionModel, path: SkeletonPath) -> Control:
    """Pointwise least-norm control phi_t = sigma^T (sigma sigma^T)^{-1} dx/dt."""
    values = []
    for t, x, v in zip(path.times, path.states, path.derivs):
        s = model.sigma_at(x)
        a = s @ s.T
        w = np.linalg.eigvalsh(a)
        if w[0] <= 1e-12 * max(1.0, w[-1]):
            raise DegenerateModelError(
                f"sigma*sigma^T singular along path at t={t:.6g}"
            )
        values.append(s.T @ np.linalg.solve(a, v))
    # one piece per sample interval, valued at the left endpoint
    return Control(grid=path.times, values=np.array(values[:-1]))


@dataclass
class AdmissibilityReport:
    """Per-constraint outcome for membership in the admissible control class.

    Margins are signed, positive = satisfied; the ratio margin is
    eta - (worst in-window ratio), -inf when the control vanishes somewhere
    in a window where it is elsewhere nonzero.
    """

    endpoint_ok: bool
    rho_ok: bool
    lambda_ok: bool
    sup_ok: bool
    ratio_ok: bool
    margins: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return (
            self.endpoint_ok
            and self.rho_ok
            and self.lambda_ok
            and self.sup_ok
            and self.ratio_ok
        )

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "endpoint_ok": self.endpoint_ok,
            "rho_ok": self.rho_ok,
            "lambda_ok": self.lambda_ok,
            "sup_ok": self.sup_ok,
            "ratio_ok": self.ratio_ok,
            "margins": {k: float(v) for k, v in self.margins.items()},
        }


def check_admissible(
    model: DiffusionModel,
    control: Control,
    path: SkeletonPath,
    theta: ThetaParams,
    y=None,
    endpoint_tol: float | None = None,
) -> AdmissibilityReport:
    """Check every admissibility constraint on the sampled path.

    y is the required endpoint; pass None to skip the endpoint test (the
    report then marks it satisfied).  Infeasibility is a result, not an
    error.
    """
    margins: dict[str, float] = {}

    if y is None:
        endpoint_ok = True
        margins["endpoint"] = np.inf
    else:
        y = np.asarray(y, dtype=float)
        if endpoint_tol is None:
            endpoint_tol = 1e-6 * (1.0 + float(np.linalg.norm(y)))
        miss = float(np.linalg.norm(path.xT - y))
        margins["endpoint"] = endpoint_tol - miss
        endpoint_ok = miss <= endpoint_tol

    rho_m = np.inf
    lam_m = np.inf
    for x in path.states:
        sp = spectral(model, x)
        rho_m = min(rho_m, sp.rho - 1.0 / theta.mu)
        lam_m = min(lam_m, np.sqrt(sp.lambda_min) - 1.0 / theta.chi)
    margins["rho"] = rho_m
    margins["lambda"] = lam_m

    nphi = np.linalg.norm(control.values, axis=1)
    margins["sup"] = float(theta.nu_ctl - nphi.max())

    # ratio constraint over control cells: for cell i, every cell whose time
    # interval comes within h_ctl must have norm <= eta * |phi_i|.  A zero
    # cell inside the window of a nonzero one is infeasible outright.
    ratio_margin = np.inf
    ratio_ok = True
    for i in range(len(nphi)):
        lo = control.grid[i] - theta.h_ctl
        hi = control.grid[i + 1] + theta.h_ctl
        window = (control.grid[1:] > lo) & (control.grid[:-1] < hi)
        wvals = nphi[window]
        if wvals.size == 0:
            continue
        if nphi[i] == 0.0:
            if wvals.max() > 0.0:
                ratio_ok = False
                ratio_margin = -np.inf
            continue
        ratio_margin = min(ratio_margin, theta.eta_ctl - wvals.max() / nphi[i])
    if np.isfinite(ratio_margin):
        ratio_ok = ratio_ok and ratio_margin >= -1e-12
    margins["ratio"] = ratio_margin

    return AdmissibilityReport(
        endpoint_ok=endpoint_ok,
        rho_ok=rho_m >= -1e-12,
        lambda_ok=lam_m >= -1e-12,
        sup_ok=margins["sup"] >= -1e-12,
        ratio_ok=ratio_ok,
        margins=margins,
    )


@dataclass
class GrowthWindow:
    """Largest probed window h_G satisfying the growth-window condition,
    together with the envelope samples and their ratio constant."""

    times: np.ndarray
    M: np.ndarray
    h_G: float | None
    eta_M: float | None
    h_M: float | None
    diagnostics: str = ""
    conclusion_ok: bool | None = None


def _window_integral(times, f2, t0, h):
    """Trapezoid of f^2 over [t0, min(t0+h, T)] on the sampled grid."""
    t1 = min(t0 + h, times[-1])
    if t1 <= t0:
        return 0.0
    grid = np.linspace(t0, t1, 65)
    vals = np.interp(grid, times, f2)
    return float(np.trapezoid(vals, grid))


def growth_window(
    model: DiffusionModel,
    path: SkeletonPath,
    probe_h,
    M=None,
    h_M: float | None = None,
) -> GrowthWindow:
    """Find the largest probe h in (0,1) with h * int_t^{t+h} M^2 <= 1/(4q)
    at every sampled t, and verify the resulting norm-comparison conclusion
    N(x_s) <= 4 N(x_t) on in-window pairs.
    """
    q = model.q
    times = path.times
    if M is None:
        Ns = np.array([growth_norm(model, x) for x in path.states])
        M = np.linalg.norm(path.derivs, axis=1) / Ns
    else:
        M = np.asarray(M, dtype=float)
        Ns = np.array([growth_norm(model, x) for x in path.states])
    M2 = M * M

    best = None
    for h in sorted(float(p) for p in probe_h):
        if not (0 < h < 1):
            continue
        ok = all(
            h * _window_integral(times, M2, t0, h) <= 1.0 / (4 * q) + 1e-12
            for t0 in times
        )
        if ok:
            best = h
    if best is None:
        return GrowthWindow(
            times=times, M=M, h_G=None, eta_M=None, h_M=None,
            diagnostics="no probe value satisfies the growth-window condition",
        )

    # ratio constant of the envelope over its own window
    if h_M is None:
        h_M = best
    eta_M = 1.0
    pos = M > 0
    for i, t0 in enumerate(times):
        if not pos[i]:
            continue
        window = np.abs(times - t0) <= h_M
        wv = M[window]
        if np.any(wv <= 0):
            eta_M = np.inf
        else:
            eta_M = max(eta_M, float(wv.max() / M[i]))

    # conclusion: N(x_s) <= 4 N(x_t) for |s - t| <= h_G
    ok = True
    for i, t0 in enumerate(times):
        window = np.abs(times - t0) <= best
        if np.any(Ns[window] > 4.0 * Ns[i] + 1e-12):
            ok = False
    return GrowthWindow(
        times=times, M=M, h_G=best, eta_M=eta_M, h_M=h_M, conclusion_ok=ok
    )
