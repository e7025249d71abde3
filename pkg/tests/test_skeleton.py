"""Skeleton ODE, control recovery, admissibility, growth window."""

import math

import numpy as np
import pytest

from densbound.catalog import build_model, identity_model, sine_model
from densbound.model import DegenerateModelError, DiffusionModel, growth_norm
from densbound.skeleton import (
    Control,
    ThetaParams,
    check_admissible,
    control_norm,
    growth_window,
    integrate_skeleton,
    recover_control,
)


def const_control(value, T=1.0):
    return Control(grid=np.array([0.0, T]), values=np.array([value]))


class TestIntegrate:
    def test_constant_velocity_line(self):
        m = identity_model(q=2)
        path = integrate_skeleton(m, const_control([1.0, 0.0]), [0.0, 0.0], 0.05)
        assert path.xT == pytest.approx([1.0, 0.0])

    def test_separable_exponential(self):
        m = DiffusionModel(
            q=1, d=1, sigma=lambda x: np.array([[x[0]]]), b=lambda x: np.zeros(1),
            eps=(1, 1), C0=2.0,
        )
        c = 0.5
        path = integrate_skeleton(m, const_control([c]), [1.0], 0.01)
        assert path.xT[0] == pytest.approx(math.exp(c), rel=1e-9)

    def test_fourth_order_convergence(self):
        m = sine_model()
        ctrl = const_control([0.7])
        xs = {s: integrate_skeleton(m, ctrl, [0.0], s).xT[0] for s in (0.1, 0.05, 0.025)}
        ratio = abs(xs[0.1] - xs[0.025]) / abs(xs[0.05] - xs[0.025])
        assert 12.0 < ratio < 20.0

    def test_derivatives_match_rhs(self):
        m = sine_model()
        ctrl = const_control([0.7])
        path = integrate_skeleton(m, ctrl, [0.0], 0.05)
        for t, x, v in zip(path.times, path.states, path.derivs):
            assert v == pytest.approx(m.sigma_at(x) @ ctrl.value_at(t))


class TestControlNorm:
    def test_constant(self):
        assert control_norm(const_control([1.0, 0.0], T=2.0)) == pytest.approx(
            math.sqrt(2.0)
        )

    def test_zero(self):
        assert control_norm(const_control([0.0, 0.0])) == 0.0

    def test_two_pieces(self):
        c = Control(grid=np.array([0.0, 1.0, 2.0]), values=np.array([[1.0], [2.0]]))
        assert control_norm(c) == pytest.approx(math.sqrt(5.0))


class TestRecoverControl:
    def test_identity_line(self):
        m = identity_model(q=2)
        path = integrate_skeleton(m, const_control([0.4, -0.3]), [0.0, 0.0], 0.05)
        rec = recover_control(m, path)
        assert np.allclose(rec.values, [0.4, -0.3])

    def test_round_trip_elliptic(self):
        m = sine_model()
        ctrl = Control(grid=np.array([0.0, 0.5, 1.0]), values=np.array([[0.6], [1.1]]))
        path = integrate_skeleton(m, ctrl, [0.0], 0.02)
        rec = recover_control(m, path)
        for t in (0.25, 0.75):
            assert rec.value_at(t) == pytest.approx(ctrl.value_at(t), abs=1e-6)

    def test_degenerate_reports_time(self):
        m = DiffusionModel(
            q=1, d=1, sigma=lambda x: np.zeros((1, 1)), b=lambda x: np.zeros(1),
            eps=(1, 0), C0=1.0,
        )
        path = integrate_skeleton(m, const_control([1.0]), [0.0], 0.25)
        with pytest.raises(DegenerateModelError):
            recover_control(m, path)

    def test_least_norm_property(self):
        # adding a kernel vector of sigma gives another valid pre-image with
        # a strictly larger norm
        m = DiffusionModel(
            q=1, d=2,
            sigma=lambda x: np.array([[1.0, 0.0]]),
            b=lambda x: np.zeros(1),
            eps=(1, 0), C0=2.0,
        )
        path = integrate_skeleton(m, const_control([0.8, 0.0]), [0.0], 0.25)
        rec = recover_control(m, path)
        for v in rec.values:
            w = v + np.array([0.0, 1.3])  # kernel direction of sigma
            assert np.linalg.norm(v) <= np.linalg.norm(w) + 1e-12

    def test_energy_identity(self):
        m = sine_model()
        ctrl = const_control([0.9])
        path = integrate_skeleton(m, ctrl, [0.0], 0.05)
        rec = recover_control(m, path)
        for i, (x, v) in enumerate(zip(path.states[:-1], path.derivs[:-1])):
            a = m.a_at(x)
            lhs = float(v @ np.linalg.solve(a, v))
            assert lhs == pytest.approx(np.linalg.norm(rec.values[i]) ** 2, rel=1e-9)


class TestAdmissibility:
    def theta(self, **kw):
        base = dict(mu=2.0, chi=2.0, nu_ctl=100.0, eta_ctl=1.0, h_ctl=1.0, T=1.0)
        base.update(kw)
        return ThetaParams(**base)

    def test_identity_feasible(self):
        m = identity_model(q=2)
        ctrl = const_control([1.0, 0.0])
        path = integrate_skeleton(m, ctrl, [0.0, 0.0], 0.05)
        rep = check_admissible(m, ctrl, path, self.theta())
        assert rep.feasible

    def test_chi_infeasible(self):
        m = identity_model(q=2)
        ctrl = const_control([1.0, 0.0])
        path = integrate_skeleton(m, ctrl, [0.0, 0.0], 0.05)
        rep = check_admissible(m, ctrl, path, self.theta(chi=0.5))
        assert not rep.lambda_ok
        assert not rep.feasible

    def test_ratio_violation(self):
        m = identity_model(q=1)
        ctrl = Control(grid=np.array([0.0, 0.5, 1.0]), values=np.array([[1.0], [3.0]]))
        path = integrate_skeleton(m, ctrl, [0.0], 0.05)
        rep = check_admissible(m, ctrl, path, self.theta(eta_ctl=2.0))
        assert not rep.ratio_ok

    def test_monotone_in_theta(self):
        m = identity_model(q=2)
        ctrl = const_control([1.0, 0.0])
        path = integrate_skeleton(m, ctrl, [0.0, 0.0], 0.05)
        rep = check_admissible(m, ctrl, path, self.theta())
        assert rep.feasible
        tight = self.theta(nu_ctl=1.0 + 1e-9, eta_ctl=1.0)
        assert check_admissible(m, ctrl, path, tight).feasible


class TestGrowthWindow:
    def test_constant_envelope_algebra(self):
        # constant M = m: the window condition reads h^2 m^2 <= 1/(4q)
        m = identity_model(q=1)
        ctrl = const_control([2.0])
        path = integrate_skeleton(m, ctrl, [0.0], 0.05)
        mm = 2.0
        limit = 1.0 / (2.0 * mm)  # q = 1
        probes = [0.1, 0.2, 0.24, 0.26, 0.3, 0.5]
        gw = growth_window(m, path, probes, M=np.full(len(path.times), mm))
        assert gw.h_G == max(p for p in probes if p <= limit + 1e-12)

    def test_thm24_window_choice(self):
        # with M_t = C0 * |phi_t| and |phi| <= nu, h = 1/(2 sqrt(q) C0 nu)
        m = sine_model()
        nu = 0.9
        ctrl = const_control([nu])
        path = integrate_skeleton(m, ctrl, [0.0], 0.02)
        h_star = 1.0 / (2.0 * m.C0 * nu)
        M = np.full(len(path.times), m.C0 * nu)
        gw = growth_window(m, path, [h_star], M=M)
        assert gw.h_G == pytest.approx(h_star)
        assert gw.conclusion_ok

    def test_norm_comparison_conclusion(self):
        m = sine_model()
        ctrl = const_control([1.0])
        path = integrate_skeleton(m, ctrl, [0.0], 0.02)
        gw = growth_window(m, path, [0.05, 0.1, 0.2])
        assert gw.h_G is not None
        Ns = np.array([growth_norm(m, x) for x in path.states])
        for i, t0 in enumerate(path.times):
            window = np.abs(path.times - t0) <= gw.h_G
            assert np.all(Ns[window] <= 4.0 * Ns[i] + 1e-12)

    def test_no_probe_fits(self):
        m = identity_model(q=1)
        ctrl = const_control([1.0])
        path = integrate_skeleton(m, ctrl, [0.0], 0.05)
        gw = growth_window(m, path, [0.9], M=np.full(len(path.times), 50.0))
        assert gw.h_G is None
        assert gw.diagnostics


class TestControlValidation:
    def test_grid_must_start_at_zero(self):
        with pytest.raises(ValueError):
            Control(grid=np.array([0.5, 1.0]), values=np.array([[1.0]]))

    def test_value_count(self):
        with pytest.raises(ValueError):
            Control(grid=np.array([0.0, 0.5, 1.0]), values=np.array([[1.0]]))

    def test_theta_validation(self):
        with pytest.raises(ValueError):
            ThetaParams(mu=0.5, chi=1.0, nu_ctl=1.0, eta_ctl=1.0, h_ctl=1.0, T=1.0)
