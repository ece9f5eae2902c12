import math

import numpy as np
import pytest

from elmild.config import RunConfig, gen_initial_data
from elmild.diagnostics import (
    SmoothingFit,
    max_principle_check,
    phi_diagnostics,
    phi_refinement_study,
    scaling_invariance_check,
    smoothing_prediction,
    smoothing_rate_suite,
    sqrt_equivalence_check,
)
from elmild.domain import DomainError, director_field, make_domain, velocity_field
from elmild.iteration import linear_trajectory, picard_solve, uniform_times


def solve(cfg, level=1):
    cfg = cfg.replace(resolution=tuple(level * N for N in cfg.resolution), time_nodes=level * cfg.time_nodes)
    a, b = gen_initial_data(cfg)
    traj, trace = picard_solve(cfg.domain(), a, b, cfg.settings())
    assert trace.converged
    return traj


def base_config(**kw):
    return RunConfig().replace(**{"resolution": (32, 32), "time_nodes": 32, **kw})


class TestPhi:
    def test_equilibrium(self):
        traj = solve(base_config(velocity_norm=0.0, director_gradient_norm=0.0))
        rep = phi_diagnostics(traj)
        assert rep.max_sup_phi == 0.0
        assert rep.max_energy_residual == 0.0
        assert rep.max_transport == 0.0

    def test_manufactured_length(self, torus16):
        a = velocity_field(torus16, np.zeros((2,) + torus16.shape))
        b = director_field(torus16, np.broadcast_to(np.array([0.0, 0.0, 1.1])[:, None, None], (3,) + torus16.shape))
        rep = phi_diagnostics(linear_trajectory(torus16, a, b, uniform_times(0.1, 8)))
        assert rep.sup_phi[0] == pytest.approx(0.21, abs=1e-14)

    def test_initial_unit(self):
        rep = phi_diagnostics(solve(base_config()))
        assert rep.sup_phi[0] <= 1e-12

    def test_zero_velocity_drift_halves(self):
        cfg = RunConfig().replace(velocity_norm=0.0, director_gradient_norm=1e-2)
        reports = phi_refinement_study(lambda lv: solve(cfg, lv), [1, 2])
        assert reports[0].sup_phi[-1] <= 5e-3
        assert reports[1].max_sup_phi <= 0.5 * reports[0].max_sup_phi
        assert reports[1].drift_order >= 1.0

    def test_transport_cancels(self):
        rep = phi_diagnostics(solve(base_config(velocity_norm=1e-1, director_gradient_norm=1e-1)))
        assert rep.max_transport <= 1e-8

    def test_energy_identity_non_unit_data(self):
        # |b| != 1 makes every term of the balance O(1)
        dom = make_domain(2, None, 32)
        X, Y = dom.coordinates
        b = np.stack([0.3 * np.sin(X), 0.2 * np.cos(Y), 1.2 + 0.1 * np.cos(X + Y)])
        a = velocity_field(dom, np.zeros((2,) + dom.shape))
        resid = []
        for steps in (32, 64):
            traj, _ = picard_solve(dom, a, director_field(dom, b), RunConfig().replace(time_nodes=steps).settings())
            rep = phi_diagnostics(traj)
            resid.append(rep.max_energy_residual)
            assert np.all(np.isfinite(rep.energy_residual))
        assert rep.max_sup_phi > 0.1
        assert resid[1] < resid[0]
        assert resid[0] / resid[1] >= 2.0


class TestSmoothing:
    def test_prediction(self):
        assert smoothing_prediction(2, 2, 2, "none") == 0.0
        assert smoothing_prediction(2, math.inf, 2, "pdiv") == -1.0
        assert smoothing_prediction(3, 3, 3, "gradient") == -0.5

    def test_fit_flags(self):
        fit = SmoothingFit(2, 2, "none", 0.02, 0.0, 0.5, 1.0)
        assert fit.degenerate and not fit.passed
        ok = SmoothingFit(2, 4, "gradient", -0.74, -0.75, 0.999, 1.0)
        assert ok.passed and ok.rel_error == pytest.approx(0.01 / 0.75)

    @pytest.mark.parametrize(
        "pq,wrap",
        [((2.0, 2.0), "none"), ((2.0, 2.0), "gradient"), ((3.0, 3.0), "gradient"), ((2.0, math.inf), "pdiv")],
    )
    def test_examples(self, pq, wrap):
        dom = make_domain(2, None, 128)
        (fit,) = smoothing_rate_suite(dom, [pq], wraps=[wrap])
        assert fit.passed, fit.as_dict()


class TestScaling:
    def test_zero_data(self):
        cfg = base_config(velocity_norm=0.0, director_gradient_norm=0.0, e=(0.0, 0.0, 1.0))
        dom = cfg.domain()
        a = velocity_field(dom, np.zeros((2,) + dom.shape))
        b = director_field(dom, np.zeros((3,) + dom.shape))
        assert scaling_invariance_check(dom, a, b, cfg.settings()) == 0.0

    def test_equilibrium(self):
        cfg = base_config(velocity_norm=0.0, director_gradient_norm=0.0, e=(0.6, 0.0, 0.8))
        a, b = gen_initial_data(cfg)
        assert scaling_invariance_check(cfg.domain(), a, b, cfg.settings()) == 0.0

    def test_small_data(self):
        cfg = base_config(velocity_norm=1e-2, director_gradient_norm=1e-2)
        a, b = gen_initial_data(cfg)
        assert scaling_invariance_check(cfg.domain(), a, b, cfg.settings(), 2.0) <= 1e-6

    def test_box_rejected(self):
        cfg = base_config(director_bc="neumann-box")
        a, b = gen_initial_data(cfg)
        with pytest.raises(DomainError):
            scaling_invariance_check(cfg.domain(), a, b, cfg.settings())


class TestMaxPrinciple:
    def test_constant(self, torus16):
        from elmild.domain import SemigroupQuery, semigroup_apply
        from elmild.norms import lp_norm

        f = director_field(torus16, np.full((3,) + torus16.shape, 0.7))
        for t in (0.0, 0.1, 10.0):
            out = semigroup_apply(SemigroupQuery("heat", t), f)
            assert lp_norm(out, np.inf) / lp_norm(f, np.inf) == 1.0

    def test_mode(self, torus16):
        from elmild.domain import SemigroupQuery, scalar_field, semigroup_apply
        from elmild.norms import lp_norm

        X, Y = torus16.coordinates
        f = scalar_field(torus16, np.cos(X + 2 * Y))
        out = semigroup_apply(SemigroupQuery("heat", 0.2), f)
        assert lp_norm(out, np.inf) / lp_norm(f, np.inf) == pytest.approx(math.exp(-5 * 0.2), rel=1e-13)

    @pytest.mark.parametrize("bc", ["periodic-mean-split", "neumann-box", "dirichlet-box"])
    def test_batch(self, bc):
        assert max_principle_check(make_domain(2, None, 64, bc), 100) <= 1 + 1e-12


class TestSqrt:
    def test_eigenfunction(self, torus16):
        from elmild.domain import SemigroupQuery, gradient, scalar_field, semigroup_apply
        from elmild.norms import lp_norm

        X, _ = torus16.coordinates
        f = scalar_field(torus16, np.cos(3 * X))
        root = semigroup_apply(SemigroupQuery("heat", 0.0, "sqrt"), f)
        for p in (2.0, 3.0, 3.5):
            assert lp_norm(root, p) / lp_norm(gradient(f), p) == pytest.approx(1.0, abs=1e-14)

    @pytest.mark.parametrize("bc", ["periodic-mean-split", "neumann-box", "dirichlet-box"])
    def test_batch(self, bc):
        bounds = sqrt_equivalence_check(make_domain(2, None, 64, bc), (2.0, 3.0, 3.5), batch_size=20)
        lo, hi = bounds[2.0]
        assert abs(lo - 1) <= 1e-10 and abs(hi - 1) <= 1e-10
        for p in (3.0, 3.5):
            lo, hi = bounds[p]
            assert 0 < lo <= hi < math.inf
            assert 0.1 <= lo and hi <= 10.0
