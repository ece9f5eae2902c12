import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from elmild.certifier import (
    CertifierError,
    beta_fn,
    c3_integral,
    certify,
    k0_bounds,
    proof_constants,
    smallness_check,
    sup_exp_power,
)
from elmild.config import RunConfig, gen_initial_data
from elmild.domain import director_field, make_domain, velocity_field
from elmild.norms import lp_norm


def beta_oracle(x, y):
    return quad(lambda s: 1.0, 0, 1, weight="alg", wvar=(x - 1, y - 1), epsabs=0, epsrel=1e-13)[0]


def grid_sup(a, beta, T, points=1_000_000):
    t = np.linspace(T / points, T, points)
    return float(np.max(np.exp(-a * t) * t**beta))


def c3_oracle(omega, gamma, T, points=1_000_000):
    # v = s^{1-gamma} removes the endpoint singularity
    s1 = 1.0 - gamma
    v = np.linspace(0.0, T**s1, points)
    f = np.exp(-omega * v ** (1.0 / s1)) / s1
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(v)))


class TestBeta:
    def test_half_half(self):
        assert beta_fn(0.5, 0.5) == pytest.approx(math.pi, rel=1e-14)

    def test_one_one(self):
        assert beta_fn(1.0, 1.0) == pytest.approx(1.0, rel=1e-15)

    def test_quadrature_oracle(self):
        x = 1 - 3 * (1 / 3 - 1 / 3.5)
        y = 0.5 - 3 / 7
        assert abs(beta_fn(x, y) - beta_oracle(x, y)) <= 1e-8

    def test_names_violated_exponent(self):
        with pytest.raises(CertifierError, match="q too far"):
            # 1 - n(1/p - 1/q) <= 0 needs p < n; the beta arguments are checked first
            proof_constants(1.5, 100.0, 3, 1.0, 1.0)

    @pytest.mark.parametrize("x,y", [(0.0, 1.0), (1.0, -0.5)])
    def test_nonpositive(self, x, y):
        with pytest.raises(CertifierError):
            beta_fn(x, y)

    @settings(max_examples=30, deadline=None)
    @given(x=st.floats(0.05, 5), y=st.floats(0.05, 5))
    def test_against_quadrature(self, x, y):
        assert beta_fn(x, y) == pytest.approx(beta_oracle(x, y), rel=1e-8)


class TestSupExpPower:
    def test_zero_exponent(self):
        assert sup_exp_power(2.0, 0.0, 5.0) == 1.0

    def test_negative_exponent(self):
        assert sup_exp_power(1.0, -0.1, 1.0) == math.inf

    def test_capped_at_horizon(self):
        assert sup_exp_power(1.0, 2.0, 0.5) == pytest.approx(math.exp(-0.5) * 0.25, rel=1e-15)

    def test_infinite_horizon(self):
        assert sup_exp_power(1.0, 0.5, math.inf) == pytest.approx(math.exp(-0.5) * math.sqrt(0.5), rel=1e-15)


class TestProofConstants:
    def test_c3_p_equals_q(self):
        r = proof_constants(3.2, 3.2, 3, 2.0, math.inf)
        assert r.C3 == pytest.approx(0.5, rel=1e-15)

    @pytest.mark.parametrize("T", [1e-4, 0.1, 1.0, 10.0, math.inf])
    def test_c1_is_one_at_p_equal_n(self, T):
        assert proof_constants(3.0, 3.5, 3, 1.0, T).C1 == 1.0

    def test_grid_oracle(self):
        p, q, n, omega, T = 3.2, 3.4, 3, 1.0, 0.5
        r = proof_constants(p, q, n, omega, T)
        gamma = n * (1 / p - 1 / q)
        assert r.C1 == pytest.approx(grid_sup(omega / 2, 0.5 - n / (2 * p), T), rel=1e-6)
        assert r.C2 == pytest.approx(grid_sup(omega, 1 - n / p, T), rel=1e-6)
        assert r.C3 == pytest.approx(c3_oracle(omega, gamma, T), rel=1e-6)
        assert r.C_tilde == max(r.C1, r.C2, r.C3)

    def test_c3_infinite_horizon(self):
        gamma = 3 * (1 / 3 - 1 / 3.5)
        ref = quad(lambda s: np.exp(-s) * s**-gamma, 0, np.inf, epsabs=0, epsrel=1e-12)[0]
        assert c3_integral(1.0, gamma, math.inf) == pytest.approx(ref, rel=1e-9)

    def test_betas(self):
        p, q, n = 3.0, 3.5, 3
        r = proof_constants(p, q, n, 1.0, 1.0)
        g = n * (1 / p - 1 / q)
        assert r.beta_1 == pytest.approx(beta_oracle(1 - g, 0.5 - n / (2 * q)), rel=1e-8)
        assert r.beta_2 == r.beta_1
        assert r.beta_3 == pytest.approx(beta_oracle(1 - g, 1 - n / q), rel=1e-8)

    def test_stated_range_flag(self):
        assert proof_constants(3.2, 3.4, 3, 1.0, 1.0).in_stated_range
        assert not proof_constants(4.0, 4.5, 3, 1.0, 1.0).in_stated_range

    @pytest.mark.parametrize("args", [(2.5, 3.0, 3, 1.0, 1.0), (3.5, 3.0, 3, 1.0, 1.0), (3.0, 3.5, 3, 0.0, 1.0),
                                      (3.0, 3.5, 3, 1.0, 0.0)])
    def test_rejects(self, args):
        with pytest.raises(CertifierError):
            proof_constants(*args)

    @settings(max_examples=40, deadline=None)
    # q = n = 3 zeroes the beta argument 1/2 - n/(2q), so p starts just above 3
    @given(p=st.floats(3.01, 3.5), dq=st.floats(0.0, 0.5), T1=st.floats(1e-4, 10.0), T2=st.floats(1e-4, 10.0))
    def test_monotone_in_T(self, p, dq, T1, T2):
        lo, hi = sorted((T1, T2))
        a = proof_constants(p, p + dq, 3, 1.0, lo)
        b = proof_constants(p, p + dq, 3, 1.0, hi)
        inf = proof_constants(p, p + dq, 3, 1.0, math.inf)
        for key in ("C1", "C2", "C3", "C_tilde"):
            assert getattr(a, key) <= getattr(b, key) * (1 + 1e-12)
            assert getattr(b, key) <= getattr(inf, key) * (1 + 1e-12)
            assert math.isfinite(getattr(inf, key))

    @pytest.mark.parametrize("p", [3.1, 3.3, 3.5])
    def test_vanish_as_T_to_zero(self, p):
        # C1 ~ T^{1/2 - 3/(2p)} vanishes slowly near p = 3
        values = [proof_constants(p, p + 0.2, 3, 1.0, 10.0**-k).C_tilde for k in range(1, 300, 30)]
        assert all(b < a for a, b in zip(values, values[1:]))
        assert values[-1] < 1e-4


class TestK0:
    def test_equilibrium(self, torus16):
        a = velocity_field(torus16, np.zeros((2,) + torus16.shape))
        b = director_field(torus16, np.broadcast_to(np.array([0, 0.6, 0.8])[:, None, None], (3,) + torus16.shape))
        kq, kinf, kx = k0_bounds(a, b, torus16, 3.0, 3.5, 0.1)
        assert kq == 0.0 and kx == 0.0
        assert kinf <= 2.0

    def test_single_mode_closed_form(self):
        dom = make_domain(2, None, 32)
        X, _ = dom.coordinates
        b = np.zeros((3,) + dom.shape)
        b[0] = 0.1 * np.cos(X)
        a = velocity_field(dom, np.zeros((2,) + dom.shape))
        p, q = 3.0, 3.5
        gamma = (1 / p - 1 / q)  # n = 2
        rate = 1.0 - dom.omega / 2
        s_star = gamma / rate
        grad_q = lp_norm(director_field(dom, np.stack([0.1 * np.sin(X)] + [np.zeros_like(X)] * 2)), q)
        exact = s_star**gamma * math.exp(-rate * s_star) * grad_q
        kq, _, _ = k0_bounds(a, director_field(dom, b), dom, p, q, 4 * s_star, 64)
        assert abs(kq - exact) / exact <= 1e-2

    def test_k0_shrinks_with_horizon(self):
        # the weighted norm of band-3 data peaks near s = 5e-3; below that the sup sits at s = T
        cfg = RunConfig().replace(resolution=(32, 32), velocity_norm=1e-3, director_gradient_norm=1e-3)
        a, b = gen_initial_data(cfg)
        vals = [k0_bounds(a, b, cfg.domain(), 3.0, 3.5, 5e-3 / 2**k)[0] for k in range(6)]
        assert all(y < x for x, y in zip(vals, vals[1:]))

    def test_k0_nonincreasing_on_nested_grids(self):
        cfg = RunConfig().replace(resolution=(32, 32), velocity_norm=1e-3, director_gradient_norm=1e-3)
        a, b = gen_initial_data(cfg)
        grid = np.linspace(0.0, 0.1, 1025)
        vals = [k0_bounds(a, b, cfg.domain(), 3.0, 3.5, 0.1 / 2**k, grid[: 1024 // 2**k + 1])[0] for k in range(6)]
        assert all(y <= x for x, y in zip(vals, vals[1:]))


class TestSmallness:
    def test_equilibrium_passes(self, torus16):
        a = velocity_field(torus16, np.zeros((2,) + torus16.shape))
        b = director_field(torus16, np.broadcast_to(np.array([0, 0, 1.0])[:, None, None], (3,) + torus16.shape))
        r = certify(torus16, a, b, 3.0, 3.5, 0.1)
        assert r.K1 == 0 and r.K == 0 and r.lhs_conv22 == 0.0
        assert r.passes_conv22 and r.passes_remark32
        assert r.K2 == 1.0

    def test_hand_assembled(self):
        base = proof_constants(3.0, 3.5, 3, 1.0, math.inf)
        k0q, k0inf, bmean, binf, kappa = 2e-3, 0.3, 0.9, 1.0, 1e-3
        r = smallness_check(base, k0q, k0inf, bmean, binf, kappa, generic_C=1.0)
        gamma = 3 * (1 / 3 - 1 / 3.5)
        c_tilde = max(1.0, math.gamma(1 - gamma))  # C1 = 1, C2 = 1, C3(inf) = Gamma(1 - gamma)
        K1 = 2 * k0q
        K = max(K1, K1 * K1)
        assert r.C_tilde == pytest.approx(c_tilde, rel=1e-14)
        assert r.lhs_conv22 == 144 * 1.0 * base.C_tilde * K * (1 + binf)
        assert r.K2 == max(2 * k0inf, bmean, 1.0)
        assert r.lhs_remark32 == max(kappa, kappa**2) * (1 + binf)
        assert r.breakeven_C == pytest.approx(1 / (144 * base.C_tilde * K * (1 + binf)), rel=1e-15)

    def test_monotone_in_kappa(self):
        cfg = RunConfig().replace(resolution=(32, 32), velocity_norm=1e-4, director_gradient_norm=1e-4)
        dom = cfg.domain()
        prev = None
        for amp in (1e-4, 1e-3, 1e-2, 1e-1):
            a, b = gen_initial_data(cfg.replace(velocity_norm=amp, director_gradient_norm=amp))
            r = certify(dom, a, b, 3.0, 3.5, 0.1)
            if prev is not None:
                assert r.lhs_conv22 >= prev.lhs_conv22
                assert r.kappa >= prev.kappa
                assert not (r.passes_conv22 and not prev.passes_conv22)
            prev = r

    @pytest.mark.parametrize("bc", ["neumann-box", "dirichlet-box"])
    def test_box_regimes(self, bc):
        cfg = RunConfig().replace(resolution=(16, 16), director_bc=bc, time_nodes=16)
        a, b = gen_initial_data(cfg)
        r = certify(cfg.domain(), a, b, 3.0, 3.5, 0.1, 16, e=cfg.e)
        assert r.kappa == pytest.approx(2e-3, rel=1e-10)
        assert r.passes_conv22

    def test_generic_c_positive(self):
        base = proof_constants(3.0, 3.5, 3, 1.0, 1.0)
        with pytest.raises(CertifierError):
            smallness_check(base, 0.0, 0.0, 1.0, 1.0, 0.0, generic_C=0.0)
