import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volterra_mc.errors import DomainError, EmptyBatchError, ParameterError
from volterra_mc.grid import TimeGrid
from volterra_mc.kernels import K_DISCRETE, K_INTEGRATED
from volterra_mc.models import (
    ConvexFunctionalFamily, QuadraticRoughHeston, functional_from_name, qrh_coefficients, qrh_process,
    time_average, vix_functional, vix_premium,
)
from volterra_mc.schemes import PathBatch

BASE = dict(a=0.384, b_center=0.095, c=0.0025, H=0.1, lam=1.2, sigma_vol=0.1, z0=0.1)


def model(**kw):
    return QuadraticRoughHeston(**{**BASE, **kw})


class TestQuadraticRoughHeston:
    def test_degenerate_vol_map(self):
        coeffs, _, _ = qrh_coefficients(model(a=1.0, b_center=0.0, c=0.0, sigma_vol=1.0))
        z = np.array([[-2.0], [0.0], [3.0]])
        np.testing.assert_allclose(coeffs.diffusion(0.0, z)[:, 0, 0], [2.0, 0.0, 3.0])

    def test_zero_reversion(self):
        coeffs, _, _ = qrh_coefficients(model(lam=0.0))
        np.testing.assert_array_equal(coeffs.drift(0.3, np.array([[1.0], [-4.0]])), 0.0)

    def test_kernel_exponent(self):
        _, k1, k2 = qrh_coefficients(model(H=0.1))
        assert k1.alpha == pytest.approx(-0.4) and k2.alpha == pytest.approx(-0.4)

    def test_affine_drift(self):
        coeffs, _, _ = qrh_coefficients(model())
        assert coeffs.affine_drift and coeffs.check_affine(T=0.25)
        x, y = np.array([[0.3]]), np.array([[-1.2]])
        b = lambda v: coeffs.drift(0.1, v)
        assert abs((b(x + y) - b(x) - b(y) + b(0 * x))[0, 0]) <= 1e-12

    @pytest.mark.parametrize("bad", [dict(H=0.5), dict(H=0.0), dict(c=-1.0), dict(a=-0.1),
                                     dict(sigma_vol=-1.0), dict(b_center=-0.1)])
    def test_parameter_errors(self, bad):
        with pytest.raises(ParameterError):
            model(**bad)

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(-5, 5), y=st.floats(-5, 5), w=st.floats(0, 1))
    def test_vol_map_convex_lipschitz(self, x, y, w):
        m = model()
        f = lambda z: float(m.vol_map(z))
        assert f(w * x + (1 - w) * y) <= w * f(x) + (1 - w) * f(y) + 1e-12
        assert abs(f(x) - f(y)) <= math.sqrt(m.a) * abs(x - y) + 1e-12


class TestVixPremium:
    def test_deterministic_model(self):
        m = model(sigma_vol=0.0, lam=0.0)
        batch = qrh_process(m).simulate(K_INTEGRATED, TimeGrid(16, 0.25), 10, 0)
        est, se = vix_premium(batch, m)
        assert est == pytest.approx(math.sqrt(m.a * (m.z0 - m.b_center) ** 2 + m.c), rel=1e-14)
        assert se == 0.0

    def test_constant_variance(self):
        m = model(a=0.0)
        batch = qrh_process(m).simulate(K_DISCRETE, TimeGrid(16, 0.25), 200, 1)
        est, se = vix_premium(batch, m)
        assert est == pytest.approx(math.sqrt(m.c), rel=1e-14)

    def test_empty(self):
        m = model()
        batch = PathBatch(TimeGrid(4, 1.0), 1, np.empty((0, 5, 1)), 0, K_DISCRETE)
        with pytest.raises(EmptyBatchError):
            vix_premium(batch, m)

    def test_sigma_monotone_paired(self):
        g = TimeGrid(32, 0.25)
        vals = []
        for s in (0.1, 0.3):
            m = model(sigma_vol=s)
            b = qrh_process(m).simulate(K_INTEGRATED, g, 20_000, 12)
            vals.append(vix_functional(m)(b.paths, g))
        d = vals[1] - vals[0]
        assert d.mean() > -2 * d.std(ddof=1) / math.sqrt(d.size)

    def test_trapezoid(self):
        g = TimeGrid(4, 2.0)
        v = np.array([[0.0, 1.0, 2.0, 3.0, 4.0]])
        assert time_average(v, g)[0] == pytest.approx(2.0)


class TestFunctionals:
    def test_default_family(self):
        fam = ConvexFunctionalFamily.default()
        assert fam.names() == ["call:0", "call:0.5", "call:1", "sup", "int_x2"]
        assert [f.name for f in fam.filter("icv")] == ["call:0", "call:0.5", "call:1"]
        assert fam.filter("dcv") == []

    def test_parse(self):
        assert functional_from_name("put:2").applies_to("dcv")
        assert functional_from_name("vix", model()).name == "vix"
        for bad in ("call:x", "spline", "vix"):
            with pytest.raises(DomainError):
                functional_from_name(bad)

    def test_square_integral_exact(self):
        g = TimeGrid(2, 1.0)
        x = np.array([[0.0, 1.0, 0.0]])
        # interpolant is a tent of height 1: int = 2 * int_0^0.5 (2t)^2 dt = 1/3
        assert functional_from_name("int_x2")(x, g)[0] == pytest.approx(1 / 3, rel=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_convexity_on_random_paths(self, seed):
        rng = np.random.default_rng(seed)
        g = TimeGrid(20, 0.25)
        x = rng.normal(0.1, 0.3, (1, 21, 1))
        y = rng.normal(0.1, 0.3, (1, 21, 1))
        m = model()
        names = ["call:0", "call:0.5", "put:0.1", "terminal", "neg-terminal", "sup", "max", "int_x2"]
        for f in [functional_from_name(n) for n in names] + [vix_functional(m)]:
            mid = f(0.5 * x + 0.5 * y, g)[0]
            assert mid <= 0.5 * f(x, g)[0] + 0.5 * f(y, g)[0] + 1e-10, f.name

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_declared_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        g = TimeGrid(10, 1.0)
        x = rng.normal(size=(1, 11, 1))
        y = x + np.abs(rng.normal(size=(1, 11, 1)))  # y >= x pointwise
        for name in ("call:0", "call:1", "terminal", "max", "put:0", "neg-terminal"):
            f = functional_from_name(name)
            if f.applies_to("icv"):
                assert f(y, g)[0] >= f(x, g)[0] - 1e-12
            if f.applies_to("dcv"):
                assert f(y, g)[0] <= f(x, g)[0] + 1e-12
