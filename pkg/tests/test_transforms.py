"""Tests for Jacobi conversion matrices, fast Toeplitz-Hankel matvecs,
basis transforms, and Chebyshev expansion."""

import numpy as np
import pytest

from fracctrl.jacobi import JacobiParams, jacobi_matrix
from fracctrl.transforms import (
    ConversionCache,
    ConversionMatrix,
    SpectralFunction,
    TransformError,
    chebyshev_expand,
    connection_dense,
    jacobi_to_jacobi,
)

# one-parameter changes exercising both kinds and awkward exponents,
# including the integer difference -1 (the theta=1 frame)
CASES_FIRST = [
    (0.7, 1.4, 0.31),      # generic
    (0.2, 1.2, 1.2),       # sigma* -> alpha at theta=1, difference -1
    (0.9, 0.5, -0.4),      # downward change, negative fixed parameter
]
CASES_SECOND = [
    (0.9, 0.3, 1.8),
    (0.54, 0.54, 1.08),
]


class TestDenseOracle:
    def test_identity_when_params_equal(self):
        p = JacobiParams(0.3, 0.8)
        C = connection_dense(12, p, p)
        assert np.allclose(C, np.eye(13), atol=1e-12)

    def test_lower_triangular(self):
        C = connection_dense(10, JacobiParams(0.7, 0.31), JacobiParams(1.4, 0.31))
        assert np.max(np.abs(np.triu(C, 1))) < 1e-11 * np.max(np.abs(C))

    def test_pointwise_preservation(self):
        # transforming coefficients preserves the represented polynomial
        rng = np.random.default_rng(3)
        src, dst = JacobiParams(0.0, 0.0), JacobiParams(1.0, 0.0)
        k = 9
        C = connection_dense(k, src, dst)
        v = rng.standard_normal(k + 1)
        x = rng.uniform(0, 1, 10)
        before = v @ jacobi_matrix(k, src, x)
        after = (C.T @ v) @ jacobi_matrix(k, dst, x)
        assert np.max(np.abs(before - after)) < 1e-12 * np.max(np.abs(before))


class TestFactored:
    @pytest.mark.parametrize("k", [16, 64, 256])
    @pytest.mark.parametrize("g,s,b", CASES_FIRST)
    def test_first_param_matches_dense(self, k, g, s, b):
        Cd = connection_dense(k, JacobiParams(g, b), JacobiParams(s, b))
        th = ConversionMatrix.build(k, JacobiParams(g, b), JacobiParams(s, b))
        rng = np.random.default_rng(k)
        v = rng.standard_normal(k + 1)
        scale = np.max(np.abs(Cd @ v))
        assert np.max(np.abs(th.apply(v) - Cd @ v)) < 1e-10 * scale
        scale_t = np.max(np.abs(Cd.T @ v))
        assert np.max(np.abs(th.apply(v, transpose=True) - Cd.T @ v)) < 1e-10 * scale_t

    @pytest.mark.parametrize("k", [16, 64, 256])
    @pytest.mark.parametrize("sfix,d,b2", CASES_SECOND)
    def test_second_param_matches_dense(self, k, sfix, d, b2):
        Cd = connection_dense(k, JacobiParams(sfix, d), JacobiParams(sfix, b2))
        th = ConversionMatrix.build(k, JacobiParams(sfix, d), JacobiParams(sfix, b2))
        rng = np.random.default_rng(k + 1)
        v = rng.standard_normal(k + 1)
        scale = np.max(np.abs(Cd @ v))
        assert np.max(np.abs(th.apply(v) - Cd @ v)) < 1e-10 * scale

    def test_identity_factored(self):
        p = JacobiParams(0.5, 0.2)
        th = ConversionMatrix.build(20, p, p)
        v = np.arange(21.0)
        assert np.allclose(th.apply(v), v, rtol=1e-12, atol=1e-12)

    def test_zero_vector(self):
        th = ConversionMatrix.build(16, JacobiParams(0.7, 0.31), JacobiParams(1.4, 0.31))
        assert np.array_equal(th.apply(np.zeros(17)), np.zeros(17))

    def test_linearity(self):
        th = ConversionMatrix.build(32, JacobiParams(0.7, 0.31), JacobiParams(1.4, 0.31))
        rng = np.random.default_rng(5)
        u, v = rng.standard_normal((2, 33))
        lhs = th.apply(2.5 * u - 1.25 * v)
        rhs = 2.5 * th.apply(u) - 1.25 * th.apply(v)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * max(1.0, np.max(np.abs(rhs)))

    def test_size_mismatch_rejected(self):
        th = ConversionMatrix.build(8, JacobiParams(0.7, 0.31), JacobiParams(1.4, 0.31))
        with pytest.raises(TransformError):
            th.apply(np.zeros(5))

    def test_two_param_change_rejected(self):
        with pytest.raises(TransformError):
            ConversionMatrix.build(8, JacobiParams(0.1, 0.2), JacobiParams(0.3, 0.4))


class TestJacobiToJacobi:
    def test_target_equals_source(self):
        f = SpectralFunction((0, 0), JacobiParams(0.4, 0.4), np.ones(5))
        g = jacobi_to_jacobi(f, JacobiParams(0.4, 0.4))
        assert np.array_equal(f.coeffs, g.coeffs)

    def test_single_mode_pointwise(self):
        src = JacobiParams(0.8602, 0.5398)
        tgt = JacobiParams(1.4, 1.4)
        c = np.zeros(8)
        c[3] = 1.0
        f = SpectralFunction((0, 0), src, c)
        g = jacobi_to_jacobi(f, tgt)
        x = np.linspace(0.05, 0.95, 10)
        assert np.max(np.abs(f.poly_values(x) - g.poly_values(x))) < 1e-12

    def test_round_trip(self):
        rng = np.random.default_rng(11)
        src = JacobiParams(0.8602, 0.5398)
        tgt = JacobiParams(1.4, 1.4)
        f = SpectralFunction((0, 0), src, rng.standard_normal(129))
        back = jacobi_to_jacobi(jacobi_to_jacobi(f, tgt), src)
        assert np.max(np.abs(back.coeffs - f.coeffs)) < 1e-10 * np.max(np.abs(f.coeffs))

    def test_degree_preserved(self):
        rng = np.random.default_rng(2)
        c = np.zeros(33)
        c[:12] = rng.standard_normal(12)
        f = SpectralFunction((0, 0), JacobiParams(0.6, 0.6), c)
        g = jacobi_to_jacobi(f, JacobiParams(1.2, 1.2))
        assert np.max(np.abs(g.coeffs[12:])) < 1e-11 * np.max(np.abs(g.coeffs))

    def test_cache_reuse(self):
        cache = ConversionCache()
        p, q = JacobiParams(0.6, 0.6), JacobiParams(1.2, 0.6)
        a = cache.get(16, p, q)
        assert cache.get(16, p, q) is a


class TestChebyshevExpand:
    def test_constant(self):
        f = chebyshev_expand(lambda x: np.ones_like(x), M=8)
        assert f.coeffs[0] == pytest.approx(1.0, rel=1e-14)
        assert np.max(np.abs(f.coeffs[1:])) < 1e-14

    def test_sin_pointwise(self):
        f = chebyshev_expand(np.sin, M=32)
        x = np.linspace(0, 1, 100)
        assert np.max(np.abs(f.poly_values(x) - np.sin(x))) < 1e-13

    def test_linear_single_mode(self):
        # 2x-1 is proportional to Q_1^{-1/2,-1/2}; Q_1(1) = 1/2 here
        f = chebyshev_expand(lambda x: 2 * x - 1, M=8)
        assert f.coeffs[1] == pytest.approx(2.0, rel=1e-13)
        mask = np.ones(9, bool)
        mask[1] = False
        assert np.max(np.abs(f.coeffs[mask])) < 1e-13

    def test_entire_function_accuracy(self):
        f = chebyshev_expand(lambda x: np.exp(np.cos(3 * x)), M=64)
        x = np.linspace(0, 1, 200)
        assert np.max(np.abs(f.poly_values(x) - np.exp(np.cos(3 * x)))) < 1e-12


class TestQuasiLinearScaling:
    def test_matvec_scaling_informational(self):
        import time
        p, q = JacobiParams(0.7, 0.31), JacobiParams(1.4, 0.31)
        times = {}
        for k in (1024, 4096):
            th = ConversionMatrix.build(k, p, q)
            v = np.random.default_rng(0).standard_normal(k + 1)
            th.apply(v)  # warm
            t0 = time.perf_counter()
            reps = 20
            for _ in range(reps):
                th.apply(v)
            times[k] = (time.perf_counter() - t0) / reps
        ratio = times[4096] / times[1024]
        print(f"\nth_matvec scaling 4096/1024: {ratio:.2f}x (informational)")
        assert ratio < 12.0  # loose guard; quasi-linear target is ~6x
