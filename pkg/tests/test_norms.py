"""
dispflow.norms 模块单元测试

覆盖：指数校验、L^q 范数、梯形 + 幂律尾部的时间积分、
Schrödinger 高斯的 L^6 时空范数解析值、Sobolev 范数。
"""

import math

import numpy as np
import pytest
from dispflow.exceptions import NormError
from dispflow.norms import (
    MixedNormSpec,
    decay_exponent,
    lebesgue_norm,
    mixed_norm,
    norm_from_powers,
    propagated_norm,
    sobolev_norm,
    time_integral,
)
from dispflow.spectral import default_s_grid, evolve, gaussian_packet


class TestMixedNormSpec:
    @pytest.mark.parametrize(('p', 'q'), [(0.5, 2.0), (2.0, 0.0), (math.nan, 2.0)])
    def test_invalid(self, p, q):
        with pytest.raises(NormError):
            MixedNormSpec(p, q)

    def test_infinite_allowed(self):
        spec = MixedNormSpec(math.inf, math.inf)
        assert math.isinf(spec.p)

    def test_decay_exponent(self):
        assert decay_exponent(MixedNormSpec(6, 6), 0.5) == pytest.approx(2.0)
        assert decay_exponent(MixedNormSpec(4, math.inf), 0.5) == pytest.approx(2.0)
        assert math.isinf(decay_exponent(MixedNormSpec(math.inf, 2), 0.5))


class TestLebesgue:
    def test_gaussian_l2(self, grid1d):
        f = gaussian_packet(grid1d)
        assert lebesgue_norm(f, 2.0) == pytest.approx(math.pi**0.25, rel=1e-12)

    def test_gaussian_linf(self, grid1d):
        assert lebesgue_norm(gaussian_packet(grid1d), math.inf) == pytest.approx(1.0)

    def test_frequency_side_accepted(self, grid1d):
        f = gaussian_packet(grid1d)
        assert lebesgue_norm(f.to_frequency(), 4.0) == pytest.approx(lebesgue_norm(f, 4.0), rel=1e-10)


class TestTimeIntegral:
    def test_lorentzian_with_tail(self):
        s = np.linspace(-20.0, 20.0, 2001)
        total, correction, bound = time_integral(s, 1.0 / (1.0 + s**2), kappa=2.0)
        assert total == pytest.approx(math.pi, rel=1e-5)
        assert correction == pytest.approx(2 * (math.pi / 2 - math.atan(20.0)), rel=1e-6)
        assert bound > 0.0

    def test_without_tail(self):
        s = np.linspace(-1.0, 1.0, 201)
        total, correction, bound = time_integral(s, np.ones_like(s), tail=False)
        assert total == pytest.approx(2.0)
        assert correction == bound == 0.0

    def test_kappa_must_exceed_one(self):
        s = np.linspace(-1.0, 1.0, 11)
        with pytest.raises(NormError):
            time_integral(s, np.ones_like(s), kappa=1.0)

    def test_single_slice(self):
        assert time_integral(np.array([0.0]), np.array([3.0])) == (3.0, 0.0, 0.0)

    def test_sup_norm_in_time(self):
        s = np.linspace(-1.0, 1.0, 5)
        out = norm_from_powers(s, np.array([1.0, 4.0, 9.0, 4.0, 1.0]), MixedNormSpec(math.inf, 2.0))
        assert out.value == pytest.approx(3.0)
        assert out.bound == 0.0


class TestMixedNorm:
    def test_schrodinger_l6_gaussian(self, grid1d):
        """∫∫|u|⁶ = (π/3)^{1/2}·π/2 for f = e^{−x²/2}"""
        f = gaussian_packet(grid1d)
        s = default_s_grid(f.to_frequency(), 'schrodinger')
        u = evolve(f, 'schrodinger', s)
        out = mixed_norm(u, MixedNormSpec(6.0, 6.0))
        exact = math.sqrt(math.pi / 3) * math.pi / 2
        assert out.power == pytest.approx(exact, rel=1e-4)
        assert out.tail_correction > 0.0
        assert out.details['kappa'] == pytest.approx(2.0)
        assert out.value == pytest.approx(exact ** (1 / 6), rel=1e-4)

    def test_streamed_matches_resident(self, grid1d):
        f = gaussian_packet(grid1d, momentum=[0.3])
        s = default_s_grid(f.to_frequency(), 'schrodinger', count=65)
        spec = MixedNormSpec(6.0, 6.0)
        resident = mixed_norm(evolve(f, 'schrodinger', s), spec)
        streamed = propagated_norm(f, 'schrodinger', s, spec, workers=2)
        assert streamed.power == pytest.approx(resident.power, rel=1e-12)


class TestSobolev:
    def test_homogeneous_order_one(self, grid1d):
        f = gaussian_packet(grid1d)
        assert sobolev_norm(f, 1.0) == pytest.approx((math.sqrt(math.pi) / 2) ** 0.5, rel=1e-10)

    def test_order_zero_is_l2(self, grid1d):
        f = gaussian_packet(grid1d)
        assert sobolev_norm(f, 0.0) == pytest.approx(f.norm_l2(), rel=1e-12)

    def test_inhomogeneous(self, grid1d):
        f = gaussian_packet(grid1d)
        expected = math.sqrt(1.5 * math.sqrt(math.pi))
        assert sobolev_norm(f, 1.0, 'inhomogeneous') == pytest.approx(expected, rel=1e-10)

    def test_unknown_variant(self, grid1d):
        with pytest.raises(NormError):
            sobolev_norm(gaussian_packet(grid1d), 1.0, 'fractal')
