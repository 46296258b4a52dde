"""
dispflow.flows 模块单元测试

覆盖：QTrace 校验、完全单调性判定、误差界过大时的不可判定、
高斯数据下各单调量恒为零（高斯为极值函数）、一般数据的非负性、
波动与 Klein–Gordon 迹（R 恒等式、直接积分比对、完全单调性）。
"""

import math

import numpy as np
import pytest
from dispflow.config import Config
from dispflow.exceptions import TraceError, UnresolvableError
from dispflow.flows import (
    THEOREMS,
    CMReport,
    QTrace,
    TraceOptions,
    assemble_trace,
    check_complete_monotone,
    default_t_grid,
    nonnegative,
    q_klein_gordon,
    q_ozawa_tsutsumi,
    q_schrodinger,
    q_strichartz,
    q_wave,
    q_wave_strichartz,
    sharpness_ratio,
)
from dispflow.multilinear import Family, constants, i_m
from dispflow.spectral import GridSpec, corpus, gaussian_packet

T_GRID = default_t_grid(0.05, 1.6, 8)


# ── QTrace ────────────────────────────────────


class TestQTrace:
    def test_theorem_registry(self):
        assert THEOREMS == ('qschro', 'strichartz', 'qot', 'qwave', 'wave-strichartz', 'qkg')

    def test_too_few_points(self):
        with pytest.raises(TraceError):
            QTrace.from_values(np.linspace(0, 1, 7), np.ones(7))

    def test_nonuniform(self):
        t = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.75])
        with pytest.raises(TraceError):
            QTrace.from_values(t, np.ones(8))

    def test_nonfinite(self):
        values = np.ones(8)
        values[2] = np.inf
        with pytest.raises(TraceError):
            QTrace.from_values(np.linspace(0, 1, 8), values)

    def test_length_mismatch(self):
        with pytest.raises(TraceError):
            QTrace('x', np.linspace(0, 1, 8), np.ones(9), 0.0)

    def test_header_drops_arrays(self):
        tr = QTrace.from_values(np.linspace(0, 1, 8), np.ones(8))
        tr.extra['note'] = 'ok'
        tr.extra['raw'] = np.zeros(3)
        assert tr.header()['extra'] == {'note': 'ok'}

    def test_scale_prefers_first(self):
        tr = QTrace('x', np.linspace(0, 1, 8), np.zeros(8), 0.0, first=np.full(8, 3.0), second=np.full(8, 3.0))
        assert tr.scale == 3.0
        assert sharpness_ratio(tr) == pytest.approx(1.0)


# ── 完全单调性 ────────────────────────────────


class TestCompleteMonotone:
    def test_exponential_passes(self):
        t = np.linspace(0.0, 2.0, 16)
        report = check_complete_monotone(QTrace.from_values(t, np.exp(-t)), max_order=4)
        assert isinstance(report, CMReport)
        assert report.passed
        assert report.verdicts() == [True] * 5

    def test_increasing_fails_first_order(self):
        t = np.linspace(0.1, 1.0, 10)
        report = check_complete_monotone(QTrace.from_values(t, t), max_order=2)
        assert report.passed_to(0)
        assert not report.passed_to(1)
        assert report.orders[1]['violation'] > 0

    def test_convexity_violation(self):
        t = np.linspace(0.0, 1.0, 12)
        q = 1.0 - t**2
        report = check_complete_monotone(QTrace.from_values(t, q), max_order=2, tol=1e-6)
        assert report.passed_to(1)
        assert not report.orders[2]['passed']

    def test_error_bound_widens_tolerance(self):
        t = np.linspace(0.1, 1.0, 10)
        strict = check_complete_monotone(QTrace.from_values(t, t), max_order=1, tol=0.0)
        loose = check_complete_monotone(QTrace.from_values(t, t, err=0.2), max_order=1, tol=0.0)
        assert not strict.passed
        assert loose.passed

    def test_order_limit(self):
        with pytest.raises(TraceError):
            check_complete_monotone(QTrace.from_values(np.linspace(0, 1, 8), np.ones(8)), max_order=8)

    def test_serialisable(self):
        t = np.linspace(0.0, 1.0, 8)
        d = check_complete_monotone(QTrace.from_values(t, np.exp(-t)), max_order=2).to_dict()
        assert d['passed'] is True
        assert len(d['orders']) == 3


# ── 迹装配 ────────────────────────────────────


class TestAssemble:
    def test_unresolvable(self):
        with pytest.raises(UnresolvableError):
            assemble_trace('synthetic', T_GRID, lambda t: (1.0, 0.5, 0.5), TraceOptions(), {}, {})

    def test_rows_in_order(self):
        tr = assemble_trace('synthetic', T_GRID, lambda t: (2.0 * t, t, 0.0), TraceOptions(workers=3), {}, {})
        np.testing.assert_allclose(tr.values, T_GRID)

    def test_options_from_config(self, small_config):
        options = TraceOptions.from_config(small_config)
        assert options.s_count == 65
        assert options.workers == 1
        assert options.multilinear_kwargs()['coarsen'] == 1

    def test_default_options_match_defaults(self):
        assert TraceOptions.from_config(Config()) == TraceOptions(workers=4)


# ── 高斯等号与非负性 ──────────────────────────


class TestGaussianEquality:
    def test_strichartz_661(self, grid1d):
        tr = q_strichartz(gaussian_packet(grid1d), (6, 6, 1), T_GRID)
        assert tr.first is not None
        assert tr.first[0] == pytest.approx(math.pi**1.5 / (2 * math.sqrt(3)) / (1 + 2 * 0.05) ** 1.5, rel=1e-6)
        assert np.max(np.abs(tr.values)) <= 1e-3 * tr.scale

    def test_qschro_31(self, grid1d):
        tr = q_schrodinger(gaussian_packet(grid1d), 3, 1, T_GRID)
        assert np.max(np.abs(tr.values)) <= 1e-3 * tr.scale
        assert tr.constants['S'] > 0

    def test_ozawa_tsutsumi_2d(self, grid2d):
        tr = q_ozawa_tsutsumi(gaussian_packet(grid2d), 2, T_GRID)
        assert tr.constants['ot'] == pytest.approx(0.25)
        assert np.max(np.abs(tr.values)) <= 1e-3 * tr.scale

    @pytest.mark.slow
    def test_tensor_route_841(self, grid1d):
        tr = q_strichartz(gaussian_packet(grid1d), (8, 4, 1), T_GRID)
        assert tr.extra['path_discrepancy'] < 1e-3
        assert np.max(np.abs(tr.values)) <= 1e-3 * tr.scale


class TestGeneralData:
    def test_mixture_nonnegative(self, grid1d):
        _, mixture = corpus(grid1d, [0])[2]
        tr = q_strichartz(mixture, (6, 6, 1), T_GRID)
        assert nonnegative(tr)
        assert sharpness_ratio(tr) <= 1.0 + 1e-3

    @pytest.mark.slow
    def test_mixture_monotone(self, grid1d):
        _, mixture = corpus(grid1d, [1])[2]
        tr = q_schrodinger(mixture, 3, 1, default_t_grid(0.05, 1.6, 16))
        assert check_complete_monotone(tr, max_order=1).passed


# ── 波动与 Klein–Gordon ─────────────────────────


class TestWaveFamilies:
    def test_klein_gordon_defect(self):
        grid = GridSpec(2, 32, 16.0)
        _, f = corpus(grid, [1])[1]
        q, q0, r = q_klein_gordon(f, 2, T_GRID)
        kg_q = r.constants['kg_q']
        np.testing.assert_allclose(r.values, (q0.values - q.values) / kg_q, rtol=1e-12)
        assert np.all(r.values >= 0)
        assert r.extra['direct_discrepancy'] < 1e-8
        assert len(r.extra['r_direct']) == T_GRID.size
        assert q0.constants['C_d'] > 0

    def test_wave_strichartz_43_complete_monotone(self):
        grid = GridSpec(3, 32, 16.0)
        _, f = corpus(grid, [1])[1]
        tr = q_wave_strichartz(f, (4, 3), T_GRID)
        assert tr.theorem == 'wave-strichartz(4,3)'
        assert tr.constants['C_4'] == pytest.approx((2 * math.pi) ** -0.25)
        assert nonnegative(tr)
        assert check_complete_monotone(tr, 3).passed

    def test_wave_first_term_is_scaled_integral(self):
        grid = GridSpec(3, 16, 8.0)
        _, f = corpus(grid, [0])[1]
        options = TraceOptions(coarsen=2, unresolvable_fraction=math.inf)
        tr = q_wave(f, 2, 3, T_GRID, options)
        w_const = constants('wave', 2, 3).W
        direct = i_m(f.to_frequency(), Family('wave', 2, 3), float(T_GRID[0]), **options.multilinear_kwargs())
        assert tr.first[0] == pytest.approx(w_const * direct.value, rel=1e-12)
        np.testing.assert_allclose(tr.values, tr.first - tr.second, rtol=0, atol=0)

    @pytest.mark.slow
    def test_wave_nonnegative_and_monotone(self):
        grid = GridSpec(3, 32, 16.0)
        _, f = corpus(grid, [1])[1]
        tr = q_wave(f, 2, 3, T_GRID, TraceOptions(coarsen=2))
        assert nonnegative(tr)
        assert check_complete_monotone(tr, 3).passed
