"""
dispflow.kinetic 模块单元测试

覆盖：相空间校验、ρ 与 ρ* 的伴随关系与自由输运、剪切越界、指标关系、
X 射线/平面变换的高斯解析值、HLS 双线性型、Drury 比值、快扩散与检查点。
"""

import math
import os

import numpy as np
import pytest
from dispflow.exceptions import CoverageError, DiffusionError, FileException, KineticError, ShearError
from dispflow.kinetic import (
    MIN_DIRECTIONS,
    DiffusionState,
    DruryReport,
    PhaseField,
    calibrate_c_star,
    calibration_profile,
    ccl_check,
    cell_average,
    compact_bump,
    drouot_extremiser,
    drury_check,
    fast_diffusion_step,
    functional_F,
    hls_form,
    kinetic_admissible,
    kinetic_corpus,
    kplane_exponent,
    load_checkpoint,
    purenorm_ratio,
    radon3,
    rho,
    rho_star,
    save_checkpoint,
    space_time_inner,
    stability_bound,
    xray,
)
from dispflow.spectral import GridSpec, SpaceTimeField

X1 = GridSpec(1, 64, 8.0)
V1 = GridSpec(1, 16, 2.0)
GRID3 = GridSpec(3, 32, 8.0)


def _gaussian(grid: GridSpec) -> np.ndarray:
    return np.exp(-(grid.x_norm**2) / 2)


# ── 相空间 ──


class TestPhaseField:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(KineticError):
            PhaseField(X1, GridSpec(2, 16, 2.0), np.zeros((64, 16, 16)))

    def test_three_dimensional_rejected(self):
        g3 = GridSpec(3, 4, 1.0)
        with pytest.raises(KineticError):
            PhaseField(g3, g3, np.zeros((4,) * 6))

    def test_shape_and_finiteness(self):
        with pytest.raises(KineticError):
            PhaseField(X1, V1, np.zeros((64, 8)))
        bad = np.zeros((64, 16))
        bad[3, 3] = np.nan
        with pytest.raises(KineticError):
            PhaseField(X1, V1, bad)

    def test_from_function_broadcasts(self):
        f = PhaseField.from_function(X1, V1, lambda x, v: np.exp(-x[0] ** 2 - v[0] ** 2))
        assert f.values.shape == (64, 16)
        assert f.cell_volume == pytest.approx(X1.h * V1.h)
        assert f.values[32, 8] == pytest.approx(1.0)


class TestShear:
    def test_free_transport_exact_shift(self):
        # 速度集中在 v0 = 1：ρ(s, x) = a(x − s)
        a = np.exp(-X1.x_axis**2)
        values = np.zeros((64, 16))
        values[:, 12] = a / V1.h
        assert V1.x_axis[12] == pytest.approx(1.0)
        out = rho(PhaseField(X1, V1, values), [0.0, 0.25, 0.5])
        assert out.decay_rate == 1.0
        np.testing.assert_allclose(np.real(out.values[0]), a, atol=1e-14)
        np.testing.assert_allclose(np.real(out.values[2]), np.exp(-((X1.x_axis - 0.5) ** 2)), atol=1e-14)

    def test_rho_adjoint(self):
        f0 = PhaseField.from_function(X1, V1, lambda x, v: np.exp(-x[0] ** 2 - v[0] ** 2) * (1 + 0.3 * x[0] * v[0]))
        s = np.linspace(0.0, 1.0, 9)
        g_values = np.exp(-((X1.x_axis[None, :] - 0.5) ** 2)) * (1 + s[:, None])
        g = SpaceTimeField(X1, s, g_values)
        lhs = space_time_inner(rho(f0, s), g)
        rhs = f0.inner(rho_star(g, V1))
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_overreach_raises(self):
        f0 = PhaseField.from_function(X1, V1, lambda x, v: np.exp(-x[0] ** 2 - v[0] ** 2))
        with pytest.raises(ShearError):
            rho(f0, [0.0, 10.0])

    def test_rho_star_validation(self):
        g = SpaceTimeField(X1, [0.0], np.exp(-X1.x_axis[None, :] ** 2))
        with pytest.raises(KineticError):
            rho_star(g, V1)
        g2 = SpaceTimeField(X1, [0.0, 0.1], np.exp(-X1.x_axis[None, :] ** 2) * np.ones((2, 1)))
        with pytest.raises(KineticError):
            rho_star(g2, GridSpec(2, 16, 2.0))

    def test_purenorm_ratio_positive(self):
        s = np.linspace(0.0, 0.5, 8)
        g = SpaceTimeField(X1, s, np.exp(-X1.x_axis[None, :] ** 2) * np.ones((8, 1)))
        ratio = purenorm_ratio(g, V1)
        assert math.isfinite(ratio)
        assert ratio > 0


# ── 指标 ──


class TestExponents:
    @pytest.mark.parametrize(
        'a,p,q,d,expected',
        [
            (4 / 3, 2.0, 4.0, 1, True),
            (1.5, 3.0, 3.0, 1, True),
            (1.5, 3.0, 4.0, 1, False),
            (-1.0, 2.0, 4.0, 1, False),
        ],
    )
    def test_kinetic_admissible(self, a, p, q, d, expected):
        assert kinetic_admissible(a, p, q, d) is expected

    def test_kplane_exponent_values(self):
        assert kplane_exponent(1, 2.0, 2) == pytest.approx(1.5)
        assert kplane_exponent(2, 2.0, 3) == pytest.approx(4 / 3)

    @pytest.mark.parametrize('k,q,d', [(0, 2.0, 2), (4, 2.0, 3), (2, 0.5, 3)])
    def test_kplane_exponent_out_of_range(self, k, q, d):
        with pytest.raises(KineticError):
            kplane_exponent(k, q, d)


# ── k-平面变换 ──


class TestTransforms:
    def test_xray_gaussian_2d(self):
        grid = GridSpec(2, 64, 8.0)
        plane = xray(_gaussian(grid), grid)
        assert plane.profiles.shape == (MIN_DIRECTIONS, 64)
        assert plane.weights.sum() == pytest.approx(math.pi)
        expected = math.sqrt(2 * math.pi) * np.exp(-(grid.x_axis**2) / 2)
        np.testing.assert_allclose(plane.profiles, np.broadcast_to(expected, plane.profiles.shape), atol=0.03)
        assert plane.spread() < 0.02
        assert plane.l2_norm_sq() == pytest.approx(2 * math.pi**2 * math.sqrt(math.pi), rel=3e-2)

    def test_radon3_gaussian(self):
        plane = radon3(_gaussian(GRID3), GRID3)
        assert plane.weights.sum() == pytest.approx(2 * math.pi)
        peak = plane.profiles[:, 16]
        np.testing.assert_allclose(peak, 2 * math.pi, rtol=5e-2)
        assert plane.l2_norm_sq() == pytest.approx(8 * math.pi**3 * math.sqrt(math.pi), rel=5e-2)

    def test_too_few_directions(self):
        grid = GridSpec(2, 64, 8.0)
        with pytest.raises(CoverageError):
            xray(_gaussian(grid), grid, directions=MIN_DIRECTIONS - 1)

    def test_support_beyond_offsets(self):
        grid = GridSpec(2, 32, 4.0)
        with pytest.raises(CoverageError):
            xray(np.ones(grid.shape), grid)

    def test_negligible_tail_is_covered(self):
        grid = GridSpec(2, 64, 8.0)
        values = _gaussian(grid) + 1e-12
        assert xray(values, grid).profiles.shape == (MIN_DIRECTIONS, 64)

    def test_wrong_dimension(self):
        with pytest.raises(KineticError):
            xray(np.zeros(64), GridSpec(1, 64, 8.0))
        grid = GridSpec(2, 64, 8.0)
        with pytest.raises(KineticError):
            radon3(_gaussian(grid), grid)


# ── HLS 与 Drury ──


class TestHLS:
    def test_cell_average_one_dimension(self):
        lam, h = 0.5, 0.25
        expected = 2 * 0.5 ** (1 - lam) / (1 - lam) * h ** (-lam)
        assert cell_average(lam, 1, h) == pytest.approx(expected)

    def test_cell_average_square(self):
        assert cell_average(1.0, 2, 1.0) == pytest.approx(4 * math.log(1 + math.sqrt(2)), rel=1e-8)
        assert cell_average(1.0, 2, 0.5) == pytest.approx(2 * cell_average(1.0, 2, 1.0), rel=1e-10)

    def test_hls_gaussian_3d(self):
        assert hls_form(_gaussian(GRID3), GRID3, 1.0) == pytest.approx(8 * math.pi**2.5, rel=3e-2)

    def test_hls_gaussian_2d(self, grid2d):
        assert hls_form(_gaussian(grid2d), grid2d, 1.0) == pytest.approx(2 * math.pi**2 * math.sqrt(math.pi), rel=3e-2)

    @pytest.mark.parametrize('lam', [0.0, 3.0, -1.0])
    def test_lambda_range(self, lam):
        with pytest.raises(KineticError):
            hls_form(_gaussian(GRID3), GRID3, lam)


class TestDrury:
    def test_report_properties(self):
        report = DruryReport({'a': math.pi * 1.005, 'b': math.pi, 'c': math.pi * 0.995}, MIN_DIRECTIONS)
        assert report.constant == pytest.approx(math.pi)
        assert report.spread == pytest.approx(0.01, rel=1e-6)
        assert report.passed
        d = report.to_dict()
        assert d['passed'] is True and d['reference'] == pytest.approx(math.pi)
        assert not DruryReport({'a': 1.0, 'b': 1.1, 'c': 1.0}, MIN_DIRECTIONS).passed

    def test_corpus_validation(self):
        corpus = kinetic_corpus(GRID3)
        with pytest.raises(KineticError):
            drury_check(corpus[:2], GRID3)
        with pytest.raises(KineticError):
            drury_check([('negative', -corpus[0][1]), *corpus[:2]], GRID3)

    def test_corpus_nonnegative(self):
        corpus = kinetic_corpus(GRID3)
        assert [label for label, _ in corpus] == ['gaussian', 'shifted', 'mixture']
        assert all(float(v.min()) >= 0 for _, v in corpus)

    @pytest.mark.slow
    def test_ratio_is_pi(self):
        report = drury_check(kinetic_corpus(GRID3), GRID3)
        assert report.constant == pytest.approx(math.pi, rel=5e-2)
        assert report.spread < 0.05


# ── 泛函 F ──


class TestFunctional:
    def test_extremiser_profile(self):
        np.testing.assert_array_equal(drouot_extremiser(GRID3, 2), calibration_profile(GRID3, 1.5))

    def test_calibration_zeroes_functional(self):
        c_star = calibrate_c_star(GRID3)
        assert c_star > 0
        profile = calibration_profile(GRID3, 2.5)
        second = radon3(profile, GRID3).l2_norm_sq()
        assert abs(functional_F(profile, GRID3, c_star)) <= 1e-9 * second


# ── 快扩散 ──


class TestFastDiffusion:
    def test_state_validation(self, grid2d):
        with pytest.raises(DiffusionError):
            DiffusionState(grid2d, np.zeros((4, 4)))
        with pytest.raises(DiffusionError):
            DiffusionState(grid2d, -np.ones(grid2d.shape))

    def test_constant_state_is_stationary(self, grid2d):
        state = DiffusionState(grid2d, np.ones(grid2d.shape))
        assert stability_bound(state) == pytest.approx(grid2d.h**2 / (2 * 2 * 0.6), rel=1e-9)
        nxt = fast_diffusion_step(state)
        np.testing.assert_allclose(nxt.u, 1.0, atol=1e-14)

    def test_step_conserves_mass(self):
        grid = GridSpec(2, 32, 4.0)
        state = DiffusionState(grid, compact_bump(grid))
        nxt = fast_diffusion_step(state)
        assert nxt.steps == 1
        assert nxt.time > 0
        assert float(nxt.u.min()) >= 0
        assert nxt.mass == pytest.approx(state.mass, rel=1e-12)

    def test_ccl_requires_three_dimensions(self, grid2d):
        with pytest.raises(KineticError):
            ccl_check(compact_bump(grid2d), grid2d, steps=7, c_star=1.0)

    def test_ccl_requires_enough_steps(self):
        grid = GridSpec(3, 16, 4.0)
        with pytest.raises(KineticError):
            ccl_check(compact_bump(grid), grid, steps=3, c_star=1.0)

    def test_ccl_trace(self):
        grid = GridSpec(3, 16, 4.0)
        report = ccl_check(compact_bump(grid), grid, steps=7, c_star=1.0)
        assert report.trace.theorem == 'ccl'
        assert report.trace.t.size == 8
        assert np.all(np.diff(report.times) > 0)
        assert report.mass_drift < 1e-9
        assert report.min_value >= 0
        d = report.to_dict()
        assert len(d['F']) == 8 and d['theorem'] == 'ccl'

    @pytest.mark.parametrize(
        'steps',
        [7, pytest.param(50, marks=pytest.mark.slow)],
    )
    def test_functional_nonincreasing_with_calibrated_constant(self, steps):
        grid = GridSpec(3, 32, 6.0)
        report = ccl_check(compact_bump(grid), grid, steps=steps)
        assert report.trace.constants['c_star'] == pytest.approx(calibrate_c_star(grid), rel=1e-12)
        assert report.passed
        assert not report.violations
        assert np.all(np.diff(report.trace.values) <= report.tol)
        assert report.trace.values[-1] < report.trace.values[0]


class TestCheckpoint:
    def _state(self):
        grid = GridSpec(2, 16, 4.0)
        return DiffusionState(grid, compact_bump(grid), time=0.5, dt=1e-4, steps=3)

    def test_roundtrip(self, tmp_path):
        state = self._state()
        path = save_checkpoint(state, str(tmp_path / 'state.bin'))
        assert os.path.exists(path + '.json')
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.u, state.u)
        assert loaded.grid == state.grid
        assert (loaded.time, loaded.dt, loaded.steps) == (0.5, 1e-4, 3)

    def test_corrupt_data_detected(self, tmp_path):
        path = save_checkpoint(self._state(), str(tmp_path / 'state.bin'))
        raw = bytearray(open(path, 'rb').read())
        raw[0] ^= 0xFF
        with open(path, 'wb') as f:
            f.write(bytes(raw))
        with pytest.raises(FileException):
            load_checkpoint(path)

    def test_missing_files(self, tmp_path):
        path = save_checkpoint(self._state(), str(tmp_path / 'state.bin'))
        os.remove(path)
        with pytest.raises(FileException):
            load_checkpoint(path)
        with pytest.raises(FileException):
            load_checkpoint(str(tmp_path / 'absent.bin'))
