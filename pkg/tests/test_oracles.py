"""
dispflow.oracles 模块单元测试

覆盖：磨光核参数校验、各族测度质量的 Monte Carlo 外推与闭式比较、
退化点的目标平移外推、样本可复现性（与线程数无关）、标准误按 N^{-1/2} 缩小。
"""

import math

import pytest
from dispflow.exceptions import OracleError
from dispflow.oracles import LEMMAS, MollifierSpec, error_scaling, mass_kg, mass_ot, mass_schrodinger, mass_wave

SAMPLES = 40_000


class TestMollifierSpec:
    def test_defaults(self):
        assert MollifierSpec().widths == (0.3, 0.15, 0.075)

    def test_coerced_to_float_tuple(self):
        assert MollifierSpec(widths=[1, 0.5, 0.25]).widths == (1.0, 0.5, 0.25)

    @pytest.mark.parametrize('widths', [(0.3, 0.15), (0.1, 0.2, 0.05), (0.3, 0.0, -0.1), (0.3, 0.3, 0.1)])
    def test_invalid_widths(self, widths):
        with pytest.raises(OracleError):
            MollifierSpec(widths=widths)

    def test_shape(self):
        with pytest.raises(OracleError):
            MollifierSpec(shape='box')


class TestValidation:
    def test_min_samples(self):
        with pytest.raises(OracleError):
            mass_schrodinger([[1.0, 0.0], [0.0, 1.0]], 2, samples=500)

    def test_shape_mismatch(self):
        with pytest.raises(OracleError):
            mass_ot([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 2)

    def test_ot_needs_d2(self):
        with pytest.raises(OracleError):
            mass_ot([[1.0], [2.0]], 1)

    def test_wave_zero_component(self):
        with pytest.raises(OracleError):
            mass_wave([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], 2, 3)

    def test_nonfinite(self):
        with pytest.raises(OracleError):
            mass_kg([[math.inf, 0.0], [0.0, 1.0]], 2)

    def test_registry(self):
        assert set(LEMMAS) == {'schrodinger', 'ot', 'wave', 'klein_gordon'}


class TestMasses:
    def test_schrodinger_2d(self):
        report = mass_schrodinger([[1.0, 0.0], [0.0, 1.0]], 2, samples=SAMPLES, seed=11)
        assert report.closed_form == pytest.approx(math.pi / 2)
        assert not report.edge
        assert report.relative_error < 0.05
        assert len(report.estimates) == 3

    def test_ot_2d(self):
        report = mass_ot([[1.0, 0.5], [-0.5, 1.0]], 2, samples=SAMPLES, seed=5)
        assert report.closed_form == pytest.approx(math.pi / 2)
        assert report.relative_error < 0.05

    def test_kg_2d(self):
        report = mass_kg([[1.0, 0.0], [0.0, 1.0]], 2, samples=SAMPLES, seed=2)
        assert report.closed_form > 0
        assert report.relative_error < 0.05

    def test_edge_point_uses_shifted_targets(self):
        report = mass_schrodinger([[1.0, 0.0], [1.0, 0.0]], 2, samples=SAMPLES, seed=3)
        assert report.edge
        assert report.closed_form == pytest.approx(math.pi / 2)
        assert report.relative_error < 0.05

    @pytest.mark.slow
    def test_wave_3d(self):
        report = mass_wave([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 2, 3, samples=200_000, seed=4)
        assert report.passed

    @pytest.mark.slow
    def test_schrodinger_three_fold_1d(self):
        report = mass_schrodinger([[1.0], [0.0], [-0.5]], 1, samples=200_000, seed=9)
        assert report.passed


class TestReproducibility:
    def test_same_seed_same_estimate(self):
        xi = [[1.0, 0.0], [0.0, 1.0]]
        a = mass_schrodinger(xi, 2, samples=20_000, seed=7, batch_size=5_000)
        b = mass_schrodinger(xi, 2, samples=20_000, seed=7, batch_size=5_000, workers=3)
        assert a.extrapolated == b.extrapolated
        assert a.estimates == b.estimates

    def test_report_serialisable(self):
        report = mass_ot([[1.0, 0.0], [0.0, 1.0]], 2, samples=20_000, seed=1)
        d = report.to_dict()
        assert d['lemma'] == 'mass_ot'
        assert d['samples'] == 20_000


class TestErrorScaling:
    def test_standard_error_halves_with_four_times_samples(self):
        xi = [[1.0, 0.0], [0.0, 1.0]]
        small = mass_schrodinger(xi, 2, samples=20_000, seed=7)
        large = mass_schrodinger(xi, 2, samples=80_000, seed=7)
        result = error_scaling(small, large)
        assert result['expected'] == pytest.approx(2.0)
        assert result['ratio'] == pytest.approx(2.0, rel=0.15)
        assert result['passed']
        assert result['samples'] == [20_000, 80_000]

    def test_requires_matching_reports(self):
        a = mass_schrodinger([[1.0, 0.0], [0.0, 1.0]], 2, samples=20_000, seed=1)
        b = mass_ot([[1.0, 0.0], [0.0, 1.0]], 2, samples=20_000, seed=1)
        with pytest.raises(OracleError):
            error_scaling(a, b)
        with pytest.raises(OracleError):
            error_scaling(a, a)
