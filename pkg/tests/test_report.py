"""
dispflow.report 与 dispflow.cache 单元测试

覆盖：迹 CSV 的逐位往返、无头部 CSV、格式错误、报告结构与摘要渲染、
结果缓存的命中/未命中、损坏条目的删除重算与清空。
"""

import json
import os

import numpy as np
import pytest
from dispflow.cache import ResultCache
from dispflow.exceptions import OutputError
from dispflow.flows import QTrace
from dispflow.report import (
    ARTIFACT_VERSION,
    REPORT_SCHEMA,
    build_report,
    read_trace_csv,
    render_summary,
    trace_to_csv,
    write_report,
    write_trace_csv,
)


def _trace() -> QTrace:
    t = np.linspace(0.05, 1.6, 8)
    return QTrace(
        'qschro',
        t,
        np.exp(-t) / 3.0,
        np.full(8, 1e-9),
        constants={'m': 2, 'c': 0.1},
        grid={'d': 1, 'n': 128, 'half_width': 16.0},
        seed=3,
        extra={'note': 'x', 'raw': np.zeros(2)},
    )


class TestTraceCsv:
    def test_header_and_columns(self):
        text = trace_to_csv(_trace())
        lines = text.splitlines()
        assert lines[0].startswith('# ')
        header = json.loads(lines[0][2:])
        assert header['theorem'] == 'qschro'
        assert 'raw' not in header['extra']
        assert lines[1] == 't,Q,err_bound'
        assert len(lines) == 10

    def test_roundtrip_is_bit_exact(self, tmp_path):
        trace = _trace()
        path = write_trace_csv(trace, str(tmp_path / 'sub' / 'trace.csv'))
        back = read_trace_csv(path)
        np.testing.assert_array_equal(back.t, trace.t)
        np.testing.assert_array_equal(back.values, trace.values)
        np.testing.assert_array_equal(back.err, trace.err)
        assert back.theorem == 'qschro'
        assert back.seed == 3
        assert back.grid == trace.grid

    def test_plain_csv_without_header(self, tmp_path):
        path = tmp_path / 'plain.csv'
        rows = '\n'.join(f'{0.1 * (k + 1)},{1.0 / (k + 1)},0' for k in range(8))
        path.write_text('t,Q,err_bound\n' + rows + '\n', encoding='utf-8')
        trace = read_trace_csv(str(path))
        assert trace.theorem == 'imported'
        assert trace.t.size == 8

    @pytest.mark.parametrize(
        'content',
        [
            'a,b,c\n1,2,3\n',
            '# {not json\nt,Q,err_bound\n',
            't,Q,err_bound\n0.1,abc,0\n',
            't,Q,err_bound\n',
        ],
    )
    def test_malformed(self, tmp_path, content):
        path = tmp_path / 'bad.csv'
        path.write_text(content, encoding='utf-8')
        with pytest.raises(OutputError):
            read_trace_csv(str(path))


class TestReport:
    def test_build_report_fields(self):
        report = build_report('constants', {'x': 1}, {'S': 0.5}, 'abc')
        assert report['schema'] == REPORT_SCHEMA
        assert report['version'] == ARTIFACT_VERSION
        assert report['config_hash'] == 'abc'

    def test_write_report_is_canonical(self, tmp_path):
        report = build_report('constants', {'b': 2, 'a': 1}, {'S': 0.5}, 'abc')
        first = write_report(str(tmp_path / 'r1.json'), report)
        second = write_report(str(tmp_path / 'r2.json'), dict(reversed(list(report.items()))))
        with open(first, encoding='utf-8') as f1, open(second, encoding='utf-8') as f2:
            assert f1.read() == f2.read()

    def test_render_summary(self):
        report = build_report('suite', {}, {'drury': True, 'ccl': False, 'c': 0.5, 'label': 'x'}, 'f' * 64)
        text = render_summary(report)
        assert 'drury: ✓' in text
        assert 'ccl: ✗' in text
        assert 'c: 0.5' in text
        assert 'config ffffffffffff' in text


class TestResultCache:
    def test_miss_then_hit(self, tmp_path):
        cache = ResultCache(str(tmp_path / 'cache'))
        calls = []

        def compute():
            calls.append(1)
            return {'value': (1.0, 2.0)}

        first = cache.cached({'job': 'x'}, compute)
        second = cache.cached({'job': 'x'}, compute)
        assert first == second == {'value': [1.0, 2.0]}
        assert len(calls) == 1
        assert (cache.hits, cache.misses) == (1, 1)

    def test_key_layout(self, tmp_path):
        cache = ResultCache(str(tmp_path))
        key = cache.key({'a': 1})
        assert cache.path_for(key) == os.path.join(str(tmp_path), key[:2], f'{key}.json')
        assert cache.key({'a': 1}) == key != cache.key({'a': 2})

    def test_corrupt_entry_recomputed(self, tmp_path):
        cache = ResultCache(str(tmp_path))
        cache.cached({'job': 'y'}, lambda: 1)
        path = cache.path_for(cache.key({'job': 'y'}))
        with open(path, 'w', encoding='utf-8') as f:
            f.write('{broken')
        assert cache.load(cache.key({'job': 'y'})) is None
        assert not os.path.exists(path)
        assert cache.cached({'job': 'y'}, lambda: 2) == 2

    def test_disabled_passthrough(self, tmp_path):
        cache = ResultCache(str(tmp_path / 'off'), enabled=False)
        assert cache.cached({'job': 'z'}, lambda: 5) == 5
        assert not os.path.exists(str(tmp_path / 'off'))

    def test_clear(self, tmp_path):
        cache = ResultCache(str(tmp_path))
        for k in range(3):
            cache.cached({'k': k}, lambda k=k: k + 1)
        assert cache.clear() == 3
        assert ResultCache(str(tmp_path / 'missing')).clear() == 0
