"""
dispflow.cli 单元测试

覆盖：参数解析、退出码约定（0 通过 / 1 未通过 / 2 错误）、stderr 上的 JSON 错误文档，
以及 --output 覆盖输出目录。
"""

import json
import os

import numpy as np
import pytest
import yaml
from dispflow.cli import EXIT_ERROR, EXIT_FAILED, EXIT_OK, _matrix, build_parser, main
from dispflow.flows import QTrace
from dispflow.report import write_trace_csv


@pytest.fixture
def config_file(tmp_path):
    data = {
        'Logging': {'file': str(tmp_path / 'log' / 'dispflow.log'), 'enable_console': False},
        'Cache': {'dir': str(tmp_path / 'cache')},
        'Output': {'dir': str(tmp_path / 'output')},
        'Run': {'workers': 1},
    }
    path = tmp_path / 'run.yaml'
    path.write_text(yaml.safe_dump(data), encoding='utf-8')
    return str(path)


def _error_doc(err: str) -> dict:
    # stderr 末尾是缩进的 JSON 错误文档
    return json.loads(err[err.rindex('{\n  "success"') :])


def _csv(tmp_path, values):
    t = np.linspace(0.1, 0.8, 8)
    return write_trace_csv(QTrace.from_values(t, values, theorem='synthetic'), str(tmp_path / 'in.csv'))


class TestParser:
    def test_matrix_argument(self):
        assert _matrix('1,0;0,1') == [[1.0, 0.0], [0.0, 1.0]]

    def test_subcommand_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_trace_arguments(self):
        args = build_parser().parse_args(['--quiet', 'trace', '--theorem', 'qschro', '--m', '3', '--d', '1'])
        assert args.command == 'trace'
        assert (args.theorem, args.m, args.d, args.data) == ('qschro', 3, 1, 'gaussian')
        assert args.quiet

    def test_lemma_choices(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(['lemma', '--family', 'heat', '--d', '2'])


class TestExitCodes:
    def test_constants_ok(self, config_file, tmp_path, capsys):
        assert main(['--config', config_file, '--quiet', 'constants', '--d', '2']) == EXIT_OK
        out = capsys.readouterr().out
        assert 'constants' in out
        files = os.listdir(tmp_path / 'output')
        assert any(name.startswith('constants-') and name.endswith('.json') for name in files)

    def test_output_override(self, config_file, tmp_path):
        target = tmp_path / 'elsewhere'
        assert main(['--config', config_file, '--quiet', '--output', str(target), 'constants']) == EXIT_OK
        assert os.listdir(target)

    def test_cm_pass_and_fail(self, config_file, tmp_path):
        t = np.linspace(0.1, 0.8, 8)
        good = _csv(tmp_path, np.exp(-t))
        assert main(['--config', config_file, '--quiet', 'cm', '--input', good, '--order', '2']) == EXIT_OK
        bad = _csv(tmp_path, np.sin(8 * t))
        assert main(['--config', config_file, '--quiet', 'cm', '--input', bad, '--order', '2']) == EXIT_FAILED

    def test_missing_input_reports_json(self, config_file, tmp_path, capsys):
        code = main(['--config', config_file, '--quiet', 'cm', '--input', str(tmp_path / 'absent.csv')])
        assert code == EXIT_ERROR
        doc = _error_doc(capsys.readouterr().err)
        assert doc['success'] is False
        assert doc['error']['error_code'] == 8002

    def test_unknown_data_selector(self, config_file, capsys):
        code = main(['--config', config_file, '--quiet', 'trace', '--theorem', 'qschro', '--data', 'bogus'])
        assert code == EXIT_ERROR
        assert _error_doc(capsys.readouterr().err)['error']['error_code'] == 1002

    def test_bad_config_file(self, tmp_path, capsys):
        path = tmp_path / 'bad.yaml'
        path.write_text('Spectral:\n  nonsense: 1\n', encoding='utf-8')
        assert main(['--config', str(path), '--quiet', 'constants']) == EXIT_ERROR
        assert _error_doc(capsys.readouterr().err)['error']['error_code'] == 1001

    def test_pqd_arity(self, config_file, capsys):
        assert main(['--config', config_file, '--quiet', 'find-c', '--pqd', '4,4']) == EXIT_ERROR
        assert _error_doc(capsys.readouterr().err)['error']['error_code'] == 1002

    def test_suite_subset(self, config_file, capsys):
        assert main(['--config', config_file, '--quiet', 'suite', '--only', 'constants,kg-bound']) == EXIT_OK
        assert 'all_passed: ✓' in capsys.readouterr().out
