"""
dispflow.logger 单元测试

覆盖：重复初始化不叠加处理器、文件日志落盘、控制台关闭时的空处理器。
"""

import logging

from dispflow.logger import ROOT_LOGGER_NAME, Logger, ProgressAwareHandler


def _handlers():
    return logging.getLogger(ROOT_LOGGER_NAME).handlers


class TestLogger:
    def test_reinitialise_replaces_handlers(self, tmp_path):
        config = {'file': str(tmp_path / 'a.log'), 'enable_console': True}
        Logger(config)
        Logger(config)
        kinds = sorted(type(h).__name__ for h in _handlers())
        assert kinds == ['ProgressAwareHandler', 'RotatingFileHandler']

    def test_file_receives_records(self, tmp_path):
        path = tmp_path / 'log' / 'run.log'
        log = Logger({'file': str(path), 'enable_console': False, 'level': 'debug'})
        logging.getLogger('dispflow.flows').info('迹已计算')
        for handler in _handlers():
            handler.flush()
        assert log.log_file == str(path)
        assert '[INFO] [dispflow.flows] 迹已计算' in path.read_text(encoding='utf-8')

    def test_no_outputs_uses_null_handler(self):
        log = Logger({'file': '', 'enable_console': False})
        assert [type(h) for h in _handlers()] == [logging.NullHandler]
        assert log.log_file is None

    def test_console_writes_stderr(self, capsys):
        Logger({'file': '', 'enable_console': True})
        logging.getLogger('dispflow.kinetic').warning('覆盖不足')
        captured = capsys.readouterr()
        assert '覆盖不足' in captured.err
        assert captured.out == ''

    def test_handler_formats_record(self):
        handler = ProgressAwareHandler()
        handler.setFormatter(logging.Formatter('%(message)s'))
        record = logging.LogRecord('dispflow', logging.INFO, __file__, 1, '消息', None, None)
        assert handler.format(record) == '消息'
