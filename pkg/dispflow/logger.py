#!/usr/bin/env python3
"""
日志管理模块
============

数值模块只通过 ``logging.getLogger(__name__)`` 取记录器；
处理器由 Logger 统一挂在 ``dispflow`` 根记录器上。

stdout 只留给命令结果，控制台日志一律写 stderr，
并经 tqdm.write 输出，避免打断长时间检验的进度条。
"""

from __future__ import annotations

import contextlib
import logging
import logging.handlers
import os
import sys
from typing import Any

try:
    from tqdm import tqdm
except ImportError:  # pragma: no cover
    tqdm = None

UNIFIED_LOG_FORMAT = '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s'
UNIFIED_LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

ROOT_LOGGER_NAME = 'dispflow'


class ProgressAwareHandler(logging.StreamHandler):
    """控制台处理器：有 tqdm 时经 tqdm.write 输出"""

    def __init__(self) -> None:
        super().__init__(sys.stderr)

    def emit(self, record: logging.LogRecord) -> None:
        if tqdm is None:
            super().emit(record)
            return
        try:
            tqdm.write(self.format(record), file=self.stream)
        except Exception:
            self.handleError(record)


def _file_handler(config: dict[str, Any]) -> logging.Handler | None:
    log_file = config.get('file', '')
    if not log_file:
        return None
    try:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        if config.get('clear_on_startup', False) and os.path.exists(log_file):
            os.remove(log_file)
        return logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=int(config.get('max_size', 10)) * 1024 * 1024,
            backupCount=int(config.get('backup_count', 5)),
            encoding='utf-8',
        )
    except OSError as e:
        # 日志尚未就绪，只能直接写 stderr
        print(f'日志文件 {log_file} 不可用，仅输出到控制台: {e}', file=sys.stderr)
        return None


class Logger:
    """dispflow 日志树的配置入口

    config 字段 (Logging 节): level / file / max_size(MB) / backup_count / enable_console / clear_on_startup
    """

    def __init__(self, config: dict[str, Any]):
        self.config = config
        self.logger = self.setup_logging(config)

    @staticmethod
    def _detach_handlers(logger: logging.Logger) -> None:
        # 重复初始化（测试、同进程多次运行）时不叠加处理器
        for handler in logger.handlers[:]:
            logger.removeHandler(handler)
            with contextlib.suppress(Exception):
                handler.close()

    def setup_logging(self, config: dict[str, Any]) -> logging.Logger:
        logger = logging.getLogger(ROOT_LOGGER_NAME)
        level = getattr(logging, str(config.get('level', 'INFO')).upper(), logging.INFO)
        logger.setLevel(level)
        self._detach_handlers(logger)

        formatter = logging.Formatter(UNIFIED_LOG_FORMAT, datefmt=UNIFIED_LOG_DATE_FORMAT)
        handlers: list[logging.Handler] = []
        file_handler = _file_handler(config)
        if file_handler is not None:
            handlers.append(file_handler)
        if config.get('enable_console', True):
            handlers.append(ProgressAwareHandler())
        for handler in handlers:
            handler.setFormatter(formatter)
            logger.addHandler(handler)
        if not handlers:
            logger.addHandler(logging.NullHandler())

        logger.propagate = False
        logger.debug('日志系统初始化完成 (level=%s, file=%s)', logging.getLevelName(level), config.get('file') or '-')
        return logger

    @property
    def log_file(self) -> str | None:
        for handler in self.logger.handlers:
            if isinstance(handler, logging.handlers.RotatingFileHandler):
                return handler.baseFilename
        return None
