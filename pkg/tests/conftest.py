# -*- coding: utf-8 -*-
"""
pytest 共享环境配置

此文件在 pytest 收集测试前被导入（先于任何测试文件的模块级代码）：
1. 把项目根目录加入 sys.path
2. 把结果缓存重定向到共享临时目录（DISPFLOW_CACHE），避免污染工作目录
3. 提供小网格、小配置等公共 fixture
"""

import os
import sys
import tempfile
import shutil

# ── 项目路径 ──────────────────────────────────────
PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, PROJECT_ROOT)

# ── 共享临时目录（在 pytest 收集测试前创建） ────
SHARED_TMP_DIR = tempfile.mkdtemp(prefix='dispflow_test_')
os.environ['DISPFLOW_CACHE'] = os.path.join(SHARED_TMP_DIR, 'cache')

import pytest

from dispflow.config import Config
from dispflow.spectral import GridSpec


@pytest.fixture
def grid1d():
    """一维小网格：n=128, L=16"""
    return GridSpec(d=1, n=128, half_width=16.0)


@pytest.fixture
def grid2d():
    """二维小网格：n=64, L=12"""
    return GridSpec(d=2, n=64, half_width=12.0)


@pytest.fixture
def small_config(tmp_path):
    """缩小规模的运行配置，输出与缓存写入 tmp_path"""
    cfg = Config()
    cfg.set('Spectral', 'n', '128')
    cfg.set('Spectral', 'half_width', '16.0')
    cfg.set('Spectral', 's_count', '65')
    cfg.set('Flows', 't_count', '10')
    cfg.set('Oracles', 'samples', '20000')
    cfg.set('Oracles', 'batch_size', '5000')
    cfg.set('Kinetic', 'n', '32')
    cfg.set('Kinetic', 'steps', '7')
    cfg.set('Output', 'dir', str(tmp_path / 'output'))
    cfg.set('Cache', 'dir', str(tmp_path / 'cache'))
    cfg.set('Logging', 'file', str(tmp_path / 'log' / 'dispflow.log'))
    cfg.set('Logging', 'enable_console', 'False')
    cfg.set('Run', 'workers', '1')
    return cfg


# ── 双保险清理 ─────────────────────────────────
# 1) pytest_sessionfinish – pytest 框架内触发
# 2) atexit – Python 进程退出时兜底


def pytest_sessionfinish(session, exitstatus):
    _cleanup_tmpdir()


def _cleanup_tmpdir():
    if os.path.isdir(SHARED_TMP_DIR):
        shutil.rmtree(SHARED_TMP_DIR, ignore_errors=True)


import atexit

atexit.register(_cleanup_tmpdir)
