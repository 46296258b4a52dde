#!/usr/bin/env python3
"""
结果输出模块
==========

- 迹 CSV: 首行 `# {JSON 头}`，随后列 t,Q,err_bound（%.17g，便于逐位比对）
- JSON 报告: 规范化 JSON（键排序），带版本号与配置哈希
- 文本摘要: 只渲染报告 summary 段中的数值
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from typing import Any

import numpy as np

from dispflow.exceptions import OutputError
from dispflow.flows import QTrace
from dispflow.utils import atomic_write, canonical_json, safe_read_file

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = '1.0.0'
REPORT_SCHEMA = 1
TRACE_COLUMNS = ('t', 'Q', 'err_bound')


def _fmt(x: float) -> str:
    return format(float(x), '.17g')


def trace_to_csv(trace: QTrace) -> str:
    buf = io.StringIO()
    buf.write('# ' + canonical_json(trace.header()) + '\n')
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow(TRACE_COLUMNS)
    for t, q, e in zip(trace.t, trace.values, trace.err, strict=True):
        writer.writerow((_fmt(t), _fmt(q), _fmt(e)))
    return buf.getvalue()


def write_trace_csv(trace: QTrace, path: str, backup: bool = False) -> str:
    _ensure_parent(path)
    atomic_write(path, trace_to_csv(trace), backup=backup, logger=logger)
    logger.info('迹已写入: %s (%d 行)', path, trace.t.size)
    return path


def read_trace_csv(path: str) -> QTrace:
    """读取 write_trace_csv 的输出；无头部行的纯三列 CSV 也可读取"""
    text = safe_read_file(path, logger=logger)
    lines = text.splitlines()
    header: dict[str, Any] = {}
    if lines and lines[0].startswith('#'):
        try:
            header = json.loads(lines[0][1:].strip())
        except json.JSONDecodeError as e:
            raise OutputError(f'迹文件头部不是合法 JSON: {path}', original=e) from e
        lines = lines[1:]
    rows = list(csv.reader(lines))
    if not rows or [c.strip() for c in rows[0]] != list(TRACE_COLUMNS):
        raise OutputError(f'迹文件缺少列头 {",".join(TRACE_COLUMNS)}: {path}', details={'filepath': path})
    try:
        data = np.array([[float(c) for c in row] for row in rows[1:] if row], dtype=float)
    except ValueError as e:
        raise OutputError(f'迹文件含非数值行: {path}', original=e) from e
    if data.ndim != 2 or data.shape[1] != 3:
        raise OutputError(f'迹文件为空或列数不符: {path}')
    return QTrace(
        theorem=header.get('theorem', 'imported'),
        t=data[:, 0],
        values=data[:, 1],
        err=data[:, 2],
        constants=header.get('constants', {}),
        grid=header.get('grid', {}),
        seed=header.get('seed'),
        extra=header.get('extra', {}),
    )


def build_report(command: str, result: dict[str, Any], summary: dict[str, Any], config_hash: str) -> dict[str, Any]:
    return {
        'schema': REPORT_SCHEMA,
        'version': ARTIFACT_VERSION,
        'command': command,
        'config_hash': config_hash,
        'summary': summary,
        'result': result,
    }


def write_report(path: str, report: dict[str, Any], backup: bool = False) -> str:
    _ensure_parent(path)
    atomic_write(path, canonical_json(report) + '\n', backup=backup, logger=logger)
    logger.info('报告已写入: %s', path)
    return path


def render_summary(report: dict[str, Any]) -> str:
    lines = [
        '=' * 60,
        f'dispflow {report.get("version", "?")} · {report.get("command", "?")} · config {str(report.get("config_hash", ""))[:12]}',
        '-' * 60,
    ]
    for key, value in report.get('summary', {}).items():
        if isinstance(value, bool):
            text = '✓' if value else '✗'
        elif isinstance(value, float):
            text = _fmt(value)
        else:
            text = str(value)
        lines.append(f'  {key}: {text}')
    lines.append('=' * 60)
    return '\n'.join(lines)


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(parent, exist_ok=True)
    except OSError as e:
        raise OutputError(f'无法创建输出目录: {parent}', original=e) from e
