#!/usr/bin/env python3
"""
通用工具模块
============

  - 原子写入 / 安全读取 / 备份（文本与二进制）
  - 稳定哈希（配置哈希、数组摘要）
  - 线程池并行映射（按下标收集，归约顺序确定）
  - 进度条与内存预算
"""

from __future__ import annotations

import concurrent.futures
import contextlib
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from typing import TYPE_CHECKING, Any, TypeVar

import numpy as np
import psutil

from dispflow.exceptions import FileException

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

try:
    from tqdm import tqdm

    TQDM_AVAILABLE = True
except ImportError:  # pragma: no cover
    tqdm = None
    TQDM_AVAILABLE = False

T = TypeVar('T')
R = TypeVar('R')


# ═══════════════════════════════════════════════════
# 文件
# ═══════════════════════════════════════════════════

_log = logging.getLogger('dispflow.utils')


def atomic_write(
    filepath: str,
    content: str,
    encoding: str = 'utf-8',
    retries: int = 3,
    retry_delay: float = 0.5,
    backup: bool = False,
    backup_dir: str | None = None,
    verify: bool = True,
    logger: logging.Logger | None = None,
) -> None:
    """原子写入文本文件：临时文件 + fsync + os.replace

    报告与迹 CSV 要求逐位可复现，verify 时回读比对字节，不一致抛 FileException。
    """
    _write_payload(filepath, content.encode(encoding), retries, retry_delay, backup, backup_dir, verify, logger or _log)


def atomic_write_bytes(
    filepath: str,
    payload: bytes,
    retries: int = 3,
    retry_delay: float = 0.5,
    backup: bool = False,
    logger: logging.Logger | None = None,
) -> None:
    """原子写入二进制文件（检查点数组）"""
    _write_payload(filepath, payload, retries, retry_delay, backup, None, True, logger or _log)


def _write_payload(
    filepath: str,
    payload: bytes,
    retries: int,
    retry_delay: float,
    backup: bool,
    backup_dir: str | None,
    verify: bool,
    log: logging.Logger,
) -> None:
    dirpath = os.path.dirname(filepath) or '.'
    try:
        os.makedirs(dirpath, exist_ok=True)
    except OSError as e:
        raise FileException(f'无法创建输出目录: {dirpath}', details={'dirpath': dirpath}, original=e) from e
    if backup and os.path.exists(filepath):
        _backup_file(filepath, backup_dir, log)

    last_error: OSError | None = None
    for attempt in range(1, retries + 1):
        try:
            _replace_with(filepath, dirpath, payload)
            break
        except OSError as e:
            last_error = e
            log.warning('写入 %s 失败 (%d/%d): %s', filepath, attempt, retries, e)
            if attempt < retries:
                time.sleep(retry_delay)
    else:
        raise FileException(
            f'写入 {filepath} 失败，已重试 {retries} 次',
            details={'filepath': filepath, 'attempts': retries, 'last_error': str(last_error)},
            original=last_error,
        )

    if verify:
        with open(filepath, 'rb') as f:
            written = f.read()
        if written != payload:
            raise FileException(
                f'回读内容与写入不一致: {filepath}',
                details={'filepath': filepath, 'expected_bytes': len(payload), 'actual_bytes': len(written)},
            )
    log.debug('已写入 %s (%d 字节)', filepath, len(payload))


def _replace_with(filepath: str, dirpath: str, payload: bytes) -> None:
    fd, tmp_path = tempfile.mkstemp(suffix='.tmp', prefix='.dispflow_', dir=dirpath)
    try:
        with os.fdopen(fd, 'wb') as tmp:
            tmp.write(payload)
            tmp.flush()
            os.fsync(tmp.fileno())
        os.replace(tmp_path, filepath)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp_path)
        raise


def _backup_file(filepath: str, backup_dir: str | None = None, logger: logging.Logger | None = None) -> str | None:
    """按内容摘要命名备份；同一内容只保留一份"""
    log = logger or _log
    target_dir = backup_dir or os.path.join(os.path.dirname(filepath) or '.', '.backup')
    with open(filepath, 'rb') as f:
        digest = hashlib.sha256(f.read()).hexdigest()[:12]
    backup_path = os.path.join(target_dir, f'{os.path.basename(filepath)}.{digest}')
    try:
        os.makedirs(target_dir, exist_ok=True)
        shutil.copy2(filepath, backup_path)
    except OSError as e:
        log.warning('备份 %s 失败: %s', filepath, e)
        return None
    log.info('已备份 %s -> %s', filepath, backup_path)
    return backup_path


def safe_read_file(
    filepath: str,
    encoding: str = 'utf-8',
    fallback_encodings: list[str] | None = None,
    logger: logging.Logger | None = None,
) -> str:
    """读取文本文件，按编码列表依次尝试并去掉 BOM；全部失败抛 FileException"""
    if not os.path.exists(filepath):
        raise FileException(
            f'文件不存在: {filepath}',
            suggestion='请检查输入路径',
            details={'filepath': filepath, 'reason': 'file_not_found'},
        )
    try:
        with open(filepath, 'rb') as f:
            raw = f.read()
    except OSError as e:
        raise FileException(f'无法读取文件: {filepath}', details={'filepath': filepath}, original=e) from e
    tried = [encoding, *(fallback_encodings or ['utf-8-sig'])]
    for enc in tried:
        try:
            return raw.decode(enc).removeprefix('\ufeff')
        except UnicodeDecodeError:
            (logger or _log).debug('%s 不是 %s 编码', filepath, enc)
    raise FileException(
        f'无法解码文件: {filepath}',
        details={'filepath': filepath, 'reason': 'undecodable', 'encodings': tried},
    )


# ═══════════════════════════════════════════════════
# 哈希
# ═══════════════════════════════════════════════════


def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return {'__ndarray__': array_digest(obj)}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, 'to_dict'):
        return obj.to_dict()
    raise TypeError(f'无法序列化的类型: {type(obj).__name__}')


def canonical_json(obj: Any) -> str:
    """键排序、无多余空白的 JSON，作为哈希与机器输出的唯一表示"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False, default=_json_default)


def stable_hash(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def array_digest(a: np.ndarray) -> str:
    arr = np.ascontiguousarray(a)
    h = hashlib.sha256()
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()


# ═══════════════════════════════════════════════════
# 并行与进度
# ═══════════════════════════════════════════════════


def parallel_map(
    func: Callable[[T], R],
    items: Sequence[T],
    workers: int = 1,
    desc: str = '',
    unit: str = 'it',
    progress: bool = False,
) -> list[R]:
    """线程池映射；结果按输入下标排列，与完成顺序无关"""
    total = len(items)
    results: list[Any] = [None] * total
    pbar = tqdm(total=total, desc=desc, unit=unit, leave=False) if (progress and TQDM_AVAILABLE and total > 1) else None
    try:
        if workers <= 1 or total <= 1:
            for i, item in enumerate(items):
                results[i] = func(item)
                if pbar is not None:
                    pbar.update(1)
            return results
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(workers, total)) as executor:
            future_to_index = {executor.submit(func, item): i for i, item in enumerate(items)}
            for future in concurrent.futures.as_completed(future_to_index):
                results[future_to_index[future]] = future.result()
                if pbar is not None:
                    pbar.update(1)
        return results
    finally:
        if pbar is not None:
            pbar.close()


def progress_iter(iterable: Iterable[T], total: int | None = None, desc: str = '', enabled: bool = False) -> Iterable[T]:
    if enabled and TQDM_AVAILABLE:
        return tqdm(iterable, total=total, desc=desc, leave=False)
    return iterable


def memory_budget_bytes(budget_mb: float) -> int:
    """内存预算；0 表示自动取可用内存的一半"""
    if budget_mb and budget_mb > 0:
        return int(budget_mb * 1024 * 1024)
    return int(psutil.virtual_memory().available // 2)
