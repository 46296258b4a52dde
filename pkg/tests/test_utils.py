"""
dispflow.utils 模块单元测试

覆盖：atomic_write / atomic_write_bytes（覆盖写、按摘要备份、失败重试）、safe_read_file（多编码/不存在/不可解码）、
稳定哈希、parallel_map 下标顺序、内存预算。
"""

import hashlib
import os
import threading
import time
from pathlib import Path

import numpy as np
import pytest
from dispflow.exceptions import FileException
from dispflow.utils import (
    _backup_file,
    array_digest,
    atomic_write,
    atomic_write_bytes,
    canonical_json,
    memory_budget_bytes,
    parallel_map,
    progress_iter,
    safe_read_file,
    stable_hash,
)
from hypothesis import given, settings
from hypothesis import strategies as st

# ── atomic_write ──────────────────────────────


class TestAtomicWrite:
    """原子写入文件"""

    def test_write_new_file(self, tmp_path):
        filepath = str(tmp_path / 'report.json')
        atomic_write(filepath, '{"ok": true}')
        with open(filepath, encoding='utf-8') as f:
            assert f.read() == '{"ok": true}'

    def test_overwrite_existing(self, tmp_path):
        filepath = str(tmp_path / 'overwrite.txt')
        atomic_write(filepath, 'original')
        atomic_write(filepath, 'updated')
        with open(filepath, encoding='utf-8') as f:
            assert f.read() == 'updated'

    def test_unicode_content(self, tmp_path):
        filepath = str(tmp_path / 'unicode.txt')
        content = '单调量 Q(t) ≤ 𝓢'
        atomic_write(filepath, content)
        with open(filepath, encoding='utf-8') as f:
            assert f.read() == content

    def test_creates_parent_dir(self, tmp_path):
        filepath = str(tmp_path / 'subdir' / 'nested' / 'trace.csv')
        atomic_write(filepath, 't,Q\n')
        assert os.path.exists(filepath)

    def test_backup_on_overwrite(self, tmp_path):
        filepath = str(tmp_path / 'backup_test.txt')
        atomic_write(filepath, 'v1', backup=False)
        atomic_write(filepath, 'v2', backup=True)
        backups = list((tmp_path / '.backup').iterdir())
        assert len(backups) == 1
        with open(backups[0], encoding='utf-8') as f:
            assert f.read() == 'v1'

    def test_custom_backup_dir(self, tmp_path):
        filepath = str(tmp_path / 'file.txt')
        backup_dir = str(tmp_path / 'custom_backup')
        atomic_write(filepath, 'original')
        atomic_write(filepath, 'updated', backup=True, backup_dir=backup_dir)
        assert len(os.listdir(backup_dir)) == 1

    def test_no_backup_when_disabled(self, tmp_path):
        filepath = str(tmp_path / 'nobackup.txt')
        atomic_write(filepath, 'v1')
        atomic_write(filepath, 'v2')
        assert not (tmp_path / '.backup').exists()

    def test_no_temp_files_left(self, tmp_path):
        atomic_write(str(tmp_path / 'a.txt'), 'x' * 10000)
        assert [p.name for p in tmp_path.iterdir()] == ['a.txt']

    def test_empty_content(self, tmp_path):
        filepath = str(tmp_path / 'empty.txt')
        atomic_write(filepath, '')
        assert os.path.getsize(filepath) == 0

    def test_identical_backups_collapse(self, tmp_path):
        filepath = str(tmp_path / 'report.json')
        atomic_write(filepath, 'v1')
        atomic_write(filepath, 'v1', backup=True)
        atomic_write(filepath, 'v2', backup=True)
        names = sorted(os.listdir(tmp_path / '.backup'))
        assert len(names) == 1
        assert names[0].startswith('report.json.')

    def test_failed_write_leaves_no_temp(self, tmp_path, monkeypatch):
        def refuse(src, dst):
            raise OSError('只读文件系统')

        monkeypatch.setattr(os, 'replace', refuse)
        with pytest.raises(FileException) as exc_info:
            atomic_write(str(tmp_path / 'q.csv'), 't,Q\n', retries=2, retry_delay=0)
        assert exc_info.value.details['attempts'] == 2
        assert list(tmp_path.iterdir()) == []


class TestAtomicWriteBytes:
    def test_array_payload(self, tmp_path):
        arr = np.linspace(0.0, 1.0, 17)
        filepath = str(tmp_path / 'ckpt' / 'state.bin')
        atomic_write_bytes(filepath, arr.astype('<f8').tobytes())
        back = np.fromfile(filepath, dtype='<f8')
        np.testing.assert_array_equal(back, arr)


# ── safe_read_file ────────────────────────────


class TestSafeReadFile:
    """安全读取文件"""

    def test_read_utf8(self, tmp_path):
        filepath = str(tmp_path / 'utf8.txt')
        with open(filepath, 'w', encoding='utf-8') as f:
            f.write('中文内容')
        assert safe_read_file(filepath) == '中文内容'

    def test_file_not_found(self):
        with pytest.raises(FileException) as exc_info:
            safe_read_file('/nonexistent/path/file.txt')
        assert exc_info.value.details['reason'] == 'file_not_found'

    def test_fallback_encodings(self, tmp_path):
        filepath = str(tmp_path / 'gbk.txt')
        with open(filepath, 'w', encoding='gbk') as f:
            f.write('中文GBK')
        assert '中文GBK' in safe_read_file(filepath, encoding='utf-8', fallback_encodings=['gbk'])

    def test_bom_stripped(self, tmp_path):
        filepath = str(tmp_path / 'bom.txt')
        with open(filepath, 'w', encoding='utf-8-sig') as f:
            f.write('BOM test')
        assert safe_read_file(filepath) == 'BOM test'

    def test_undecodable_raises(self, tmp_path):
        filepath = tmp_path / 'binary.csv'
        filepath.write_bytes(b'\xff\xfe\xfa')
        with pytest.raises(FileException) as exc_info:
            safe_read_file(str(filepath))
        assert exc_info.value.details['reason'] == 'undecodable'


# ── _backup_file ──────────────────────────────


class TestBackupFile:
    def test_backup_named_by_digest(self, tmp_path):
        source = tmp_path / 'trace.csv'
        source.write_text('t,Q\n0.1,1.0\n', encoding='utf-8')
        path = _backup_file(str(source), str(tmp_path / 'keep'))
        assert path is not None
        digest = hashlib.sha256(source.read_bytes()).hexdigest()[:12]
        assert os.path.basename(path) == f'trace.csv.{digest}'
        assert Path(path).read_bytes() == source.read_bytes()


# ── 哈希 ──────────────────────────────────────


class TestHashing:
    def test_canonical_json_sorted(self):
        assert canonical_json({'b': 1, 'a': [1, 2]}) == '{"a":[1,2],"b":1}'

    def test_key_order_irrelevant(self):
        assert stable_hash({'x': 1, 'y': 2}) == stable_hash({'y': 2, 'x': 1})

    def test_numpy_scalars(self):
        assert canonical_json({'v': np.float64(0.5), 'n': np.int64(3)}) == '{"n":3,"v":0.5}'

    def test_array_digest_sensitive_to_dtype_and_shape(self):
        a = np.arange(6, dtype=np.float64)
        assert array_digest(a) != array_digest(a.astype(np.float32))
        assert array_digest(a) != array_digest(a.reshape(2, 3))
        assert array_digest(a) == array_digest(a.copy())

    def test_unserialisable_rejected(self):
        with pytest.raises(TypeError):
            canonical_json({'f': object()})


# ── 并行与进度 ────────────────────────────────


class TestParallelMap:
    def test_serial(self):
        assert parallel_map(lambda x: x * x, [1, 2, 3]) == [1, 4, 9]

    def test_order_independent_of_completion(self):
        def slow_first(i):
            time.sleep(0.02 if i == 0 else 0.0)
            return i, threading.get_ident()

        out = parallel_map(slow_first, list(range(8)), workers=4)
        assert [i for i, _ in out] == list(range(8))

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(-1000, 1000), max_size=30), st.integers(1, 6))
    def test_matches_builtin_map(self, items, workers):
        assert parallel_map(lambda x: 3 * x + 1, items, workers=workers) == [3 * x + 1 for x in items]

    def test_exception_propagates(self):
        def boom(x):
            raise ValueError(x)

        with pytest.raises(ValueError):
            parallel_map(boom, [1, 2], workers=2)

    def test_progress_iter_passthrough(self):
        assert list(progress_iter(range(3), enabled=False)) == [0, 1, 2]


class TestMemoryBudget:
    def test_explicit(self):
        assert memory_budget_bytes(2) == 2 * 1024 * 1024

    def test_auto_positive(self):
        assert memory_budget_bytes(0) > 0
