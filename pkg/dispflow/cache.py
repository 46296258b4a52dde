#!/usr/bin/env python3
"""
结果缓存
======

以配置/输入哈希为键的 JSON 缓存，布局 <dir>/<哈希前两位>/<哈希>.json。
损坏或不可读的条目删除后重新计算。
"""

from __future__ import annotations

import json
import logging
import os
from typing import TYPE_CHECKING, Any

from dispflow.exceptions import CacheError
from dispflow.utils import atomic_write, canonical_json, stable_hash

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)


class ResultCache:
    """文件系统 JSON 缓存；enabled=False 时直通计算"""

    def __init__(self, directory: str, enabled: bool = True):
        self.directory = directory
        self.enabled = enabled
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> str:
        return os.path.join(self.directory, key[:2], f'{key}.json')

    @staticmethod
    def key(key_parts: Any) -> str:
        return stable_hash(key_parts)

    def load(self, key: str) -> Any | None:
        path = self.path_for(key)
        if not os.path.exists(path):
            return None
        try:
            with open(path, encoding='utf-8') as f:
                blob = json.load(f)
            if not isinstance(blob, dict) or blob.get('key') != key or 'value' not in blob:
                raise CacheError(f'缓存条目结构不符: {path}', details={'filepath': path})
            return blob['value']
        except (OSError, json.JSONDecodeError, CacheError) as e:
            logger.warning('缓存条目损坏，删除后重算: %s (%s)', path, e)
            try:
                os.remove(path)
            except OSError:
                pass
            return None

    def store(self, key: str, value: Any) -> None:
        path = self.path_for(key)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        atomic_write(path, canonical_json({'key': key, 'value': value}), verify=False, logger=logger)

    def cached(self, key_parts: Any, compute: Callable[[], Any]) -> Any:
        """命中则返回缓存值，否则计算并写入；值须可 JSON 序列化"""
        if not self.enabled:
            return compute()
        key = self.key(key_parts)
        value = self.load(key)
        if value is not None:
            self.hits += 1
            logger.debug('缓存命中: %s', key[:12])
            return value
        self.misses += 1
        # 命中与未命中返回同一 JSON 形态
        value = json.loads(canonical_json(compute()))
        self.store(key, value)
        return value

    def clear(self) -> int:
        removed = 0
        if not os.path.isdir(self.directory):
            return 0
        for root, _dirs, files in os.walk(self.directory):
            for name in files:
                if name.endswith('.json'):
                    os.remove(os.path.join(root, name))
                    removed += 1
        return removed
