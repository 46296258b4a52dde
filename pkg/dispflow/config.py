#!/usr/bin/env python3
"""
配置管理模块
============

Config 类: 默认值字典 + 分节 YAML 运行配置 + 环境变量覆盖。

优先级（高 → 低）:
  1. 运行期 set()（命令行参数写入）
  2. 运行配置文件（--config 指定的 YAML）
  3. 环境变量 DISPFLOW_CACHE（仅 Cache.dir）
  4. _DEFAULT_VALUES
"""

from __future__ import annotations

import logging
import os
from typing import Any, ClassVar

import yaml

from dispflow.exceptions import ConfigError

CACHE_ENV_VAR = 'DISPFLOW_CACHE'

_TRUE_VALUES = ('true', '1', 'yes', 'on')


class Config:
    """配置管理类

    对外接口:
    - __init__(path=None): 可选加载 YAML 运行配置
    - get / getint / getfloat / getboolean / getlist: 按 (section, key) 读取
    - set(section, key, value): 运行期覆盖
    - get_xxx_config() 便捷方法: 覆盖各配置段
    """

    # 单一事实来源；config/config-defaults.yaml 与此保持一致
    _DEFAULT_VALUES: ClassVar[dict[str, str]] = {
        # [Logging]
        'Logging.level': 'INFO',
        'Logging.file': './log/dispflow.log',
        'Logging.max_size': '10',
        'Logging.backup_count': '5',
        'Logging.enable_console': 'True',
        # [Spectral]
        'Spectral.d': '1',
        'Spectral.n': '256',
        'Spectral.half_width': '16.0',
        'Spectral.memory_budget_mb': '0',  # 0 = 可用内存的一半
        'Spectral.energy_fraction': '1e-8',  # 有效频率半径外允许的能量比例
        'Spectral.s_count': '129',
        'Spectral.zero_override': '0.0',
        # [Norms]
        'Norms.tail_fit_fraction': '0.25',  # 尾部拟合内点距端点的窗口比例
        # [Multilinear]
        'Multilinear.coarsen': '1',
        'Multilinear.prune_tol': '1e-14',
        'Multilinear.block_elements': '2000000',
        # [Oracles]
        'Oracles.samples': '100000',
        'Oracles.batch_size': '20000',
        'Oracles.widths': '0.3, 0.15, 0.075',  # 相对能量间隙
        'Oracles.edge_shifts': '0.2, 0.1, 0.05',  # 相对能量尺度
        'Oracles.rel_tol': '0.02',
        'Oracles.se_factor': '3.0',
        'Oracles.seed': '20240601',
        # [Flows]
        'Flows.t_start': '0.05',
        'Flows.t_stop': '1.6',
        'Flows.t_count': '16',
        'Flows.cm_order': '3',
        'Flows.rel_tol': '0.01',
        'Flows.unresolvable_fraction': '0.1',
        # [PDE]
        'PDE.delta': '1e-12',
        'PDE.fd_step': '1e-3',
        'PDE.find_c_rtol': '1e-3',
        'PDE.monotone_tol': '1e-4',
        # [SteinTomas]
        'SteinTomas.shape': 'disk',
        'SteinTomas.radius': '6.0',
        'SteinTomas.profile': 'paraboloid',
        'SteinTomas.coeffs': '1.0, 1.0, 0.0',  # quartic: a, b, gamma
        'SteinTomas.kappa_min': '0.1',
        'SteinTomas.n_theta': '512',
        'SteinTomas.samples': '256',
        'SteinTomas.seed': '7',
        # [Kinetic]
        'Kinetic.n': '64',
        'Kinetic.half_width': '6.0',
        'Kinetic.diffusion_floor': '1e-12',
        'Kinetic.dt': '1e-3',
        'Kinetic.max_halvings': '40',
        'Kinetic.mass_tol': '0.005',
        'Kinetic.calibration_exponent': '2.5',
        'Kinetic.directions': '64',
        'Kinetic.steps': '50',
        'Kinetic.monotone_tol': '1e-6',
        'Kinetic.drury_tol': '0.02',
        # [Cache]
        'Cache.enabled': 'True',
        'Cache.dir': '.dispflow-cache',
        # [Output]
        'Output.dir': './output',
        'Output.progress': 'False',
        'Output.backup': 'False',
        # [Run]
        'Run.workers': '4',
        'Run.seeds': '0, 1, 2, 3, 4',
        'Run.profile': 'quick',
    }

    def __init__(self, path: str | None = None):
        self.path = path
        self._values: dict[str, str] = dict(self._DEFAULT_VALUES)
        env_cache = os.environ.get(CACHE_ENV_VAR)
        if env_cache:
            self._values['Cache.dir'] = env_cache
        if path:
            self.load_file(path)

    # ── 加载 ──────────────────────────────────

    def load_file(self, path: str) -> None:
        """加载分节 YAML；节名与键名必须已在默认值中声明"""
        try:
            with open(path, encoding='utf-8') as f:
                data = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigError(f'无法读取运行配置: {path}', details={'path': path}, original=e) from e
        except yaml.YAMLError as e:
            raise ConfigError(f'运行配置不是合法的 YAML: {path}', details={'path': path}, original=e) from e
        if not isinstance(data, dict):
            raise ConfigError('运行配置顶层必须是分节映射', details={'path': path})
        for section, entries in data.items():
            if not isinstance(entries, dict):
                raise ConfigError(f'配置节 [{section}] 必须是映射', details={'section': section})
            for key, value in entries.items():
                full = f'{section}.{key}'
                if full not in self._DEFAULT_VALUES:
                    raise ConfigError(
                        f'未知配置项: {full}',
                        suggestion='请对照 config/config-defaults.yaml 检查拼写',
                        details={'key': full},
                    )
                self._values[full] = _to_text(value)
        logging.getLogger(__name__).debug('已加载运行配置: %s', path)

    # ── 读写 ──────────────────────────────────

    def get(self, section: str, key: str, default: str | None = None) -> str:
        value = self._values.get(f'{section}.{key}')
        if value is None:
            return '' if default is None else default
        return value

    def getint(self, section: str, key: str, default: int | None = None) -> int:
        return self._convert(section, key, int, default)

    def getfloat(self, section: str, key: str, default: float | None = None) -> float:
        return self._convert(section, key, float, default)

    def getboolean(self, section: str, key: str, default: bool = False) -> bool:
        raw = self._values.get(f'{section}.{key}')
        if raw is None:
            return default
        return raw.strip().lower() in _TRUE_VALUES

    def getlist(self, section: str, key: str, cast: type = float) -> list[Any]:
        raw = self.get(section, key)
        try:
            return [cast(part.strip()) for part in raw.replace('\n', ',').split(',') if part.strip()]
        except ValueError as e:
            raise ConfigError(f'配置项 {section}.{key} 不是合法列表: {raw!r}', details={'key': f'{section}.{key}'}) from e

    def _convert(self, section: str, key: str, cast: type, default: Any) -> Any:
        raw = self._values.get(f'{section}.{key}')
        if raw is None or raw == '':
            if default is None:
                raise ConfigError(f'缺少配置项: {section}.{key}', details={'key': f'{section}.{key}'})
            return default
        try:
            return cast(raw)
        except (ValueError, TypeError) as e:
            raise ConfigError(
                f'配置项 {section}.{key} 无法转换为 {cast.__name__}: {raw!r}',
                details={'key': f'{section}.{key}', 'value': raw},
                original=e,
            ) from e

    def items(self, section: str) -> dict[str, str]:
        prefix = f'{section}.'
        return {k[len(prefix) :]: v for k, v in self._values.items() if k.startswith(prefix)}

    def sections(self) -> list[str]:
        return sorted({k.split('.', 1)[0] for k in self._values})

    def set(self, section: str, key: str, value: Any) -> None:
        full = f'{section}.{key}'
        if full not in self._DEFAULT_VALUES:
            raise ConfigError(f'未知配置项: {full}', details={'key': full})
        self._values[full] = _to_text(value)

    def as_dict(self) -> dict[str, dict[str, str]]:
        """全部生效配置（用于配置哈希）"""
        out: dict[str, dict[str, str]] = {}
        for full, value in sorted(self._values.items()):
            section, key = full.split('.', 1)
            out.setdefault(section, {})[key] = value
        return out

    def _default(self, section: str, key: str) -> str:
        return self._DEFAULT_VALUES.get(f'{section}.{key}', '')

    # ── 分节便捷方法 ──────────────────────────

    def get_logging_config(self) -> dict[str, Any]:
        return {
            'level': self.get('Logging', 'level'),
            'file': self.get('Logging', 'file'),
            'max_size': self.getint('Logging', 'max_size'),
            'backup_count': self.getint('Logging', 'backup_count'),
            'enable_console': self.getboolean('Logging', 'enable_console', True),
        }

    def get_spectral_config(self) -> dict[str, Any]:
        return {
            'd': self.getint('Spectral', 'd'),
            'n': self.getint('Spectral', 'n'),
            'half_width': self.getfloat('Spectral', 'half_width'),
            'memory_budget_mb': self.getfloat('Spectral', 'memory_budget_mb'),
            'energy_fraction': self.getfloat('Spectral', 'energy_fraction'),
            's_count': self.getint('Spectral', 's_count'),
            'zero_override': self.getfloat('Spectral', 'zero_override'),
        }

    def get_norms_config(self) -> dict[str, Any]:
        return {'tail_fit_fraction': self.getfloat('Norms', 'tail_fit_fraction')}

    def get_multilinear_config(self) -> dict[str, Any]:
        return {
            'coarsen': self.getint('Multilinear', 'coarsen'),
            'prune_tol': self.getfloat('Multilinear', 'prune_tol'),
            'block_elements': self.getint('Multilinear', 'block_elements'),
        }

    def get_oracle_config(self) -> dict[str, Any]:
        return {
            'samples': self.getint('Oracles', 'samples'),
            'batch_size': self.getint('Oracles', 'batch_size'),
            'widths': self.getlist('Oracles', 'widths'),
            'edge_shifts': self.getlist('Oracles', 'edge_shifts'),
            'rel_tol': self.getfloat('Oracles', 'rel_tol'),
            'se_factor': self.getfloat('Oracles', 'se_factor'),
            'seed': self.getint('Oracles', 'seed'),
        }

    def get_flow_config(self) -> dict[str, Any]:
        return {
            't_start': self.getfloat('Flows', 't_start'),
            't_stop': self.getfloat('Flows', 't_stop'),
            't_count': self.getint('Flows', 't_count'),
            'cm_order': self.getint('Flows', 'cm_order'),
            'rel_tol': self.getfloat('Flows', 'rel_tol'),
            'unresolvable_fraction': self.getfloat('Flows', 'unresolvable_fraction'),
        }

    def get_pde_config(self) -> dict[str, Any]:
        return {
            'delta': self.getfloat('PDE', 'delta'),
            'fd_step': self.getfloat('PDE', 'fd_step'),
            'find_c_rtol': self.getfloat('PDE', 'find_c_rtol'),
            'monotone_tol': self.getfloat('PDE', 'monotone_tol'),
        }

    def get_steintomas_config(self) -> dict[str, Any]:
        return {
            'shape': self.get('SteinTomas', 'shape'),
            'radius': self.getfloat('SteinTomas', 'radius'),
            'profile': self.get('SteinTomas', 'profile'),
            'coeffs': self.getlist('SteinTomas', 'coeffs'),
            'kappa_min': self.getfloat('SteinTomas', 'kappa_min'),
            'n_theta': self.getint('SteinTomas', 'n_theta'),
            'samples': self.getint('SteinTomas', 'samples'),
            'seed': self.getint('SteinTomas', 'seed'),
        }

    def get_kinetic_config(self) -> dict[str, Any]:
        return {
            'n': self.getint('Kinetic', 'n'),
            'half_width': self.getfloat('Kinetic', 'half_width'),
            'diffusion_floor': self.getfloat('Kinetic', 'diffusion_floor'),
            'dt': self.getfloat('Kinetic', 'dt'),
            'max_halvings': self.getint('Kinetic', 'max_halvings'),
            'mass_tol': self.getfloat('Kinetic', 'mass_tol'),
            'calibration_exponent': self.getfloat('Kinetic', 'calibration_exponent'),
            'directions': self.getint('Kinetic', 'directions'),
            'steps': self.getint('Kinetic', 'steps'),
            'monotone_tol': self.getfloat('Kinetic', 'monotone_tol'),
            'drury_tol': self.getfloat('Kinetic', 'drury_tol'),
        }

    def get_cache_config(self) -> dict[str, Any]:
        cache_dir = self.get('Cache', 'dir')
        if cache_dir and not os.path.isabs(cache_dir):
            cache_dir = os.path.abspath(cache_dir)
        return {'enabled': self.getboolean('Cache', 'enabled', True), 'dir': cache_dir}

    def get_output_config(self) -> dict[str, Any]:
        output_dir = self.get('Output', 'dir')
        if output_dir and not os.path.isabs(output_dir):
            output_dir = os.path.abspath(output_dir)
        return {
            'dir': output_dir,
            'progress': self.getboolean('Output', 'progress'),
            'backup': self.getboolean('Output', 'backup'),
        }

    def get_run_config(self) -> dict[str, Any]:
        return {
            'workers': max(1, self.getint('Run', 'workers')),
            'seeds': self.getlist('Run', 'seeds', int),
            'profile': self.get('Run', 'profile'),
        }


def _to_text(value: Any) -> str:
    if isinstance(value, bool):
        return 'True' if value else 'False'
    if isinstance(value, (list, tuple)):
        return ', '.join(_to_text(v) for v in value)
    return str(value)
