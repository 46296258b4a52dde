#!/usr/bin/env python3
"""
校验管理器模块
============

VerificationManager 为协调层: 初始化配置与日志，按命令构建网格与初值，
调用数值模块，缓存昂贵中间结果，并以原子写入输出 JSON 报告与迹 CSV。

相同配置（含种子）产生逐位相同的机器可读输出: 报告中不含时间戳，
文件名与 config_hash 均由规范化 JSON 的哈希决定。
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import asdict
from typing import Any

import numpy as np

from dispflow.cache import ResultCache
from dispflow.config import Config
from dispflow.exceptions import SelectorError, setup_global_exception_hook
from dispflow.flows import (
    THEOREMS,
    QTrace,
    TraceOptions,
    check_complete_monotone,
    default_t_grid,
    nonnegative,
    q_klein_gordon,
    q_ozawa_tsutsumi,
    q_schrodinger,
    q_strichartz,
    q_wave,
    q_wave_strichartz,
    sharpness_ratio,
)
from dispflow.kinetic import ccl_check, compact_bump, drury_check, kinetic_corpus
from dispflow.logger import Logger
from dispflow.multilinear import constants
from dispflow.oracles import LEMMAS, MollifierSpec
from dispflow.pdeflow import find_c, finite_difference, q_general, qprime_identity
from dispflow.report import build_report, read_trace_csv, render_summary, write_report, write_trace_csv
from dispflow.spectral import Field, GridSpec, corpus, gaussian_packet, make_extremiser
from dispflow.steintomas import SurfaceSpec, c_constant, q_steintomas
from dispflow.utils import stable_hash

DATA_KINDS = ('gaussian', 'wave', 'kg', 'shifted-<seed>', 'mixture-<seed>', 'wide')
_VOLATILE_SECTIONS = ('Logging', 'Output', 'Cache')


def trace_to_dict(trace: QTrace) -> dict[str, Any]:
    return {
        **trace.header(),
        't': trace.t.tolist(),
        'Q': trace.values.tolist(),
        'err_bound': trace.err.tolist(),
        'first': None if trace.first is None else trace.first.tolist(),
        'second': None if trace.second is None else trace.second.tolist(),
    }


def trace_from_dict(data: dict[str, Any]) -> QTrace:
    return QTrace(
        theorem=data['theorem'],
        t=np.asarray(data['t']),
        values=np.asarray(data['Q']),
        err=np.asarray(data['err_bound']),
        first=None if data.get('first') is None else np.asarray(data['first']),
        second=None if data.get('second') is None else np.asarray(data['second']),
        constants=data.get('constants', {}),
        grid=data.get('grid', {}),
        seed=data.get('seed'),
        extra=data.get('extra', {}),
    )


class VerificationManager:
    """校验工具的协调层

    - initialize(): 配置 → 日志 → 全局异常钩子 → 缓存
    - run_xxx(): 每个命令返回报告字典（已写盘）
    """

    def __init__(self, config_path: str | None = None, config: Config | None = None):
        self.config_path = config_path
        self.config = config
        self.logger: logging.Logger | None = None
        self.cache: ResultCache | None = None
        self.start_time: float | None = None
        self._initialized = False

    def initialize(self, console: bool | None = None) -> bool:
        self.start_time = time.time()
        if self.config is None:
            self.config = Config(self.config_path)
        logging_config = self.config.get_logging_config()
        if console is not None:
            logging_config['enable_console'] = console
        self.logger = Logger(logging_config).logger
        setup_global_exception_hook(self.logger)
        cache_config = self.config.get_cache_config()
        self.cache = ResultCache(cache_config['dir'], cache_config['enabled'])
        self._initialized = True
        self.logger.info('✓ 初始化完成，配置哈希 %s', self.config_hash[:12])
        return True

    def _require(self) -> Config:
        if not self._initialized or self.config is None:
            self.initialize()
        assert self.config is not None
        return self.config

    # ── 配置派生量 ──────────────────────────

    @property
    def config_hash(self) -> str:
        assert self.config is not None
        stable = {k: v for k, v in self.config.as_dict().items() if k not in _VOLATILE_SECTIONS}
        return stable_hash(stable)

    def options(self) -> TraceOptions:
        return TraceOptions.from_config(self._require())

    def grid(self, d: int | None = None, n: int | None = None, half_width: float | None = None) -> GridSpec:
        spectral = self._require().get_spectral_config()
        return GridSpec(
            d or spectral['d'],
            n or spectral['n'],
            half_width or spectral['half_width'],
            spectral['memory_budget_mb'],
        )

    def t_grid(self, start: float | None = None, stop: float | None = None, count: int | None = None) -> np.ndarray:
        flow = self._require().get_flow_config()
        return default_t_grid(
            flow['t_start'] if start is None else start,
            flow['t_stop'] if stop is None else stop,
            flow['t_count'] if count is None else count,
        )

    def make_data(self, kind: str, grid: GridSpec) -> Field:
        """按名称构造初值；shifted-<seed> / mixture-<seed> 取自种子语料"""
        if kind == 'gaussian':
            return gaussian_packet(grid)
        if kind == 'wide':
            return gaussian_packet(grid, sigma=1.5)
        if kind == 'wave':
            return make_extremiser('wave_extremiser', grid, a=1.0, zero_override=self._require().getfloat('Spectral', 'zero_override'))
        if kind == 'kg':
            return make_extremiser('kg_sequence', grid, a=1.0)
        prefix, _, seed_text = kind.partition('-')
        if prefix in ('shifted', 'mixture') and seed_text.isdigit():
            members = dict(corpus(grid, [int(seed_text)]))
            return members[kind]
        raise SelectorError(f'未知的初值类型: {kind}', details={'available': list(DATA_KINDS)})

    # ── 输出 ──────────────────────────

    def emit(
        self,
        command: str,
        args: dict[str, Any],
        result: dict[str, Any],
        summary: dict[str, Any],
        trace: QTrace | None = None,
    ) -> dict[str, Any]:
        """写 JSON 报告（及可选迹 CSV），返回报告字典"""
        config = self._require()
        output = config.get_output_config()
        run_hash = stable_hash({'config': self.config_hash, 'command': command, 'args': args})
        base = os.path.join(output['dir'], f'{command}-{run_hash[:12]}')
        if trace is not None:
            result = {**result, 'csv': os.path.basename(base + '.csv')}
            write_trace_csv(trace, base + '.csv', backup=output['backup'])
        report = build_report(command, {'args': args, **result}, summary, self.config_hash)
        write_report(base + '.json', report, backup=output['backup'])
        report['paths'] = {'json': base + '.json', 'csv': base + '.csv' if trace is not None else None}
        if self.logger:
            for line in render_summary(report).splitlines():
                self.logger.info(line)
        return report

    def _cached(self, key: dict[str, Any], compute: Any) -> Any:
        assert self.cache is not None
        return self.cache.cached({'config': self.config_hash, **key}, compute)

    # ═══════════════════════════════════════════════════
    # 命令
    # ═══════════════════════════════════════════════════

    def run_constants(self, family: str, m: int, d: int) -> dict[str, Any]:
        self._require()
        table = constants(family, m, d).to_dict()
        summary = {k: v for k, v in table.items() if isinstance(v, float)}
        summary.update(table['strichartz'])
        return self.emit('constants', {'family': family, 'm': m, 'd': d}, {'constants': table}, summary)

    def compute_trace(
        self,
        theorem: str,
        data: str = 'gaussian',
        m: int = 2,
        d: int | None = None,
        p: float | None = None,
        q: float | None = None,
        c: float | None = None,
        n: int | None = None,
        t_grid: np.ndarray | None = None,
    ) -> tuple[QTrace, list[QTrace]]:
        """计算迹，返回 (主迹, 附属迹)；qkg 的附属迹为 Q₀ 与 R"""
        config = self._require()
        if theorem not in (*THEOREMS, 'general'):
            raise SelectorError(f'未知的定理选择器: {theorem}', details={'available': [*THEOREMS, 'general']})
        dim = d or config.get_spectral_config()['d']
        t_arr = self.t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
        options = self.options()
        key = {'theorem': theorem, 'data': data, 'm': m, 'd': dim, 'p': p, 'q': q, 'c': c, 'n': n, 't': t_arr.tolist()}

        def compute() -> list[dict[str, Any]]:
            f = self.make_data(data, self.grid(dim, n))
            if theorem == 'qschro':
                traces = [q_schrodinger(f, m, dim, t_arr, options)]
            elif theorem == 'strichartz':
                traces = [q_strichartz(f, (int(p or 2 * m), int(q or 2 * m), dim), t_arr, options)]
            elif theorem == 'qot':
                traces = [q_ozawa_tsutsumi(f, dim, t_arr, options)]
            elif theorem == 'qwave':
                traces = [q_wave(f, m, dim, t_arr, options)]
            elif theorem == 'wave-strichartz':
                traces = [q_wave_strichartz(f, (int(p or 4), dim), t_arr, options)]
            elif theorem == 'qkg':
                traces = list(q_klein_gordon(f, dim, t_arr, options))
            else:
                if p is None or q is None or c is None:
                    raise SelectorError('general 迹需要 --p、--q 与 --c')
                traces = [q_general(f, (p, q, dim), c, t_arr, options)]
            return [trace_to_dict(tr) for tr in traces]

        rows = self._cached({'job': 'trace', **key}, compute)
        traces = [trace_from_dict(r) for r in rows]
        return traces[0], traces[1:]

    def run_trace(self, theorem: str, data: str = 'gaussian', **kwargs: Any) -> dict[str, Any]:
        config = self._require()
        trace, companions = self.compute_trace(theorem, data, **kwargs)
        order = min(config.get_flow_config()['cm_order'], trace.t.size - 1)
        cm = check_complete_monotone(trace, order)
        result: dict[str, Any] = {'trace': trace_to_dict(trace), 'cm': cm.to_dict()}
        summary: dict[str, Any] = {
            'theorem': trace.theorem,
            'points': int(trace.t.size),
            'max_abs_Q': float(np.max(np.abs(trace.values))),
            'scale': trace.scale,
            'max_err': float(trace.err.max()),
            'cm_passed': cm.passed,
        }
        if trace.first is not None and trace.second is not None:
            summary['sharpness_ratio'] = sharpness_ratio(trace)
        if companions:
            result['companions'] = [trace_to_dict(tr) for tr in companions]
            r_trace = companions[-1]
            summary['r_nonnegative'] = nonnegative(r_trace, tol=0.0)
            summary['r_direct_discrepancy'] = float(r_trace.extra.get('direct_discrepancy', 0.0))
        if 'path_discrepancy' in trace.extra:
            summary['path_discrepancy'] = float(trace.extra['path_discrepancy'])
        args = {'theorem': theorem, 'data': data, **{k: v for k, v in kwargs.items() if not isinstance(v, np.ndarray)}}
        return self.emit('trace', args, result, summary, trace)

    def run_cm(self, path: str, order: int = 3, tol: float | None = None) -> dict[str, Any]:
        self._require()
        trace = read_trace_csv(path)
        report = check_complete_monotone(trace, order, tol)
        summary = {'theorem': trace.theorem, 'order': order, 'passed': report.passed, 'tol': report.tol}
        summary.update({f'order_{o["order"]}': o['passed'] for o in report.orders})
        return self.emit('cm', {'input': os.path.basename(path), 'order': order, 'tol': tol}, {'cm': report.to_dict()}, summary)

    def run_lemma(
        self,
        family: str,
        d: int,
        m: int = 2,
        xi: list[list[float]] | None = None,
        samples: int | None = None,
        seed: int | None = None,
    ) -> dict[str, Any]:
        config = self._require()
        if family not in LEMMAS:
            raise SelectorError(f'未知的测度族: {family}', details={'available': list(LEMMAS)})
        oracle = config.get_oracle_config()
        points = default_xi(family, m, d) if xi is None else xi
        n_samples = samples or oracle['samples']
        run_seed = oracle['seed'] if seed is None else seed
        kwargs = {
            'batch_size': oracle['batch_size'],
            'workers': config.get_run_config()['workers'],
            'edge_shifts': tuple(oracle['edge_shifts']),
            'rel_tol': oracle['rel_tol'],
            'se_factor': oracle['se_factor'],
        }
        moll = MollifierSpec(tuple(oracle['widths']))

        def compute() -> dict[str, Any]:
            if family == 'wave':
                report = LEMMAS[family](points, m, d, moll, n_samples, run_seed, **kwargs)
            else:
                report = LEMMAS[family](points, d, moll, n_samples, run_seed, **kwargs)
            return report.to_dict()

        key = {'job': 'lemma', 'family': family, 'm': m, 'd': d, 'xi': points, 'samples': n_samples, 'seed': run_seed}
        result = self._cached(key, compute)
        summary = {k: result[k] for k in ('lemma', 'extrapolated', 'standard_error', 'closed_form', 'relative_error', 'passed')}
        return self.emit('lemma', {k: v for k, v in key.items() if k != 'job'}, {'lemma': result}, summary)

    def run_pde_duality(
        self,
        pqd: tuple[float, float, int] = (4, 4, 2),
        data: str = 'gaussian',
        t_points: list[float] | None = None,
        c: float | None = None,
        n: int | None = None,
    ) -> dict[str, Any]:
        config = self._require()
        pde = config.get_pde_config()
        options = self.options()
        f = self.make_data(data, self.grid(int(pqd[2]), n))
        c_value = c if c is not None else constants('schrodinger', 2, int(pqd[2]), tuple(pqd)).strichartz['requested']
        points = t_points or [0.1, 0.2, 0.4, 0.6, 0.8]
        rows = []
        for t in points:
            identity = qprime_identity(f, pqd, c_value, t, options, delta=pde['delta'])
            fd = finite_difference(f, pqd, c_value, t, pde['fd_step'], options)
            # 分母取第一项导数的量级，Q′ 本身可能接近 0
            rel = abs(identity.value - fd) / max(pqd[0] * identity.negative, 1e-300)
            rows.append({'t': t, 'identity': identity.to_dict(), 'finite_difference': fd, 'relative_difference': rel})
        worst = max(r['relative_difference'] for r in rows)
        summary = {'triple': str(tuple(pqd)), 'c': c_value, 'max_relative_difference': worst, 'holder_ok': all(r['identity']['holder_ok'] for r in rows)}
        args = {'pqd': list(pqd), 'data': data, 't': points, 'c': c_value, 'n': n}
        return self.emit('pde-duality', args, {'points': rows}, summary)

    def run_find_c(
        self,
        pqd: tuple[float, float, int],
        bracket: tuple[float, float] | None = None,
        n: int | None = None,
    ) -> dict[str, Any]:
        config = self._require()
        pde = config.get_pde_config()
        grid = self.grid(int(pqd[2]), n)
        members = corpus(grid, config.get_run_config()['seeds'])
        result = find_c(members, pqd, self.t_grid(), bracket, pde['find_c_rtol'], pde['monotone_tol'], self.options())
        summary = {'triple': str(tuple(pqd)), 'c': result.value, 'iterations': result.iterations, 'label': result.label}
        return self.emit('find-c', {'pqd': list(pqd), 'bracket': bracket, 'n': n}, {'find_c': result.to_dict()}, summary)

    def surface(self, **overrides: Any) -> SurfaceSpec:
        st = self._require().get_steintomas_config()
        st.update({k: v for k, v in overrides.items() if v is not None})
        return SurfaceSpec(st['shape'], st['radius'], st['profile'], tuple(st['coeffs']), st['kappa_min'])

    def run_stein_tomas(self, data: str = 'gaussian', n: int | None = None, **overrides: Any) -> dict[str, Any]:
        config = self._require()
        st = config.get_steintomas_config()
        spec = self.surface(**overrides)
        options = self.options()

        def compute_c() -> dict[str, Any]:
            return asdict(c_constant(spec, st['samples'], st['seed'], st['n_theta'], options.workers))

        c_info = self._cached({'job': 'c_constant', 'surface': spec.to_dict(), 'samples': st['samples'], 'seed': st['seed']}, compute_c)
        grid = self.grid(2, n)
        g = self.make_data(data, grid).to_frequency()
        trace = q_steintomas(g, spec, self.t_grid(), c=c_info['value'], options=options, n_theta=st['n_theta'])
        trace.extra['caveat'] = c_info['caveat']
        cm = check_complete_monotone(trace, 2)
        summary = {'c': c_info['value'], 'max_abs_Q': float(np.max(np.abs(trace.values))), 'cm_order2_passed': cm.passed, 'nonnegative': nonnegative(trace)}
        args = {'data': data, 'n': n, 'surface': spec.to_dict()}
        return self.emit('stein-tomas', args, {'c': c_info, 'trace': trace_to_dict(trace), 'cm': cm.to_dict()}, summary, trace)

    def kinetic_grid(self, n: int | None = None) -> GridSpec:
        kin = self._require().get_kinetic_config()
        return GridSpec(3, n or kin['n'], kin['half_width'], self._require().get_spectral_config()['memory_budget_mb'])

    def run_kinetic_drury(self, n: int | None = None) -> dict[str, Any]:
        config = self._require()
        kin = config.get_kinetic_config()
        grid = self.kinetic_grid(n)
        report = drury_check(kinetic_corpus(grid), grid, kin['directions'], kin['drury_tol'], config.get_run_config()['workers'])
        summary = {'constant': report.constant, 'spread': report.spread, 'passed': report.passed}
        summary.update({f'ratio_{k}': v for k, v in report.ratios.items()})
        return self.emit('kinetic-drury', {'n': grid.n}, {'drury': report.to_dict()}, summary)

    def run_kinetic_ccl(self, steps: int | None = None, n: int | None = None) -> dict[str, Any]:
        config = self._require()
        kin = config.get_kinetic_config()
        grid = self.kinetic_grid(n)
        report = ccl_check(
            compact_bump(grid),
            grid,
            steps=steps or kin['steps'],
            dt=kin['dt'],
            floor=kin['diffusion_floor'],
            max_halvings=kin['max_halvings'],
            mass_tol=kin['mass_tol'],
            monotone_tol=kin['monotone_tol'],
            calibration_exponent=kin['calibration_exponent'],
            directions=kin['directions'],
            workers=config.get_run_config()['workers'],
            progress=config.get_output_config()['progress'],
        )
        summary = {'steps': len(report.times) - 1, 'final_time': report.times[-1], 'mass_drift': report.mass_drift, 'min_u': report.min_value, 'passed': report.passed}
        return self.emit('kinetic-ccl', {'n': grid.n, 'steps': steps or kin['steps']}, {'ccl': report.to_dict()}, summary, report.trace)


def default_xi(family: str, m: int, d: int) -> list[list[float]]:
    """各族的默认求值点: KG 取原点，其余取缩放的坐标单位向量"""
    if family == 'klein_gordon':
        return [[0.0] * d for _ in range(2)]
    count = 2 if family in ('ot', 'klein_gordon') else m
    rows = []
    for j in range(count):
        row = [0.0] * d
        row[j % d] = 1.0 + 0.25 * (j // d)
        rows.append(row)
    return rows
