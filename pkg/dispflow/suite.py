#!/usr/bin/env python3
"""
验收检验组
========

逐项运行数值验收检验，任何一项失败则整体失败（CLI 退出码非零）。
profile='quick' 使用较小网格与样本量；'full' 使用桌面规模参数。
"""

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from dispflow.exceptions import BaseAppException, SelectorError, global_error_stats
from dispflow.flows import check_complete_monotone, nonnegative, q_strichartz
from dispflow.kinetic import ccl_check, compact_bump, drury_check, kinetic_corpus
from dispflow.multilinear import constants, sample_kg_bound, sphere_area
from dispflow.norms import MixedNormSpec, propagated_norm
from dispflow.oracles import LEMMAS, MollifierSpec, error_scaling
from dispflow.pdeflow import finite_difference, qprime_identity
from dispflow.spectral import GridSpec, corpus, default_s_grid, gaussian_packet
from dispflow.steintomas import SurfaceSpec, c_constant, q_steintomas

if TYPE_CHECKING:
    from dispflow.manager import VerificationManager

logger = logging.getLogger(__name__)

PROFILES: dict[str, dict[str, Any]] = {
    'quick': {'n1': 256, 'n2': 32, 'n3': 32, 'samples': 20_000, 'seeds': 2, 'ccl_steps': 10, 'st_samples': 64},
    'full': {'n1': 256, 'n2': 64, 'n3': 64, 'samples': 100_000, 'seeds': 5, 'ccl_steps': 50, 'st_samples': 256},
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    seconds: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)


def _close(value: float, expected: float, rel: float) -> bool:
    return abs(value - expected) <= rel * abs(expected)


# ═══════════════════════════════════════════════════
# 检验项
# ═══════════════════════════════════════════════════


def check_constants(_: VerificationManager, __: dict[str, Any]) -> dict[str, Any]:
    two_pi = 2 * math.pi
    expected = {
        'S(2,2)': (constants('schrodinger', 2, 2).S, 1 / (4 * two_pi**4)),
        'C_6,6': (constants('schrodinger', 2, 1).strichartz['C_6,6'], 12 ** (-1 / 12)),
        'C_8,4': (constants('schrodinger', 2, 1).strichartz['C_8,4'], 2 ** (-1 / 4)),
        'C_4,4': (constants('schrodinger', 2, 2).strichartz['C_4,4'], 2 ** (-1 / 2)),
        'C_4(wave)': (constants('wave', 2, 3).strichartz['C_4'], two_pi ** (-1 / 4)),
        'C_6(wave)': (constants('wave', 2, 2).strichartz['C_6'], two_pi ** (-1 / 6)),
        'C_2(kg)': (constants('klein_gordon', 2, 2).strichartz['C_2'], 2 ** (-1 / 4)),
        'C_3(kg)': (constants('klein_gordon', 2, 3).strichartz['C_3'], two_pi ** (-1 / 4)),
        'A(2,3)': (constants('wave', 2, 3).A, two_pi),
        'OT(d=3)': (constants('schrodinger', 2, 3).ot, sphere_area(3) / (4 * two_pi**2)),
    }
    details = {k: {'value': v, 'expected': e, 'ok': v is not None and _close(v, e, 1e-12)} for k, (v, e) in expected.items()}
    return {'passed': all(d['ok'] for d in details.values()), 'constants': details}


def check_gaussian_equality(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    grid = GridSpec(1, profile['n1'], 16.0)
    f = gaussian_packet(grid).to_frequency()
    options = manager.options()
    s_grid = default_s_grid(f, 'schrodinger', options.s_count, options.energy_fraction)
    norm = propagated_norm(f, 'schrodinger', s_grid, MixedNormSpec(6, 6), fit_fraction=options.fit_fraction)
    target = math.pi**1.5 / (2 * math.sqrt(3))
    trace = q_strichartz(gaussian_packet(grid), (6, 6, 1), manager.t_grid(), options)
    worst = float(np.max(np.abs(trace.values) / trace.first))
    return {
        'passed': _close(norm.power, target, 0.01) and worst <= 0.01,
        'norm6': norm.power,
        'target': target,
        'max_relative_Q': worst,
    }


def check_lemmas(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    oracle = manager._require().get_oracle_config()
    moll = MollifierSpec(tuple(oracle['widths']))
    kw = {'edge_shifts': tuple(oracle['edge_shifts']), 'workers': manager.options().workers, 'batch_size': oracle['batch_size']}
    n, seed = profile['samples'], oracle['seed']
    reports = {
        'schrodinger(2,2)': LEMMAS['schrodinger']([[1.0, 0.0], [0.0, 1.0]], 2, moll, n, seed, **kw),
        'ot(d=2)': LEMMAS['ot']([[1.0, 0.0], [0.0, 1.0]], 2, moll, n, seed, **kw),
        'ot(d=3)': LEMMAS['ot']([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 3, moll, n, seed, **kw),
        'wave(2,3)': LEMMAS['wave']([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 2, 3, moll, n, seed, **kw),
        'kg(d=2,origin)': LEMMAS['klein_gordon']([[0.0, 0.0], [0.0, 0.0]], 2, moll, n, seed, **kw),
    }
    # 标准误须按 N^{-1/2} 缩小
    larger = LEMMAS['schrodinger']([[1.0, 0.0], [0.0, 1.0]], 2, moll, 4 * n, seed, **kw)
    scaling = error_scaling(reports['schrodinger(2,2)'], larger)
    return {
        'passed': all(r.passed for r in reports.values()) and scaling['passed'],
        'lemmas': {k: r.to_dict() for k, r in reports.items()},
        'error_scaling': scaling,
    }


def check_cm_battery(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    config = manager._require()
    seeds = config.get_run_config()['seeds'][: profile['seeds']]
    n = profile['n2']
    jobs = [('qschro', {'m': 2, 'd': 2}), ('qot', {'d': 2}), ('wave-strichartz', {'d': 3, 'p': 4}), ('qkg', {'d': 2})]
    rows: dict[str, Any] = {}
    r_ok = True
    for theorem, kwargs in jobs:
        for seed in seeds:
            trace, companions = manager.compute_trace(theorem, f'shifted-{seed}', n=n, **kwargs)
            report = check_complete_monotone(trace, 3)
            rows[f'{theorem}/shifted-{seed}'] = {'passed': report.passed, 'verdicts': report.verdicts()}
            if companions:
                r_ok = r_ok and nonnegative(companions[-1], tol=0.0)
    return {'passed': all(r['passed'] for r in rows.values()) and r_ok, 'traces': rows, 'r_nonnegative': r_ok}


def check_kg_bound(_: VerificationManager, __: dict[str, Any]) -> dict[str, Any]:
    results = {f'd={d}': sample_kg_bound(d, 10_000, seed=d) for d in (2, 3)}
    return {'passed': all(r['ok'] for r in results.values()), 'samples': results}


def check_tensor_identity(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    grid = GridSpec(1, profile['n2'] * 2, 12.0)
    trace = q_strichartz(gaussian_packet(grid), (8, 4, 1), manager.t_grid(), manager.options())
    discrepancy = float(trace.extra['path_discrepancy'])
    return {'passed': discrepancy <= 0.01, 'path_discrepancy': discrepancy}


def check_duality(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    grid = GridSpec(2, profile['n2'], 12.0)
    f = gaussian_packet(grid)
    c = 2 ** (-1 / 2)
    pde = manager._require().get_pde_config()
    rows = []
    for t in (0.1, 0.2, 0.4, 0.6, 0.8):
        identity = qprime_identity(f, (4, 4, 2), c, t, manager.options(), delta=pde['delta'])
        fd = finite_difference(f, (4, 4, 2), c, t, pde['fd_step'], manager.options())
        # Gaussian 使 Q′ ≈ 0，以第一项的导数量级 p·c^p‖u₀‖^{p−2}‖∇u₀‖² 为分母
        scale = 4 * identity.negative
        rows.append({'t': t, 'identity': identity.value, 'finite_difference': fd, 'relative': abs(identity.value - fd) / scale})
    worst = max(r['relative'] for r in rows)
    return {'passed': worst <= 0.01, 'points': rows, 'max_relative_difference': worst}


def check_stein_tomas(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    spec = SurfaceSpec('disk', 6.0)
    c = c_constant(spec, profile['st_samples'], seed=7, workers=manager.options().workers)
    grid = GridSpec(2, profile['n2'] * 2, 16.0)
    traces = {}
    for label, field_ in corpus(grid, [0])[:3]:
        trace = q_steintomas(field_.to_frequency(), spec, manager.t_grid(), c=c.value, options=manager.options())
        traces[label] = check_complete_monotone(trace, 2).passed
    return {'passed': _close(c.value, math.pi / 2, 0.02) and all(traces.values()), 'c': c.value, 'traces': traces}


def check_drury(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    kin = manager._require().get_kinetic_config()
    grid = GridSpec(3, profile['n3'], kin['half_width'])
    report = drury_check(kinetic_corpus(grid), grid, kin['directions'], kin['drury_tol'], manager.options().workers)
    return {'passed': report.passed, **report.to_dict()}


def check_ccl(manager: VerificationManager, profile: dict[str, Any]) -> dict[str, Any]:
    kin = manager._require().get_kinetic_config()
    grid = GridSpec(3, profile['n3'], kin['half_width'])
    report = ccl_check(
        compact_bump(grid),
        grid,
        steps=profile['ccl_steps'],
        dt=kin['dt'],
        floor=kin['diffusion_floor'],
        max_halvings=kin['max_halvings'],
        mass_tol=kin['mass_tol'],
        monotone_tol=kin['monotone_tol'],
        calibration_exponent=kin['calibration_exponent'],
        directions=kin['directions'],
        workers=manager.options().workers,
    )
    return {'passed': report.passed, **report.to_dict()}


CHECKS: dict[str, Callable[[VerificationManager, dict[str, Any]], dict[str, Any]]] = {
    'constants': check_constants,
    'gaussian-equality': check_gaussian_equality,
    'lemma-oracles': check_lemmas,
    'cm-battery': check_cm_battery,
    'kg-bound': check_kg_bound,
    'tensor-identity': check_tensor_identity,
    'duality': check_duality,
    'stein-tomas': check_stein_tomas,
    'drury': check_drury,
    'ccl': check_ccl,
}


def run_suite(manager: VerificationManager, profile: str = 'quick', only: list[str] | None = None) -> list[CheckResult]:
    """按顺序执行检验；单项抛出的异常记为失败，不中断其余检验"""
    params = PROFILES[profile]
    unknown = sorted(set(only or ()) - set(CHECKS))
    if unknown:
        raise SelectorError(f'未知的检验项: {", ".join(unknown)}', details={'available': list(CHECKS)})
    global_error_stats.reset()
    results = []
    for name, check in CHECKS.items():
        if only and name not in only:
            continue
        start = time.time()
        try:
            details = check(manager, params)
            passed = bool(details.pop('passed'))
        except BaseAppException as e:
            details, passed = {'error': e.to_dict()}, False
            global_error_stats.record(e, module=name)
            logger.error('检验 %s 出错: %s', name, e)
        result = CheckResult(name, passed, round(time.time() - start, 3), details)
        logger.info('%s %s (%.1fs)', '✓' if passed else '✗', name, result.seconds)
        results.append(result)
    if global_error_stats.total:
        logger.warning('检验组错误汇总: %s', global_error_stats.get_summary())
    return results


def suite_report(results: list[CheckResult]) -> tuple[dict[str, Any], dict[str, Any]]:
    """(result, summary)；耗时只进入日志，不进入报告"""
    result = {'checks': [{k: v for k, v in asdict(r).items() if k != 'seconds'} for r in results]}
    summary: dict[str, Any] = {r.name: r.passed for r in results}
    summary['all_passed'] = all(r.passed for r in results)
    return result, summary
