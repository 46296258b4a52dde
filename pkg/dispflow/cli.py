#!/usr/bin/env python3
"""
命令行入口
========

dispflow <命令> [选项]

命令: constants / trace / cm / lemma / pde-duality / find-c /
      stein-tomas / kinetic-drury / kinetic-ccl / suite

退出码: 0 成功；1 检验未通过；2 参数或运行错误（stderr 输出 JSON 错误文档）。
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from typing import Any

from dispflow.exceptions import BaseAppException, SelectorError, catch_exception, format_error_response
from dispflow.manager import VerificationManager
from dispflow.report import render_summary
from dispflow.suite import CHECKS, PROFILES, run_suite, suite_report

logger = logging.getLogger('dispflow.cli')

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.replace(';', ',').split(',') if x.strip()]


def _matrix(text: str) -> list[list[float]]:
    """'1,0;0,1' → [[1, 0], [0, 1]]"""
    return [_floats(row) for row in text.split(';') if row.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='dispflow', description='色散流单调量与最优常数的数值校验工具')
    parser.add_argument('--config', help='YAML 运行配置文件')
    parser.add_argument('--output', help='输出目录（覆盖 Output.dir）')
    parser.add_argument('--workers', type=int, help='线程数（覆盖 Run.workers）')
    parser.add_argument('--quiet', action='store_true', help='不向控制台输出日志')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('constants', help='常数表')
    p.add_argument('--family', default='schrodinger', choices=['schrodinger', 'wave', 'klein_gordon'])
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--d', type=int, default=2)

    p = sub.add_parser('trace', help='计算单调量迹 Q(t)')
    p.add_argument('--theorem', required=True, help='qschro / strichartz / qot / qwave / wave-strichartz / qkg / general')
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--d', type=int)
    p.add_argument('--p', type=float)
    p.add_argument('--q', type=float)
    p.add_argument('--c', type=float)
    p.add_argument('--n', type=int)
    p.add_argument('--data', default='gaussian')

    p = sub.add_parser('cm', help='对迹 CSV 做完全单调性检验')
    p.add_argument('--input', required=True)
    p.add_argument('--order', type=int, default=3)
    p.add_argument('--tol', type=float)

    p = sub.add_parser('lemma', help='δ 测度质量的 Monte Carlo 校验')
    p.add_argument('--family', required=True, choices=['schrodinger', 'ot', 'wave', 'klein_gordon'])
    p.add_argument('--d', type=int, required=True)
    p.add_argument('--m', type=int, default=2)
    p.add_argument('--xi', type=_matrix, help="求值点，如 '1,0;0,1'")
    p.add_argument('--samples', type=int)
    p.add_argument('--seed', type=int)

    p = sub.add_parser('pde-duality', help='Q′ 恒等式与中心差分的比对')
    p.add_argument('--pqd', type=_floats, default=[4, 4, 2])
    p.add_argument('--data', default='gaussian')
    p.add_argument('--t', type=_floats)
    p.add_argument('--c', type=float)
    p.add_argument('--n', type=int)

    p = sub.add_parser('find-c', help='使语料迹非增的最小常数（经验下界）')
    p.add_argument('--pqd', type=_floats, required=True)
    p.add_argument('--bracket', type=_floats)
    p.add_argument('--n', type=int)

    p = sub.add_parser('stein-tomas', help='紧凸曲面的 Stein–Tomas 单调量')
    p.add_argument('--data', default='gaussian')
    p.add_argument('--n', type=int)
    p.add_argument('--shape', choices=['disk', 'square'])
    p.add_argument('--radius', type=float)
    p.add_argument('--profile', choices=['paraboloid', 'quartic'])
    p.add_argument('--coeffs', type=_floats)

    p = sub.add_parser('kinetic-drury', help='Drury 恒等式比值的一致性')
    p.add_argument('--n', type=int)

    p = sub.add_parser('kinetic-ccl', help='快扩散下泛函 F 的单调性')
    p.add_argument('--steps', type=int)
    p.add_argument('--n', type=int)

    p = sub.add_parser('suite', help='运行全部验收检验')
    p.add_argument('--profile', choices=sorted(PROFILES))
    p.add_argument('--only', type=lambda s: [x.strip() for x in s.split(',') if x.strip()], help=f'子集: {",".join(CHECKS)}')
    return parser


def _dispatch(manager: VerificationManager, args: argparse.Namespace) -> tuple[dict[str, Any], bool]:
    """执行命令，返回 (报告, 是否通过)"""
    cmd = args.command
    if cmd == 'constants':
        return manager.run_constants(args.family, args.m, args.d), True
    if cmd == 'trace':
        kwargs = {k: getattr(args, k) for k in ('m', 'd', 'p', 'q', 'c', 'n')}
        report = manager.run_trace(args.theorem, args.data, **kwargs)
        return report, bool(report['summary']['cm_passed'])
    if cmd == 'cm':
        report = manager.run_cm(args.input, args.order, args.tol)
        return report, bool(report['summary']['passed'])
    if cmd == 'lemma':
        report = manager.run_lemma(args.family, args.d, args.m, args.xi, args.samples, args.seed)
        return report, bool(report['summary']['passed'])
    if cmd == 'pde-duality':
        if len(args.pqd) != 3:
            raise SelectorError('--pqd 需要三个数 p,q,d')
        pqd = (args.pqd[0], args.pqd[1], int(args.pqd[2]))
        report = manager.run_pde_duality(pqd, args.data, args.t, args.c, args.n)
        return report, report['summary']['max_relative_difference'] <= 0.01
    if cmd == 'find-c':
        if len(args.pqd) != 3:
            raise SelectorError('--pqd 需要三个数 p,q,d')
        bracket = tuple(args.bracket) if args.bracket else None
        return manager.run_find_c((args.pqd[0], args.pqd[1], int(args.pqd[2])), bracket, args.n), True
    if cmd == 'stein-tomas':
        overrides = {'shape': args.shape, 'radius': args.radius, 'profile': args.profile, 'coeffs': args.coeffs}
        report = manager.run_stein_tomas(args.data, args.n, **overrides)
        return report, bool(report['summary']['cm_order2_passed'])
    if cmd == 'kinetic-drury':
        report = manager.run_kinetic_drury(args.n)
        return report, bool(report['summary']['passed'])
    if cmd == 'kinetic-ccl':
        report = manager.run_kinetic_ccl(args.steps, args.n)
        return report, bool(report['summary']['passed'])
    if cmd == 'suite':
        config = manager._require()
        profile = args.profile or config.get_run_config()['profile']
        if profile not in PROFILES:
            raise SelectorError(f'未知的 profile: {profile}', details={'available': sorted(PROFILES)})
        results = run_suite(manager, profile, args.only)
        result, summary = suite_report(results)
        report = manager.emit('suite', {'profile': profile, 'only': args.only}, result, summary)
        return report, bool(summary['all_passed'])
    raise SelectorError(f'未知命令: {cmd}')


@catch_exception(logger=logger, module_name='cli', raise_original=True)
def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    manager = VerificationManager(args.config)
    manager.initialize(console=False if args.quiet else None)
    assert manager.config is not None
    if args.output:
        manager.config.set('Output', 'dir', args.output)
    if args.workers:
        manager.config.set('Run', 'workers', args.workers)
    report, passed = _dispatch(manager, args)
    print(render_summary(report))
    return EXIT_OK if passed else EXIT_FAILED


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return run(argv)
    except BaseAppException as e:
        error = e
    except Exception as e:
        error = BaseAppException(0, f'{type(e).__name__}: {e}', '请查看日志中的完整调用栈', original=e)
    print(json.dumps(format_error_response(error), ensure_ascii=False, indent=2, default=str), file=sys.stderr)
    return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
