#!/usr/bin/env python3
"""
一般指数的单调量与分部积分导数恒等式
==================================

Q(t) = c^p‖e^{tΔ}f‖₂^p − ‖e^{isΔ}e^{tΔ}f‖^p_{L^p_sL^q_x}，(p,q,d) 为 Schrödinger 容许三元组。

p^{−1}Q′(t) = ∫(∫|u|^q)^{p/q−1}{∫|u|^{q−2}|∇u|² + ((q−2)/4)∫|u|^{q−4}|∇|u|²|²} ds
              − c^p‖u₀‖₂^{p−2}‖∇u₀‖₂²

梯度用谱微分；|u|^{q−4} 的真空奇异性以 |u|^{q−2}/(|u|²+δ) 正则化，δ = 10⁻¹²·max|u|²。
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Any

import numpy as np

from dispflow.exceptions import BracketError, FamilyError, TraceError
from dispflow.flows import QTrace, TraceOptions, assemble_trace, check_t_grid, grid_info, shared_s_grid
from dispflow.multilinear import SCHRODINGER_STRICHARTZ
from dispflow.norms import MixedNormSpec, propagated_norm, time_integral
from dispflow.spectral import Field, default_s_grid, flow, inverse_values, propagator_symbol
from dispflow.utils import parallel_map

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

EMPIRICAL_LABEL = 'empirical lower evidence, not a proof'


def _reciprocal(x: float | int | str | Fraction) -> Fraction:
    if isinstance(x, str) and x.strip().lower() in ('inf', 'infinity', '∞'):
        return Fraction(0)
    if isinstance(x, float):
        if math.isinf(x):
            return Fraction(0)
        return 1 / Fraction(x).limit_denominator(10**6)
    return 1 / Fraction(x)


def admissible(p: float | int | str | Fraction, q: float | int | str | Fraction, d: int) -> bool:
    """2/p + d/q = d/2，2 ≤ p,q ≤ ∞，(p,q,d) ≠ (2,∞,2)；精确有理运算"""
    try:
        rp, rq = _reciprocal(p), _reciprocal(q)
    except (ValueError, ZeroDivisionError, TypeError):
        return False
    if d < 1 or not (0 <= rp <= Fraction(1, 2)) or not (0 <= rq <= Fraction(1, 2)):
        return False
    if (rp, rq, d) == (Fraction(1, 2), Fraction(0), 2):
        return False
    return 2 * rp + d * rq == Fraction(d, 2)


@dataclass(frozen=True)
class AdmissibleTriple:
    p: float
    q: float
    d: int

    def __post_init__(self) -> None:
        if not admissible(self.p, self.q, self.d):
            raise FamilyError(
                f'({self.p}, {self.q}, {self.d}) 不是 Schrödinger 容许三元组',
                suggestion='需满足 2/p + d/q = d/2，2 ≤ p,q ≤ ∞，且不为 (2,∞,2)',
                details={'p': self.p, 'q': self.q, 'd': self.d},
            )

    def as_tuple(self) -> tuple[float, float, int]:
        return (self.p, self.q, self.d)


@dataclass
class IdentityResult:
    """导数恒等式右端（已乘 p）及 Hölder 链"""

    t: float
    value: float
    positive: float
    negative: float
    holder_middle: float
    holder_ok: bool
    floor_hit: bool
    floor_fraction: float
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class FindCResult:
    value: float
    bracket: tuple[float, float]
    triple: tuple[float, float, int]
    corpus: list[str]
    iterations: int
    rtol: float
    label: str = EMPIRICAL_LABEL

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _triple(pqd: Sequence[float]) -> AdmissibleTriple:
    p, q, d = pqd
    triple = AdmissibleTriple(float(p), float(q), int(d))
    if triple.d > 2:
        raise FamilyError(f'一般指数的迹仅支持 d ≤ 2，收到 d={triple.d}')
    return triple


# ═══════════════════════════════════════════════════
# 一般指数的迹
# ═══════════════════════════════════════════════════


def q_general(
    f: Field,
    pqd: Sequence[float],
    c: float,
    t_grid: Sequence[float] | np.ndarray,
    options: TraceOptions | None = None,
) -> QTrace:
    """c^p‖e^{tΔ}f‖₂^p − ‖e^{isΔ}e^{tΔ}f‖^p_{L^p_sL^q_x}"""
    options = options or TraceOptions()
    triple = _triple(pqd)
    if c <= 0:
        raise TraceError(f'常数 c 必须为正，收到 {c}')
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'schrodinger', t_arr, options)
    spec = MixedNormSpec(triple.p, triple.q)

    def point(t: float) -> tuple[float, float, float]:
        g = flow(fhat, 'schrodinger', t)
        norm = propagated_norm(g, 'schrodinger', s_grid, spec, fit_fraction=options.fit_fraction)
        return c**triple.p * g.norm_l2() ** triple.p, norm.power, norm.power_bound

    label = f'general({triple.p:g},{triple.q:g},{triple.d})'
    return assemble_trace(label, t_arr, point, options, {'c': c}, grid_info(fhat, s_grid))


def _terms(fhat: Field, triple: AdmissibleTriple, t: float, s_grid: np.ndarray, options: TraceOptions) -> tuple[float, float]:
    """(‖g_t‖₂^p, ‖e^{isΔ}g_t‖^p)"""
    g = flow(fhat, 'schrodinger', t)
    norm = propagated_norm(g, 'schrodinger', s_grid, MixedNormSpec(triple.p, triple.q), fit_fraction=options.fit_fraction)
    return g.norm_l2() ** triple.p, norm.power


def finite_difference(
    f: Field,
    pqd: Sequence[float],
    c: float,
    t: float,
    step: float = 1e-3,
    options: TraceOptions | None = None,
    s_grid: np.ndarray | None = None,
) -> float:
    """Q′(t) 的中心差分"""
    options = options or TraceOptions()
    triple = _triple(pqd)
    fhat = f.to_frequency()
    if s_grid is None:
        s_grid = default_s_grid(flow(fhat, 'schrodinger', t - step), 'schrodinger', options.s_count, options.energy_fraction)
    values = []
    for tau in (t + step, t - step):
        a, b = _terms(fhat, triple, tau, s_grid, options)
        values.append(c**triple.p * a - b)
    return (values[0] - values[1]) / (2 * step)


# ═══════════════════════════════════════════════════
# 导数恒等式
# ═══════════════════════════════════════════════════


def _gradient(uhat: np.ndarray, grid: Any) -> list[np.ndarray]:
    return [inverse_values(1j * xi * uhat, grid) for xi in grid.xi]


def qprime_identity(
    f: Field,
    pqd: Sequence[float],
    c: float,
    t: float,
    options: TraceOptions | None = None,
    s_grid: np.ndarray | None = None,
    delta: float = 1e-12,
) -> IdentityResult:
    """分部积分恒等式给出的 Q′(t)，含 Hölder 链 ∫(∫|u|^q)^{(p−2)/q}(∫|∇u|^q)^{2/q} ds"""
    options = options or TraceOptions()
    triple = _triple(pqd)
    p, q = triple.p, triple.q
    fhat = f.to_frequency()
    grid = fhat.grid
    g = flow(fhat, 'schrodinger', t)
    if s_grid is None:
        s_grid = default_s_grid(g, 'schrodinger', options.s_count, options.energy_fraction)
    vol = grid.cell_volume

    u0_norm = g.norm_l2()
    grad0 = _gradient(g.values, grid)
    grad0_sq = float(sum(np.sum(np.abs(v) ** 2) for v in grad0) * vol)
    negative = c**p * u0_norm ** (p - 2) * grad0_sq if u0_norm > 0 else 0.0

    def slice_terms(s: float) -> tuple[float, float, float, float, float]:
        uhat = g.values * propagator_symbol('schrodinger', grid, s)
        u = inverse_values(uhat, grid)
        grads = _gradient(uhat, grid)
        mod2 = np.abs(u) ** 2
        grad_sq = sum(np.abs(v) ** 2 for v in grads)
        lq = float(np.sum(mod2 ** (q / 2)) * vol)
        first = float(np.sum(mod2 ** ((q - 2) / 2) * grad_sq) * vol)
        second = 0.0
        floor_part = 0.0
        if q > 2:
            floor = delta * float(mod2.max(initial=0.0))
            grad_mod2 = sum((2 * np.real(np.conj(u) * v)) ** 2 for v in grads)
            integrand = mod2 ** ((q - 2) / 2) * grad_mod2 / (mod2 + floor) if floor > 0 else np.zeros_like(mod2)
            second = float(np.sum(integrand) * vol)
            floor_part = float(np.sum(integrand[mod2 < 1e3 * floor]) * vol)
        grad_lq = float(np.sum(np.maximum(grad_sq, 0.0) ** (q / 2)) * vol)
        return lq, first, second, floor_part, grad_lq

    rows = parallel_map(slice_terms, [float(s) for s in s_grid], workers=options.workers)
    lq = np.array([r[0] for r in rows])
    first = np.array([r[1] for r in rows])
    second = np.array([r[2] for r in rows])
    floor_part = float(sum(r[3] for r in rows))
    grad_lq = np.array([r[4] for r in rows])

    weight = np.where(lq > 0, np.maximum(lq, 0.0) ** (p / q - 1), 0.0)
    brace = first + (q - 2) / 4 * second
    # 尺度不变性: 被积函数按 |s|^{−2} 衰减
    positive, _, bound = time_integral(s_grid, weight * brace, kappa=2.0, fit_fraction=options.fit_fraction)
    middle_integrand = np.maximum(lq, 0.0) ** ((p - 2) / q) * np.maximum(grad_lq, 0.0) ** (2 / q)
    middle, _, _ = time_integral(s_grid, middle_integrand, kappa=2.0, fit_fraction=options.fit_fraction)

    total_second = float(np.sum(second))
    floor_fraction = floor_part / total_second if total_second > 0 else 0.0
    floor_hit = floor_fraction > 1e-6
    if floor_hit:
        logger.warning('t=%.4g: 正则化下限影响了 %.2g 的 |u|^{q−4} 项', t, floor_fraction)
    holder_ok = middle * (1 + 1e-9) >= positive / (q - 1)
    value = p * (positive - negative)
    return IdentityResult(
        t=float(t),
        value=float(value),
        positive=float(positive),
        negative=float(negative),
        holder_middle=float(middle),
        holder_ok=bool(holder_ok),
        floor_hit=bool(floor_hit),
        floor_fraction=float(floor_fraction),
        details={'tail_bound': float(bound), 'triple': list(triple.as_tuple()), 'c': c},
    )


# ═══════════════════════════════════════════════════
# 经验常数搜索
# ═══════════════════════════════════════════════════


def _feasible(c: float, p: float, terms: list[tuple[np.ndarray, np.ndarray]], tol: float) -> bool:
    for first, second in terms:
        values = c**p * first - second
        scale = float(np.max(np.abs(c**p * first), initial=0.0))
        if np.any(np.diff(values) > tol * scale):
            return False
    return True


def find_c(
    corpus: Sequence[Field] | Sequence[tuple[str, Field]],
    pqd: Sequence[float],
    t_grid: Sequence[float] | np.ndarray,
    bracket: tuple[float, float] | None = None,
    rtol: float = 1e-3,
    monotone_tol: float = 1e-4,
    options: TraceOptions | None = None,
) -> FindCResult:
    """二分搜索使全部语料迹非增的最小 c"""
    options = options or TraceOptions()
    triple = _triple(pqd)
    t_arr = np.asarray(t_grid, dtype=float)
    check_t_grid(t_arr)
    labelled = [item if isinstance(item, tuple) else (f'member-{i}', item) for i, item in enumerate(corpus)]
    if bracket is None:
        known = SCHRODINGER_STRICHARTZ.get((int(triple.p), int(triple.q), triple.d)) if triple.p.is_integer() and triple.q.is_integer() else None
        lo = known if known is not None else 0.1
        bracket = (0.5 * lo, 4.0 * lo)
    lo, hi = bracket
    if not 0 < lo < hi:
        raise BracketError(f'区间 [{lo}, {hi}] 无效')

    def member_terms(item: tuple[str, Field]) -> tuple[np.ndarray, np.ndarray]:
        fhat = item[1].to_frequency()
        s_grid = shared_s_grid(fhat, 'schrodinger', t_arr, options)
        rows = [_terms(fhat, triple, float(t), s_grid, options) for t in t_arr]
        return np.array([r[0] for r in rows]), np.array([r[1] for r in rows])

    terms = parallel_map(member_terms, labelled, workers=options.workers, desc='find-c', unit='f')
    names = [name for name, _ in labelled]
    if _feasible(lo, triple.p, terms, monotone_tol):
        return FindCResult(lo, (lo, hi), triple.as_tuple(), names, 0, rtol)
    if not _feasible(hi, triple.p, terms, monotone_tol):
        raise BracketError(
            f'区间上端 c={hi} 仍不能使全部迹非增',
            suggestion='请扩大搜索区间上端',
            details={'bracket': [lo, hi], 'triple': list(triple.as_tuple())},
        )
    a, b = lo, hi
    iterations = 0
    while b - a > rtol * b:
        mid = 0.5 * (a + b)
        if _feasible(mid, triple.p, terms, monotone_tol):
            b = mid
        else:
            a = mid
        iterations += 1
    logger.info('find_c %s: c ≈ %.6g（%d 次二分，%s）', triple.as_tuple(), b, iterations, EMPIRICAL_LABEL)
    return FindCResult(b, (lo, hi), triple.as_tuple(), names, iterations, rtol)

