#!/usr/bin/env python3
"""
混合时空 Lebesgue 范数与 Sobolev 范数
====================================

‖u‖_{L^p_s L^q_x} = (∫ (∫|u|^q dx)^{p/q} ds)^{1/p}

时间方向用对称梯形公式；窗口外的尾部按幂律模型 A(s²+b²)^{−κ/2}
在两端分别拟合并用 scipy.integrate.quad 积分后加回，
拟合尾与纯幂律尾 g_N·|s_N|/(κ−1) 之差作为误差界。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import integrate

from dispflow.exceptions import NormError
from dispflow.spectral import Field, SpaceTimeField, apply_multiplier, dispersive_decay_rate, iter_slices

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from dispflow.spectral import GridSpec

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixedNormSpec:
    """外层（时间）指数 p 与内层（空间）指数 q，均在 [1, ∞]"""

    p: float
    q: float

    def __post_init__(self) -> None:
        for name, value in (('p', self.p), ('q', self.q)):
            if math.isnan(value) or value < 1:
                raise NormError(f'指数 {name} 必须在 [1, ∞] 内，收到 {value}', details={name: value})


@dataclass
class NormValue:
    """范数值及其时间尾部误差界

    power 为 p 次幂 ∫(∫|u|^q)^{p/q} ds（p=∞ 时等于 value），
    power_bound 是其绝对误差界；value / bound 为开 p 次方后的对应量。
    """

    value: float
    bound: float
    power: float
    power_bound: float
    tail_correction: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)


# ═══════════════════════════════════════════════════
# 逐片积分与时间积分
# ═══════════════════════════════════════════════════


def lebesgue_power(values: np.ndarray, q: float, cell_volume: float) -> float:
    """∫|u|^q dx（q=∞ 时返回 max|u|）"""
    mag = np.abs(values)
    if math.isinf(q):
        return float(mag.max(initial=0.0))
    return float(np.sum(mag**q) * cell_volume)


def lebesgue_norm(f: Field, q: float) -> float:
    """空间侧 L^q 范数"""
    space = f.to_space()
    power = lebesgue_power(space.values, q, space.grid.cell_volume)
    return power if math.isinf(q) else power ** (1.0 / q)


def slice_powers(slices: Iterable[np.ndarray], q: float, cell_volume: float) -> np.ndarray:
    """每个时间片的 ∫|u(s)|^q dx，按时间顺序"""
    return np.array([lebesgue_power(u, q, cell_volume) for u in slices], dtype=float)


def decay_exponent(spec: MixedNormSpec, decay_rate: float) -> float:
    """(∫|u(s)|^q)^{p/q} 的时间衰减指数 κ = p·σ·(q−2)/q"""
    if math.isinf(spec.p):
        return math.inf
    if math.isinf(spec.q):
        return spec.p * decay_rate
    return spec.p * decay_rate * (spec.q - 2) / spec.q


def _tail_at_end(s_end: float, g_end: float, s_inner: float, g_inner: float, kappa: float) -> tuple[float, float]:
    """单侧尾部: 返回 (拟合尾积分, 误差界)"""
    s_end, s_inner = abs(s_end), abs(s_inner)
    if g_end <= 0.0:
        return 0.0, 0.0
    power_tail = g_end * s_end / (kappa - 1.0)
    if g_inner <= g_end or s_inner >= s_end:
        # 窗口末端尚未进入衰减区
        return power_tail, power_tail
    ratio = (g_end / g_inner) ** (2.0 / kappa)
    b2 = max((s_inner**2 - ratio * s_end**2) / (ratio - 1.0), 0.0)
    amplitude = g_end * (s_end**2 + b2) ** (kappa / 2.0)
    fitted, _ = integrate.quad(lambda s: amplitude * (s * s + b2) ** (-kappa / 2.0), s_end, np.inf)
    return float(fitted), abs(float(fitted) - power_tail)


def time_integral(
    s: np.ndarray,
    integrand: np.ndarray,
    kappa: float | None = None,
    tail: bool = True,
    fit_fraction: float = 0.25,
) -> tuple[float, float, float]:
    """∫ g(s) ds 的梯形值（含尾部修正）

    Returns:
        (积分值, 尾部修正量, 误差界)
    """
    s = np.asarray(s, dtype=float)
    g = np.asarray(integrand, dtype=float)
    if s.size == 1:
        return float(g[0]), 0.0, 0.0
    core = float(integrate.trapezoid(g, s))
    if not tail:
        return core, 0.0, 0.0
    if kappa is None or kappa <= 1.0:
        raise NormError(
            f'时间尾部要求衰减指数 κ > 1，收到 {kappa}',
            suggestion='该 (p,q) 组合在整条时间轴上不可积，请关闭尾部修正（tail=False）',
            details={'kappa': kappa},
        )
    offset = max(1, int(round(fit_fraction * (s.size // 2))))
    right = _tail_at_end(s[-1], g[-1], s[-1 - offset], g[-1 - offset], kappa)
    left = _tail_at_end(s[0], g[0], s[offset], g[offset], kappa)
    correction = right[0] + left[0]
    return core + correction, correction, right[1] + left[1]


# ═══════════════════════════════════════════════════
# 混合范数
# ═══════════════════════════════════════════════════


def norm_from_powers(
    s: np.ndarray,
    powers: np.ndarray,
    spec: MixedNormSpec,
    kappa: float | None = None,
    tail: bool | None = None,
    fit_fraction: float = 0.25,
) -> NormValue:
    """由逐片 ∫|u|^q 组装 L^p_s L^q_x 范数

    tail=None 时仅在 κ 已知且 > 1 时做尾部修正；True 时强制（κ 不合格则报错）。
    """
    s = np.asarray(s, dtype=float)
    powers = np.asarray(powers, dtype=float)
    slice_norms = powers if math.isinf(spec.q) else powers ** (1.0 / spec.q)
    if math.isinf(spec.p):
        value = float(slice_norms.max(initial=0.0))
        return NormValue(value, 0.0, value, 0.0)
    integrand = slice_norms**spec.p
    use_tail = tail if tail is not None else (kappa is not None and kappa > 1.0 and s.size > 1)
    total, correction, bound = time_integral(s, integrand, kappa, use_tail, fit_fraction)
    value = total ** (1.0 / spec.p) if total > 0 else 0.0
    value_bound = (total + bound) ** (1.0 / spec.p) - value if total > 0 else 0.0
    return NormValue(
        value=value,
        bound=value_bound,
        power=total,
        power_bound=bound,
        tail_correction=correction,
        details={'kappa': kappa, 'slices': int(s.size)},
    )


def mixed_norm(
    u: SpaceTimeField,
    spec: MixedNormSpec,
    kappa: float | None = None,
    tail: bool | None = None,
    fit_fraction: float = 0.25,
) -> NormValue:
    """‖u‖_{L^p_s L^q_x}；κ 缺省时由 u.decay_rate 推出"""
    if kappa is None and u.decay_rate is not None:
        kappa = decay_exponent(spec, u.decay_rate)
    powers = slice_powers(u.values, spec.q, u.grid.cell_volume)
    return norm_from_powers(u.s, powers, spec, kappa, tail, fit_fraction)


def propagated_norm(
    f: Field,
    family: str,
    s_grid: Sequence[float] | np.ndarray,
    spec: MixedNormSpec,
    tail: bool | None = None,
    fit_fraction: float = 0.25,
    workers: int = 1,
) -> NormValue:
    """‖e^{isL}f‖_{L^p_s L^q_x}，逐片流式计算，不驻留整个时空场"""
    grid: GridSpec = f.grid
    s_arr = np.asarray(s_grid, dtype=float)
    powers = slice_powers((u for _, u in iter_slices(f, family, s_arr, workers)), spec.q, grid.cell_volume)
    kappa = decay_exponent(spec, dispersive_decay_rate(family, grid.d))
    return norm_from_powers(s_arr, powers, spec, kappa, tail, fit_fraction)


# ═══════════════════════════════════════════════════
# Sobolev 范数
# ═══════════════════════════════════════════════════


def sobolev_norm(
    f: Field,
    order: float,
    variant: str = 'homogeneous',
    zero_override: float | None = 0.0,
) -> float:
    """‖f‖²_{Ḣ^s} = (2π)^{−d}∫|ξ|^{2s}|f̂|² dξ；非齐次用 (1+|ξ|²)^s"""
    fhat = f.to_frequency()
    if variant == 'homogeneous':
        weighted = apply_multiplier(fhat, 'fractional', order, zero_override=zero_override)
    elif variant == 'inhomogeneous':
        weighted = apply_multiplier(fhat, lambda xi: (1.0 + sum(c**2 for c in xi)) ** (order / 2.0))
    else:
        raise NormError(f'未知的 Sobolev 变体: {variant}', suggestion='可用: homogeneous / inhomogeneous')
    return weighted.norm_l2()
