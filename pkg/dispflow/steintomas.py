#!/usr/bin/env python3
"""
紧凸曲面的延拓算子、P𝟏 = μ∗μ 与阻尼流下的单调量
============================================

𝓔g(x,s) = ∫_U g(ξ) e^{i(sφ(ξ) + x·ξ)} dξ = (2π)²·F^{−1}[g·𝟏_U·e^{isφ}](x)

P𝟏(ξ₁,ξ₂) = μ∗μ(ξ₁+ξ₂, φ(ξ₁)+φ(ξ₂)) 由水平曲线 {u : φ(u)+φ(ζ−u) = τ} 上的
余面积权 1/|∇F| 积分得到；F 关于 ζ/2 对称且严格凸，曲线按绕 ζ/2 的极角参数化。

Q(t) = c‖g_t‖⁴_{L²(U)} − (2π)^{−3}‖𝓔g_t‖⁴_{L⁴}，g_t = e^{−tφ}g，c 为采样得到的 ‖P𝟏‖_∞。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from dispflow.exceptions import ExtensionError, SurfaceError
from dispflow.flows import QTrace, TraceOptions, assemble_trace
from dispflow.norms import MixedNormSpec, norm_from_powers
from dispflow.spectral import Field, GridSpec, SpaceTimeField, inverse_values
from dispflow.utils import parallel_map

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

_DEGENERATE_GAP = 1e-10


@dataclass(frozen=True)
class SurfaceSpec:
    """参数集 U（圆盘或正方形）与凸图函数 φ

    profile='paraboloid' 即 |ξ|²；'quartic' 为 aξ₁² + bξ₂² + γ|ξ|⁴（coeffs = (a, b, γ)）。
    """

    shape: str = 'disk'
    radius: float = 6.0
    profile: str = 'paraboloid'
    coeffs: tuple[float, float, float] = (1.0, 1.0, 0.0)
    kappa_min: float = 0.1

    def __post_init__(self) -> None:
        if self.shape not in ('disk', 'square'):
            raise SurfaceError(f'未知的参数集形状: {self.shape}', suggestion='可用: disk / square')
        if self.radius <= 0:
            raise SurfaceError(f'参数集半径必须为正，收到 {self.radius}')
        if self.profile == 'paraboloid':
            object.__setattr__(self, 'coeffs', (1.0, 1.0, 0.0))
        elif self.profile == 'quartic':
            a, b, gamma = (float(c) for c in self.coeffs)
            if a <= 0 or b <= 0 or gamma < 0:
                raise SurfaceError('quartic 轮廓要求 a, b > 0 且 γ ≥ 0', details={'coeffs': list(self.coeffs)})
            object.__setattr__(self, 'coeffs', (a, b, gamma))
        else:
            raise SurfaceError(f'未知的曲面轮廓: {self.profile}', suggestion='可用: paraboloid / quartic')
        self._check_curvature()

    # ── φ 及其导数 ──────────────────────────

    def phi(self, xi: np.ndarray) -> np.ndarray:
        a, b, gamma = self.coeffs
        x, y = xi[..., 0], xi[..., 1]
        r2 = x**2 + y**2
        return a * x**2 + b * y**2 + gamma * r2**2

    def gradient(self, xi: np.ndarray) -> np.ndarray:
        a, b, gamma = self.coeffs
        x, y = xi[..., 0], xi[..., 1]
        r2 = x**2 + y**2
        return np.stack([2 * a * x + 4 * gamma * r2 * x, 2 * b * y + 4 * gamma * r2 * y], axis=-1)

    def hessian_det(self, xi: np.ndarray) -> np.ndarray:
        a, b, gamma = self.coeffs
        x, y = xi[..., 0], xi[..., 1]
        r2 = x**2 + y**2
        h11 = 2 * a + 4 * gamma * r2 + 8 * gamma * x**2
        h22 = 2 * b + 4 * gamma * r2 + 8 * gamma * y**2
        h12 = 8 * gamma * x * y
        return h11 * h22 - h12**2

    # ── 参数集 ──────────────────────────

    def margin(self, xi: np.ndarray) -> np.ndarray:
        """到 ∂U 的有符号距离（内部为正）"""
        if self.shape == 'disk':
            return self.radius - np.linalg.norm(xi, axis=-1)
        return self.radius - np.max(np.abs(xi), axis=-1)

    def contains(self, xi: np.ndarray) -> np.ndarray:
        return self.margin(xi) >= 0

    def indicator(self, grid: GridSpec) -> np.ndarray:
        points = np.stack(grid.xi, axis=-1)
        return self.contains(points).astype(float)

    def to_unit(self, unit: np.ndarray) -> np.ndarray:
        """[0,1)² → U 的映射（采样用）"""
        if self.shape == 'square':
            return self.radius * (2 * unit - 1)
        r = self.radius * np.sqrt(unit[..., 0])
        theta = 2 * np.pi * unit[..., 1]
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def _check_curvature(self) -> None:
        unit = qmc.Halton(d=2, scramble=False).random(256)
        det = self.hessian_det(self.to_unit(unit))
        if float(det.min()) < self.kappa_min:
            raise SurfaceError(
                f'Hessian 行列式 {det.min():.3g} 低于曲率下限 {self.kappa_min}',
                details={'min_det': float(det.min()), 'kappa_min': self.kappa_min},
            )

    def to_dict(self) -> dict[str, Any]:
        return {'shape': self.shape, 'radius': self.radius, 'profile': self.profile, 'coeffs': list(self.coeffs)}


# ═══════════════════════════════════════════════════
# 延拓算子
# ═══════════════════════════════════════════════════


def _restricted(g: Field, spec: SurfaceSpec) -> np.ndarray:
    if g.side != 'frequency' or g.grid.d != 2:
        raise ExtensionError('延拓算子需要二维频率侧的密度 g')
    return g.values * spec.indicator(g.grid)


def _phase_table(grid: GridSpec, spec: SurfaceSpec) -> np.ndarray:
    return spec.phi(np.stack(grid.xi, axis=-1))


def default_window(g: Field, spec: SurfaceSpec, count: int = 129, energy_fraction: float = 1e-8) -> np.ndarray:
    """时间窗口: 群速度 max|∇φ| × s_max ≤ L，相位差增量不超过 π/2"""
    values = _restricted(g, spec)
    weight = np.abs(values) ** 2
    top = float(weight.max(initial=0.0))
    if top == 0:
        return np.linspace(-1.0, 1.0, count if count % 2 else count + 1)
    mask = weight > energy_fraction * top
    points = np.stack(g.grid.xi, axis=-1)[mask]
    speed = float(np.linalg.norm(spec.gradient(points), axis=-1).max())
    s_max = 0.98 * g.grid.half_width / max(speed, 1e-12)
    phases = spec.phi(points)
    spread = float(phases.max() - phases.min())
    if count % 2 == 0:
        count += 1
    needed = int(math.ceil(2 * s_max * spread / (0.5 * math.pi))) + 1
    if needed > count:
        count = needed + (1 - needed % 2)
    return np.linspace(-s_max, s_max, count)


def check_window(g: Field, spec: SurfaceSpec, s_grid: np.ndarray, energy_fraction: float = 1e-8) -> None:
    values = _restricted(g, spec)
    weight = np.abs(values) ** 2
    top = float(weight.max(initial=0.0))
    if top == 0:
        return
    points = np.stack(g.grid.xi, axis=-1)[weight > energy_fraction * top]
    speed = float(np.linalg.norm(spec.gradient(points), axis=-1).max())
    travel = float(np.max(np.abs(s_grid))) * speed
    if travel > g.grid.half_width * (1 + 1e-9):
        raise ExtensionError(
            f'(x,s) 网格装不下能量: 传播距离 {travel:.3g} > L = {g.grid.half_width}',
            suggestion='增大网格半宽或缩短时间窗口',
            details={'travel': travel},
        )


def extension(g: Field, spec: SurfaceSpec, s_grid: Sequence[float] | np.ndarray, check: bool = True) -> SpaceTimeField:
    """𝓔g 在 (x,s) 网格上的取值"""
    s_arr = np.asarray(s_grid, dtype=float)
    if check:
        check_window(g, spec, s_arr)
    values = _restricted(g, spec)
    phases = _phase_table(g.grid, spec)
    out = np.empty((s_arr.size, *g.grid.shape), dtype=np.complex128)
    for k, s in enumerate(s_arr):
        out[k] = (2 * np.pi) ** 2 * inverse_values(values * np.exp(1j * s * phases), g.grid)
    return SpaceTimeField(g.grid, s_arr, out, decay_rate=1.0)


# ═══════════════════════════════════════════════════
# P𝟏 = μ∗μ
# ═══════════════════════════════════════════════════


def _level_radius(spec: SurfaceSpec, center: np.ndarray, zeta: np.ndarray, tau: float, omega: np.ndarray) -> float:
    def level(r: float) -> float:
        u = center + r * omega
        return float(spec.phi(u) + spec.phi(zeta - u)) - tau

    hi = 1.0
    while level(hi) < 0:
        hi *= 2.0
        if hi > 1e8:
            raise SurfaceError('水平曲线无界，φ 不是强凸的')
    return float(optimize.brentq(level, 0.0, hi, xtol=1e-14, rtol=1e-12))


def _curve_integral(spec: SurfaceSpec, zeta: np.ndarray, tau: float, n_theta: int) -> float:
    center = zeta / 2
    theta = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    omegas = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    radii = np.array([_level_radius(spec, center, zeta, tau, w) for w in omegas])
    points = center + radii[:, None] * omegas
    grad_f = spec.gradient(points) - spec.gradient(zeta - points)
    radial = np.sum(grad_f * omegas, axis=-1)
    integrand = radii / radial
    margin = np.minimum(spec.margin(points), spec.margin(zeta - points))
    # 跨越 ∂U 的弧段按有符号边距线性插值截断
    step = 2 * np.pi / n_theta
    nxt = np.roll(np.arange(n_theta), -1)
    m0, m1 = margin, margin[nxt]
    f_mean = 0.5 * (integrand + integrand[nxt])
    fraction = np.where(
        (m0 >= 0) & (m1 >= 0),
        1.0,
        np.where((m0 < 0) & (m1 < 0), 0.0, np.maximum(m0, m1) / np.maximum(np.abs(m0 - m1), 1e-300)),
    )
    return float(np.sum(step * fraction * f_mean))


def p_one(
    xi1: Sequence[float] | np.ndarray,
    xi2: Sequence[float] | np.ndarray,
    spec: SurfaceSpec,
    n_theta: int = 512,
) -> float:
    """μ∗μ(ξ₁+ξ₂, φ(ξ₁)+φ(ξ₂))"""
    a = np.asarray(xi1, dtype=float)
    b = np.asarray(xi2, dtype=float)
    if not (spec.contains(a) and spec.contains(b)):
        raise SurfaceError('p_one 要求 ξ₁, ξ₂ ∈ U', details={'xi1': a.tolist(), 'xi2': b.tolist()})
    zeta = a + b
    tau = float(spec.phi(a) + spec.phi(b))
    center = zeta / 2
    gap = tau - 2 * float(spec.phi(center))
    if gap > _DEGENERATE_GAP * (1 + abs(tau)):
        return _curve_integral(spec, zeta, tau, n_theta)
    # 水平集退化为一点 ζ/2
    inside = float(min(spec.margin(center), spec.margin(zeta - center)))
    if inside > 1e-9:
        value = math.pi / math.sqrt(float(spec.hessian_det(center)))
        logger.warning('p_one: 水平集退化于 ζ/2=%s，取单侧极限 %.6g', center.tolist(), value)
        return value
    if inside < -1e-9:
        return 0.0
    shifts = np.array([1.0, 2.0, 3.0]) * 1e-4 * (1 + abs(tau))
    values = [_curve_integral(spec, zeta, tau + eps, n_theta) for eps in shifts]
    value = max(float(np.polyval(np.polyfit(shifts, values, 1), 0.0)), 0.0)
    logger.warning('p_one: 退化点位于 ∂U 上，使用平移水平外推的磨光值 %.6g', value)
    return value


@dataclass
class CConstant:
    value: float
    argmax: tuple[list[float], list[float]]
    samples: int
    seed: int
    caveat: str = 'sampled lower bound of ‖P1‖∞'


def c_constant(spec: SurfaceSpec, sample_count: int = 256, seed: int = 7, n_theta: int = 512, workers: int = 1) -> CConstant:
    """U×U 上 Sobol 采样求 P𝟏 的最大值，再以 Nelder–Mead 局部加细"""
    sampler = qmc.Sobol(d=4, scramble=True, seed=seed)
    count = 1 << max(1, int(math.ceil(math.log2(max(sample_count, 2)))))
    unit = sampler.random(count)
    pairs = [(spec.to_unit(row[:2]), spec.to_unit(row[2:])) for row in unit]
    values = parallel_map(lambda pair: p_one(pair[0], pair[1], spec, n_theta), pairs, workers=workers, desc='P1', unit='pt')
    best = int(np.argmax(values))

    def objective(x: np.ndarray) -> float:
        a, b = x[:2], x[2:]
        if not (spec.contains(a) and spec.contains(b)):
            return 0.0
        return -p_one(a, b, spec, n_theta)

    start = np.concatenate(pairs[best])
    result = optimize.minimize(objective, start, method='Nelder-Mead', options={'xatol': 1e-4, 'fatol': 1e-8, 'maxiter': 400})
    refined = -float(result.fun)
    if refined > values[best]:
        value, arg = refined, result.x
    else:
        value, arg = float(values[best]), start
    logger.info('c_constant (%s, %s): ‖P1‖∞ ≈ %.6g（%d 个采样点）', spec.shape, spec.profile, value, count)
    return CConstant(value, (arg[:2].tolist(), arg[2:].tolist()), count, seed)


# ═══════════════════════════════════════════════════
# 单调量
# ═══════════════════════════════════════════════════


def q_steintomas(
    g: Field,
    spec: SurfaceSpec,
    t_grid: Sequence[float] | np.ndarray,
    c: float | None = None,
    options: TraceOptions | None = None,
    sample_count: int = 256,
    seed: int = 7,
    n_theta: int = 512,
) -> QTrace:
    """Q(t) = c‖g_t‖⁴_{L²(U)} − (2π)^{−3}‖𝓔g_t‖⁴_{L⁴}"""
    options = options or TraceOptions()
    g = g.to_frequency()
    caveat = None
    if c is None:
        sampled = c_constant(spec, sample_count, seed, n_theta, options.workers)
        c, caveat = sampled.value, sampled.caveat
    base = _restricted(g, spec)
    phases = _phase_table(g.grid, spec)
    t_arr = np.asarray(t_grid, dtype=float)
    first_slice = Field(g.grid, 'frequency', base * np.exp(-t_arr[0] * phases))
    s_grid = default_window(first_slice, spec, options.s_count, options.energy_fraction)
    count = s_grid.size
    inner = slice(count // 4, count - count // 4)
    doubling: dict[float, float] = {}

    def point(t: float) -> tuple[float, float, float]:
        gt = base * np.exp(-t * phases)
        l2 = float(np.sum(np.abs(gt) ** 2) * g.grid.freq_cell_volume)
        powers = np.array(
            [
                float(np.sum(np.abs((2 * np.pi) ** 2 * inverse_values(gt * np.exp(1j * s * phases), g.grid)) ** 4))
                * g.grid.cell_volume
                for s in s_grid
            ]
        )
        spec4 = MixedNormSpec(4, 4)
        full = norm_from_powers(s_grid, powers, spec4, kappa=2.0, fit_fraction=options.fit_fraction)
        half = norm_from_powers(s_grid[inner], powers[inner], spec4, kappa=2.0, fit_fraction=options.fit_fraction)
        second = full.power / (2 * np.pi) ** 3
        discrepancy = abs(full.power - half.power) / (2 * np.pi) ** 3
        doubling[t] = discrepancy
        if full.power > 0 and full.power_bound > 0.01 * full.power:
            raise ExtensionError(
                f't={t:.4g}: L⁴ 时间尾部误差界超过 1%',
                details={'tail_bound': full.power_bound, 'power': full.power},
            )
        return c * l2**2, second, max(full.power_bound / (2 * np.pi) ** 3, discrepancy)

    consts = {'c': c, 'surface': spec.to_dict()}
    trace = assemble_trace('steintomas', t_arr, point, options, consts, {**g.grid.to_dict(), 's_max': float(s_grid[-1]), 's_count': count})
    trace.extra['doubling_discrepancy'] = max(doubling.values(), default=0.0)
    if caveat:
        trace.extra['caveat'] = caveat
    return trace
