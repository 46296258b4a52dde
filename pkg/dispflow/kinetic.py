#!/usr/bin/env python3
"""
动理学输运: 宏观密度 ρ、其伴随 ρ*、k-平面变换、Drury 恒等式与快扩散单调性
====================================================================

- ρ(f⁰)(s,x) = ∫ f⁰(x − vs, v) dv，ρ*(g)(x,v) = ∫ g(s, x + vs) ds
  两者由同一线性插值平移算子构成，离散意义下严格互为伴随
- T_{1,n} / T_{2,3}: 沿方向的直线 / 平面积分（Fibonacci 半球方向 × 有符号偏移）
- ∬ g(x)g(y)|x−y|^{−λ}: FFT 卷积，原点格元用 |z|^{−λ} 的精确格元平均替换
- ∂_t u = Δ(u^m)，m = 3/5: 守恒显式格式，负值拒步减半
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import fft as sfft
from scipy import integrate, ndimage

from dispflow.exceptions import CoverageError, DiffusionError, FileException, KineticError, ShearError
from dispflow.flows import MIN_T_POINTS, QTrace
from dispflow.spectral import GridSpec, SpaceTimeField
from dispflow.utils import array_digest, atomic_write, atomic_write_bytes, parallel_map, progress_iter, safe_read_file

if TYPE_CHECKING:
    from collections.abc import Sequence

logger = logging.getLogger(__name__)

MIN_DIRECTIONS = 64
SUPPORT_TOL = 1e-10
COVERAGE_TOL = 1e-6
FAST_DIFFUSION_EXPONENT = 3 / 5


# ═══════════════════════════════════════════════════
# 相空间数据
# ═══════════════════════════════════════════════════


@dataclass
class PhaseField:
    """位置 × 速度乘积网格上的 f⁰(x, v)，d = 1 或 2"""

    x: GridSpec
    v: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.x.d != self.v.d or self.x.d not in (1, 2):
            raise KineticError('相空间要求位置与速度同维且 d ∈ {1, 2}', details={'x_d': self.x.d, 'v_d': self.v.d})
        arr = np.asarray(self.values, dtype=float)
        if arr.shape != (*self.x.shape, *self.v.shape):
            raise KineticError('相空间数据形状不符', details={'shape': list(arr.shape)})
        if not np.all(np.isfinite(arr)):
            raise KineticError('相空间数据含非有限值')
        self.values = arr

    @property
    def d(self) -> int:
        return self.x.d

    @property
    def cell_volume(self) -> float:
        return self.x.cell_volume * self.v.cell_volume

    def inner(self, other: PhaseField) -> float:
        return float(np.sum(self.values * other.values) * self.cell_volume)

    @classmethod
    def from_function(cls, x: GridSpec, v: GridSpec, func: Any) -> PhaseField:
        """func(x_coords, v_coords) 按广播求值，坐标为 d 元组"""
        axes = np.meshgrid(*([x.x_axis] * x.d + [v.x_axis] * v.d), indexing='ij')
        return cls(x, v, func(tuple(axes[: x.d]), tuple(axes[x.d :])))


def space_time_inner(a: SpaceTimeField, b: SpaceTimeField) -> float:
    ds = a.ds if a.s.size > 1 else 1.0
    return float(np.real(np.sum(a.values * np.conj(b.values))) * a.grid.cell_volume * ds)


def _support_radius(values: np.ndarray, coords: Sequence[np.ndarray]) -> float:
    mag = np.abs(values)
    top = float(mag.max(initial=0.0))
    if top == 0:
        return 0.0
    mask = mag > SUPPORT_TOL * top
    return float(np.max(np.sqrt(sum(np.square(c) for c in coords))[mask]))


def _shift_axis(values: np.ndarray, cells: np.ndarray, axis: int) -> np.ndarray:
    """沿 axis 平移 cells 个格点（线性插值，越界补零）

    out[i] = (1−θ)·v[i−k] + θ·v[i−k−1]，cells = k + θ；平移 −cells 是其转置。
    cells 可逐列不同，须能按去掉 axis 后的形状广播。
    """
    moved = np.moveaxis(values, axis, 0)
    n = moved.shape[0]
    shifts = np.broadcast_to(np.asarray(cells, dtype=float), moved.shape[1:])
    k = np.floor(shifts)
    theta = shifts - k
    idx = np.arange(n).reshape((n,) + (1,) * (moved.ndim - 1)) - k[None].astype(int)
    out = np.zeros(moved.shape, dtype=moved.dtype)
    for offset, weight in ((0, 1.0 - theta), (1, theta)):
        src = idx - offset
        valid = (src >= 0) & (src < n)
        gathered = np.take_along_axis(moved, np.clip(src, 0, n - 1), axis=0)
        out += np.where(valid, gathered, 0.0) * weight[None]
    return np.moveaxis(out, 0, axis)


def _shear(values: np.ndarray, velocities: Sequence[np.ndarray], s: float, h: float, d: int) -> np.ndarray:
    out = values
    for axis in range(d):
        out = _shift_axis(out, velocities[axis] * s / h, axis)
    return out


def _velocity_mesh(v: GridSpec, d: int) -> list[np.ndarray]:
    # 与 values[x..., v...] 去掉一个 x 轴后的形状对齐
    mesh = np.meshgrid(*([v.x_axis] * d), indexing='ij')
    return [m.reshape((1,) * (d - 1) + m.shape) for m in mesh]


def rho(f0: PhaseField, s_grid: Sequence[float] | np.ndarray) -> SpaceTimeField:
    """ρ(f⁰)(s,x) = ∫ f⁰(x − vs, v) dv"""
    s_arr = np.asarray(s_grid, dtype=float)
    d = f0.d
    x_coords = np.meshgrid(*([f0.x.x_axis] * d + [f0.v.x_axis] * d), indexing='ij')
    support = _support_radius(f0.values, x_coords[:d])
    v_max = _support_radius(f0.values, x_coords[d:])
    reach = support + float(np.max(np.abs(s_arr), initial=0.0)) * v_max
    if reach > f0.x.half_width - f0.x.h:
        raise ShearError(
            f'剪切后支撑半径 {reach:.3g} 越出空间网格 (L = {f0.x.half_width})',
            details={'support': support, 'v_max': v_max, 's_max': float(np.max(np.abs(s_arr)))},
        )
    velocities = _velocity_mesh(f0.v, d)
    v_axes = tuple(range(d, 2 * d))
    out = np.empty((s_arr.size, *f0.x.shape))
    for k, s in enumerate(s_arr):
        out[k] = np.sum(_shear(f0.values, velocities, s, f0.x.h, d), axis=v_axes) * f0.v.cell_volume
    return SpaceTimeField(f0.x, s_arr, out, decay_rate=float(d), meta={'source': 'rho'})


def rho_star(g: SpaceTimeField, v: GridSpec) -> PhaseField:
    """ρ*(g)(x,v) = ∫ g(s, x + vs) ds"""
    d = g.grid.d
    if v.d != d:
        raise KineticError('速度网格维数与时空数据不符', details={'x_d': d, 'v_d': v.d})
    if g.s.size < 2:
        raise KineticError('ρ* 需要至少两个时间点')
    values = np.real(g.values)
    support = max(_support_radius(values[k], g.grid.x) for k in range(g.s.size))
    v_extent = float(np.max(np.abs(v.x_axis)))
    reach = support + float(np.max(np.abs(g.s))) * v_extent
    if reach > g.grid.half_width - g.grid.h:
        raise ShearError(
            f'反向剪切后支撑半径 {reach:.3g} 越出空间网格 (L = {g.grid.half_width})',
            details={'support': support, 'v_max': v_extent},
        )
    velocities = _velocity_mesh(v, d)
    expand = (Ellipsis,) + (None,) * d
    out = np.zeros((*g.grid.shape, *v.shape))
    for k, s in enumerate(g.s):
        tiled = np.broadcast_to(values[k][expand], out.shape)
        out += _shear(tiled, velocities, -s, g.grid.h, d)
    return PhaseField(g.grid, v, out * g.ds)


def purenorm_ratio(g: SpaceTimeField, v: GridSpec) -> float:
    """‖ρ*(g)‖_{L^{d+2}} / ‖g‖_{L^{(d+2)/2}}"""
    d = g.grid.d
    dual = rho_star(g, v)
    top = float(np.sum(np.abs(dual.values) ** (d + 2)) * dual.cell_volume) ** (1 / (d + 2))
    q = (d + 2) / 2
    bottom = float(np.sum(np.abs(g.values) ** q) * g.grid.cell_volume * g.ds) ** (1 / q)
    if bottom == 0:
        return 0.0
    return top / bottom


# ═══════════════════════════════════════════════════
# 指标关系
# ═══════════════════════════════════════════════════


def kinetic_admissible(a: float, p: float, q: float, d: int) -> bool:
    """q > a，p ≥ a，2/q = d(1 − 1/p)，1/a = (1 + 1/p)/2（有理数精确比较）"""
    fa, fp, fq = (Fraction(x).limit_denominator(10_000) for x in (a, p, q))
    if min(fa, fp, fq) <= 0 or d < 1:
        return False
    return fq > fa and fp >= fa and 2 / fq == d * (1 - 1 / fp) and 1 / fa == (1 + 1 / fp) / 2


def kplane_exponent(k: int, q: float, d: int) -> float:
    """(d+1)/p = k + (d+1−k)/q，要求 1 ≤ p ≤ (d+2)/(k+1)"""
    if not 1 <= k <= d:
        raise KineticError(f'k 必须在 1..{d} 之间，收到 {k}')
    p = Fraction(d + 1) / (k + Fraction(d + 1 - k) / Fraction(q).limit_denominator(10_000))
    if not 1 <= p <= Fraction(d + 2, k + 1):
        raise KineticError(f'p = {p} 越出 [1, {Fraction(d + 2, k + 1)}]', details={'k': k, 'q': q, 'd': d})
    return float(p)


# ═══════════════════════════════════════════════════
# k-平面变换
# ═══════════════════════════════════════════════════


@dataclass
class PlaneGrid:
    """方向 × 偏移上的 k-平面积分值

    profiles 形状为 (方向数, 偏移...)；weights 为方向求积权（半球/半圆等面积划分）。
    """

    k: int
    ambient: int
    directions: np.ndarray
    offsets: np.ndarray
    profiles: np.ndarray
    weights: np.ndarray

    @property
    def offset_cell(self) -> float:
        h = float(self.offsets[1] - self.offsets[0])
        return h ** (self.ambient - self.k)

    def l2_norm_sq(self) -> float:
        axes = tuple(range(1, self.profiles.ndim))
        per_direction = np.sum(np.abs(self.profiles) ** 2, axis=axes) * self.offset_cell
        return float(np.sum(self.weights * per_direction))

    def spread(self) -> float:
        """方向间剖面的最大相对差（径向数据的旋转不变性）"""
        top = float(np.max(np.abs(self.profiles)))
        if top == 0:
            return 0.0
        return float(np.max(np.abs(self.profiles - self.profiles.mean(axis=0)))) / top


def fibonacci_hemisphere(count: int) -> np.ndarray:
    i = np.arange(count) + 0.5
    z = i / count
    r = np.sqrt(1 - z**2)
    angle = math.pi * (3 - math.sqrt(5)) * i
    return np.stack([r * np.cos(angle), r * np.sin(angle), z], axis=-1)


def half_circle(count: int) -> np.ndarray:
    theta = math.pi * (np.arange(count) + 0.5) / count
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def _frame(omega: np.ndarray) -> np.ndarray:
    """以 ω 为首向量的正交标架（行向量）"""
    if omega.size == 2:
        return np.array([omega, [-omega[1], omega[0]]])
    helper = np.array([1.0, 0.0, 0.0]) if abs(omega[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(omega, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return np.array([omega, e1, e2])


def _check_coverage(values: np.ndarray, grid: GridSpec, directions: int) -> None:
    if directions < MIN_DIRECTIONS:
        raise CoverageError(f'方向数至少为 {MIN_DIRECTIONS}，收到 {directions}', details={'directions': directions})
    # 快扩散解有代数尾部，按质量占比而非逐点支撑判断
    mag = np.abs(values)
    total = float(mag.sum())
    if total == 0:
        return
    reach = grid.half_width - grid.h
    radius = np.sqrt(sum(np.square(c) for c in grid.x))
    outside = float(mag[radius > reach].sum()) / total
    if outside > COVERAGE_TOL:
        raise CoverageError(
            f'偏移覆盖范围 {reach:.3g} 之外的质量占比 {outside:.3g} 超过 {COVERAGE_TOL:g}',
            details={'outside_fraction': outside, 'half_width': grid.half_width},
        )


def _rotated_samples(values: np.ndarray, grid: GridSpec, frame: np.ndarray) -> np.ndarray:
    """在旋转标架的网格点 Σ u_i e_i 上线性插值采样，返回形状 (n,)*d，轴 i 对应 e_i"""
    axes = np.meshgrid(*([grid.x_axis] * grid.d), indexing='ij')
    points = sum(a[None] * e.reshape((grid.d,) + (1,) * grid.d) for a, e in zip(axes, frame, strict=True))
    index = points / grid.h + grid.n // 2
    return ndimage.map_coordinates(values, index, order=1, mode='constant', cval=0.0)


def _transform(values: np.ndarray, grid: GridSpec, k: int, directions: np.ndarray, weight: float, workers: int) -> PlaneGrid:
    real = np.asarray(values, dtype=float)

    def project(omega: np.ndarray) -> np.ndarray:
        rotated = _rotated_samples(real, grid, _frame(omega))
        # k=1: 沿 ω 积分；k=2: 在 ω⊥ 平面内积分
        sum_axes = (0,) if k == 1 else tuple(range(1, grid.d))
        return np.sum(rotated, axis=sum_axes) * grid.h**k

    profiles = np.array(parallel_map(project, list(directions), workers=workers, desc=f'T{k}', unit='dir'))
    return PlaneGrid(k, grid.d, directions, grid.x_axis.copy(), profiles, np.full(len(directions), weight / len(directions)))


def xray(values: np.ndarray, grid: GridSpec, directions: int = MIN_DIRECTIONS, workers: int = 1) -> PlaneGrid:
    """T_{1,n}: ℝ² 与 ℝ³ 中的直线积分"""
    if grid.d not in (2, 3):
        raise KineticError(f'X 射线变换要求 n ∈ {{2, 3}}，收到 {grid.d}')
    _check_coverage(values, grid, directions)
    dirs = half_circle(directions) if grid.d == 2 else fibonacci_hemisphere(directions)
    measure = math.pi if grid.d == 2 else 2 * math.pi
    return _transform(values, grid, 1, dirs, measure, workers)


def radon3(values: np.ndarray, grid: GridSpec, directions: int = MIN_DIRECTIONS, workers: int = 1) -> PlaneGrid:
    """T_{2,3}: ℝ³ 中法向 ω、偏移 p 的平面积分"""
    if grid.d != 3:
        raise KineticError(f'radon3 要求三维网格，收到 d={grid.d}')
    _check_coverage(values, grid, directions)
    return _transform(values, grid, 2, fibonacci_hemisphere(directions), 2 * math.pi, workers)


# ═══════════════════════════════════════════════════
# HLS 双线性型与 Drury 比值
# ═══════════════════════════════════════════════════


def cell_average(lam: float, d: int, h: float) -> float:
    """(1/hᵈ)∫_{[−h/2,h/2]ᵈ} |z|^{−λ} dz

    立方体分成 2d 个棱锥 {u_d ≥ |u_i|}，u = u_d·(a, 1)：
    每个棱锥的积分 = (1/2)^{d−λ}/(d−λ) · ∫_{[−1,1]^{d−1}} (1+|a|²)^{−λ/2} da。
    """
    if d == 1:
        face = 1.0
    elif d == 2:
        face, _ = integrate.quad(lambda a: (1 + a * a) ** (-lam / 2), -1.0, 1.0)
    else:
        face, _ = integrate.dblquad(lambda b, a: (1 + a * a + b * b) ** (-lam / 2), -1.0, 1.0, -1.0, 1.0)
    unit = 2 * d * 0.5 ** (d - lam) / (d - lam) * face
    return unit * h ** (-lam)


def hls_form(values: np.ndarray, grid: GridSpec, lam: float) -> float:
    """∬ g(x) g(y) |x−y|^{−λ} dx dy"""
    if not 0 < lam < grid.d:
        raise KineticError(f'λ 必须在 (0, {grid.d}) 之间，收到 {lam}', details={'lambda': lam})
    n2 = 2 * grid.n
    lattice = np.fft.fftfreq(n2, 1.0 / n2) * grid.h
    mesh = np.meshgrid(*([lattice] * grid.d), indexing='ij')
    dist = np.sqrt(sum(np.square(m) for m in mesh))
    with np.errstate(divide='ignore'):
        kernel = dist ** (-lam)
    kernel[(0,) * grid.d] = cell_average(lam, grid.d, grid.h)
    padded = np.zeros((n2,) * grid.d)
    padded[(slice(0, grid.n),) * grid.d] = np.real(values)
    conv = sfft.irfftn(sfft.rfftn(padded) * sfft.rfftn(kernel), s=padded.shape)
    inner = conv[(slice(0, grid.n),) * grid.d]
    return float(np.sum(np.real(values) * inner) * grid.cell_volume**2)


@dataclass
class DruryReport:
    """‖T_{2,3}g‖² / ∬ g g |x−y|^{−1} 在数据集上的比值"""

    ratios: dict[str, float]
    directions: int
    reference: float = math.pi
    tol: float = 0.02

    @property
    def constant(self) -> float:
        return float(np.mean(list(self.ratios.values())))

    @property
    def spread(self) -> float:
        vals = np.array(list(self.ratios.values()))
        return float((vals.max() - vals.min()) / vals.mean())

    @property
    def passed(self) -> bool:
        return self.spread <= self.tol

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), 'constant': self.constant, 'spread': self.spread, 'passed': self.passed}


def drury_ratio(values: np.ndarray, grid: GridSpec, directions: int = MIN_DIRECTIONS, workers: int = 1) -> float:
    plane = radon3(values, grid, directions, workers).l2_norm_sq()
    form = hls_form(values, grid, 1.0)
    if form <= 0:
        raise KineticError('HLS 双线性型非正，数据须非负且非零')
    return plane / form


def drury_check(
    corpus: Sequence[tuple[str, np.ndarray]],
    grid: GridSpec,
    directions: int = MIN_DIRECTIONS,
    tol: float = 0.02,
    workers: int = 1,
) -> DruryReport:
    if len(corpus) < 3:
        raise KineticError(f'Drury 检验需要至少 3 个数据，收到 {len(corpus)}')
    ratios: dict[str, float] = {}
    for label, values in corpus:
        if float(np.min(values)) < 0:
            raise KineticError(f'{label}: Drury 检验要求非负数据')
        ratios[label] = drury_ratio(values, grid, directions, workers)
    report = DruryReport(ratios, directions, tol=tol)
    logger.info('Drury 比值: 常数 ≈ %.6g，离散度 %.3g%%', report.constant, 100 * report.spread)
    return report


def kinetic_corpus(grid: GridSpec) -> list[tuple[str, np.ndarray]]:
    """非负测试数据: 高斯、平移高斯、三高斯混合"""
    x = grid.x
    shift = grid.half_width / 8

    def bump(center: Sequence[float], sigma: float) -> np.ndarray:
        r2 = sum((xc - c) ** 2 for xc, c in zip(x, center, strict=True))
        return np.exp(-r2 / (2 * sigma**2))

    origin = [0.0] * grid.d
    mixture = bump([shift] + [0.0] * (grid.d - 1), 0.8) + 0.5 * bump([0.0, -shift] + [0.0] * (grid.d - 2), 1.1)
    mixture += 0.7 * bump([-shift / 2] * grid.d, 0.9)
    return [
        ('gaussian', bump(origin, 1.0)),
        ('shifted', bump([shift / 2] * grid.d, 1.0)),
        ('mixture', mixture),
    ]


# ═══════════════════════════════════════════════════
# 极值剖面与泛函 F
# ═══════════════════════════════════════════════════


def _taper(grid: GridSpec) -> np.ndarray:
    # 0.7L 到 0.9L 之间余弦过渡到 0
    r = grid.x_norm / grid.half_width
    ramp = np.clip((r - 0.7) / 0.2, 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * ramp))


def calibration_profile(grid: GridSpec, exponent: float) -> np.ndarray:
    return (1 + grid.x_norm**2) ** (-exponent) * _taper(grid)


def drouot_extremiser(grid: GridSpec, k: int) -> np.ndarray:
    """(1 + s² + |x|²)^{−(k+1)/2}，网格的首轴为 s"""
    return calibration_profile(grid, (k + 1) / 2)


def lebesgue_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    return float(np.sum(np.abs(values) ** p) * grid.cell_volume) ** (1 / p)


def calibrate_c_star(grid: GridSpec, exponent: float = 2.5, p: float = 1.2, directions: int = MIN_DIRECTIONS, workers: int = 1) -> float:
    """c_* = ‖T g*‖² / ‖g*‖²_{L^p}，使 F(g*) = 0"""
    profile = calibration_profile(grid, exponent)
    c_star = radon3(profile, grid, directions, workers).l2_norm_sq() / lebesgue_norm(profile, grid, p) ** 2
    logger.info('c_* 校准: 剖面指数 %.3g，c_* = %.6g', exponent, c_star)
    return c_star


def functional_parts(values: np.ndarray, grid: GridSpec, c_star: float, p: float = 1.2, directions: int = MIN_DIRECTIONS, workers: int = 1) -> tuple[float, float]:
    return c_star * lebesgue_norm(values, grid, p) ** 2, radon3(values, grid, directions, workers).l2_norm_sq()


def functional_F(values: np.ndarray, grid: GridSpec, c_star: float, p: float = 1.2, directions: int = MIN_DIRECTIONS, workers: int = 1) -> float:
    """𝓕(g) = c_*‖g‖²_{L^p} − ‖T_{2,3}g‖²"""
    first, second = functional_parts(values, grid, c_star, p, directions, workers)
    return first - second


# ═══════════════════════════════════════════════════
# 快扩散
# ═══════════════════════════════════════════════════


@dataclass
class DiffusionState:
    grid: GridSpec
    u: np.ndarray
    time: float = 0.0
    dt: float = 1e-3
    exponent: float = FAST_DIFFUSION_EXPONENT
    steps: int = 0

    def __post_init__(self) -> None:
        self.u = np.asarray(self.u, dtype=float)
        if self.u.shape != self.grid.shape:
            raise DiffusionError('扩散状态形状与网格不符', details={'shape': list(self.u.shape)})
        if not np.all(np.isfinite(self.u)) or float(self.u.min(initial=0.0)) < 0:
            raise DiffusionError('扩散状态必须有限且非负')

    @property
    def mass(self) -> float:
        return float(np.sum(self.u) * self.grid.cell_volume)


def _laplacian_of_power(u: np.ndarray, exponent: float, h: float) -> np.ndarray:
    # 零通量边界（边值复制），整体求和严格为零
    w = np.power(u, exponent)
    padded = np.pad(w, 1, mode='edge')
    lap = -2 * u.ndim * w
    for axis in range(u.ndim):
        for lo, hi in ((2, None), (0, -2)):
            index = tuple(slice(lo, hi) if a == axis else slice(1, -1) for a in range(u.ndim))
            lap = lap + padded[index]
    return lap / h**2


def stability_bound(state: DiffusionState, floor: float = 1e-12) -> float:
    """Δt ≤ h²/(2d·m·max((u+floor)^{m−1}))"""
    factor = float(np.max(np.power(state.u + floor, state.exponent - 1)))
    return state.grid.h**2 / (2 * state.grid.d * state.exponent * factor)


def fast_diffusion_step(state: DiffusionState, floor: float = 1e-12, max_halvings: int = 40) -> DiffusionState:
    """一步 u ← u + Δt·Δ(u^m)，产生负值则拒步减半"""
    dt = min(state.dt, stability_bound(state, floor))
    lap = _laplacian_of_power(state.u, state.exponent, state.grid.h)
    for _ in range(max_halvings + 1):
        candidate = state.u + dt * lap
        if float(candidate.min()) >= 0:
            return replace(state, u=candidate, time=state.time + dt, dt=state.dt, steps=state.steps + 1)
        dt /= 2
    raise DiffusionError(
        f'减半 {max_halvings} 次后仍产生负值',
        details={'time': state.time, 'min': float((state.u + dt * lap).min())},
    )


@dataclass
class MonotoneReport:
    """快扩散下 F(u(t)) 的单调性: trace 的 t 为步序号，物理时间在 times"""

    trace: QTrace
    times: list[float]
    mass_drift: float
    min_value: float
    tol: float
    violations: list[int] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and self.min_value >= 0

    def to_dict(self) -> dict[str, Any]:
        return {
            'theorem': self.trace.theorem,
            'F': self.trace.values.tolist(),
            'times': self.times,
            'mass_drift': self.mass_drift,
            'min_value': self.min_value,
            'tol': self.tol,
            'violations': self.violations,
            'passed': self.passed,
        }


def compact_bump(grid: GridSpec, radius: float | None = None, center: Sequence[float] | None = None) -> np.ndarray:
    """(1 − |x−c|²/R²)²₊"""
    r_max = radius or grid.half_width / 2
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    r2 = sum((xc - cc) ** 2 for xc, cc in zip(grid.x, c, strict=True))
    return np.clip(1 - r2 / r_max**2, 0.0, None) ** 2


def ccl_check(
    g0: np.ndarray,
    grid: GridSpec,
    steps: int = 50,
    c_star: float | None = None,
    dt: float = 1e-3,
    floor: float = 1e-12,
    max_halvings: int = 40,
    mass_tol: float = 0.005,
    monotone_tol: float = 1e-6,
    calibration_exponent: float = 2.5,
    directions: int = MIN_DIRECTIONS,
    workers: int = 1,
    progress: bool = False,
) -> MonotoneReport:
    """沿 ∂_t u = Δ(u^{3/5}) 逐个接受步计算 F(u(t))，检验非增"""
    if grid.d != 3:
        raise KineticError('快扩散检验在 ℝ³ 网格上进行')
    if steps < MIN_T_POINTS - 1:
        raise KineticError(f'快扩散步数至少为 {MIN_T_POINTS - 1}，收到 {steps}', details={'steps': steps})
    if c_star is None:
        c_star = calibrate_c_star(grid, calibration_exponent, directions=directions, workers=workers)
    state = DiffusionState(grid, g0, dt=dt)
    mass0 = state.mass
    if mass0 <= 0:
        raise DiffusionError('初值质量必须为正')
    first0, second0 = functional_parts(state.u, grid, c_star, directions=directions, workers=workers)
    values = [first0 - second0]
    times = [0.0]
    drift = 0.0
    min_value = float(state.u.min())
    for _ in progress_iter(range(steps), total=steps, desc='fast-diffusion', enabled=progress):
        state = fast_diffusion_step(state, floor, max_halvings)
        drift = max(drift, abs(state.mass - mass0) / mass0)
        if drift > mass_tol:
            raise DiffusionError(f'质量漂移 {drift:.3%} 超过 {mass_tol:.1%}', details={'time': state.time, 'drift': drift})
        min_value = min(min_value, float(state.u.min()))
        values.append(functional_F(state.u, grid, c_star, directions=directions, workers=workers))
        times.append(state.time)
    tol = monotone_tol * max(first0, 1e-300)
    diffs = np.diff(values)
    violations = [int(i) + 1 for i in np.nonzero(diffs > tol)[0]]
    if violations:
        logger.warning('F 在第 %s 步上升（容差 %.3g）', violations[:5], tol)
    trace = QTrace(
        'ccl',
        np.arange(len(values), dtype=float),
        np.array(values),
        np.full(len(values), tol),
        constants={'c_star': c_star, 'exponent': state.exponent, 'p': 1.2},
        grid=grid.to_dict(),
        extra={'time': times, 'mass_drift': drift},
    )
    logger.info('快扩散 %d 步: t = %.3g，质量漂移 %.2e，违例 %d', steps, state.time, drift, len(violations))
    return MonotoneReport(trace, times, drift, min_value, tol, violations)


# ═══════════════════════════════════════════════════
# 检查点
# ═══════════════════════════════════════════════════


def save_checkpoint(state: DiffusionState, path: str) -> str:
    """平面二进制 (<f8, C 序) + JSON 旁注文件"""
    payload = np.ascontiguousarray(state.u, dtype='<f8')
    atomic_write_bytes(path, payload.tobytes(), logger=logger)
    sidecar = {
        'grid': state.grid.to_dict(),
        'time': state.time,
        'dt': state.dt,
        'exponent': state.exponent,
        'steps': state.steps,
        'shape': list(payload.shape),
        'dtype': '<f8',
        'digest': array_digest(payload),
    }
    atomic_write(path + '.json', json.dumps(sidecar, ensure_ascii=False, indent=2), logger=logger)
    return path


def load_checkpoint(path: str) -> DiffusionState:
    meta = json.loads(safe_read_file(path + '.json', logger=logger))
    if not os.path.exists(path):
        raise FileException(f'检查点数据缺失: {path}', details={'filepath': path})
    with open(path, 'rb') as f:
        raw = f.read()
    u = np.frombuffer(raw, dtype=meta['dtype']).reshape(meta['shape']).copy()
    if array_digest(u) != meta['digest']:
        raise FileException(f'检查点校验失败: {path}', suggestion='文件已损坏，请重新运行', details={'filepath': path})
    grid = GridSpec(**meta['grid'])
    return DiffusionState(grid, u, meta['time'], meta['dt'], meta['exponent'], meta['steps'])
