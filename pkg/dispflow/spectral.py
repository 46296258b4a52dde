#!/usr/bin/env python3
"""
网格、离散 Fourier 变换与 Fourier 乘子传播子
============================================

约定: f̂(ξ) = ∫ f(x) e^{−ix·ξ} dx。离散化为居中 DFT 乘以 h^d，
逆变换乘以 h^{−d}，从而离散 Plancherel ‖f‖₂² = (2π)^{−d}‖f̂‖₂² 精确成立。

数组一律按"居中"顺序存放: 下标 0 对应 x = −L（或 ξ = −πn/(2L)）。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any, Literal

import numpy as np
from scipy import fft as sfft

from dispflow.exceptions import EvolutionError, FieldError, GridError
from dispflow.utils import memory_budget_bytes, parallel_map

if TYPE_CHECKING:
    from collections.abc import Callable, Iterator, Sequence

logger = logging.getLogger(__name__)

Side = Literal['space', 'frequency']

# 方程族 → (时间传播子, 单调性参数 t 的流)
PROPAGATORS = {'schrodinger': 'schrodinger', 'wave': 'half_wave', 'klein_gordon': 'kg_propagator'}
FLOWS = {'schrodinger': 'heat', 'wave': 'poisson', 'klein_gordon': 'kg_flow'}
# ‖u(s)‖_∞ ~ |s|^{−σ}，σ 与维数的关系
_DECAY_RATE = {'schrodinger': lambda d: d / 2, 'wave': lambda d: (d - 1) / 2, 'klein_gordon': lambda d: d / 2}


def phi(rho: np.ndarray | float) -> np.ndarray:
    """Klein–Gordon 色散关系 φ(ϱ) = √(1+ϱ²)"""
    return np.sqrt(1.0 + np.square(rho))


# ═══════════════════════════════════════════════════
# 网格与场
# ═══════════════════════════════════════════════════


@dataclass(frozen=True)
class GridSpec:
    """[−L, L)^d 上每轴 n 点的均匀网格及其频率格点 ξ_j = (π/L)·j"""

    d: int
    n: int
    half_width: float
    memory_budget_mb: float = 0.0

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise GridError(f'维数 d 必须为 1、2 或 3，收到 {self.d}', details={'d': self.d})
        if self.n < 4 or self.n & (self.n - 1):
            raise GridError(f'每轴点数 n 必须是 ≥4 的 2 的幂，收到 {self.n}', details={'n': self.n})
        if not (self.half_width > 0 and np.isfinite(self.half_width)):
            raise GridError(f'半宽 L 必须为正，收到 {self.half_width}', details={'half_width': self.half_width})
        need = self.size * np.dtype(np.complex128).itemsize
        budget = memory_budget_bytes(self.memory_budget_mb)
        if need > budget:
            raise GridError(
                f'网格 {self.n}^{self.d} 需要 {need / 2**20:.1f} MB，超出内存预算 {budget / 2**20:.1f} MB',
                details={'need_bytes': need, 'budget_bytes': budget},
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def dxi(self) -> float:
        return np.pi / self.half_width

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @property
    def freq_cell_volume(self) -> float:
        return self.dxi**self.d

    @cached_property
    def x_axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.h

    @cached_property
    def xi_axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dxi

    @cached_property
    def x(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.x_axis] * self.d), indexing='ij'))

    @cached_property
    def xi(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.xi_axis] * self.d), indexing='ij'))

    @cached_property
    def xi_norm(self) -> np.ndarray:
        return np.sqrt(sum(np.square(c) for c in self.xi))

    @cached_property
    def x_norm(self) -> np.ndarray:
        return np.sqrt(sum(np.square(c) for c in self.x))

    @property
    def origin_index(self) -> tuple[int, ...]:
        return (self.n // 2,) * self.d

    def to_dict(self) -> dict[str, Any]:
        return {'d': self.d, 'n': self.n, 'half_width': self.half_width}


def _check_values(values: np.ndarray, shape: tuple[int, ...], what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.complex128)
    if arr.shape != shape:
        raise FieldError(f'{what} 形状 {arr.shape} 与网格 {shape} 不符', details={'shape': arr.shape})
    if not np.all(np.isfinite(arr)):
        raise FieldError(f'{what} 含非有限值', details={'nonfinite': int(np.count_nonzero(~np.isfinite(arr)))})
    return arr


@dataclass
class Field:
    """网格上的复值采样，标记为空间侧或频率侧"""

    grid: GridSpec
    side: Side
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.side not in ('space', 'frequency'):
            raise FieldError(f'未知的侧别: {self.side}')
        self.values = _check_values(self.values, self.grid.shape, '场数据')

    def norm_l2(self) -> float:
        """f 的 L² 范数（频率侧按 Plancherel 换算）"""
        sq = float(np.sum(np.abs(self.values) ** 2))
        if self.side == 'space':
            return float(np.sqrt(sq * self.grid.cell_volume))
        return float(np.sqrt(sq * self.grid.freq_cell_volume / (2 * np.pi) ** self.grid.d))

    def scaled(self, factor: complex) -> Field:
        return Field(self.grid, self.side, self.values * factor)

    def to_frequency(self) -> Field:
        return self if self.side == 'frequency' else forward_transform(self)

    def to_space(self) -> Field:
        return self if self.side == 'space' else inverse_transform(self)


@dataclass
class SpaceTimeField:
    """时间网格 × 空间网格上的复值采样 u(s, x)

    decay_rate: ‖u(s)‖_∞ 的色散衰减指数 σ（未知时为 None），供时间尾部修正使用。
    """

    grid: GridSpec
    s: np.ndarray
    values: np.ndarray
    decay_rate: float | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.s = np.asarray(self.s, dtype=float).ravel()
        if self.s.size < 1:
            raise FieldError('时间网格为空')
        if self.s.size > 1:
            steps = np.diff(self.s)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
                raise FieldError('时间网格必须均匀且严格递增', details={'count': int(self.s.size)})
        self.values = _check_values(self.values, (self.s.size, *self.grid.shape), '时空场数据')

    @property
    def ds(self) -> float:
        return float(self.s[1] - self.s[0]) if self.s.size > 1 else 0.0

    def slice(self, k: int) -> Field:
        return Field(self.grid, 'space', self.values[k])


# ═══════════════════════════════════════════════════
# 离散 Fourier 变换
# ═══════════════════════════════════════════════════


def _centered_fft(values: np.ndarray, axes: Sequence[int], workers: int = 1) -> np.ndarray:
    shifted = sfft.ifftshift(values, axes=axes)
    return sfft.fftshift(sfft.fftn(shifted, axes=axes, workers=workers), axes=axes)


def _centered_ifft(values: np.ndarray, axes: Sequence[int], workers: int = 1) -> np.ndarray:
    shifted = sfft.ifftshift(values, axes=axes)
    return sfft.fftshift(sfft.ifftn(shifted, axes=axes, workers=workers), axes=axes)


def forward_transform(f: Field) -> Field:
    """f ↦ f̂，离散和乘以 h^d"""
    if f.side != 'space':
        raise FieldError('forward_transform 需要空间侧的场', details={'side': f.side})
    axes = tuple(range(f.grid.d))
    return Field(f.grid, 'frequency', _centered_fft(f.values, axes) * f.grid.cell_volume)


def inverse_transform(fhat: Field) -> Field:
    """f̂ ↦ f，离散逆变换乘以 h^{−d}"""
    if fhat.side != 'frequency':
        raise FieldError('inverse_transform 需要频率侧的场', details={'side': fhat.side})
    return Field(fhat.grid, 'space', inverse_values(fhat.values, fhat.grid))


def inverse_values(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """频率侧数组 → 空间侧；只变换末尾 d 个轴，前导轴（如 s 批）原样保留"""
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return _centered_ifft(values, axes) / grid.cell_volume


def _forward_values(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.d, values.ndim))
    return _centered_fft(values, axes) * grid.cell_volume


# ═══════════════════════════════════════════════════
# 乘子
# ═══════════════════════════════════════════════════


def symbol(name: str, grid: GridSpec, param: float = 0.0) -> np.ndarray:
    """命名符号在频率格点上的取值

    heat e^{−t|ξ|²} / schrodinger e^{−is|ξ|²} / poisson e^{−t|ξ|} / half_wave e^{is|ξ|}
    kg_flow e^{−tφ} / kg_propagator e^{isφ} / fractional |ξ|^α / kg_half (1+|ξ|²)^{1/4}
    """
    r = grid.xi_norm
    if name == 'heat':
        return np.exp(-param * r**2).astype(np.complex128)
    if name == 'schrodinger':
        return np.exp(-1j * param * r**2)
    if name == 'poisson':
        return np.exp(-param * r).astype(np.complex128)
    if name == 'half_wave':
        return np.exp(1j * param * r)
    if name == 'kg_flow':
        return np.exp(-param * phi(r)).astype(np.complex128)
    if name == 'kg_propagator':
        return np.exp(1j * param * phi(r))
    if name == 'fractional':
        with np.errstate(divide='ignore', invalid='ignore'):
            out = np.power(r, param).astype(np.complex128)
        if param == 0:
            out[...] = 1.0
        return out
    if name == 'kg_half':
        return ((1.0 + r**2) ** 0.25).astype(np.complex128)
    raise FieldError(f'未知的符号: {name}', suggestion='可用: heat/schrodinger/poisson/half_wave/kg_flow/kg_propagator/fractional/kg_half')


def apply_multiplier(
    fhat: Field,
    multiplier: str | np.ndarray | Callable[[tuple[np.ndarray, ...]], np.ndarray],
    param: float = 0.0,
    zero_override: float | None = None,
) -> Field:
    """格点上的逐点乘积；原点处的奇异值需显式覆盖"""
    if fhat.side != 'frequency':
        raise FieldError('apply_multiplier 需要频率侧的场', details={'side': fhat.side})
    grid = fhat.grid
    if isinstance(multiplier, str):
        values = symbol(multiplier, grid, param)
    elif callable(multiplier):
        with np.errstate(divide='ignore', invalid='ignore'):
            values = np.asarray(multiplier(grid.xi), dtype=np.complex128)
    else:
        values = np.asarray(multiplier, dtype=np.complex128)
    values = np.broadcast_to(values, grid.shape).copy()
    origin = grid.origin_index
    if not np.isfinite(values[origin]):
        if zero_override is not None:
            values[origin] = zero_override
        elif fhat.values[origin] != 0:
            raise FieldError(
                '符号在 ξ=0 奇异而数据在该点非零，且未提供零频覆盖值',
                suggestion='请传入 zero_override',
                details={'value_at_origin': complex(fhat.values[origin]).__repr__()},
            )
        else:
            values[origin] = 0.0
    if not np.all(np.isfinite(values)):
        raise FieldError('符号在非零频率处出现非有限值')
    return Field(grid, 'frequency', fhat.values * values)


# ═══════════════════════════════════════════════════
# 时间演化
# ═══════════════════════════════════════════════════


def dispersive_decay_rate(family: str, d: int) -> float:
    try:
        return float(_DECAY_RATE[family](d))
    except KeyError as e:
        raise FieldError(f'未知的方程族: {family}') from e


def effective_radius(fhat: Field, energy_fraction: float = 1e-8) -> float:
    """频率半径 ρ，使 |ξ| > ρ 处的 ‖f̂‖² 比例不超过 energy_fraction"""
    weights = np.abs(fhat.values.ravel()) ** 2
    total = weights.sum()
    if total == 0:
        return 0.0
    r = fhat.grid.xi_norm.ravel()
    order = np.argsort(r)
    tail = total - np.cumsum(weights[order])
    idx = int(np.searchsorted(-tail, -energy_fraction * total))
    idx = min(idx, r.size - 1)
    return float(r[order][idx])


def _group_speed(family: str, radius: float) -> float:
    if family == 'schrodinger':
        return 2.0 * radius
    if family == 'wave':
        return 1.0
    if family == 'klein_gordon':
        return float(radius / phi(radius))
    raise FieldError(f'未知的方程族: {family}')


def _phase_rate(family: str, radius: float) -> float:
    if family == 'schrodinger':
        return radius**2
    if family == 'wave':
        return radius
    return float(phi(radius))


def check_s_grid(fhat: Field, family: str, s_grid: np.ndarray, energy_fraction: float = 1e-8) -> None:
    """色散预算（群速度 × |s| ≤ L）与 Nyquist 条件（相位增量 ≤ π）"""
    s_grid = np.asarray(s_grid, dtype=float)
    radius = effective_radius(fhat, energy_fraction)
    if radius == 0.0:
        return
    travel = float(np.max(np.abs(s_grid))) * _group_speed(family, radius)
    if travel > fhat.grid.half_width * (1 + 1e-9):
        raise EvolutionError(
            f'时间窗口超出色散预算: 传播距离 {travel:.3g} > L = {fhat.grid.half_width}',
            details={'travel': travel, 'effective_radius': radius},
        )
    if s_grid.size > 1:
        increment = float(s_grid[1] - s_grid[0]) * _phase_rate(family, radius)
        if increment > np.pi:
            raise EvolutionError(
                f's 网格过粗: 最大相位增量 {increment:.3g} > π',
                details={'phase_increment': increment, 'effective_radius': radius},
            )


def default_s_grid(fhat: Field, family: str, count: int = 129, energy_fraction: float = 1e-8) -> np.ndarray:
    """关于 0 对称的均匀时间网格，窗口取色散预算的 98%"""
    radius = effective_radius(fhat, energy_fraction)
    speed = _group_speed(family, max(radius, 1e-12))
    s_max = 0.98 * fhat.grid.half_width / speed
    if count % 2 == 0:
        count += 1
    rate = _phase_rate(family, radius)
    if rate > 0:
        # Nyquist 要求的最少点数
        needed = int(np.ceil(2 * s_max * rate / (0.5 * np.pi))) + 1
        if needed > count:
            count = needed + (1 - needed % 2)
    return np.linspace(-s_max, s_max, count)


def propagator_symbol(family: str, grid: GridSpec, s: float) -> np.ndarray:
    try:
        return symbol(PROPAGATORS[family], grid, s)
    except KeyError as e:
        raise FieldError(f'未知的传播子族: {family}', suggestion='可用: schrodinger / wave / klein_gordon') from e


def iter_slices(
    f: Field,
    family: str,
    s_grid: Sequence[float] | np.ndarray,
    workers: int = 1,
) -> Iterator[tuple[float, np.ndarray]]:
    """逐片产出 (s, u(s,·))，大网格时避免整体驻留内存"""
    fhat = f.to_frequency()
    s_values = [float(s) for s in np.asarray(s_grid, dtype=float)]
    chunk = max(1, workers)
    for start in range(0, len(s_values), chunk):
        block = s_values[start : start + chunk]
        slices = parallel_map(
            lambda s: inverse_values(fhat.values * propagator_symbol(family, fhat.grid, s), fhat.grid),
            block,
            workers=workers,
        )
        yield from zip(block, slices, strict=True)


def evolve(
    f: Field,
    family: str,
    s_grid: Sequence[float] | np.ndarray,
    energy_fraction: float = 1e-8,
    workers: int = 1,
    check: bool = True,
) -> SpaceTimeField:
    """u(s,·) = e^{isL} f，每片为乘子 + 逆变换"""
    fhat = f.to_frequency()
    s_arr = np.asarray(s_grid, dtype=float).ravel()
    if check:
        check_s_grid(fhat, family, s_arr, energy_fraction)
    values = np.empty((s_arr.size, *fhat.grid.shape), dtype=np.complex128)
    for k, (_, u) in enumerate(iter_slices(fhat, family, s_arr, workers=workers)):
        values[k] = u
    return SpaceTimeField(fhat.grid, s_arr, values, decay_rate=dispersive_decay_rate(family, fhat.grid.d))


def flow(fhat: Field, family: str, t: float) -> Field:
    """单调性参数 t 的流: 热流 / Poisson 流 / Klein–Gordon 阻尼流"""
    return apply_multiplier(fhat.to_frequency(), FLOWS[family], t)


# ═══════════════════════════════════════════════════
# 张量积与典型初值
# ═══════════════════════════════════════════════════


def tensor(f: Field, g: Field) -> Field:
    """(f⊗g)(x, y) = f(x) g(y)，维数相加"""
    if f.side != g.side:
        raise FieldError('张量积两侧的侧别必须一致', details={'sides': [f.side, g.side]})
    if f.grid.n != g.grid.n or f.grid.half_width != g.grid.half_width:
        raise GridError('张量积要求相同的 n 与 L', details={'left': f.grid.to_dict(), 'right': g.grid.to_dict()})
    grid = GridSpec(f.grid.d + g.grid.d, f.grid.n, f.grid.half_width, f.grid.memory_budget_mb)
    return Field(grid, f.side, np.multiply.outer(f.values, g.values))


def make_extremiser(
    kind: str,
    grid: GridSpec,
    sigma: float = 1.0,
    a: float = 1.0,
    zero_override: float = 0.0,
) -> Field:
    """频率侧的典型初值

    gaussian(σ):     f(x) = e^{−|x|²/2σ²}，f̂ = (2πσ²)^{d/2} e^{−σ²|ξ|²/2}
    wave_extremiser: f̂ = e^{−a|ξ|}/|ξ|，原点取 zero_override
    kg_sequence(a):  f̂ = e^{−aφ(|ξ|)}/φ(|ξ|)
    """
    r = grid.xi_norm
    if kind == 'gaussian':
        if sigma <= 0:
            raise FieldError(f'高斯宽度必须为正，收到 {sigma}')
        values = (2 * np.pi * sigma**2) ** (grid.d / 2) * np.exp(-(sigma**2) * r**2 / 2)
    elif kind == 'wave_extremiser':
        if a <= 0:
            raise FieldError(f'波动极值函数的参数 a 必须为正，收到 {a}')
        with np.errstate(divide='ignore', invalid='ignore'):
            values = np.exp(-a * r) / r
        values[grid.origin_index] = zero_override
    elif kind == 'kg_sequence':
        if a <= 0:
            raise FieldError(f'kg_sequence 的参数 a 必须为正，收到 {a}', details={'a': a})
        values = np.exp(-a * phi(r)) / phi(r)
    else:
        raise FieldError(f'未知的极值函数类型: {kind}', suggestion='可用: gaussian / wave_extremiser / kg_sequence')
    return Field(grid, 'frequency', values.astype(np.complex128))


def gaussian_packet(
    grid: GridSpec,
    center: Sequence[float] | None = None,
    sigma: float = 1.0,
    momentum: Sequence[float] | None = None,
    amplitude: complex = 1.0,
) -> Field:
    """空间侧的平移/调制高斯 A·e^{−|x−c|²/2σ²}·e^{ik·x}"""
    c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
    k = np.zeros(grid.d) if momentum is None else np.asarray(momentum, dtype=float)
    r2 = sum((xc - cc) ** 2 for xc, cc in zip(grid.x, c, strict=True))
    phase = sum(xc * kc for xc, kc in zip(grid.x, k, strict=True))
    return Field(grid, 'space', amplitude * np.exp(-r2 / (2 * sigma**2)) * np.exp(1j * phase))


def corpus(grid: GridSpec, seeds: Sequence[int]) -> list[tuple[str, Field]]:
    """带固定种子的测试数据: 每个种子一个平移调制高斯与一个高斯混合"""
    members: list[tuple[str, Field]] = [('gaussian', gaussian_packet(grid))]
    spread = grid.half_width / 8
    for seed in seeds:
        rng = np.random.default_rng(seed)
        shifted = gaussian_packet(
            grid,
            center=rng.uniform(-spread, spread, grid.d),
            sigma=float(rng.uniform(0.8, 1.2)),
            momentum=rng.uniform(-0.5, 0.5, grid.d),
        )
        members.append((f'shifted-{seed}', shifted))
        mixture = np.zeros(grid.shape, dtype=np.complex128)
        for _ in range(3):
            bump = gaussian_packet(
                grid,
                center=rng.uniform(-spread, spread, grid.d),
                sigma=float(rng.uniform(0.7, 1.3)),
                momentum=rng.uniform(-0.5, 0.5, grid.d),
                amplitude=complex(rng.normal(), rng.normal()),
            )
            mixture += bump.values
        members.append((f'mixture-{seed}', Field(grid, 'space', mixture)))
    logger.debug('测试数据集: %d 个成员 (d=%d, n=%d)', len(members), grid.d, grid.n)
    return members
