#!/usr/bin/env python3
"""
闭式核 K(ξ)、常数表与多线性泛函 𝕴_m
==================================

𝕴_m(f) = ∫ |Π(f)^(ξ)|² K(ξ) dξ，ξ = (ξ_1, …, ξ_m) ∈ (ℝ^d)^m。
流参数 t 以权重 e^{−2tΣ disp(ξ_j)} 进入；Π 为普通张量积（Schrödinger）、
D^{1/2} 张量积（波动）或 φ(D)^{1/2} 张量积（Klein–Gordon）。

张量格点求积: 先按相对阈值剪去可忽略的格点，外层枚举前 m−2 个变量，
最后两个变量按块向量化；误差估计为粗化因子 c 与 2c 两级结果之差。
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import special

from dispflow.exceptions import BudgetError, FamilyError
from dispflow.spectral import Field, phi
from dispflow.utils import parallel_map

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

FAMILY_TAGS = ('schrodinger', 'wave', 'klein_gordon')
MAX_TENSOR_DIM = 6
MAX_EVALUATIONS = 4e10

# 已知最优 Strichartz 常数
SCHRODINGER_STRICHARTZ = {(6, 6, 1): 12 ** (-1 / 12), (8, 4, 1): 2 ** (-1 / 4), (4, 4, 2): 2 ** (-1 / 2)}
WAVE_STRICHARTZ = {(6, 2): (2 * math.pi) ** (-1 / 6), (4, 3): (2 * math.pi) ** (-1 / 4)}
KG_STRICHARTZ = {2: 2 ** (-1 / 4), 3: (2 * math.pi) ** (-1 / 4)}
KG_POINTWISE = {2: 1 / math.sqrt(2), 3: 1.0}


def sphere_area(k: int) -> float:
    """|𝕊^{k−1}| = 2π^{k/2}/Γ(k/2)，即 ℝ^k 中单位球面的面积"""
    if k < 1:
        raise FamilyError(f'球面维数参数必须 ≥ 1，收到 {k}')
    return float(2 * math.pi ** (k / 2) / special.gamma(k / 2))


@dataclass(frozen=True)
class Family:
    """方程族及其 (m, d)"""

    tag: str
    m: int
    d: int

    def __post_init__(self) -> None:
        if self.tag not in FAMILY_TAGS:
            raise FamilyError(f'未知的方程族: {self.tag}', details={'tag': self.tag})
        if not self.admissible():
            raise FamilyError(
                f'{self.tag} 不允许 (m, d) = ({self.m}, {self.d})',
                details={'tag': self.tag, 'm': self.m, 'd': self.d},
            )

    def admissible(self) -> bool:
        m, d = self.m, self.d
        if m >= 4 or d > 3 or d < 1:
            return False
        if self.tag == 'schrodinger':
            return (d >= 2 and m >= 2) or (m, d) == (3, 1)
        if self.tag == 'wave':
            return (d >= 3 and m >= 2) or (d == 2 and m >= 3)
        return m == 2 and d >= 2

    @property
    def beta(self) -> float:
        """核的指数 β"""
        m, d = self.m, self.d
        if self.tag == 'schrodinger':
            return (d * (m - 1) - 2) / 2
        if self.tag == 'wave':
            return ((d - 1) * (m - 1) - 2) / 2
        return (d - 2) / 2

    @property
    def dispersion(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.tag == 'schrodinger':
            return np.square
        if self.tag == 'wave':
            return lambda r: r
        return phi

    def label(self) -> str:
        return f'{self.tag}(m={self.m}, d={self.d})'


# ═══════════════════════════════════════════════════
# 核
# ═══════════════════════════════════════════════════


def _split(xi: Sequence[np.ndarray] | np.ndarray, m: int) -> list[np.ndarray]:
    if isinstance(xi, np.ndarray) and xi.ndim >= 2 and xi.shape[-2] == m:
        return [xi[..., j, :] for j in range(m)]
    parts = [np.asarray(v, dtype=float) for v in xi]
    if len(parts) != m:
        raise FamilyError(f'核需要 {m} 个频率向量，收到 {len(parts)}')
    return parts


def _clamped_power(base: np.ndarray, exponent: float) -> np.ndarray:
    # 0⁰ := 1；舍入误差产生的微小负底数截断为 0
    return np.power(np.maximum(base, 0.0), exponent)


def kernel(family: Family, xi: Sequence[np.ndarray] | np.ndarray) -> np.ndarray:
    """闭式核 K(ξ_1, …, ξ_m)，对最后一维（分量）求值并广播其余维"""
    parts = _split(xi, family.m)
    if family.tag == 'schrodinger':
        base = sum(np.sum((a - b) ** 2, axis=-1) for a, b in itertools.combinations(parts, 2))
        return _clamped_power(np.asarray(base), family.beta)
    if family.tag == 'wave':
        norms = [np.linalg.norm(p, axis=-1) for p in parts]
        base = sum(
            norms[i] * norms[j] - np.sum(parts[i] * parts[j], axis=-1) for i, j in itertools.combinations(range(family.m), 2)
        )
        return _clamped_power(np.asarray(base), family.beta)
    a, b = parts
    phase = phi(np.linalg.norm(a, axis=-1)) * phi(np.linalg.norm(b, axis=-1)) - np.sum(a * b, axis=-1)
    return _clamped_power(phase - 1.0, family.beta) / np.sqrt(phase + 1.0)


def kg_bound(d: int) -> float:
    """逐点上界 C̃_d"""
    try:
        return KG_POINTWISE[d]
    except KeyError as e:
        raise FamilyError(f'C̃_d 仅对 d ∈ {{2, 3}} 给出，收到 d={d}') from e


def sample_kg_bound(d: int, count: int = 10_000, seed: int = 0, scale: float = 4.0) -> dict[str, Any]:
    """在随机频率对上检查 K(ξ) ≤ C̃_d"""
    family = Family('klein_gordon', 2, d)
    rng = np.random.default_rng(seed)
    # 对数分布的模长覆盖 |ξ| ≪ 1 与 |ξ| ≫ 1
    radii = np.exp(rng.uniform(-4.0, math.log(scale) + 2.0, size=(count, 2, 1)))
    directions = rng.normal(size=(count, 2, d))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    pairs = radii * directions
    pairs[: min(4, count)] = 0.0
    values = kernel(family, pairs)
    bound = kg_bound(d)
    worst = float(values.max())
    return {'d': d, 'count': count, 'seed': seed, 'max_kernel': worst, 'bound': bound, 'ok': worst <= bound + 1e-12}


# ═══════════════════════════════════════════════════
# 常数表
# ═══════════════════════════════════════════════════


@dataclass
class ConstantsTable:
    """所有命名常数（均为严格正数）"""

    family: str
    m: int
    d: int
    beta: float
    S: float | None = None
    A: float | None = None
    W: float | None = None
    beta_factors: list[float] = field(default_factory=list)
    kg_q: float | None = None
    kg_pointwise: float | None = None
    ot: float | None = None
    strichartz: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def wave_a_constant(m: int, d: int) -> tuple[float, list[float]]:
    """A(m,d) 及其 Beta 因子 B(d−1, β(j)+1)，j = 2..m−1"""
    area = sphere_area(d)
    if m == 2:
        return area / 2 ** (d - 2), []
    beta = ((d - 1) * (m - 1) - 2) / 2
    factors = [float(special.beta(d - 1, ((d - 1) * (j - 1) - 2) / 2 + 1)) for j in range(2, m)]
    return area ** (m - 1) / 2 ** (2 * beta + 1) * math.prod(factors), factors


def constants(family: str, m: int, d: int, pq: tuple[float, ...] | None = None) -> ConstantsTable:
    """按闭式计算常数表；(m,d) 须对该族可容许"""
    fam = Family(family, m, d)
    table = ConstantsTable(family=family, m=m, d=d, beta=fam.beta)
    if family == 'schrodinger':
        table.S = sphere_area((m - 1) * d) / (2 * m ** ((d * m - 2) / 2) * (2 * math.pi) ** ((2 * m - 1) * d - 1))
        if d >= 2:
            table.ot = sphere_area(d) / (4 * (2 * math.pi) ** (d - 1))
        for (p, q, dim), value in SCHRODINGER_STRICHARTZ.items():
            if dim == d:
                table.strichartz[f'C_{p},{q}'] = value
    elif family == 'wave':
        table.A, table.beta_factors = wave_a_constant(m, d)
        table.W = 2**fam.beta * table.A / (2 * math.pi) ** ((2 * m - 1) * d - 1)
        for (p, dim), value in WAVE_STRICHARTZ.items():
            if dim == d:
                table.strichartz[f'C_{p}'] = value
    else:
        table.kg_q = sphere_area(d) / (2 ** ((d - 1) / 2) * (2 * math.pi) ** (3 * d - 1))
        if d in KG_POINTWISE:
            table.kg_pointwise = KG_POINTWISE[d]
            table.strichartz[f'C_{d}'] = KG_STRICHARTZ[d]
    if pq is not None:
        table.strichartz['requested'] = strichartz_constant(family, pq)
    return table


def strichartz_constant(family: str, key: tuple[float, ...]) -> float:
    """查表: Schrödinger (p,q,d)、波动 (p,d)、Klein–Gordon (d,)"""
    table: dict[Any, float]
    if family == 'schrodinger':
        table = SCHRODINGER_STRICHARTZ
    elif family == 'wave':
        table = WAVE_STRICHARTZ
    else:
        table = {(d,): c for d, c in KG_STRICHARTZ.items()}
    normalized = tuple(int(k) if float(k).is_integer() else k for k in key)
    if normalized not in table:
        raise FamilyError(f'{family} 没有已知的最优常数 {key}', details={'key': list(key)})
    return table[normalized]


# ═══════════════════════════════════════════════════
# 张量格点求积
# ═══════════════════════════════════════════════════


@dataclass
class IntegralResult:
    value: float
    error: float
    details: dict[str, Any] = field(default_factory=dict)


def _lattice(fhat: Field, family: Family, t: float, coarsen: int, prune_tol: float) -> tuple[np.ndarray, np.ndarray, float]:
    """剪枝后的 (格点 (N,d), 权重 (N,), 单元体积)"""
    grid = fhat.grid
    start = (grid.n // 2) % coarsen
    index = (slice(start, None, coarsen),) * grid.d
    r = grid.xi_norm[index]
    weights = np.abs(fhat.values[index]) ** 2
    if family.tag == 'wave':
        weights = weights * r
    elif family.tag == 'klein_gordon':
        weights = weights * phi(r)
    weights = weights * np.exp(-2.0 * t * family.dispersion(r))
    points = np.stack([c[index] for c in grid.xi], axis=-1).reshape(-1, grid.d)
    weights = weights.ravel()
    top = float(weights.max(initial=0.0))
    if top == 0.0:
        return points[:0], weights[:0], (grid.dxi * coarsen) ** grid.d
    keep = weights > prune_tol * top
    return points[keep], weights[keep], (grid.dxi * coarsen) ** grid.d


def _kernel_is_constant(family: Family) -> bool:
    return family.tag in ('schrodinger', 'wave') and family.beta == 0


def _tensor_sum(
    points: np.ndarray,
    weights: np.ndarray,
    m: int,
    kernel_fn: Callable[[list[np.ndarray]], np.ndarray],
    block_elements: int,
    workers: int,
) -> float:
    count = weights.size
    if count == 0:
        return 0.0
    block = max(1, block_elements // max(count, 1))
    starts = list(range(0, count, block))

    def pair_sum(fixed: tuple[int, ...], start: int) -> float:
        a = points[start : start + block]
        xi = [np.broadcast_to(points[i], (1, 1, points.shape[1])) for i in fixed]
        xi += [a[:, None, :], points[None, :, :]]
        values = kernel_fn(xi) * weights[start : start + block, None] * weights[None, :]
        prefix = math.prod(float(weights[i]) for i in fixed)
        return prefix * float(values.sum())

    jobs = [(fixed, start) for fixed in itertools.product(range(count), repeat=m - 2) for start in starts]
    partials = parallel_map(lambda job: pair_sum(*job), jobs, workers=workers)
    return float(math.fsum(partials))


def _integrate(
    fhat: Field,
    family: Family,
    t: float,
    kernel_fn: Callable[[list[np.ndarray]], np.ndarray] | None,
    coarsen: int,
    prune_tol: float,
    block_elements: int,
    workers: int,
) -> tuple[float, int]:
    points, weights, cell = _lattice(fhat, family, t, coarsen, prune_tol)
    m = family.m
    evaluations = float(weights.size) ** m
    if evaluations > MAX_EVALUATIONS:
        raise BudgetError(
            f'张量求积需要 {evaluations:.3g} 次核求值，超出上限 {MAX_EVALUATIONS:.0e}',
            suggestion='增大 Multilinear.coarsen 或 prune_tol',
            details={'points': int(weights.size), 'm': m},
        )
    if kernel_fn is None:
        total = float(math.fsum(weights)) ** m
    else:
        total = _tensor_sum(points, weights, m, kernel_fn, block_elements, workers)
    return total * cell**m, int(weights.size)


def _check_budget(fhat: Field, family: Family) -> None:
    if fhat.grid.d != family.d:
        raise FamilyError(f'数据维数 {fhat.grid.d} 与方程族维数 {family.d} 不符')
    if family.m * family.d > MAX_TENSOR_DIM:
        raise BudgetError(
            f'm·d = {family.m * family.d} 超出张量求积上限 {MAX_TENSOR_DIM}',
            details={'m': family.m, 'd': family.d},
        )


def _two_level(
    fhat: Field,
    family: Family,
    t: float,
    kernel_fn: Callable[[list[np.ndarray]], np.ndarray] | None,
    coarsen: int,
    prune_tol: float,
    block_elements: int,
    workers: int,
) -> IntegralResult:
    fine, points = _integrate(fhat, family, t, kernel_fn, coarsen, prune_tol, block_elements, workers)
    coarse, _ = _integrate(fhat, family, t, kernel_fn, 2 * coarsen, prune_tol, block_elements, workers)
    logger.debug('%s t=%.4g: I=%.6e (粗化 %d, %d 点)，两级差 %.2e', family.label(), t, fine, coarsen, points, abs(fine - coarse))
    return IntegralResult(fine, abs(fine - coarse), {'points': points, 'coarsen': coarsen, 't': t})


def i_m(
    fhat: Field,
    family: Family,
    t: float = 0.0,
    coarsen: int = 1,
    prune_tol: float = 1e-14,
    block_elements: int = 2_000_000,
    workers: int = 1,
) -> IntegralResult:
    """𝕴_m(e^{−t·disp}f) 的张量格点求积及其误差估计"""
    fhat = fhat.to_frequency()
    _check_budget(fhat, family)
    kernel_fn = None if _kernel_is_constant(family) else (lambda xi: kernel(family, xi))
    return _two_level(fhat, family, t, kernel_fn, coarsen, prune_tol, block_elements, workers)


def kg_defect(
    fhat: Field,
    d: int,
    t: float = 0.0,
    coarsen: int = 1,
    prune_tol: float = 1e-14,
    block_elements: int = 2_000_000,
    workers: int = 1,
) -> IntegralResult:
    """R(t) 的直接积分: 核换成 C̃_d − K(ξ)"""
    family = Family('klein_gordon', 2, d)
    fhat = fhat.to_frequency()
    _check_budget(fhat, family)
    bound = kg_bound(d)
    return _two_level(
        fhat, family, t, lambda xi: bound - kernel(family, xi), coarsen, prune_tol, block_elements, workers
    )
