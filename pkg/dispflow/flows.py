#!/usr/bin/env python3
"""
单调量 Q(t) 的装配与完全单调性检验
================================

每条迹 Q(t) = 第一项（常数 × 𝕴_m 或 L² 类范数）− 第二项（时空 Lebesgue 范数），
沿热流 / Poisson 流 / Klein–Gordon 阻尼流在均匀 t 网格上采样，
并携带逐点误差界（求积两级差 + 时间尾部界）。

完全单调性以交替前向差分 (−1)^j Δ^j Q ≥ 0 检验，允许量为 2^j·(tol + 误差界)。
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from dispflow.exceptions import FamilyError, TraceError, UnresolvableError
from dispflow.multilinear import Family, constants, i_m, kg_defect, strichartz_constant
from dispflow.norms import MixedNormSpec, NormValue, norm_from_powers, propagated_norm, sobolev_norm
from dispflow.spectral import Field, apply_multiplier, default_s_grid, flow, forward_transform, iter_slices, tensor
from dispflow.utils import parallel_map

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from dispflow.config import Config

logger = logging.getLogger(__name__)

MIN_T_POINTS = 8
# 单调量迹的选择器；一般指数流 'general' 由 pdeflow 提供
THEOREMS = ('qschro', 'strichartz', 'qot', 'qwave', 'wave-strichartz', 'qkg')


# ═══════════════════════════════════════════════════
# 数据类型
# ═══════════════════════════════════════════════════


@dataclass
class QTrace:
    """采样的单调量及其来源信息"""

    theorem: str
    t: np.ndarray
    values: np.ndarray
    err: np.ndarray
    first: np.ndarray | None = None
    second: np.ndarray | None = None
    constants: dict[str, Any] = field(default_factory=dict)
    grid: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        self.err = np.broadcast_to(np.asarray(self.err, dtype=float), self.t.shape).copy()
        check_t_grid(self.t)
        if self.values.shape != self.t.shape:
            raise TraceError('Q 值个数与 t 网格不符', details={'t': self.t.size, 'values': self.values.size})
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.err)):
            raise TraceError(f'{self.theorem}: 迹含非有限值')

    @property
    def spacing(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def scale(self) -> float:
        """第一项的量级（缺省时取 max|Q|）"""
        if self.first is not None and self.first.size:
            return float(np.max(np.abs(self.first)))
        return float(np.max(np.abs(self.values), initial=0.0))

    def header(self) -> dict[str, Any]:
        return {
            'theorem': self.theorem,
            'constants': self.constants,
            'grid': self.grid,
            'seed': self.seed,
            'extra': {k: v for k, v in self.extra.items() if not isinstance(v, np.ndarray)},
        }

    @classmethod
    def from_values(cls, t: Sequence[float] | np.ndarray, values: Sequence[float] | np.ndarray, theorem: str = 'synthetic', err: float = 0.0) -> QTrace:
        return cls(theorem=theorem, t=np.asarray(t, dtype=float), values=np.asarray(values, dtype=float), err=np.full(len(t), err))


@dataclass
class CMReport:
    """逐阶的交替差分判定；第 0 阶为 Q 自身的非负性"""

    max_order: int
    tol: float
    orders: list[dict[str, Any]]

    @property
    def passed(self) -> bool:
        return all(o['passed'] for o in self.orders)

    def verdicts(self) -> list[bool]:
        return [bool(o['passed']) for o in self.orders]

    def passed_to(self, order: int) -> bool:
        return all(o['passed'] for o in self.orders if o['order'] <= order)

    def to_dict(self) -> dict[str, Any]:
        return {**asdict(self), 'passed': self.passed}


@dataclass
class TraceOptions:
    """迹计算的数值参数"""

    s_count: int = 129
    energy_fraction: float = 1e-8
    fit_fraction: float = 0.25
    coarsen: int = 1
    prune_tol: float = 1e-14
    block_elements: int = 2_000_000
    unresolvable_fraction: float = 0.1
    workers: int = 1

    @classmethod
    def from_config(cls, config: Config) -> TraceOptions:
        spectral = config.get_spectral_config()
        ml = config.get_multilinear_config()
        return cls(
            s_count=spectral['s_count'],
            energy_fraction=spectral['energy_fraction'],
            fit_fraction=config.get_norms_config()['tail_fit_fraction'],
            coarsen=ml['coarsen'],
            prune_tol=ml['prune_tol'],
            block_elements=ml['block_elements'],
            unresolvable_fraction=config.get_flow_config()['unresolvable_fraction'],
            workers=config.get_run_config()['workers'],
        )

    def multilinear_kwargs(self) -> dict[str, Any]:
        return {'coarsen': self.coarsen, 'prune_tol': self.prune_tol, 'block_elements': self.block_elements}


def check_t_grid(t: np.ndarray) -> None:
    if t.size < MIN_T_POINTS:
        raise TraceError(f't 网格至少需要 {MIN_T_POINTS} 个点，收到 {t.size}', details={'count': int(t.size)})
    steps = np.diff(t)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
        raise TraceError('t 网格必须均匀且严格递增')


def default_t_grid(start: float = 0.05, stop: float = 1.6, count: int = 16) -> np.ndarray:
    return np.linspace(start, stop, count)


# ═══════════════════════════════════════════════════
# 迹装配
# ═══════════════════════════════════════════════════


def shared_s_grid(fhat: Field, family: str, t_grid: np.ndarray, options: TraceOptions) -> np.ndarray:
    # 最小 t 处的数据频率最宽，对所有 t 共用
    return default_s_grid(flow(fhat, family, float(t_grid[0])), family, options.s_count, options.energy_fraction)


def assemble_trace(
    theorem: str,
    t_grid: np.ndarray,
    point: Callable[[float], tuple[float, float, float]],
    options: TraceOptions,
    consts: dict[str, Any],
    grid: dict[str, Any],
) -> QTrace:
    """逐 t 计算 (第一项, 第二项, 误差界) 并组装迹"""
    t_grid = np.asarray(t_grid, dtype=float)
    check_t_grid(t_grid)
    rows = parallel_map(point, list(t_grid), workers=options.workers, desc=theorem, unit='t')
    first = np.array([r[0] for r in rows])
    second = np.array([r[1] for r in rows])
    err = np.array([r[2] for r in rows])
    trace = QTrace(theorem, t_grid, first - second, err, first, second, consts, grid)
    scale = trace.scale
    if scale > 0 and float(err.max()) > options.unresolvable_fraction * scale:
        raise UnresolvableError(
            f'{theorem}: 误差界 {err.max():.3g} 超过第一项量级的 {options.unresolvable_fraction:.0%}',
            details={'max_err': float(err.max()), 'scale': scale},
        )
    logger.info('%s: %d 个 t 点，max|Q| = %.3g，第一项量级 %.3g', theorem, t_grid.size, float(np.abs(trace.values).max()), scale)
    return trace


def _propagated(g: Field, family: str, s_grid: np.ndarray, spec: MixedNormSpec, options: TraceOptions) -> NormValue:
    return propagated_norm(g, family, s_grid, spec, fit_fraction=options.fit_fraction)


def q_schrodinger(f: Field, m: int, d: int, t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None) -> QTrace:
    """Q(t) = S(m,d)·𝕴_m(e^{tΔ}f) − ‖e^{isΔ}e^{tΔ}f‖^{2m}_{L^{2m}}"""
    options = options or TraceOptions()
    fam = Family('schrodinger', m, d)
    table = constants('schrodinger', m, d)
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'schrodinger', t_arr, options)
    spec = MixedNormSpec(2 * m, 2 * m)

    def point(t: float) -> tuple[float, float, float]:
        integral = i_m(fhat, fam, t, **options.multilinear_kwargs())
        norm = _propagated(flow(fhat, 'schrodinger', t), 'schrodinger', s_grid, spec, options)
        return table.S * integral.value, norm.power, table.S * integral.error + norm.power_bound

    return assemble_trace(f'qschro(m={m},d={d})', t_arr, point, options, table.to_dict(), grid_info(fhat, s_grid))


def q_strichartz(f: Field, pqd: tuple[int, int, int], t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None) -> QTrace:
    """Q(t) = C_{p,q}^p‖e^{tΔ}f‖₂^p − ‖e^{isΔ}e^{tΔ}f‖^p_{L^p_sL^q_x}

    (8,4,1) 同时经张量恒等式 Q_{8,4,1}[f] = Q_{4,4,2}[f⊗f] 计算，两条路径之差记入 extra。
    """
    options = options or TraceOptions()
    p, q, d = pqd
    const = strichartz_constant('schrodinger', pqd)
    fhat = f.to_frequency()
    if fhat.grid.d != d:
        raise FamilyError(f'数据维数 {fhat.grid.d} 与三元组 {pqd} 不符')
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'schrodinger', t_arr, options)
    spec = MixedNormSpec(p, q)

    def point(t: float) -> tuple[float, float, float]:
        g = flow(fhat, 'schrodinger', t)
        norm = _propagated(g, 'schrodinger', s_grid, spec, options)
        return const**p * g.norm_l2() ** p, norm.power, norm.power_bound

    trace = assemble_trace(f'strichartz({p},{q},{d})', t_arr, point, options, {f'C_{p},{q}': const}, grid_info(fhat, s_grid))
    if pqd == (8, 4, 1):
        c44 = strichartz_constant('schrodinger', (4, 4, 2))
        tensor_first, tensor_second = [], []
        for t in t_arr:
            g = flow(fhat, 'schrodinger', float(t))
            gg = tensor(g, g)
            tensor_first.append(c44**4 * gg.norm_l2() ** 4)
            tensor_second.append(_propagated(gg, 'schrodinger', s_grid, MixedNormSpec(4, 4), options).power)
        tensor_q = np.array(tensor_first) - np.array(tensor_second)
        assert trace.second is not None
        discrepancy = np.abs(trace.second - np.array(tensor_second)) / np.maximum(np.abs(trace.second), 1e-300)
        trace.extra['tensor_route'] = tensor_q.tolist()
        trace.extra['path_discrepancy'] = float(discrepancy.max())
        logger.info('(8,4,1) 两条路径第二项的最大相对差: %.3g', trace.extra['path_discrepancy'])
    return trace


def _ot_slice_energy(values: np.ndarray, grid: Any, d: int) -> float:
    density = Field(grid, 'space', np.abs(values) ** 2)
    weighted = apply_multiplier(forward_transform(density), 'fractional', (2 - d) / 2, zero_override=0.0)
    return weighted.norm_l2() ** 2


def q_ozawa_tsutsumi(f: Field, d: int, t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None) -> QTrace:
    """Q(t) = |𝕊^{d−1}|/(4(2π)^{d−1})·‖e^{tΔ}f‖⁴ − ‖(−Δ)^{(2−d)/4}|e^{isΔ}e^{tΔ}f|²‖²"""
    options = options or TraceOptions()
    table = constants('schrodinger', 2, d)
    if table.ot is None:
        raise FamilyError('Ozawa–Tsutsumi 常数要求 d ≥ 2')
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'schrodinger', t_arr, options)

    def point(t: float) -> tuple[float, float, float]:
        g = flow(fhat, 'schrodinger', t)
        powers = np.array([_ot_slice_energy(u, fhat.grid, d) for _, u in iter_slices(g, 'schrodinger', s_grid)])
        # 二次项按 L^1_s 组装，尺度不变性给出衰减指数 2
        norm = norm_from_powers(s_grid, powers, MixedNormSpec(1, 1), kappa=2.0, fit_fraction=options.fit_fraction)
        return table.ot * g.norm_l2() ** 4, norm.power, norm.power_bound

    return assemble_trace(f'qot(d={d})', t_arr, point, options, {'ot': table.ot}, grid_info(fhat, s_grid))


def q_wave(f: Field, m: int, d: int, t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None) -> QTrace:
    """Q(t) = W(m,d)·𝕴_m(e^{−tD}f) − ‖e^{isD}e^{−tD}f‖^{2m}_{L^{2m}}"""
    options = options or TraceOptions()
    fam = Family('wave', m, d)
    table = constants('wave', m, d)
    assert table.W is not None
    w_const = table.W
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'wave', t_arr, options)
    spec = MixedNormSpec(2 * m, 2 * m)

    def point(t: float) -> tuple[float, float, float]:
        integral = i_m(fhat, fam, t, **options.multilinear_kwargs())
        norm = _propagated(flow(fhat, 'wave', t), 'wave', s_grid, spec, options)
        return w_const * integral.value, norm.power, w_const * integral.error + norm.power_bound

    return assemble_trace(f'qwave(m={m},d={d})', t_arr, point, options, table.to_dict(), grid_info(fhat, s_grid))


def q_wave_strichartz(f: Field, pd: tuple[int, int], t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None) -> QTrace:
    """Q(t) = C_p^p‖e^{−tD}f‖^p_{Ḣ^{1/2}} − ‖e^{isD}e^{−tD}f‖^p_{L^p}，(p,d) ∈ {(6,2),(4,3)}"""
    options = options or TraceOptions()
    p, d = pd
    const = strichartz_constant('wave', pd)
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'wave', t_arr, options)
    spec = MixedNormSpec(p, p)

    def point(t: float) -> tuple[float, float, float]:
        g = flow(fhat, 'wave', t)
        norm = _propagated(g, 'wave', s_grid, spec, options)
        return const**p * sobolev_norm(g, 0.5) ** p, norm.power, norm.power_bound

    return assemble_trace(f'wave-strichartz({p},{d})', t_arr, point, options, {f'C_{p}': const}, grid_info(fhat, s_grid))


def q_klein_gordon(
    f: Field, d: int, t_grid: Sequence[float] | np.ndarray, options: TraceOptions | None = None
) -> tuple[QTrace, QTrace, QTrace]:
    """Klein–Gordon: (Q, Q₀, R)，R = (Q₀ − Q)/kg_q，另附直接积分 R_direct"""
    options = options or TraceOptions()
    fam = Family('klein_gordon', 2, d)
    table = constants('klein_gordon', 2, d)
    assert table.kg_q is not None
    kg_q = table.kg_q
    c4 = strichartz_constant('klein_gordon', (d,)) ** 4
    fhat = f.to_frequency()
    t_arr = np.asarray(t_grid, dtype=float)
    s_grid = shared_s_grid(fhat, 'klein_gordon', t_arr, options)
    spec = MixedNormSpec(4, 4)
    cache: dict[float, tuple[float, float, float, float]] = {}

    def point(t: float) -> tuple[float, float, float]:
        integral = i_m(fhat, fam, t, **options.multilinear_kwargs())
        g = flow(fhat, 'klein_gordon', t)
        norm = _propagated(g, 'klein_gordon', s_grid, spec, options)
        h_half = sobolev_norm(g, 0.5, 'inhomogeneous') ** 4
        cache[t] = (h_half, norm.power, norm.power_bound, kg_q * integral.error)
        return kg_q * integral.value, norm.power, kg_q * integral.error + norm.power_bound

    provenance = grid_info(fhat, s_grid)
    q_trace = assemble_trace(f'qkg(d={d})', t_arr, point, options, table.to_dict(), provenance)
    rows = [cache[float(t)] for t in t_arr]
    first0 = np.array([c4 * r[0] for r in rows])
    second = np.array([r[1] for r in rows])
    q0_trace = QTrace(f'qkg0(d={d})', t_arr, first0 - second, np.array([r[2] for r in rows]), first0, second, {'C_d': c4}, provenance)
    r_values = (q0_trace.values - q_trace.values) / kg_q
    r_direct = [kg_defect(fhat, d, float(t), **options.multilinear_kwargs()) for t in t_arr]
    r_err = np.array([r[3] / kg_q + rd.error for r, rd in zip(rows, r_direct, strict=True)])
    r_trace = QTrace(f'rkg(d={d})', t_arr, r_values, r_err, constants={'kg_q': kg_q}, grid=provenance)
    direct = np.array([rd.value for rd in r_direct])
    r_trace.extra['r_direct'] = direct.tolist()
    r_trace.extra['direct_discrepancy'] = float(np.max(np.abs(direct - r_values)) / max(float(np.max(np.abs(direct))), 1e-300))
    return q_trace, q0_trace, r_trace


def grid_info(fhat: Field, s_grid: np.ndarray) -> dict[str, Any]:
    return {**fhat.grid.to_dict(), 's_max': float(np.max(np.abs(s_grid))), 's_count': int(np.asarray(s_grid).size)}


# ═══════════════════════════════════════════════════
# 完全单调性
# ═══════════════════════════════════════════════════


def check_complete_monotone(trace: QTrace, max_order: int = 3, tol: float | None = None) -> CMReport:
    """(−1)^j Δ^j Q ≥ −2^j·(tol + max err)，j = 0..max_order"""
    count = trace.t.size
    if max_order > count - 1:
        raise TraceError(f'阶数 {max_order} 超过 t 点数减一 ({count - 1})')
    peak = float(np.max(np.abs(trace.values), initial=0.0))
    if tol is None:
        tol = 1e-2 * peak
    noise = float(trace.err.max(initial=0.0))
    h = trace.spacing
    orders = []
    diff = trace.values.copy()
    for j in range(max_order + 1):
        if j > 0:
            diff = np.diff(diff)
        signed = (-1) ** j * diff
        worst = float(signed.min())
        violation = max(0.0, -worst)
        allowed = 2**j * (tol + noise)
        scaled = violation / (h**j * peak) if peak > 0 else 0.0
        orders.append(
            {
                'order': j,
                'worst': worst,
                'violation': violation,
                'scaled_violation': scaled,
                'allowed': allowed,
                'passed': violation <= allowed,
            }
        )
    report = CMReport(max_order=max_order, tol=tol, orders=orders)
    if not report.passed:
        failing = [o['order'] for o in orders if not o['passed']]
        logger.warning('%s: 交替差分在第 %s 阶超出允许量', trace.theorem, failing)
    return report


def sharpness_ratio(trace: QTrace) -> float:
    """max_t 第二项/第一项；超过 1 + 误差即为对最优常数的反例迹象"""
    if trace.first is None or trace.second is None:
        raise TraceError(f'{trace.theorem}: 迹未保存分项，无法计算比值')
    mask = trace.first > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(trace.second[mask] / trace.first[mask]))


def nonnegative(trace: QTrace, tol: float | None = None) -> bool:
    tol = 1e-2 * trace.scale if tol is None else tol
    return bool(np.all(trace.values >= -(tol + trace.err)))
