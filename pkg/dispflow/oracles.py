#!/usr/bin/env python3
"""
δ 测度质量的 Monte Carlo 校验
============================

对四类约束测度 dΣ_ξ（Schrödinger、Ozawa–Tsutsumi、波动、Klein–Gordon）
独立地估计其质量，并与闭式结果比较:

- 向量（动量）δ 通过 η_m = Σξ_j − Σ_{j<m}η_j 精确消去；
- 标量（能量）δ 用宽度 ε 的高斯磨光核代替，ε → 0 用 ε² 多项式外推；
- 所有宽度共用同一批样本（公共随机数），标准误由逐样本外推组合得到；
- 约束曲面退化（能量取到最小值）的边缘点改为平移目标能量 E+Δ，
  按族的边缘指数 γ 用 a + bΔ^γ + cΔ^{γ+1} 外推 Δ → 0。
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from dispflow.exceptions import OracleError
from dispflow.multilinear import Family, kernel, sphere_area, wave_a_constant
from dispflow.spectral import phi
from dispflow.utils import parallel_map

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

MIN_SAMPLES = 10_000
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class MollifierSpec:
    """高斯磨光核 (2πε²)^{−1/2}e^{−r²/2ε²} 的宽度序列（相对能量间隙）"""

    widths: tuple[float, ...] = (0.3, 0.15, 0.075)
    shape: str = 'gaussian'

    def __post_init__(self) -> None:
        widths = tuple(float(w) for w in self.widths)
        object.__setattr__(self, 'widths', widths)
        if self.shape != 'gaussian':
            raise OracleError(f'仅支持高斯磨光核，收到 {self.shape}')
        if len(widths) < 3:
            raise OracleError('外推至少需要 3 个宽度', details={'widths': list(widths)})
        if any(w <= 0 for w in widths) or any(b >= a for a, b in zip(widths, widths[1:], strict=False)):
            raise OracleError('宽度必须为正且严格递减', details={'widths': list(widths)})


@dataclass
class LemmaReport:
    """一次质量校验的完整记录"""

    lemma: str
    family: str
    m: int
    d: int
    xi: list[list[float]]
    parameters: list[float]
    estimates: list[float]
    standard_errors: list[float]
    extrapolated: float
    standard_error: float
    closed_form: float
    relative_error: float
    samples: int
    seed: int
    edge: bool
    trend_ok: bool
    passed: bool
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class _Problem:
    """消去动量 δ 之后的一维能量约束问题"""

    lemma: str
    family: str
    m: int
    d: int
    xi: np.ndarray
    dim: int
    center: np.ndarray
    energy: Callable[[np.ndarray], np.ndarray]
    weight: Callable[[np.ndarray], np.ndarray]
    target: float
    minimum: float
    scale: Callable[[float], float]
    edge_exponent: float
    closed_form: float

    @property
    def gap(self) -> float:
        return self.target - self.minimum


# ═══════════════════════════════════════════════════
# 各族的约束问题
# ═══════════════════════════════════════════════════


def _as_tuple(xi: Sequence[Sequence[float]] | np.ndarray, m: int, d: int) -> np.ndarray:
    arr = np.asarray(xi, dtype=float)
    if arr.shape != (m, d):
        raise OracleError(f'求值点形状应为 ({m}, {d})，收到 {arr.shape}')
    if not np.all(np.isfinite(arr)):
        raise OracleError('求值点含非有限值')
    return arr


def _last_component(eta: np.ndarray, total: np.ndarray, m: int, d: int) -> list[np.ndarray]:
    free = [eta[:, j * d : (j + 1) * d] for j in range(m - 1)]
    return [*free, total - sum(free)]


def _schrodinger_problem(xi: np.ndarray) -> _Problem:
    m, d = xi.shape
    fam = Family('schrodinger', m, d)
    total = xi.sum(axis=0)
    dim = (m - 1) * d
    closed = sphere_area(dim) / (2 * m ** ((d * m - 2) / 2)) * float(kernel(fam, xi[None, :, :])[0])
    minimum = float(total @ total) / m
    return _Problem(
        lemma='mass_schrodinger',
        family='schrodinger',
        m=m,
        d=d,
        xi=xi,
        dim=dim,
        center=np.tile(total / m, m - 1),
        energy=lambda eta: sum(np.sum(v**2, axis=1) for v in _last_component(eta, total, m, d)),
        weight=lambda eta: np.ones(eta.shape[0]),
        target=float(np.sum(xi**2)),
        minimum=minimum,
        scale=lambda target: 1.5 * math.sqrt(max(target - minimum, 0.0) / (2 * dim)),
        edge_exponent=fam.beta,
        closed_form=closed,
    )


def _ot_problem(xi: np.ndarray) -> _Problem:
    # ζ = η₂ + ξ₁ 坐标下约束曲面是过原点、以 (ξ₁+ξ₂)/2 为心的球面
    d = xi.shape[1]
    a, b = xi
    center = (a + b) / 2
    minimum = float((a - b) @ (a - b)) / 2

    def weight(zeta: np.ndarray) -> np.ndarray:
        if d == 2:
            return np.ones(zeta.shape[0])
        return np.linalg.norm(zeta, axis=1) ** (2 - d)

    return _Problem(
        lemma='mass_ot',
        family='ot',
        m=2,
        d=d,
        xi=xi,
        dim=d,
        center=center,
        energy=lambda z: np.sum((z - b) ** 2, axis=1) + np.sum((z - a) ** 2, axis=1),
        weight=weight,
        target=float(a @ a + b @ b),
        minimum=minimum,
        scale=lambda target: 1.25 * math.sqrt(max(target - minimum, 0.0) / 2) / math.sqrt(d),
        edge_exponent=0.0,
        closed_form=sphere_area(d) / 4,
    )


def _wave_problem(xi: np.ndarray) -> _Problem:
    m, d = xi.shape
    fam = Family('wave', m, d)
    norms = np.linalg.norm(xi, axis=1)
    if np.any(norms == 0):
        raise OracleError('波动测度在 |ξ_j| = 0 处权重奇异', suggestion='请选择各分量非零的求值点', details={'xi': xi.tolist()})
    total = xi.sum(axis=0)
    a_const, _ = wave_a_constant(m, d)
    closed = 2**fam.beta * a_const * float(kernel(fam, xi[None, :, :])[0])
    minimum = float(np.linalg.norm(total))

    def energy(eta: np.ndarray) -> np.ndarray:
        return sum(np.linalg.norm(v, axis=1) for v in _last_component(eta, total, m, d))

    def weight(eta: np.ndarray) -> np.ndarray:
        return 1.0 / math.prod(np.linalg.norm(v, axis=1) for v in _last_component(eta, total, m, d))

    return _Problem(
        lemma='mass_wave',
        family='wave',
        m=m,
        d=d,
        xi=xi,
        dim=(m - 1) * d,
        center=np.tile(total / m, m - 1),
        energy=energy,
        weight=weight,
        target=float(norms.sum()),
        minimum=minimum,
        scale=lambda target: 1.5 * math.sqrt(max(target**2 - minimum**2, 0.0)) / (m * math.sqrt(d)),
        edge_exponent=fam.beta,
        closed_form=closed,
    )


def _kg_problem(xi: np.ndarray) -> _Problem:
    d = xi.shape[1]
    fam = Family('klein_gordon', 2, d)
    total = xi.sum(axis=0)
    closed = sphere_area(d) / 2 ** ((d - 1) / 2) * float(kernel(fam, xi[None, :, :])[0])
    minimum = math.sqrt(4.0 + float(total @ total))

    def energy(eta: np.ndarray) -> np.ndarray:
        return phi(np.linalg.norm(eta, axis=1)) + phi(np.linalg.norm(total - eta, axis=1))

    def weight(eta: np.ndarray) -> np.ndarray:
        return 1.0 / (phi(np.linalg.norm(eta, axis=1)) * phi(np.linalg.norm(total - eta, axis=1)))

    return _Problem(
        lemma='mass_kg',
        family='klein_gordon',
        m=2,
        d=d,
        xi=xi,
        dim=d,
        center=total / 2,
        energy=energy,
        weight=weight,
        target=float(phi(np.linalg.norm(xi, axis=1)).sum()),
        minimum=minimum,
        scale=lambda target: 1.5 * math.sqrt(max(target**2 - minimum**2, 0.0)) / (2 * math.sqrt(d)),
        edge_exponent=(d - 2) / 2,
        closed_form=closed,
    )


# ═══════════════════════════════════════════════════
# 采样与外推
# ═══════════════════════════════════════════════════


def _mollifier(values: np.ndarray, eps: float) -> np.ndarray:
    return np.exp(-(values**2) / (2 * eps**2)) / math.sqrt(2 * math.pi * eps**2)


def _batch_contributions(
    problem: _Problem,
    targets: Sequence[float],
    epsilons: Sequence[float],
    seed_seq: np.random.SeedSequence,
    count: int,
) -> np.ndarray:
    """一批样本对每个 (目标能量, ε) 的逐样本贡献，形状 (count, K)"""
    rng = np.random.default_rng(seed_seq)
    z = rng.standard_normal((count, problem.dim))
    log_q0 = 0.5 * np.sum(z**2, axis=1) + 0.5 * problem.dim * math.log(2 * math.pi)
    out = np.empty((count, len(targets)))
    for k, (target, eps) in enumerate(zip(targets, epsilons, strict=True)):
        s = problem.scale(target)
        eta = problem.center + s * z
        inv_density = np.exp(log_q0 + problem.dim * math.log(s))
        with np.errstate(divide='ignore', invalid='ignore'):
            contrib = _mollifier(problem.energy(eta) - target, eps) * problem.weight(eta) * inv_density
        out[:, k] = np.nan_to_num(contrib, nan=0.0, posinf=0.0)
    return out


def _sample(
    problem: _Problem,
    targets: Sequence[float],
    epsilons: Sequence[float],
    samples: int,
    seed: int,
    batch_size: int,
    workers: int,
) -> np.ndarray:
    batches = [batch_size] * (samples // batch_size)
    if samples % batch_size:
        batches.append(samples % batch_size)
    children = np.random.SeedSequence(seed).spawn(len(batches))
    parts = parallel_map(
        lambda job: _batch_contributions(problem, targets, epsilons, job[0], job[1]),
        list(zip(children, batches, strict=True)),
        workers=workers,
    )
    return np.concatenate(parts, axis=0)


def _trend_ok(contrib: np.ndarray) -> bool:
    """相邻估计的显著差（> 3 标准误）若正负混杂则视为外推不收敛"""
    n = contrib.shape[0]
    signs = []
    for k in range(contrib.shape[1] - 1):
        diff = contrib[:, k + 1] - contrib[:, k]
        se = float(diff.std(ddof=1)) / math.sqrt(n)
        mean = float(diff.mean())
        if abs(mean) > 3 * se:
            signs.append(np.sign(mean))
    return len(set(signs)) <= 1


def _run(
    problem: _Problem,
    moll: MollifierSpec,
    samples: int,
    seed: int,
    batch_size: int = 20_000,
    workers: int = 1,
    edge_shifts: Sequence[float] = (0.2, 0.1, 0.05),
    rel_tol: float = 0.02,
    se_factor: float = 3.0,
) -> LemmaReport:
    if samples < MIN_SAMPLES:
        raise OracleError(f'样本数至少为 {MIN_SAMPLES}，收到 {samples}', details={'samples': samples})
    warnings: list[str] = []
    edge = problem.gap <= _EDGE_TOL * (1.0 + abs(problem.target))
    if edge:
        scale = 1.0 + abs(problem.target)
        params = [float(s) * scale for s in edge_shifts]
        targets = [problem.minimum + delta for delta in params]
        epsilons = [delta / 4 for delta in params]
        gamma = problem.edge_exponent
        if gamma == 0:
            design = np.array([[1.0, p, p**2] for p in params])
        else:
            design = np.array([[1.0, p**gamma, p ** (gamma + 1)] for p in params])
        logger.info('%s: 求值点位于约束曲面退化处，改用目标平移外推 (γ=%.3g)', problem.lemma, gamma)
    else:
        params = [w * problem.gap for w in moll.widths]
        targets = [problem.target] * len(params)
        epsilons = params
        design = np.array([[1.0, p**2, p**4] for p in params])
    design = design[:, : min(3, len(params))]

    contrib = _sample(problem, targets, epsilons, samples, seed, batch_size, workers)
    coeffs = np.linalg.pinv(design)[0]
    combined = contrib @ coeffs
    n = contrib.shape[0]
    estimates = contrib.mean(axis=0)
    ses = contrib.std(axis=0, ddof=1) / math.sqrt(n)
    extrapolated = float(combined.mean())
    se = float(combined.std(ddof=1)) / math.sqrt(n)

    trend_ok = _trend_ok(contrib)
    if not trend_ok:
        msg = f'{problem.lemma}: 各宽度的估计不呈单调趋势，外推可能不收敛'
        warnings.append(msg)
        logger.warning(msg)
    closed = problem.closed_form
    error = abs(extrapolated - closed)
    relative = error / abs(closed) if closed != 0 else error
    passed = trend_ok and error <= max(rel_tol * abs(closed), se_factor * se)
    logger.info(
        '%s (m=%d, d=%d): 外推 %.6g ± %.2g，闭式 %.6g，相对误差 %.3g%s',
        problem.lemma,
        problem.m,
        problem.d,
        extrapolated,
        se,
        closed,
        relative,
        '' if passed else '  [未通过]',
    )
    return LemmaReport(
        lemma=problem.lemma,
        family=problem.family,
        m=problem.m,
        d=problem.d,
        xi=problem.xi.tolist(),
        parameters=params,
        estimates=[float(v) for v in estimates],
        standard_errors=[float(v) for v in ses],
        extrapolated=extrapolated,
        standard_error=se,
        closed_form=closed,
        relative_error=float(relative),
        samples=n,
        seed=seed,
        edge=bool(edge),
        trend_ok=trend_ok,
        passed=bool(passed),
        warnings=warnings,
    )


# ═══════════════════════════════════════════════════
# 对外接口
# ═══════════════════════════════════════════════════


def mass_schrodinger(
    xi: Sequence[Sequence[float]] | np.ndarray,
    d: int,
    moll: MollifierSpec | None = None,
    samples: int = 100_000,
    seed: int = 0,
    **options: Any,
) -> LemmaReport:
    """∫dΣ_ξ = |𝕊^{(m−1)d−1}|/(2m^{(dm−2)/2})·K(ξ)"""
    arr = np.asarray(xi, dtype=float)
    problem = _schrodinger_problem(_as_tuple(arr, arr.shape[0], d))
    return _run(problem, moll or MollifierSpec(), samples, seed, **options)


def mass_ot(
    xi: Sequence[Sequence[float]] | np.ndarray,
    d: int,
    moll: MollifierSpec | None = None,
    samples: int = 100_000,
    seed: int = 0,
    **options: Any,
) -> LemmaReport:
    """Ozawa–Tsutsumi 测度（权重 |ξ₁+η₂|^{2−d}）的质量 = |𝕊^{d−1}|/4"""
    if d < 2:
        raise OracleError(f'Ozawa–Tsutsumi 测度要求 d ≥ 2，收到 {d}')
    problem = _ot_problem(_as_tuple(xi, 2, d))
    return _run(problem, moll or MollifierSpec(), samples, seed, **options)


def mass_wave(
    xi: Sequence[Sequence[float]] | np.ndarray,
    m: int,
    d: int,
    moll: MollifierSpec | None = None,
    samples: int = 100_000,
    seed: int = 0,
    **options: Any,
) -> LemmaReport:
    """∫Φ dΣ_ξ = 2^β A(m,d) K(ξ)；Φ 与测度因子合并为 Π|η_j|^{−1}"""
    problem = _wave_problem(_as_tuple(xi, m, d))
    return _run(problem, moll or MollifierSpec(), samples, seed, **options)


def mass_kg(
    xi: Sequence[Sequence[float]] | np.ndarray,
    d: int,
    moll: MollifierSpec | None = None,
    samples: int = 100_000,
    seed: int = 0,
    **options: Any,
) -> LemmaReport:
    """∫Φ dΣ_ξ = |𝕊^{d−1}|/2^{(d−1)/2}·K(ξ)；权重 Πφ(|η_j|)^{−1}"""
    problem = _kg_problem(_as_tuple(xi, 2, d))
    return _run(problem, moll or MollifierSpec(), samples, seed, **options)


def error_scaling(small: LemmaReport, large: LemmaReport, rel_tol: float = 0.25) -> dict[str, Any]:
    """两档样本数下的标准误之比应接近 √(N_large/N_small)"""
    if (small.lemma, small.xi) != (large.lemma, large.xi) or large.samples <= small.samples:
        raise OracleError(
            '标准误缩放要求同一求值点、样本数递增的两份报告',
            details={'lemmas': [small.lemma, large.lemma], 'samples': [small.samples, large.samples]},
        )
    expected = math.sqrt(large.samples / small.samples)
    ratio = small.standard_error / large.standard_error if large.standard_error > 0 else math.inf
    passed = abs(ratio - expected) <= rel_tol * expected
    if not passed:
        logger.warning('%s: 标准误之比 %.3g 偏离 %.3g', small.lemma, ratio, expected)
    return {
        'samples': [small.samples, large.samples],
        'standard_errors': [small.standard_error, large.standard_error],
        'ratio': ratio,
        'expected': expected,
        'passed': bool(passed),
    }


LEMMAS = {'schrodinger': mass_schrodinger, 'ot': mass_ot, 'wave': mass_wave, 'klein_gordon': mass_kg}
