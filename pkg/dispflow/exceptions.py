#!/usr/bin/env python3
"""
异常体系与全局错误处理
======================

包含:
  - 异常层次体系 (BaseAppException / DispflowError / GridError / ...)
  - 错误统计收集器 (ErrorStats)
  - 全局异常捕获装饰器 (catch_exception)
  - 错误响应格式化 (format_error_response)

错误码分段:
  1xxx 配置/选择器   2xxx 网格/场/范数   3xxx 多线性泛函
  4xxx 蒙特卡洛校验  5xxx 单调量轨迹     6xxx Stein–Tomas
  7xxx 动理学输运    8xxx 输出/文件/缓存
"""

from __future__ import annotations

import functools
import logging
import sys
import traceback
from collections import Counter
from typing import TYPE_CHECKING, Any

if TYPE_CHECKING:
    from collections.abc import Callable
    from types import TracebackType

# ═══════════════════════════════════════════════════
# 异常层次体系
# ═══════════════════════════════════════════════════


class BaseAppException(Exception):
    """应用异常基类 - 带错误码和修复建议"""

    def __init__(
        self,
        error_code: int,
        message: str,
        suggestion: str = '',
        details: dict[str, Any] | None = None,
        original: Exception | None = None,
    ):
        self.error_code = error_code
        self.message = message
        self.suggestion = suggestion
        self.details = details or {}
        self.original = original
        super().__init__(str(self))

    @property
    def traceback_str(self) -> str:
        if self.original:
            return ''.join(traceback.format_exception(type(self.original), self.original, self.original.__traceback__))
        return ''.join(traceback.format_exception(type(self), self, self.__traceback__))

    def to_dict(self) -> dict[str, Any]:
        return {
            'error_code': self.error_code,
            'message': self.message,
            'suggestion': self.suggestion,
            'details': self.details,
        }

    def __str__(self) -> str:
        base = f'[{self.error_code}] {self.message}'
        if self.suggestion:
            base += f' | 建议: {self.suggestion}'
        return base


class DispflowError(BaseAppException):
    """dispflow 基类

    子类通过类属性 ``code`` 与 ``default_suggestion`` 声明错误码和默认建议。
    """

    code = 0
    default_suggestion = ''

    def __init__(
        self,
        message: str,
        suggestion: str | None = None,
        details: dict[str, Any] | None = None,
        original: Exception | None = None,
    ):
        super().__init__(
            error_code=self.code,
            message=message,
            suggestion=self.default_suggestion if suggestion is None else suggestion,
            details=details,
            original=original,
        )


# --- 1xxx 配置 ---


class ConfigError(DispflowError):
    """配置相关错误"""

    code = 1001
    default_suggestion = '请检查运行配置文件格式和取值是否正确'


class SelectorError(ConfigError):
    """命令/定理/数据选择器无效"""

    code = 1002
    default_suggestion = '请使用 --help 查看可用的选择器'


# --- 2xxx 网格、场、范数 ---


class GridError(DispflowError):
    """网格参数不合法或超出内存预算"""

    code = 2001
    default_suggestion = '请使用 2 的幂次的 n、正的 L，或调大 Spectral.memory_budget_mb'


class FieldError(DispflowError):
    """场数据不合法（非有限值、形状或侧别不匹配）"""

    code = 2002
    default_suggestion = '请检查输入数据是否有限且与网格一致'


class EvolutionError(DispflowError):
    """时间网格违反色散预算或 Nyquist 条件"""

    code = 2003
    default_suggestion = '请缩小 s 窗口、加密 s 网格或增大 L'


class NormError(DispflowError):
    """范数参数不合法或尾部不可积"""

    code = 2101
    default_suggestion = '请检查指数 p, q 是否位于 [1, ∞]'


# --- 3xxx 多线性泛函 ---


class FamilyError(DispflowError):
    """(m, d) 对该方程族不可容许"""

    code = 3001
    default_suggestion = '请参照方程族的可容许 (m, d) 范围'


class BudgetError(DispflowError):
    """张量网格求积超出内存预算"""

    code = 3002
    default_suggestion = '请增大 Multilinear.coarsen 或减小 n'


# --- 4xxx 蒙特卡洛校验 ---


class OracleError(DispflowError):
    """δ 测度质量校验无法进行（退化或奇异的求值点）"""

    code = 4001
    default_suggestion = '请更换求值点 ξ 或增加采样数'


# --- 5xxx 单调量轨迹 ---


class TraceError(DispflowError):
    """轨迹数据不合法（t 网格非均匀、点数不足或含非有限值）"""

    code = 5001
    default_suggestion = '请使用至少 8 个点的均匀递增 t 网格'


class UnresolvableError(TraceError):
    """求积误差界超过 Q 量级的 10%，轨迹无法判定"""

    code = 5002
    default_suggestion = '请提高网格分辨率或减小粗化因子'


class BracketError(DispflowError):
    """常数搜索区间耗尽"""

    code = 5101
    default_suggestion = '请扩大 find-c 的搜索上界'


# --- 6xxx Stein–Tomas ---


class SurfaceError(DispflowError):
    """曲面参数不合法（非凸或曲率低于下限）"""

    code = 6001
    default_suggestion = '请检查曲面剖面系数与曲率下限 κ_min'


class ExtensionError(DispflowError):
    """延拓算子的时空窗口无法容纳能量"""

    code = 6002
    default_suggestion = '请增大空间半宽 L 或缩小时间窗口'


# --- 7xxx 动理学输运 ---


class KineticError(DispflowError):
    """动理学模块错误"""

    code = 7001
    default_suggestion = '请检查相空间网格与数据支撑'


class ShearError(KineticError):
    """剪切后支撑越出网格"""

    code = 7002
    default_suggestion = '请缩小 s 窗口或速度范围，或增大空间半宽'


class CoverageError(KineticError):
    """平面/直线偏移量未覆盖数据支撑"""

    code = 7003
    default_suggestion = '请增大偏移量范围'


class DiffusionError(KineticError):
    """快扩散步进失败（负值无法消除或质量漂移过大）"""

    code = 7004
    default_suggestion = '请减小初始步长或检查初值是否非负'


# --- 8xxx 输出 ---


class OutputError(DispflowError):
    """输出/文件写入错误"""

    code = 8001
    default_suggestion = '请检查输出目录权限和磁盘空间'


class FileException(DispflowError):
    """文件操作异常"""

    code = 8002
    default_suggestion = '请检查文件路径和权限，确保目录存在且可读写'


class CacheError(DispflowError):
    """缓存条目损坏"""

    code = 8003
    default_suggestion = '缓存条目将被删除并重新计算'


ERROR_CODE_SUGGESTIONS: dict[int, str] = {
    1001: '配置错误，请检查运行配置文件',
    1002: '选择器无效，请检查命令参数',
    2001: '网格不合法，请检查 n 与 L',
    2002: '场数据不合法，请检查输入',
    2003: '时间网格不满足色散预算',
    2101: '范数参数不合法',
    3001: '(m, d) 不可容许',
    3002: '超出内存预算',
    4001: 'δ 测度校验失败',
    5001: '轨迹不合法',
    5002: '求积误差过大，轨迹无法判定',
    5101: '常数搜索区间耗尽',
    6001: '曲面参数不合法',
    6002: '延拓窗口不足',
    7001: '动理学模块错误',
    7002: '剪切越界',
    7003: '偏移覆盖不足',
    7004: '快扩散步进失败',
    8001: '文件写入异常，请检查权限和磁盘空间',
    8002: '文件操作异常，请检查文件路径和权限',
    8003: '缓存损坏，已重新计算',
}


# ═══════════════════════════════════════════════════
# 全局错误处理
# ═══════════════════════════════════════════════════


class ErrorStats:
    """单次运行内的错误计数，按 (错误码, 模块) 归组

    校验工具是一次性进程，不做时间窗口裁剪；每组只保留首条消息，
    便于在检验组结束时定位最先出错的检验项。
    """

    def __init__(self) -> None:
        self._counts: Counter[tuple[int, str]] = Counter()
        self._first: dict[tuple[int, str], dict[str, Any]] = {}

    def record(self, error: Exception, module: str = '', context: dict[str, Any] | None = None) -> None:
        key = (getattr(error, 'error_code', 0), module)
        self._counts[key] += 1
        self._first.setdefault(
            key,
            {'type': type(error).__name__, 'message': str(error), 'context': context or {}},
        )

    @property
    def total(self) -> int:
        return sum(self._counts.values())

    def get_summary(self) -> dict[str, Any]:
        groups = []
        for (code, module), count in sorted(self._counts.items()):
            first = self._first[(code, module)]
            groups.append({'error_code': code, 'module': module, 'count': count, 'type': first['type'], 'first_message': first['message']})
        return {'total_count': self.total, 'groups': groups}

    def get_count_by_type(self) -> dict[int, int]:
        counts: Counter[int] = Counter()
        for (code, _), n in self._counts.items():
            counts[code] += n
        return dict(counts)

    def get_count_by_module(self) -> dict[str, int]:
        counts: Counter[str] = Counter()
        for (_, module), n in self._counts.items():
            counts[module] += n
        return dict(counts)

    def reset(self) -> None:
        self._counts.clear()
        self._first.clear()


global_error_stats = ErrorStats()


def catch_exception(
    logger: logging.Logger | None = None,
    module_name: str = '',
    raise_original: bool = False,
    fallback_return: Any = None,
    capture_stats: bool = True,
) -> Callable[[Callable[..., Any]], Callable[..., Any]]:
    """全局异常捕获装饰器

    记录日志与统计后，按 ``raise_original`` 重新抛出或返回 ``fallback_return``。
    """

    def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
        @functools.wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            log = logger or logging.getLogger(func.__module__)
            module = module_name or func.__module__
            try:
                return func(*args, **kwargs)
            except Exception as e:
                # 非 dispflow 异常包装为错误码 0，统计与日志格式一致
                error = e if isinstance(e, BaseAppException) else _wrap_exception(e, module)
                _log_exception(log, error, module, func.__name__)
                if capture_stats:
                    global_error_stats.record(error, module, {'func': func.__name__})
                if raise_original:
                    raise
                return fallback_return

        return wrapper

    return decorator


def _log_exception(logger: logging.Logger, error: BaseAppException, module: str, func_name: str) -> None:
    logger.error('[%s] %s (%s.%s) | 建议: %s', error.error_code, error.message, module, func_name, error.suggestion)
    if error.original is not None:
        logger.debug('原始异常: %s', traceback.format_exc())


def _wrap_exception(error: Exception, module: str) -> BaseAppException:
    return BaseAppException(
        error_code=0,
        message=f'{type(error).__name__}: {error}',
        suggestion='请查看日志中的完整调用栈',
        details={'module': module},
        original=error,
    )


def format_error_response(error: BaseAppException, include_traceback: bool = False) -> dict[str, Any]:
    response: dict[str, Any] = {'success': False, 'error': error.to_dict()}
    if include_traceback:
        response['traceback'] = error.traceback_str
    return response


def setup_global_exception_hook(logger: logging.Logger | None = None) -> None:
    log = logger or logging.getLogger('GlobalHook')

    def global_excepthook(
        exc_type: type[BaseException],
        exc_value: BaseException,
        exc_tb: TracebackType | None,
    ) -> None:
        if isinstance(exc_value, BaseAppException):
            log.critical(
                '[%s] %s | 建议: %s',
                exc_value.error_code,
                exc_value.message,
                exc_value.suggestion,
            )
        else:
            log.critical(
                '未捕获的异常 (类型: %s): %s\n%s',
                exc_type.__name__,
                str(exc_value),
                ''.join(traceback.format_exception(exc_type, exc_value, exc_tb)),
            )

    sys.excepthook = global_excepthook
