#!/usr/bin/env python3
"""
dispflow: 色散流单调量与最优常数的数值校验工具
=============================================

从各子模块 re-export 公开接口（`from dispflow import XXX`）。

模块架构（依赖方向: 上层 → 下层）:
  L0 基础层:  exceptions / logger / utils
  L1 配置层:  config
  L2 数值层:  spectral / norms / multilinear / oracles / flows / pdeflow / steintomas / kinetic
  L3 输出层:  report / cache
  L4 协调层:  manager (VerificationManager) / suite / cli
"""

# ═══════════════════════════════════════════════════
# L0 基础层
# ═══════════════════════════════════════════════════

# --- exceptions ---
from dispflow.exceptions import (
    ERROR_CODE_SUGGESTIONS,
    BaseAppException,
    BracketError,
    BudgetError,
    CacheError,
    ConfigError,
    CoverageError,
    DiffusionError,
    DispflowError,
    ErrorStats,
    EvolutionError,
    ExtensionError,
    FamilyError,
    FieldError,
    FileException,
    GridError,
    KineticError,
    NormError,
    OracleError,
    OutputError,
    SelectorError,
    ShearError,
    SurfaceError,
    TraceError,
    UnresolvableError,
    catch_exception,
    format_error_response,
    global_error_stats,
    setup_global_exception_hook,
)

# --- logger ---
from dispflow.logger import UNIFIED_LOG_DATE_FORMAT, UNIFIED_LOG_FORMAT, Logger, ProgressAwareHandler

# --- utils ---
from dispflow.utils import atomic_write, atomic_write_bytes, canonical_json, parallel_map, safe_read_file, stable_hash

# ═══════════════════════════════════════════════════
# L1 配置层
# ═══════════════════════════════════════════════════
from dispflow.config import Config

# ═══════════════════════════════════════════════════
# L2 数值层
# ═══════════════════════════════════════════════════
from dispflow.flows import (
    CMReport,
    QTrace,
    TraceOptions,
    check_complete_monotone,
    q_klein_gordon,
    q_ozawa_tsutsumi,
    q_schrodinger,
    q_strichartz,
    q_wave,
    q_wave_strichartz,
    sharpness_ratio,
)
from dispflow.kinetic import (
    DiffusionState,
    PhaseField,
    PlaneGrid,
    ccl_check,
    drury_check,
    fast_diffusion_step,
    functional_F,
    hls_form,
    radon3,
    rho,
    rho_star,
    xray,
)
from dispflow.multilinear import Family, constants, i_m, kernel, strichartz_constant
from dispflow.norms import MixedNormSpec, NormValue, mixed_norm, sobolev_norm
from dispflow.oracles import LemmaReport, MollifierSpec, error_scaling, mass_kg, mass_ot, mass_schrodinger, mass_wave
from dispflow.pdeflow import admissible, find_c, finite_difference, q_general, qprime_identity
from dispflow.spectral import Field, GridSpec, SpaceTimeField, apply_multiplier, evolve, flow, inverse_values, symbol
from dispflow.steintomas import SurfaceSpec, c_constant, extension, p_one, q_steintomas

# ═══════════════════════════════════════════════════
# L3 输出层
# ═══════════════════════════════════════════════════
from dispflow.cache import ResultCache
from dispflow.report import ARTIFACT_VERSION, read_trace_csv, render_summary, write_report, write_trace_csv

# ═══════════════════════════════════════════════════
# L4 协调层
# ═══════════════════════════════════════════════════
from dispflow.cli import main
from dispflow.manager import VerificationManager

__version__ = ARTIFACT_VERSION

# ═══════════════════════════════════════════════════
# __all__: 显式声明公开接口
# ═══════════════════════════════════════════════════

__all__ = [
    'ARTIFACT_VERSION',
    'ERROR_CODE_SUGGESTIONS',
    'UNIFIED_LOG_DATE_FORMAT',
    'UNIFIED_LOG_FORMAT',
    'BaseAppException',
    'BracketError',
    'BudgetError',
    'CMReport',
    'CacheError',
    'Config',
    'ConfigError',
    'CoverageError',
    'DiffusionError',
    'DiffusionState',
    'DispflowError',
    'ErrorStats',
    'EvolutionError',
    'ExtensionError',
    'Family',
    'FamilyError',
    'Field',
    'FieldError',
    'FileException',
    'GridError',
    'GridSpec',
    'KineticError',
    'LemmaReport',
    'Logger',
    'MixedNormSpec',
    'MollifierSpec',
    'NormError',
    'NormValue',
    'OracleError',
    'OutputError',
    'PhaseField',
    'PlaneGrid',
    'ProgressAwareHandler',
    'QTrace',
    'ResultCache',
    'SelectorError',
    'ShearError',
    'SpaceTimeField',
    'SurfaceError',
    'SurfaceSpec',
    'TraceError',
    'TraceOptions',
    'UnresolvableError',
    'VerificationManager',
    '__version__',
    'admissible',
    'apply_multiplier',
    'atomic_write',
    'atomic_write_bytes',
    'c_constant',
    'canonical_json',
    'catch_exception',
    'ccl_check',
    'check_complete_monotone',
    'constants',
    'drury_check',
    'error_scaling',
    'evolve',
    'extension',
    'fast_diffusion_step',
    'find_c',
    'finite_difference',
    'flow',
    'format_error_response',
    'functional_F',
    'global_error_stats',
    'hls_form',
    'i_m',
    'inverse_values',
    'kernel',
    'main',
    'mass_kg',
    'mass_ot',
    'mass_schrodinger',
    'mass_wave',
    'mixed_norm',
    'p_one',
    'parallel_map',
    'q_general',
    'q_klein_gordon',
    'q_ozawa_tsutsumi',
    'q_schrodinger',
    'q_steintomas',
    'q_strichartz',
    'q_wave',
    'q_wave_strichartz',
    'qprime_identity',
    'radon3',
    'read_trace_csv',
    'render_summary',
    'rho',
    'rho_star',
    'safe_read_file',
    'setup_global_exception_hook',
    'sharpness_ratio',
    'sobolev_norm',
    'stable_hash',
    'strichartz_constant',
    'symbol',
    'write_report',
    'write_trace_csv',
    'xray',
]
