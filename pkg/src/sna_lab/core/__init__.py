"""
Core numerical modules of the SNA laboratory
SNA实验室核心数值模块
"""

from .errors import ConfigError, NumericFailure, SNAError
from .lab import SNALab
from .run_manager import RunManager

__all__ = ['SNALab', 'RunManager', 'SNAError', 'ConfigError', 'NumericFailure']
