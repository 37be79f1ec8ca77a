"""
Utility functions for the SNA laboratory
SNA实验室工具函数
"""

from .file_utils import atomic_write_text, csv_text, json_text
from .sampling import grid_points, make_rng
from .validators import parse_ladder, parse_scale, validate_rho_spec

__all__ = [
    'atomic_write_text',
    'csv_text',
    'json_text',
    'grid_points',
    'make_rng',
    'parse_ladder',
    'parse_scale',
    'validate_rho_spec',
]
