"""
SNA Lab - numerical laboratory for pinched skew products
SNA实验室 - 夹点斜积映射的数值实验工具

Approximates the strange non-chaotic attractor through iterated upper bounding
lines, checks the quantitative hypotheses behind it, and estimates its dimensions.
通过迭代上界线逼近奇异非混沌吸引子，检验相关定量假设并估计其维数。
"""

__version__ = "1.0.0"

from .core.lab import SNALab
from .core.run_manager import RunManager
from .core.torus_dynamics import SystemParams, TorusPoint

__all__ = [
    'SNALab',
    'RunManager',
    'SystemParams',
    'TorusPoint',
]
