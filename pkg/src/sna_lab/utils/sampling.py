"""
Seeded sampling on the torus
环面上的可复现随机采样
"""

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based 64-bit generator; the same seed always gives the same stream."""
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform_torus(rng: np.random.Generator, count: int, D: int) -> np.ndarray:
    return rng.random((int(count), int(D)))


def grid_points(M: int, D: int = 1) -> np.ndarray:
    """
    Uniform grid on T^D with about M points: {i/M} for D=1, otherwise the
    product grid with floor(M^(1/D)) points per axis.
    """
    if D == 1:
        return (np.arange(M, dtype=np.float64) / M)[:, None]
    per_axis = max(2, int(np.floor(M ** (1.0 / D) + 1e-9)))
    axes = np.arange(per_axis, dtype=np.float64) / per_axis
    mesh = np.meshgrid(*([axes] * D), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)
