"""Input validation helpers shared across the package (sklearn-style check_* functions)."""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_finite_array",
    "check_positions",
    "check_resolution",
    "check_same_resolution",
    "check_seed",
]


def check_finite_array(a, name: str = "array", dtype=np.float64) -> np.ndarray:
    """Coerce to a contiguous float array and reject NaN/inf."""
    a = np.ascontiguousarray(a, dtype=dtype)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def check_positions(points, dim: int | None = None) -> np.ndarray:
    """Validate a (K, d) point array with d in {2, 3}."""
    pts = check_finite_array(points, "points")
    if pts.ndim != 2:
        raise ValueError(f"points must be 2-d (K, d), got shape {pts.shape}")
    if pts.shape[1] not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {pts.shape[1]}")
    if dim is not None and pts.shape[1] != dim:
        raise ValueError(f"expected dimension {dim}, got {pts.shape[1]}")
    return pts


def check_resolution(r: int, minimum: int = 2) -> int:
    r = int(r)
    if r < minimum:
        raise ValueError(f"resolution must be >= {minimum}, got {r}")
    return r


def check_same_resolution(*grids) -> None:
    """Raise if any two grids differ in resolution or dimension."""
    first = grids[0]
    for g in grids[1:]:
        if g.resolution != first.resolution or g.dim != first.dim:
            raise ValueError(
                f"resolution mismatch: ({first.dim}d, r={first.resolution}) vs "
                f"({g.dim}d, r={g.resolution})"
            )


def check_seed(seed) -> np.random.Generator:
    """Accept None, an int seed, a SeedSequence, or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
