"""Analytic fixtures: indicator-like grids and exact surface samples.

All grids use the inside-positive convention on the unit domain with values
sampled at cell centers.  These back the test oracles and the `gridgen` CLI.
"""

from __future__ import annotations

import numpy as np

from .grids import OrientedPointCloud, ScalarGrid, cell_centers
from .validation import check_seed

__all__ = [
    "sphere_grid",
    "torus_grid",
    "circle_grid",
    "tunnel_defect_grid",
    "handle_defect_grid",
    "sphere_cloud",
    "circle_cloud",
    "dented_sphere_grid",
]


def sphere_grid(resolution: int, radius: float = 0.3, center=(0.5, 0.5, 0.5)) -> ScalarGrid:
    """Signed distance to a sphere, positive inside."""
    x = cell_centers(resolution, 3)
    return ScalarGrid(radius - np.linalg.norm(x - np.asarray(center), axis=-1))


def torus_grid(resolution: int, major: float = 0.25, minor: float = 0.08,
               center=(0.5, 0.5, 0.5)) -> ScalarGrid:
    """Signed distance to a torus around the z-axis through center, positive inside."""
    x = cell_centers(resolution, 3) - np.asarray(center)
    ring = np.hypot(x[..., 0], x[..., 1]) - major
    return ScalarGrid(minor - np.hypot(ring, x[..., 2]))


def circle_grid(resolution: int, radius: float = 0.25, center=(0.5, 0.5)) -> ScalarGrid:
    x = cell_centers(resolution, 2)
    return ScalarGrid(radius - np.linalg.norm(x - np.asarray(center), axis=-1))


def tunnel_defect_grid(resolution: int, radius: float = 0.3, tunnel_radius: float = 0.018,
                       center=(0.5, 0.5, 0.5)) -> ScalarGrid:
    """Solid sphere with a thin cylindrical tunnel drilled along z: genus 1.

    The tunnel is the WM-style "hole" defect; with inside-positive SDF it is
    filled by a dilated (tau < 0) level set.
    """
    x = cell_centers(resolution, 3) - np.asarray(center)
    ball = radius - np.linalg.norm(x, axis=-1)
    outside_tunnel = np.hypot(x[..., 0], x[..., 1]) - tunnel_radius
    return ScalarGrid(np.minimum(ball, outside_tunnel))


def handle_defect_grid(resolution: int, radius: float = 0.2, handle_major: float = 0.15,
                       handle_minor: float = 0.02, center=(0.5, 0.5, 0.5)) -> ScalarGrid:
    """Solid sphere with a thin external torus handle: genus 1.

    The handle ring passes through the ball center, so the thin tube emerges
    from the surface and loops back (the pial-style "handle" defect); with
    inside-positive SDF it is removed by an eroded (tau > 0) level set.
    """
    c = np.asarray(center)
    x = cell_centers(resolution, 3) - c
    ball = radius - np.linalg.norm(x, axis=-1)
    ring_center = x - np.array([0.0, handle_major, 0.0])
    ring = np.hypot(ring_center[..., 0], ring_center[..., 1]) - handle_major
    handle = handle_minor - np.hypot(ring, ring_center[..., 2])
    return ScalarGrid(np.maximum(ball, handle))


def dented_sphere_grid(resolution: int, radius: float = 0.3, dent_depth: float = 0.08,
                       dent_width: float = 0.15, center=(0.5, 0.5, 0.5)) -> ScalarGrid:
    """Sphere with a smooth Gaussian dent toward +x; target for 3D point optimization."""
    c = np.asarray(center)
    x = cell_centers(resolution, 3) - c
    dent_at = c + np.array([radius, 0.0, 0.0])
    bump = dent_depth * np.exp(
        -np.sum((x + c - dent_at) ** 2, axis=-1) / dent_width**2
    )
    return ScalarGrid(radius - bump - np.linalg.norm(x, axis=-1))


def sphere_cloud(count: int, radius: float = 0.3, center=(0.5, 0.5, 0.5), seed=0) -> OrientedPointCloud:
    """Exact uniform samples on a sphere with outward normals."""
    rng = check_seed(seed)
    v = rng.normal(size=(count, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return OrientedPointCloud(np.asarray(center) + radius * v, v)


def circle_cloud(count: int, radius: float = 0.25, center=(0.5, 0.5)) -> OrientedPointCloud:
    """Evenly spaced samples on a circle with outward normals."""
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    n = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return OrientedPointCloud(np.asarray(center) + radius * n, n)
