"""Uniform grids on the unit square/cube and the oriented point clouds sampled in them.

Grids store one value (or one d-vector) per cell of an r^d lattice over [0, 1]^d,
with cell centers at (i + 0.5) / r.  The domain is treated as periodic wherever
interpolation has to look past the last cell center, matching the FFT solver.
"""

from __future__ import annotations

import struct

import numpy as np

from .validation import check_finite_array, check_positions, check_resolution

__all__ = [
    "ScalarGrid",
    "VectorGrid",
    "OrientedPointCloud",
    "cell_centers",
    "interp_weights",
    "grid_sample",
    "grid_sample_gradient",
    "read_hgrd",
    "write_hgrd",
]

_HGRD_MAGIC = b"HGRD"
_HGRD_VERSION = 1


def cell_centers(resolution: int, dim: int) -> np.ndarray:
    """Coordinates of all cell centers, shape (r,)*d + (d,)."""
    ax = (np.arange(resolution) + 0.5) / resolution
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(mesh, axis=-1)


class ScalarGrid:
    """One real value per cell of an r^d lattice; values are immutable after construction."""

    def __init__(self, values: np.ndarray):
        values = check_finite_array(values, "grid values")
        if values.ndim not in (2, 3):
            raise ValueError(f"grid must be 2-d or 3-d, got {values.ndim}-d")
        r = values.shape[0]
        if any(s != r for s in values.shape):
            raise ValueError(f"grid must be cubic, got shape {values.shape}")
        check_resolution(r)
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def resolution(self) -> int:
        return self._values.shape[0]

    @property
    def dim(self) -> int:
        return self._values.ndim

    def __repr__(self):
        return f"ScalarGrid(dim={self.dim}, r={self.resolution})"


class VectorGrid:
    """One real d-vector per cell; component axis is last, shape (r,)*d + (d,)."""

    def __init__(self, values: np.ndarray):
        values = check_finite_array(values, "grid values")
        if values.ndim not in (3, 4):
            raise ValueError(f"vector grid must be (r,)*d + (d,), got shape {values.shape}")
        dim = values.ndim - 1
        if values.shape[-1] != dim:
            raise ValueError(f"component count {values.shape[-1]} != dimension {dim}")
        r = values.shape[0]
        if any(s != r for s in values.shape[:-1]):
            raise ValueError(f"grid must be cubic, got shape {values.shape}")
        check_resolution(r)
        values.setflags(write=False)
        self._values = values

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def resolution(self) -> int:
        return self._values.shape[0]

    @property
    def dim(self) -> int:
        return self._values.ndim - 1

    def __repr__(self):
        return f"VectorGrid(dim={self.dim}, r={self.resolution})"


def renormalize_rows(normals: np.ndarray) -> np.ndarray:
    """Project rows onto unit length; rows already unit to 1e-12 keep their bits."""
    norms = np.linalg.norm(normals, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("zero-length normal")
    off = np.abs(norms - 1.0) > 1e-12
    if not np.any(off):
        return normals
    out = normals.copy()
    out[off] = out[off] / norms[off, None]
    return out


class OrientedPointCloud:
    """Points in [0, 1]^d with unit normals.

    Positions are clamped to the closed unit domain and normals rescaled to unit
    length on construction; zero-length normals are rejected.
    """

    def __init__(self, positions: np.ndarray, normals: np.ndarray):
        positions = check_positions(positions)
        normals = check_finite_array(normals, "normals")
        if normals.shape != positions.shape:
            raise ValueError(
                f"normal count/shape {normals.shape} != position shape {positions.shape}"
            )
        if len(positions) == 0:
            raise ValueError("empty point set")
        positions = np.clip(positions, 0.0, 1.0)
        normals = renormalize_rows(normals)
        positions.setflags(write=False)
        normals.setflags(write=False)
        self._positions = positions
        self._normals = normals

    @property
    def positions(self) -> np.ndarray:
        return self._positions

    @property
    def normals(self) -> np.ndarray:
        return self._normals

    @property
    def dim(self) -> int:
        return self._positions.shape[1]

    def __len__(self):
        return len(self._positions)

    def __repr__(self):
        return f"OrientedPointCloud(n={len(self)}, dim={self.dim})"


# ---------------------------------------------------------------------------
# periodic multilinear interpolation


def interp_weights(points: np.ndarray, resolution: int):
    """Multilinear stencil for points in the cell-center lattice, periodic wrap.

    Returns (corner_indices, weights): corner_indices has shape (K, 2^d, d) of
    wrapped cell indices and weights (K, 2^d).  The stencil is anchored at
    floor(p*r - 0.5), which fixes the one-sided convention for points exactly
    on cell boundaries.
    """
    pts = np.asarray(points, dtype=np.float64)
    r = resolution
    d = pts.shape[1]
    x = pts * r - 0.5
    i0 = np.floor(x).astype(np.int64)
    frac = x - i0

    offsets = _corner_offsets(d)  # (2^d, d)
    idx = (i0[:, None, :] + offsets[None, :, :]) % r
    # weight per axis: (1 - f) for offset 0, f for offset 1
    w_axis = np.where(offsets[None, :, :] == 0, 1.0 - frac[:, None, :], frac[:, None, :])
    weights = np.prod(w_axis, axis=2)
    return idx, weights


def _corner_offsets(d: int) -> np.ndarray:
    g = np.meshgrid(*([np.array([0, 1])] * d), indexing="ij")
    return np.stack([a.ravel() for a in g], axis=-1)


def _flat_index(idx: np.ndarray, r: int, d: int) -> np.ndarray:
    flat = idx[..., 0]
    for a in range(1, d):
        flat = flat * r + idx[..., a]
    return flat


def grid_sample(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a (r,)*d [+ (c,)] array at the given points."""
    pts = np.asarray(points, dtype=np.float64)
    d = pts.shape[1]
    r = values.shape[0]
    idx, w = interp_weights(pts, r)
    flat = _flat_index(idx, r, d)
    if values.ndim == d:
        vals = values.reshape(-1)[flat]  # (K, 2^d)
        return np.einsum("kc,kc->k", w, vals)
    vals = values.reshape(-1, values.shape[-1])[flat]  # (K, 2^d, c)
    return np.einsum("kc,kci->ki", w, vals)


def grid_sample_gradient(values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """d/dp of grid_sample for a scalar array; shape (K, d).

    Piecewise-constant in each cell of the interpolation lattice; on cell
    boundaries the floor-anchored stencil supplies the one-sided value.
    """
    pts = np.asarray(points, dtype=np.float64)
    d = pts.shape[1]
    r = values.shape[0]
    x = pts * r - 0.5
    i0 = np.floor(x).astype(np.int64)
    frac = x - i0
    offsets = _corner_offsets(d)
    idx = (i0[:, None, :] + offsets[None, :, :]) % r
    flat = _flat_index(idx, r, d)
    vals = values.reshape(-1)[flat]  # (K, 2^d)

    w_axis = np.where(offsets[None, :, :] == 0, 1.0 - frac[:, None, :], frac[:, None, :])
    dw_axis = np.where(offsets[None, :, :] == 0, -1.0, 1.0)  # d/df of the axis weight
    grad = np.empty((len(pts), d))
    for a in range(d):
        w_other = np.prod(np.delete(w_axis, a, axis=2), axis=2)
        grad[:, a] = r * np.einsum("kc,kc->k", dw_axis[:, :, a] * w_other, vals)
    return grad


# ---------------------------------------------------------------------------
# HGRD file format: 16-byte magic+version header, u32 d, u32 r, u32 c,
# then c * r^d little-endian f64 values, row-major with spatial axis 0 slowest
# (components interleaved as the fastest axis).


def write_hgrd(path, grid) -> None:
    values = grid.values
    if isinstance(grid, ScalarGrid):
        d, r, c = grid.dim, grid.resolution, 1
        payload = values
    elif isinstance(grid, VectorGrid):
        d, r, c = grid.dim, grid.resolution, grid.dim
        payload = values
    else:
        raise TypeError(f"cannot write {type(grid).__name__} as HGRD")
    header = _HGRD_MAGIC + struct.pack("<I", _HGRD_VERSION) + b"\x00" * 8
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<III", d, r, c))
        fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def read_hgrd(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != _HGRD_MAGIC:
            raise ValueError(f"{path}: not an HGRD file")
        version = struct.unpack("<I", header[4:8])[0]
        if version != _HGRD_VERSION:
            raise ValueError(f"{path}: unsupported HGRD version {version}")
        d, r, c = struct.unpack("<III", fh.read(12))
        if d not in (2, 3) or not (1 <= c <= 3):
            raise ValueError(f"{path}: bad HGRD dimensions d={d} c={c}")
        count = c * r**d
        data = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if data.size != count:
            raise ValueError(f"{path}: truncated HGRD payload")
    if c == 1:
        return ScalarGrid(data.reshape((r,) * d))
    if c != d:
        raise ValueError(f"{path}: component count {c} != dimension {d}")
    return VectorGrid(data.reshape((r,) * d + (c,)))
