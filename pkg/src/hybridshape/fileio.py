"""Mesh, contour, and point-cloud file formats.

OBJ is ASCII v/vn/f; PLY is binary little-endian with double precision
vertices.  Contours use a line-loop text format (a `loop` header line, then
one `x y` row per vertex).  Oriented point clouds use whitespace rows of
position then normal components (.xyzn).  Floats are written with repr-exact
formatting so write/read round-trips are bit-identical.
"""

from __future__ import annotations

import struct

import numpy as np

from .grids import OrientedPointCloud
from .meshing import Contour, SurfaceMesh

__all__ = [
    "write_obj",
    "read_obj",
    "write_ply",
    "read_ply",
    "write_loops",
    "read_loops",
    "write_cloud",
    "read_cloud",
    "load_mesh",
    "save_mesh",
]


def _fmt(x: float) -> str:
    return repr(float(x))  # shortest digits that round-trip exactly


def write_obj(path, mesh: SurfaceMesh) -> None:
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        has_normals = mesh.normals is not None
        if has_normals:
            for n in mesh.normals:
                fh.write(f"vn {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}\n")
        for f in mesh.faces:
            a, b, c = f + 1
            if has_normals:
                fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")
            else:
                fh.write(f"f {a} {b} {c}\n")


def read_obj(path) -> SurfaceMesh:
    vertices, normals, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    faces.append([idx[0], idx[k], idx[k + 1]])
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    normals_arr = None
    if normals and len(normals) == len(vertices):
        normals_arr = np.asarray(normals, dtype=np.float64)
    return SurfaceMesh(vertices, np.asarray(faces, dtype=np.int64).reshape(-1, 3), normals_arr)


def write_ply(path, mesh: SurfaceMesh) -> None:
    has_normals = mesh.normals is not None
    props = ["property double x", "property double y", "property double z"]
    if has_normals:
        props += ["property double nx", "property double ny", "property double nz"]
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {mesh.n_vertices}\n" + "\n".join(props) + "\n"
        f"element face {mesh.n_faces}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        data = mesh.vertices
        if has_normals:
            data = np.hstack([mesh.vertices, mesh.normals])
        fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
        counts = np.full((mesh.n_faces, 1), 3, dtype=np.uint8)
        faces = mesh.faces.astype("<i4")
        rows = b"".join(
            counts[i].tobytes() + faces[i].tobytes() for i in range(mesh.n_faces)
        )
        fh.write(rows)


def read_ply(path) -> SurfaceMesh:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt = fh.readline().strip()
        if fmt != b"format binary_little_endian 1.0":
            raise ValueError(f"{path}: unsupported PLY format {fmt!r}")
        n_vertex = n_face = 0
        vertex_props = []
        current = None
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            parts = line.split()
            if parts[0] == b"comment":
                continue
            if parts[0] == b"element":
                current = parts[1]
                if current == b"vertex":
                    n_vertex = int(parts[2])
                elif current == b"face":
                    n_face = int(parts[2])
            elif parts[0] == b"property" and current == b"vertex":
                vertex_props.append((parts[1].decode(), parts[2].decode()))
            elif parts[0] == b"end_header":
                break
        fmt_np = {"double": "<f8", "float": "<f4"}
        dt = np.dtype([(name, fmt_np[t]) for t, name in vertex_props])
        raw = fh.read(n_vertex * dt.itemsize)
        rec = np.frombuffer(raw, dtype=dt, count=n_vertex)
        cols = {name: rec[name].astype(np.float64) for _, name in vertex_props}
        vertices = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
        normals = None
        if all(k in cols for k in ("nx", "ny", "nz")):
            normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
        faces = np.empty((n_face, 3), dtype=np.int64)
        for i in range(n_face):
            (count,) = struct.unpack("<B", fh.read(1))
            if count != 3:
                raise ValueError(f"{path}: non-triangular face with {count} vertices")
            faces[i] = struct.unpack("<3i", fh.read(12))
    return SurfaceMesh(vertices, faces, normals)


def write_loops(path, contour: Contour) -> None:
    with open(path, "w") as fh:
        for loop in contour.loops:
            fh.write("loop\n")
            for x, y in loop:
                fh.write(f"{_fmt(x)} {_fmt(y)}\n")


def read_loops(path) -> Contour:
    loops, current = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "loop":
                if current:
                    loops.append(np.asarray(current))
                current = []
            else:
                current.append([float(v) for v in line.split()])
    if current:
        loops.append(np.asarray(current))
    return Contour(loops)


def write_cloud(path, cloud: OrientedPointCloud) -> None:
    with open(path, "w") as fh:
        for p, n in zip(cloud.positions, cloud.normals):
            fh.write(" ".join(_fmt(v) for v in p) + " " + " ".join(_fmt(v) for v in n) + "\n")


def read_cloud(path) -> OrientedPointCloud:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(v) for v in line.split()])
    data = np.asarray(rows, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] not in (4, 6):
        raise ValueError(f"{path}: expected rows of position+normal (4 or 6 columns)")
    d = data.shape[1] // 2
    return OrientedPointCloud(data[:, :d], data[:, d:])


def load_mesh(path) -> SurfaceMesh:
    p = str(path)
    if p.endswith(".obj"):
        return read_obj(p)
    if p.endswith(".ply"):
        return read_ply(p)
    raise ValueError(f"unsupported mesh format: {p}")


def save_mesh(path, mesh: SurfaceMesh) -> None:
    p = str(path)
    if p.endswith(".obj"):
        write_obj(p, mesh)
    elif p.endswith(".ply"):
        write_ply(p, mesh)
    else:
        raise ValueError(f"unsupported mesh format: {p}")
