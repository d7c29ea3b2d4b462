import logging
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from app.exceptions import MeshFormatError
from app.geometry.mesh import TriangleMesh


logger = logging.getLogger(__name__)

# texture, grouping and material records carry nothing we use
IGNORED_OBJ_RECORDS = frozenset({"vt", "vp", "o", "g", "s", "usemtl", "mtllib", "l"})

PLY_TYPES: dict[str, str] = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path: Path | str) -> TriangleMesh:
    """
    Load an OBJ or PLY (ascii / binary_little_endian) file into a TriangleMesh.
    Polygon faces are triangulated fan-wise, degenerate faces removed.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".obj":
            vertices, triangles, normals = _read_obj(path)
        elif suffix == ".ply":
            vertices, triangles, normals = _read_ply(path)
        else:
            raise MeshFormatError(f"unsupported mesh format: {path.name}")
    except OSError as e:
        raise MeshFormatError(f"Failed to read mesh {path}: {e}") from e

    if not len(vertices):
        raise MeshFormatError(f"{path.name}: no vertices")

    mesh = TriangleMesh(vertices=vertices, triangles=triangles, normals=normals)
    if mesh.removed_faces:
        logger.warning("%s: removed %d degenerate faces", path.name, mesh.removed_faces)
    if not mesh.is_closed:
        logger.warning("%s: open or non-manifold mesh", path.name)
    return mesh


def _check_indices(path: Path, triangles: np.ndarray, n_vertices: int) -> None:
    if len(triangles) and (triangles.min() < 0 or triangles.max() >= n_vertices):
        raise MeshFormatError(
            f"{path.name}: face index out of range ({n_vertices} vertices)"
        )


def _fan(polygon: list[int]) -> list[tuple[int, int, int]]:
    return [(polygon[0], polygon[i], polygon[i + 1]) for i in range(1, len(polygon) - 1)]


def _obj_index(token: str, count: int) -> int:
    value = int(token)
    # OBJ indices are 1-based, negative values count back from the end
    return value - 1 if value > 0 else count + value


def _read_obj(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    vertices: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    corner_normals: dict[int, int] = {}

    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *fields = line.split()
        try:
            if tag == "v":
                vertices.append([float(x) for x in fields[:3]])
                if len(fields) < 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "vn":
                normals.append([float(x) for x in fields[:3]])
                if len(fields) < 3:
                    raise ValueError("normal needs 3 components")
            elif tag == "f":
                polygon = []
                for corner in fields:
                    parts = corner.split("/")
                    vi = _obj_index(parts[0], len(vertices))
                    polygon.append(vi)
                    if len(parts) == 3 and parts[2]:
                        corner_normals[vi] = _obj_index(parts[2], len(normals))
                if len(polygon) < 3:
                    raise ValueError("face needs at least 3 vertices")
                faces.extend(_fan(polygon))
            elif tag in IGNORED_OBJ_RECORDS:
                continue
            else:
                raise MeshFormatError(f"{path.name}:{lineno}: unsupported record '{tag}'")
        except ValueError as e:
            if isinstance(e, MeshFormatError):
                raise
            raise MeshFormatError(f"{path.name}:{lineno}: {e}") from e

    vertex_arr = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    triangles = np.array(faces, dtype=np.int64).reshape(-1, 3)
    _check_indices(path, triangles, len(vertex_arr))

    normal_arr = None
    if normals and len(corner_normals) == len(vertex_arr):
        source = np.array(normals, dtype=np.float64)
        order = np.array([corner_normals[i] for i in range(len(vertex_arr))])
        if order.min() >= 0 and order.max() < len(source):
            normal_arr = source[order]
    return vertex_arr, triangles, normal_arr


def _read_ply_header(handle) -> tuple[str, list[dict[str, Any]]]:
    if handle.readline().strip() != b"ply":
        raise MeshFormatError("missing 'ply' magic")

    fmt = ""
    elements: list[dict[str, Any]] = []
    while True:
        line = handle.readline()
        if not line:
            raise MeshFormatError("unterminated PLY header")
        tokens = line.decode("ascii").split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "end_header":
            break
        if tokens[0] == "format":
            fmt = tokens[1]
            if fmt not in ("ascii", "binary_little_endian") or tokens[2] != "1.0":
                raise MeshFormatError(f"unsupported PLY format: {' '.join(tokens[1:])}")
        elif tokens[0] == "element":
            elements.append({"name": tokens[1], "count": int(tokens[2]), "properties": []})
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("property before element")
            if tokens[1] == "list":
                prop = (tokens[4], PLY_TYPES[tokens[2]], PLY_TYPES[tokens[3]])
            else:
                prop = (tokens[2], PLY_TYPES[tokens[1]], None)
            elements[-1]["properties"].append(prop)
        else:
            raise MeshFormatError(f"unsupported PLY header record '{tokens[0]}'")
    return fmt, elements


def _ascii_rows(element: dict[str, Any], tokens: Iterator[str]) -> list[dict[str, Any]]:
    rows = []
    for _ in range(element["count"]):
        row: dict[str, Any] = {}
        for name, kind, item in element["properties"]:
            if item is None:
                row[name] = float(next(tokens))
            else:
                n = int(next(tokens))
                row[name] = [int(float(next(tokens))) for _ in range(n)]
        rows.append(row)
    return rows


def _binary_rows(element: dict[str, Any], data: bytes, offset: int) -> tuple[list[dict], int]:
    props = element["properties"]
    if all(item is None for _, _, item in props):
        dtype = np.dtype([(name, "<" + kind) for name, kind, _ in props])
        block = np.frombuffer(data, dtype=dtype, count=element["count"], offset=offset)
        rows = [{name: float(rec[name]) for name, _, _ in props} for rec in block]
        return rows, offset + dtype.itemsize * element["count"]

    rows = []
    for _ in range(element["count"]):
        row: dict[str, Any] = {}
        for name, kind, item in props:
            if item is None:
                value = np.frombuffer(data, dtype="<" + kind, count=1, offset=offset)[0]
                offset += np.dtype(kind).itemsize
                row[name] = float(value)
            else:
                n = int(np.frombuffer(data, dtype="<" + kind, count=1, offset=offset)[0])
                offset += np.dtype(kind).itemsize
                values = np.frombuffer(data, dtype="<" + item, count=n, offset=offset)
                offset += np.dtype(item).itemsize * n
                row[name] = [int(v) for v in values]
        rows.append(row)
    return rows, offset


def _read_ply(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    with open(path, "rb") as handle:
        try:
            fmt, elements = _read_ply_header(handle)
        except (KeyError, IndexError, ValueError) as e:
            if isinstance(e, MeshFormatError):
                raise
            raise MeshFormatError(f"{path.name}: malformed PLY header: {e}") from e
        body = handle.read()

    parsed: dict[str, list[dict[str, Any]]] = {}
    try:
        if fmt == "ascii":
            tokens = iter(body.decode("ascii").split())
            for element in elements:
                parsed[element["name"]] = _ascii_rows(element, tokens)
        else:
            offset = 0
            for element in elements:
                parsed[element["name"]], offset = _binary_rows(element, body, offset)
    except (StopIteration, ValueError) as e:
        raise MeshFormatError(f"{path.name}: truncated or malformed PLY body") from e

    vertex_rows = parsed.get("vertex", [])
    if vertex_rows and not {"x", "y", "z"} <= vertex_rows[0].keys():
        raise MeshFormatError(f"{path.name}: vertex element lacks x/y/z")
    vertices = np.array([[r["x"], r["y"], r["z"]] for r in vertex_rows], dtype=np.float64)
    normals = None
    if vertex_rows and {"nx", "ny", "nz"} <= vertex_rows[0].keys():
        normals = np.array([[r["nx"], r["ny"], r["nz"]] for r in vertex_rows], dtype=np.float64)

    faces: list[tuple[int, int, int]] = []
    for row in parsed.get("face", []):
        polygon = row.get("vertex_indices", row.get("vertex_index"))
        if polygon is None:
            raise MeshFormatError(f"{path.name}: face element lacks vertex_indices")
        faces.extend(_fan(polygon))
    triangles = np.array(faces, dtype=np.int64).reshape(-1, 3)
    _check_indices(path, triangles, len(vertices))
    return vertices.reshape(-1, 3), triangles, normals


def save_obj(mesh: TriangleMesh, path: Path | str) -> None:
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def save_ply(mesh: TriangleMesh, path: Path | str, colors: np.ndarray | None = None) -> None:
    """Write an ascii PLY, optionally with per-vertex uchar colors"""
    header = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(mesh.vertices)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if colors is not None:
        colors = np.asarray(colors, dtype=np.uint8).reshape(-1, 3)
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    header += [
        f"element face {len(mesh.triangles)}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    body = []
    for i, (x, y, z) in enumerate(mesh.vertices):
        row = f"{x:.9g} {y:.9g} {z:.9g}"
        if colors is not None:
            r, g, b = colors[i]
            row += f" {r} {g} {b}"
        body.append(row)
    body += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(header + body) + "\n")


def read_ply_colors(path: Path | str) -> np.ndarray:
    """Per-vertex (red, green, blue) of an ascii PLY written by save_ply"""
    path = Path(path)
    with open(path, "rb") as handle:
        _, elements = _read_ply_header(handle)
        tokens = iter(handle.read().decode("ascii").split())
    rows = _ascii_rows(elements[0], tokens)
    return np.array([[r["red"], r["green"], r["blue"]] for r in rows], dtype=np.uint8)
