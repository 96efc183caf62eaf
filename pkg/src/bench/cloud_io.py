"""
GC-Register Cloud I/O
=====================

PLY (ascii and binary_little_endian 1.0) and XYZ text readers/writers.

Readers never let a low-level exception escape: anything malformed comes
out as CloudParseError carrying the line number and byte offset where
parsing stopped. Writers are deterministic; the same cloud always produces
the same bytes.
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from cloud import PointCloud

logger = logging.getLogger("gcreg.io")

PathLike = Union[str, Path]

PLY_TYPES = {
    'char': 'i1', 'int8': 'i1',
    'uchar': 'u1', 'uint8': 'u1',
    'short': 'i2', 'int16': 'i2',
    'ushort': 'u2', 'uint16': 'u2',
    'int': 'i4', 'int32': 'i4',
    'uint': 'u4', 'uint32': 'u4',
    'float': 'f4', 'float32': 'f4',
    'double': 'f8', 'float64': 'f8',
}

NORMAL_FIELDS = ('nx', 'ny', 'nz')


class CloudFormat(Enum):
    AUTO = "auto"
    PLY = "ply"
    XYZ = "xyz"


class CloudParseError(ValueError):
    """Raised when a cloud file is malformed; carries its position."""

    def __init__(self, message: str, line: Optional[int] = None, byte_offset: Optional[int] = None,
                 path: Optional[str] = None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if byte_offset is not None:
            where.append(f"byte {byte_offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.byte_offset = byte_offset
        self.path = path


# =============================================================================
# PLY HEADER
# =============================================================================

class _Element:
    def __init__(self, name: str, count: int):
        self.name = name
        self.count = count
        self.properties: List[Tuple[str, str]] = []   # (name, numpy type code)
        self.has_list = False


def _parse_header(data: bytes):
    """Returns (encoding, elements, header_end_offset, header_line_count)."""
    if not data.startswith(b"ply"):
        raise CloudParseError("missing 'ply' magic", line=1, byte_offset=0)

    offset = 0
    line_no = 0
    encoding = None
    elements: List[_Element] = []

    while True:
        end = data.find(b"\n", offset)
        if end < 0:
            raise CloudParseError("header has no end_header line", line=line_no + 1, byte_offset=offset)
        raw = data[offset:end]
        line_no += 1
        try:
            text = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise CloudParseError("header is not ASCII", line=line_no, byte_offset=offset)
        tokens = text.split()

        def fail(msg):
            return CloudParseError(msg, line=line_no, byte_offset=offset)

        if line_no == 1:
            if text != "ply":
                raise fail("first line must be 'ply'")
        elif not tokens or tokens[0] in ("comment", "obj_info"):
            pass
        elif tokens[0] == "format":
            if len(tokens) != 3 or tokens[2] != "1.0":
                raise fail(f"bad format line '{text}'")
            if tokens[1] not in ("ascii", "binary_little_endian"):
                raise fail(f"unsupported PLY encoding '{tokens[1]}'")
            encoding = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise fail(f"bad element line '{text}'")
            elements.append(_Element(tokens[1], int(tokens[2])))
        elif tokens[0] == "property":
            if not elements:
                raise fail("property before any element")
            if len(tokens) == 5 and tokens[1] == "list":
                if tokens[2] not in PLY_TYPES or tokens[3] not in PLY_TYPES:
                    raise fail(f"unknown list type in '{text}'")
                elements[-1].has_list = True
                elements[-1].properties.append((tokens[4], "list"))
            elif len(tokens) == 3 and tokens[1] in PLY_TYPES:
                elements[-1].properties.append((tokens[2], PLY_TYPES[tokens[1]]))
            else:
                raise fail(f"bad property line '{text}'")
        elif tokens[0] == "end_header":
            offset = end + 1
            break
        else:
            raise fail(f"unknown header keyword '{tokens[0]}'")
        offset = end + 1

    if encoding is None:
        raise CloudParseError("header has no format line", line=line_no, byte_offset=offset)
    return encoding, elements, offset, line_no


# =============================================================================
# PLY BODY
# =============================================================================

def _vertex_columns(element: _Element, line: int, offset: int):
    names = [name for name, _ in element.properties]
    for axis in ('x', 'y', 'z'):
        if axis not in names:
            raise CloudParseError(f"vertex element lacks property '{axis}'", line=line, byte_offset=offset)
    if element.has_list:
        raise CloudParseError("list properties on vertices are not supported", line=line, byte_offset=offset)
    with_normals = all(n in names for n in NORMAL_FIELDS)
    return names, with_normals


def _read_ascii(data: bytes, elements: List[_Element], offset: int, line_no: int):
    vertex = None
    for element in elements:
        rows = []
        for _ in range(element.count):
            end = data.find(b"\n", offset)
            stop = len(data) if end < 0 else end
            if offset >= len(data):
                raise CloudParseError(
                    f"truncated payload: expected {element.count} '{element.name}' rows",
                    line=line_no + 1, byte_offset=offset,
                )
            line_no += 1
            raw = data[offset:stop]
            if element.name == "vertex":
                try:
                    tokens = raw.decode("ascii").split()
                except UnicodeDecodeError:
                    raise CloudParseError("non-ASCII vertex row", line=line_no, byte_offset=offset)
                if len(tokens) != len(element.properties):
                    raise CloudParseError(
                        f"vertex row has {len(tokens)} values, expected {len(element.properties)}",
                        line=line_no, byte_offset=offset,
                    )
                try:
                    values = [float(t) for t in tokens]
                except ValueError:
                    raise CloudParseError("vertex row has a non-numeric value", line=line_no, byte_offset=offset)
                if not all(math.isfinite(v) for v in values):
                    raise CloudParseError("non-finite vertex value", line=line_no, byte_offset=offset)
                rows.append(values)
            offset = stop + 1
        if element.name == "vertex":
            names, with_normals = _vertex_columns(element, line_no, offset)
            table = np.array(rows, dtype=np.float64).reshape(element.count, len(names))
            vertex = (table, names, with_normals)
    return vertex


def _read_binary(data: bytes, elements: List[_Element], offset: int, line_no: int):
    vertex = None
    for element in elements:
        if element.has_list:
            if element.name == "vertex" or vertex is None:
                raise CloudParseError(
                    f"list properties before/inside vertex data are not supported ('{element.name}')",
                    line=line_no, byte_offset=offset,
                )
            break  # faces etc. after the vertices are irrelevant
        dtype = np.dtype([(f"{name}_{i}", '<' + code) for i, (name, code) in enumerate(element.properties)])
        need = element.count * dtype.itemsize
        available = len(data) - offset
        if need > available:
            complete = available // dtype.itemsize if dtype.itemsize else 0
            raise CloudParseError(
                f"truncated payload: '{element.name}' needs {need} bytes, {available} present",
                line=line_no, byte_offset=offset + complete * dtype.itemsize,
            )
        if element.name == "vertex":
            names, with_normals = _vertex_columns(element, line_no, offset)
            records = np.frombuffer(data, dtype=dtype, count=element.count, offset=offset)
            table = np.empty((element.count, len(names)))
            for col, field_name in enumerate(dtype.names):
                table[:, col] = records[field_name]
            bad = ~np.isfinite(table).all(axis=1)
            if bad.any():
                first = int(np.argmax(bad))
                raise CloudParseError(
                    f"non-finite value in vertex {first}",
                    line=line_no, byte_offset=offset + first * dtype.itemsize,
                )
            vertex = (table, names, with_normals)
        offset += need
    return vertex


def parse_ply(data: bytes, path: Optional[str] = None) -> PointCloud:
    """Parse PLY bytes into a PointCloud."""
    try:
        encoding, elements, offset, line_no = _parse_header(data)
        if not any(e.name == "vertex" for e in elements):
            raise CloudParseError("no vertex element", line=line_no, byte_offset=offset)
        reader = _read_ascii if encoding == "ascii" else _read_binary
        vertex = reader(data, elements, offset, line_no)
    except CloudParseError as e:
        if path and not e.path:
            raise CloudParseError(str(e), e.line, e.byte_offset, path) from None
        raise
    except (ValueError, TypeError, OverflowError, IndexError, MemoryError) as e:
        raise CloudParseError(f"malformed PLY: {e}", path=path) from e

    table, names, with_normals = vertex
    points = table[:, [names.index(a) for a in ('x', 'y', 'z')]]
    normals = table[:, [names.index(a) for a in NORMAL_FIELDS]] if with_normals else None
    return _make_cloud(points, normals, path)


# =============================================================================
# XYZ
# =============================================================================

def parse_xyz(data: bytes, path: Optional[str] = None) -> PointCloud:
    """Parse whitespace-separated 'x y z [nx ny nz]' rows; '#' starts a comment."""
    rows = []
    width = None
    offset = 0
    for line_no, raw in enumerate(data.split(b"\n"), start=1):
        try:
            text = raw.decode("utf-8").split("#", 1)[0].strip()
        except UnicodeDecodeError:
            raise CloudParseError("XYZ row is not valid text", line=line_no, byte_offset=offset, path=path)
        if text:
            tokens = text.split()
            if len(tokens) not in (3, 6) or (width is not None and len(tokens) != width):
                raise CloudParseError(
                    f"XYZ row has {len(tokens)} values, expected {width or '3 or 6'}",
                    line=line_no, byte_offset=offset, path=path,
                )
            width = len(tokens)
            try:
                values = [float(t) for t in tokens]
            except ValueError:
                raise CloudParseError("non-numeric value", line=line_no, byte_offset=offset, path=path)
            if not all(math.isfinite(v) for v in values):
                raise CloudParseError("non-finite value", line=line_no, byte_offset=offset, path=path)
            rows.append(values)
        offset += len(raw) + 1

    table = np.array(rows, dtype=np.float64).reshape(-1, width or 3)
    normals = table[:, 3:6] if width == 6 else None
    return _make_cloud(table[:, :3], normals, path)


def _make_cloud(points: np.ndarray, normals: Optional[np.ndarray], path: Optional[str]) -> PointCloud:
    if normals is not None and len(normals):
        lengths = np.linalg.norm(normals, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-3):
            logger.warning(f"{path or 'cloud'}: stored normals are not unit length; ignoring them")
            normals = None
        else:
            normals = normals / lengths[:, None]
    return PointCloud(points, normals)


# =============================================================================
# PUBLIC API
# =============================================================================

def _resolve_format(path: Path, fmt, head: bytes = b"") -> CloudFormat:
    fmt = CloudFormat(fmt)
    if fmt is not CloudFormat.AUTO:
        return fmt
    suffix = path.suffix.lower()
    if suffix == ".ply":
        return CloudFormat.PLY
    if suffix in (".xyz", ".txt", ".xyzn"):
        return CloudFormat.XYZ
    return CloudFormat.PLY if head.startswith(b"ply") else CloudFormat.XYZ


def read_cloud(path: PathLike, fmt=CloudFormat.AUTO) -> PointCloud:
    """
    Read a PLY or XYZ file.

    Raises:
        CloudParseError: malformed content (with line / byte offset)
        OSError: unreadable file
    """
    path = Path(path)
    data = path.read_bytes()
    kind = _resolve_format(path, fmt, data[:3])
    cloud = parse_ply(data, str(path)) if kind is CloudFormat.PLY else parse_xyz(data, str(path))
    logger.debug(f"Read {len(cloud)} points from {path} ({kind.value})")
    return cloud


def ply_bytes(cloud: PointCloud, binary: bool = True) -> bytes:
    """Serialize a cloud as PLY; doubles, fixed property order."""
    names = ['x', 'y', 'z'] + (list(NORMAL_FIELDS) if cloud.has_normals else [])
    table = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
              f"element vertex {len(cloud)}"]
    header += [f"property double {n}" for n in names]
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")
    if binary:
        return head + np.ascontiguousarray(table, dtype='<f8').tobytes()
    body = "".join(" ".join(format(v, ".17g") for v in row) + "\n" for row in table.tolist())
    return head + body.encode("ascii")


def xyz_bytes(cloud: PointCloud) -> bytes:
    table = cloud.points if not cloud.has_normals else np.hstack([cloud.points, cloud.normals])
    return "".join(" ".join(format(v, ".17g") for v in row) + "\n" for row in table.tolist()).encode("ascii")


def write_cloud(cloud: PointCloud, path: PathLike, fmt=CloudFormat.AUTO, binary: bool = True):
    """
    Write a cloud as PLY (binary by default) or XYZ.

    Raises:
        OSError: the path cannot be written (the message names the path)
    """
    path = Path(path)
    kind = _resolve_format(path, fmt, b"ply" if path.suffix.lower() != ".xyz" else b"")
    data = ply_bytes(cloud, binary) if kind is CloudFormat.PLY else xyz_bytes(cloud)
    try:
        path.write_bytes(data)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(cloud)} points to {path} ({kind.value})")
