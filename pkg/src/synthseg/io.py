"""Point cloud and image file formats.

PLY: binary little-endian, vertex element with double x/y/z, optional uchar
red/green/blue and optional ushort label. The cloud's taxonomy name travels in
a ``comment taxonomy <name>`` header line.

Images: binary PGM (P5) 16-bit big-endian for depth in millimeters, 8-bit PGM
for semantic label ids, binary PPM (P6) for color.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Optional, Union

import numpy as np

from synthseg.pcdcore import ColorImage, DepthImage, PointCloud, SemanticImage

PathLike = Union[str, os.PathLike]

MAX_DEPTH_M = 65.535


class FormatError(ValueError):
    """A file could not be parsed; ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class PlyHeaderError(FormatError):
    pass


class PlyTruncatedError(FormatError):
    pass


class PlyPropertyError(FormatError):
    pass


class ImageFormatError(FormatError):
    pass


class EncodingRangeError(ValueError):
    pass


def atomic_write(path: PathLike, data: bytes) -> None:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# ---------------------------------------------------------------- PLY

_PLY_TYPES = {
    "double": "<f8", "float64": "<f8",
    "float": "<f4", "float32": "<f4",
    "uchar": "u1", "uint8": "u1",
    "ushort": "<u2", "uint16": "<u2",
}
_ALLOWED = {
    "x": ("<f8", "<f4"), "y": ("<f8", "<f4"), "z": ("<f8", "<f4"),
    "red": ("u1",), "green": ("u1",), "blue": ("u1",),
    "label": ("<u2",),
}


def encode_ply(cloud: PointCloud) -> bytes:
    fields = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")]
    header = ["ply", "format binary_little_endian 1.0"]
    if cloud.taxonomy is not None:
        header.append(f"comment taxonomy {cloud.taxonomy.name}")
    header += [f"element vertex {len(cloud)}",
               "property double x", "property double y", "property double z"]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    if cloud.labels is not None:
        fields.append(("label", "<u2"))
        header.append("property ushort label")
    header.append("end_header")
    rec = np.empty(len(cloud), dtype=np.dtype(fields))
    rec["x"], rec["y"], rec["z"] = cloud.positions.T
    if cloud.colors is not None:
        rec["red"], rec["green"], rec["blue"] = cloud.colors.T
    if cloud.labels is not None:
        rec["label"] = cloud.labels
    return ("\n".join(header) + "\n").encode("ascii") + rec.tobytes()


def write_ply(cloud: PointCloud, path: PathLike) -> None:
    atomic_write(path, encode_ply(cloud))


def _parse_ply_header(data: bytes):
    end_marker = b"end_header\n"
    end = data.find(end_marker)
    if not data.startswith(b"ply\n"):
        raise PlyHeaderError("missing 'ply' magic line", 0)
    if end < 0:
        raise PlyHeaderError("header has no end_header line", len(data))
    offset = 0
    count = None
    fields = []
    taxonomy = None
    seen_format = False
    for raw in data[:end].split(b"\n"):
        line = raw.decode("ascii", errors="replace").strip()
        parts = line.split()
        if not parts or parts[0] == "ply":
            pass
        elif parts[0] == "format":
            if parts[1:] != ["binary_little_endian", "1.0"]:
                raise PlyHeaderError(f"unsupported format '{' '.join(parts[1:])}'", offset)
            seen_format = True
        elif parts[0] == "comment":
            if len(parts) >= 3 and parts[1] == "taxonomy":
                taxonomy = parts[2]
        elif parts[0] == "obj_info":
            pass
        elif parts[0] == "element":
            if len(parts) != 3 or parts[1] != "vertex" or count is not None:
                raise PlyPropertyError(f"unsupported element '{line}'", offset)
            try:
                count = int(parts[2])
            except ValueError:
                raise PlyHeaderError(f"bad vertex count '{parts[2]}'", offset) from None
            if count < 0:
                raise PlyHeaderError("negative vertex count", offset)
        elif parts[0] == "property":
            if count is None:
                raise PlyHeaderError("property before element", offset)
            if len(parts) != 3 or parts[1] == "list":
                raise PlyPropertyError(f"unsupported property '{line}'", offset)
            dtype = _PLY_TYPES.get(parts[1])
            name = parts[2]
            if dtype is None or name not in _ALLOWED or dtype not in _ALLOWED[name]:
                raise PlyPropertyError(f"unsupported property '{line}'", offset)
            if any(n == name for n, _ in fields):
                raise PlyPropertyError(f"duplicate property '{name}'", offset)
            fields.append((name, dtype))
        else:
            raise PlyHeaderError(f"unexpected header line '{line}'", offset)
        offset += len(raw) + 1
    if not seen_format:
        raise PlyHeaderError("missing format line", 0)
    if count is None:
        raise PlyHeaderError("missing vertex element", end)
    names = [n for n, _ in fields]
    if names[:3] != ["x", "y", "z"]:
        raise PlyPropertyError("vertex must start with x, y, z", end)
    colors = [n for n in names if n in ("red", "green", "blue")]
    if colors and colors != ["red", "green", "blue"]:
        raise PlyPropertyError("color properties must be red, green, blue together", end)
    return count, fields, taxonomy, end + len(end_marker)


def decode_ply(data: bytes, taxonomies: Optional[dict] = None) -> PointCloud:
    count, fields, tax_name, body = _parse_ply_header(data)
    dtype = np.dtype(fields)
    need = count * dtype.itemsize
    have = len(data) - body
    if have < need:
        complete = have // dtype.itemsize
        raise PlyTruncatedError(
            f"header declares {count} vertices but payload holds {complete}",
            body + complete * dtype.itemsize)
    if have > need:
        raise PlyTruncatedError(f"{have - need} trailing bytes after vertex data", body + need)
    rec = np.frombuffer(data, dtype=dtype, count=count, offset=body)
    pos = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    names = dtype.names
    colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1) if "red" in names else None
    labels = rec["label"].copy() if "label" in names else None
    taxonomy = None
    if tax_name is not None:
        if taxonomies is None:
            from synthseg.taxonomy import builtin_taxonomies
            taxonomies = builtin_taxonomies()
        taxonomy = taxonomies.get(tax_name)
    return PointCloud(pos, colors, labels, taxonomy)


def read_ply(path: PathLike, taxonomies: Optional[dict] = None) -> PointCloud:
    return decode_ply(Path(path).read_bytes(), taxonomies)


def ply_vertex_count(path: PathLike) -> int:
    with open(path, "rb") as f:
        head = f.read(4096)
    return _parse_ply_header(head)[0]


# ---------------------------------------------------------------- PNM

def _pnm_header(magic: bytes, width: int, height: int, maxval: int) -> bytes:
    return b"%s\n%d %d\n%d\n" % (magic, width, height, maxval)


def _parse_pnm(data: bytes, magic: bytes):
    if data[:2] != magic:
        raise ImageFormatError(f"bad magic number {data[:2]!r}, expected {magic!r}", 0)
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed header token", pos)
        tokens.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError("header not terminated by whitespace", pos)
    pos += 1
    width, height, maxval = tokens
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError("invalid dimensions or maxval", pos)
    return width, height, maxval, pos


def _payload(data: bytes, start: int, nbytes: int) -> bytes:
    if len(data) - start < nbytes:
        raise ImageFormatError(f"payload truncated: need {nbytes} bytes", len(data))
    return data[start:start + nbytes]


def encode_pgm16(image: DepthImage) -> bytes:
    d = image.depths
    if np.any(d >= MAX_DEPTH_M):
        raise EncodingRangeError(f"depth {d.max():.3f} m exceeds 16-bit millimeter range")
    mm = np.rint(d * 1000.0).astype(">u2")
    return _pnm_header(b"P5", image.width, image.height, 65535) + mm.tobytes()


def decode_pgm16(data: bytes) -> DepthImage:
    w, h, maxval, start = _parse_pnm(data, b"P5")
    if maxval < 256:
        raise ImageFormatError("expected a 16-bit PGM", start)
    raw = np.frombuffer(_payload(data, start, 2 * w * h), dtype=">u2").reshape(h, w)
    return DepthImage(raw.astype(np.float64) / 1000.0)


def encode_pgm8(image: SemanticImage) -> bytes:
    if image.labels.size and image.labels.max() > 255:
        raise EncodingRangeError("label ids above 255 do not fit an 8-bit PGM")
    return _pnm_header(b"P5", image.width, image.height, 255) + image.labels.astype(np.uint8).tobytes()


def decode_pgm8(data: bytes, taxonomy=None) -> SemanticImage:
    w, h, maxval, start = _parse_pnm(data, b"P5")
    if maxval > 255:
        raise ImageFormatError("expected an 8-bit PGM", start)
    raw = np.frombuffer(_payload(data, start, w * h), dtype=np.uint8).reshape(h, w)
    return SemanticImage(raw.astype(np.uint16), taxonomy)


def encode_ppm(image: ColorImage) -> bytes:
    return _pnm_header(b"P6", image.width, image.height, 255) + image.pixels.tobytes()


def decode_ppm(data: bytes) -> ColorImage:
    w, h, maxval, start = _parse_pnm(data, b"P6")
    if maxval != 255:
        raise ImageFormatError("only maxval 255 PPM is supported", start)
    raw = np.frombuffer(_payload(data, start, 3 * w * h), dtype=np.uint8).reshape(h, w, 3)
    return ColorImage(raw.copy())


def write_pgm16(image: DepthImage, path: PathLike) -> None:
    atomic_write(path, encode_pgm16(image))


def read_pgm16(path: PathLike) -> DepthImage:
    return decode_pgm16(Path(path).read_bytes())


def write_pgm8(image: SemanticImage, path: PathLike) -> None:
    atomic_write(path, encode_pgm8(image))


def read_pgm8(path: PathLike, taxonomy=None) -> SemanticImage:
    return decode_pgm8(Path(path).read_bytes(), taxonomy)


def write_ppm(image: ColorImage, path: PathLike) -> None:
    atomic_write(path, encode_ppm(image))


def read_ppm(path: PathLike) -> ColorImage:
    return decode_ppm(Path(path).read_bytes())
