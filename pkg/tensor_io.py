"""
File formats for tensors, weights, images and stage dumps
TensorFile (AST1), WeightsFile (ASGW) and binary Netpbm (P5/P6), all little-endian
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Mapping, Tuple

import numpy as np

from config import TENSOR_EXTENSION
from errors import DomainError, FormatError, ShapeError
from params import GraphLayout, ParamStore, params_from_tensors, params_to_tensors
from tensor_ops import DTYPE

logger = logging.getLogger(__name__)

TENSOR_MAGIC = b"AST1"
WEIGHTS_MAGIC = b"ASGW"
MAX_RANK = 4
NETPBM_MAXVAL = 255
SUMMARY_FILE = "summary.json"


# ---------------------------------------------------------------------------
# TensorFile
# ---------------------------------------------------------------------------

def encode_tensor(t) -> bytes:
    """magic, u32 rank, rank x u32 dims, f32 payload in row-major order"""
    a = np.ascontiguousarray(t, dtype="<f4")
    if a.ndim > MAX_RANK:
        raise ShapeError("encode_tensor", "rank", f"<= {MAX_RANK}", a.ndim)
    header = TENSOR_MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    return header + a.tobytes()


def decode_tensor(data: bytes, offset: int = 0, source="<bytes>") -> Tuple[np.ndarray, int]:
    """
    Decode one TensorFile starting at `offset`.

    Returns:
        Tuple: (float32 tensor, offset just past the payload)

    Raises:
        FormatError: bad magic, rank above 4 or truncated data
    """
    if data[offset:offset + 4] != TENSOR_MAGIC:
        raise FormatError(source, offset, f"bad magic {bytes(data[offset:offset + 4])!r}, expected {TENSOR_MAGIC!r}")
    pos = offset + 4
    if len(data) < pos + 4:
        raise FormatError(source, len(data), "truncated rank")
    (rank,) = struct.unpack_from("<I", data, pos)
    if rank > MAX_RANK:
        raise FormatError(source, pos, f"rank {rank} exceeds {MAX_RANK}")
    pos += 4
    if len(data) < pos + 4 * rank:
        raise FormatError(source, len(data), "truncated dims")
    dims = struct.unpack_from(f"<{rank}I", data, pos)
    pos += 4 * rank
    nbytes = 4 * int(np.prod(dims, dtype=np.int64))
    if len(data) < pos + nbytes:
        raise FormatError(source, len(data),
                          f"truncated payload: expected {nbytes} bytes, got {len(data) - pos}")
    payload = np.frombuffer(data, dtype="<f4", count=nbytes // 4, offset=pos)
    return payload.astype(DTYPE).reshape(dims), pos + nbytes


def write_tensor(t, path) -> None:
    Path(path).write_bytes(encode_tensor(t))
    logger.info("wrote tensor %s to %s", np.shape(t), path)


def read_tensor(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tensor, end = decode_tensor(data, 0, path)
    if end != len(data):
        raise FormatError(path, end, f"{len(data) - end} trailing bytes")
    return tensor


# ---------------------------------------------------------------------------
# WeightsFile
# ---------------------------------------------------------------------------

def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    """magic, u32 count, then [u16 name length, UTF-8 name, TensorFile] per tensor"""
    chunks = [WEIGHTS_MAGIC, struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(encode_tensor(tensor))
    return b"".join(chunks)


def decode_weights(data: bytes, source="<bytes>") -> Dict[str, np.ndarray]:
    if data[:4] != WEIGHTS_MAGIC:
        raise FormatError(source, 0, f"bad magic {bytes(data[:4])!r}, expected {WEIGHTS_MAGIC!r}")
    if len(data) < 8:
        raise FormatError(source, len(data), "truncated record count")
    (count,) = struct.unpack_from("<I", data, 4)
    pos = 8
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        if len(data) < pos + 2:
            raise FormatError(source, len(data), "truncated name length")
        (length,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if len(data) < pos + length:
            raise FormatError(source, len(data), "truncated name")
        try:
            name = bytes(data[pos:pos + length]).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(source, pos, "name is not valid UTF-8") from None
        if name in tensors:
            raise FormatError(source, pos, f"duplicate tensor name {name}")
        pos += length
        tensors[name], pos = decode_tensor(data, pos, source)
    if pos != len(data):
        raise FormatError(source, pos, f"{len(data) - pos} trailing bytes")
    return tensors


def save_weights(store: ParamStore, path) -> None:
    tensors = params_to_tensors(store)
    Path(path).write_bytes(encode_weights(tensors))
    logger.info("saved %d tensors to %s", len(tensors), path)


def load_weights(path, layout: GraphLayout) -> ParamStore:
    """Read a weights file and validate every name and shape against the layout"""
    return params_from_tensors(layout, decode_weights(Path(path).read_bytes(), path))


# ---------------------------------------------------------------------------
# Netpbm
# ---------------------------------------------------------------------------

def _skip_blank(data: bytes, pos: int) -> int:
    while pos < len(data):
        if data[pos:pos + 1].isspace():
            pos += 1
        elif data[pos:pos + 1] == b"#":
            newline = data.find(b"\n", pos)
            pos = len(data) if newline < 0 else newline + 1
        else:
            break
    return pos


def _parse_header(data: bytes, source) -> Tuple[int, int, int, int]:
    """Returns (channels, width, height, payload offset)"""
    magic = bytes(data[:2])
    if magic not in (b"P5", b"P6"):
        raise FormatError(source, 0, f"bad magic {magic!r}, expected b'P5' or b'P6'")
    channels = 1 if magic == b"P5" else 3
    pos = 2
    values, starts = [], []
    for field_name in ("width", "height", "maxval"):
        after = _skip_blank(data, pos)
        if after == pos:
            raise FormatError(source, pos, f"expected whitespace before {field_name}")
        pos = after
        start = pos
        while pos < len(data) and data[pos:pos + 1].isdigit():
            pos += 1
        if pos == start:
            problem = "truncated header" if pos >= len(data) else f"expected {field_name}"
            raise FormatError(source, pos, problem)
        values.append(int(data[start:pos]))
        starts.append(start)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(source, pos, "expected a single whitespace byte after maxval")
    width, height, maxval = values
    if width < 1 or height < 1:
        raise FormatError(source, starts[0], f"image size {width}x{height} is empty")
    if maxval != NETPBM_MAXVAL:
        raise FormatError(source, starts[2], f"maxval {maxval} unsupported, expected {NETPBM_MAXVAL}")
    return channels, width, height, pos + 1


def decode_image(data: bytes, source="<bytes>", binarize: bool = False) -> np.ndarray:
    """P5/P6 bytes to a (1, C, H, W) float32 tensor in [0, 1]"""
    channels, width, height, pos = _parse_header(data, source)
    need = width * height * channels
    if len(data) - pos < need:
        raise FormatError(source, len(data),
                          f"truncated payload: expected {need} bytes, got {len(data) - pos}")
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    image = pixels.reshape(height, width, channels).transpose(2, 0, 1)[None]
    image = image.astype(DTYPE) / DTYPE(NETPBM_MAXVAL)
    if binarize:
        image = (image >= 0.5).astype(DTYPE)
    return image


def _as_planes(t) -> np.ndarray:
    a = np.asarray(t, dtype=np.float64)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ShapeError("write_image", "batch", 1, a.shape[0])
        a = a[0]
    elif a.ndim == 2:
        a = a[None]
    if a.ndim != 3 or a.shape[0] not in (1, 3):
        raise ShapeError("write_image", "channels", "1 or 3", a.shape[0] if a.ndim == 3 else a.shape)
    return a


def encode_image(t) -> bytes:
    """Quantize with floor(255 v + 0.5); one channel gives P5, three give P6"""
    planes = _as_planes(t)
    if not np.isfinite(planes).all() or planes.min() < 0.0 or planes.max() > 1.0:
        raise DomainError("write_image: pixel values must lie in [0, 1]")
    channels, height, width = planes.shape
    quantized = np.floor(planes * NETPBM_MAXVAL + 0.5).astype(np.uint8)
    magic = b"P5" if channels == 1 else b"P6"
    header = magic + f"\n{width} {height}\n{NETPBM_MAXVAL}\n".encode("ascii")
    return header + quantized.transpose(1, 2, 0).tobytes()


def read_image(path, binarize: bool = False) -> np.ndarray:
    return decode_image(Path(path).read_bytes(), path, binarize)


def write_image(t, path) -> None:
    Path(path).write_bytes(encode_image(t))
    logger.info("wrote image to %s", path)


# ---------------------------------------------------------------------------
# Stage dumps
# ---------------------------------------------------------------------------

def write_stage_dump(tensors: Mapping[str, np.ndarray], directory, summary: Mapping = None) -> Path:
    """One TensorFile per named tensor plus an optional summary.json"""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, tensor in tensors.items():
        (out / f"{name}{TENSOR_EXTENSION}").write_bytes(encode_tensor(tensor))
    if summary is not None:
        (out / SUMMARY_FILE).write_text(json.dumps(dict(summary), indent=2), encoding="utf-8")
    logger.info("dumped %d stage tensors to %s", len(tensors), out)
    return out


def read_stage_dump(directory) -> Dict[str, np.ndarray]:
    """Tensors of a dump directory keyed by file stem, sorted by name"""
    folder = Path(directory)
    return {path.stem: read_tensor(path) for path in sorted(folder.glob(f"*{TENSOR_EXTENSION}"))}


def read_dump_summary(directory) -> Dict:
    path = Path(directory) / SUMMARY_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))
