"""Image and disparity file formats: PGM/PNG input, PFM disparity maps."""
from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .costvol import DisparityMap, GrayImage
from .errors import FormatError

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_LUMA = np.array([0.299, 0.587, 0.114])


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise FormatError(f"{path}: no such file") from None


def _pgm_header(data: bytes, path):
    """Parse magic, width, height, maxval; return them and the payload offset."""
    tokens = []
    pos = 2
    token_re = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")
    while len(tokens) < 3:
        m = token_re.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated PGM header at byte {pos}")
        tokens.append(m.group(2))
        pos = m.end()
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header near byte {pos}") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    return width, height, maxval, pos


def _read_pgm(data: bytes, path) -> np.ndarray:
    magic = data[:2]
    width, height, maxval, pos = _pgm_header(data, path)
    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = pos + count * dtype.itemsize
        if len(data) < need:
            raise FormatError(f"{path}: truncated PGM payload, expected {need} bytes, file ends at byte {len(data)}")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    else:
        fields = data[pos:].split()
        if len(fields) < count:
            raise FormatError(f"{path}: truncated ASCII PGM, {len(fields)} of {count} samples before byte {len(data)}")
        try:
            raw = np.array([int(f) for f in fields[:count]])
        except ValueError:
            raise FormatError(f"{path}: non-integer sample in ASCII PGM payload after byte {pos}") from None
    img = raw.reshape(height, width).astype(np.float64) / maxval
    if img.max() > 1:
        raise FormatError(f"{path}: sample exceeds maxval {maxval}")
    return img


def _read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "P":
                im = im.convert("RGB")
                mode = "RGB"
            arr = np.asarray(im)
    except OSError as exc:
        raise FormatError(f"{path}: cannot decode PNG ({exc})") from None
    if mode in ("I;16", "I;16B", "I"):
        return arr.astype(np.float64) / 65535.0
    scale = 65535.0 if arr.dtype == np.uint16 else 255.0
    arr = arr.astype(np.float64) / scale
    if arr.ndim == 2:
        return arr
    if mode == "LA":
        return arr[..., 0]
    return arr[..., :3] @ _LUMA


def read_image(path) -> GrayImage:
    """Read a PGM (P2/P5) or PNG (gray or RGB, converted by luminance) image."""
    data = _read_bytes(path)
    if data[:2] in (b"P2", b"P5"):
        px = _read_pgm(data, path)
    elif data[:8] == PNG_MAGIC:
        px = _read_png(path)
    else:
        raise FormatError(f"{path}: unknown image format (byte 0: {data[:2]!r})")
    return GrayImage(np.clip(px, 0.0, 1.0))


def write_pgm(img, path, maxval: int = 255) -> None:
    px = img.pixels if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    height, width = px.shape
    dtype = ">u2" if maxval > 255 else "u1"
    payload = np.round(np.clip(px, 0, 1) * maxval).astype(dtype).tobytes()
    Path(path).write_bytes(f"P5\n{width} {height}\n{maxval}\n".encode() + payload)


def write_pfm(dmap: DisparityMap, path) -> None:
    """Write a single-channel little-endian PFM; invalid pixels become +inf."""
    values = np.where(dmap.valid, dmap.values, np.inf).astype("<f4")
    header = f"Pf\n{dmap.width} {dmap.height}\n-1.0\n".encode("ascii")
    Path(path).write_bytes(header + np.flipud(values).tobytes())


def _header_line(data: bytes, pos: int, path) -> tuple[bytes, int]:
    end = data.find(b"\n", pos)
    if end < 0:
        raise FormatError(f"{path}: truncated PFM header at byte {pos}")
    return data[pos:end].strip(), end + 1


def read_pfm(path) -> DisparityMap:
    data = _read_bytes(path)
    magic, pos = _header_line(data, 0, path)
    if magic == b"PF":
        raise FormatError(f"{path}: color PFM unsupported")
    if magic != b"Pf":
        raise FormatError(f"{path}: not a PFM file")
    dims, pos = _header_line(data, pos, path)
    scale_line, pos = _header_line(data, pos, path)
    try:
        width, height = (int(t) for t in dims.split())
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM header") from None
    if width <= 0 or height <= 0 or scale == 0:
        raise FormatError(f"{path}: invalid PFM header values")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    expected = width * height * 4
    if len(data) - pos != expected:
        raise FormatError(f"{path}: payload is {len(data) - pos} bytes, expected {expected} (offset {pos})")
    values = np.flipud(np.frombuffer(data, dtype=dtype, offset=pos).reshape(height, width))
    values = values.astype(np.float64)
    return DisparityMap(values, np.isfinite(values))


def read_mask(path) -> np.ndarray:
    """Boolean mask from an image file: nonzero pixels are set."""
    return read_image(path).pixels > 0
