"""Binary PGM (P5) reading and writing.

Depth inputs are written 16-bit and scaled to [0, 1] on load; label maps are
8-bit with the pixel value equal to the label id.  16-bit samples are
big-endian per the format.
"""

import numpy as np

from .errors import FormatError


def _read_header(data: bytes):
    """Parse magic, width, height, maxval; returns (w, h, maxval, offset)."""
    if not data.startswith(b"P5"):
        raise FormatError(f"magic: expected 'P5', got {data[:2]!r}")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError("header: truncated before maxval")
        ch = data[pos:pos + 1]
        if ch == b"#":  # comment runs to end of line
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tokens.append(data[start:pos])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("header: missing whitespace before pixel data")
    pos += 1
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise FormatError(f"header: non-integer fields {tokens!r}")
    if width < 1 or height < 1:
        raise FormatError(f"dimensions: invalid {width}x{height}")
    if not 0 < maxval < 65536:
        raise FormatError(f"maxval: {maxval} outside (0, 65536)")
    return width, height, maxval, pos


def _read_raw(path) -> tuple:
    with open(path, "rb") as f:
        data = f.read()
    width, height, maxval, pos = _read_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = width * height * dtype.itemsize
    body = data[pos:pos + expected]
    if len(body) != expected:
        raise FormatError(
            f"pixel data: expected {expected} bytes, found {len(body)}")
    raw = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return raw.astype(np.int64), maxval


def read_pgm(path) -> np.ndarray:
    """(H, W) float64 in [0, 1]: stored value / maxval."""
    raw, maxval = _read_raw(path)
    return raw / float(maxval)


def write_pgm(path, values: np.ndarray, maxval: int = 65535) -> None:
    """Quantize [0, 1] floats to maxval steps and write binary P5."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise FormatError(f"dimensions: expected 2-d image, got shape {values.shape}")
    raw = np.rint(np.clip(values, 0.0, 1.0) * maxval).astype(np.int64)
    height, width = values.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n{maxval}\n".encode("ascii"))
        f.write(raw.astype(dtype).tobytes())


def read_label_map(path, num_labels: int) -> np.ndarray:
    """(H, W) int64 label ids; rejects any value >= num_labels."""
    raw, _ = _read_raw(path)
    if raw.max() >= num_labels:
        raise FormatError(
            f"label value: {int(raw.max())} >= label count {num_labels}")
    return raw


def write_label_map(path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise FormatError(f"dimensions: expected 2-d label map, got {labels.shape}")
    if labels.min() < 0 or labels.max() > 255:
        raise FormatError("label value: outside 8-bit range")
    height, width = labels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        f.write(labels.astype(np.uint8).tobytes())
