"""CSV matrices and binary PGM images."""
import numpy as np

from .operators import SamplingMask


def write_matrix_csv(path, matrix):
    """First line holds ``rows,cols``; then one comma-separated line per row."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    rows, cols = matrix.shape
    with open(path, "w") as fh:
        fh.write(f"{rows},{cols}\n")
        for row in matrix:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
    except ValueError as exc:
        raise ValueError(f"{path}: first line must be 'rows,cols'") from exc
    data = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    matrix = np.array(data, dtype=float).reshape(len(data), -1) if data else np.empty((0, cols))
    if matrix.shape != (rows, cols):
        raise ValueError(f"{path}: header says {rows}x{cols}, data is {matrix.shape}")
    return matrix


def write_mask_csv(path, mask):
    write_matrix_csv(path, mask.selected.astype(float))


def read_mask_csv(path):
    return SamplingMask(read_matrix_csv(path) != 0, pattern="file")


def quantize8(image):
    return np.clip(np.round(np.asarray(image, dtype=float)), 0, 255).astype(np.uint8)


def write_pgm(path, image):
    """Write an 8-bit binary PGM (P5). Values are rounded and clipped to 0..255."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"PGM images must be 2-D, got shape {image.shape}")
    data = quantize8(image)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported")
    pos += 1  # single whitespace after maxval
    data = np.frombuffer(raw[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape(h, w).astype(float)
