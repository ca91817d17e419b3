"""Design file formats and pixel-outline contour export.

Designs are ``±1`` arrays. PGM files store void as 0 and solid as the
maximum gray value; CSV files store the ``±1`` values directly.
"""

from __future__ import annotations

import csv
import json
import os
from collections import defaultdict
from pathlib import Path
from typing import List, Tuple

import numpy as np


class DesignFormatError(ValueError):
    """A design file could not be parsed as a binary grid."""


# -- PGM ------------------------------------------------------------------------


def write_pgm(path, x: np.ndarray, binary: bool = True) -> None:
    x = _as_pm1(x)
    h, w = x.shape
    pixels = np.where(x > 0, 255, 0).astype(np.uint8)
    with open(path, "wb") as f:
        if binary:
            f.write(f"P5\n{w} {h}\n255\n".encode())
            f.write(pixels.tobytes())
        else:
            f.write(f"P2\n{w} {h}\n255\n".encode())
            for row in pixels:
                f.write((" ".join(map(str, row)) + "\n").encode())


def _pgm_tokens(data: bytes, count: int, start: int = 0):
    """First ``count`` header tokens, skipping comments; returns tokens and end offset."""
    tokens, i, n = [], start, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i >= n:
            raise DesignFormatError("truncated PGM header")
        if data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j:j + 1].isspace():
            j += 1
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), end = _pgm_tokens(data, 4)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise DesignFormatError("malformed PGM header") from None
    if magic == b"P5":
        if maxval > 255:
            raise DesignFormatError("16-bit PGM is not supported")
        raw = data[end + 1:end + 1 + w * h]
        if len(raw) != w * h:
            raise DesignFormatError("truncated PGM data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(int)
    elif magic == b"P2":
        try:
            pixels = np.array(data[end:].split(), dtype=int)
        except ValueError:
            raise DesignFormatError("non-integer PGM data") from None
        if pixels.size != w * h:
            raise DesignFormatError("PGM pixel count does not match header")
        pixels = pixels.reshape(h, w)
    else:
        raise DesignFormatError(f"unsupported PGM magic {magic!r}")
    if not np.all((pixels == 0) | (pixels == maxval)):
        raise DesignFormatError("design PGM must contain only 0 and the maximum gray value")
    return np.where(pixels == maxval, 1, -1).astype(np.int8)


# -- CSV ------------------------------------------------------------------------


def write_csv(path, x: np.ndarray) -> None:
    np.savetxt(path, _as_pm1(x), fmt="%d", delimiter=",")


def read_csv(path) -> np.ndarray:
    try:
        a = np.loadtxt(path, delimiter=",", dtype=int, ndmin=2)
    except ValueError as exc:
        raise DesignFormatError(str(exc)) from None
    if np.all(np.isin(a, (-1, 1))):
        return a.astype(np.int8)
    if np.all(np.isin(a, (0, 1))):
        return np.where(a == 1, 1, -1).astype(np.int8)
    raise DesignFormatError("design CSV must contain -1/1 or 0/1 values")


def read_design(path) -> np.ndarray:
    """Read a design from ``.pgm`` or ``.csv`` (decided by extension)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".csv":
        return read_csv(path)
    raise DesignFormatError(f"unknown design file type {suffix!r}")


def write_design(path, x: np.ndarray) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        write_csv(path, x)
    else:
        write_pgm(path, x)


def _as_pm1(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("design must be 2D")
    if x.dtype == bool:
        return np.where(x, 1, -1)
    if not np.all(np.isin(x, (-1, 1))):
        raise ValueError("design values must be -1 or +1")
    return x


def write_field_magnitude(path, field: np.ndarray) -> None:
    """Normalised field magnitude as an 8-bit PGM."""
    mag = np.abs(field)
    mag = (255 * mag / (mag.max() or 1)).round().astype(np.uint8)
    h, w = mag.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(mag.tobytes())


# -- contours ----------------------------------------------------------------------

Loop = List[Tuple[float, float]]


def _signed_area(loop) -> float:
    a = np.asarray(loop, dtype=float)
    x, y = a[:, 0], a[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _simplify(loop):
    out = []
    n = len(loop)
    for k in range(n):
        prev, cur, nxt = loop[k - 1], loop[k], loop[(k + 1) % n]
        if (cur[0] - prev[0]) * (nxt[1] - cur[1]) != (cur[1] - prev[1]) * (nxt[0] - cur[0]):
            out.append(cur)
    return out


def pixel_contours(x: np.ndarray, pitch: float = 1.0) -> List[Loop]:
    """Closed pixel-boundary loops around solid regions.

    Pixel ``(i, j)`` covers ``[i, i+1] x [j, j+1]`` times ``pitch``. Loops keep
    solid on their left, so outer boundaries run counterclockwise and holes
    clockwise. Solid pixels meeting only at a corner belong to separate loops.
    """
    solid = np.pad(np.asarray(x) > 0, 1)
    nxt = defaultdict(list)
    for i, j in np.argwhere(solid):
        i, j = int(i), int(j)
        if not solid[i, j - 1]:
            nxt[(i, j)].append((i + 1, j))
        if not solid[i + 1, j]:
            nxt[(i + 1, j)].append((i + 1, j + 1))
        if not solid[i, j + 1]:
            nxt[(i + 1, j + 1)].append((i, j + 1))
        if not solid[i - 1, j]:
            nxt[(i, j + 1)].append((i, j))

    def pick(prev, cur, options):
        if len(options) == 1:
            return options[0]
        dx, dy = cur[0] - prev[0], cur[1] - prev[1]
        left = (cur[0] - dy, cur[1] + dx)
        return left if left in options else options[0]

    loops = []
    for start in sorted(nxt):
        while nxt[start]:
            loop = [start]
            cur = nxt[start].pop(0)
            prev = start
            while cur != start:
                loop.append(cur)
                step = pick(prev, cur, nxt[cur])
                nxt[cur].remove(step)
                prev, cur = cur, step
            loops.append(loop)
    # undo the one-pixel pad
    return [[((a - 1) * pitch, (b - 1) * pitch) for a, b in _simplify(loop)] for loop in loops]


def contours_to_json(x: np.ndarray, pitch_nm: float) -> dict:
    loops = pixel_contours(x, pitch_nm)
    return {
        "units": "nm",
        "pitch_nm": pitch_nm,
        "shape": list(np.shape(x)),
        "loops": [
            {"orientation": "ccw" if _signed_area(l) > 0 else "cw", "vertices": [list(v) for v in l]}
            for l in loops
        ],
    }


def rasterize_contours(loops, shape, pitch: float = 1.0) -> np.ndarray:
    """Even-odd rasterisation of loops at pixel centers (inverse of :func:`pixel_contours`)."""
    h, w = shape
    inside = np.zeros(shape, dtype=bool)
    cx = (np.arange(h) + 0.5) * pitch
    cy = (np.arange(w) + 0.5) * pitch
    for loop in loops:
        pts = list(loop) + [loop[0]]
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            if x0 != x1:
                continue
            # vertical edge at x0 spanning [y0, y1]: toggle pixels left of it
            lo, hi = sorted((y0, y1))
            rows = cx < x0
            cols = (cy > lo) & (cy < hi)
            inside[np.ix_(rows, cols)] ^= True
    return np.where(inside, 1, -1).astype(np.int8)


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        wr.writerows(rows)
