"""Image containers and primitives used by every downstream stage.

Frames are plain 2-D float64 arrays with intensities in [0, 1]; color frames
are (H, W, 3) in RGB order.  All operations here are pure functions: inputs
are never mutated, so they are safe to call from any number of workers.

Also houses frame file I/O: binary PGM (P5), PPM (P6) and Y4M (4:2:0) video
ingestion.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError

GRAY_WEIGHTS = (0.299, 0.587, 0.114)  # ITU-R 601


# ---------------------------------------------------------------------------
# validation helpers


def as_frame(a) -> np.ndarray:
    """Validate a 2-D intensity frame and return it as float64."""
    f = np.asarray(a, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise DataError(f"frame must be 2-D and non-empty, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise DataError("frame contains non-finite samples")
    if f.min() < 0.0 or f.max() > 1.0:
        raise DataError("frame intensities must lie in [0, 1]")
    return f


def as_color_frame(a) -> np.ndarray:
    """Validate an (H, W, 3) RGB frame and return it as float64."""
    c = np.asarray(a, dtype=np.float64)
    if c.ndim != 3 or c.shape[2] != 3 or c.shape[0] < 1 or c.shape[1] < 1:
        raise DataError(f"color frame must be (H, W, 3), got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DataError("color frame contains non-finite samples")
    if c.min() < 0.0 or c.max() > 1.0:
        raise DataError("color frame intensities must lie in [0, 1]")
    return c


def to_grayscale(c) -> np.ndarray:
    """Luma conversion, 0.299 R + 0.587 G + 0.114 B, clamped to [0, 1]."""
    c = as_color_frame(c)
    wr, wg, wb = GRAY_WEIGHTS
    gray = wr * c[:, :, 0] + wg * c[:, :, 1] + wb * c[:, :, 2]
    return np.clip(gray, 0.0, 1.0)


# ---------------------------------------------------------------------------
# filtering and pyramids


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def separable_gaussian(a: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian-convolve an arbitrary 2-D array (no range clamping).

    Boundary handling is reflection, which keeps constants exactly constant.
    """
    k = gaussian_kernel1d(sigma)
    out = ndimage.convolve1d(np.asarray(a, dtype=np.float64), k, axis=0, mode="reflect")
    return ndimage.convolve1d(out, k, axis=1, mode="reflect")


def gaussian_blur(f, sigma: float) -> np.ndarray:
    """Blur a [0, 1] frame; the unit-sum kernel keeps the output in [0, 1]."""
    f = as_frame(f)
    return np.clip(separable_gaussian(f, sigma), 0.0, 1.0)


def build_pyramid(f, levels: int) -> list[np.ndarray]:
    """Coarse-to-fine stack: level 0 is the input, each next level is
    blur(sigma=1) followed by 2x decimation (ceil sizes).

    Raises if the coarsest level would drop below 8x8.
    """
    f = as_frame(f)
    if levels < 1:
        raise DataError(f"levels must be >= 1, got {levels}")
    h, w = f.shape
    for _ in range(levels - 1):
        h, w = (h + 1) // 2, (w + 1) // 2
    if h < 8 or w < 8:
        raise DataError(
            f"{levels} levels reduce a {f.shape[0]}x{f.shape[1]} frame below 8x8"
        )
    pyr = [f]
    for _ in range(levels - 1):
        pyr.append(np.clip(separable_gaussian(pyr[-1], 1.0), 0.0, 1.0)[::2, ::2])
    return pyr


# ---------------------------------------------------------------------------
# gradients


@dataclass(frozen=True)
class GradientField:
    """Per-pixel partials: ix, iy in intensity/pixel, it in intensity/frame."""

    ix: np.ndarray
    iy: np.ndarray
    it: np.ndarray


def gradients(f1, f2) -> GradientField:
    """4-point averaged forward differences over a consecutive frame pair.

    Each derivative averages four forward differences taken on the 2x2x2
    cube spanned by the two frames; the bottom/right borders are replicated,
    so the final row/column of ix/iy sees a zero spatial step.
    """
    f1 = as_frame(f1)
    f2 = as_frame(f2)
    if f1.shape != f2.shape:
        raise DataError(f"frame shapes differ: {f1.shape} vs {f2.shape}")
    p1 = np.pad(f1, ((0, 1), (0, 1)), mode="edge")
    p2 = np.pad(f2, ((0, 1), (0, 1)), mode="edge")
    ix = 0.25 * (
        (p1[:-1, 1:] - p1[:-1, :-1])
        + (p1[1:, 1:] - p1[1:, :-1])
        + (p2[:-1, 1:] - p2[:-1, :-1])
        + (p2[1:, 1:] - p2[1:, :-1])
    )
    iy = 0.25 * (
        (p1[1:, :-1] - p1[:-1, :-1])
        + (p1[1:, 1:] - p1[:-1, 1:])
        + (p2[1:, :-1] - p2[:-1, :-1])
        + (p2[1:, 1:] - p2[:-1, 1:])
    )
    it = 0.25 * (
        (p2[:-1, :-1] - p1[:-1, :-1])
        + (p2[1:, :-1] - p1[1:, :-1])
        + (p2[:-1, 1:] - p1[:-1, 1:])
        + (p2[1:, 1:] - p1[1:, 1:])
    )
    return GradientField(ix=ix, iy=iy, it=it)


def otsu_threshold(values, bins: int = 256) -> float:
    """Between-class-variance-maximizing threshold over a 256-bin histogram.

    Binarize as value > t.  Constant input returns that value, so the
    binarized result is empty.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return lo
    hist, edges = np.histogram(v, bins=bins, range=(lo, hi))
    p = hist.astype(np.float64) / v.size
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(p)
    w1 = 1.0 - w0
    mu0 = np.cumsum(p * centers)
    mu_all = mu0[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        between = (mu_all * w0 - mu0) ** 2 / (w0 * w1)
    between[~np.isfinite(between)] = -1.0
    return float(edges[int(np.argmax(between)) + 1])


# ---------------------------------------------------------------------------
# connected components


@dataclass(frozen=True)
class Component:
    """One 8-connected region of a binary mask.

    pixels is an (N, 2) array of (row, col) coordinates; bbox is half-open
    (row0, col0, row1, col1).
    """

    id: int
    pixels: np.ndarray
    bbox: tuple[int, int, int, int]

    @property
    def area(self) -> int:
        return self.pixels.shape[0]


def connected_components(mask, min_area: int = 16) -> list[Component]:
    """8-connectivity labeling, components sorted by area descending.

    Components with fewer than min_area pixels are dropped; pass min_area=0
    to keep everything.  Ids are reassigned 1..n after sorting.
    """
    m = np.asarray(mask)
    if m.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {m.shape}")
    vals = np.unique(m)
    if not np.all(np.isin(vals, (0, 1))):
        raise DataError("mask values must be 0 or 1")
    labels, n = ndimage.label(m, structure=np.ones((3, 3), dtype=np.int32))
    comps = []
    for lab in range(1, n + 1):
        rows, cols = np.nonzero(labels == lab)
        if rows.size < min_area:
            continue
        bbox = (int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1)
        comps.append((rows.size, lab, np.column_stack([rows, cols]), bbox))
    comps.sort(key=lambda t: (-t[0], t[1]))
    return [
        Component(id=i + 1, pixels=px, bbox=bb)
        for i, (_, _, px, bb) in enumerate(comps)
    ]


# ---------------------------------------------------------------------------
# PGM / PPM I/O


def _read_pnm_header(data: bytes, magic: bytes) -> tuple[int, int, int, int]:
    # Returns (width, height, maxval, offset of raster).
    if not data.startswith(magic):
        raise DataError(f"expected {magic.decode()} file")
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.match(rb"(?:\s+|#[^\n]*\n)*([0-9]+)", data[pos:])
        if not m:
            raise DataError("truncated PNM header")
        tokens.append(int(m.group(1)))
        pos += m.end()
    if data[pos : pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise DataError("malformed PNM header")
    w, h, maxval = tokens
    if maxval != 255:
        raise DataError(f"only 8-bit PNM supported, maxval={maxval}")
    return w, h, maxval, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM (P5) into a [0, 1] frame."""
    data = open(path, "rb").read()
    w, h, _, off = _read_pnm_header(data, b"P5")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=off)
    if raster.size != w * h:
        raise DataError("PGM raster truncated")
    return raster.reshape(h, w).astype(np.float64) / 255.0


def write_pgm(path, f) -> None:
    f = as_frame(f)
    h, w = f.shape
    raster = np.round(f * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary 8-bit PPM (P6) into a [0, 1] RGB frame."""
    data = open(path, "rb").read()
    w, h, _, off = _read_pnm_header(data, b"P6")
    raster = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=off)
    if raster.size != w * h * 3:
        raise DataError("PPM raster truncated")
    return raster.reshape(h, w, 3).astype(np.float64) / 255.0


def write_ppm(path, c) -> None:
    c = as_color_frame(c)
    h, w, _ = c.shape
    raster = np.round(c * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(raster.tobytes())


# ---------------------------------------------------------------------------
# Y4M (YUV4MPEG2, 4:2:0) ingestion
#
# Full-range BT.601 ("JPEG levels"), matching the C420jpeg tag we write.

_Y4M_MAGIC = b"YUV4MPEG2"


def _rgb_to_ycbcr(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r, g, b = c[:, :, 0] * 255.0, c[:, :, 1] * 255.0, c[:, :, 2] * 255.0
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return y, cb, cr


def _ycbcr_to_rgb(y: np.ndarray, cb: np.ndarray, cr: np.ndarray) -> np.ndarray:
    cb = cb - 128.0
    cr = cr - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    rgb = np.stack([r, g, b], axis=2) / 255.0
    return np.clip(rgb, 0.0, 1.0)


def write_y4m(path, frames, fps: tuple[int, int] = (10, 1)) -> None:
    """Write RGB frames as 4:2:0 Y4M; width and height must be even."""
    frames = [as_color_frame(f) for f in frames]
    if not frames:
        raise DataError("no frames to write")
    h, w, _ = frames[0].shape
    if h % 2 or w % 2:
        raise DataError("Y4M 4:2:0 requires even frame dimensions")
    with open(path, "wb") as fh:
        fh.write(b"YUV4MPEG2 W%d H%d F%d:%d Ip A1:1 C420jpeg\n" % (w, h, *fps))
        for c in frames:
            if c.shape != frames[0].shape:
                raise DataError("all frames in a clip must share one shape")
            y, cb, cr = _rgb_to_ycbcr(c)
            cb = 0.25 * (cb[0::2, 0::2] + cb[0::2, 1::2] + cb[1::2, 0::2] + cb[1::2, 1::2])
            cr = 0.25 * (cr[0::2, 0::2] + cr[0::2, 1::2] + cr[1::2, 0::2] + cr[1::2, 1::2])
            fh.write(b"FRAME\n")
            for plane in (y, cb, cr):
                fh.write(np.clip(np.round(plane), 0, 255).astype(np.uint8).tobytes())


def read_y4m(path) -> tuple[list[np.ndarray], tuple[int, int]]:
    """Read a 4:2:0 Y4M file into a list of RGB frames plus (fps_num, fps_den)."""
    data = open(path, "rb").read()
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(_Y4M_MAGIC):
        raise DataError("not a YUV4MPEG2 stream")
    w = h = None
    fps = (25, 1)
    for tok in data[len(_Y4M_MAGIC) : nl].split():
        key, val = tok[:1], tok[1:]
        if key == b"W":
            w = int(val)
        elif key == b"H":
            h = int(val)
        elif key == b"F":
            num, den = val.split(b":")
            fps = (int(num), int(den))
        elif key == b"C" and not val.startswith(b"420"):
            raise DataError(f"unsupported Y4M chroma mode {val.decode()}")
    if not w or not h:
        raise DataError("Y4M header missing W/H")
    if h % 2 or w % 2:
        raise DataError("Y4M 4:2:0 requires even frame dimensions")
    frame_bytes = w * h + 2 * (w // 2) * (h // 2)
    frames = []
    pos = nl + 1
    while pos < len(data):
        fnl = data.find(b"\n", pos)
        if fnl < 0 or not data[pos:fnl].startswith(b"FRAME"):
            raise DataError("malformed Y4M frame header")
        pos = fnl + 1
        if pos + frame_bytes > len(data):
            raise DataError("Y4M frame raster truncated")
        raw = np.frombuffer(data, dtype=np.uint8, count=frame_bytes, offset=pos)
        y = raw[: w * h].reshape(h, w).astype(np.float64)
        cb = raw[w * h : w * h + (w // 2) * (h // 2)].reshape(h // 2, w // 2)
        cr = raw[w * h + (w // 2) * (h // 2) :].reshape(h // 2, w // 2)
        cb = np.repeat(np.repeat(cb, 2, axis=0), 2, axis=1).astype(np.float64)
        cr = np.repeat(np.repeat(cr, 2, axis=0), 2, axis=1).astype(np.float64)
        frames.append(_ycbcr_to_rgb(y, cb, cr))
        pos += frame_bytes
    return frames, fps
