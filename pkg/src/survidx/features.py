"""Visual descriptor bank, computed per region class.

Every key-frame yields up to three variants of each descriptor: Inside (the
segmented moving region / its bounding box), Outside (the complement mask),
and KeyFrame (the whole frame).  Histogram-style descriptors are L1-normalized
to sum 1; moment/filter-bank descriptors are L2-normalized.  Degenerate inputs
(no gradients, no edges, no motion) return all-zero vectors where documented.

All functions are pure; descriptors for one frame may be computed in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import ndimage, signal

from .errors import DataError
from .imgcore import as_color_frame, as_frame, otsu_threshold, to_grayscale
from .optflow import FlowField
from .segment import SegmentationResult


class DescriptorId(str, Enum):
    ColorHistHSV = "ColorHistHSV"
    ColorMomentsLab = "ColorMomentsLab"
    CooccurrenceTexture = "CooccurrenceTexture"
    GaborTexture = "GaborTexture"
    FourierEdge = "FourierEdge"
    Sift = "Sift"
    SiftGabor = "SiftGabor"
    WaveletEnergy = "WaveletEnergy"
    HoughHist = "HoughHist"
    MotionActivity = "MotionActivity"


DIMENSIONS = {
    DescriptorId.ColorHistHSV: 128,
    DescriptorId.ColorMomentsLab: 81,
    DescriptorId.CooccurrenceTexture: 96,
    DescriptorId.GaborTexture: 48,
    DescriptorId.FourierEdge: 512,
    DescriptorId.Sift: 128,
    DescriptorId.SiftGabor: 176,
    DescriptorId.WaveletEnergy: 10,
    DescriptorId.HoughHist: 36,
    DescriptorId.MotionActivity: 10,
}

# Descriptors whose output is a distribution (non-negative, sums to 1 unless
# degenerate).
HISTOGRAM_IDS = {
    DescriptorId.ColorHistHSV,
    DescriptorId.FourierEdge,
    DescriptorId.WaveletEnergy,
    DescriptorId.HoughHist,
    DescriptorId.MotionActivity,
}


class RegionClass(str, Enum):
    Inside = "Inside"
    Outside = "Outside"
    KeyFrame = "KeyFrame"


@dataclass(frozen=True)
class FeatureVector:
    id: DescriptorId
    region: RegionClass
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (DIMENSIONS[self.id],):
            raise DataError(
                f"{self.id.value} expects {DIMENSIONS[self.id]} values, got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise DataError(f"{self.id.value} has non-finite values")
        object.__setattr__(self, "values", v)


def _l2(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    return v / n if n > 0 else v


def _l1(v: np.ndarray) -> np.ndarray:
    s = float(v.sum())
    return v / s if s > 0 else v


# ---------------------------------------------------------------------------
# color


def rgb_to_hsv(c: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized RGB -> HSV with h, s, v all in [0, 1] (h wraps)."""
    r, g, b = c[:, :, 0], c[:, :, 1], c[:, :, 2]
    v = c.max(axis=2)
    delta = v - c.min(axis=2)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)
    h = np.zeros_like(v)
    nz = delta > 0
    rmax = nz & (v == r)
    gmax = nz & (v == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    d = np.where(nz, delta, 1.0)
    h[rmax] = (((g - b) / d)[rmax] / 6.0) % 1.0
    h[gmax] = ((b - r) / d)[gmax] / 6.0 + 1.0 / 3.0
    h[bmax] = ((r - g) / d)[bmax] / 6.0 + 2.0 / 3.0
    return h % 1.0, s, v


def color_hist_hsv(c, mask=None) -> FeatureVector:
    """128-bin HSV histogram (8 hue x 4 saturation x 4 value), L1-normalized
    over the selected pixels."""
    c = as_color_frame(c)
    h, s, v = rgb_to_hsv(c)
    if mask is not None:
        sel = np.asarray(mask, dtype=bool)
        if sel.shape != h.shape:
            raise DataError("mask shape does not match frame")
        if not sel.any():
            raise DataError("empty mask for color histogram")
        h, s, v = h[sel], s[sel], v[sel]
    hi = np.minimum((h * 8).astype(int), 7)
    si = np.minimum((s * 4).astype(int), 3)
    vi = np.minimum((v * 4).astype(int), 3)
    hist = np.bincount((hi * 16 + si * 4 + vi).ravel(), minlength=128).astype(np.float64)
    return FeatureVector(DescriptorId.ColorHistHSV, RegionClass.KeyFrame, _l1(hist))


_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_D65 = np.array([0.95047, 1.0, 1.08883])


def rgb_to_lab(c: np.ndarray) -> np.ndarray:
    """sRGB (D65) -> CIELAB; returns an (H, W, 3) array of L, a, b."""
    lin = np.where(c > 0.04045, ((c + 0.055) / 1.055) ** 2.4, c / 12.92)
    xyz = lin @ _SRGB_TO_XYZ.T / _D65
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[:, :, 0] = 116.0 * f[:, :, 1] - 16.0
    lab[:, :, 1] = 500.0 * (f[:, :, 0] - f[:, :, 1])
    lab[:, :, 2] = 200.0 * (f[:, :, 1] - f[:, :, 2])
    return lab


def _cell_moments(values: np.ndarray) -> tuple[float, float, float]:
    """Mean, population standard deviation, and cube root of the third
    central moment of a flat sample."""
    m = float(values.mean())
    centered = values - m
    var = float((centered**2).mean())
    third = float((centered**3).mean())
    return m, math.sqrt(var), float(np.cbrt(third))


def color_moments_lab(c) -> FeatureVector:
    """First three moments per 3x3 grid cell and Lab channel, 81 values,
    L2-normalized.  Order: cells row-major, then channel (L, a, b), then
    (mean, std, cbrt-skew)."""
    c = as_color_frame(c)
    if c.shape[0] < 3 or c.shape[1] < 3:
        raise DataError("color moments need a frame of at least 3x3")
    lab = rgb_to_lab(c)
    rows = np.array_split(np.arange(c.shape[0]), 3)
    cols = np.array_split(np.arange(c.shape[1]), 3)
    out = []
    for rr in rows:
        for cc in cols:
            cell = lab[np.ix_(rr, cc)]
            for ch in range(3):
                out.extend(_cell_moments(cell[:, :, ch].ravel()))
    return FeatureVector(DescriptorId.ColorMomentsLab, RegionClass.KeyFrame, _l2(np.array(out)))


# ---------------------------------------------------------------------------
# co-occurrence texture

GLCM_LEVELS = 32
# 8 directions at 45 degree steps, each at pixel distances 1, 2, 3.
_GLCM_DIRECTIONS = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)]
_GLCM_DISTANCES = (1, 2, 3)


def _glcm_matrix(q: np.ndarray, valid: np.ndarray, dr: int, dc: int) -> np.ndarray:
    h, w = q.shape
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    if r0 >= r1 or c0 >= c1:
        return np.zeros((GLCM_LEVELS, GLCM_LEVELS))
    a = q[r0:r1, c0:c1]
    b = q[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
    ok = valid[r0:r1, c0:c1] & valid[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
    if not ok.any():
        return np.zeros((GLCM_LEVELS, GLCM_LEVELS))
    pairs = np.bincount(
        a[ok].ravel() * GLCM_LEVELS + b[ok].ravel(), minlength=GLCM_LEVELS * GLCM_LEVELS
    ).reshape(GLCM_LEVELS, GLCM_LEVELS)
    m = pairs + pairs.T  # symmetric
    return m / m.sum()


def glcm_stats(f, mask=None) -> FeatureVector:
    """Entropy, energy, contrast and homogeneity of symmetric co-occurrence
    matrices at 24 offsets (8 directions x distances 1..3), 96 values.

    Intensities are quantized to 32 gray levels (8-bit then /8).  Offsets
    with no valid pixel pair yield four zeros.  Entropy uses log2.
    """
    f = as_frame(f)
    if mask is None:
        valid = np.ones(f.shape, dtype=bool)
    else:
        valid = np.asarray(mask, dtype=bool)
        if valid.shape != f.shape:
            raise DataError("mask shape does not match frame")
    if valid.sum() < 2:
        raise DataError("co-occurrence texture needs at least 2 masked pixels")
    q = np.minimum(np.round(f * 255.0).astype(np.int64) // 8, GLCM_LEVELS - 1)
    levels = np.arange(GLCM_LEVELS, dtype=np.float64)
    diff2 = (levels[:, None] - levels[None, :]) ** 2
    out = []
    for dr, dc in _GLCM_DIRECTIONS:
        for dist in _GLCM_DISTANCES:
            p = _glcm_matrix(q, valid, dr * dist, dc * dist)
            total = p.sum()
            if total <= 0:
                out.extend((0.0, 0.0, 0.0, 0.0))
                continue
            nz = p[p > 0]
            entropy = float(-(nz * np.log2(nz)).sum())
            energy = float((p * p).sum())
            contrast = float((p * diff2).sum())
            homogeneity = float((p / (1.0 + diff2)).sum())
            out.extend((entropy, energy, contrast, homogeneity))
    return FeatureVector(DescriptorId.CooccurrenceTexture, RegionClass.KeyFrame, np.array(out))


# ---------------------------------------------------------------------------
# Gabor bank

GABOR_FREQS = (0.05, 0.1, 0.2, 0.4)  # cycles/pixel, geometric in [0.05, 0.4]
GABOR_ORIENTATIONS = 6  # k*pi/6


def _gabor_kernel(freq: float, theta: float) -> np.ndarray:
    # One-octave bandwidth fixes sigma relative to the center frequency.
    sigma = math.sqrt(math.log(2.0) / 2.0) * 3.0 / (math.pi * freq)
    radius = int(math.ceil(3.0 * sigma))
    y, x = np.mgrid[-radius : radius + 1, -radius : radius + 1].astype(np.float64)
    xr = x * math.cos(theta) + y * math.sin(theta)
    env = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    k = env * np.exp(2j * np.pi * freq * xr)
    return k - k.mean()  # zero-DC: constants produce no response


def _gabor_response(f: np.ndarray, kern: np.ndarray) -> np.ndarray:
    # Symmetric padding keeps constants constant right up to the border, so
    # the zero-DC kernel sees no spurious edge.
    radius = kern.shape[0] // 2
    padded = np.pad(f, radius, mode="symmetric")
    return np.abs(signal.fftconvolve(padded, kern, mode="valid"))


def gabor_bank(f) -> FeatureVector:
    """Mean and std of 24 Gabor magnitude responses (4 scales x 6
    orientations), 48 values, L2-normalized; all-zero for constant input.

    Order: scales outer (low to high frequency), orientations inner,
    (mean, std) per filter."""
    f = as_frame(f)
    if f.shape[0] < 16 or f.shape[1] < 16:
        raise DataError("gabor bank needs a frame of at least 16x16")
    out = []
    for freq in GABOR_FREQS:
        for k in range(GABOR_ORIENTATIONS):
            kern = _gabor_kernel(freq, k * np.pi / GABOR_ORIENTATIONS)
            mag = _gabor_response(f, kern)
            out.extend((float(mag.mean()), float(mag.std())))
    v = np.array(out)
    if np.allclose(v, 0.0, atol=1e-12):
        v = np.zeros_like(v)
    return FeatureVector(DescriptorId.GaborTexture, RegionClass.KeyFrame, _l2(v))


# ---------------------------------------------------------------------------
# edges


def sobel_edges(f: np.ndarray) -> np.ndarray:
    """Binary edge map: Sobel magnitude thresholded at its Otsu split
    (strict >, so a constant frame has no edges)."""
    gx = ndimage.sobel(f, axis=1, mode="reflect")
    gy = ndimage.sobel(f, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    return mag > otsu_threshold(mag)


def fourier_edge(f) -> FeatureVector:
    """Smoothed, down-sampled DFT amplitude of the binarized edge image.

    The non-redundant half-plane (rfft2 layout: row 0 carries the horizontal
    frequency axis) is box-smoothed 3x3 and area-averaged to 32x16 = 512
    bins, L1-normalized.  An edge-free frame maps to a pure-DC one-hot.
    """
    f = as_frame(f)
    if f.shape[0] < 32 or f.shape[1] < 32:
        raise DataError("fourier edge descriptor needs a frame of at least 32x32")
    edges = sobel_edges(f)
    out = np.zeros(512)
    if not edges.any():
        out[0] = 1.0
        return FeatureVector(DescriptorId.FourierEdge, RegionClass.KeyFrame, out)
    amp = np.abs(np.fft.rfft2(edges.astype(np.float64)))
    amp = ndimage.uniform_filter(amp, size=3, mode="reflect")
    rows = np.array_split(np.arange(amp.shape[0]), 32)
    cols = np.array_split(np.arange(amp.shape[1]), 16)
    for i, rr in enumerate(rows):
        for j, cc in enumerate(cols):
            out[i * 16 + j] = amp[np.ix_(rr, cc)].mean()
    return FeatureVector(DescriptorId.FourierEdge, RegionClass.KeyFrame, _l1(out))


# ---------------------------------------------------------------------------
# SIFT-style region descriptor


def sift_region(f, bbox: tuple[int, int, int, int]) -> FeatureVector:
    """Rotation-aligned 4x4 x 8-orientation gradient histogram (128 values).

    The dominant gradient orientation (36-bin, magnitude-weighted) rotates
    both the gradient angles and the spatial grid, so the descriptor is
    stable under rotations of the region.  Standard SIFT normalization:
    L2, clamp at 0.2, renormalize.  A gradient-free region returns zeros.
    """
    f = as_frame(f)
    r0, c0, r1, c1 = bbox
    if not (0 <= r0 < r1 <= f.shape[0] and 0 <= c0 < c1 <= f.shape[1]):
        raise DataError(f"bbox {bbox} outside frame {f.shape}")
    if r1 - r0 < 8 or c1 - c0 < 8:
        raise DataError(f"bbox {bbox} smaller than 8x8")
    crop = f[r0:r1, c0:c1]
    p = np.pad(crop, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    if mag.sum() <= 0:
        return FeatureVector(DescriptorId.Sift, RegionClass.KeyFrame, np.zeros(128))
    ang = np.arctan2(gy, gx) % (2.0 * np.pi)
    hist36 = np.bincount(
        np.minimum((ang.ravel() / (2.0 * np.pi) * 36).astype(int), 35),
        weights=mag.ravel(),
        minlength=36,
    )
    theta = (np.argmax(hist36) + 0.5) * 2.0 * np.pi / 36.0
    rel = (ang - theta) % (2.0 * np.pi)
    obin = np.minimum((rel / (2.0 * np.pi) * 8).astype(int), 7)

    h, w = crop.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    xc = xx - (w - 1) / 2.0
    yc = yy - (h - 1) / 2.0
    ct, st = math.cos(theta), math.sin(theta)
    xr = xc * ct + yc * st
    yr = -xc * st + yc * ct
    xi = np.clip(np.floor((xr / w + 0.5) * 4).astype(int), 0, 3)
    yi = np.clip(np.floor((yr / h + 0.5) * 4).astype(int), 0, 3)
    idx = (yi * 4 + xi) * 8 + obin
    vec = np.bincount(idx.ravel(), weights=mag.ravel(), minlength=128).astype(np.float64)
    vec = _l2(vec)
    vec = np.minimum(vec, 0.2)
    return FeatureVector(DescriptorId.Sift, RegionClass.KeyFrame, _l2(vec))


def sift_gabor(f, bbox: tuple[int, int, int, int]) -> FeatureVector:
    """Concatenation of the L2-normalized SIFT part (128) and Gabor part (48)
    computed on the bbox crop."""
    f = as_frame(f)
    r0, c0, r1, c1 = bbox
    s = sift_region(f, bbox)
    g = gabor_bank(f[r0:r1, c0:c1])
    return FeatureVector(
        DescriptorId.SiftGabor, RegionClass.KeyFrame, np.concatenate([s.values, g.values])
    )


# ---------------------------------------------------------------------------
# wavelet energies

_SQRT3 = math.sqrt(3.0)
# 4-tap Daubechies filter (two vanishing moments), orthonormal.
DB4_LOW = np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (
    4.0 * math.sqrt(2.0)
)
DB4_HIGH = np.array([DB4_LOW[3], -DB4_LOW[2], DB4_LOW[1], -DB4_LOW[0]])


def _dwt1(a: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    # Periodized single-level transform along one axis (length must be even).
    n = a.shape[axis]
    a = np.moveaxis(a, axis, -1)
    idx = (2 * np.arange(n // 2)[:, None] + np.arange(4)[None, :]) % n
    taps = a[..., idx]
    lo = taps @ DB4_LOW
    hi = taps @ DB4_HIGH
    return np.moveaxis(lo, -1, axis), np.moveaxis(hi, -1, axis)


def dwt2(a: np.ndarray, levels: int = 3) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray, np.ndarray]]]:
    """Separable periodized 2-D transform.

    Returns (ll, details) where details[k] = (lh, hl, hh) for level k+1
    (lh = low rows / high columns).  Both dimensions must be divisible by
    2**levels.  The transform is orthonormal, so total coefficient energy
    equals input energy.
    """
    ll = np.asarray(a, dtype=np.float64)
    details = []
    for _ in range(levels):
        if ll.shape[0] % 2 or ll.shape[1] % 2:
            raise DataError(f"dwt2 needs even dimensions at every level, got {ll.shape}")
        lo_r, hi_r = _dwt1(ll, axis=0)
        ll_, lh = _dwt1(lo_r, axis=1)
        hl, hh = _dwt1(hi_r, axis=1)
        details.append((lh, hl, hh))
        ll = ll_
    return ll, details


def _pad_to_multiple(a: np.ndarray, m: int) -> np.ndarray:
    ph = (-a.shape[0]) % m
    pw = (-a.shape[1]) % m
    if ph or pw:
        a = np.pad(a, ((0, ph), (0, pw)), mode="reflect")
    return a


def _wavelet_bins(a: np.ndarray) -> np.ndarray:
    a = _pad_to_multiple(np.asarray(a, dtype=np.float64), 8)
    ll, details = dwt2(a, levels=3)
    bins = [float((ll**2).mean())]
    for lh, hl, hh in details:
        bins.extend((float((lh**2).mean()), float((hl**2).mean()), float((hh**2).mean())))
    return _l1(np.array(bins))


def wavelet_energy(f) -> FeatureVector:
    """Per-subband mean-square energies of a 3-level transform: LL3 first,
    then (LH, HL, HH) per level fine-to-coarse; 10 bins, L1-normalized."""
    f = as_frame(f)
    if f.shape[0] < 16 or f.shape[1] < 16:
        raise DataError("wavelet energy needs a frame of at least 16x16")
    return FeatureVector(DescriptorId.WaveletEnergy, RegionClass.KeyFrame, _wavelet_bins(f))


def motion_activity(flow: FlowField) -> FeatureVector:
    """Wavelet energy signature of the flow speed image: amplitude-, scale-
    and orientation-sensitive, invariant to a global speed scale."""
    return FeatureVector(
        DescriptorId.MotionActivity, RegionClass.KeyFrame, _wavelet_bins(flow.speed())
    )


# ---------------------------------------------------------------------------
# Hough orientation histogram

HOUGH_THETA_BINS = 36
HOUGH_RHO_BINS = 64


def hough_hist(f) -> FeatureVector:
    """Dominant-line profile: per-orientation maximum of an oriented Hough
    accumulator, 36 bins over [0, 180), L1-normalized.

    Each edge pixel votes once, into the orientation bin of its gradient
    normal (a classical all-orientation vote spreads every line's mass over
    the 1/|cos| tail and no single line can dominate the profile).  An
    edge-free frame returns the zero vector.
    """
    f = as_frame(f)
    if f.shape[0] < 16 or f.shape[1] < 16:
        raise DataError("hough histogram needs a frame of at least 16x16")
    gx = ndimage.sobel(f, axis=1, mode="reflect")
    gy = ndimage.sobel(f, axis=0, mode="reflect")
    mag = np.hypot(gx, gy)
    edges = mag > otsu_threshold(mag)
    if not edges.any():
        return FeatureVector(DescriptorId.HoughHist, RegionClass.KeyFrame, np.zeros(36))
    ys, xs = np.nonzero(edges)
    theta = np.arctan2(gy[ys, xs], gx[ys, xs]) % np.pi
    tbin = np.minimum((theta / np.pi * HOUGH_THETA_BINS).astype(int), HOUGH_THETA_BINS - 1)
    centers = (tbin + 0.5) * np.pi / HOUGH_THETA_BINS
    diag = math.hypot(*f.shape)
    rho = xs * np.cos(centers) + ys * np.sin(centers)
    rbin = np.clip(((rho + diag) / (2.0 * diag) * HOUGH_RHO_BINS).astype(int), 0, HOUGH_RHO_BINS - 1)
    acc = np.zeros((HOUGH_THETA_BINS, HOUGH_RHO_BINS))
    np.add.at(acc, (tbin, rbin), 1.0)
    return FeatureVector(DescriptorId.HoughHist, RegionClass.KeyFrame, _l1(acc.max(axis=1)))


# ---------------------------------------------------------------------------
# per-region extraction


def _with_region(fv: FeatureVector, region: RegionClass) -> FeatureVector:
    return FeatureVector(fv.id, region, fv.values)


def extract_all(
    key, seg: SegmentationResult, flow: FlowField
) -> list[FeatureVector]:
    """Every applicable descriptor for each region class of one key-frame.

    Inside uses the moving mask for mask-capable descriptors and the largest
    object's bounding box for grid descriptors (subject to each descriptor's
    minimum size); Outside uses the complement mask; KeyFrame the full frame.
    MotionActivity exists only for KeyFrame and Inside.  An empty segmentation
    yields no Inside vectors at all.
    """
    key = as_color_frame(key)
    gray = to_grayscale(key)
    if seg.mask.shape != gray.shape or flow.shape != gray.shape:
        raise DataError("key frame, segmentation and flow shapes must agree")
    mask = seg.mask.astype(bool)
    inv = ~mask
    bbox = seg.objects[0].bbox if seg.objects else None
    bh = bbox[2] - bbox[0] if bbox else 0
    bw = bbox[3] - bbox[1] if bbox else 0
    out: list[FeatureVector] = []

    def add(region, fv):
        out.append(_with_region(fv, region))

    # KeyFrame: everything.
    add(RegionClass.KeyFrame, color_hist_hsv(key))
    add(RegionClass.KeyFrame, color_moments_lab(key))
    add(RegionClass.KeyFrame, glcm_stats(gray))
    add(RegionClass.KeyFrame, gabor_bank(gray))
    add(RegionClass.KeyFrame, fourier_edge(gray))
    full = (0, 0, gray.shape[0], gray.shape[1])
    add(RegionClass.KeyFrame, sift_region(gray, full))
    add(RegionClass.KeyFrame, sift_gabor(gray, full))
    add(RegionClass.KeyFrame, wavelet_energy(gray))
    add(RegionClass.KeyFrame, hough_hist(gray))
    add(RegionClass.KeyFrame, motion_activity(flow))

    # Outside: mask-capable descriptors on the complement.
    if inv.any():
        add(RegionClass.Outside, color_hist_hsv(key, mask=inv))
        if inv.sum() >= 2:
            add(RegionClass.Outside, glcm_stats(gray, mask=inv))

    # Inside: mask- and bbox-based descriptors, gated by object size.
    if mask.any():
        add(RegionClass.Inside, color_hist_hsv(key, mask=mask))
        if mask.sum() >= 2:
            add(RegionClass.Inside, glcm_stats(gray, mask=mask))
    if bbox is not None:
        r0, c0, r1, c1 = bbox
        if bh >= 3 and bw >= 3:
            add(RegionClass.Inside, color_moments_lab(key[r0:r1, c0:c1]))
        if bh >= 16 and bw >= 16:
            add(RegionClass.Inside, gabor_bank(gray[r0:r1, c0:c1]))
            add(RegionClass.Inside, wavelet_energy(gray[r0:r1, c0:c1]))
            add(RegionClass.Inside, hough_hist(gray[r0:r1, c0:c1]))
            add(RegionClass.Inside, sift_gabor(gray, bbox))
        if bh >= 32 and bw >= 32:
            add(RegionClass.Inside, fourier_edge(gray[r0:r1, c0:c1]))
        if bh >= 8 and bw >= 8:
            add(RegionClass.Inside, sift_region(gray, bbox))
            sub = FlowField(u=flow.u[r0:r1, c0:c1], v=flow.v[r0:r1, c0:c1])
            add(RegionClass.Inside, motion_activity(sub))
    return out


# ---------------------------------------------------------------------------
# dump format: descriptor id, region class, frame index, values (tab-separated)


def write_features(path, records) -> None:
    """records: iterable of (frame_index, FeatureVector)."""
    with open(path, "w", encoding="utf-8") as fh:
        for frame_idx, fv in records:
            vals = "\t".join(repr(float(x)) for x in fv.values)
            fh.write(f"{fv.id.value}\t{fv.region.value}\t{frame_idx}\t{vals}\n")


def read_features(path) -> list[tuple[int, FeatureVector]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 4:
                raise DataError("malformed feature record")
            fv = FeatureVector(
                DescriptorId(parts[0]),
                RegionClass(parts[1]),
                np.array([float(x) for x in parts[3:]]),
            )
            out.append((int(parts[2]), fv))
    return out
