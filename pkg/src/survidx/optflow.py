"""Multigrid Horn-Schunck optical flow solved by Gauss-Seidel relaxation.

The flow pair (u, v) minimizes the discrete energy

    E(u, v) = sum (ix*u + iy*v + it)^2  +  lam_s * sum (|grad u|^2 + |grad v|^2)

with forward-difference gradients, where lam_s = 1 / (4 * hs_lambda).  Each
Gauss-Seidel pixel update exactly minimizes E over that pixel's (u, v) block,
so on interior pixels (4 neighbors) the update reads

    u <- ubar - ix (ix ubar + iy vbar + it) / (alpha^2 + ix^2 + iy^2)

with alpha^2 = 1/hs_lambda and ubar, vbar the 4-neighbor averages, and E is
non-increasing sweep after sweep.  Scaling hs_lambda up trades data fidelity
for smoothness; the default makes alpha^2 = 0.01.

The pyramidal driver solves coarse-to-fine, doubling upsampled flow values
between levels to account for the coordinate rescaling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError
from .imgcore import GradientField, as_frame, build_pyramid, gradients, separable_gaussian

FLOW_MAGIC = b"MAVFLOW1"


@dataclass(frozen=True)
class FlowField:
    """Per-pixel velocities in pixels/frame: u horizontal (+x, columns),
    v vertical (+y, rows)."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DataError(f"u/v shapes invalid: {self.u.shape} vs {self.v.shape}")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DataError("flow contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def speed(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass(frozen=True)
class HsParams:
    hs_lambda: float = 100.0
    iterations_per_level: int = 200
    pyramid_levels: int = 3
    convergence_eps: float = 1e-4

    def __post_init__(self):
        if self.hs_lambda <= 0:
            raise DataError("hs_lambda must be > 0")
        if self.iterations_per_level < 1:
            raise DataError("iterations_per_level must be >= 1")
        if self.pyramid_levels < 1:
            raise DataError("pyramid_levels must be >= 1")
        if self.convergence_eps < 0:
            raise DataError("convergence_eps must be >= 0")


@dataclass(frozen=True)
class SpeedMap:
    """Non-negative speed magnitudes after thresholding and smoothing."""

    data: np.ndarray
    threshold: float
    sigma: float


def _lam_s(hs_lambda: float) -> float:
    # Interior update denominator is lam_s*4 + ix^2 + iy^2 = alpha^2 + ...
    return 1.0 / (4.0 * hs_lambda)


def flow_energy(flow: FlowField, g: GradientField, hs_lambda: float) -> float:
    """Discrete energy the Gauss-Seidel sweep descends (see module docstring)."""
    res = g.ix * flow.u + g.iy * flow.v + g.it
    lam = _lam_s(hs_lambda)
    smooth = 0.0
    for a in (flow.u, flow.v):
        smooth += np.sum((a[1:, :] - a[:-1, :]) ** 2) + np.sum((a[:, 1:] - a[:, :-1]) ** 2)
    return float(np.sum(res * res) + lam * smooth)


def gauss_seidel_sweep(
    flow: FlowField, g: GradientField, hs_lambda: float
) -> tuple[FlowField, float]:
    """One lexicographic relaxation sweep; returns (new flow, mean |update|)."""
    if flow.shape != g.ix.shape:
        raise DataError(f"flow shape {flow.shape} does not match gradients {g.ix.shape}")
    u = np.ascontiguousarray(flow.u, dtype=np.float64).copy()
    v = np.ascontiguousarray(flow.v, dtype=np.float64).copy()
    upd = kernels.gs_sweep(
        u,
        v,
        np.ascontiguousarray(g.ix, dtype=np.float64),
        np.ascontiguousarray(g.iy, dtype=np.float64),
        np.ascontiguousarray(g.it, dtype=np.float64),
        _lam_s(hs_lambda),
    )
    return FlowField(u=u, v=v), float(upd)


def upsample_flow(flow: FlowField, shape: tuple[int, int]) -> FlowField:
    """Bilinear 2x upsampling with velocities doubled (coordinate rescaling)."""
    h, w = shape

    def up(a: np.ndarray) -> np.ndarray:
        hs, ws = a.shape
        ri = np.minimum(np.arange(h) * 0.5, hs - 1.0)
        ci = np.minimum(np.arange(w) * 0.5, ws - 1.0)
        r0 = np.floor(ri).astype(int)
        c0 = np.floor(ci).astype(int)
        r1 = np.minimum(r0 + 1, hs - 1)
        c1 = np.minimum(c0 + 1, ws - 1)
        fr = (ri - r0)[:, None]
        fc = (ci - c0)[None, :]
        top = a[r0][:, c0] * (1 - fc) + a[r0][:, c1] * fc
        bot = a[r1][:, c0] * (1 - fc) + a[r1][:, c1] * fc
        return (top * (1 - fr) + bot * fr) * 2.0

    return FlowField(u=up(flow.u), v=up(flow.v))


def horn_schunck_pyramidal(f1, f2, p: HsParams, sweep_callback=None) -> FlowField:
    """Coarse-to-fine flow between consecutive frames.

    sweep_callback, when given, is invoked as callback(level, gradient_field,
    flow_field) after every sweep (level 0 = full resolution); useful for
    energy-descent diagnostics.  The solve is sequential per frame pair;
    distinct pairs may run concurrently.
    """
    f1 = as_frame(f1)
    f2 = as_frame(f2)
    if f1.shape != f2.shape:
        raise DataError(f"frame shapes differ: {f1.shape} vs {f2.shape}")
    pyr1 = build_pyramid(f1, p.pyramid_levels)
    pyr2 = build_pyramid(f2, p.pyramid_levels)
    lam = _lam_s(p.hs_lambda)
    flow = None
    for level in range(p.pyramid_levels - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        if flow is None:
            flow = FlowField(u=np.zeros(a.shape), v=np.zeros(a.shape))
        else:
            flow = upsample_flow(flow, a.shape)
        g = gradients(a, b)
        u = flow.u.copy()
        v = flow.v.copy()
        ix = np.ascontiguousarray(g.ix)
        iy = np.ascontiguousarray(g.iy)
        it = np.ascontiguousarray(g.it)
        if sweep_callback is None:
            kernels.gs_solve(u, v, ix, iy, it, lam, p.iterations_per_level, p.convergence_eps)
        else:
            for _ in range(p.iterations_per_level):
                upd = kernels.gs_sweep(u, v, ix, iy, it, lam)
                sweep_callback(level, g, FlowField(u=u.copy(), v=v.copy()))
                if upd < p.convergence_eps:
                    break
        flow = FlowField(u=u, v=v)
    return flow


def speed_map(flow: FlowField, threshold: float = 0.5, sigma: float = 1.5) -> SpeedMap:
    """Thresholded flow magnitude, Gaussian-smoothed.

    Speeds below threshold are zeroed (not binarized), preserving magnitude
    contrast for the segmentation's region means.
    """
    if threshold < 0:
        raise DataError("threshold must be >= 0")
    if sigma <= 0:
        raise DataError("sigma must be > 0")
    s = flow.speed()
    s[s < threshold] = 0.0
    s = separable_gaussian(s, sigma)
    # Kernel taps are non-negative, so smoothing keeps speeds >= 0 up to
    # rounding; clamp the rounding.
    np.maximum(s, 0.0, out=s)
    return SpeedMap(data=s, threshold=float(threshold), sigma=float(sigma))


def write_flow(path, flow: FlowField) -> None:
    """Debug dump: 16-byte header (magic, width, height), u then v planes as
    little-endian float32."""
    h, w = flow.shape
    with open(path, "wb") as fh:
        fh.write(FLOW_MAGIC)
        fh.write(struct.pack("<II", w, h))
        fh.write(flow.u.astype("<f4").tobytes())
        fh.write(flow.v.astype("<f4").tobytes())


def read_flow(path) -> FlowField:
    data = open(path, "rb").read()
    if len(data) < 16 or data[:8] != FLOW_MAGIC:
        raise DataError("not a flow dump")
    w, h = struct.unpack("<II", data[8:16])
    n = w * h
    if len(data) != 16 + 8 * n:
        raise DataError("flow dump truncated")
    u = np.frombuffer(data, dtype="<f4", count=n, offset=16).reshape(h, w)
    v = np.frombuffer(data, dtype="<f4", count=n, offset=16 + 4 * n).reshape(h, w)
    return FlowField(u=u.astype(np.float64), v=v.astype(np.float64))
