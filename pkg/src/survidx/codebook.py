"""Feature quantization: per-channel k-means codebooks, label sequences, and
fixed-length shot signatures.

A channel is one (descriptor, region class) pair.  Labeling every key-frame's
vectors against the channel codebooks reduces a shot to short label sequences;
the shot signature concatenates the per-channel label histograms, which gives
the classifiers a fixed-length input regardless of shot length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import DIMENSIONS, DescriptorId, FeatureVector, RegionClass

CODEBOOK_MAGIC = b"MAVCB01"


@dataclass(frozen=True)
class Codebook:
    descriptor: DescriptorId
    region: RegionClass
    centroids: np.ndarray  # (k, dim)
    iterations: int
    seed: int

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


@dataclass(frozen=True)
class LabelSequence:
    """Per-channel label lists for one shot; all channels equally long."""

    shot_id: str
    channels: dict[tuple[DescriptorId, RegionClass], list[int]]

    def __post_init__(self):
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise DataError(f"unequal channel lengths for shot {self.shot_id}: {lengths}")


@dataclass(frozen=True)
class ShotSignature:
    """Concatenated per-channel label histograms, each L1-normalized."""

    values: np.ndarray
    layout: tuple[tuple[DescriptorId, RegionClass, int], ...]  # (desc, region, k)


def channel_order(channels) -> list[tuple[DescriptorId, RegionClass]]:
    """Fixed, deterministic channel ordering (descriptor enum order, then
    region enum order)."""
    desc_rank = {d: i for i, d in enumerate(DescriptorId)}
    reg_rank = {r: i for i, r in enumerate(RegionClass)}
    return sorted(channels, key=lambda c: (desc_rank[c[0]], reg_rank[c[1]]))


def train_codebook(
    vectors: list[FeatureVector], k: int, seed: int, max_iters: int = 100
) -> Codebook:
    """k-means with k-means++ seeding; deterministic for a given seed.

    Stops after max_iters or when the relative inertia change drops below
    1e-4.  Inertia is checked to be non-increasing on every run.  Empty
    clusters are reseeded on the point farthest from its centroid.
    """
    if k < 2:
        raise DataError(f"codebook k must be >= 2, got {k}")
    if not vectors:
        raise DataError("no vectors to train on")
    desc, region = vectors[0].id, vectors[0].region
    if any(v.id != desc or v.region != region for v in vectors):
        raise DataError("codebook training requires a single (descriptor, region) channel")
    x = np.stack([v.values for v in vectors])
    n, dim = x.shape
    if n < k:
        raise DataError(f"need at least k={k} vectors, got {n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(x, k, rng)
    prev_inertia = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        d2 = _sq_dists(x, centroids)
        assign = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        if inertia > prev_inertia + 1e-9 * max(prev_inertia, 1.0):
            raise AssertionError("k-means inertia increased")
        for j in range(k):
            sel = assign == j
            if sel.any():
                centroids[j] = x[sel].mean(axis=0)
            else:
                centroids[j] = x[int(np.argmax(d2[np.arange(n), assign]))]
        if prev_inertia - inertia <= 1e-4 * max(inertia, 1e-30):
            break
        prev_inertia = inertia
    return Codebook(descriptor=desc, region=region, centroids=centroids, iterations=iters, seed=seed)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # (n, k) squared Euclidean distances, clamped against rounding.
    d2 = (x * x).sum(axis=1)[:, None] - 2.0 * x @ c.T + (c * c).sum(axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = _sq_dists(x, centroids[:1]).ravel()
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = x[rng.integers(n)]
            continue
        probs = d2 / total
        centroids[j] = x[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, _sq_dists(x, centroids[j : j + 1]).ravel())
    return centroids


def assign_labels(cb: Codebook, vectors: list[FeatureVector]) -> list[int]:
    """Nearest centroid per vector (Euclidean); ties go to the lowest index."""
    if not vectors:
        return []
    for v in vectors:
        if v.id != cb.descriptor or v.region != cb.region:
            raise DataError("vector channel does not match codebook")
        if v.values.shape[0] != cb.centroids.shape[1]:
            raise DataError("vector dimensionality does not match codebook")
    x = np.stack([v.values for v in vectors])
    return [int(i) for i in np.argmin(_sq_dists(x, cb.centroids), axis=1)]


def shot_signature(
    seq: LabelSequence, codebooks: dict[tuple[DescriptorId, RegionClass], Codebook]
) -> ShotSignature:
    """Per-channel label histogram over the shot's key-frames, L1-normalized,
    concatenated in the fixed channel order."""
    if not seq.channels:
        raise DataError(f"shot {seq.shot_id} has no labeled channels")
    order = channel_order(seq.channels.keys())
    parts = []
    layout = []
    for chan in order:
        labels = seq.channels[chan]
        if not labels:
            raise DataError(f"shot {seq.shot_id} channel {chan} is empty")
        k = codebooks[chan].k
        if any(not 0 <= lab < k for lab in labels):
            raise DataError(f"label out of range for channel {chan}")
        hist = np.bincount(labels, minlength=k).astype(np.float64)
        parts.append(hist / hist.sum())
        layout.append((chan[0], chan[1], k))
    return ShotSignature(values=np.concatenate(parts), layout=tuple(layout))


# ---------------------------------------------------------------------------
# persistence: magic, descriptor id, region, k, dim, iterations, seed,
# centroids as little-endian float64


_DESC_CODE = {d: i for i, d in enumerate(DescriptorId)}
_DESC_FROM = {i: d for i, d in enumerate(DescriptorId)}
_REG_CODE = {r: i for i, r in enumerate(RegionClass)}
_REG_FROM = {i: r for i, r in enumerate(RegionClass)}


def write_codebook(path, cb: Codebook) -> None:
    with open(path, "wb") as fh:
        fh.write(CODEBOOK_MAGIC)
        fh.write(
            struct.pack(
                "<BBIIIq",
                _DESC_CODE[cb.descriptor],
                _REG_CODE[cb.region],
                cb.k,
                cb.centroids.shape[1],
                cb.iterations,
                cb.seed,
            )
        )
        fh.write(cb.centroids.astype("<f8").tobytes())


def read_codebook(path) -> Codebook:
    data = open(path, "rb").read()
    if not data.startswith(CODEBOOK_MAGIC):
        raise DataError("not a codebook file")
    off = len(CODEBOOK_MAGIC)
    dcode, rcode, k, dim, iters, seed = struct.unpack_from("<BBIIIq", data, off)
    off += struct.calcsize("<BBIIIq")
    desc = _DESC_FROM.get(dcode)
    region = _REG_FROM.get(rcode)
    if desc is None or region is None:
        raise DataError("unknown descriptor or region code in codebook")
    if DIMENSIONS[desc] != dim:
        raise DataError(f"codebook dim {dim} mismatches {desc.value}")
    cents = np.frombuffer(data, dtype="<f8", count=k * dim, offset=off).reshape(k, dim)
    return Codebook(descriptor=desc, region=region, centroids=cents.copy(), iterations=iters, seed=seed)
