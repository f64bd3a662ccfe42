"""Synthetic surveillance corpus generator.

Each shot is a Y4M clip of one mover over a static textured background:

  vehicle    large, fast (2 px/frame), horizontal          -> C2
  pedestrian small, slow (1 px/frame), vertical            -> C4
  runner     pedestrian-like but wide and fast, horizontal -> C4 + PersonRuns
  crosser    vehicle moving vertically (against the usual
             traffic axis)                                 -> C2 + OpposingFlow

Labels come from the generation parameters, so the corpus ships its own
ground truth: labels.tsv (shot -> target keys) and events.ref (event
reference intervals on the corpus timeline, shots laid end to end).
Generation is fully deterministic per seed: same seed, bit-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .errors import DataError
from .imgcore import separable_gaussian, write_y4m

# mover archetype: (rows, cols) size range, velocity (dr, dc), RGB tint
_KINDS = {
    "vehicle": {
        "size": ((8, 11), (14, 19)),
        "vel": (0, 2),
        "color": (0.95, 0.25, 0.2),
        "targets": ("C2",),
    },
    "pedestrian": {
        "size": ((9, 13), (4, 7)),
        "vel": (1, 0),
        "color": (0.2, 0.35, 0.95),
        "targets": ("C4",),
    },
    "runner": {
        "size": ((9, 13), (8, 11)),
        "vel": (0, 2),
        "color": (0.25, 0.4, 0.9),
        "targets": ("C4", "PersonRuns"),
    },
    "crosser": {
        "size": ((8, 11), (14, 19)),
        "vel": (2, 0),
        "color": (0.9, 0.3, 0.25),
        "targets": ("C2", "OpposingFlow"),
    },
}


@dataclass(frozen=True)
class ShotSpec:
    shot_id: str
    kind: str
    size: tuple[int, int]
    start: tuple[int, int]
    vel: tuple[int, int]
    targets: tuple[str, ...]


def _background(rng: np.random.Generator, n: int) -> np.ndarray:
    t = separable_gaussian(rng.random((n, n)), 0.7)
    t = (t - t.min()) / max(t.max() - t.min(), 1e-12)
    base = 0.1 + 0.65 * t
    tint = np.array([0.85, 1.0, 0.8])
    return np.clip(base[:, :, None] * tint[None, None, :], 0.0, 1.0)


def _mover_patch(rng: np.random.Generator, size, color) -> np.ndarray:
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    shading = 0.75 + 0.25 * np.sin(2.0 * np.pi * (xx + yy) / 5.0)
    noise = 0.9 + 0.1 * rng.random((h, w))
    lum = np.clip(shading * noise, 0.0, 1.0)
    return np.clip(lum[:, :, None] * np.asarray(color)[None, None, :], 0.0, 1.0)


def plan_corpus(cfg: PipelineConfig) -> list[ShotSpec]:
    """Deterministic shot plan: repeating kind cycle, jittered geometry."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.synth_size
    cycle = (
        ["vehicle", "pedestrian"] * 4 + ["runner", "crosser"]
    )  # 10-shot cycle: 40% vehicle, 40% pedestrian, 10% each special
    specs = []
    for i in range(cfg.synth_shots):
        kind = cycle[i % len(cycle)]
        info = _KINDS[kind]
        (h0, h1), (w0, w1) = info["size"]
        size = (int(rng.integers(h0, h1)), int(rng.integers(w0, w1)))
        dr, dc = info["vel"]
        if rng.random() < 0.5:
            dr, dc = -dr, -dc
        travel_r = abs(dr) * (cfg.synth_frames - 1)
        travel_c = abs(dc) * (cfg.synth_frames - 1)
        margin = 3
        r_lo = margin + (travel_r if dr < 0 else 0)
        r_hi = n - margin - size[0] - (travel_r if dr > 0 else 0)
        c_lo = margin + (travel_c if dc < 0 else 0)
        c_hi = n - margin - size[1] - (travel_c if dc > 0 else 0)
        if r_hi <= r_lo or c_hi <= c_lo:
            raise DataError("frame too small for the planned mover travel")
        start = (int(rng.integers(r_lo, r_hi)), int(rng.integers(c_lo, c_hi)))
        specs.append(
            ShotSpec(
                shot_id=f"shot_{i:04d}",
                kind=kind,
                size=size,
                start=start,
                vel=(dr, dc),
                targets=tuple(info["targets"]),
            )
        )
    return specs


def render_shot(spec: ShotSpec, cfg: PipelineConfig, rng: np.random.Generator) -> list[np.ndarray]:
    n = cfg.synth_size
    bg = _background(rng, n)
    patch = _mover_patch(rng, spec.size, _KINDS[spec.kind]["color"])
    frames = []
    for t in range(cfg.synth_frames):
        frame = bg.copy()
        r = spec.start[0] + spec.vel[0] * t
        c = spec.start[1] + spec.vel[1] * t
        frame[r : r + spec.size[0], c : c + spec.size[1]] = patch
        frames.append(frame)
    return frames


def generate_corpus(out_dir, cfg: PipelineConfig) -> list[ShotSpec]:
    """Write shot clips, labels.tsv and events.ref into out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = plan_corpus(cfg)
    shot_seconds = cfg.synth_frames / cfg.synth_fps
    label_lines = []
    event_lines = []
    for i, spec in enumerate(specs):
        rng = np.random.default_rng((cfg.seed, 1000 + i))
        frames = render_shot(spec, cfg, rng)
        write_y4m(out / f"{spec.shot_id}.y4m", frames, fps=(cfg.synth_fps, 1))
        label_lines.append(f"{spec.shot_id}\t{','.join(spec.targets)}")
        t0 = i * shot_seconds
        for target in spec.targets:
            if target in ("PersonRuns", "OpposingFlow"):
                event_lines.append(f"{target} {t0:.3f} {t0 + shot_seconds:.3f}")
    (out / "labels.tsv").write_text("\n".join(label_lines) + "\n", encoding="utf-8")
    (out / "events.ref").write_text(
        ("\n".join(event_lines) + "\n") if event_lines else "", encoding="utf-8"
    )
    return specs


def read_labels(path) -> dict[str, set[str]]:
    """labels.tsv -> shot id -> set of target keys."""
    out: dict[str, set[str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        shot_id, _, targets = line.partition("\t")
        out[shot_id] = {t for t in targets.split(",") if t}
    return out
