"""Concept/event registry, XML shot records, and the queryable index.

The index is a plain directory: one XML record per shot plus a line-oriented
manifest.  The XML writer is canonical (fixed attribute order, repr() floats),
so export -> import -> export is byte-identical; floats survive exactly via
repr round-tripping.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .codebook import ShotSignature
from .errors import DataError
from .evalmetrics import RankedList
from .features import DescriptorId, FeatureVector, RegionClass


@dataclass(frozen=True)
class TargetInfo:
    key: str
    name: str
    category: str  # concept | event

    @property
    def uid(self) -> int:
        # Stable across runs: hash of the canonical triple.
        return zlib.crc32(f"{self.category}:{self.key}:{self.name}".encode())


CONCEPTS = (
    TargetInfo("C1", "approaching vehicle", "concept"),
    TargetInfo("C2", "moving vehicle(s)", "concept"),
    TargetInfo("C3", "approaching pedestrian", "concept"),
    TargetInfo("C4", "moving pedestrian(s)", "concept"),
    TargetInfo("C5", "combined", "concept"),
)
EVENTS = (
    TargetInfo("Embrace", "embrace", "event"),
    TargetInfo("PeopleSplitUp", "people split up", "event"),
    TargetInfo("ElevatorNoEntry", "elevator no entry", "event"),
    TargetInfo("ObjectPut", "object put", "event"),
    TargetInfo("PersonRuns", "person runs", "event"),
    TargetInfo("OpposingFlow", "opposing flow", "event"),
)
REGISTRY: dict[str, TargetInfo] = {t.key: t for t in CONCEPTS + EVENTS}


def lookup_target(key: str) -> TargetInfo:
    try:
        return REGISTRY[key]
    except KeyError:
        raise DataError(f"unknown target {key!r}; known: {sorted(REGISTRY)}") from None


@dataclass(frozen=True)
class ObjectRecord:
    id: int
    bbox: tuple[int, int, int, int]  # half-open (r0, c0, r1, c1)
    area: int
    mean_speed: float


@dataclass(frozen=True)
class KeyframeRecord:
    index: int  # frame index within the shot
    objects: tuple[ObjectRecord, ...]
    descriptors: tuple[FeatureVector, ...]


@dataclass
class ShotRecord:
    shot_id: str
    source: str
    span: tuple[int, int]  # half-open frame span
    fps: tuple[int, int]
    keyframes: list[KeyframeRecord] = field(default_factory=list)
    signature: ShotSignature | None = None
    scores: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.span[0] < self.span[1]:
            raise DataError(f"empty frame span {self.span}")
        for t, v in self.scores.items():
            if not -1.0 <= v <= 1.0:
                raise DataError(f"score for {t} outside [-1, 1]: {v}")

    def start_seconds(self) -> float:
        return self.span[0] * self.fps[1] / self.fps[0]

    def end_seconds(self) -> float:
        return self.span[1] * self.fps[1] / self.fps[0]


def _fmt_floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def export_xml(rec: ShotRecord) -> bytes:
    """Canonical UTF-8 XML serialization of one shot record."""
    out = ['<?xml version="1.0" encoding="UTF-8"?>\n']
    out.append(
        f"<shot id={quoteattr(rec.shot_id)} source={quoteattr(rec.source)} "
        f'span="{rec.span[0]}:{rec.span[1]}" fps="{rec.fps[0]}/{rec.fps[1]}">\n'
    )
    for kf in rec.keyframes:
        out.append(f'  <keyframe idx="{kf.index}">\n')
        for ob in kf.objects:
            bbox = ",".join(str(b) for b in ob.bbox)
            out.append(
                f'    <object id="{ob.id}" bbox="{bbox}" area="{ob.area}" '
                f'meanspeed="{repr(float(ob.mean_speed))}"/>\n'
            )
        for fv in kf.descriptors:
            out.append(
                f'    <descriptor id="{fv.id.value}" region="{fv.region.value}" '
                f'dims="{len(fv.values)}">{escape(_fmt_floats(fv.values))}</descriptor>\n'
            )
        out.append("  </keyframe>\n")
    if rec.signature is not None:
        out.append("  <signature>\n")
        offset = 0
        for desc, region, k in rec.signature.layout:
            block = rec.signature.values[offset : offset + k]
            offset += k
            out.append(
                f'    <channel descriptor="{desc.value}" region="{region.value}" '
                f'k="{k}">{escape(_fmt_floats(block))}</channel>\n'
            )
        out.append("  </signature>\n")
    if rec.scores:
        out.append("  <scores>\n")
        for target in sorted(rec.scores):
            out.append(
                f'    <score target={quoteattr(target)} value="{repr(float(rec.scores[target]))}"/>\n'
            )
        out.append("  </scores>\n")
    out.append("</shot>\n")
    return "".join(out).encode("utf-8")


def import_xml(data: bytes) -> ShotRecord:
    try:
        root = ET.fromstring(data)
    except ET.ParseError as e:
        raise DataError(f"malformed shot XML: {e}") from e
    if root.tag != "shot":
        raise DataError(f"expected <shot>, got <{root.tag}>")
    span = tuple(int(x) for x in root.attrib["span"].split(":"))
    fps = tuple(int(x) for x in root.attrib["fps"].split("/"))
    rec = ShotRecord(
        shot_id=root.attrib["id"],
        source=root.attrib["source"],
        span=(span[0], span[1]),
        fps=(fps[0], fps[1]),
    )
    for kf_el in root.findall("keyframe"):
        objects = []
        for ob in kf_el.findall("object"):
            bbox = tuple(int(x) for x in ob.attrib["bbox"].split(","))
            objects.append(
                ObjectRecord(
                    id=int(ob.attrib["id"]),
                    bbox=(bbox[0], bbox[1], bbox[2], bbox[3]),
                    area=int(ob.attrib["area"]),
                    mean_speed=float(ob.attrib["meanspeed"]),
                )
            )
        descriptors = []
        for de in kf_el.findall("descriptor"):
            values = np.array([float(x) for x in (de.text or "").split()])
            descriptors.append(
                FeatureVector(DescriptorId(de.attrib["id"]), RegionClass(de.attrib["region"]), values)
            )
        rec.keyframes.append(
            KeyframeRecord(
                index=int(kf_el.attrib["idx"]),
                objects=tuple(objects),
                descriptors=tuple(descriptors),
            )
        )
    sig_el = root.find("signature")
    if sig_el is not None:
        parts = []
        layout = []
        for ch in sig_el.findall("channel"):
            vals = np.array([float(x) for x in (ch.text or "").split()])
            k = int(ch.attrib["k"])
            if len(vals) != k:
                raise DataError("signature channel length mismatch")
            parts.append(vals)
            layout.append((DescriptorId(ch.attrib["descriptor"]), RegionClass(ch.attrib["region"]), k))
        rec.signature = ShotSignature(values=np.concatenate(parts), layout=tuple(layout))
    scores_el = root.find("scores")
    if scores_el is not None:
        for sc in scores_el.findall("score"):
            rec.scores[sc.attrib["target"]] = float(sc.attrib["value"])
    return rec


# ---------------------------------------------------------------------------
# index directory


class ShotIndex:
    """Directory of XML shot records plus a manifest; append-only writer,
    read-only concurrent queries."""

    def __init__(self, root):
        self.root = Path(root)
        self.records_dir = self.root / "records"
        self.manifest_path = self.root / "manifest.txt"

    def create(self) -> "ShotIndex":
        self.records_dir.mkdir(parents=True, exist_ok=True)
        if not self.manifest_path.exists():
            self.manifest_path.write_text("", encoding="utf-8")
        return self

    def _manifest(self) -> dict[str, str]:
        if not self.manifest_path.exists():
            raise DataError(f"no index manifest at {self.manifest_path}")
        out = {}
        for line in self.manifest_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            shot_id, rel = line.split("\t")
            out[shot_id] = rel
        return out

    def shot_ids(self) -> list[str]:
        return list(self._manifest())

    def add(self, rec: ShotRecord) -> None:
        manifest = self._manifest() if self.manifest_path.exists() else {}
        if rec.shot_id in manifest:
            raise DataError(f"shot {rec.shot_id} already indexed")
        rel = f"records/{rec.shot_id}.xml"
        (self.root / rel).write_bytes(export_xml(rec))
        with open(self.manifest_path, "a", encoding="utf-8") as fh:
            fh.write(f"{rec.shot_id}\t{rel}\n")

    def load(self, shot_id: str) -> ShotRecord:
        manifest = self._manifest()
        if shot_id not in manifest:
            raise DataError(f"shot {shot_id} not in index")
        return import_xml((self.root / manifest[shot_id]).read_bytes())

    def load_all(self) -> list[ShotRecord]:
        return [self.load(sid) for sid in self.shot_ids()]

    def replace(self, rec: ShotRecord) -> None:
        manifest = self._manifest()
        if rec.shot_id not in manifest:
            raise DataError(f"shot {rec.shot_id} not in index")
        (self.root / manifest[rec.shot_id]).write_bytes(export_xml(rec))

    def query(self, target: str, top_n: int | None = None) -> RankedList:
        """Shots ranked by stored ensemble score (descending; ties by shot
        id), truncated to top_n."""
        info = lookup_target(target)
        scored = []
        for rec in self.load_all():
            if info.key in rec.scores:
                scored.append((rec.shot_id, rec.scores[info.key]))
        scored.sort(key=lambda t: (-t[1], t[0]))
        if top_n is not None:
            scored = scored[:top_n]
        return RankedList(
            target=info.key,
            shot_ids=tuple(s for s, _ in scored),
            scores=tuple(v for _, v in scored),
        )
