"""Batch orchestration shared by the CLI subcommands.

Shot-level stages (flow, segmentation, descriptor extraction) are pure per
shot, so they run on a thread pool sized by the workers key; results are
merged in shot order, keeping every run deterministic for a given
(config, seed, inputs).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import codebook as cb
from . import ensemble as ens
from . import evalmetrics as em
from . import features as feat
from . import optflow, segment, synth
from .config import PipelineConfig
from .errors import DataError, NumericalError
from .imgcore import read_y4m, to_grayscale
from .store import REGISTRY, KeyframeRecord, ObjectRecord, ShotIndex, ShotRecord, lookup_target


def _hs_params(cfg: PipelineConfig) -> optflow.HsParams:
    return optflow.HsParams(
        hs_lambda=cfg.hs_lambda,
        iterations_per_level=cfg.iterations_per_level,
        pyramid_levels=cfg.pyramid_levels,
        convergence_eps=cfg.convergence_eps,
    )


def _cv_params(cfg: PipelineConfig) -> segment.ChanVeseParams:
    return segment.ChanVeseParams(
        cv_lambda=cfg.cv_lambda,
        mu=cfg.resolved_mu(),
        epsilon=cfg.cv_epsilon,
        dt=cfg.cv_dt,
        max_iters=cfg.cv_max_iters,
        stop_tol=cfg.cv_stop_tol,
    )


def _kernel_spec(cfg: PipelineConfig) -> ens.KernelSpec:
    return ens.KernelSpec(
        kind=cfg.svm_kernel, gamma=cfg.svm_gamma, degree=cfg.svm_degree, coef=cfg.svm_coef
    )


def analyze_shot(path, shot_id: str, cfg: PipelineConfig) -> ShotRecord:
    """Flow, segmentation and descriptors at every keyframe_stride-th frame
    pair of one clip."""
    frames, fps = read_y4m(path)
    if len(frames) < 2:
        raise DataError(f"{path}: a shot needs at least 2 frames")
    grays = [to_grayscale(f) for f in frames]
    hs = _hs_params(cfg)
    cv = _cv_params(cfg)
    rec = ShotRecord(
        shot_id=shot_id, source=str(path), span=(0, len(frames)), fps=fps
    )
    prev_u = None
    for idx in range(0, len(frames) - 1, cfg.keyframe_stride):
        flow = optflow.horn_schunck_pyramidal(grays[idx], grays[idx + 1], hs)
        sv = optflow.speed_map(flow, threshold=cfg.speed_threshold, sigma=cfg.speed_sigma)
        init = prev_u if cfg.warm_start else None
        seg_res = segment.segment_moving(sv, cv, min_area=cfg.min_area, init=init)
        if cfg.warm_start:
            # Re-derive a fresh init next time the mask went empty, else keep
            # a signed bump field from the mask for continuity.
            prev_u = np.where(seg_res.mask > 0, -0.5, 0.5) if seg_res.mask.any() else None
        speed = flow.speed()
        objects = tuple(
            ObjectRecord(
                id=comp.id,
                bbox=comp.bbox,
                area=comp.area,
                mean_speed=float(speed[comp.pixels[:, 0], comp.pixels[:, 1]].mean()),
            )
            for comp in seg_res.objects
        )
        vectors = feat.extract_all(frames[idx], seg_res, flow)
        rec.keyframes.append(
            KeyframeRecord(index=idx, objects=objects, descriptors=tuple(vectors))
        )
    return rec


def ingest_corpus(corpus_dir, index_dir, cfg: PipelineConfig, log=print) -> ShotIndex:
    corpus = Path(corpus_dir)
    clips = sorted(corpus.glob("*.y4m"))
    if not clips:
        raise DataError(f"no .y4m clips under {corpus}")
    index = ShotIndex(index_dir).create()

    def work(clip):
        return analyze_shot(clip, clip.stem, cfg)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            records = list(pool.map(work, clips))
    else:
        records = [work(c) for c in clips]
    for rec in records:  # merge deterministically, in sorted clip order
        index.add(rec)
        log(f"indexed {rec.shot_id}: {len(rec.keyframes)} keyframes")
    return index


# ---------------------------------------------------------------------------
# codebooks and signatures


def _channel_vectors(records) -> dict[tuple, list]:
    chans: dict[tuple, list] = {}
    for rec in records:
        for kf in rec.keyframes:
            for fv in kf.descriptors:
                chans.setdefault((fv.id, fv.region), []).append(fv)
    return chans


def codebook_dir(index_dir) -> Path:
    return Path(index_dir) / "codebooks"


def train_codebooks(index_dir, cfg: PipelineConfig, log=print) -> dict[tuple, cb.Codebook]:
    index = ShotIndex(index_dir)
    records = index.load_all()
    chans = _channel_vectors(records)
    out_dir = codebook_dir(index_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    books: dict[tuple, cb.Codebook] = {}
    for chan in cb.channel_order(chans.keys()):
        vectors = chans[chan]
        if len(vectors) < cfg.codebook_k:
            log(
                f"skipping channel {chan[0].value}/{chan[1].value}: "
                f"{len(vectors)} vectors < k={cfg.codebook_k}"
            )
            continue
        book = cb.train_codebook(
            vectors, k=cfg.codebook_k, seed=cfg.seed, max_iters=cfg.codebook_iters
        )
        books[chan] = book
        cb.write_codebook(out_dir / f"{chan[0].value}_{chan[1].value}.cb", book)
        log(f"codebook {chan[0].value}/{chan[1].value}: k={book.k} iters={book.iterations}")
    if not books:
        raise DataError("no channel had enough vectors for a codebook")
    return books


def load_codebooks(index_dir) -> dict[tuple, cb.Codebook]:
    out = {}
    d = codebook_dir(index_dir)
    if not d.is_dir():
        raise DataError(f"no codebooks under {d}; run codebook-train first")
    for path in sorted(d.glob("*.cb")):
        book = cb.read_codebook(path)
        out[(book.descriptor, book.region)] = book
    if not out:
        raise DataError(f"no codebooks under {d}; run codebook-train first")
    return out


def signature_for_record(rec: ShotRecord, books: dict[tuple, cb.Codebook]) -> cb.ShotSignature:
    """Histogram signature over whichever keyframes each channel is present
    in; channels absent from the whole shot contribute a uniform block."""
    order = cb.channel_order(books.keys())
    parts = []
    layout = []
    for chan in order:
        book = books[chan]
        vecs = [
            fv
            for kf in rec.keyframes
            for fv in kf.descriptors
            if (fv.id, fv.region) == chan
        ]
        if vecs:
            labels = cb.assign_labels(book, vecs)
            hist = np.bincount(labels, minlength=book.k).astype(np.float64)
            parts.append(hist / hist.sum())
        else:
            parts.append(np.full(book.k, 1.0 / book.k))
        layout.append((chan[0], chan[1], book.k))
    return cb.ShotSignature(values=np.concatenate(parts), layout=tuple(layout))


def attach_signatures(index_dir, cfg: PipelineConfig, log=print) -> None:
    index = ShotIndex(index_dir)
    books = load_codebooks(index_dir)
    for rec in index.load_all():
        rec.signature = signature_for_record(rec, books)
        index.replace(rec)
    log(f"signatures attached for {len(index.shot_ids())} shots")


# ---------------------------------------------------------------------------
# training / classification


def model_dir(index_dir) -> Path:
    return Path(index_dir) / "models"


def _signature_matrix(records) -> tuple[np.ndarray, list[str]]:
    sigs = []
    ids = []
    for rec in records:
        if rec.signature is None:
            raise DataError(f"shot {rec.shot_id} has no signature; run codebook-train")
        sigs.append(rec.signature.values)
        ids.append(rec.shot_id)
    dims = {len(s) for s in sigs}
    if len(dims) > 1:
        raise DataError(f"inconsistent signature lengths: {dims}")
    return np.stack(sigs), ids


def _stratified_batches(y: np.ndarray, n_batches: int) -> list[np.ndarray]:
    """Round-robin split keeping both classes in every batch."""
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    batches = [[] for _ in range(n_batches)]
    for group in (pos, neg):
        for i, idx in enumerate(group):
            batches[i % n_batches].append(idx)
    out = [np.sort(np.array(b, dtype=int)) for b in batches if b]
    for b in out:
        if np.unique(y[b]).size < 2:
            raise DataError("a training batch came out single-class; use fewer batches")
    return out


def train_targets(
    index_dir, labels_path, cfg: PipelineConfig, targets=None, train_every=2, log=print
) -> dict[str, ens.EnsembleModel]:
    """Train one incremental ensemble per target.

    Training shots are every train_every-th shot (the rest stay unseen for
    querying); each target's training set splits into train_batches
    stratified batches fed to the ensemble one at a time.  Targets whose
    training degenerates are skipped with a warning so one bad target cannot
    sink the batch run.
    """
    index = ShotIndex(index_dir)
    records = index.load_all()
    x, ids = _signature_matrix(records)
    labels = synth.read_labels(labels_path)
    if targets is None:
        seen = set()
        for tset in labels.values():
            seen |= tset
        targets = [t for t in REGISTRY if t in seen]
    out_dir = model_dir(index_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = _kernel_spec(cfg)
    params = ens.TrainParams(
        c=cfg.svm_c,
        t_k=cfg.t_k,
        train_fraction=cfg.train_fraction,
        kkt_tol=cfg.kkt_tol,
        max_passes=cfg.max_passes,
        seed=cfg.seed,
    )
    train_rows = np.arange(0, len(ids), train_every)
    models: dict[str, ens.EnsembleModel] = {}
    manifest_lines = []
    for target in targets:
        lookup_target(target)
        y = np.array([1.0 if target in labels.get(sid, set()) else -1.0 for sid in ids])
        y_train = y[train_rows]
        if np.unique(y_train).size < 2:
            log(f"skipping {target}: training shots are single-class")
            continue
        try:
            model = ens.EnsembleModel(target=target)
            for batch_rows in _stratified_batches(y_train, cfg.train_batches):
                rows = train_rows[batch_rows]
                model = ens.learnpp_train_batch(model, x[rows], y[rows], params, spec)
        except (NumericalError, DataError) as e:
            log(f"warning: {target} not trained ({e})")
            continue
        models[target] = model
        ens.write_ensemble(out_dir / f"{target}.svm", model)
        manifest_lines.append(target)
        acc = float((np.sign(ens.learnpp_scores(model, x[train_rows]) + 1e-300) == y_train).mean())
        log(f"trained {target}: {len(model.hypotheses)} hypotheses, train acc {acc:.3f}")
    (out_dir / "manifest.txt").write_text(
        "\n".join(manifest_lines) + ("\n" if manifest_lines else ""), encoding="utf-8"
    )
    if not models:
        raise DataError("no target could be trained")
    return models


def load_models(index_dir) -> dict[str, ens.EnsembleModel]:
    d = model_dir(index_dir)
    manifest = d / "manifest.txt"
    if not manifest.exists():
        raise DataError(f"no model manifest under {d}; run train first")
    out = {}
    for target in manifest.read_text(encoding="utf-8").split():
        out[target] = ens.read_ensemble(d / f"{target}.svm")
    return out


def classify_index(index_dir, cfg: PipelineConfig, log=print) -> None:
    """Score every indexed shot with every trained ensemble; C5 is the
    maximum of the available C1..C4 concept scores."""
    index = ShotIndex(index_dir)
    models = load_models(index_dir)
    records = index.load_all()
    x, ids = _signature_matrix(records)
    scores = {t: ens.learnpp_scores(m, x) for t, m in models.items()}
    for i, rec in enumerate(records):
        rec.scores = {t: float(np.clip(s[i], -1.0, 1.0)) for t, s in scores.items()}
        sub = [rec.scores[t] for t in ("C1", "C2", "C3", "C4") if t in rec.scores]
        if sub:
            rec.scores["C5"] = max(sub)
        index.replace(rec)
    log(f"classified {len(records)} shots against {sorted(models)}")


# ---------------------------------------------------------------------------
# evaluation


def evaluate(index_dir, labels_path, refs_path, cfg: PipelineConfig) -> em.EvalReport:
    index = ShotIndex(index_dir)
    records = index.load_all()
    labels = synth.read_labels(labels_path)
    costs = em.NdcrCosts(
        cost_miss=cfg.ndcr_cost_miss, cost_fa=cfg.ndcr_cost_fa, r_target=cfg.ndcr_rtarget
    )
    report = em.EvalReport()

    for target in ("C1", "C2", "C3", "C4", "C5"):
        ranked = index.query(target)
        if not ranked.shot_ids:
            report.add_concept(target, None)
            continue
        if target == "C5":
            rel = {
                sid: bool(labels.get(sid, set()) & {"C1", "C2", "C3", "C4"})
                for sid in ranked.shot_ids
            }
        else:
            rel = {sid: target in labels.get(sid, set()) for sid in ranked.shot_ids}
        if not any(rel.values()):
            report.add_concept(target, None)
            continue
        report.add_concept(target, em.average_precision(ranked.judged(rel)))

    refs = em.read_references(refs_path) if refs_path and Path(refs_path).exists() else {}
    # Shots sit end to end on the corpus timeline, in manifest order.
    offsets = {}
    clock = 0.0
    for rec in records:
        offsets[rec.shot_id] = clock
        clock += rec.end_seconds() - rec.start_seconds()
    duration_h = max(clock / 3600.0, 1e-9)
    for ev in ("Embrace", "PeopleSplitUp", "ElevatorNoEntry", "ObjectPut", "PersonRuns", "OpposingFlow"):
        ev_refs = refs.get(ev, [])
        if not ev_refs:
            report.add_event(ev, None, None)
            continue
        detections = tuple(
            (
                em.Interval(
                    offsets[rec.shot_id],
                    offsets[rec.shot_id] + rec.end_seconds() - rec.start_seconds(),
                ),
                rec.scores[ev],
            )
            for rec in records
            if ev in rec.scores
        )
        ds = em.DetectionSet(
            event=ev,
            detections=detections,
            references=tuple(ev_refs),
            duration_hours=duration_h,
        )
        actual = em.ndcr(ds, 0.0, costs)
        _, minimum = em.minimum_ndcr(ds, costs)
        report.add_event(ev, actual, minimum)
    return report
