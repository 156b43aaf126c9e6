"""Measurement protocol: precision-recall sweeps, F1 threshold selection,
k-fold cross-validation, minority upsampling, and the clickable-attribute
baseline.

A report always carries its confusion matrix; the headline numbers are
recomputable from it exactly. Reports and cross-validation summaries
serialize to a deterministic plain-text format consumed by the CLI and the
web UI.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .corpus import Corpus
from .rng import RngStream

log = logging.getLogger("tapkit.evaluation")


class EvaluationError(ValueError):
    """Inputs cannot be scored (length mismatch, missing class, ...)."""


class PrPoint(NamedTuple):
    threshold: float
    precision: float
    recall: float


@dataclass(frozen=True)
class PrCurve:
    """One point per distinct score, thresholds strictly decreasing.

    ``auc`` integrates precision over recall by the trapezoid rule with an
    anchor at (recall 0, precision 1), so perfectly separated scores reach
    exactly 1.0.
    """

    points: tuple
    auc: float


def pr_curve(scores, labels) -> PrCurve:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise EvaluationError(
            f"scores and labels must be equal-length vectors, got {scores.shape} and {labels.shape}"
        )
    if not np.isin(labels, (0, 1)).all():
        raise EvaluationError("labels must be 0 or 1")
    total_pos = int(labels.sum())
    if total_pos == 0:
        raise EvaluationError("precision-recall needs at least one positive example")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order].astype(int)
    tp_cum = np.cumsum(sorted_labels)
    fp_cum = np.cumsum(1 - sorted_labels)
    # equal scores collapse into a single threshold: take the last row of
    # each run so the counts include every element at that score
    boundaries = np.nonzero(np.append(np.diff(sorted_scores) != 0, True))[0]
    points = []
    for i in boundaries:
        tp, fp = int(tp_cum[i]), int(fp_cum[i])
        points.append(
            PrPoint(
                threshold=float(sorted_scores[i]),
                precision=tp / (tp + fp),
                recall=tp / total_pos,
            )
        )
    rp = [(0.0, 1.0)] + [(p.recall, p.precision) for p in points]
    auc = 0.0
    for (r0, p0), (r1, p1) in zip(rp, rp[1:]):
        auc += (r1 - r0) * (p0 + p1) / 2.0
    return PrCurve(points=tuple(points), auc=auc)


def select_threshold(curve: PrCurve) -> float:
    """Threshold with the best F1 on the curve; ties take the lower one."""
    if not curve.points:
        raise EvaluationError("cannot select a threshold from an empty curve")
    best_f1, best_t = -1.0, None
    for point in curve.points:  # descending thresholds, so >= keeps the lowest tie
        denom = point.precision + point.recall
        f1 = 2 * point.precision * point.recall / denom if denom > 0 else 0.0
        if f1 >= best_f1:
            best_f1, best_t = f1, point.threshold
    return best_t


class PrResult(NamedTuple):
    precision: float
    recall: float
    precision_defined: bool


def precision_recall(predictions, labels, positive_class: int = 1) -> PrResult:
    """Standard precision/recall; with no predicted positives the precision
    is reported as 0 and flagged undefined rather than omitted."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise EvaluationError("predictions and labels must have equal length")
    pred_pos = predictions == positive_class
    actual_pos = labels == positive_class
    tp = int(np.sum(pred_pos & actual_pos))
    precision_defined = bool(pred_pos.any())
    precision = tp / int(pred_pos.sum()) if precision_defined else 0.0
    recall = tp / int(actual_pos.sum()) if actual_pos.any() else 0.0
    return PrResult(precision=precision, recall=recall, precision_defined=precision_defined)


@dataclass(frozen=True)
class EvalReport:
    """Counts, derived metrics, and the scoring curve for one evaluation."""

    n: int
    tp: int
    fp: int
    fn: int
    tn: int
    threshold: float | None = None
    fold: int | None = None
    curve: PrCurve | None = None

    def __post_init__(self):
        if self.tp + self.fp + self.fn + self.tn != self.n:
            raise EvaluationError("confusion counts must sum to n")

    def precision_for(self, positive_class: int = 1) -> float:
        tp, fp = (self.tp, self.fp) if positive_class == 1 else (self.tn, self.fn)
        return tp / (tp + fp) if tp + fp else 0.0

    def recall_for(self, positive_class: int = 1) -> float:
        tp, fn = (self.tp, self.fn) if positive_class == 1 else (self.tn, self.fp)
        return tp / (tp + fn) if tp + fn else 0.0

    @property
    def precision(self) -> float:
        return self.precision_for(1)

    @property
    def recall(self) -> float:
        return self.recall_for(1)

    def to_text(self) -> str:
        lines = ["tapkit-eval-report v1"]
        lines.append(f"fold: {'-' if self.fold is None else self.fold}")
        lines.append(f"n: {self.n}")
        lines.append(f"confusion: tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn}")
        lines.append(f"precision[tappable]: {self.precision_for(1):.6f}")
        lines.append(f"recall[tappable]: {self.recall_for(1):.6f}")
        lines.append(f"precision[not-tappable]: {self.precision_for(0):.6f}")
        lines.append(f"recall[not-tappable]: {self.recall_for(0):.6f}")
        if self.threshold is not None:
            lines.append(f"threshold: {self.threshold:.6f}")
        if self.curve is not None:
            lines.append(f"pr-auc: {self.curve.auc:.6f}")
            lines.append("curve: threshold precision recall")
            for p in self.curve.points:
                lines.append(f"  {p.threshold:.6f} {p.precision:.6f} {p.recall:.6f}")
        return "\n".join(lines) + "\n"


def report_from_scores(scores, labels, threshold: float, fold: int | None = None) -> EvalReport:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    curve = pr_curve(scores, labels)
    predictions = (scores >= threshold).astype(int)
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    tn = int(np.sum((predictions == 0) & (labels == 0)))
    return EvalReport(
        n=len(labels), tp=tp, fp=fp, fn=fn, tn=tn, threshold=threshold, fold=fold, curve=curve
    )


# ---------------------------------------------------------------------------
# splits and balancing
# ---------------------------------------------------------------------------


def kfold_split(n: int, k: int = 10, seed: int = 0) -> list:
    """Seeded shuffle cut into k contiguous validation folds.

    Every index lands in exactly one validation fold and fold sizes differ
    by at most one (the first ``n % k`` folds get the extra element).
    """
    if n < k:
        raise EvaluationError(f"need at least k={k} examples, got {n}")
    if k < 2:
        raise EvaluationError("k must be at least 2")
    perm = RngStream(seed).child("kfold").permutation(n)
    base, extra = divmod(n, k)
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        val = perm[start : start + size]
        train = np.concatenate([perm[:start], perm[start + size :]])
        folds.append((np.sort(train), np.sort(val)))
        start += size
    return folds


def upsample_indices(labels, seed: int = 0) -> np.ndarray:
    """Positions forming a class-balanced multiset: every original index
    followed by seeded with-replacement draws from the minority class."""
    labels = np.asarray(labels).astype(int)
    n_pos, n_neg = int((labels == 1).sum()), int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("cannot balance a single-class corpus")
    base = np.arange(len(labels))
    if n_pos == n_neg:
        return base
    minority = 1 if n_pos < n_neg else 0
    pool = np.nonzero(labels == minority)[0]
    draws = RngStream(seed).child("upsample").integers(0, len(pool), size=abs(n_pos - n_neg))
    return np.concatenate([base, pool[draws]])


def upsample_minority(corpus: Corpus, seed: int = 0) -> Corpus:
    """Duplicate seeded draws (with replacement) of the minority class until
    both classes have equal counts. Meant for training splits only; never
    applied to validation data by the cross-validation driver."""
    labels = [ex.human_label for ex in corpus.examples]
    indices = upsample_indices(labels, seed)
    if len(indices) == len(corpus.examples):
        return corpus
    return Corpus(
        examples=[corpus.examples[i] for i in indices],
        screens=corpus.screens,
        ratings=corpus.ratings,
        meta=corpus.meta,
    )


# ---------------------------------------------------------------------------
# baseline and cross-validation
# ---------------------------------------------------------------------------


def baseline_clickable(corpus: Corpus) -> EvalReport:
    """Score the declared clickable attribute as a predictor of the human
    label. On the original study corpus this baseline reached precision
    0.899 / recall 0.796 for tappable elements; that figure needs the
    proprietary labels and is kept for context only."""
    labels = np.array([ex.human_label for ex in corpus.examples])
    clickable = np.array([ex.clickable for ex in corpus.examples], dtype=float)
    return report_from_scores(clickable, labels, threshold=0.5)


@dataclass
class CrossValidationResult:
    folds: list
    baseline: EvalReport

    @property
    def mean_precision(self) -> float:
        return float(np.mean([r.precision for r in self.folds]))

    @property
    def sd_precision(self) -> float:
        return float(np.std([r.precision for r in self.folds]))

    @property
    def mean_recall(self) -> float:
        return float(np.mean([r.recall for r in self.folds]))

    @property
    def sd_recall(self) -> float:
        return float(np.std([r.recall for r in self.folds]))

    def to_text(self) -> str:
        lines = ["tapkit-cross-validation v1"]
        lines.append(f"folds: {len(self.folds)}")
        lines.append(f"mean_precision: {self.mean_precision:.6f} (sd {self.sd_precision:.6f})")
        lines.append(f"mean_recall: {self.mean_recall:.6f} (sd {self.sd_recall:.6f})")
        lines.append(
            f"baseline_clickable: precision {self.baseline.precision:.6f} "
            f"recall {self.baseline.recall:.6f}"
        )
        lines.append("")
        for report in self.folds:
            lines.append(report.to_text())
        return "\n".join(lines)


_FOLD_DATASET = None  # set in the parent right before forking fold workers
_FOLD_BLAS_LIMIT = None


def _fold_worker_init(blas_threads: int) -> None:
    global _FOLD_BLAS_LIMIT
    try:
        import threadpoolctl

        _FOLD_BLAS_LIMIT = threadpoolctl.threadpool_limits(limits=blas_threads)
    except ImportError:
        pass


def _run_fold(args) -> EvalReport:
    from . import model as model_mod

    fold_index, train_idx, val_idx, fold_config, upsample, fingerprint = args
    ds = _FOLD_DATASET
    rows = train_idx
    if upsample:
        rows = train_idx[upsample_indices(ds.labels[train_idx], seed=fold_config.seed)]
    net = model_mod.TappabilityModel.build(fold_config)
    net.embedding_fingerprint = fingerprint
    model_mod.train_on_dataset(net, ds.take(rows), fold_config)
    scores = model_mod.predict_probabilities(net, ds, val_idx)
    labels = ds.labels[val_idx].astype(int)
    threshold = select_threshold(pr_curve(scores, labels))
    report = report_from_scores(scores, labels, threshold, fold=fold_index)
    log.info(
        "fold %d: precision %.3f recall %.3f (threshold %.3f)",
        fold_index, report.precision, report.recall, threshold,
    )
    return report


def cross_validate(
    corpus: Corpus,
    table,
    config=None,
    k: int = 10,
    upsample: bool = True,
    workers: int = 1,
) -> CrossValidationResult:
    """Train one model per fold, calibrate its threshold on the fold's
    validation curve, and aggregate tappable-class precision/recall.

    Folds are independent (each owns its model, seed, and arrays), so with
    ``workers > 1`` they run in forked worker processes; the encoded corpus
    is shared copy-on-write. Fold results depend only on the seeds, not on
    the worker count or completion order.
    """
    import multiprocessing

    from . import model as model_mod
    from .features import default_type_vocab

    global _FOLD_DATASET
    config = config or model_mod.ModelConfig()
    folds = kfold_split(len(corpus), k=k, seed=config.seed)
    ds = model_mod.encode_corpus(corpus, table, default_type_vocab())
    jobs = [
        (
            fold_index,
            train_idx,
            val_idx,
            replace(config, seed=config.seed + fold_index + 1, holdout_fraction=0.0),
            upsample,
            table.fingerprint,
        )
        for fold_index, (train_idx, val_idx) in enumerate(folds)
    ]
    _FOLD_DATASET = ds
    try:
        if workers > 1 and "fork" in multiprocessing.get_all_start_methods():
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(processes=workers, initializer=_fold_worker_init, initargs=(4,)) as pool:
                reports = pool.map(_run_fold, jobs)
        else:
            reports = [_run_fold(job) for job in jobs]
    finally:
        _FOLD_DATASET = None
    return CrossValidationResult(folds=reports, baseline=baseline_clickable(corpus))
