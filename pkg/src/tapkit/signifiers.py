"""Signifier analytics over a labeled corpus: per-type labeling accuracy,
location heatmaps, size statistics, dominant-color clustering, and
keyword extraction.

Accuracy here always means agreement between the human label and the
declared clickable attribute. Classes follow the source of each analysis:
accuracy analyses split elements by the clickable attribute, while color,
size, and word statistics split by the human label (what people perceived).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus
from .features import tokenize
from .rng import RngStream

log = logging.getLogger("tapkit.signifiers")

HEATMAP_HEIGHT = 300
HEATMAP_WIDTH = 168

TAPPABLE = "tappable"
NOT_TAPPABLE = "not-tappable"


class SignifierError(ValueError):
    pass


def _class_flag(name: str) -> int:
    if name == TAPPABLE:
        return 1
    if name == NOT_TAPPABLE:
        return 0
    raise SignifierError(f"class must be {TAPPABLE!r} or {NOT_TAPPABLE!r}, got {name!r}")


def _norm_bounds(corpus: Corpus, ex):
    screen = corpus.screens[ex.screen_id]
    b = screen.find(ex.element_id).bounds
    return (b.x / screen.width, b.y / screen.height, b.w / screen.width, b.h / screen.height)


# ---------------------------------------------------------------------------
# type accuracy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TypeAccuracy:
    tappable_accuracy: float | None
    not_tappable_accuracy: float | None
    n_tappable: int
    n_not_tappable: int


def accuracy_by_type(corpus: Corpus) -> dict:
    """Label-vs-clickable agreement per element type, split by the clickable
    class. Types with no examples are simply absent."""
    if not corpus.examples:
        raise SignifierError("corpus is empty")
    hits: dict[str, dict[int, list]] = {}
    for ex in corpus.examples:
        class_name = corpus.element(ex.screen_id, ex.element_id).class_name
        hits.setdefault(class_name, {0: [], 1: []})[ex.clickable].append(
            int(ex.human_label == ex.clickable)
        )
    out = {}
    for class_name, sides in hits.items():
        tappable, plain = sides[1], sides[0]
        out[class_name] = TypeAccuracy(
            tappable_accuracy=float(np.mean(tappable)) if tappable else None,
            not_tappable_accuracy=float(np.mean(plain)) if plain else None,
            n_tappable=len(tappable),
            n_not_tappable=len(plain),
        )
    return out


# ---------------------------------------------------------------------------
# location heatmap
# ---------------------------------------------------------------------------


@dataclass
class HeatmapGrid:
    """Per-cell (correct, total) counts on a normalized 168x300 screen grid.

    Cells never covered by an element carry no data; accuracy() marks them
    NaN rather than zero.
    """

    correct: np.ndarray = field(
        default_factory=lambda: np.zeros((HEATMAP_HEIGHT, HEATMAP_WIDTH), dtype=np.int64)
    )
    total: np.ndarray = field(
        default_factory=lambda: np.zeros((HEATMAP_HEIGHT, HEATMAP_WIDTH), dtype=np.int64)
    )

    def accuracy(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.where(self.total > 0, self.correct / np.maximum(self.total, 1), np.nan)

    def coverage(self) -> float:
        return float((self.total > 0).mean())

    def to_text(self) -> str:
        lines = [f"tapkit-heatmap v1 {HEATMAP_WIDTH}x{HEATMAP_HEIGHT}"]
        acc = self.accuracy()
        for row in range(HEATMAP_HEIGHT):
            cells = (
                "-" if self.total[row, col] == 0 else f"{acc[row, col]:.4f}"
                for col in range(HEATMAP_WIDTH)
            )
            lines.append(" ".join(cells))
        return "\n".join(lines) + "\n"


def _cell_span(lo: float, hi: float, n_cells: int) -> tuple:
    """Cells covered by the normalized interval [lo, hi): floor/ceil of the
    scaled edges, always at least one cell."""
    start = int(math.floor(lo * n_cells))
    stop = int(math.ceil(hi * n_cells))
    start = max(0, min(start, n_cells - 1))
    stop = max(start + 1, min(stop, n_cells))
    return start, stop


def location_heatmap(corpus: Corpus, element_class: str) -> HeatmapGrid:
    """Rasterize each element of the class onto the grid, counting every
    covered cell toward total and toward correct when the human label
    matches the clickable attribute."""
    flag = _class_flag(element_class)
    grid = HeatmapGrid()
    for ex in corpus.examples:
        if ex.clickable != flag:
            continue
        screen = corpus.screens[ex.screen_id]
        b = screen.find(ex.element_id).bounds
        # edges normalized in one division each; summing normalized (y, h)
        # first would pick up float error at cell boundaries
        r0, r1 = _cell_span(b.y / screen.height, b.bottom / screen.height, HEATMAP_HEIGHT)
        c0, c1 = _cell_span(b.x / screen.width, b.right / screen.width, HEATMAP_WIDTH)
        grid.total[r0:r1, c0:c1] += 1
        if ex.human_label == ex.clickable:
            grid.correct[r0:r1, c0:c1] += 1
    return grid


# ---------------------------------------------------------------------------
# sizes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SizeStats:
    mean_area: dict
    median_area: dict
    mislabeled_tappable_area_ratio: float | None
    per_type_ratio: dict  # type -> (mean ratio, median ratio), not-tappable / tappable


def size_stats(corpus: Corpus) -> SizeStats:
    """Normalized-area statistics per perceived class, the headline ratio of
    misperceived-tappable to correctly-perceived-tappable mean area, and
    per-type not-tappable / tappable size ratios."""
    if not corpus.examples:
        raise SignifierError("corpus is empty")
    area_by_label: dict[int, list] = {0: [], 1: []}
    area_by_type: dict[str, dict[int, list]] = {}
    clickable_split: dict[int, list] = {0: [], 1: []}  # keyed by human label, clickable==1 only
    for ex in corpus.examples:
        x, y, w, h = _norm_bounds(corpus, ex)
        area = w * h
        area_by_label[ex.human_label].append(area)
        class_name = corpus.element(ex.screen_id, ex.element_id).class_name
        area_by_type.setdefault(class_name, {0: [], 1: []})[ex.human_label].append(area)
        if ex.clickable == 1:
            clickable_split[ex.human_label].append(area)

    mean_area = {
        TAPPABLE: float(np.mean(area_by_label[1])) if area_by_label[1] else None,
        NOT_TAPPABLE: float(np.mean(area_by_label[0])) if area_by_label[0] else None,
    }
    median_area = {
        TAPPABLE: float(np.median(area_by_label[1])) if area_by_label[1] else None,
        NOT_TAPPABLE: float(np.median(area_by_label[0])) if area_by_label[0] else None,
    }
    ratio = None
    if clickable_split[0] and clickable_split[1]:
        ratio = float(np.mean(clickable_split[0]) / np.mean(clickable_split[1]))
    per_type = {}
    for class_name, sides in area_by_type.items():
        if sides[0] and sides[1]:
            per_type[class_name] = (
                float(np.mean(sides[0]) / np.mean(sides[1])),
                float(np.median(sides[0]) / np.median(sides[1])),
            )
    return SizeStats(
        mean_area=mean_area,
        median_area=median_area,
        mislabeled_tappable_area_ratio=ratio,
        per_type_ratio=per_type,
    )


# ---------------------------------------------------------------------------
# dominant colors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ColorPalette:
    """K-means centroids over sampled element pixels with cluster shares."""

    centroids: np.ndarray  # (k, 3) in [0, 1]
    proportions: np.ndarray  # (k,), sums to 1

    def to_text(self) -> str:
        lines = ["tapkit-palette v1"]
        for (r, g, b), p in zip(self.centroids, self.proportions):
            lines.append(f"{r:.6f} {g:.6f} {b:.6f} {p:.6f}")
        return "\n".join(lines) + "\n"


def _kmeans_pp_init(samples: np.ndarray, k: int, rng: RngStream) -> np.ndarray:
    n = len(samples)
    centroids = np.empty((k, 3), dtype=np.float64)
    first = int(rng.integers(0, n))
    centroids[0] = samples[first]
    d2 = ((samples - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[i] = samples[int(rng.integers(0, n))]
            continue
        r = rng.random(None) * total
        pick = int(np.searchsorted(np.cumsum(d2), r))
        pick = min(pick, n - 1)
        centroids[i] = samples[pick]
        d2 = np.minimum(d2, ((samples - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans(samples: np.ndarray, k: int, rng: RngStream,
           max_iter: int = 100, tol: float = 1e-6) -> tuple:
    """Plain Lloyd iterations with k-means++ seeding; converges when no
    centroid moves more than ``tol``."""
    centroids = _kmeans_pp_init(samples, k, rng)
    assign = np.zeros(len(samples), dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = d2.argmin(axis=1)
        moved = 0.0
        for j in range(k):
            members = samples[assign == j]
            if len(members) == 0:
                # deterministic re-seed: farthest sample from its centroid
                worst = int(d2.min(axis=1).argmax())
                new = samples[worst]
            else:
                new = members.mean(axis=0)
            moved = max(moved, float(np.abs(new - centroids[j]).max()))
            centroids[j] = new
        if moved < tol:
            break
    d2 = ((samples[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = d2.argmin(axis=1)
    return centroids, assign


def dominant_colors(
    corpus: Corpus,
    element_class: str,
    k: int = 10,
    seed: int = 0,
    samples_per_element: int = 256,
) -> ColorPalette:
    """Cluster sampled pixels of the class's elements into the k most
    prominent colors, by human label. Sampled pixels are sorted before
    clustering, so the palette does not depend on sampling order."""
    flag = _class_flag(element_class)
    rng = RngStream(seed)
    collected = []
    for ex in corpus.examples:
        if ex.human_label != flag:
            continue
        screen = corpus.screens[ex.screen_id]
        b = screen.find(ex.element_id).bounds
        crop = screen.pixels[b.y : b.bottom, b.x : b.right].reshape(-1, 3)
        if len(crop) == 0:
            continue
        if len(crop) > samples_per_element:
            picks = rng.child(f"{ex.screen_id}/{ex.element_id}").choice(
                len(crop), size=samples_per_element, replace=False
            )
            crop = crop[np.sort(picks)]
        collected.append(crop)
    if not collected:
        raise SignifierError(f"no pixels for class {element_class!r}")
    samples = np.concatenate(collected).astype(np.float64) / 255.0
    # canonical order: clustering must not depend on element iteration order
    samples = samples[np.lexsort(samples.T[::-1])]
    distinct = np.unique(samples, axis=0)
    k_eff = min(k, len(distinct))
    if k_eff < k:
        log.warning("only %d distinct colors sampled, reducing k from %d", len(distinct), k)
    centroids, assign = kmeans(samples, k_eff, rng.child("kmeans"))
    proportions = np.bincount(assign, minlength=k_eff) / len(samples)
    order = np.lexsort((centroids[:, 2], centroids[:, 1], centroids[:, 0], -proportions))
    return ColorPalette(centroids=centroids[order], proportions=proportions[order])


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Keyword:
    term: str
    score: float


def tfidf_keywords(tappable_text: str, nontappable_text: str, top_n: int = 5) -> tuple:
    """Two-document TF-IDF: tf is the term share of its document, idf is
    ln(2 / document-frequency), so terms present in both documents score
    exactly zero. Returns the top keywords for each document, ties broken
    alphabetically."""
    docs = [tokenize(tappable_text), tokenize(nontappable_text)]
    if not docs[0] or not docs[1]:
        raise SignifierError("both documents must contain at least one token")
    results = []
    for i, tokens in enumerate(docs):
        other = set(docs[1 - i])
        n = len(tokens)
        scores = {}
        for term in set(tokens):
            tf = tokens.count(term) / n
            idf = math.log(2 / (1 + (term in other)))
            scores[term] = tf * idf
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        results.append(tuple(Keyword(term=t, score=s) for t, s in ranked))
    return results[0], results[1]


@dataclass(frozen=True)
class WordCountStats:
    mean_log_count: dict
    median_log_count: dict
    mean_ratio: float | None  # not-tappable / tappable


def word_count_stats(corpus: Corpus) -> WordCountStats:
    """Log-transformed word counts (ln(count + 1), so empty text
    contributes zero) per perceived class."""
    if not corpus.examples:
        raise SignifierError("corpus is empty")
    logs: dict[int, list] = {0: [], 1: []}
    for ex in corpus.examples:
        text = corpus.element(ex.screen_id, ex.element_id).text
        logs[ex.human_label].append(math.log(len(tokenize(text)) + 1))
    mean = {
        TAPPABLE: float(np.mean(logs[1])) if logs[1] else None,
        NOT_TAPPABLE: float(np.mean(logs[0])) if logs[0] else None,
    }
    median = {
        TAPPABLE: float(np.median(logs[1])) if logs[1] else None,
        NOT_TAPPABLE: float(np.median(logs[0])) if logs[0] else None,
    }
    ratio = None
    if logs[0] and logs[1] and mean[TAPPABLE]:
        ratio = mean[NOT_TAPPABLE] / mean[TAPPABLE]
    return WordCountStats(mean_log_count=mean, median_log_count=median, mean_ratio=ratio)
