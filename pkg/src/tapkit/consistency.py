"""Multi-rater agreement metrics and model-vs-consistency binning.

Two views of the same ratings: a per-element agreement score (the sum of
squared category shares, averaged over elements and scaled to percent) and
the chance-corrected Fleiss kappa for a fixed rater count. The binning
analysis groups five-rater elements by vote split and reports the model's
probabilities per bin, which should rise with the tappable vote count.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, RatingSet

log = logging.getLogger("tapkit.consistency")


class ConsistencyError(ValueError):
    pass


def agreement_score(ratings) -> float:
    """Sum over categories of the squared share of raters choosing it.

    1.0 when unanimous; 0.5 is the two-category floor (an even split).
    """
    votes = list(ratings.ratings) if isinstance(ratings, RatingSet) else list(ratings)
    if not votes:
        raise ConsistencyError("rating set is empty")
    if any(v not in (0, 1) for v in votes):
        raise ConsistencyError("ratings must be 0 or 1")
    n = len(votes)
    ones = sum(votes)
    return (ones / n) ** 2 + ((n - ones) / n) ** 2


def overall_agreement(rating_sets) -> float:
    """Mean per-element agreement score, as a percentage.

    The original five-rater study measured 83.43% on its corpus; that
    number needs the proprietary ratings and is kept for context only.
    """
    rating_sets = list(rating_sets)
    if not rating_sets:
        raise ConsistencyError("no rating sets")
    return float(np.mean([agreement_score(rs) for rs in rating_sets])) * 100.0


@dataclass(frozen=True)
class AgreementResult:
    """Per-element scores, the overall percentage, and a per-type view."""

    per_element: dict  # (screen_id, element_id) -> score in [0.5, 1]
    overall_percent: float
    per_type: dict  # element class name -> mean score

    def to_text(self) -> str:
        lines = ["tapkit-agreement v1", f"overall_percent: {self.overall_percent:.4f}"]
        for name in sorted(self.per_type):
            lines.append(f"type[{name}]: {self.per_type[name]:.4f}")
        return "\n".join(lines) + "\n"


def agreement_result(corpus: Corpus) -> AgreementResult:
    """Agreement over a corpus's rating sets, broken down by element type."""
    if not corpus.ratings:
        raise ConsistencyError("corpus has no rating sets")
    per_element = {}
    by_type: dict[str, list] = {}
    for rs in corpus.ratings:
        score = agreement_score(rs)
        per_element[(rs.screen_id, rs.element_id)] = score
        class_name = corpus.element(rs.screen_id, rs.element_id).class_name
        by_type.setdefault(class_name, []).append(score)
    return AgreementResult(
        per_element=per_element,
        overall_percent=float(np.mean(list(per_element.values()))) * 100.0,
        per_type={name: float(np.mean(scores)) for name, scores in by_type.items()},
    )


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    observed_agreement: float
    expected_agreement: float
    # large-sample null-hypothesis dispersion, reported for context only
    se: float
    z: float
    ci95: tuple

    def to_text(self) -> str:
        return (
            "tapkit-kappa v1\n"
            f"kappa: {self.kappa:.6f}\n"
            f"observed_agreement: {self.observed_agreement:.6f}\n"
            f"expected_agreement: {self.expected_agreement:.6f}\n"
            f"se: {self.se:.6f}\n"
            f"z: {self.z:.6f}\n"
            f"ci95: [{self.ci95[0]:.6f}, {self.ci95[1]:.6f}]\n"
        )


def fleiss_kappa(matrix) -> KappaResult:
    """Fleiss' chance-corrected agreement for a two-category count matrix,
    one row per element, each row summing to the same rater count."""
    counts = np.asarray(matrix, dtype=np.int64)
    if counts.ndim != 2 or counts.shape[1] != 2:
        raise ConsistencyError("expected an (elements x 2 categories) count matrix")
    if counts.shape[0] < 1:
        raise ConsistencyError("matrix is empty")
    row_sums = counts.sum(axis=1)
    n_raters = int(row_sums[0])
    if n_raters < 2:
        raise ConsistencyError("need at least 2 raters per element")
    if not np.all(row_sums == n_raters):
        raise ConsistencyError("every element must have the same number of ratings")

    n_items = counts.shape[0]
    p_i = ((counts**2).sum(axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_bar = float(p_i.mean())
    shares = counts.sum(axis=0) / (n_items * n_raters)
    p_e = float((shares**2).sum())
    if p_e >= 1.0:
        raise ConsistencyError("all ratings fall in one category, kappa is undefined")
    kappa = (p_bar - p_e) / (1 - p_e)

    q = 1 - shares
    pq = shares * q
    var = (2.0 / (n_items * n_raters * (n_raters - 1))) * (
        (pq.sum() ** 2 - float((pq * (q - shares)).sum())) / (pq.sum() ** 2)
    )
    se = float(np.sqrt(max(var, 0.0)))
    z = kappa / se if se > 0 else float("inf")
    return KappaResult(
        kappa=float(kappa),
        observed_agreement=p_bar,
        expected_agreement=p_e,
        se=se,
        z=float(z),
        ci95=(float(kappa - 1.96 * se), float(kappa + 1.96 * se)),
    )


def rating_matrix(rating_sets) -> np.ndarray:
    """Stack rating sets into the (elements x 2) count matrix: column 0 is
    not-tappable votes, column 1 tappable votes."""
    rows = []
    for rs in rating_sets:
        ones = sum(rs.ratings)
        rows.append((len(rs.ratings) - ones, ones))
    return np.asarray(rows, dtype=np.int64)


# ---------------------------------------------------------------------------
# model probability vs rater consistency
# ---------------------------------------------------------------------------

BIN_LABELS = (
    "all agree not tappable",
    "4/5 agree not tappable",
    "3/5 agree not tappable",
    "3/5 agree tappable",
    "4/5 agree tappable",
    "all agree tappable",
)


@dataclass(frozen=True)
class ConsistencyBin:
    label: str
    tappable_votes: int
    probabilities: tuple

    @property
    def mean(self) -> float | None:
        return float(np.mean(self.probabilities)) if self.probabilities else None


@dataclass(frozen=True)
class ConsistencyBins:
    bins: tuple

    def to_text(self) -> str:
        lines = ["tapkit-consistency-bins v1"]
        for b in self.bins:
            mean = "-" if b.mean is None else f"{b.mean:.6f}"
            lines.append(f"{b.tappable_votes} | {b.label} | n={len(b.probabilities)} | mean={mean}")
            if b.probabilities:
                lines.append("  " + " ".join(f"{p:.6f}" for p in b.probabilities))
        return "\n".join(lines) + "\n"


def consistency_bins(corpus: Corpus, checkpoint, table) -> ConsistencyBins:
    """Group five-rater elements by tappable-vote count and collect the
    model's probability for each; empty bins stay in the table with no mean.

    Every rated element must be present in the corpus screens and rated by
    exactly five workers (the binning layout assumes it).
    """
    from .features import encode_element, resize_screen
    from .model import dataset_from_bundles, predict_probabilities

    if not corpus.ratings:
        raise ConsistencyError("corpus has no rating sets")
    for rs in corpus.ratings:
        if len(rs.ratings) != 5:
            raise ConsistencyError(
                f"{rs.screen_id}/{rs.element_id}: binning needs exactly 5 ratings, "
                f"got {len(rs.ratings)}"
            )
    vocab = checkpoint.model.type_vocab
    screen_images = {}
    bundles = []
    for rs in corpus.ratings:
        screen = corpus.screens[rs.screen_id]
        if rs.screen_id not in screen_images:
            screen_images[rs.screen_id] = resize_screen(screen.pixels)
        bundles.append(
            encode_element(
                screen, screen.find(rs.element_id), table, vocab,
                screen_image=screen_images[rs.screen_id],
            )
        )
    ds = dataset_from_bundles(bundles)
    probs = predict_probabilities(checkpoint.model, ds)

    by_votes: dict[int, list] = {v: [] for v in range(6)}
    for rs, p in zip(corpus.ratings, probs):
        by_votes[sum(rs.ratings)].append(float(p))
    bins = tuple(
        ConsistencyBin(label=BIN_LABELS[v], tappable_votes=v, probabilities=tuple(by_votes[v]))
        for v in range(6)
    )
    return ConsistencyBins(bins=bins)
