"""Independent brute-force reference implementations used to check the
vectorized production code. Everything here is written as plain loops over
the mathematical definitions and shares no code with the package."""

from __future__ import annotations

import math

import numpy as np


def naive_conv3x3(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Direct summation over every 3x3 window, zero outside the image."""
    h, w, cin = x.shape
    cout = weights.shape[3]
    out = np.zeros((h, w, cout), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            for f in range(cout):
                acc = float(bias[f])
                for dy in range(3):
                    for dx in range(3):
                        yy, xx = i + dy - 1, j + dx - 1
                        if 0 <= yy < h and 0 <= xx < w:
                            for c in range(cin):
                                acc += float(x[yy, xx, c]) * float(weights[dy, dx, c, f])
                out[i, j, f] = acc
    return out


def naive_maxpool(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    out = np.empty((h2, w2, c), dtype=x.dtype)
    for i in range(h2):
        for j in range(w2):
            for k in range(c):
                block = [
                    x[2 * i, 2 * j, k],
                    x[2 * i, 2 * j + 1, k],
                    x[2 * i + 1, 2 * j, k],
                    x[2 * i + 1, 2 * j + 1, k],
                ]
                out[i, j, k] = max(block)
    return out


def naive_dense(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    n_in, n_out = weights.shape
    out = np.zeros(n_out, dtype=np.float64)
    for j in range(n_out):
        acc = float(bias[j])
        for i in range(n_in):
            acc += float(x[i]) * float(weights[i, j])
        out[j] = acc
    return out


def naive_bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resample, one output pixel at a time."""
    in_h, in_w, ch = img.shape
    out = np.zeros((out_h, out_w, ch), dtype=np.float64)
    for i in range(out_h):
        sy = (i + 0.5) * in_h / out_h - 0.5
        y0 = math.floor(sy)
        fy = sy - y0
        y0c = min(max(y0, 0), in_h - 1)
        y1c = min(max(y0 + 1, 0), in_h - 1)
        for j in range(out_w):
            sx = (j + 0.5) * in_w / out_w - 0.5
            x0 = math.floor(sx)
            fx = sx - x0
            x0c = min(max(x0, 0), in_w - 1)
            x1c = min(max(x0 + 1, 0), in_w - 1)
            for k in range(ch):
                top = (1 - fx) * img[y0c, x0c, k] + fx * img[y0c, x1c, k]
                bot = (1 - fx) * img[y1c, x0c, k] + fx * img[y1c, x1c, k]
                out[i, j, k] = (1 - fy) * top + fy * bot
    return out


def naive_pr_points(scores, labels):
    """One (threshold, precision, recall) point per distinct score,
    thresholds descending, prediction rule ``score >= threshold``."""
    points = []
    total_pos = sum(labels)
    for t in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= t and y == 0)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / total_pos
        points.append((t, precision, recall))
    return points


def naive_pr_auc(points):
    """Trapezoid over (recall, precision) with the (0, 1) anchor prepended."""
    rp = [(0.0, 1.0)] + [(r, p) for _, p, r in points]
    auc = 0.0
    for (r0, p0), (r1, p1) in zip(rp, rp[1:]):
        auc += (r1 - r0) * (p0 + p1) / 2.0
    return auc


def naive_fleiss_kappa(matrix) -> float:
    """Direct two-category chance-corrected agreement over a count matrix."""
    n_items = len(matrix)
    n_raters = sum(matrix[0])
    p_bar = 0.0
    for row in matrix:
        agree = sum(c * c for c in row) - n_raters
        p_bar += agree / (n_raters * (n_raters - 1))
    p_bar /= n_items
    shares = [sum(row[j] for row in matrix) / (n_items * n_raters) for j in range(len(matrix[0]))]
    p_e = sum(s * s for s in shares)
    return (p_bar - p_e) / (1 - p_e)


def naive_tfidf(doc_tokens: list, other_tokens: list) -> dict:
    """Two-document TF-IDF for the first document: tf = count / length,
    idf = ln(2 / df) with df counting presence in {doc, other}."""
    scores = {}
    n = len(doc_tokens)
    other = set(other_tokens)
    for term in set(doc_tokens):
        tf = doc_tokens.count(term) / n
        df = 1 + (1 if term in other else 0)
        scores[term] = tf * math.log(2 / df)
    return scores


def fit_logistic(features: np.ndarray, labels: np.ndarray, steps: int = 4000, lr: float = 0.5):
    """Tiny logistic-regression fit by full-batch gradient descent; returns
    predicted labels on the training data."""
    x = np.hstack([features, np.ones((len(features), 1))])
    w = np.zeros(x.shape[1])
    for _ in range(steps):
        p = 1.0 / (1.0 + np.exp(-x @ w))
        w -= lr * x.T @ (p - labels) / len(labels)
    return (x @ w > 0).astype(int)
