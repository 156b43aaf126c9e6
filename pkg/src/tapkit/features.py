"""Feature encoding: turn a (screen, element) pair into model inputs.

An element is described to the model by seven pieces: a 50-d semantic vector
(elementwise max over fixed pre-learned word vectors), a bounded word-count
scalar, an element-type index into a 22-entry vocabulary, the declared
clickable flag, the element's pixels resampled to 32x32x3, the whole screen
letterboxed to 300x168x3, and the bounding box normalized by the screen
dimensions. Text comes from the view hierarchy's text attribute.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .rng import RngStream

SEMANTIC_DIM = 50
ELEMENT_HW = (32, 32)
SCREEN_HW = (300, 168)
TYPE_VOCAB_SIZE = 22
OTHER_TYPE_INDEX = TYPE_VOCAB_SIZE - 1
WORD_COUNT_SCALE = 5.0

_TOKEN_RE = re.compile(r"[a-z0-9]+")


class EncodingError(ValueError):
    """An element or screen cannot be encoded (malformed geometry/pixels)."""


def tokenize(text: str | None) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries."""
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# word embeddings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingTable:
    """Fixed token -> 50-d vector map with a fingerprint of its source file.

    Absent tokens map to the all-zero vector.
    """

    vectors: dict
    dim: int
    fingerprint: str

    def lookup(self, token: str) -> np.ndarray:
        vec = self.vectors.get(token)
        if vec is None:
            return np.zeros(self.dim, dtype=np.float32)
        return vec


def load_embedding_table(path) -> EmbeddingTable:
    """Parse a plain-text table: one line per token, token then 50 floats."""
    raw = open(path, "rb").read()
    fingerprint = hashlib.sha256(raw).hexdigest()
    vectors = {}
    dim = None
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        token, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise EncodingError(f"embedding file line {lineno}: expected {dim} values, got {len(values)}")
        vectors[token] = np.array([float(v) for v in values], dtype=np.float32)
    if dim is None:
        raise EncodingError("embedding file is empty")
    return EmbeddingTable(vectors=vectors, dim=dim, fingerprint=fingerprint)


def write_embedding_table(path, tokens, rng: RngStream, dim: int = SEMANTIC_DIM) -> None:
    """Write a deterministic synthetic table covering ``tokens``.

    Vector components are drawn per token from a stream keyed by the token
    itself, so a token's vector does not depend on the rest of the list.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for token in sorted(set(tokens)):
            vec = rng.child(f"embed/{token}").uniform(-1.0, 1.0, size=dim)
            fh.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


def embed_text(tokens: list, table: EmbeddingTable) -> np.ndarray:
    """Elementwise max over the tokens' vectors; empty input -> zero vector."""
    if not tokens:
        return np.zeros(table.dim, dtype=np.float32)
    stacked = np.stack([table.lookup(t) for t in tokens])
    return stacked.max(axis=0)


def word_count_feature(n: int) -> float:
    """Bounded monotone word-count signal ``1 - exp(-n / 5)`` in [0, 1).

    Clamped just below 1 where float64 would round the tail away, so the
    declared half-open range holds for any count.
    """
    if n < 0:
        raise EncodingError(f"word count must be nonnegative, got {n}")
    return float(min(-np.expm1(-n / WORD_COUNT_SCALE), np.nextafter(1.0, 0.0)))


# ---------------------------------------------------------------------------
# element types
# ---------------------------------------------------------------------------


def default_type_vocab() -> tuple:
    text = resources.files("tapkit.data").joinpath("type_vocab.txt").read_text("utf-8")
    return tuple(line.strip() for line in text.splitlines() if line.strip())


def load_type_vocab(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        vocab = tuple(line.strip() for line in fh if line.strip())
    if len(vocab) != TYPE_VOCAB_SIZE:
        raise EncodingError(f"type vocab must have {TYPE_VOCAB_SIZE} entries, got {len(vocab)}")
    return vocab


def type_index(class_name: str, vocab) -> int:
    """Case-sensitive exact match; anything unknown lands in the OTHER slot."""
    try:
        return vocab.index(class_name)
    except ValueError:
        return len(vocab) - 1


# ---------------------------------------------------------------------------
# geometry and pixels
# ---------------------------------------------------------------------------


def encode_bbox(bounds, screen_w: int, screen_h: int) -> np.ndarray:
    """Normalize (x, y, w, h) by the screen dimensions."""
    x, y, w, h = bounds
    if screen_w <= 0 or screen_h <= 0:
        raise EncodingError(f"screen dimensions must be positive, got {screen_w}x{screen_h}")
    if w <= 0 or h <= 0:
        raise EncodingError(f"degenerate bounds {bounds!r}")
    if x < 0 or y < 0 or x + w > screen_w or y + h > screen_h:
        raise EncodingError(f"bounds {bounds!r} outside {screen_w}x{screen_h} screen")
    return np.array([x / screen_w, y / screen_h, w / screen_w, h / screen_h], dtype=np.float32)


def bilinear_resize(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-center bilinear resample of an (H, W, C) float image.

    Same-size input comes back unchanged (source coordinates are exact).
    """
    in_h, in_w = image.shape[:2]
    sy = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    sx = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy = (sy - y0).astype(image.dtype)
    fx = (sx - x0).astype(image.dtype)
    y0c = np.clip(y0, 0, in_h - 1)
    y1c = np.clip(y0 + 1, 0, in_h - 1)
    x0c = np.clip(x0, 0, in_w - 1)
    x1c = np.clip(x0 + 1, 0, in_w - 1)
    top = image[y0c][:, x0c] * (1 - fx)[None, :, None] + image[y0c][:, x1c] * fx[None, :, None]
    bot = image[y1c][:, x0c] * (1 - fx)[None, :, None] + image[y1c][:, x1c] * fx[None, :, None]
    return top * (1 - fy)[:, None, None] + bot * fy[:, None, None]


def _to_unit_float(pixels: np.ndarray) -> np.ndarray:
    if pixels.dtype == np.uint8:
        return pixels.astype(np.float32) / 255.0
    return pixels.astype(np.float32)


def crop_resize_element(screen_pixels: np.ndarray, bounds) -> np.ndarray:
    """Crop the element and stretch it to 32x32x3 with channels in [0, 1].

    Aspect ratio is intentionally not preserved for the element crop.
    """
    x, y, w, h = bounds
    sh, sw = screen_pixels.shape[:2]
    if w <= 0 or h <= 0:
        raise EncodingError(f"empty crop for bounds {bounds!r}")
    if x < 0 or y < 0 or x + w > sw or y + h > sh:
        raise EncodingError(f"crop bounds {bounds!r} outside {sw}x{sh} screen")
    crop = _to_unit_float(screen_pixels[y : y + h, x : x + w, :])
    out = bilinear_resize(crop, *ELEMENT_HW)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def resize_screen(screen_pixels: np.ndarray) -> np.ndarray:
    """Letterbox a portrait screenshot into 300x168x3 with [0, 1] channels.

    The content is scaled by ``min(300/H, 168/W)`` (aspect preserved),
    centered, and zero-padded to exactly 300x168; landscape input is
    rejected because the corpus is portrait-only.
    """
    sh, sw = screen_pixels.shape[:2]
    if sw > sh:
        raise EncodingError(f"landscape screenshot ({sw}x{sh}) is not supported")
    out_h, out_w = SCREEN_HW
    scale = min(out_h / sh, out_w / sw)
    content_h = min(out_h, max(1, round(sh * scale)))
    content_w = min(out_w, max(1, round(sw * scale)))
    content = bilinear_resize(_to_unit_float(screen_pixels), content_h, content_w)
    out = np.zeros((out_h, out_w, 3), dtype=np.float32)
    top = (out_h - content_h) // 2
    left = (out_w - content_w) // 2
    out[top : top + content_h, left : left + content_w, :] = np.clip(content, 0.0, 1.0)
    return out


# ---------------------------------------------------------------------------
# the full bundle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureBundle:
    """Everything the model consumes for one element."""

    semantic: np.ndarray
    word_count: float
    type_idx: int
    clickable: int
    element_image: np.ndarray
    screen_image: np.ndarray
    bbox: np.ndarray

    def content_bytes(self) -> bytes:
        """Canonical byte serialization, used for determinism checks."""
        return b"".join(
            [
                self.semantic.astype("<f4").tobytes(),
                np.float32(self.word_count).tobytes(),
                np.int32(self.type_idx).tobytes(),
                np.int32(self.clickable).tobytes(),
                self.element_image.astype("<f4").tobytes(),
                self.screen_image.astype("<f4").tobytes(),
                self.bbox.astype("<f4").tobytes(),
            ]
        )


def encode_element(
    screen, element, table: EmbeddingTable, vocab, screen_image: np.ndarray | None = None
) -> FeatureBundle:
    """Build the model input for one element of a parsed screen.

    ``screen_image`` lets callers reuse one letterboxed screen tensor across
    the many elements of the same screen.
    """
    tokens = tokenize(element.text)
    sh, sw = screen.pixels.shape[:2]
    if screen_image is None:
        screen_image = resize_screen(screen.pixels)
    return FeatureBundle(
        semantic=embed_text(tokens, table),
        word_count=word_count_feature(len(tokens)),
        type_idx=type_index(element.class_name, vocab),
        clickable=int(element.clickable),
        element_image=crop_resize_element(screen.pixels, element.bounds),
        screen_image=screen_image,
        bbox=encode_bbox(element.bounds, sw, sh),
    )
