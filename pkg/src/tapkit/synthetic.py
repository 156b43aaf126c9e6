"""Seeded synthetic screens with a planted, separable tappability rule.

The generator paints flat-design screens whose ground truth is known by
construction: an element is tappable exactly when it has a saturated blue
fill AND its center sits in the lower half of the screen. Labels follow the
rule exactly; the declared ``clickable`` attribute can be flipped on a
configurable fraction of elements to simulate developer/perception
disagreement. Element centers avoid a horizontal band around mid-screen so
the rule stays linearly separable with a margin, and each screen gets an
equal split of tappable and not-tappable elements, which keeps any corpus
close to label-balanced.

The rule and the per-element planted attributes are recorded in the corpus
metadata so tests can verify recoverability without peeking at pixels.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, LabeledExample, RatingSet
from .hierarchy import Rect, ScreenRecord, ViewElement, default_excluded_zones
from .rng import RngStream

RULE_TEXT = "tappable iff saturated blue fill and element center in lower half of screen"

ACTION_WORDS = ("submit", "close", "login", "send", "buy", "next", "save", "share", "play", "ok")
INFO_WORDS = (
    "wall", "accordance", "recently", "computer", "trying", "article", "weather",
    "notes", "summary", "history", "details", "status", "update", "message",
)
TAPPABLE_CLASSES = ("Button", "ImageButton", "CheckBox", "Switch", "ToggleButton", "ViewGroup")
PLAIN_CLASSES = ("TextView", "ImageView", "View", "LinearLayout", "CardView", "ProgressBar")

# element centers stay out of (0.45, 0.55) so the planted rule has a margin
TOP_BAND = (0.08, 0.44)
BOTTOM_BAND = (0.56, 0.92)


def wordlist() -> tuple:
    return tuple(sorted(set(ACTION_WORDS) | set(INFO_WORDS)))


def _blue(rng: RngStream) -> tuple:
    return (
        int(rng.integers(0, 35)),
        int(rng.integers(20, 110)),
        int(rng.integers(195, 256)),
    )


def _non_blue(rng: RngStream) -> tuple:
    family = int(rng.integers(0, 4))
    if family == 0:  # grey / white
        v = int(rng.integers(150, 246))
        return (v, v, v)
    if family == 1:  # red
        return (int(rng.integers(180, 245)), int(rng.integers(20, 80)), int(rng.integers(20, 80)))
    if family == 2:  # green
        return (int(rng.integers(20, 90)), int(rng.integers(150, 230)), int(rng.integers(20, 90)))
    return (int(rng.integers(210, 250)), int(rng.integers(120, 180)), int(rng.integers(10, 60)))


def _band_cells(band, n_cols: int, rows: int, screen_w: int, screen_h: int) -> list:
    lo, hi = band
    band_top = lo * screen_h
    cell_h = (hi - lo) * screen_h / rows
    cell_w = screen_w / n_cols
    cells = []
    for r in range(rows):
        for c in range(n_cols):
            cells.append((c * cell_w, band_top + r * cell_h, cell_w, cell_h))
    return cells


def _place_in_cell(cell, rng: RngStream) -> Rect:
    cx, cy, cw, ch = cell
    w = max(6, int(cw * rng.uniform(0.5, 0.88)))
    h = max(6, int(ch * rng.uniform(0.5, 0.88)))
    x = int(cx + rng.uniform(0.05, 0.95) * (cw - w))
    y = int(cy + rng.uniform(0.05, 0.95) * (ch - h))
    return Rect(x, y, w, h)


def generate_synthetic(
    seed: int,
    n_screens: int,
    elements_per_screen: int = 10,
    screen_w: int = 360,
    screen_h: int = 640,
    clickable_disagreement: float = 0.0,
    raters: int = 0,
    rater_noise=(0.0, 0.1, 0.3),
) -> Corpus:
    """Generate ``n_screens`` labeled screens; pure function of its arguments."""
    if n_screens < 1:
        raise ValueError("n_screens must be >= 1")
    root_rng = RngStream(seed)
    n_cols = 4
    rows = max(3, -(-elements_per_screen // n_cols))  # each band can hold a full screen's worth

    examples = []
    screens = {}
    ratings = []
    planted = []
    for s in range(n_screens):
        srng = root_rng.child(f"screen/{s}")
        screen_id = f"synth-{seed}-{s:04d}"
        bg = int(srng.child("bg").integers(225, 246))
        pixels = np.full((screen_h, screen_w, 3), bg, dtype=np.uint8)

        top_cells = _band_cells(TOP_BAND, n_cols, rows, screen_w, screen_h)
        bottom_cells = _band_cells(BOTTOM_BAND, n_cols, rows, screen_w, screen_h)
        cell_rng = srng.child("cells")
        top_order = [top_cells[i] for i in cell_rng.permutation(len(top_cells))]
        bottom_order = [bottom_cells[i] for i in cell_rng.permutation(len(bottom_cells))]

        children = []
        n_tappable = elements_per_screen // 2
        for k in range(elements_per_screen):
            erng = srng.child(f"element/{k}")
            tappable = k < n_tappable
            if tappable:
                is_blue, bottom = True, True
            else:
                combo = int(erng.child("combo").integers(0, 3))
                # any combination except blue-and-bottom
                is_blue, bottom = ((True, False), (False, True), (False, False))[combo]
            cell = (bottom_order if bottom else top_order).pop()
            bounds = _place_in_cell(cell, erng.child("place"))
            color = _blue(erng.child("color")) if is_blue else _non_blue(erng.child("color"))
            border = tuple(int(v * 0.65) for v in color)
            pixels[bounds.y : bounds.bottom, bounds.x : bounds.right] = border
            if bounds.w > 4 and bounds.h > 4:
                pixels[bounds.y + 2 : bounds.bottom - 2, bounds.x + 2 : bounds.right - 2] = color

            label = int(is_blue and bottom)
            wrng = erng.child("words")
            if label:
                n_words = int(wrng.integers(0, 3))
                words = [ACTION_WORDS[int(wrng.integers(0, len(ACTION_WORDS)))] for _ in range(n_words)]
            else:
                n_words = int(wrng.integers(0, 9))
                words = [INFO_WORDS[int(wrng.integers(0, len(INFO_WORDS)))] for _ in range(n_words)]
            classes = TAPPABLE_CLASSES if label else PLAIN_CLASSES
            class_name = classes[int(erng.child("class").integers(0, len(classes)))]
            clickable = label
            if clickable_disagreement > 0 and erng.child("flip").random() < clickable_disagreement:
                clickable = 1 - clickable

            element_id = f"e{k}"
            children.append(
                ViewElement(
                    id=element_id,
                    class_name=class_name,
                    bounds=bounds,
                    clickable=bool(clickable),
                    text=" ".join(words) if words else None,
                )
            )
            examples.append(
                LabeledExample(
                    screen_id=screen_id,
                    element_id=element_id,
                    human_label=label,
                    clickable=clickable,
                    worker_id="synth-w0",
                )
            )
            planted.append(
                {
                    "screen_id": screen_id,
                    "element_id": element_id,
                    "is_blue": int(is_blue),
                    "y_center": round((bounds.y + bounds.h / 2) / screen_h, 6),
                    "label": label,
                }
            )
            if raters > 0:
                noise = rater_noise[int(erng.child("ambiguity").integers(0, len(rater_noise)))]
                flips = erng.child("raters").random(raters) < noise
                votes = tuple(int(label != f) for f in flips)
                ratings.append(
                    RatingSet(
                        screen_id=screen_id,
                        element_id=element_id,
                        ratings=votes,
                        workers=tuple(f"synth-r{i}" for i in range(raters)),
                    )
                )

        root = ViewElement(
            id="root",
            class_name="FrameLayout",
            bounds=Rect(0, 0, screen_w, screen_h),
            clickable=False,
            children=children,
        )
        screens[screen_id] = ScreenRecord(
            screen_id=screen_id,
            pixels=pixels,
            root=root,
            excluded_zones=default_excluded_zones(screen_w, screen_h),
        )

    meta = {
        "generator": "planted-rule",
        "rule": RULE_TEXT,
        "seed": seed,
        "n_screens": n_screens,
        "elements_per_screen": elements_per_screen,
        "clickable_disagreement": clickable_disagreement,
        "raters": raters,
        "planted": planted,
    }
    return Corpus(examples=examples, screens=screens, ratings=ratings, meta=meta)
