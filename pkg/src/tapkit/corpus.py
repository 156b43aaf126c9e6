"""Labeled-corpus records and on-disk persistence.

A corpus directory holds a line-delimited index (one labeled element per
line), one PNG screenshot and one JSON hierarchy per screen, an optional
line-delimited multi-rater file, and a metadata header. Round trips are
lossless: saving a loaded corpus reproduces the same bytes.

Layout::

    <dir>/meta.json          format version + free-form metadata
    <dir>/corpus.jsonl       {"screen_id", "element_id", "human_label",
                              "clickable", "worker_id"} per line
    <dir>/ratings.jsonl      {"screen_id", "element_id", "worker_id",
                              "label"} per line (optional)
    <dir>/screens/<id>.png   screenshot
    <dir>/screens/<id>.json  hierarchy tree
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .hierarchy import ScreenRecord, ViewElement, parse_hierarchy

CORPUS_FORMAT_VERSION = 1


class CorpusError(ValueError):
    """Corpus files are missing, corrupted, or from an unknown version."""


@dataclass(frozen=True)
class LabeledExample:
    """One element with one human tappability judgment.

    ``human_label`` is 1 for perceived tappable, 0 for not; ``clickable`` is
    the developer-declared attribute copied from the hierarchy.
    """

    screen_id: str
    element_id: str
    human_label: int
    clickable: int
    worker_id: str


@dataclass(frozen=True)
class RatingSet:
    """All ratings one element received, one per distinct worker."""

    screen_id: str
    element_id: str
    ratings: tuple
    workers: tuple

    def __post_init__(self):
        if len(self.ratings) < 1:
            raise CorpusError(f"{self.screen_id}/{self.element_id}: rating set is empty")
        if len(set(self.workers)) != len(self.workers):
            raise CorpusError(f"{self.screen_id}/{self.element_id}: duplicate workers in rating set")
        if len(self.workers) != len(self.ratings):
            raise CorpusError(f"{self.screen_id}/{self.element_id}: workers/ratings length mismatch")


@dataclass
class Corpus:
    examples: list
    screens: dict
    ratings: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.examples)

    def element(self, screen_id: str, element_id: str) -> ViewElement:
        return self.screens[screen_id].find(element_id)

    def validate(self) -> None:
        for ex in self.examples:
            if ex.screen_id not in self.screens:
                raise CorpusError(f"example references unknown screen {ex.screen_id!r}")
            self.element(ex.screen_id, ex.element_id)

    def subset(self, indices) -> "Corpus":
        """A view over a subset of examples; screens and ratings are shared."""
        picked = [self.examples[i] for i in indices]
        return Corpus(examples=picked, screens=self.screens, ratings=self.ratings, meta=self.meta)


# ---------------------------------------------------------------------------
# hierarchy <-> json
# ---------------------------------------------------------------------------


def _node_to_json(el: ViewElement) -> dict:
    obj = {
        "id": el.id,
        "class": el.class_name,
        "bounds": [el.bounds.x, el.bounds.y, el.bounds.right, el.bounds.bottom],
        "clickable": el.clickable,
    }
    if el.text is not None:
        obj["text"] = el.text
    if el.children:
        obj["children"] = [_node_to_json(c) for c in el.children]
    return obj


def screen_to_json(screen: ScreenRecord) -> dict:
    return {"root": _node_to_json(screen.root)}


# ---------------------------------------------------------------------------
# save / load
# ---------------------------------------------------------------------------


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_corpus(corpus: Corpus, path) -> None:
    root = Path(path)
    (root / "screens").mkdir(parents=True, exist_ok=True)
    meta = {"format_version": CORPUS_FORMAT_VERSION, **corpus.meta}
    (root / "meta.json").write_text(_dump_json(meta) + "\n", "utf-8")
    with open(root / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for ex in corpus.examples:
            fh.write(
                _dump_json(
                    {
                        "screen_id": ex.screen_id,
                        "element_id": ex.element_id,
                        "human_label": ex.human_label,
                        "clickable": ex.clickable,
                        "worker_id": ex.worker_id,
                    }
                )
                + "\n"
            )
    if corpus.ratings:
        with open(root / "ratings.jsonl", "w", encoding="utf-8") as fh:
            for rs in corpus.ratings:
                for worker, label in zip(rs.workers, rs.ratings):
                    fh.write(
                        _dump_json(
                            {
                                "screen_id": rs.screen_id,
                                "element_id": rs.element_id,
                                "worker_id": worker,
                                "label": label,
                            }
                        )
                        + "\n"
                    )
    for screen_id in sorted(corpus.screens):
        screen = corpus.screens[screen_id]
        Image.fromarray(screen.pixels).save(root / "screens" / f"{screen_id}.png")
        (root / "screens" / f"{screen_id}.json").write_text(
            _dump_json(screen_to_json(screen)) + "\n", "utf-8"
        )


def _read_jsonl(path: Path, required_fields: tuple) -> list:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path.name} line {lineno}: not valid JSON ({exc.msg})") from exc
            missing = [f for f in required_fields if f not in obj]
            if missing:
                raise CorpusError(f"{path.name} line {lineno}: missing fields {missing}")
            records.append(obj)
    return records


def load_corpus(path) -> Corpus:
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise CorpusError(f"{root}: no meta.json, not a corpus directory")
    meta = json.loads(meta_path.read_text("utf-8"))
    version = meta.pop("format_version", None)
    if version != CORPUS_FORMAT_VERSION:
        raise CorpusError(f"unsupported corpus format version {version!r}")

    rows = _read_jsonl(
        root / "corpus.jsonl",
        ("screen_id", "element_id", "human_label", "clickable", "worker_id"),
    )
    examples = [
        LabeledExample(
            screen_id=r["screen_id"],
            element_id=r["element_id"],
            human_label=int(r["human_label"]),
            clickable=int(r["clickable"]),
            worker_id=r["worker_id"],
        )
        for r in rows
    ]

    screens: dict[str, ScreenRecord] = {}
    needed = sorted({ex.screen_id for ex in examples})
    ratings_path = root / "ratings.jsonl"
    rating_rows = (
        _read_jsonl(ratings_path, ("screen_id", "element_id", "worker_id", "label"))
        if ratings_path.exists()
        else []
    )
    needed = sorted(set(needed) | {r["screen_id"] for r in rating_rows})
    for screen_id in needed:
        png = root / "screens" / f"{screen_id}.png"
        doc = root / "screens" / f"{screen_id}.json"
        if not png.exists() or not doc.exists():
            raise CorpusError(f"missing screen assets for {screen_id!r}")
        pixels = np.asarray(Image.open(png).convert("RGB"))
        screens[screen_id] = parse_hierarchy(
            json.loads(doc.read_text("utf-8")), pixels, screen_id=screen_id
        )

    grouped: dict[tuple, list] = {}
    for r in rating_rows:
        grouped.setdefault((r["screen_id"], r["element_id"]), []).append(r)
    ratings = [
        RatingSet(
            screen_id=sid,
            element_id=eid,
            ratings=tuple(int(r["label"]) for r in rows_),
            workers=tuple(r["worker_id"] for r in rows_),
        )
        for (sid, eid), rows_ in grouped.items()
    ]

    corpus = Corpus(examples=examples, screens=screens, ratings=ratings, meta=meta)
    corpus.validate()
    return corpus
