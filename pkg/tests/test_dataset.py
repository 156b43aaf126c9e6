"""Hierarchy parsing, element selection, corpus persistence, and the planted
synthetic generator."""

import json

import numpy as np
import pytest

from tapkit import synthetic
from tapkit.corpus import Corpus, CorpusError, load_corpus, save_corpus
from tapkit.hierarchy import (
    HierarchyParseError,
    Rect,
    parse_hierarchy,
    select_elements,
)
from tapkit.rng import RngStream

from oracles import fit_logistic


def node(nid, cls, bounds, clickable=False, text=None, children=None):
    obj = {"id": nid, "class": cls, "bounds": bounds, "clickable": clickable}
    if text is not None:
        obj["text"] = text
    if children:
        obj["children"] = children
    return obj


def blank_pixels(w=100, h=200):
    return np.zeros((h, w, 3), dtype=np.uint8)


class TestParseHierarchy:
    def test_single_node(self):
        screen = parse_hierarchy(node("r", "android.widget.FrameLayout", [0, 0, 100, 200]), blank_pixels())
        assert len(screen.elements()) == 1
        assert screen.root.class_name == "FrameLayout"
        assert screen.root.bounds == Rect(0, 0, 100, 200)

    def test_three_level_nesting_and_containment(self):
        doc = node(
            "r", "FrameLayout", [0, 0, 100, 200],
            children=[
                node("a", "LinearLayout", [10, 20, 90, 180], children=[
                    node("a1", "TextView", [12, 25, 60, 40], text="hello"),
                    node("a2", "Button", [12, 50, 60, 70], clickable=True),
                ]),
            ],
        )
        screen = parse_hierarchy(doc, blank_pixels())
        els = screen.elements()
        assert [e.id for e in els] == ["r", "a", "a1", "a2"]
        for parent in els:
            for child in parent.children:
                assert child.bounds.intersects(parent.bounds)
        assert screen.find("a1").text == "hello"

    def test_missing_clickable_defaults_false(self, caplog):
        doc = {"id": "r", "class": "View", "bounds": [0, 0, 100, 200]}
        with caplog.at_level("WARNING", logger="tapkit.hierarchy"):
            screen = parse_hierarchy(doc, blank_pixels())
        assert screen.root.clickable is False
        assert any("clickable" in rec.message for rec in caplog.records)

    def test_empty_bounds_dropped_with_warning(self, caplog):
        doc = node("r", "FrameLayout", [0, 0, 100, 200], children=[
            node("bad", "View", [10, 10, 10, 50]),
            node("ok", "View", [10, 10, 50, 50]),
        ])
        with caplog.at_level("WARNING", logger="tapkit.hierarchy"):
            screen = parse_hierarchy(doc, blank_pixels())
        assert [e.id for e in screen.elements()] == ["r", "ok"]

    def test_malformed_node_names_path(self):
        doc = node("r", "FrameLayout", [0, 0, 100, 200], children=[
            node("a", "View", [0, 0, 50, 50], children=[{"bounds": [0, 0, 5, 5]}]),
        ])
        with pytest.raises(HierarchyParseError, match=r"0\.0\.0"):
            parse_hierarchy(doc, blank_pixels())

    def test_activity_wrapper_unwrapped(self):
        doc = {"activity": {"root": node("r", "FrameLayout", [0, 0, 100, 200])}}
        assert parse_hierarchy(doc, blank_pixels()).root.id == "r"

    def test_screenshot_dims_must_match_root(self):
        with pytest.raises(HierarchyParseError, match="do not match"):
            parse_hierarchy(node("r", "View", [0, 0, 50, 50]), blank_pixels())

    def test_path_ids_when_absent(self):
        doc = {"class": "FrameLayout", "bounds": [0, 0, 100, 200],
               "children": [{"class": "View", "bounds": [0, 20, 50, 50], "clickable": False}]}
        screen = parse_hierarchy(doc, blank_pixels())
        assert [e.id for e in screen.elements()] == ["0", "0.0"]


def selection_fixture():
    """Root with a clickable container (3 leaf children), scattered clickable
    leaves, and plain elements; everything outside the excluded bands."""
    children = [
        node("menu", "ViewGroup", [10, 30, 90, 60], clickable=True, children=[
            node("m1", "TextView", [12, 32, 40, 58]),
            node("m2", "ImageView", [42, 32, 60, 58]),
            node("m3", "TextView", [62, 32, 88, 58]),
        ]),
        node("b1", "Button", [10, 70, 50, 90], clickable=True),
        node("b2", "Button", [52, 70, 90, 90], clickable=True),
        node("t1", "TextView", [10, 100, 90, 120]),
        node("t2", "TextView", [10, 130, 90, 150]),
    ]
    return node("root", "FrameLayout", [0, 0, 100, 200], children=children)


class TestSelectElements:
    def test_container_selected_children_never(self):
        screen = parse_hierarchy(selection_fixture(), blank_pixels())
        chosen = select_elements(screen, RngStream(0))
        ids = [e.id for e in chosen]
        assert ids.count("menu") == 1
        assert not {"m1", "m2", "m3"} & set(ids)

    def test_no_selected_descendant_of_selected(self):
        screen = parse_hierarchy(selection_fixture(), blank_pixels())
        chosen = select_elements(screen, RngStream(3))
        by_id = {e.id: e for e in chosen}
        for el in chosen:
            if el.clickable:
                for desc in el.walk():
                    assert desc.id == el.id or desc.id not in by_id

    def test_cap_of_five_reproducible(self):
        children = [
            node(f"c{i}", "Button", [10 + i, 30, 30 + i, 50], clickable=True) for i in range(7)
        ]
        doc = node("root", "FrameLayout", [0, 0, 100, 200], children=children)
        screen = parse_hierarchy(doc, blank_pixels())
        first = [e.id for e in select_elements(screen, RngStream(42)) if e.clickable]
        assert len(first) == 5
        again = [e.id for e in select_elements(screen, RngStream(42)) if e.clickable]
        assert first == again

    def test_status_bar_zone_excluded(self):
        doc = node("root", "FrameLayout", [0, 0, 100, 200], children=[
            node("top", "Button", [10, 0, 50, 12], clickable=True),   # inside top 5%
            node("ok", "Button", [10, 50, 50, 70], clickable=True),
        ])
        screen = parse_hierarchy(doc, blank_pixels())
        ids = [e.id for e in select_elements(screen, RngStream(0))]
        assert "top" not in ids
        assert "ok" in ids

    def test_invariant_under_child_permutation(self):
        base = selection_fixture()
        permuted = json.loads(json.dumps(base))
        permuted["children"] = list(reversed(permuted["children"]))
        s1 = parse_hierarchy(base, blank_pixels())
        s2 = parse_hierarchy(permuted, blank_pixels())
        ids1 = sorted(e.id for e in select_elements(s1, RngStream(7)))
        ids2 = sorted(e.id for e in select_elements(s2, RngStream(7)))
        assert ids1 == ids2

    def test_document_order_output(self):
        screen = parse_hierarchy(selection_fixture(), blank_pixels())
        chosen = select_elements(screen, RngStream(1))
        doc_order = [e.id for e in screen.root.walk()]
        positions = [doc_order.index(e.id) for e in chosen]
        assert positions == sorted(positions)


class TestCorpusRoundTrip:
    def test_empty_corpus(self, tmp_path):
        save_corpus(Corpus(examples=[], screens={}), tmp_path / "c")
        loaded = load_corpus(tmp_path / "c")
        assert loaded.examples == []
        assert loaded.screens == {}

    def test_hundred_example_round_trip_bytes(self, tmp_path):
        corpus = synthetic.generate_synthetic(seed=5, n_screens=10, raters=5)
        assert len(corpus) == 100
        d1, d2 = tmp_path / "one", tmp_path / "two"
        save_corpus(corpus, d1)
        save_corpus(load_corpus(d1), d2)
        files1 = sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(d2) for p in d2.rglob("*") if p.is_file())
        assert files1 == files2
        for rel in files1:
            assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes(), rel

    def test_equality_after_reload(self, tmp_path):
        corpus = synthetic.generate_synthetic(seed=6, n_screens=3, raters=5)
        save_corpus(corpus, tmp_path / "c")
        loaded = load_corpus(tmp_path / "c")
        assert loaded.examples == corpus.examples
        key = lambda rs: (rs.screen_id, rs.element_id)
        assert sorted(loaded.ratings, key=key) == sorted(corpus.ratings, key=key)
        for sid, screen in corpus.screens.items():
            assert np.array_equal(loaded.screens[sid].pixels, screen.pixels)

    def test_corrupted_line_names_line_number(self, tmp_path):
        save_corpus(synthetic.generate_synthetic(seed=1, n_screens=1), tmp_path / "c")
        index = tmp_path / "c" / "corpus.jsonl"
        lines = index.read_text().splitlines()
        lines[2] = '{"broken":'
        index.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusError, match="line 3"):
            load_corpus(tmp_path / "c")

    def test_version_mismatch_rejected(self, tmp_path):
        save_corpus(synthetic.generate_synthetic(seed=1, n_screens=1), tmp_path / "c")
        meta = tmp_path / "c" / "meta.json"
        obj = json.loads(meta.read_text())
        obj["format_version"] = 99
        meta.write_text(json.dumps(obj))
        with pytest.raises(CorpusError, match="version"):
            load_corpus(tmp_path / "c")

    def test_missing_screen_asset_rejected(self, tmp_path):
        save_corpus(synthetic.generate_synthetic(seed=1, n_screens=2), tmp_path / "c")
        victim = next((tmp_path / "c" / "screens").glob("*.png"))
        victim.unlink()
        with pytest.raises(CorpusError, match="missing screen assets"):
            load_corpus(tmp_path / "c")


class TestSyntheticGenerator:
    def test_identical_bytes_on_rerun(self, tmp_path):
        a = synthetic.generate_synthetic(seed=7, n_screens=10)
        b = synthetic.generate_synthetic(seed=7, n_screens=10)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        save_corpus(a, d1)
        save_corpus(b, d2)
        for rel in sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file()):
            assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes(), rel

    def test_planted_rule_recoverable_by_logistic_fit(self):
        corpus = synthetic.generate_synthetic(seed=7, n_screens=10)
        planted = corpus.meta["planted"]
        x = np.array([[p["is_blue"], p["y_center"]] for p in planted], dtype=float)
        y = np.array([p["label"] for p in planted])
        predicted = fit_logistic(x, y)
        assert (predicted == y).mean() == 1.0

    def test_label_balance(self):
        corpus = synthetic.generate_synthetic(seed=7, n_screens=10)
        rate = np.mean([ex.human_label for ex in corpus.examples])
        assert 0.4 <= rate <= 0.6

    def test_labels_follow_rule(self):
        corpus = synthetic.generate_synthetic(seed=3, n_screens=5)
        for p in corpus.meta["planted"]:
            assert p["label"] == int(p["is_blue"] and p["y_center"] > 0.5)

    def test_clickable_disagreement_rate(self):
        corpus = synthetic.generate_synthetic(seed=11, n_screens=30, clickable_disagreement=0.2)
        flips = np.mean([ex.clickable != ex.human_label for ex in corpus.examples])
        assert 0.12 <= flips <= 0.28

    def test_ratings_five_distinct_workers(self):
        corpus = synthetic.generate_synthetic(seed=2, n_screens=2, raters=5)
        assert len(corpus.ratings) == len(corpus.examples)
        for rs in corpus.ratings:
            assert len(rs.ratings) == 5
            assert len(set(rs.workers)) == 5

    def test_elements_clear_of_excluded_zones(self):
        corpus = synthetic.generate_synthetic(seed=4, n_screens=2)
        for screen in corpus.screens.values():
            for el in screen.elements():
                if el.id == "root":
                    continue
                for zone in screen.excluded_zones:
                    assert not el.bounds.intersects(zone)
