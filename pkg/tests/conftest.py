import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tapkit import features, synthetic
from tapkit.rng import RngStream


@pytest.fixture(scope="session")
def demo_table(tmp_path_factory):
    path = tmp_path_factory.mktemp("emb") / "embeddings.txt"
    features.write_embedding_table(path, synthetic.wordlist(), RngStream(77))
    return features.load_embedding_table(path)


@pytest.fixture(scope="session")
def small_corpus():
    """32 examples across 4 screens with 20% clickable/label disagreement."""
    return synthetic.generate_synthetic(
        seed=101, n_screens=4, elements_per_screen=8, clickable_disagreement=0.2, raters=5
    )
