"""Shared fixtures: one synthetic corpus with cached features per test session."""

import pytest

from pcq import dsp
from pcq.data import get_taxonomy, load_manifest, synth_corpus


@pytest.fixture(scope="session")
def corpus40(tmp_path_factory):
    """4-class corpus, 10 clips per class, balanced folds, features cached."""
    root = tmp_path_factory.mktemp("corpus40")
    taxonomy = get_taxonomy("iemocap4")
    manifest = synth_corpus(root, taxonomy, n_per_class=10, seed=0)
    rows = load_manifest(manifest, taxonomy)
    features = root / "features"
    dsp.batch_features(rows, features)
    return {"root": root, "manifest": manifest, "rows": rows,
            "features": features, "taxonomy": taxonomy}
