"""Synthetic corpus generator: determinism and planted structure."""

import json
import math

import pytest

from chromapraise.pipeline import extract_corpus, find_image, read_meta_csv
from chromapraise.synth import (
    AUTHORS,
    INTERCEPT,
    PLANTED_BETAS,
    SIGMA_E,
    generate_corpus,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    truth = generate_corpus(out, n=10, seed=3)
    return out, truth


def test_layout(corpus):
    out, truth = corpus
    images = sorted((out / "images").glob("*.png"))
    assert len(images) == 10
    metas = read_meta_csv(out / "meta.csv")
    assert [m.id for m in metas] == [f"p{i:04d}" for i in range(10)]
    assert set(m.author for m in metas) == set(AUTHORS)
    with open(out / "truth.json", encoding="utf-8") as fh:
        saved = json.load(fh)
    assert saved["betas"] == PLANTED_BETAS
    assert set(saved["author_effects"]) == set(AUTHORS)
    assert saved == {**truth, "betas": dict(truth["betas"])}


def test_minimum_size_enforced(tmp_path):
    with pytest.raises(ValueError, match="at least 10"):
        generate_corpus(tmp_path, n=9, seed=0)


def test_same_seed_reproduces_bytes(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_corpus(a, n=10, seed=11)
    generate_corpus(b, n=10, seed=11)
    assert (a / "meta.csv").read_bytes() == (b / "meta.csv").read_bytes()
    assert (a / "truth.json").read_bytes() == (b / "truth.json").read_bytes()
    for img in sorted((a / "images").glob("*.png")):
        assert img.read_bytes() == (b / "images" / img.name).read_bytes()


def test_different_seed_differs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    generate_corpus(a, n=10, seed=1)
    generate_corpus(b, n=10, seed=2)
    assert (a / "meta.csv").read_bytes() != (b / "meta.csv").read_bytes()


def test_prices_follow_planted_process(corpus):
    """Re-extracting features and removing every planted term must leave
    residuals on the noise scale."""
    out, truth = corpus
    metas = read_meta_csv(out / "meta.csv")
    tasks = [(find_image(out / "images", m.id), m) for m in metas]
    rows, errors = extract_corpus(tasks)
    assert not errors
    residuals = []
    for meta, row in zip(metas, rows):
        y = math.log(meta.price)
        y -= INTERCEPT + truth["author_effects"][meta.author]
        for name, beta in PLANTED_BETAS.items():
            value = row.visual.get(name)
            if value is None:
                value = getattr(meta, name)
            y -= beta * float(value)
        residuals.append(y)
    assert all(abs(r) < 5.0 * SIGMA_E for r in residuals)
    assert max(abs(r) for r in residuals) > 0.0  # noise actually present


def test_harmonic_archetype_scores_one(corpus):
    out, _ = corpus
    metas = read_meta_csv(out / "meta.csv")
    stripes = metas[4]  # archetypes cycle with period 5; index 4 is stripes
    rows, errors = extract_corpus([(find_image(out / "images", stripes.id), stripes)])
    assert not errors
    assert rows[0].visual["X_analog_triad"] == pytest.approx(1.0, abs=1e-12)
    assert rows[0].visual["harmonic"] == 1
