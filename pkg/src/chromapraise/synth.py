"""Synthetic painting corpus with a known price process.

Generates small images from five archetypes (flat field, two-tone split,
value gradient, block mosaic, harmonic three-hue stripes), draws catalog
metadata from simple distributions, extracts the real visual features
from the generated images, and then prices each painting from a known
linear combination of a few features plus an author random intercept and
Gaussian noise.  The coefficients, author effects, and noise scales are
written to a ground-truth JSON so an end-to-end fit can be checked
against what was planted.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from .config import PipelineConfig
from .imaging import HsvImage, hsv_to_rgb
from .pipeline import (
    META_CSV_COLUMNS,
    PaintingMeta,
    _format_cell,
    extract_corpus,
)

WIDTH, HEIGHT = 160, 128
AUTHORS = ("author_01", "author_02", "author_03", "author_04", "author_05")

INTERCEPT = 11.0
PLANTED_BETAS = {
    "square_m": 0.8,
    "oil": 0.5,
    "ExhibitedNum": 0.15,
    "ccm": 0.5,
    "number_of_segments": 0.03,
}
SIGMA_U = 0.3
SIGMA_E = 0.15


def _hsv_block(h: float, s: float, v: float, height: int, width: int) -> np.ndarray:
    hsv = np.empty((height, width, 3))
    hsv[..., 0], hsv[..., 1], hsv[..., 2] = h, s, v
    return hsv_to_rgb(HsvImage(hsv)).pixels


def _texture(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Additive per-pixel color noise.  The amplitude is an independent
    draw, so local color complexity varies without changing the region
    structure (the noise stays far below the segmentation contrasts)."""
    amplitude = int(rng.integers(0, 11))
    noise = rng.integers(-amplitude, amplitude + 1, size=pixels.shape)
    return np.clip(pixels.astype(np.int16) + noise, 0, 255).astype(np.uint8)


def _flat(rng: np.random.Generator) -> np.ndarray:
    color = rng.integers(40, 216, size=3)
    return np.broadcast_to(color, (HEIGHT, WIDTH, 3)).astype(np.uint8)


def _two_tone(rng: np.random.Generator) -> np.ndarray:
    h1 = float(rng.uniform(0, 360))
    h2 = (h1 + 180.0) % 360.0
    split = int(rng.integers(WIDTH // 3, 2 * WIDTH // 3))
    img = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    img[:, :split] = _hsv_block(h1, 200.0, 220.0, HEIGHT, split)
    img[:, split:] = _hsv_block(h2, 200.0, 120.0, HEIGHT, WIDTH - split)
    return img


def _gradient(rng: np.random.Generator) -> np.ndarray:
    hue = float(rng.uniform(0, 360))
    values = np.linspace(60.0, 250.0, WIDTH)
    hsv = np.empty((HEIGHT, WIDTH, 3))
    hsv[..., 0] = hue
    hsv[..., 1] = 180.0
    hsv[..., 2] = values[None, :]
    return hsv_to_rgb(HsvImage(hsv)).pixels


def _blocks(rng: np.random.Generator) -> np.ndarray:
    rows, cols = int(rng.integers(2, 7)), int(rng.integers(3, 8))
    img = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    edges_r = np.linspace(0, HEIGHT, rows + 1).astype(int)
    edges_c = np.linspace(0, WIDTH, cols + 1).astype(int)
    for i in range(rows):
        for j in range(cols):
            color = rng.integers(20, 236, size=3)
            img[edges_r[i]:edges_r[i + 1], edges_c[j]:edges_c[j + 1]] = color
    return img


def _harmonic_stripes(rng: np.random.Generator) -> np.ndarray:
    """Three adjacent wheel bins, hit exactly at their centers, so the
    analogue-triad score is 1."""
    k0 = int(rng.integers(0, 12))
    img = np.empty((HEIGHT, WIDTH, 3), dtype=np.uint8)
    thirds = np.linspace(0, WIDTH, 4).astype(int)
    for i in range(3):
        hue = (30.0 * ((k0 + i) % 12) + 15.0)
        img[:, thirds[i]:thirds[i + 1]] = _hsv_block(
            hue, 255.0, 255.0, HEIGHT, thirds[i + 1] - thirds[i]
        )
    return img


_ARCHETYPES = (_flat, _two_tone, _gradient, _blocks, _harmonic_stripes)


def _draw_meta(rng: np.random.Generator, painting_id: str, author: str) -> PaintingMeta:
    christies = int(rng.uniform() < 0.5)
    return PaintingMeta(
        id=painting_id,
        author=author,
        price=1.0,  # placeholder until features are extracted
        square_m=float(np.round(rng.lognormal(-1.0, 0.7), 3)),
        ExhibitedNum=float(rng.poisson(1.2)),
        ProvenanceNum=float(rng.poisson(2.8)),
        LiteratureNum=float(rng.poisson(0.9)),
        date_of_birth=float(rng.integers(1866, 1929)),
        oil=int(rng.uniform() < 0.4),
        ink=int(rng.uniform() < 0.2),
        gouache=int(rng.uniform() < 0.2),
        lithograph=int(rng.uniform() < 0.1),
        canvas=int(rng.uniform() < 0.2),
        paper=int(rng.uniform() < 0.7),
        Christies=christies,
        Sothebys=1 - christies,
        Sign=int(rng.uniform() < 0.9),
    )


def generate_corpus(
    out_dir: str | Path,
    n: int = 40,
    seed: int = 42,
    config: PipelineConfig | None = None,
    jobs: int = 1,
) -> dict:
    """Writes images/, meta.csv and truth.json under out_dir; returns the
    ground truth dictionary."""
    if n < 10:
        raise ValueError("need at least 10 paintings")
    if config is None:
        config = PipelineConfig()
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    metas = []
    tasks = []
    for i in range(n):
        painting_id = f"p{i:04d}"
        author = AUTHORS[i % len(AUTHORS)]
        archetype = i % len(_ARCHETYPES)
        pixels = _ARCHETYPES[archetype](rng)
        if _ARCHETYPES[archetype] is not _harmonic_stripes:
            pixels = _texture(pixels, rng)  # stripes stay exactly in-bin
        path = images_dir / f"{painting_id}.png"
        Image.fromarray(pixels).save(path)
        meta = _draw_meta(rng, painting_id, author)
        metas.append(meta)
        tasks.append((path, meta))

    rows, errors = extract_corpus(tasks, config, jobs=jobs)
    if errors:
        failed = ", ".join(e[0] for e in errors)
        raise RuntimeError(f"extraction failed for generated images: {failed}")

    effects = rng.normal(0.0, SIGMA_U, len(AUTHORS))
    author_effect = dict(zip(AUTHORS, effects.tolist()))
    noise = rng.normal(0.0, SIGMA_E, n)
    for i, (meta, row) in enumerate(zip(metas, rows)):
        predictors = {**row.visual, **{k: getattr(meta, k) for k in
                                       ("square_m", "oil", "ExhibitedNum")}}
        y = INTERCEPT + author_effect[meta.author] + float(noise[i])
        y += sum(beta * float(predictors[name]) for name, beta in PLANTED_BETAS.items())
        meta.price = math.exp(y)

    with open(out_dir / "meta.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(META_CSV_COLUMNS)
        for meta in metas:
            writer.writerow([_format_cell(getattr(meta, c)) for c in META_CSV_COLUMNS])

    truth = {
        "n": n,
        "seed": seed,
        "intercept": INTERCEPT,
        "betas": PLANTED_BETAS,
        "features": sorted(PLANTED_BETAS),
        "sigma_u": SIGMA_U,
        "sigma_e": SIGMA_E,
        "author_effects": author_effect,
    }
    with open(out_dir / "truth.json", "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return truth
