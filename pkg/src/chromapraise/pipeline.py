"""Corpus orchestration: per-painting feature extraction and CSV tables.

A painting's row combines the auction metadata with the 42 visual and
catalog predictors in the fixed documented column order, plus two extra
diagnostic columns (edge_density, harmonic) and the configuration hash.
Extraction is fail-soft: a painting whose pipeline raises is recorded in
an error sidecar with the stage that failed, and the run continues.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .complexity import ccm
from .config import PipelineConfig, config_hash
from .edges import edge_features
from .harmony import cluster_frequencies, frequency_decomposition, harmony_scores, is_harmonic
from .imaging import load_rgb, resize_max_side, rgb_to_hsv, srgb_to_lab, to_gray
from .local_features import local_features
from .mixedmodel import DesignData
from .saliency import count_interest_points
from .segmentation import merge_regions, segment_image

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

FLAG_FIELDS = (
    "oil", "ink", "gouache", "lithograph", "canvas", "paper",
    "Christies", "Sothebys", "Sign",
)
META_FIELDS = (
    "square_m", "ExhibitedNum", "ProvenanceNum", "LiteratureNum",
    "date_of_birth",
) + FLAG_FIELDS
META_CSV_COLUMNS = ("id", "author", "price") + META_FIELDS

VISUAL_COLUMNS = (
    "lines_variance",
    "X_contrst_triad", "X_classic_triad", "X_rectangle",
    "X_analog_triad", "X_quad", "X_comp",
    "ccm", "points_of_interest",
    "fls_h", "fls_s", "fls_v", "sls_h", "sls_s", "sls_v",
    "contrast_h", "contrast_s", "contrast_v",
    "area_of_fls", "area_of_sls", "number_of_segments",
    "shape_complexity_fls", "shape_complexity_sls",
    "black", "CCT",
    "blue_cluster", "green_cluster", "red_cluster", "yellow_cluster",
)
EXTRA_COLUMNS = ("edge_density", "harmonic")
FEATURE_CSV_COLUMNS = (
    ("id", "author", "normalized_price")
    + META_FIELDS
    + VISUAL_COLUMNS
    + EXTRA_COLUMNS
    + ("config_hash",)
)

# Sothebys is omitted: exactly one house flag is set per sale, so it is
# the exact complement of Christies and the design would be singular.
DEFAULT_PREDICTORS = tuple(c for c in META_FIELDS if c != "Sothebys") + VISUAL_COLUMNS


@dataclass
class PaintingMeta:
    id: str
    author: str
    price: float
    square_m: float
    ExhibitedNum: float
    ProvenanceNum: float
    LiteratureNum: float
    date_of_birth: float
    oil: int
    ink: int
    gouache: int
    lithograph: int
    canvas: int
    paper: int
    Christies: int
    Sothebys: int
    Sign: int

    def __post_init__(self):
        if not self.price > 0:
            raise ValueError(f"painting {self.id}: price must be positive")
        for name in FLAG_FIELDS:
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"painting {self.id}: {name} must be 0 or 1")
        if self.Christies + self.Sothebys != 1:
            raise ValueError(
                f"painting {self.id}: exactly one of Christies/Sothebys must be 1"
            )


@dataclass
class FeatureRow:
    id: str
    author: str
    normalized_price: float
    meta: PaintingMeta
    visual: dict[str, float]
    config_hash: str

    def as_record(self) -> dict:
        record = {
            "id": self.id,
            "author": self.author,
            "normalized_price": self.normalized_price,
        }
        for name in META_FIELDS:
            record[name] = getattr(self.meta, name)
        record.update({c: self.visual[c] for c in VISUAL_COLUMNS + EXTRA_COLUMNS})
        record["config_hash"] = self.config_hash
        return record


class ExtractionError(Exception):
    """A painting failed at a named pipeline stage."""

    def __init__(self, painting_id: str, stage: str, message: str):
        self.painting_id = painting_id
        self.stage = stage
        self.message = message
        super().__init__(f"{painting_id}: {stage}: {message}")


def extract_features(
    image_path: str | Path, meta: PaintingMeta, config: PipelineConfig | None = None
) -> FeatureRow:
    """Full feature row for one painting; raises ExtractionError on failure."""
    if config is None:
        config = PipelineConfig()
    stage = "imaging"
    try:
        img = resize_max_side(load_rgb(image_path), config.imaging.max_side)
        lab = srgb_to_lab(img)
        hsv = rgb_to_hsv(img)
        gray = to_gray(img)
        visual: dict[str, float] = {}

        stage = "complexity"
        visual["ccm"] = ccm(lab, config.complexity)

        stage = "saliency"
        visual["points_of_interest"] = count_interest_points(gray, config.saliency)

        stage = "edges"
        visual["edge_density"], visual["lines_variance"] = edge_features(
            gray, config.edges
        )

        stage = "harmony"
        hist, _ = frequency_decomposition(hsv, config.harmony)
        scores = harmony_scores(hist, config.harmony)
        visual.update(scores)
        visual["harmonic"] = int(is_harmonic(scores, config.harmony.harmonic_cutoff))
        visual.update(cluster_frequencies(hist, hsv))

        stage = "segmentation"
        seg = merge_regions(segment_image(lab, hsv, config.segmentation),
                            config.segmentation)

        stage = "local-features"
        local = local_features(seg)
        for f in fields(local):
            visual[f.name] = getattr(local, f.name)
    except ExtractionError:
        raise
    except Exception as exc:
        raise ExtractionError(meta.id, stage, str(exc)) from exc
    return FeatureRow(
        id=meta.id,
        author=meta.author,
        normalized_price=math.log(meta.price),
        meta=meta,
        visual=visual,
        config_hash=config_hash(config),
    )


def _extract_task(task) -> tuple:
    path, meta, config = task
    try:
        return ("ok", extract_features(path, meta, config))
    except ExtractionError as exc:
        return ("err", (exc.painting_id, exc.stage, exc.message))


def extract_corpus(
    tasks: list[tuple[Path, PaintingMeta]],
    config: PipelineConfig | None = None,
    jobs: int = 1,
) -> tuple[list[FeatureRow], list[tuple[str, str, str]]]:
    """Extracts every (image, meta) pair, in input order, fail-soft.

    Returns (successful rows, error triples (id, stage, message)).
    """
    if config is None:
        config = PipelineConfig()
    payload = [(path, meta, config) for path, meta in tasks]
    if jobs == 1:
        results = [_extract_task(t) for t in payload]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_task, payload))
    rows = [r for kind, r in results if kind == "ok"]
    errors = [r for kind, r in results if kind == "err"]
    return rows, errors


def find_image(images_dir: Path, painting_id: str) -> Path | None:
    """The painting's image file, matched by stem; None when absent."""
    for suffix in IMAGE_SUFFIXES:
        candidate = images_dir / f"{painting_id}{suffix}"
        if candidate.exists():
            return candidate
    return None


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_feature_table(rows: list[FeatureRow], path: str | Path) -> None:
    """Feature CSV: UTF-8, LF endings, shortest round-trip float text."""
    if not rows:
        raise ValueError("no successful rows to write")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FEATURE_CSV_COLUMNS)
        for row in rows:
            record = row.as_record()
            writer.writerow([_format_cell(record[c]) for c in FEATURE_CSV_COLUMNS])


def write_error_table(errors: list[tuple[str, str, str]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "stage", "error"])
        writer.writerows(errors)


def read_meta_csv(path: str | Path) -> list[PaintingMeta]:
    """Metadata rows; the header must carry exactly the documented columns."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in META_CSV_COLUMNS if c not in header]
        extra = [c for c in header if c not in META_CSV_COLUMNS]
        if missing or extra:
            problems = []
            if missing:
                problems.append("missing columns: " + ", ".join(missing))
            if extra:
                problems.append("unexpected columns: " + ", ".join(extra))
            raise ValueError(f"{path}: " + "; ".join(problems))
        metas = []
        for line, raw in enumerate(reader, start=2):
            try:
                metas.append(
                    PaintingMeta(
                        id=raw["id"],
                        author=raw["author"],
                        price=float(raw["price"]),
                        square_m=float(raw["square_m"]),
                        ExhibitedNum=float(raw["ExhibitedNum"]),
                        ProvenanceNum=float(raw["ProvenanceNum"]),
                        LiteratureNum=float(raw["LiteratureNum"]),
                        date_of_birth=float(raw["date_of_birth"]),
                        **{f: int(raw[f]) for f in FLAG_FIELDS},
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{line}: {exc}") from exc
    if not metas:
        raise ValueError(f"{path}: no metadata rows")
    return metas


def read_feature_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def drop_constant_columns(
    X: np.ndarray, names: list[str]
) -> tuple[np.ndarray, list[str], list[str]]:
    """Removes zero-variance predictors (unestimable alongside an intercept)."""
    keep = [i for i in range(X.shape[1]) if np.ptp(X[:, i]) > 0.0]
    dropped = [names[i] for i in range(X.shape[1]) if i not in keep]
    return X[:, keep], [names[i] for i in keep], dropped


def load_design(
    path: str | Path, predictors: list[str] | None = None
) -> tuple[DesignData, list[str]]:
    """DesignData from a feature CSV (response: normalized_price, groups:
    author, intercept prepended).  Returns (data, dropped_columns)."""
    wanted = list(predictors) if predictors is not None else list(DEFAULT_PREDICTORS)
    rows = read_feature_csv(path)
    if not rows:
        raise ValueError(f"{path}: no feature rows")
    header = rows[0].keys()
    missing = [c for c in ["normalized_price", "author"] + wanted if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns: " + ", ".join(missing))
    y = np.array([float(r["normalized_price"]) for r in rows])
    groups = np.array([r["author"] for r in rows])
    if len(np.unique(groups)) < 2:
        raise ValueError("need >= 2 groups to fit a random intercept")
    X = np.array([[float(r[c]) for c in wanted] for r in rows])
    X, kept, dropped = drop_constant_columns(X, wanted)
    X = np.column_stack([np.ones(len(rows)), X])
    names = ["Intercept"] + kept
    return DesignData(y, X, groups, names), dropped
