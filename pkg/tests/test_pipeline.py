"""Corpus extraction, CSV tables, and design-matrix assembly."""

import csv
import math

import numpy as np
import pytest
from PIL import Image

from chromapraise.pipeline import (
    DEFAULT_PREDICTORS,
    FEATURE_CSV_COLUMNS,
    META_CSV_COLUMNS,
    META_FIELDS,
    VISUAL_COLUMNS,
    ExtractionError,
    PaintingMeta,
    drop_constant_columns,
    extract_corpus,
    extract_features,
    find_image,
    load_design,
    read_feature_csv,
    read_meta_csv,
    write_error_table,
    write_feature_table,
)


def make_meta(painting_id="p1", author="a", price=2.5, **overrides):
    base = dict(
        id=painting_id, author=author, price=price,
        square_m=0.5, ExhibitedNum=1.0, ProvenanceNum=2.0, LiteratureNum=0.0,
        date_of_birth=1900.0,
        oil=1, ink=0, gouache=0, lithograph=0, canvas=1, paper=0,
        Christies=1, Sothebys=0, Sign=1,
    )
    base.update(overrides)
    return PaintingMeta(**base)


def save_png(directory, name, pixels):
    path = directory / name
    Image.fromarray(pixels.astype(np.uint8)).save(path)
    return path


def uniform_gray(value=128, size=64):
    return np.full((size, size, 3), value, dtype=np.uint8)


def two_tone(size=64):
    # bin-center hues 15 and 195 survive uint8 round-trips inside their bins
    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:, : size // 2] = (200, 91, 55)    # hue 14.9, sat 185, val 200
    img[:, size // 2:] = (55, 126, 150)    # hue 195.2, sat 162, val 150
    return img


# ---------------------------------------------------------------- schema


def test_column_schema_shapes():
    assert len(VISUAL_COLUMNS) == 29
    assert len(META_FIELDS) == 14
    assert len(DEFAULT_PREDICTORS) == 42
    assert len(FEATURE_CSV_COLUMNS) == 49
    assert FEATURE_CSV_COLUMNS[:3] == ("id", "author", "normalized_price")
    assert FEATURE_CSV_COLUMNS[-1] == "config_hash"
    assert "Sothebys" not in DEFAULT_PREDICTORS
    assert "normalized_price" not in DEFAULT_PREDICTORS


def test_meta_validation():
    with pytest.raises(ValueError, match="price must be positive"):
        make_meta(price=0.0)
    with pytest.raises(ValueError, match="oil must be 0 or 1"):
        make_meta(oil=2)
    with pytest.raises(ValueError, match="exactly one of Christies/Sothebys"):
        make_meta(Christies=1, Sothebys=1)


# ---------------------------------------------------------------- extraction


@pytest.fixture(scope="module")
def gray_row(tmp_path_factory):
    directory = tmp_path_factory.mktemp("gray")
    path = save_png(directory, "p1.png", uniform_gray())
    return extract_features(path, make_meta())


def test_uniform_image_features(gray_row):
    v = gray_row.visual
    assert v["ccm"] == 0.0
    assert v["points_of_interest"] == 0
    assert v["edge_density"] == 0.0
    assert v["lines_variance"] == 0.0
    assert v["number_of_segments"] == 1
    assert v["area_of_fls"] == 1.0
    assert v["fls_s"] == 0.0 and v["fls_v"] == 128.0
    for name in ("sls_h", "sls_s", "sls_v", "contrast_h", "contrast_s",
                 "contrast_v", "area_of_sls", "shape_complexity_sls"):
        assert v[name] == -1.0
    assert v["harmonic"] == 0
    for name in ("X_comp", "X_analog_triad", "black", "red_cluster"):
        assert v[name] == 0.0
    assert v["CCT"] > 0.0


def test_normalized_price_is_log_price(gray_row):
    assert gray_row.normalized_price == pytest.approx(math.log(2.5), abs=1e-15)


def test_record_covers_every_column(gray_row):
    record = gray_row.as_record()
    assert set(record) == set(FEATURE_CSV_COLUMNS)
    assert len(gray_row.config_hash) == 12


def test_two_tone_features(tmp_path):
    path = save_png(tmp_path, "p2.png", two_tone())
    row = extract_features(path, make_meta("p2"))
    v = row.visual
    assert v["number_of_segments"] == 2
    assert v["area_of_fls"] == pytest.approx(0.5)
    assert v["area_of_sls"] == pytest.approx(0.5)
    assert v["contrast_v"] > 0.0
    assert v["X_comp"] == pytest.approx(1.0, abs=1e-12)
    assert v["edge_density"] > 0.0


def test_corrupt_file_fails_at_imaging(tmp_path):
    path = tmp_path / "p3.png"
    path.write_bytes(b"not a png at all")
    with pytest.raises(ExtractionError) as err:
        extract_features(path, make_meta("p3"))
    assert err.value.painting_id == "p3"
    assert err.value.stage == "imaging"


def test_extract_corpus_is_fail_soft(tmp_path):
    good = save_png(tmp_path, "ok.png", two_tone())
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"junk")
    tasks = [(good, make_meta("ok")), (bad, make_meta("bad"))]
    rows, errors = extract_corpus(tasks)
    assert [r.id for r in rows] == ["ok"]
    assert [(e[0], e[1]) for e in errors] == [("bad", "imaging")]


def test_parallel_extraction_matches_serial(tmp_path):
    paths = [
        save_png(tmp_path, "s1.png", uniform_gray(90)),
        save_png(tmp_path, "s2.png", two_tone()),
        save_png(tmp_path, "s3.png", uniform_gray(200)),
    ]
    tasks = [(p, make_meta(p.stem)) for p in paths]
    serial, _ = extract_corpus(tasks, jobs=1)
    parallel, _ = extract_corpus(tasks, jobs=2)
    assert [r.id for r in parallel] == [r.id for r in serial]
    for a, b in zip(serial, parallel):
        assert a.as_record() == b.as_record()


def test_find_image(tmp_path):
    save_png(tmp_path, "p9.png", uniform_gray())
    assert find_image(tmp_path, "p9").name == "p9.png"
    assert find_image(tmp_path, "absent") is None


# ---------------------------------------------------------------- CSV tables


def test_feature_table_round_trip(tmp_path):
    path_a = save_png(tmp_path, "a.png", two_tone())
    path_b = save_png(tmp_path, "b.png", uniform_gray(70))
    rows, errors = extract_corpus([(path_a, make_meta("a", "x")),
                                   (path_b, make_meta("b", "y", price=1.25))])
    assert not errors
    out = tmp_path / "features.csv"
    write_feature_table(rows, out)

    with open(out, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
    assert tuple(header) == FEATURE_CSV_COLUMNS

    parsed = read_feature_csv(out)
    assert len(parsed) == 2
    for row, raw in zip(rows, parsed):
        record = row.as_record()
        for column in FEATURE_CSV_COLUMNS:
            value = record[column]
            if isinstance(value, str):
                assert raw[column] == value
            else:
                # repr round-trips floats exactly
                assert float(raw[column]) == float(value)


def test_feature_table_bytes_are_reproducible(tmp_path):
    path = save_png(tmp_path, "a.png", two_tone())
    out1, out2 = tmp_path / "f1.csv", tmp_path / "f2.csv"
    rows1, _ = extract_corpus([(path, make_meta("a"))])
    rows2, _ = extract_corpus([(path, make_meta("a"))])
    write_feature_table(rows1, out1)
    write_feature_table(rows2, out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_empty_feature_table_rejected(tmp_path):
    with pytest.raises(ValueError, match="no successful rows"):
        write_feature_table([], tmp_path / "never.csv")


def test_error_table(tmp_path):
    out = tmp_path / "errors.csv"
    write_error_table([("p1", "imaging", "broken")], out)
    with open(out, encoding="utf-8", newline="") as fh:
        parsed = list(csv.reader(fh))
    assert parsed == [["id", "stage", "error"], ["p1", "imaging", "broken"]]


def write_meta_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(META_CSV_COLUMNS)
        writer.writerows(rows)


def meta_row(painting_id="p1", author="a", price="2.5", **overrides):
    values = dict(
        id=painting_id, author=author, price=price,
        square_m="0.5", ExhibitedNum="1", ProvenanceNum="2", LiteratureNum="0",
        date_of_birth="1900", oil="1", ink="0", gouache="0", lithograph="0",
        canvas="1", paper="0", Christies="1", Sothebys="0", Sign="1",
    )
    values.update(overrides)
    return [values[c] for c in META_CSV_COLUMNS]


def test_read_meta_csv(tmp_path):
    path = tmp_path / "meta.csv"
    write_meta_csv(path, [meta_row("p1", "a"), meta_row("p2", "b", price="1.5")])
    metas = read_meta_csv(path)
    assert [m.id for m in metas] == ["p1", "p2"]
    assert metas[1].price == 1.5
    assert metas[0].oil == 1


def test_read_meta_csv_rejects_wrong_columns(tmp_path):
    path = tmp_path / "meta.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("id", "author", "cost"))
        writer.writerow(("p1", "a", "2.0"))
    with pytest.raises(ValueError) as err:
        read_meta_csv(path)
    assert "missing columns" in str(err.value)
    assert "price" in str(err.value)
    assert "unexpected columns: cost" in str(err.value)


def test_read_meta_csv_reports_bad_line(tmp_path):
    path = tmp_path / "meta.csv"
    write_meta_csv(path, [meta_row("p1"), meta_row("p2", price="-3.0")])
    with pytest.raises(ValueError, match=r"meta\.csv:3:"):
        read_meta_csv(path)


def test_read_meta_csv_rejects_empty(tmp_path):
    path = tmp_path / "meta.csv"
    write_meta_csv(path, [])
    with pytest.raises(ValueError, match="no metadata rows"):
        read_meta_csv(path)


# ---------------------------------------------------------------- design


def feature_csv_fixture(tmp_path, authors=("x", "x", "y", "y", "y")):
    """A small real feature CSV: alternating flat / two-tone images."""
    tasks = []
    for i, author in enumerate(authors):
        pixels = uniform_gray(60 + 30 * i) if i % 2 == 0 else two_tone()
        path = save_png(tmp_path, f"p{i}.png", pixels)
        tasks.append((path, make_meta(f"p{i}", author, price=1.0 + i)))
    rows, errors = extract_corpus(tasks)
    assert not errors
    out = tmp_path / "features.csv"
    write_feature_table(rows, out)
    return out


def test_load_design_subset(tmp_path):
    path = feature_csv_fixture(tmp_path)
    data, dropped = load_design(path, ["square_m", "ccm", "fls_v"])
    assert data.names == ["Intercept", "ccm", "fls_v"]
    assert dropped == ["square_m"]  # constant in the fixture metadata
    assert data.X.shape == (5, 3)
    assert np.all(data.X[:, 0] == 1.0)
    assert sorted(set(data.groups)) == ["x", "y"]
    assert data.y[0] == pytest.approx(math.log(1.0))


def test_load_design_needs_two_groups(tmp_path):
    path = feature_csv_fixture(tmp_path, authors=("solo",) * 5)
    with pytest.raises(ValueError, match="need >= 2 groups"):
        load_design(path, ["ccm"])


def test_load_design_names_missing_columns(tmp_path):
    path = feature_csv_fixture(tmp_path)
    with pytest.raises(ValueError, match="missing columns: not_a_feature"):
        load_design(path, ["not_a_feature"])


def test_drop_constant_columns():
    X = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 4.0], [1.0, 5.0, 5.0]])
    kept, names, dropped = drop_constant_columns(X, ["a", "b", "c"])
    assert names == ["b", "c"]
    assert dropped == ["a"]
    assert kept.shape == (3, 2)
