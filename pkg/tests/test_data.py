import os

import numpy as np
import pytest
from PIL import Image

from sigverify import data as D
from sigverify.errors import DataError, ShapeError
from sigverify.tensor import Rng, Tensor


# ---------------------------------------------------------------------------
# Image loading


def test_load_pure_white_png(tmp_path):
    path = tmp_path / "white.png"
    Image.fromarray(np.full((5, 7), 255, np.uint8)).save(path)
    px = D.load_image(path)
    assert px.shape == (1, 5, 7)
    assert np.array_equal(px.data, np.ones((1, 5, 7), np.float32))


def test_load_pure_black_pgm(tmp_path):
    path = tmp_path / "black.pgm"
    D.write_pgm(np.zeros((4, 6)), path)
    px = D.load_image(path)
    assert np.array_equal(px.data, np.zeros((1, 4, 6), np.float32))


def test_rgb_luminance_red_pixel(tmp_path):
    path = tmp_path / "red.png"
    arr = np.zeros((2, 2, 3), np.uint8)
    arr[..., 0] = 255
    Image.fromarray(arr, "RGB").save(path)
    px = D.load_image(path)
    assert abs(px.data[0, 0, 0] - 0.299) <= 1.0 / 255


def test_load_missing_file_is_io_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        D.load_image(tmp_path / "nope.png")


def test_load_garbage_is_data_error(tmp_path):
    path = tmp_path / "junk.png"
    path.write_bytes(b"this is not an image at all")
    with pytest.raises(DataError, match="format"):
        D.load_image(path)


def test_pgm_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (9, 13)).astype(np.float64) / 255.0
    path = tmp_path / "rt.pgm"
    D.write_pgm(img, path)
    back = D.load_image(path)
    assert np.abs(back.data[0] - img).max() < 1e-7


# ---------------------------------------------------------------------------
# Resize


def test_resize_identity_is_passthrough():
    t = Tensor(np.random.default_rng(1).uniform(0, 1, (1, 270, 360)).astype(np.float32))
    assert D.resize(t, 270, 360) is t


def test_resize_preserves_constant_images():
    t = Tensor(np.full((1, 11, 17), 0.7, np.float32))
    out = D.resize(t, 270, 360)
    assert out.shape == (1, 270, 360)
    assert np.array_equal(out.data, np.full((1, 270, 360), 0.7, np.float32))


def test_resize_checkerboard_matches_hand_bilinear():
    cb = (np.indices((4, 4)).sum(axis=0) % 2).astype(np.float32)[None]
    # corner-aligned 2x2: sample points are the four input corners
    out = D.resize(Tensor(cb), 2, 2)
    assert out.data[0].tolist() == [[cb[0, 0, 0], cb[0, 0, 3]], [cb[0, 3, 0], cb[0, 3, 3]]]
    # corner-aligned 3x3: middle sample sits at (1.5, 1.5), the mean of 4 pixels
    out3 = D.resize(Tensor(cb), 3, 3)
    expect_mid = (cb[0, 1, 1] + cb[0, 1, 2] + cb[0, 2, 1] + cb[0, 2, 2]) / 4
    assert abs(out3.data[0, 1, 1] - expect_mid) < 1e-7


def test_resize_hand_formula_on_general_case():
    rng = np.random.default_rng(5)
    src = rng.uniform(0, 1, (1, 5, 6)).astype(np.float32)
    out = D.resize(Tensor(src), 3, 4)
    for i in range(3):
        for j in range(4):
            sy = i * 4 / 2      # (in_h-1)/(out_h-1) = 4/2
            sx = j * 5 / 3
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, 4), min(x0 + 1, 5)
            wy, wx = sy - y0, sx - x0
            expect = ((1 - wy) * (1 - wx) * src[0, y0, x0] + (1 - wy) * wx * src[0, y0, x1]
                      + wy * (1 - wx) * src[0, y1, x0] + wy * wx * src[0, y1, x1])
            assert abs(out.data[0, i, j] - expect) < 1e-6


def test_resize_output_stays_in_input_range():
    rng = np.random.default_rng(9)
    src = Tensor(rng.uniform(0.2, 0.8, (1, 7, 9)).astype(np.float32))
    out = D.resize(src, 50, 60)
    assert out.data.min() >= src.data.min()
    assert out.data.max() <= src.data.max()


def test_resize_rejects_zero_target():
    with pytest.raises(ShapeError):
        D.resize(Tensor(np.ones((1, 4, 4), np.float32)), 0, 10)


# ---------------------------------------------------------------------------
# Catalog and manifest


def entry(path, person, kind):
    return D.CatalogEntry(path=path, person=person, kind=kind)


def synthetic_catalog(genuine=27, simple=36, skilled=6, opposite=3, persons=("a", "b")):
    entries = []
    for person in persons:
        for kind, count in (("genuine", genuine), ("simple", simple),
                            ("skilled", skilled), ("opposite", opposite)):
            entries += [entry(f"{person}/{kind}_{i}.pgm", person, kind) for i in range(count)]
    return D.DatasetCatalog(entries)


def test_catalog_rejects_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        D.DatasetCatalog([entry("x.pgm", "a", "genuine"), entry("x.pgm", "a", "simple")])


def test_catalog_rejects_unknown_kind():
    with pytest.raises(DataError, match="kind"):
        D.DatasetCatalog([entry("x.pgm", "a", "fake")])


def test_manifest_round_trip(tmp_path):
    cat = synthetic_catalog(genuine=2, simple=1, skilled=1, opposite=0, persons=("p1",))
    path = tmp_path / "m.csv"
    D.write_manifest(cat.entries, path, header_comments=["seed=1"])
    back = D.read_manifest(path)
    assert [(e.path, e.person, e.kind) for e in back.entries] == \
           [(e.path, e.person, e.kind) for e in cat.entries]
    assert path.read_text().startswith("# seed=1\npath,person,kind\n")


def test_manifest_bad_header(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("file,who,what\nx.pgm,a,genuine\n")
    with pytest.raises(DataError, match="header"):
        D.read_manifest(path)


# ---------------------------------------------------------------------------
# Split protocol


def test_split_counts_match_protocol():
    cat = synthetic_catalog(genuine=27, simple=36, skilled=6, opposite=3)
    split = D.split_dataset(cat, Rng(3))
    for person in ("a", "b"):
        train_kinds = [e.kind for e in split.train if e.person == person]
        test_kinds = [e.kind for e in split.test if e.person == person]
        assert train_kinds.count("genuine") == 25
        assert train_kinds.count("simple") == 25
        assert len(train_kinds) == 50
        assert test_kinds.count("genuine") == 2
        assert test_kinds.count("simple") == 11
        assert test_kinds.count("skilled") == 6
        assert test_kinds.count("opposite") == 3
        assert len(test_kinds) == 22


def test_split_train_test_disjoint():
    cat = synthetic_catalog()
    split = D.split_dataset(cat, Rng(3))
    assert not ({e.path for e in split.train} & {e.path for e in split.test})
    assert len(split.train) + len(split.test) == len(cat)


def test_split_deterministic_for_seed():
    cat = synthetic_catalog()
    a = D.split_dataset(cat, Rng(3))
    b = D.split_dataset(cat, Rng(3))
    assert [e.path for e in a.train] == [e.path for e in b.train]
    assert [e.path for e in a.test] == [e.path for e in b.test]
    c = D.split_dataset(cat, Rng(4))
    assert [e.path for e in c.train] != [e.path for e in a.train]


def test_split_independent_of_catalog_order():
    cat = synthetic_catalog()
    shuffled = D.DatasetCatalog(list(reversed(cat.entries)))
    a = D.split_dataset(cat, Rng(3))
    b = D.split_dataset(shuffled, Rng(3))
    assert sorted(e.path for e in a.train) == sorted(e.path for e in b.train)


def test_split_genuine_shortfall_names_person():
    cat = synthetic_catalog(genuine=24, persons=("victim",))
    with pytest.raises(DataError, match="'victim'.*genuine"):
        D.split_dataset(cat, Rng(0))


def test_split_simple_shortfall_names_person():
    cat = synthetic_catalog(simple=24, persons=("low",))
    with pytest.raises(DataError, match="'low'.*simple"):
        D.split_dataset(cat, Rng(0))


def test_split_warns_when_remainder_not_two():
    cat = synthetic_catalog(genuine=30, persons=("p",))
    with pytest.warns(UserWarning, match="5 genuine"):
        D.split_dataset(cat, Rng(0))


# ---------------------------------------------------------------------------
# Synthetic generator


def test_synth_counts_and_pixel_ranges(tmp_path):
    cfg = D.SynthConfig(persons=4, genuine=27, simple=25, skilled=3, opposite=3,
                        canvas_h=54, canvas_w=72, seed=7)
    cat = D.synth_generate(cfg, tmp_path / "corpus")
    assert len(cat) == 4 * 58
    assert cat.persons() == ["p00", "p01", "p02", "p03"]
    for e in cat.entries[::29]:
        px = D.load_image(e.load_path())
        assert px.shape == (1, 54, 72)
        assert px.data.min() >= 0.0 and px.data.max() <= 1.0
        assert 0.5 < px.data.mean() < 0.99      # mostly background, ink present


def test_synth_deterministic_bytes(tmp_path):
    cfg = D.SynthConfig(persons=1, genuine=2, simple=2, skilled=1, opposite=1, seed=13)
    D.synth_generate(cfg, tmp_path / "a")
    D.synth_generate(cfg, tmp_path / "b")
    for rel in ("manifest.csv", os.path.join("p00", "genuine_00.pgm"),
                os.path.join("p00", "opposite_00.pgm")):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_synth_genuine_and_simple_use_different_styles(tmp_path):
    cfg = D.SynthConfig(persons=1, genuine=2, simple=2, skilled=0, opposite=0, seed=3)
    cat = D.synth_generate(cfg, tmp_path / "c")
    gen = D.load_image([e for e in cat.entries if e.kind == "genuine"][0].load_path())
    forg = D.load_image([e for e in cat.entries if e.kind == "simple"][0].load_path())
    # different underlying curves -> images differ in many pixels
    assert np.abs(gen.data - forg.data).mean() > 0.01


def test_synth_manifest_is_loadable_and_resolvable(tmp_path):
    cfg = D.SynthConfig(persons=2, genuine=1, simple=1, skilled=1, opposite=1, seed=5)
    D.synth_generate(cfg, tmp_path / "d")
    cat = D.read_manifest(tmp_path / "d" / "manifest.csv")
    assert len(cat) == 8
    images = D.load_samples(cat.entries, target_hw=(27, 36))
    assert all(img.pixels.shape == (1, 27, 36) for img in images)
    assert {img.label for img in images} == {0, 1}


def test_label_mapping():
    assert D.label_for_kind("genuine") == 1
    for kind in ("simple", "skilled", "opposite"):
        assert D.label_for_kind(kind) == 0
