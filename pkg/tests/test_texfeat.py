import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hypoxmil import texfeat
from hypoxmil.texfeat import ANGLES, OFFSETS


def brute_counts(gray, angle, levels=256):
    """Enumerate every ordered pixel pair at the angle's offset."""
    dr, dc = OFFSETS[angle]
    h, w = gray.shape
    c = np.zeros((levels, levels), dtype=np.int64)
    for r in range(h):
        for col in range(w):
            r2, c2 = r + dr, col + dc
            if 0 <= r2 < h and 0 <= c2 < w:
                c[gray[r, col], gray[r2, c2]] += 1
    return c


def direct_features(P):
    """Six features by explicit double sums over the nonzero entries."""
    nz = [(i, j, P[i, j]) for i, j in zip(*np.nonzero(P))]
    hom = sum(p / (1 + (i - j) ** 2) for i, j, p in nz)
    asm = sum(p * p for _, _, p in nz)
    con = sum(p * (i - j) ** 2 for i, j, p in nz)
    dis = sum(p * abs(i - j) for i, j, p in nz)
    mu_i = sum(i * p for i, _, p in nz)
    mu_j = sum(j * p for _, j, p in nz)
    var_i = sum(p * (i - mu_i) ** 2 for i, _, p in nz)
    var_j = sum(p * (j - mu_j) ** 2 for _, j, p in nz)
    if var_i * var_j <= 0:
        cor = 1.0
    else:
        cor = sum(p * (i - mu_i) * (j - mu_j) for i, j, p in nz) / math.sqrt(var_i * var_j)
    return {"homogeneity": hom, "energy": math.sqrt(asm), "correlation": cor,
            "contrast": con, "dissimilarity": dis, "ASM": asm}


def test_to_gray_examples():
    assert texfeat.to_gray(np.zeros((1, 1, 3), np.uint8))[0, 0] == 0
    assert texfeat.to_gray(np.full((1, 1, 3), 255, np.uint8))[0, 0] == 255
    v = np.arange(256, dtype=np.uint8)
    assert np.array_equal(texfeat.to_gray(np.stack([v, v, v], -1)), v)
    rgb = np.random.default_rng(0).integers(0, 256, (9, 9, 3), dtype=np.uint8)
    g = texfeat.to_gray(rgb)
    for (r, c), got in np.ndenumerate(g):
        R, G, B = (float(x) for x in rgb[r, c])
        assert got == min(255, max(0, round(0.2126 * R + 0.7152 * G + 0.0722 * B)))


def test_constant_tile():
    g = np.full((5, 5), 7, dtype=np.uint8)
    m = texfeat.glcm(g, 45)
    assert m.P[7, 7] == 1 and m.P.sum() == 1 and m.distance == 1
    f = texfeat.glcm_features(g)
    assert (f.homogeneity, f.energy, f.correlation, f.contrast) == (1.0, 1.0, 1.0, 0.0)


def test_hand_enumerated_2x2():
    g = np.array([[0, 1], [0, 1]], dtype=np.uint8)
    m = texfeat.glcm(g, 0)
    assert m.P[0, 1] == 1 and m.P.sum() == 1
    f = texfeat.glcm_features(g, angles=(0,))
    assert (f.homogeneity, f.energy, f.contrast) == (0.5, 1.0, 1.0)


def test_degenerate_tiles():
    with pytest.raises(texfeat.DegenerateInputError):
        texfeat.glcm(np.zeros((1, 1), np.uint8), 0)
    with pytest.raises(texfeat.DegenerateInputError):
        texfeat.glcm(np.zeros((1, 5), np.uint8), 90)
    with pytest.raises(ValueError):
        texfeat.glcm(np.zeros((3, 3, 3), np.uint8), 0)
    with pytest.raises(ValueError):
        texfeat.glcm(np.zeros((3, 3), np.uint8), 30)


@pytest.mark.parametrize("seed", range(4))
def test_random_16x16_counts_match_brute_force(seed):
    g = np.random.default_rng(seed).integers(0, 256, (16, 16))
    for a in ANGLES:
        assert np.array_equal(texfeat.glcm_counts(g, a), brute_counts(g, a))


@pytest.mark.parametrize("seed", range(4))
def test_features_match_direct_summation(seed):
    rng = np.random.default_rng(100 + seed)
    levels = int(rng.integers(2, 256))
    g = rng.integers(0, levels, (int(rng.integers(2, 40)), int(rng.integers(2, 40))))
    for a in ANGLES:
        got = texfeat.features_from_matrix(texfeat.glcm(g, a).P).as_dict()
        ref = direct_features(brute_counts(g, a) / brute_counts(g, a).sum())
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-9), k


def test_features_are_mean_of_per_angle_features():
    g = np.random.default_rng(5).integers(0, 256, (12, 10))
    per = texfeat.glcm_features_per_angle(g)
    avg = texfeat.glcm_features(g)
    for k, v in avg.as_dict().items():
        assert v == pytest.approx(np.mean([per[a].as_dict()[k] for a in ANGLES]), abs=1e-15)


gray_tiles = hnp.arrays(
    np.uint8, st.tuples(st.integers(2, 24), st.integers(2, 24)), elements=st.integers(0, 255)
)


@given(gray_tiles)
@settings(max_examples=150, deadline=None)
def test_glcm_is_distribution_and_feature_ranges(g):
    for a in ANGLES:
        P = texfeat.glcm(g, a).P
        assert np.all(P >= 0) and abs(P.sum() - 1) < 1e-9
        f = texfeat.features_from_matrix(P)
        assert 0 < f.homogeneity <= 1 and 0 < f.energy <= 1
        assert abs(f.correlation) <= 1 + 1e-9
        assert abs(f.ASM - f.energy**2) < 1e-9


@given(gray_tiles)
@settings(max_examples=100, deadline=None)
def test_quarter_turn_maps_0_to_90_and_45_to_135(g):
    r = np.rot90(g, 1)
    assert np.array_equal(texfeat.glcm_counts(g, 0), texfeat.glcm_counts(r, 90))
    assert np.array_equal(texfeat.glcm_counts(g, 45), texfeat.glcm_counts(r, 135))
    f0 = texfeat.features_from_matrix(texfeat.glcm(g, 0).P)
    f90 = texfeat.features_from_matrix(texfeat.glcm(r, 90).P)
    assert f0 == f90


def test_texture_csv_and_batch(tmp_path):
    from hypoxmil import slideio

    rng = np.random.default_rng(0)
    s = slideio.SlideImage("A", rng.integers(0, 200, (32, 32, 3), dtype=np.uint8))
    m = slideio.tile_slide(s, tile_size=16, min_tissue=0.0, out_dir=tmp_path)
    rows = texfeat.batch_features(m, tmp_path / "tex.csv", workers=2)
    assert [r[0] for r in rows] == ["A:0", "A:1", "A:2", "A:3"]
    lines = (tmp_path / "tex.csv").read_text().splitlines()
    assert lines[0] == "tile_id,homogeneity,energy,correlation,contrast,dissimilarity,ASM"
    tile0 = texfeat.to_gray(s.pixels[:16, :16])
    assert rows[0][1] == texfeat.glcm_features(tile0)
