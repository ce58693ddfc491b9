import numpy as np
import pytest

from hypoxmil import protocol, sigstrat, synth, texfeat
from hypoxmil.milnet import ModelConfig, TrainConfig
from hypoxmil.milnet.train import sgd_step
from hypoxmil import ndnum as nd

TINY = synth.SynthConfig(n_per_class=4, tiles_per_sample=4, tile_size=16, min_signal=1, max_signal=2,
                         blank_cells=1, grid_cols=3, n_signature_genes=10, n_other_genes=10)


def test_dataset_is_deterministic():
    a, b = synth.make_dataset(3, TINY), synth.make_dataset(3, TINY)
    assert a.labels == b.labels
    for s in a.sample_ids:
        assert np.array_equal(a.tiles[s], b.tiles[s])
        assert np.array_equal(a.slides[s].pixels, b.slides[s].pixels)
    assert np.array_equal(a.expression.values, b.expression.values)
    c = synth.make_dataset(4, TINY)
    assert any(not np.array_equal(a.tiles[s], c.tiles[s]) for s in a.sample_ids)


def test_dataset_structure():
    ds = synth.make_dataset(0, TINY)
    assert sum(ds.labels.values()) == 4 and len(ds.labels) == 8
    for s in ds.sample_ids:
        k = int(ds.signal[s].sum())
        assert (1 <= k <= 2) if ds.labels[s] else k == 0
        assert ds.tiles[s].shape == (4, 16, 16, 3) and ds.tiles[s].dtype == np.uint8
        assert ds.slides[s].pixels.shape == (32, 48, 3)


def test_signature_median_split_recovers_truth():
    ds = synth.make_dataset(0)
    gs = {g.name: g for g in ds.gene_sets}[synth.HALLMARK]
    labels = sigstrat.label_targets(sigstrat.stratify(sigstrat.signature_scores(ds.expression, gs)))
    assert labels == ds.labels


def test_signal_tiles_are_less_homogeneous():
    rng = np.random.default_rng(0)
    sig = [texfeat.glcm_features(texfeat.to_gray(synth.signal_tile(rng, 64))).homogeneity for _ in range(10)]
    bg = [texfeat.glcm_features(texfeat.to_gray(synth.background_tile(rng, 64))).homogeneity for _ in range(10)]
    assert max(sig) < min(bg)


def test_synth_config_validation():
    with pytest.raises(ValueError):
        synth.SynthConfig(n_per_class=2)
    with pytest.raises(ValueError):
        synth.SynthConfig(tiles_per_sample=4, max_signal=8)


def test_write_dataset(tmp_path):
    ds = synth.make_dataset(0, TINY)
    paths = synth.write_dataset(ds, tmp_path)
    assert len(list(paths["slides"].glob("*.png"))) == 8
    assert sigstrat.parse_gmt(open(paths["gmt"]))[0].name == synth.HALLMARK
    truth = paths["truth"].read_text().splitlines()
    assert truth[0] == "sample_id,class,n_signal,signal_tiles" and len(truth) == 9


def test_repeat_rng_is_separate_from_split_stream():
    a = protocol.repeat_rng(0, 1).random(4)
    assert np.array_equal(a, protocol.repeat_rng(0, 1).random(4))
    assert not np.array_equal(a, np.random.default_rng([0, 1]).random(4))
    assert not np.array_equal(a, protocol.repeat_rng(0, 2).random(4))


def test_tiny_protocol_is_reproducible():
    ds = synth.make_dataset(1, TINY)
    mc = ModelConfig(backbone=[2, 3], feature_dim=3, attention_hidden=3, head_hidden=3, tile_size=16)
    tc = TrainConfig(lr=0.01, epochs=2, bag_size=2, clip_norm=1.0)
    runs = [protocol.run_protocol(ds.tiles, ds.labels, mc, tc, 2, 0) for _ in range(2)]
    assert [r.auc for r in runs[0].repeats] == [r.auc for r in runs[1].repeats]
    assert runs[0].repeats[0].train.loss_log == runs[1].repeats[0].train.loss_log
    r = runs[0].repeats[0]
    assert sorted(r.scores) == r.plan.test and 0 <= r.auc <= 1 and r.confusion.total == len(r.plan.test)
    calls = protocol.single_tile_calls(r.model, ds.tiles, r.plan.test, threshold=0.5)
    assert len(calls) == 4 * len(r.plan.test)
    text = protocol.tile_calls_table(calls)
    assert text.splitlines()[0] == "tile_id,sample_id,tile_index,score,label"


def test_tile_calls_round_trip_and_comparison(tmp_path):
    ds = synth.make_dataset(0, TINY)
    calls = [protocol.TileCall(s, i, 0.95 if ds.signal[s][i] else 0.01, int(ds.signal[s][i]))
             for s in ds.sample_ids for i in range(4)]
    protocol.write_text(tmp_path / "c.csv", protocol.tile_calls_table(calls))
    assert protocol.read_tile_calls(tmp_path / "c.csv") == calls
    rows = protocol.compare_texture(calls, ds.tiles)
    assert [r.feature for r in rows] == list(texfeat.FEATURE_NAMES)
    hom = rows[0]
    assert hom.means[0] < hom.means[1]
    assert protocol.comparison_table(rows).splitlines()[0].startswith("feature,n_hypoxic")
    with pytest.raises(ValueError):
        protocol.compare_texture([c for c in calls if c.label == 1], ds.tiles)


def test_gradient_norm_clip():
    store = nd.ParamStore()
    store.add("w", np.array([3.0, 4.0]))
    store["w"].grad = np.array([3.0, 4.0])
    sgd_step(store, 1.0, 0.0, {}, clip_norm=1.0)
    assert np.allclose(store["w"].data, [3 - 0.6, 4 - 0.8])
