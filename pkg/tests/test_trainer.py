import csv
import math

import numpy as np
import pytest
from sklearn.base import clone

from mgsf.beamform import design_bank
from mgsf.geometry import ArrayGeometry, linear_pair, look_directions
from mgsf.mcmodel import ModelConfig
from mgsf.simkit import ToySignalSpec, make_toy_dataset
from mgsf.trainer import (
    DatasetManifest,
    ManifestEntry,
    ManifestError,
    SpatialAcousticClassifier,
    TrainConfig,
    _front_end_moments,
    dissimilarity_rows,
    evaluate,
    mismatch_level,
    model_inputs,
    read_manifest,
    relative_error_reduction,
    split_train_val,
    stage1_train_lfbe,
    stage2_train_single_dft,
    stage3_joint_train_mc,
    write_metrics,
    write_plot_data,
)

TINY = ModelConfig("lfbe-baseline", n_mels=16, hidden=6, layers=1)
EASY = ToySignalSpec(cue_level_db=6.0)


@pytest.fixture(scope="module")
def corpus():
    geoms = [linear_pair(0.073), linear_pair(0.036)]
    return make_toy_dataset(geoms, 3, snr_grid=(25.0,), duration=0.3, seed=5, spec=EASY)


@pytest.fixture(scope="module")
def staged(corpus):
    cfg = TrainConfig(epochs=2, lr=3e-3, batch_size=8)
    s1 = stage1_train_lfbe(corpus, cfg, TINY)
    s2 = stage2_train_single_dft(corpus, s1.model, cfg)
    return s1, s2


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(stage=4)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(val_fraction=1.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)


def _write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", "geometry_id", "snr_db", "split"])
        w.writerows(rows)


def test_read_manifest_errors(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,b\n")
    with pytest.raises(ManifestError, match="header"):
        read_manifest(p)
    _write_manifest(p, [["x.wav", "1", "g", "5"]])
    with pytest.raises(ManifestError, match="fields"):
        read_manifest(p)
    _write_manifest(p, [["x.wav", "one", "g", "5", "train"]])
    with pytest.raises(ManifestError, match=":2:"):
        read_manifest(p)
    _write_manifest(p, [["x.wav", "7", "g", "5", "train"]])
    with pytest.raises(ManifestError, match="label"):
        read_manifest(p, classes=4)


def test_manifest_split_overlap_rejected():
    man = DatasetManifest(
        [ManifestEntry("a.wav", 0, "g", 5.0, "train"), ManifestEntry("a.wav", 0, "g", 5.0, "test")]
    )
    with pytest.raises(ManifestError, match="both"):
        man.validate()


def test_manifest_load_round_trip(tmp_path, pair36):
    utts = make_toy_dataset([pair36], 1, snr_grid=(15.0,), duration=0.2, out_dir=tmp_path)
    man = read_manifest(tmp_path / "manifest.csv", classes=4)
    loaded = man.load("train")
    assert len(loaded) == 4 and loaded[2].label == 2
    assert loaded[0].audio.shape == (2, 3200)
    assert man.load("test") == []
    assert np.allclose(loaded[1].audio, utts[1].audio, atol=1e-6)


def test_split_train_val(corpus):
    tr, va = split_train_val(corpus, 0.25, 0)
    assert len(va) == 6 and len(tr) == 18
    assert not {id(u) for u in tr} & {id(u) for u in va}
    tr2, va2 = split_train_val(corpus, 0.25, 0)
    assert [id(u) for u in va] == [id(u) for u in va2]
    assert split_train_val(corpus, 0.0, 0)[1] == []


def test_stage_chain(staged, corpus):
    s1, s2 = staged
    assert s1.model.stage == 1 and s1.model.arch == "lfbe-baseline"
    assert s2.model.stage == 2 and s2.model.arch == "single-dft"
    assert s2.model.stats is not None
    assert len(s1.history) <= 2 and all("val_loss" in h for h in s1.history)
    x = model_inputs(s2.model, corpus[0].audio)
    assert x.shape == (29, 254)


def test_training_reduces_loss(corpus):
    res = stage1_train_lfbe(corpus, TrainConfig(epochs=6, lr=1e-2, batch_size=4, val_fraction=0), TINY)
    assert res.final_loss < res.initial_loss


def test_stage2_requires_stage1_model(staged, corpus):
    with pytest.raises(ValueError):
        stage2_train_single_dft(corpus, staged[1].model, TrainConfig(epochs=1))


def test_stage3_feature_moments_are_matched(staged, corpus):
    s2 = staged[1].model
    bank = design_bank([linear_pair(0.073), linear_pair(0.036)], look_directions(4))
    cfg = TrainConfig(epochs=1, lr=1e-12, arch="wtsf", val_fraction=0)
    res = stage3_joint_train_mc(corpus, s2, bank, cfg, featnorm="match")
    m3 = res.model
    assert m3.stage == 3 and m3.arch == "wtsf"
    assert m3.geometry_ids == ["pair73mm", "pair36mm"]
    for name in ("lstm0.Wx", "out.W"):
        assert np.allclose(m3.params[name], s2.params[name], atol=1e-9)
    # classifier inputs keep their stage-2 moments
    mu2, sd2 = _front_end_moments(s2, corpus)
    mu3, sd3 = _front_end_moments(m3, corpus)
    z2 = ((mu2 - s2.buffers["featnorm.mean"]) / s2.buffers["featnorm.std"], sd2 / s2.buffers["featnorm.std"])
    z3 = ((mu3 - m3.buffers["featnorm.mean"]) / m3.buffers["featnorm.std"], sd3 / m3.buffers["featnorm.std"])
    assert np.allclose(z2[0], z3[0], atol=1e-6) and np.allclose(z2[1], z3[1], rtol=1e-6)


def test_stage3_refit_standardizes_features(staged, corpus):
    bank = design_bank([linear_pair(0.073), linear_pair(0.036)], look_directions(4))
    cfg = TrainConfig(epochs=1, lr=1e-12, arch="esf", val_fraction=0)
    m3 = stage3_joint_train_mc(corpus, staged[1].model, bank, cfg).model
    mu, sd = _front_end_moments(m3, corpus)
    assert np.allclose((mu - m3.buffers["featnorm.mean"]) / m3.buffers["featnorm.std"], 0, atol=1e-6)
    assert np.allclose(sd / m3.buffers["featnorm.std"], 1, rtol=1e-6)


def test_stage3_checks(staged, corpus):
    s1, s2 = staged
    bank = design_bank([linear_pair(0.073)], look_directions(4))
    with pytest.raises(ValueError, match="stage 2"):
        stage3_joint_train_mc(corpus, s1.model, bank, TrainConfig(epochs=1, arch="wtsf"))
    with pytest.raises(ValueError, match="not in the bank"):
        stage3_joint_train_mc(corpus, s2.model, bank, TrainConfig(epochs=1, arch="wtsf"))
    with pytest.raises(ValueError, match="featnorm"):
        stage3_joint_train_mc(corpus, s2.model, bank, TrainConfig(epochs=1), featnorm="zscore")


def test_relative_error_reduction():
    assert relative_error_reduction(0.2, 0.1) == pytest.approx(0.5)
    assert relative_error_reduction(0.1, 0.2) == pytest.approx(-1.0)
    assert relative_error_reduction(0.0, 0.0) == 0.0
    assert math.isnan(relative_error_reduction(0.0, 0.1))


def test_mismatch_level(circ7):
    moved = ArrayGeometry("m", circ7.positions + np.array([[0, 0, 0]] * 5 + [[0.01, 0, 0]] * 2))
    assert mismatch_level(circ7, [circ7]) == 0
    assert mismatch_level(moved, [circ7]) == 2
    assert mismatch_level(moved, [linear_pair(0.05)]) == 7


def test_evaluate_groups_and_csv(tmp_path, staged, corpus):
    s1 = staged[0].model
    res = evaluate(s1, corpus, group_by=("snr", "geometry", "snr+geometry"))
    assert list(res)[0] == "all"
    assert res["all"].utterances == 24
    assert res["geometry=pair36mm"].utterances == 12
    assert "geometry=pair36mm,snr=25" in res
    assert "snr=5" not in res
    assert 0 <= res["all"].utt_acc <= 1
    again = evaluate(s1, corpus, baseline=res)
    assert again["all"].rerr == pytest.approx(0.0) or math.isnan(again["all"].rerr)
    write_metrics(again, tmp_path / "m.csv")
    with open(tmp_path / "m.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["group"] == "all" and set(rows[0]) == {"group", "frames", "frame_acc", "utt_acc", "rerr"}
    with pytest.raises(ValueError):
        evaluate(s1, corpus, group_by=("room",))


def test_dissimilarity_rows(tmp_path):
    class _M:
        geometries = [linear_pair(0.073), linear_pair(0.036)]

    class _R:
        rerr = 0.25

    rows = dissimilarity_rows(_M(), {"geometry=pair50mm": _R()}, [linear_pair(0.05), linear_pair(0.02)])
    assert rows == [("pair50mm", pytest.approx(0.014), 0.25)]
    write_plot_data(rows, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "geometry_id,dissimilarity,rerr"


def test_estimator_api(corpus):
    X = [u.audio for u in corpus]
    y = np.array(["abcd"[u.label] for u in corpus])
    clf = SpatialAcousticClassifier(arch="lfbe-baseline", hidden=6, layers=1, epochs=2)
    assert clone(clf).get_params()["hidden"] == 6
    clf.fit(X, y)
    pred = clf.predict(X)
    assert pred.shape == (24,) and set(pred) <= set("abcd")
    proba = clf.predict_proba(X[:3])
    assert proba.shape == (3, 4) and np.allclose(proba.sum(1), 1)
    assert 0 <= clf.score(X, y) <= 1


def test_estimator_spatial_needs_geometries(corpus):
    clf = SpatialAcousticClassifier(arch="wtsf", hidden=4, layers=1, epochs=1)
    with pytest.raises(ValueError, match="geometries"):
        clf.fit([u.audio for u in corpus], [u.label for u in corpus], [u.geometry_id for u in corpus])


def test_estimator_unfitted():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        SpatialAcousticClassifier().predict([np.zeros((2, 800))])
