"""Stage-wise training and evaluation of the acoustic models.

The recipe has three stages:

1. an LSTM classifier on single-channel log-mel features (``lfbe-baseline``);
2. the FE network plus classifier on single-channel DFT frames
   (``single-dft``), classifier initialized from stage 1;
3. the full multi-channel model (``esf`` or ``wtsf``): SF layer from a
   beamformer bank, FE network, feature standardization and classifier
   copied from stage 2, all trained jointly on multi-geometry data.

Batches are whole utterances of equal length; gradients flow through the
full utterance. The learning rate is halved after ``patience`` epochs without
validation improvement and training stops after ``early_stop`` such epochs.
The model with the lowest validation loss is returned.
"""

from __future__ import annotations

import csv
import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from . import nnet
from .audio import read_wav
from .beamform import BeamformerBank, LoadingPolicy, design_bank
from .dsp import (
    DFT_CONFIG,
    LFBE_CONFIG,
    LfbeExtractor,
    StatsAccumulator,
    normalize_dft,
    stft,
)
from .geometry import ArrayGeometry, geometry_dissimilarity, look_directions
from .mcmodel import (
    AcousticModel,
    ModelConfig,
    build_model,
    spatial_config,
    utterance_decision,
)
from .simkit import MANIFEST_FIELDS, Utterance


# --------------------------------------------------------------------------
# configuration and data


@dataclass(frozen=True)
class TrainConfig:
    stage: int = 1
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    classes: int = 4
    arch: str = "lfbe-baseline"
    geometries: tuple = ()
    val_fraction: float = 0.1
    patience: int = 2
    early_stop: int = 5
    trainable: tuple | None = None

    def __post_init__(self):
        if self.stage not in (1, 2, 3):
            raise ValueError(f"stage must be 1, 2 or 3, got {self.stage}")
        if not (self.lr > 0 and self.batch_size > 0 and self.epochs > 0):
            raise ValueError("learning rate, batch size and epochs must be positive")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")
        if self.patience < 1 or self.early_stop < 1:
            raise ValueError("patience and early_stop must be positive")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: int
    geometry_id: str
    snr_db: float
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def validate(self, classes: int | None = None) -> None:
        seen = {}
        for e in self.entries:
            if e.label < 0 or (classes is not None and e.label >= classes):
                raise ManifestError(f"{e.path}: label {e.label} outside [0, {classes})")
            prev = seen.setdefault(e.path, e.split)
            if prev != e.split:
                raise ManifestError(f"{e.path} appears in both {prev!r} and {e.split!r} splits")

    def load(self, split: str | None = None) -> list[Utterance]:
        out = []
        for e in self.entries:
            if split is not None and e.split != split:
                continue
            audio, _ = read_wav(self.root / e.path)
            out.append(Utterance(audio, e.label, e.geometry_id, e.snr_db, e.split, e.path))
        return out


def read_manifest(path: str | Path, classes: int | None = None) -> DatasetManifest:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != MANIFEST_FIELDS:
        raise ManifestError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
    entries = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(MANIFEST_FIELDS):
            raise ManifestError(f"{path}:{n}: expected {len(MANIFEST_FIELDS)} fields, got {len(row)}")
        try:
            entries.append(ManifestEntry(row[0], int(row[1]), row[2], float(row[3]), row[4]))
        except ValueError as exc:
            raise ManifestError(f"{path}:{n}: {exc}") from None
    man = DatasetManifest(entries, path.parent)
    man.validate(classes)
    return man


# --------------------------------------------------------------------------
# features


def lfbe_inputs(audio, n_mels: int = 64) -> np.ndarray:
    """Causally mean-normalized log-mel frames of channel 0: ``(T, n_mels)``."""
    return LfbeExtractor(n_mels=n_mels).fit().transform([np.atleast_2d(audio)[:1]])[0]


def dft_stats(utts: list[Utterance], channels: slice = slice(0, 1)):
    acc = StatsAccumulator()
    for u in utts:
        acc.update(stft(np.atleast_2d(u.audio)[channels], DFT_CONFIG))
    return acc.finalize()


def model_inputs(model: AcousticModel, audio) -> np.ndarray:
    """Frames ``(T, input_dim)`` in the layout ``model`` expects."""
    audio = np.atleast_2d(np.asarray(audio, dtype=float))
    cfg = model.config
    if cfg.arch == "lfbe-baseline":
        return lfbe_inputs(audio, cfg.n_mels)
    if model.stats is None:
        raise ValueError(f"{cfg.arch} model carries no DFT normalization statistics")
    if cfg.arch == "single-dft":
        audio = audio[:1]
    elif audio.shape[0] != cfg.channels:
        raise ValueError(f"model expects {cfg.channels}-channel audio, got {audio.shape[0]}")
    return normalize_dft(stft(audio, model.stft), model.stats)


def _geometry_index(model: AcousticModel, utts: list[Utterance]) -> np.ndarray | None:
    if not model.config.spatial or model.config.routing == "shared":
        return None
    ids = model.geometry_ids
    missing = sorted({u.geometry_id for u in utts} - set(ids))
    if missing:
        raise ValueError(f"geometries {missing} are not part of the model's bank")
    return np.array([ids.index(u.geometry_id) for u in utts])


@dataclass
class _Prepared:
    x: list[np.ndarray]
    y: np.ndarray
    gidx: np.ndarray | None


def _prepare(model, utts):
    x = [model_inputs(model, u.audio) for u in utts]
    y = np.array([u.label for u in utts])
    if y.size and (y.min() < 0 or y.max() >= model.config.classes):
        raise ValueError(f"labels outside [0, {model.config.classes})")
    return _Prepared(x, y, _geometry_index(model, utts))


def _batches(prep: _Prepared, idx, batch_size, rng=None):
    """Yield ``(x, frame_labels, gidx, n_utts)`` with equal-length utterances per batch."""
    by_len = OrderedDict()
    for i in idx:
        by_len.setdefault(prep.x[i].shape[0], []).append(i)
    chunks = []
    for members in by_len.values():
        members = list(members)
        if rng is not None:
            rng.shuffle(members)
        chunks += [members[s : s + batch_size] for s in range(0, len(members), batch_size)]
    if rng is not None:
        order = rng.permutation(len(chunks))
        chunks = [chunks[o] for o in order]
    for c in chunks:
        x = np.stack([prep.x[i] for i in c])
        lab = np.repeat(prep.y[c][:, None], x.shape[1], axis=1)
        g = None if prep.gidx is None else prep.gidx[c]
        yield x, lab, g, c


def _mean_loss(model, prep, idx, batch_size=64):
    tot, n = 0.0, 0
    for x, lab, g, c in _batches(prep, idx, batch_size):
        tot += model.loss(x, lab, g) * lab.size
        n += lab.size
    return tot / max(n, 1)


# --------------------------------------------------------------------------
# training loop


@dataclass
class TrainResult:
    model: AcousticModel
    history: list[dict]
    initial_loss: float

    @property
    def final_loss(self) -> float:
        return self.history[-1]["train_loss"] if self.history else self.initial_loss


def split_train_val(utts: list[Utterance], fraction: float, seed: int):
    """Explicit ``val`` entries if present, else a seeded ``fraction`` of the training set."""
    train = [u for u in utts if u.split == "train"]
    val = [u for u in utts if u.split in ("val", "dev")]
    if not train:
        train = [u for u in utts if u.split not in ("val", "dev")]
    if val or fraction == 0 or len(train) < 2:
        return train, val
    rng = np.random.default_rng([seed, 7])
    n_val = max(1, int(round(fraction * len(train))))
    pick = set(rng.choice(len(train), n_val, replace=False).tolist())
    return [u for i, u in enumerate(train) if i not in pick], [u for i, u in enumerate(train) if i in pick]


def _trainable_names(model, cfg: TrainConfig):
    if cfg.trainable is None:
        return list(model.params)
    names = [n for n in model.params if any(n.startswith(p) for p in cfg.trainable)]
    if not names:
        raise ValueError(f"no parameters match trainable prefixes {cfg.trainable}")
    return names


def fit_model(model: AcousticModel, utts: list[Utterance], cfg: TrainConfig, log=None) -> TrainResult:
    """Train ``model`` in place on ``utts`` and return the best-validation copy."""
    if not utts:
        raise ValueError("empty training set")
    train, val = split_train_val(utts, cfg.val_fraction, cfg.seed)
    if not train:
        raise ValueError("no training utterances after the validation split")
    ptrain = _prepare(model, train)
    pval = _prepare(model, val) if val else None
    itrain = np.arange(len(train))
    ival = np.arange(len(val))
    rng = np.random.default_rng([cfg.seed, cfg.stage])
    names = _trainable_names(model, cfg)
    opt = nnet.Adam(cfg.lr)
    initial = _mean_loss(model, ptrain, itrain)
    best_loss = _mean_loss(model, pval, ival) if pval else initial
    best = model.copy()
    stale = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        tot, n = 0.0, 0
        for x, lab, g, _ in _batches(ptrain, itrain, cfg.batch_size, rng):
            loss, grads = model.loss_and_grads(x, lab, g)
            opt.step(model.params, grads, names)
            tot += loss * lab.size
            n += lab.size
        rec = {"epoch": epoch, "train_loss": tot / n, "lr": opt.lr}
        score = _mean_loss(model, pval, ival) if pval else rec["train_loss"]
        rec["val_loss"] = score
        history.append(rec)
        if log:
            log(f"stage {cfg.stage} epoch {epoch}: train {rec['train_loss']:.4f} val {score:.4f} lr {opt.lr:.2e}")
        if score < best_loss - 1e-6:
            best_loss, best, stale = score, model.copy(), 0
        else:
            stale += 1
            if stale >= cfg.early_stop:
                break
            if stale % cfg.patience == 0:
                opt.lr *= 0.5
    best.stage = cfg.stage
    return TrainResult(best, history, initial)


def _front_end_moments(model: AcousticModel, utts: list[Utterance]):
    """Per-dimension mean and (population) std of the front-end output over ``utts``."""
    prep = _prepare(model, utts)
    acc = None
    for x, _, g, _ in _batches(prep, np.arange(len(utts)), 64):
        f, _ = model.front_end(x, g)
        f = f.reshape(-1, f.shape[-1])
        acc = (f.sum(0), (f * f).sum(0), f.shape[0]) if acc is None else (
            acc[0] + f.sum(0), acc[1] + (f * f).sum(0), acc[2] + f.shape[0])
    s, s2, n = acc
    mean = s / n
    return mean, np.sqrt(np.maximum(s2 / n - mean * mean, 1e-8))


def _set_featnorm(model: AcousticModel, utts: list[Utterance]) -> None:
    """Standardize the front-end output over ``utts``."""
    mean, std = _front_end_moments(model, utts)
    model.buffers["featnorm.mean"] = mean
    model.buffers["featnorm.std"] = std


def _match_featnorm(model: AcousticModel, source: AcousticModel, utts: list[Utterance]) -> None:
    """Pick ``model``'s featnorm so the classifier sees the moments it saw under ``source``.

    The source classifier was trained on ``(f - m0) / s0`` where the source
    front end ``f`` has moments ``(mu_s, sd_s)``. With the new front end's
    moments ``(mu_t, sd_t)``, the affine map ``s = sd_t * s0 / sd_s``,
    ``m = mu_t - (mu_s - m0) * sd_t / sd_s`` reproduces the same per-dimension
    mean and std at the classifier input.
    """
    mu_s, sd_s = _front_end_moments(source, utts)
    mu_t, sd_t = _front_end_moments(model, utts)
    m0, s0 = source.buffers["featnorm.mean"], source.buffers["featnorm.std"]
    model.buffers["featnorm.std"] = sd_t * s0 / sd_s
    model.buffers["featnorm.mean"] = mu_t - (mu_s - m0) * sd_t / sd_s


def _classifier_config(cfg: TrainConfig, base: ModelConfig | None, arch: str) -> ModelConfig:
    if base is None:
        return ModelConfig(arch, classes=cfg.classes)
    if base.classes != cfg.classes:
        raise ValueError(f"checkpoint has {base.classes} classes, config asks for {cfg.classes}")
    return replace(base, arch=arch)


def stage1_train_lfbe(utts: list[Utterance], cfg: TrainConfig, model_config: ModelConfig | None = None, log=None):
    """LSTM classifier on channel-0 log-mel features."""
    if not utts:
        raise ValueError("empty manifest")
    mc = _classifier_config(cfg, model_config, "lfbe-baseline")
    model = build_model(mc, seed=cfg.seed)
    model.stft = LFBE_CONFIG
    train, _ = split_train_val(utts, cfg.val_fraction, cfg.seed)
    _set_featnorm(model, train)
    return fit_model(model, utts, replace(cfg, stage=1), log)


def stage2_train_single_dft(utts: list[Utterance], stage1: AcousticModel, cfg: TrainConfig, log=None):
    """FE network plus classifier on normalized channel-0 DFT frames."""
    if not utts:
        raise ValueError("empty manifest")
    if stage1.arch != "lfbe-baseline":
        raise ValueError(f"stage 2 starts from an lfbe-baseline model, got {stage1.arch!r}")
    mc = _classifier_config(cfg, stage1.config, "single-dft")
    train, _ = split_train_val(utts, cfg.val_fraction, cfg.seed)
    model = build_model(mc, seed=cfg.seed, stats=dft_stats(train))
    model.stft = DFT_CONFIG
    for name in model.params:
        if name.startswith(("lstm", "out.")):
            model.params[name] = stage1.params[name].copy()
    _set_featnorm(model, train)
    return fit_model(model, utts, replace(cfg, stage=2), log)


def stage3_joint_train_mc(
    utts: list[Utterance],
    stage2: AcousticModel,
    bank: BeamformerBank,
    cfg: TrainConfig,
    log=None,
    featnorm: str = "refit",
    **model_kw,
):
    """Joint training of SF layer, head, FE and classifier on multi-channel frames.

    Beam powers are not on the scale of single-channel powers (a
    superdirective beam amplifies a coherent source off its look direction
    far more than diffuse noise), so the stage-2 standardization does not
    fit the new front end. ``featnorm='refit'`` re-standardizes the front-end
    output on the training data. ``'match'`` instead picks the standardization
    that gives the classifier input the moments it had at the end of stage 2,
    which starts from a lower loss but trains to a worse model on the toy
    task. ``'copy'`` keeps the stage-2 buffers unchanged.
    """
    if featnorm not in ("refit", "match", "copy"):
        raise ValueError(f"featnorm must be 'refit', 'match' or 'copy', got {featnorm!r}")
    if not utts:
        raise ValueError("empty manifest")
    if stage2.arch != "single-dft" or stage2.stage != 2:
        raise ValueError("stage 3 needs a checkpoint produced by stage 2 (single-dft)")
    arch = cfg.arch if cfg.arch in ("esf", "wtsf") else "wtsf"
    mc = spatial_config(bank, arch, _classifier_config(cfg, stage2.config, "single-dft"), **model_kw)
    ids = set(bank.geometry_ids)
    missing = sorted({u.geometry_id for u in utts} - ids)
    if missing:
        raise ValueError(f"training geometries {missing} are not in the bank {sorted(ids)}")
    chans = {np.atleast_2d(u.audio).shape[0] for u in utts}
    if chans != {mc.channels}:
        raise ValueError(f"bank geometries have {mc.channels} channels, data has {sorted(chans)}")
    model = build_model(mc, seed=cfg.seed, bank=bank, stats=stage2.stats)
    model.stft = stage2.stft
    for name in model.params:
        if name.startswith(("fe.", "lstm", "out.")):
            model.params[name] = stage2.params[name].copy()
    for name, val in stage2.buffers.items():
        model.buffers[name] = val.copy()
    train, _ = split_train_val(utts, cfg.val_fraction, cfg.seed)
    if featnorm == "refit":
        _set_featnorm(model, train)
    elif featnorm == "match":
        _match_featnorm(model, stage2, train)
    return fit_model(model, utts, replace(cfg, stage=3, arch=arch), log)


# --------------------------------------------------------------------------
# evaluation


@dataclass
class GroupResult:
    group: str
    frames: int
    utterances: int
    frame_acc: float
    utt_acc: float
    rerr: float = float("nan")

    @property
    def utt_err(self) -> float:
        return 1.0 - self.utt_acc


def relative_error_reduction(err_base: float, err_model: float) -> float:
    """``(err_base - err_model) / err_base``; NaN when the baseline makes no errors."""
    if err_base <= 0:
        return 0.0 if err_model <= 0 else float("nan")
    return (err_base - err_model) / err_base


def mismatch_level(test: ArrayGeometry, trained: list[ArrayGeometry], tol: float = 1e-6) -> int:
    """Fewest sensors of ``test`` that sit off the positions of any one training geometry."""
    best = test.n_channels
    for g in trained:
        if g.n_channels != test.n_channels:
            continue
        off = np.linalg.norm(g.positions - test.positions, axis=1) > tol
        best = min(best, int(off.sum()))
    return best


def predict_utterances(model: AcousticModel, utts: list[Utterance], batch_size: int = 64):
    """Per-utterance frame posteriors ``[(T, C), ...]`` in input order."""
    prep = _prepare(model, utts)
    out = [None] * len(utts)
    for x, _, g, c in _batches(prep, np.arange(len(utts)), batch_size):
        post = model.posteriors(x, g)
        for j, i in enumerate(c):
            out[i] = post[j]
    return out


def _group_keys(u: Utterance, keys, geometries):
    out = ["all"]
    for k in keys:
        if k == "snr":
            out.append(f"snr={u.snr_db:g}")
        elif k == "geometry":
            out.append(f"geometry={u.geometry_id}")
        elif k == "mismatch":
            g = geometries.get(u.geometry_id)
            if g is not None:
                out.append(f"mismatch={g}")
        elif k == "snr+geometry":
            out.append(f"geometry={u.geometry_id},snr={u.snr_db:g}")
        else:
            raise ValueError(f"unknown grouping key {k!r}")
    return out


def evaluate(
    model: AcousticModel,
    utts: list[Utterance],
    group_by=("snr", "geometry"),
    baseline: dict | None = None,
    test_geometries: list[ArrayGeometry] | None = None,
) -> "OrderedDict[str, GroupResult]":
    """Frame and utterance accuracy per group.

    Groups with no utterances are absent from the result. ``baseline`` is a
    previous result of this function; each group present in both gets its
    RERR against the baseline's utterance error. ``test_geometries`` enables
    the ``mismatch`` key (mismatched sensor count w.r.t. the model's
    training geometries).
    """
    mism = {}
    if test_geometries is not None:
        mism = {g.id: mismatch_level(g, model.geometries) for g in test_geometries}
    posts = predict_utterances(model, utts)
    tallies = OrderedDict()
    for u, p in zip(utts, posts):
        frame_hits = int(np.sum(np.argmax(p, axis=-1) == u.label))
        hit = int(utterance_decision(p) == u.label)
        for key in _group_keys(u, group_by, mism):
            t = tallies.setdefault(key, [0, 0, 0, 0])
            t[0] += p.shape[0]
            t[1] += frame_hits
            t[2] += 1
            t[3] += hit
    out = OrderedDict()
    for key in sorted(tallies, key=lambda k: (k != "all", k)):
        frames, fh, n, hits = tallies[key]
        res = GroupResult(key, frames, n, fh / frames if frames else float("nan"), hits / n)
        if baseline is not None and key in baseline:
            res.rerr = relative_error_reduction(baseline[key].utt_err, res.utt_err)
        out[key] = res
    return out


def write_metrics(results: dict, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "frames", "frame_acc", "utt_acc", "rerr"])
        for r in results.values():
            w.writerow([r.group, r.frames, f"{r.frame_acc:.6f}", f"{r.utt_acc:.6f}",
                        "" if math.isnan(r.rerr) else f"{r.rerr:.6f}"])


def dissimilarity_rows(model: AcousticModel, results: dict, test_geometries: list[ArrayGeometry]):
    """``(geometry_id, dissimilarity, rerr)`` for every evaluated test geometry.

    Dissimilarity is taken to the closest of the model's training geometries.
    """
    rows = []
    for g in test_geometries:
        key = f"geometry={g.id}"
        if key not in results:
            continue
        cands = [geometry_dissimilarity(ref, g) for ref in model.geometries if ref.n_channels == g.n_channels]
        dis = min(cands) if cands else float("nan")
        rows.append((g.id, dis, results[key].rerr))
    return rows


def write_plot_data(rows, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["geometry_id", "dissimilarity", "rerr"])
        for gid, dis, rerr in rows:
            w.writerow([gid, f"{dis:.6f}", "" if math.isnan(rerr) else f"{rerr:.6f}"])


# --------------------------------------------------------------------------
# estimator


class SpatialAcousticClassifier(ClassifierMixin, BaseEstimator):
    """Utterance classifier trained with the stage-wise recipe.

    ``X`` is a list of ``(M, N)`` waveforms; ``geometry_ids`` names the array
    each one was captured with. ``arch`` selects how many stages run:
    ``lfbe-baseline`` stops after stage 1, ``single-dft`` after stage 2 and
    ``esf``/``wtsf`` run all three using a bank designed for ``geometries``.
    """

    def __init__(
        self,
        arch="wtsf",
        geometries=None,
        n_directions=12,
        loading=0.01,
        hidden=64,
        layers=2,
        lr=1e-3,
        batch_size=16,
        epochs=20,
        seed=0,
    ):
        self.arch = arch
        self.geometries = geometries
        self.n_directions = n_directions
        self.loading = loading
        self.hidden = hidden
        self.layers = layers
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def _utts(self, X, y=None, geometry_ids=None):
        X = list(X)
        if not X:
            raise ValueError("empty input")
        ids = geometry_ids if geometry_ids is not None else [""] * len(X)
        if len(ids) != len(X) or (y is not None and len(y) != len(X)):
            raise ValueError("X, y and geometry_ids lengths differ")
        labels = [0] * len(X) if y is None else y
        return [
            Utterance(np.atleast_2d(np.asarray(x, dtype=float)), int(lab), gid, float("nan"))
            for x, lab, gid in zip(X, labels, ids)
        ]

    def fit(self, X, y, geometry_ids=None):
        y = np.asarray(y)
        self.classes_, yi = np.unique(y, return_inverse=True)
        if self.classes_.size < 2:
            raise ValueError("need at least two classes")
        utts = self._utts(X, yi, geometry_ids)
        base = ModelConfig("lfbe-baseline", hidden=self.hidden, layers=self.layers, classes=self.classes_.size)
        cfg = TrainConfig(lr=self.lr, batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                          classes=self.classes_.size, arch=self.arch)
        model = stage1_train_lfbe(utts, cfg, base).model
        if self.arch != "lfbe-baseline":
            model = stage2_train_single_dft(utts, model, cfg).model
        if self.arch in ("esf", "wtsf"):
            if not self.geometries:
                raise ValueError(f"{self.arch} needs the training geometries")
            bank = design_bank(list(self.geometries), look_directions(self.n_directions),
                               policy=LoadingPolicy("fixed", self.loading))
            model = stage3_joint_train_mc(utts, model, bank, cfg).model
        self.model_ = model
        return self

    def predict_proba(self, X, geometry_ids=None):
        check_is_fitted(self, "model_")
        posts = predict_utterances(self.model_, self._utts(X, None, geometry_ids))
        return np.stack([p.mean(axis=0) for p in posts])

    def predict(self, X, geometry_ids=None):
        check_is_fitted(self, "model_")
        posts = predict_utterances(self.model_, self._utts(X, None, geometry_ids))
        return self.classes_[[utterance_decision(p) for p in posts]]
