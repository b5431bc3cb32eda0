"""Acoustic model architectures built from the nnet kernels.

Four architectures share one classifier stack (LSTM layers, output affine,
softmax):

``lfbe-baseline``
    normalized log-mel features straight into the classifier.
``single-dft``
    one channel of normalized DFT coefficients -> power -> FE network.
``esf``
    multi-channel DFT -> spatial filtering (SF) layer -> fully connected
    combination over all beams and bins -> ReLU -> FE network.
``wtsf``
    multi-channel DFT -> SF layer -> 1 x D convolution tied across bins ->
    max-pool over the row -> FE network.

The SF layer holds one real ``2 x 2M`` block per (geometry, direction, bin),
initialized from superdirective weights, plus a (re, im) bias, and outputs
the power of each block's response. Its output grid has one row per bin and
one column per (geometry, direction), column index ``g * D + d``.

Frame layout of multi-channel input follows :mod:`mgsf.dsp`: channel-major,
bin-minor, (re, im) interleaved.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nnet
from .beamform import BeamformerBank, real_form
from .dsp import DFT_CONFIG, GlobalStats, StftConfig, mel_filterbank
from .geometry import ArrayGeometry

ARCHITECTURES = ("lfbe-baseline", "single-dft", "esf", "wtsf")
_ARCH_CODE = {name: i for i, name in enumerate(ARCHITECTURES)}


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    arch: str
    n_bins: int = 127
    n_mels: int = 64
    hidden: int = 64
    layers: int = 2
    classes: int = 4
    channels: int = 1
    n_directions: int = 12
    n_geometries: int = 0
    filters: int = 12
    pool_scope: str = "row"
    routing: str = "shared"

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("classifier needs at least one LSTM layer with hidden > 0")
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.pool_scope not in ("row", "per_geometry"):
            raise ValueError(f"pool_scope must be 'row' or 'per_geometry', got {self.pool_scope!r}")
        if self.routing not in ("shared", "dispatch"):
            raise ValueError(f"routing must be 'shared' or 'dispatch', got {self.routing!r}")
        if self.spatial and self.n_geometries < 1:
            raise ValueError("spatial architectures need at least one geometry")

    @property
    def spatial(self) -> bool:
        return self.arch in ("esf", "wtsf")

    @property
    def input_dim(self) -> int:
        if self.arch == "lfbe-baseline":
            return self.n_mels
        if self.arch == "single-dft":
            return 2 * self.n_bins
        return 2 * self.n_bins * self.channels

    @property
    def grid_width(self) -> int:
        return self.n_geometries * self.n_directions


# --------------------------------------------------------------------------
# spatial filtering layer


def init_sf_layer(bank: BeamformerBank) -> "OrderedDict[str, np.ndarray]":
    """SF parameters from a bank: ``sf.W{g}`` of shape ``(K, 2D, 2M)`` and ``sf.b{g}`` ``(K, 2D)``.

    ``W[k, 2d + o, :]`` is column ``o`` of ``real_form(w_{g,d,k})``, so that
    ``W[k] @ x_k`` stacks ``(Re Y, Im Y)`` for every look direction.
    """
    params = OrderedDict()
    for g, w in enumerate(bank.weights):
        D, K, M = w.shape
        R = real_form(w)  # (D, K, 2M, 2)
        params[f"sf.W{g}"] = np.ascontiguousarray(R.transpose(1, 0, 3, 2).reshape(K, 2 * D, 2 * M))
        params[f"sf.b{g}"] = np.zeros((K, 2 * D))
    return params


def _frames_by_bin(x, channels, n_bins):
    """``(N, 2KM)`` frames -> ``(K, N, 2M)``."""
    N = x.shape[0]
    return np.ascontiguousarray(
        x.reshape(N, channels, n_bins, 2).transpose(2, 0, 1, 3).reshape(n_bins, N, 2 * channels)
    )


def _bins_to_frames(xk, channels, n_bins):
    N = xk.shape[1]
    return xk.reshape(n_bins, N, channels, 2).transpose(1, 2, 0, 3).reshape(N, 2 * n_bins * channels)


def sf_forward(params, x, cfg: ModelConfig, geom_idx=None):
    """Power grid ``(..., K, G*D)`` for normalized frames ``(..., 2KM)``.

    With ``routing='dispatch'`` only the blocks of each utterance's geometry
    (``geom_idx``, one entry per leading batch row) respond; the others emit 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cfg.input_dim:
        raise ValueError(f"SF layer expects frames of length {cfg.input_dim}, got {x.shape[-1]}")
    lead = x.shape[:-1]
    K, D, G, M = cfg.n_bins, cfg.n_directions, cfg.n_geometries, cfg.channels
    xf = x.reshape(-1, x.shape[-1])
    N = xf.shape[0]
    xk = _frames_by_bin(xf, M, K)
    masks = _dispatch_masks(cfg, geom_idx, lead, N)
    grid = np.empty((N, K, G * D))
    zs = []
    for g in range(G):
        z = np.matmul(xk, params[f"sf.W{g}"].transpose(0, 2, 1))
        z += params[f"sf.b{g}"][:, None, :]
        if masks is not None:
            z *= masks[g][None, :, None]
        z = z.reshape(K, N, D, 2)
        zs.append(z)
        p = z[..., 0] ** 2
        p += z[..., 1] ** 2
        grid[:, :, g * D : (g + 1) * D] = p.transpose(1, 0, 2)
    return grid.reshape(lead + (K, G * D)), (xk, zs, masks, lead)


def sf_backward(ggrid, cache, params, cfg: ModelConfig):
    xk, zs, masks, lead = cache
    K, D, G, M = cfg.n_bins, cfg.n_directions, cfg.n_geometries, cfg.channels
    N = xk.shape[1]
    gg = ggrid.reshape(N, K, G, D)
    grads = {}
    gxk = np.zeros_like(xk)
    for g in range(G):
        gp = gg[:, :, g].transpose(1, 0, 2)  # (K, N, D)
        gz = zs[g] * (2.0 * gp)[..., None]
        gz = gz.reshape(K, N, 2 * D)
        if masks is not None:
            gz *= masks[g][None, :, None]
        grads[f"sf.W{g}"] = np.matmul(gz.transpose(0, 2, 1), xk)
        grads[f"sf.b{g}"] = gz.sum(axis=1)
        gxk += np.matmul(gz, params[f"sf.W{g}"])
    gx = _bins_to_frames(gxk, M, K).reshape(lead + (2 * K * M,))
    return gx, grads


def _dispatch_masks(cfg, geom_idx, lead, N):
    if cfg.routing == "shared":
        return None
    if geom_idx is None:
        raise ValueError("dispatch routing needs a geometry index per utterance")
    gi = np.asarray(geom_idx)
    if np.any((gi < 0) | (gi >= cfg.n_geometries)):
        raise ValueError(f"geometry index out of range [0, {cfg.n_geometries})")
    per_frame = np.broadcast_to(gi.reshape(gi.shape + (1,) * (len(lead) - gi.ndim)), lead).reshape(N)
    return [(per_frame == g).astype(float) for g in range(cfg.n_geometries)]


# --------------------------------------------------------------------------
# heads


def init_esf_head(cfg: ModelConfig) -> "OrderedDict[str, np.ndarray]":
    """Block-averaging init: output bin k is the mean of row k of the grid."""
    K, W = cfg.n_bins, cfg.grid_width
    active = cfg.n_directions if cfg.routing == "dispatch" else W
    A = np.zeros((K, K * W))
    for k in range(K):
        A[k, k * W : (k + 1) * W] = 1.0 / active
    return OrderedDict([("esf.A", A), ("esf.b", np.zeros(K))])


def esf_head_forward(params, grid):
    flat = grid.reshape(grid.shape[:-2] + (-1,))
    a, ca = nnet.affine_fwd(flat, params["esf.A"], params["esf.b"])
    y, cr = nnet.relu_fwd(a)
    return y, (ca, cr, grid.shape)


def esf_head_backward(gy, cache):
    ca, cr, shape = cache
    ga = nnet.relu_bwd(gy, cr)
    gflat, gA, gb = nnet.affine_bwd(ga, ca)
    return gflat.reshape(shape), {"esf.A": gA, "esf.b": gb}


def init_wtsf_head(cfg: ModelConfig, rng: np.random.Generator | None = None, noise: float = 1e-3):
    """One-hot direction selectors (filter f picks direction f mod D) plus optional noise."""
    F, D = cfg.filters, cfg.n_directions
    filt = np.zeros((F, D))
    filt[np.arange(F), np.arange(F) % D] = 1.0
    if noise and rng is not None:
        filt += noise * rng.standard_normal((F, D))
    return OrderedDict([("wtsf.filt", filt), ("wtsf.bias", np.zeros(F))])


def wtsf_head_forward(params, grid, cfg: ModelConfig):
    conv, cc = nnet.conv1xD_fwd(grid, params["wtsf.filt"], params["wtsf.bias"])
    if cfg.pool_scope == "row":
        y, cp = nnet.maxpool_fwd(conv)
        return y, (cc, cp, None)
    G, F = cfg.n_geometries, cfg.filters
    per_g, cp = nnet.maxpool_fwd(conv.reshape(conv.shape[:-1] + (G, F)))
    return per_g.mean(axis=-1), (cc, cp, G)


def wtsf_head_backward(gy, cache):
    cc, cp, G = cache
    if G is None:
        gconv = nnet.maxpool_bwd(gy, cp)
    else:
        gper = np.repeat(gy[..., None] / G, G, axis=-1)
        gconv = nnet.maxpool_bwd(gper, cp)
        gconv = gconv.reshape(gconv.shape[:-2] + (-1,))
    ggrid, gf, gb = nnet.conv1xD_bwd(gconv, cc)
    return ggrid, {"wtsf.filt": gf, "wtsf.bias": gb}


def init_fe(cfg: ModelConfig, stft: StftConfig = DFT_CONFIG) -> "OrderedDict[str, np.ndarray]":
    fb = mel_filterbank(cfg.n_mels, stft)
    if fb.matrix.shape[1] != cfg.n_bins:
        raise ValueError("mel filterbank bin count does not match the model")
    return OrderedDict([("fe.W", fb.matrix.copy()), ("fe.b", np.zeros(cfg.n_mels))])


def fe_forward(params, p):
    a, ca = nnet.affine_fwd(p, params["fe.W"], params["fe.b"])
    r, cr = nnet.relu_fwd(a)
    y, cl = nnet.log_fwd(r)
    return y, (ca, cr, cl)


def fe_backward(gy, cache):
    ca, cr, cl = cache
    gp, gW, gb = nnet.affine_bwd(nnet.relu_bwd(nnet.log_bwd(gy, cl), cr), ca)
    return gp, {"fe.W": gW, "fe.b": gb}


def esf_forward(params, grid):
    """Grid -> combination affine -> ReLU -> FE; returns ``(features, cache)``."""
    h, ch = esf_head_forward(params, grid)
    y, cf = fe_forward(params, h)
    return y, (ch, cf)


def wtsf_forward(params, grid, cfg: ModelConfig):
    h, ch = wtsf_head_forward(params, grid, cfg)
    y, cf = fe_forward(params, h)
    return y, (ch, cf)


def init_classifier(cfg: ModelConfig, rng: np.random.Generator) -> "OrderedDict[str, np.ndarray]":
    params = OrderedDict()
    n_in = cfg.n_mels
    for layer in range(cfg.layers):
        for name, val in nnet.lstm_init(n_in, cfg.hidden, rng).items():
            params[f"lstm{layer}.{name}"] = val
        n_in = cfg.hidden
    s = 1.0 / np.sqrt(cfg.hidden)
    params["out.W"] = rng.uniform(-s, s, (cfg.classes, cfg.hidden))
    params["out.b"] = np.zeros(cfg.classes)
    return params


# --------------------------------------------------------------------------
# full model


@dataclass
class AcousticModel:
    """Parameters plus fixed buffers for one architecture.

    ``buffers`` hold the non-trainable feature standardization applied in
    front of the classifier (``featnorm.mean``, ``featnorm.std``).
    """

    config: ModelConfig
    params: "OrderedDict[str, np.ndarray]"
    buffers: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    stats: GlobalStats | None = None
    geometries: list[ArrayGeometry] = field(default_factory=list)
    stft: StftConfig = DFT_CONFIG
    stage: int = 0
    stats_ref: str = ""

    def __post_init__(self):
        if "featnorm.mean" not in self.buffers:
            self.buffers["featnorm.mean"] = np.zeros(self.config.n_mels)
            self.buffers["featnorm.std"] = np.ones(self.config.n_mels)

    @property
    def arch(self) -> str:
        return self.config.arch

    @property
    def geometry_ids(self) -> list[str]:
        return [g.id for g in self.geometries]

    def n_parameters(self) -> dict:
        counts = OrderedDict()
        for name, val in self.params.items():
            group = name.split(".")[0]
            group = "sf" if group == "sf" else ("lstm" if group.startswith("lstm") else group)
            counts[group] = counts.get(group, 0) + val.size
        counts["total"] = sum(v.size for v in self.params.values())
        return counts

    def copy(self) -> "AcousticModel":
        return AcousticModel(
            self.config,
            OrderedDict((k, v.copy()) for k, v in self.params.items()),
            OrderedDict((k, v.copy()) for k, v in self.buffers.items()),
            self.stats,
            list(self.geometries),
            self.stft,
            self.stage,
            self.stats_ref,
        )

    # -- front end -------------------------------------------------------------

    def front_end(self, x, geom_idx=None):
        """Features fed to the classifier, before standardization: ``(B, T, n_mels)``."""
        cfg, p = self.config, self.params
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != cfg.input_dim:
            raise ValueError(
                f"{cfg.arch} model expects {cfg.input_dim}-dim frames, got {x.shape[-1]}"
            )
        if cfg.arch == "lfbe-baseline":
            return x, ("lfbe",)
        if cfg.arch == "single-dft":
            pw, cp = nnet.pow_pairs_fwd(x)
            y, cf = fe_forward(p, pw)
            return y, ("single", cp, cf)
        grid, cs = sf_forward(p, x, cfg, geom_idx)
        if cfg.arch == "esf":
            y, ch = esf_forward(p, grid)
        else:
            y, ch = wtsf_forward(p, grid, cfg)
        return y, ("spatial", cs, ch)

    def _front_end_backward(self, gy, cache):
        cfg, p = self.config, self.params
        kind = cache[0]
        if kind == "lfbe":
            return {}
        if kind == "single":
            _, grads = fe_backward(gy, cache[2])
            return grads
        _, cs, (chead, cf) = cache
        gh, grads = fe_backward(gy, cf)
        if cfg.arch == "esf":
            ggrid, gh_grads = esf_head_backward(gh, chead)
        else:
            ggrid, gh_grads = wtsf_head_backward(gh, chead)
        grads.update(gh_grads)
        _, gsf = sf_backward(ggrid, cs, p, cfg)
        grads.update(gsf)
        return grads

    # -- full pass -------------------------------------------------------------

    def forward(self, x, geom_idx=None):
        """Logits ``(B, T, C)`` for frames ``(B, T, input_dim)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        feats, cfe = self.front_end(x, geom_idx)
        std = self.buffers["featnorm.std"]
        h = (feats - self.buffers["featnorm.mean"]) / std
        caches = []
        for layer in range(self.config.layers):
            lp = {n: self.params[f"lstm{layer}.{n}"] for n in ("Wx", "Wh", "b")}
            h, _, cl = nnet.lstm_fwd(h, lp)
            caches.append(cl)
        logits, co = nnet.affine_fwd(h, self.params["out.W"], self.params["out.b"])
        return logits, (cfe, caches, co)

    def backward(self, glogits, cache) -> dict:
        cfe, caches, co = cache
        gh, gW, gb = nnet.affine_bwd(glogits, co)
        grads = {"out.W": gW, "out.b": gb}
        for layer in range(self.config.layers - 1, -1, -1):
            gh, lg, _ = nnet.lstm_bwd(gh, caches[layer])
            for n, v in lg.items():
                grads[f"lstm{layer}.{n}"] = v
        gfeat = gh / self.buffers["featnorm.std"]
        grads.update(self._front_end_backward(gfeat, cfe))
        return grads

    def loss(self, x, labels, geom_idx=None) -> float:
        logits, _ = self.forward(x, geom_idx)
        return nnet.softmax_xent_fwd(logits, np.asarray(labels))[0]

    def loss_and_grads(self, x, labels, geom_idx=None):
        logits, cache = self.forward(x, geom_idx)
        loss, cx = nnet.softmax_xent_fwd(logits, np.asarray(labels))
        return loss, self.backward(nnet.softmax_xent_bwd(cx), cache)

    def posteriors(self, x, geom_idx=None) -> np.ndarray:
        logits, _ = self.forward(x, geom_idx)
        return nnet.softmax(logits)


def build_model(
    cfg: ModelConfig,
    seed: int = 0,
    bank: BeamformerBank | None = None,
    stats: GlobalStats | None = None,
    wtsf_noise: float = 1e-3,
) -> AcousticModel:
    """Freshly initialized model; spatial architectures need ``bank``."""
    rng = np.random.default_rng(seed)
    params = OrderedDict()
    geoms = []
    if cfg.spatial:
        if bank is None:
            raise ValueError(f"{cfg.arch} needs a beamformer bank for initialization")
        _check_bank(cfg, bank)
        params.update(init_sf_layer(bank))
        geoms = list(bank.geometries)
        if cfg.arch == "esf":
            params.update(init_esf_head(cfg))
        else:
            params.update(init_wtsf_head(cfg, rng, wtsf_noise))
    if cfg.arch != "lfbe-baseline":
        params.update(init_fe(cfg))
    params.update(init_classifier(cfg, rng))
    return AcousticModel(cfg, params, stats=stats, geometries=geoms)


def _check_bank(cfg: ModelConfig, bank: BeamformerBank):
    if bank.n_geometries != cfg.n_geometries or bank.n_directions != cfg.n_directions:
        raise ValueError(
            f"bank has G={bank.n_geometries}, D={bank.n_directions}; model expects "
            f"G={cfg.n_geometries}, D={cfg.n_directions}"
        )
    if bank.n_bins != cfg.n_bins:
        raise ValueError(f"bank has {bank.n_bins} bins, model expects {cfg.n_bins}")
    chans = {g.n_channels for g in bank.geometries}
    if cfg.routing == "shared" and chans != {cfg.channels}:
        raise ValueError("shared routing needs every geometry to have the model's channel count")
    if cfg.routing == "dispatch" and len(chans) != 1:
        raise ValueError("geometries with different channel counts are not supported in one layer")


def spatial_config(bank: BeamformerBank, arch: str, base: ModelConfig | None = None, **kw) -> ModelConfig:
    """Config for an ESF/WTSF model sized from ``bank``; classifier dims follow ``base``."""
    base = base or ModelConfig("single-dft")
    return replace(
        base,
        arch=arch,
        channels=bank.geometries[0].n_channels,
        n_geometries=bank.n_geometries,
        n_directions=bank.n_directions,
        n_bins=bank.n_bins,
        **kw,
    )


def utterance_decision(posteriors) -> int:
    """Majority vote of per-frame argmax; ties go to the lowest class index."""
    post = np.asarray(posteriors)
    votes = np.bincount(np.argmax(post, axis=-1).ravel(), minlength=post.shape[-1])
    return int(np.argmax(votes))


# --------------------------------------------------------------------------
# checkpoint file
#
#   "MCAM" | u32 version | u8 architecture code | u32 meta length | meta JSON
#   u32 tensor count | per tensor: u16 name length, name, u8 ndim, u32 dims
#   f32 little-endian values of every tensor, in table order
#
# Table order: trainable parameters in model order, then buffers, then the
# global DFT statistics (``stats.mean``, ``stats.var``) when present.

CHECKPOINT_MAGIC = b"MCAM"
CHECKPOINT_VERSION = 1


def checkpoint_bytes(model: AcousticModel) -> bytes:
    cfg = model.config
    meta = {
        "config": asdict(cfg),
        "stft": asdict(model.stft),
        "geometries": [g.to_dict() for g in model.geometries],
        "stage": model.stage,
        "stats_ref": model.stats_ref,
        "params": list(model.params),
        "buffers": list(model.buffers),
    }
    meta_raw = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    tensors = list(model.params.items()) + list(model.buffers.items())
    if model.stats is not None:
        tensors += [("stats.mean", model.stats.mean), ("stats.var", model.stats.variance)]
    out = [CHECKPOINT_MAGIC, struct.pack("<IB", CHECKPOINT_VERSION, _ARCH_CODE[cfg.arch])]
    out.append(struct.pack("<I", len(meta_raw)) + meta_raw)
    out.append(struct.pack("<I", len(tensors)))
    for name, val in tensors:
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", val.ndim))
        out.append(struct.pack(f"<{val.ndim}I", *val.shape))
    for _, val in tensors:
        out.append(np.ascontiguousarray(val, dtype="<f4").tobytes())
    return b"".join(out)


def model_from_bytes(raw: bytes, source: str = "<bytes>") -> AcousticModel:
    def fail(msg):
        raise CheckpointError(f"{source}: {msg}")

    class _Reader:
        pos = 0

        def take(self, n):
            if self.pos + n > len(raw):
                fail("truncated checkpoint")
            chunk = raw[self.pos : self.pos + n]
            self.pos += n
            return chunk

        def unpack(self, fmt):
            return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    r = _Reader()
    if r.take(4) != CHECKPOINT_MAGIC:
        fail("not a model checkpoint (bad magic)")
    version, code = r.unpack("<IB")
    if version != CHECKPOINT_VERSION:
        fail(f"unsupported checkpoint version {version}; this build reads version {CHECKPOINT_VERSION}")
    if code >= len(ARCHITECTURES):
        fail(f"unknown architecture code {code}")
    (mlen,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(mlen).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        fail(f"corrupt metadata ({exc})")
    (count,) = r.unpack("<I")
    table = []
    for _ in range(count):
        (nlen,) = r.unpack("<H")
        try:
            name = r.take(nlen).decode()
        except UnicodeDecodeError:
            fail("corrupt tensor name")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        table.append((name, shape))
    tensors = {}
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").astype(float).reshape(shape)
    if r.pos != len(raw):
        fail("trailing bytes after tensor data")
    try:
        cfg = ModelConfig(**meta["config"])
        if _ARCH_CODE[cfg.arch] != code:
            fail("architecture code disagrees with metadata")
        params = OrderedDict((n, tensors[n]) for n in meta["params"])
        buffers = OrderedDict((n, tensors[n]) for n in meta["buffers"])
        stats = GlobalStats(tensors["stats.mean"], tensors["stats.var"]) if "stats.mean" in tensors else None
        model = AcousticModel(
            cfg,
            params,
            buffers,
            stats,
            [ArrayGeometry.from_dict(g) for g in meta["geometries"]],
            StftConfig(**meta["stft"]),
            int(meta["stage"]),
            meta["stats_ref"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        fail(f"invalid checkpoint contents ({exc!r})")
    if not all(np.all(np.isfinite(v)) for v in tensors.values()):
        fail("non-finite parameter values")
    return model


def save_checkpoint(model: AcousticModel, path: str | Path) -> None:
    Path(path).write_bytes(checkpoint_bytes(model))


def load_checkpoint(path: str | Path) -> AcousticModel:
    return model_from_bytes(Path(path).read_bytes(), str(path))


def round_to_checkpoint_precision(model: AcousticModel) -> AcousticModel:
    """The model as it would come back from disk (float32-rounded values)."""
    return model_from_bytes(checkpoint_bytes(model))
