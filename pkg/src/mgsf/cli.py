"""Command-line interface: ``mgsf <subcommand> ...``.

Exit status is 0 on success, 2 for usage and input errors (bad flags,
missing or malformed files, channel mismatches) and 1 for anything that
fails at run time.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .audio import AudioFormatError, read_wav, write_wav
from .beamform import (
    BankFormatError,
    LoadingPolicy,
    design_bank,
    enhance_utterance,
    load_bank,
    save_bank,
    white_noise_power,
)
from .dsp import DFT_CONFIG, istft, load_stats, stft
from .geometry import (
    ArrayGeometry,
    GeometryError,
    circular_array,
    linear_pair,
    load_geometry,
    look_directions,
)
from .mcmodel import CheckpointError, ModelConfig, load_checkpoint, save_checkpoint
from .simkit import ToySignalSpec, make_toy_dataset, write_corpus
from .trainer import (
    ManifestError,
    TrainConfig,
    dissimilarity_rows,
    evaluate,
    read_manifest,
    stage1_train_lfbe,
    stage2_train_single_dft,
    stage3_joint_train_mc,
    write_metrics,
    write_plot_data,
)

GEOMETRIES_FILE = "geometries.json"


class UsageError(Exception):
    pass


_INPUT_ERRORS = (
    UsageError,
    FileNotFoundError,
    IsADirectoryError,
    GeometryError,
    AudioFormatError,
    BankFormatError,
    CheckpointError,
    ManifestError,
    json.JSONDecodeError,
)


# --------------------------------------------------------------------------
# helpers


def resolve_geometry(spec: str) -> ArrayGeometry:
    """A geometry JSON file, or a preset: ``circular7`` or ``pair<mm>`` (e.g. ``pair73``)."""
    path = Path(spec)
    if path.suffix == ".json" or path.exists():
        return load_geometry(path)
    if spec == "circular7":
        return circular_array()
    if spec.startswith("pair"):
        try:
            mm = float(spec[4:].removesuffix("mm"))
        except ValueError:
            pass
        else:
            return linear_pair(mm / 1000.0, f"pair{spec[4:].removesuffix('mm')}mm")
    raise UsageError(f"geometry {spec!r}: no such file and not a preset (circular7, pair<mm>)")


def _write_geometries(geoms, out_dir: Path):
    path = out_dir / GEOMETRIES_FILE
    known = {}
    if path.exists():
        known = {g["id"]: g for g in json.loads(path.read_text())}
    for g in geoms:
        known[g.id] = g.to_dict()
    path.write_text(json.dumps(list(known.values()), indent=1))


def _read_geometries(manifest_path: Path, extra) -> dict:
    out = {}
    path = manifest_path.parent / GEOMETRIES_FILE
    if path.exists():
        for g in json.loads(path.read_text()):
            geom = ArrayGeometry.from_dict(g)
            out[geom.id] = geom
    for spec in extra or ():
        geom = resolve_geometry(spec)
        out[geom.id] = geom
    return out


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_design_bank(args) -> int:
    geoms = [resolve_geometry(s) for s in args.geometry]
    if args.wng_cap is not None:
        policy = LoadingPolicy.wng_cap_db(args.wng_cap)
    else:
        policy = LoadingPolicy("fixed", args.loading)
    bank = design_bank(geoms, look_directions(args.directions), DFT_CONFIG, policy)
    save_bank(bank, args.out)
    freqs = DFT_CONFIG.bin_frequencies
    print(f"wrote {args.out}: G={bank.n_geometries} D={bank.n_directions} K={bank.n_bins}")
    print("geometry,bin,freq_hz,wng_db_min,wng_db_mean,wng_db_max,loading_max,cap_reached")
    for g, geom in enumerate(bank.geometries):
        wng = 10 * np.log10(white_noise_power(bank.weights[g]))  # (D, K)
        for k in range(bank.n_bins):
            col = wng[:, k]
            reached = bool(np.all(bank.cap_reached[g][:, k])) if bank.cap_reached is not None else True
            print(
                f"{geom.id},{k + 1},{freqs[k]:.1f},{col.min():.2f},{col.mean():.2f},{col.max():.2f},"
                f"{bank.loadings[g][:, k].max():.3g},{int(reached)}"
            )
    return 0


def cmd_simulate(args) -> int:
    geoms = [resolve_geometry(s) for s in args.geometry]
    snrs = _parse_floats(args.snr)
    spec = ToySignalSpec(cue_level_db=args.cue_level_db)
    out = Path(args.out)
    utts = make_toy_dataset(
        geoms,
        args.per_class,
        snrs,
        classes=args.classes,
        seed=args.seed,
        split=args.split,
        duration=args.duration,
        spec=spec,
    )
    manifest = write_corpus(utts, out, manifest=args.manifest_name)
    _write_geometries(geoms, out)
    print(f"wrote {len(utts)} utterances and {manifest}")
    return 0


def cmd_enhance(args) -> int:
    bank = load_bank(args.bank)
    audio, rate = read_wav(args.input, expected_rate=int(bank.cfg.sample_rate))
    if args.geometry_id is not None:
        try:
            g = bank.index_of(args.geometry_id)
        except (KeyError, ValueError):
            raise UsageError(f"geometry {args.geometry_id!r} not in bank {bank.geometry_ids}") from None
    else:
        matches = [i for i, geom in enumerate(bank.geometries) if geom.n_channels == audio.shape[0]]
        if not matches:
            raise UsageError(
                f"input has {audio.shape[0]} channels; bank geometries have "
                f"{[geom.n_channels for geom in bank.geometries]}"
            )
        g = matches[0]
    if bank.geometries[g].n_channels != audio.shape[0]:
        raise UsageError(
            f"input has {audio.shape[0]} channels, geometry {bank.geometries[g].id} has "
            f"{bank.geometries[g].n_channels}"
        )
    spectra = stft(audio, bank.cfg)
    Y, idx = enhance_utterance(bank, spectra, g, window=args.smoothing)
    y = istft(Y, audio.shape[1], bank.cfg)
    write_wav(args.output, y, rate, fmt=args.format)
    if args.trace:
        with open(args.trace, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame", "beam", "azimuth_deg"])
            for t, d in enumerate(idx):
                w.writerow([t, int(d), f"{math.degrees(bank.directions[d].azimuth):.1f}"])
    print(f"wrote {args.output} ({len(idx)} frames)")
    return 0


def cmd_train(args) -> int:
    manifest = read_manifest(args.manifest, args.classes)
    utts = [u for u in manifest.load() if u.split in ("train", "val", "dev")]
    if not utts:
        raise UsageError(f"{args.manifest}: no train/val entries")
    cfg = TrainConfig(
        stage=args.stage,
        lr=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        classes=args.classes,
        arch=args.arch,
    )
    log = (lambda msg: print(msg, flush=True)) if args.verbose else None
    if args.stage == 1:
        base = ModelConfig("lfbe-baseline", hidden=args.hidden, layers=args.layers, classes=args.classes)
        res = stage1_train_lfbe(utts, cfg, base, log)
    else:
        if not args.init:
            raise UsageError(f"stage {args.stage} needs --init with the previous stage's checkpoint")
        init = load_checkpoint(args.init)
        if args.stage == 2:
            res = stage2_train_single_dft(utts, init, cfg, log)
        else:
            if not args.bank:
                raise UsageError("stage 3 needs --bank")
            if init.stage != 2:
                raise UsageError(f"{args.init} is a stage-{init.stage} checkpoint; stage 3 needs stage 2")
            bank = load_bank(args.bank)
            res = stage3_joint_train_mc(utts, init, bank, cfg, log, pool_scope=args.pool_scope,
                                        routing=args.routing)
    save_checkpoint(res.model, args.out)
    if args.history:
        with open(args.history, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            w.writerow([0, f"{res.initial_loss:.6f}", "", ""])
            for h in res.history:
                w.writerow([h["epoch"], f"{h['train_loss']:.6f}", f"{h['val_loss']:.6f}", f"{h['lr']:.3g}"])
    print(f"wrote {args.out}: stage {res.model.stage} {res.model.arch}, "
          f"initial loss {res.initial_loss:.4f}, final loss {res.final_loss:.4f}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    manifest = read_manifest(args.manifest, model.config.classes)
    utts = manifest.load(args.split)
    if not utts:
        raise UsageError(f"{args.manifest}: no entries in split {args.split!r}")
    keys = tuple(k for k in args.group_by.split(",") if k)
    geoms = _read_geometries(Path(args.manifest), args.geometry)
    test_geoms = [geoms[i] for i in sorted({u.geometry_id for u in utts}) if i in geoms]
    if "mismatch" in keys and not model.geometries:
        keys = tuple(k for k in keys if k != "mismatch")
    baseline = None
    if args.baseline:
        base_model = load_checkpoint(args.baseline)
        baseline = evaluate(base_model, utts, keys, test_geometries=test_geoms)
    results = evaluate(model, utts, keys, baseline=baseline, test_geometries=test_geoms)
    write_metrics(results, args.metrics)
    if args.plot_data:
        write_plot_data(dissimilarity_rows(model, results, test_geoms), args.plot_data)
    for r in results.values():
        rerr = "" if math.isnan(r.rerr) else f" rerr={r.rerr:.3f}"
        print(f"{r.group}: frames={r.frames} frame_acc={r.frame_acc:.4f} utt_acc={r.utt_acc:.4f}{rerr}")
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.file)
    magic = path.read_bytes()[:4]
    if magic == b"MCAM":
        model = load_checkpoint(path)
        cfg = model.config
        print(f"checkpoint {path}: architecture {cfg.arch}, stage {model.stage}")
        print("config " + json.dumps({k: getattr(cfg, k) for k in cfg.__dataclass_fields__}, sort_keys=True))
        if model.geometries:
            print("geometries " + ", ".join(model.geometry_ids))
        for group, n in model.n_parameters().items():
            print(f"params {group} {n}")
    elif magic == b"MGBF":
        bank = load_bank(path)
        print(f"bank {path}: G={bank.n_geometries} D={bank.n_directions} K={bank.n_bins}")
        print(f"policy {bank.policy.mode} {bank.policy.value}")
        for geom in bank.geometries:
            print(f"geometry {geom.id} M={geom.n_channels}")
        print("directions_deg " + " ".join(f"{math.degrees(d.azimuth):.1f}" for d in bank.directions))
    elif magic == b"MGST":
        stats = load_stats(path)
        print(f"stats {path}: dims={stats.dims} bins={stats.n_bins}")
    else:
        raise UsageError(f"{path}: unrecognized file type")
    return 0


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="BLAS threads (default 1)")
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of default flag values")

    p = argparse.ArgumentParser(prog="mgsf", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design-bank", parents=[common], help="design superdirective beamformer weights")
    d.add_argument("--geometry", nargs="+", required=True, help="geometry JSON files or presets")
    d.add_argument("--directions", type=int, default=12)
    grp = d.add_mutually_exclusive_group()
    grp.add_argument("--loading", type=float, default=0.01, help="fixed diagonal loading")
    grp.add_argument("--wng-cap", type=float, default=None, help="cap white noise power at this many dB")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_design_bank)

    s = sub.add_parser("simulate", parents=[common], help="render the toy classification corpus")
    s.add_argument("--geometry", nargs="+", required=True)
    s.add_argument("--per-class", type=int, default=10)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--snr", default="5,15,25", help="comma-separated SNR grid in dB")
    s.add_argument("--duration", type=float, default=1.0)
    s.add_argument("--split", default="train")
    s.add_argument("--cue-level-db", type=float, default=ToySignalSpec.cue_level_db)
    s.add_argument("--manifest-name", default="manifest.csv")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("enhance", parents=[common], help="fixed-beam enhancement of a WAV file")
    e.add_argument("--bank", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--output", required=True)
    e.add_argument("--trace", help="CSV file for the selected beam per frame")
    e.add_argument("--geometry-id")
    e.add_argument("--smoothing", type=int, default=10, help="beam selection window in frames")
    e.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    e.set_defaults(func=cmd_enhance)

    t = sub.add_parser("train", parents=[common], help="run one training stage")
    t.add_argument("--manifest", required=True)
    t.add_argument("--stage", type=int, choices=(1, 2, 3), required=True)
    t.add_argument("--arch", choices=("esf", "wtsf"), default="wtsf", help="stage-3 architecture")
    t.add_argument("--init", help="checkpoint of the previous stage")
    t.add_argument("--bank", help="beamformer bank (stage 3)")
    t.add_argument("--classes", type=int, default=4)
    t.add_argument("--hidden", type=int, default=64)
    t.add_argument("--layers", type=int, default=2)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--pool-scope", choices=("row", "per_geometry"), default="row")
    t.add_argument("--routing", choices=("shared", "dispatch"), default="shared")
    t.add_argument("--history", help="CSV file for the per-epoch losses")
    t.add_argument("--verbose", action="store_true")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    v = sub.add_parser("eval", parents=[common], help="grouped accuracy and RERR")
    v.add_argument("--checkpoint", required=True)
    v.add_argument("--manifest", required=True)
    v.add_argument("--split", default="test")
    v.add_argument("--baseline", help="checkpoint whose errors define RERR")
    v.add_argument("--group-by", default="snr,geometry,mismatch")
    v.add_argument("--geometry", nargs="*", help="extra geometry files/presets for test geometry ids")
    v.add_argument("--metrics", required=True)
    v.add_argument("--plot-data")
    v.set_defaults(func=cmd_eval)

    i = sub.add_parser("inspect", parents=[common], help="describe a checkpoint, bank or stats file")
    i.add_argument("file")
    i.set_defaults(func=cmd_inspect)
    return p


def _apply_config(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config``; explicit flags still win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subs), None)
    if known.config and command:
        try:
            values = json.loads(Path(known.config).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file {known.config} not found") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {known.config}: {exc}") from None
        if not isinstance(values, dict):
            raise UsageError(f"config file {known.config} must hold a JSON object")
        values = {k.replace("-", "_"): v for k, v in values.items()}
        sub = subs[command]
        known_dests = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known_dests)
        if unknown:
            raise UsageError(f"config file {known.config}: unknown keys {unknown}")
        sub.set_defaults(**values)
        for action in sub._actions:
            if action.dest in values:
                action.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"mgsf: error: {exc}", file=sys.stderr)
        return 2
    args.seed = getattr(args, "seed", 0)
    args.threads = getattr(args, "threads", 1)
    if args.seed < 0 or args.threads < 1:
        print("mgsf: error: --seed must be >= 0 and --threads >= 1", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"mgsf: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"mgsf: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
