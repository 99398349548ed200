"""Command-line entry point: ``contrawr <command> [options] [--section.key value ...]``.

Commands: synth, pretext, probe, augment-demo, compare. Any schema key can be
overridden as ``--section.key value``; ``--config`` loads an INI file first.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .augment import add_noise, bandpass, flip_channels, rotate
from .config import SCHEMA, RunConfig, load_config
from .errors import CompatibilityError, ConfigError, ContraWRError, DataError, NumericError, ParameterError
from .probe import embed, export_embeddings, format_report
from .signals import save_epoch_file
from .spectral import feature_shape
from .training import PretextConfig, load_state, run_pretext

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("contrawr")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    d = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="INI file with [section] key = value entries", **d)
    p.add_argument("--seed", type=int, help="sets data.seed, split.seed and train.seed", **d)
    p.add_argument("--out", type=Path, help="output directory", **d)
    p.add_argument("-v", "--verbose", action="store_true", **d)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contrawr", description=__doc__.splitlines()[0], parents=[_global_flags(False)])
    common = _global_flags(True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset directory")
    p.add_argument("--verify", action="store_true", help="check an existing directory against its manifest")

    p = sub.add_parser("pretext", parents=[common], help="self-supervised pretext training")
    p.add_argument("--data", type=Path, help="dataset directory (default: generate from data.*)")
    p.add_argument("--variant", help="loss variant: contrawr, contrawr_plus or nce")
    p.add_argument("--epochs", type=int, help="number of training epochs")
    p.add_argument("--resume", type=Path, help="checkpoint to resume from")

    p = sub.add_parser("probe", parents=[common], help="linear probe on a frozen encoder")
    p.add_argument("--data", type=Path)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", type=Path)
    src.add_argument("--untrained", action="store_true", help="probe a freshly initialized encoder")
    p.add_argument("--export-embeddings", type=Path, metavar="CSV")

    p = sub.add_parser("augment-demo", parents=[common], help="write before/after pairs for each augmentation")
    p.add_argument("--data", type=Path)
    p.add_argument("--index", type=int, default=0, help="which epoch of the dataset to use")

    p = sub.add_parser("compare", parents=[common], help="probe accuracy table over variants and seeds")
    p.add_argument("--data", type=Path)
    p.add_argument(
        "--ablate",
        nargs="*",
        choices=sorted(pipeline.ABLATION_GRID),
        help="also run the one-at-a-time ablation grid (all parameters when none are named)",
    )
    return parser


def parse_overrides(extra) -> dict:
    """``--section.key value`` / ``--section.key=value`` pairs from leftover arguments."""
    out, i = {}, 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--") or "." not in token:
            raise ConfigError(f"unrecognized argument: {token}")
        key, eq, value = token[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for --{key}")
            value = extra[i + 1]
            i += 1
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key: {key}")
        out[key] = value
        i += 1
    return out


def resolve_config(args, extra):
    """Return ``(config, explicitly_set_keys)``."""
    overrides = parse_overrides(extra)
    if args.seed is not None:
        for key in ("data.seed", "split.seed", "train.seed"):
            overrides.setdefault(key, args.seed)
    rc = load_config(args.config, overrides)
    explicit = set(overrides)
    if args.config is not None:
        explicit |= {k for k, v in load_config(args.config).items() if v != RunConfig()[k]}
    return rc, explicit


def _dataset(args, rc: RunConfig):
    if getattr(args, "data", None) is not None:
        return pipeline.load_dataset_dir(args.data, rc["data.clip_bound"])
    return pipeline.synthetic_from_config(rc)


def _out(args, default: str) -> Path:
    out = args.out if args.out is not None else Path(default)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_synth(args, rc: RunConfig) -> int:
    out = args.out if args.out is not None else Path("data")
    if args.verify:
        bad = pipeline.verify_dataset_dir(out)
        for name, reason in bad:
            print(f"BAD {out / name}: {reason}")
        if bad:
            raise DataError(f"{len(bad)} file(s) failed verification in {out}")
        print(f"ok: every file in {out / pipeline.MANIFEST} verified")
        return EXIT_OK
    manifest = pipeline.write_dataset_dir(pipeline.synthetic_from_config(rc), out)
    (out / "config.ini").write_text(rc.to_ini())
    print(manifest)
    return EXIT_OK


def cmd_pretext(args, rc: RunConfig) -> int:
    if args.variant is not None:
        rc.update_from({"loss.variant": args.variant})
    if args.epochs is not None:
        rc.update_from({"train.epochs": args.epochs})
    config = PretextConfig.from_run_config(rc)
    rc.encoder((1, 1, 1))  # validates the model section early
    split = pipeline.split_from_config(_dataset(args, rc), rc)
    out = _out(args, "runs/pretext")
    (out / "config.ini").write_text(rc.to_ini())
    result = run_pretext(split, config, out, resume_from=args.resume, run_config=rc)
    print(result.checkpoint)
    return EXIT_OK


def _check_compatible(saved: RunConfig, rc: RunConfig, explicit, in_shape, data_shape):
    for key in ("stft.window", "stft.hop", "stft.log_amplitude"):
        if key in explicit and rc[key] != saved[key]:
            raise CompatibilityError(f"{key} = {rc[key]} but the checkpoint was trained with {saved[key]}")
    if tuple(in_shape) != tuple(data_shape):
        raise CompatibilityError(f"checkpoint expects features {tuple(in_shape)}, data gives {tuple(data_shape)}")


def cmd_probe(args, rc: RunConfig, explicit) -> int:
    dataset = _dataset(args, rc)
    C, N = dataset.shape
    if args.untrained:
        shape = feature_shape(C, N, rc["stft.window"], rc["stft.hop"])
        encoder = pipeline.untrained_encoder(rc, shape)
        source = "untrained"
    else:
        state, saved, in_shape = load_state(args.checkpoint)
        feats = feature_shape(C, N, saved["stft.window"], saved["stft.hop"])
        _check_compatible(saved, rc, explicit, in_shape, feats)
        # the encoder's own featurization wins; probe settings come from the command line
        rc = RunConfig(saved).update_from({k: rc[k] for k in explicit})
        encoder = state.online.encoder.eval()
        source = str(args.checkpoint)
    split = pipeline.split_from_config(dataset, rc)
    acc, cm, model = pipeline.probe_encoder(encoder, split, rc)
    out = _out(args, "runs/probe")
    extra = {"encoder": source, **{f"config.{k}": rc.text(k) for k in SCHEMA}}
    report = format_report(acc, cm, model, extra)
    (out / "probe_report.txt").write_text(report)
    if args.export_embeddings is not None:
        export_embeddings(embed(encoder, list(split.test.epochs), rc.stft()), args.export_embeddings)
    print(report, end="")
    return EXIT_OK


def cmd_augment_demo(args, rc: RunConfig) -> int:
    dataset = _dataset(args, rc)
    if not 0 <= args.index < len(dataset):
        raise ConfigError(f"--index {args.index} outside 0..{len(dataset) - 1}")
    epoch = dataset.epochs[args.index]
    policy = rc.augment_policy()
    policy.validate_for(epoch.n_channels, epoch.sample_rate_hz)
    rng = np.random.default_rng(rc["train.seed"])
    results = {f"bandpass_{lo:g}-{hi:g}Hz": bandpass(epoch, lo, hi) for lo, hi in policy.bandpass_bands}
    for mode in ("high", "low"):
        results[f"noising_{mode}"] = add_noise(epoch, policy.noise_degree, mode, rng, policy.clip_bound)
    if policy.flip_pairs:
        results["flipping"] = flip_channels(epoch, policy.flip_pairs)
    results["rotation"] = rotate(epoch, rng=rng)
    out = _out(args, "runs/augment_demo")
    save_epoch_file(epoch, out / "original.epoc")
    for name, augmented in results.items():
        save_epoch_file(epoch, out / f"{name}_before.epoc")
        save_epoch_file(augmented, out / f"{name}_after.epoc")
        print(out / f"{name}_after.epoc")
    return EXIT_OK


def cmd_compare(args, rc: RunConfig) -> int:
    dataset = _dataset(args, rc)
    out = _out(args, "runs/compare")
    (out / "config.ini").write_text(rc.to_ini())
    results = pipeline.compare(dataset, rc, log=log.info)
    table = pipeline.compare_table(results)
    (out / "compare.md").write_text(table)
    print(table, end="")
    if args.ablate is not None:
        names = args.ablate or list(pipeline.ABLATION_GRID)
        grid = {k: pipeline.ABLATION_GRID[k] for k in names}
        seeds = range(rc["train.seed"], rc["train.seed"] + rc["compare.seeds"])
        rows = pipeline.ablation(dataset, rc, grid, seeds=tuple(seeds), log=log.info)
        table = pipeline.ablation_table(rows)
        (out / "ablation.md").write_text(table)
        print()
        print(table, end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        rc, explicit = resolve_config(args, extra)
        if args.command == "synth":
            return cmd_synth(args, rc)
        if args.command == "pretext":
            return cmd_pretext(args, rc)
        if args.command == "probe":
            return cmd_probe(args, rc, explicit)
        if args.command == "augment-demo":
            return cmd_augment_demo(args, rc)
        return cmd_compare(args, rc)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContraWRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
