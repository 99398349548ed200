"""End-to-end pipeline pieces shared by the CLI and the experiment scripts.

A dataset directory holds one EPOC1 file per epoch plus ``manifest.csv``
(``file,subject_id,label,sha256``). Comparison cells run pretext training
and a linear probe for one (variant, seed) pair.
"""

from __future__ import annotations

import csv
import hashlib
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import DataError, FormatError
from .nn.layers import ContraWRNet
from .probe import embed, evaluate, fit_logistic
from .signals import Dataset, Split, generate_synthetic_dataset, load_epoch_file, save_epoch_file, split_subjects
from .spectral import feature_shape
from .training import PretextConfig, run_pretext

MANIFEST = "manifest.csv"
MANIFEST_HEADER = ("file", "subject_id", "label", "sha256")
BASELINE = "untrained"

# one-at-a-time ablation values; delta reaches past the sigma = 2 margin bound (0.3935)
ABLATION_GRID = {
    "sigma": (0.5, 2.0, 10.0),
    "temperature": (0.5, 2.0, 10.0),
    "delta": (0.1, 0.2, 0.3, 0.39, 0.45),
    "batch_size": (32, 64, 128),
}
ABLATION_KEYS = {"sigma": "loss.sigma", "temperature": "loss.temperature", "delta": "loss.delta", "batch_size": "train.batch_size"}


# dataset directories -----------------------------------------------------------


def synthetic_from_config(rc: RunConfig) -> Dataset:
    return generate_synthetic_dataset(
        rc["data.n_subjects"],
        rc["data.epochs_per_subject"],
        C=rc["data.channels"],
        N=rc["data.samples"],
        fs=rc["data.fs"],
        seed=rc["data.seed"],
        clip_bound=rc["data.clip_bound"],
    )


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset_dir(dataset: Dataset, out_dir) -> Path:
    """Write every epoch as ``<subject>_<index>.epoc`` and the manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = []
        counters = {}
        for e in dataset.epochs:
            k = counters[e.subject_id] = counters.get(e.subject_id, -1) + 1
            name = f"{e.subject_id}_{k:05d}.epoc"
            save_epoch_file(e, out_dir / name)
            rows.append((name, e.subject_id, e.label or "", _sha256(out_dir / name)))
        manifest = out_dir / MANIFEST
        with open(manifest, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(MANIFEST_HEADER)
            w.writerows(rows)
    except OSError as exc:
        raise DataError(f"cannot write dataset to {out_dir}: {exc}") from exc
    return manifest


def _manifest_rows(data_dir: Path):
    path = data_dir / MANIFEST
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
                raise FormatError(f"{path}: header must be {','.join(MANIFEST_HEADER)}")
            return list(reader)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc


def verify_dataset_dir(data_dir) -> list:
    """Return ``(file, reason)`` for every epoch file that is missing, altered or unparseable."""
    data_dir = Path(data_dir)
    bad = []
    for row in _manifest_rows(data_dir):
        path = data_dir / row["file"]
        if not path.exists():
            bad.append((row["file"], "missing"))
            continue
        try:
            load_epoch_file(path)
        except FormatError as exc:
            bad.append((row["file"], str(exc)))
            continue
        if _sha256(path) != row["sha256"]:
            bad.append((row["file"], "checksum mismatch"))
    return bad


def load_dataset_dir(data_dir, clip_bound: float = 50.0) -> Dataset:
    data_dir = Path(data_dir)
    epochs = []
    for row in _manifest_rows(data_dir):
        e = load_epoch_file(data_dir / row["file"])
        if e.subject_id != row["subject_id"] or (e.label or "") != row["label"]:
            raise FormatError(f"{row['file']}: header disagrees with manifest row")
        epochs.append(e)
    if not epochs:
        raise DataError(f"{data_dir} lists no epochs")
    return Dataset(tuple(epochs), clip_bound=clip_bound)


# probing and comparison cells ---------------------------------------------------


def split_from_config(dataset: Dataset, rc: RunConfig, seed: int = None) -> Split:
    return split_subjects(dataset, rc["split.ratios"], rc["split.seed"] if seed is None else seed)


def probe_encoder(encoder, split: Split, rc: RunConfig):
    """Fit on the training group, evaluate on the test group; returns ``(accuracy, confusion, model)``."""
    if len(split.training) < 10 or not len(split.test):
        raise DataError(
            f"probing needs at least 10 training epochs and a nonempty test group, "
            f"got {len(split.training)} and {len(split.test)}"
        )
    stft = rc.stft()
    train = embed(encoder, list(split.training.epochs), stft)
    test = embed(encoder, list(split.test.epochs), stft)
    model = fit_logistic(train, rc["probe.max_iter"], rc["probe.l2"], rc["probe.standardize"])
    acc, cm = evaluate(model, test)
    return acc, cm, model


def untrained_encoder(rc: RunConfig, in_shape):
    """The encoder pretext training would start from; it is never updated."""
    net = ContraWRNet(rc.encoder(in_shape), rc["model.proj_dim"], seed=rc["train.seed"])
    return net.encoder.eval()


@dataclass
class CellResult:
    variant: str
    seed: int
    accuracy: float
    wall_seconds: float


def run_cell(dataset: Dataset, rc: RunConfig, variant: str, seed: int, out_dir=None) -> CellResult:
    """Pretext-train ``variant`` (or skip it for the untrained baseline) and probe.

    ``seed`` drives both the subject split and the training seed, so every
    variant sees the same split for a given seed.
    """
    t0 = time.perf_counter()
    rc = rc.replace(train__seed=seed, split__seed=seed)
    split = split_from_config(dataset, rc)
    C, N = dataset.shape
    in_shape = feature_shape(C, N, rc["stft.window"], rc["stft.hop"])
    if variant == BASELINE:
        encoder = untrained_encoder(rc, in_shape)
    else:
        rc = rc.replace(loss__variant=variant)
        with tempfile.TemporaryDirectory() as tmp:
            run_dir = Path(out_dir) / f"{variant}_seed{seed}" if out_dir is not None else tmp
            result = run_pretext(split, PretextConfig.from_run_config(rc), run_dir, run_config=rc)
        encoder = result.state.online.encoder.eval()
    acc, _, _ = probe_encoder(encoder, split, rc)
    return CellResult(variant, seed, acc, time.perf_counter() - t0)


def compare(dataset: Dataset, rc: RunConfig, variants=None, seeds=None, out_dir=None, log=None):
    """Every variant on every seed; returns ``{variant: [CellResult, ...]}``."""
    variants = tuple(variants or rc["compare.variants"])
    seeds = tuple(seeds if seeds is not None else range(rc["train.seed"], rc["train.seed"] + rc["compare.seeds"]))
    results = {}
    for v in variants:
        for s in seeds:
            cell = run_cell(dataset, rc, v, s, out_dir)
            results.setdefault(v, []).append(cell)
            if log:
                log(f"{v} seed {s}: accuracy {cell.accuracy:.4f} ({cell.wall_seconds:.1f} s)")
    return results


def _mean_std(cells):
    acc = np.array([c.accuracy for c in cells])
    return acc.mean(), acc.std(ddof=1) if acc.size > 1 else 0.0


def compare_table(results) -> str:
    """Markdown table: one row per method with accuracy mean +/- std over seeds and wall-clock."""
    lines = [
        "| Method | Accuracy (mean ± std) | Seeds | Per-seed | Wall-clock (s) |",
        "|---|---|---|---|---|",
    ]
    for v, cells in results.items():
        m, s = _mean_std(cells)
        per_seed = " ".join(f"{c.accuracy:.4f}" for c in cells)
        wall = sum(c.wall_seconds for c in cells)
        lines.append(f"| {v} | {m:.4f} ± {s:.4f} | {len(cells)} | {per_seed} | {wall:.1f} |")
    return "\n".join(lines) + "\n"


def ablation(dataset: Dataset, rc: RunConfig, grid=None, seeds=(0,), variant="contrawr_plus", log=None):
    """Vary one hyperparameter at a time around ``rc``; returns ``[(param, value, cells), ...]``.

    Settings equal to the base configuration are run once and shared.
    """
    grid = grid or ABLATION_GRID
    cache, rows = {}, []
    for name, values in grid.items():
        key = ABLATION_KEYS[name]
        for value in values:
            cfg = rc.replace(**{key.replace(".", "__"): value})
            ident = cfg.to_json()
            if ident not in cache:
                cache[ident] = [run_cell(dataset, cfg, variant, s) for s in seeds]
                if log:
                    m, _ = _mean_std(cache[ident])
                    log(f"{name} = {value}: accuracy {m:.4f}")
            rows.append((name, value, cache[ident]))
    return rows


def ablation_table(rows) -> str:
    lines = [
        "| Parameter | Value | Accuracy (mean ± std) | Seeds | Wall-clock (s) |",
        "|---|---|---|---|---|",
    ]
    for name, value, cells in rows:
        m, s = _mean_std(cells)
        lines.append(f"| {name} | {value:g} | {m:.4f} ± {s:.4f} | {len(cells)} | {sum(c.wall_seconds for c in cells):.1f} |")
    return "\n".join(lines) + "\n"


def ablation_spread(rows) -> float:
    """Largest minus smallest mean accuracy across the grid."""
    means = [_mean_std(cells)[0] for _, _, cells in rows]
    return float(max(means) - min(means))
