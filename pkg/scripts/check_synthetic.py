"""Sanity report on the synthetic generator.

Prints the class-0 low/high band power ratio, the accuracy of a band-power
logistic regression (an encoder-free ceiling) and the untrained-encoder probe
accuracy (the floor that pretext training has to beat).
"""

import argparse
from pathlib import Path

import numpy as np

from contrawr import pipeline
from contrawr.config import load_config
from contrawr.probe import EmbeddingSet, evaluate, fit_logistic
from contrawr.signals import STAGE_BANDS
from contrawr.spectral import feature_shape


def band_powers(epoch):
    spec = np.abs(np.fft.rfft(epoch.samples.astype(np.float64), axis=-1)) ** 2
    f = np.fft.rfftfreq(epoch.n_samples, 1 / epoch.sample_rate_hz)
    return np.stack([spec[:, (f >= lo) & (f < hi)].sum(-1) for lo, hi in STAGE_BANDS], axis=1)


def as_set(group):
    feats = []
    for e in group.epochs:
        p = band_powers(e)
        feats.append(np.log(p / p.sum(axis=1, keepdims=True)).ravel())
    labels = group.labels()
    return EmbeddingSet(np.array(feats), labels, tuple(e.subject_id for e in group.epochs))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path, default=Path(__file__).resolve().parents[1] / "configs" / "desk.ini")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    rc = load_config(args.config)
    dataset = pipeline.synthetic_from_config(rc)
    ratios = [p[:, 0].sum() / p[:, 4].sum() for p in map(band_powers, dataset.epochs)]
    wake = [r for r, e in zip(ratios, dataset.epochs) if e.label == "W"]
    print(f"class W low/high band power ratio: min {min(wake):.2f}, median {np.median(wake):.2f}")
    C, N = dataset.shape
    shape = feature_shape(C, N, rc["stft.window"], rc["stft.hop"])
    for seed in range(args.seeds):
        split = pipeline.split_from_config(dataset, rc, seed)
        oracle, _ = evaluate(fit_logistic(as_set(split.training)), as_set(split.test))
        cfg = rc.replace(train__seed=seed)
        untrained, _, _ = pipeline.probe_encoder(pipeline.untrained_encoder(cfg, shape), split, cfg)
        print(f"seed {seed}: band-power probe {oracle:.3f}, untrained encoder probe {untrained:.3f}")


if __name__ == "__main__":
    main()
