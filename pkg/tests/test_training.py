import csv

import numpy as np
import pytest

from contrawr.config import RunConfig
from contrawr.contrastive import LossConfig
from contrawr.errors import ConfigError, ContractError, ParameterError
from contrawr.nn.autodiff import Tensor
from contrawr.nn.layers import ContraWRNet, EncoderConfig
from contrawr.signals import Dataset, Split, generate_synthetic_dataset, split_subjects
from contrawr.spectral import STFTConfig, feature_shape
from contrawr.training import (
    PretextConfig,
    ema_update,
    init_state,
    load_state,
    pretext_step,
    read_metrics,
    run_pretext,
)

TINY = dict(stft=STFTConfig(64, 32), widths=(4, 4, 8, 8), proj_dim=8, batch_size=8)
N = 640


def tiny_config(**kw):
    return PretextConfig(**{**TINY, **kw})


@pytest.fixture(scope="module")
def tiny_split():
    ds = generate_synthetic_dataset(6, 8, C=2, N=N, seed=11)
    return split_subjects(ds, (0.5, 0.25, 0.25), seed=0)


def in_shape():
    return feature_shape(2, N, 64, 32)


def test_defaults():
    cfg = PretextConfig()
    assert (cfg.epochs, cfg.batch_size, cfg.ema_lambda, cfg.lr, cfg.weight_decay) == (100, 256, 0.99, 2e-4, 1e-4)
    assert (cfg.loss.sigma, cfg.loss.delta, cfg.loss.temperature) == (2.0, 0.2, 2.0)
    with pytest.raises(ConfigError):
        PretextConfig(ema_lambda=1.5)


def test_target_starts_as_exact_copy(rng):
    st = init_state(tiny_config(), in_shape())
    for name, p in st.online.named_parameters().items():
        assert np.array_equal(p.data, st.target.named_parameters()[name].data)
    assert not any(p.requires_grad for p in st.target.parameters())
    x = Tensor(rng.standard_normal((3,) + in_shape()).astype(np.float32))
    assert np.array_equal(st.online.eval()(x).data, st.target.eval()(x).data)


def _pair(seed_a=0, seed_b=1):
    cfg = EncoderConfig((4, 17, 9), (2, 2, 3, 3))
    return ContraWRNet(cfg, 4, seed_a).astype(np.float64), ContraWRNet(cfg, 4, seed_b).astype(np.float64)


def test_ema_examples():
    theta, phi = _pair()
    phi0 = {k: p.data.copy() for k, p in phi.named_parameters().items()}
    ema_update(theta, phi, 1.0)
    assert all(np.array_equal(p.data, phi0[k]) for k, p in phi.named_parameters().items())
    ema_update(theta, phi, 0.0)
    assert all(np.array_equal(p.data, theta.named_parameters()[k].data) for k, p in phi.named_parameters().items())
    for p in theta.parameters():
        p.data[...] = 1.0
    for p in phi.parameters():
        p.data[...] = 0.0
    ema_update(theta, phi, 0.5)
    assert all(np.all(p.data == 0.5) for p in phi.parameters())


@pytest.mark.parametrize("lam", [0.0, 0.5, 0.99, 1.0])
@pytest.mark.parametrize("n", [1, 5, 50])
def test_ema_closed_form(lam, n):
    theta, phi = _pair(2, 3)
    phi0 = {k: p.data.copy() for k, p in phi.named_parameters().items()}
    for _ in range(n):
        ema_update(theta, phi, lam)
    for k, p in phi.named_parameters().items():
        expected = lam**n * phi0[k] + (1 - lam**n) * theta.named_parameters()[k].data
        np.testing.assert_allclose(p.data, expected, rtol=0, atol=1e-6)


def test_ema_copies_running_statistics(rng):
    theta, phi = _pair()
    theta.train()(Tensor(rng.standard_normal((3, 4, 17, 9))))
    ema_update(theta, phi, 0.9)
    for k, b in theta.named_buffers().items():
        assert np.array_equal(phi.named_buffers()[k], b)


def test_ema_rejects_mismatch():
    a = ContraWRNet(EncoderConfig((4, 17, 9), (2, 2, 3, 3)), 4)
    b = ContraWRNet(EncoderConfig((4, 17, 9), (2, 2, 3, 4)), 4)
    with pytest.raises(ContractError):
        ema_update(a, b, 0.5)
    with pytest.raises(ParameterError):
        ema_update(a, a, 1.5)


def test_zero_lr_is_a_fixed_point(tiny_split):
    cfg = tiny_config(lr=0.0, weight_decay=0.0)
    st = init_state(cfg, in_shape())
    before = {k: p.data.copy() for k, p in st.online.named_parameters().items()}
    batch = list(tiny_split.pretext.epochs[:8])
    rng = np.random.default_rng(0)
    for _ in range(2):
        pretext_step(batch, st, cfg, rng)
    for k, p in st.online.named_parameters().items():
        assert np.array_equal(p.data, before[k])
        assert np.array_equal(st.target.named_parameters()[k].data, before[k])
    assert st.step == 2


def test_target_never_gets_gradients(tiny_split):
    cfg = tiny_config()
    st = init_state(cfg, in_shape())
    pretext_step(list(tiny_split.pretext.epochs[:8]), st, cfg, np.random.default_rng(0))
    assert all(p.grad is None for p in st.target.parameters())
    assert any(p.grad is not None and np.any(p.grad) for p in st.online.parameters())


def test_step_is_deterministic(tiny_split):
    cfg = tiny_config()
    batch = list(tiny_split.pretext.epochs[:8])
    losses = []
    for _ in range(2):
        st = init_state(cfg, in_shape())
        losses.append(pretext_step(batch, st, cfg, np.random.default_rng(42))[0])
    assert losses[0] == losses[1]
    with pytest.raises(ParameterError):
        pretext_step(batch[:1], st, cfg, np.random.default_rng(0))


@pytest.mark.parametrize("variant", ["contrawr", "contrawr_plus", "nce"])
def test_loss_decreases_on_fixed_batch(variant):
    ds = generate_synthetic_dataset(4, 16, C=2, N=N, seed=2)
    batch = list(ds.epochs)
    cfg = tiny_config(batch_size=64, lr=2e-3, loss=LossConfig(variant=variant))
    st = init_state(cfg, in_shape())
    rng = np.random.default_rng(0)
    losses = [pretext_step(batch, st, cfg, rng)[0] for _ in range(50)]
    assert np.mean(losses[-10:]) < np.mean(losses[:10])


def test_run_pretext_metrics_and_checkpoints(tiny_split, tmp_path):
    n = len(tiny_split.pretext)
    cfg = tiny_config(epochs=3, batch_size=n // 2, checkpoint_every=2)
    res = run_pretext(tiny_split, cfg, tmp_path)
    rows = read_metrics(res.metrics)
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3]
    assert list(rows[0]) == ["epoch", "mean_loss", "wall_seconds"]
    assert len(res.step_losses) == 3 * 2
    assert float(rows[0]["mean_loss"]) == np.mean(res.step_losses[:2])
    assert sorted(p.name for p in tmp_path.glob("*.npz")) == ["checkpoint_epoch0002.npz", "checkpoint_epoch0003.npz"]
    state, rc, shape = load_state(res.checkpoint)
    assert state.epoch == 3 and state.step == 6 and shape == in_shape()
    assert rc == cfg.to_run_config()


def test_run_pretext_rejects_empty(tmp_path):
    empty = Split(Dataset(()), Dataset(()), Dataset(()))
    with pytest.raises(ConfigError):
        run_pretext(empty, tiny_config(), tmp_path)


def test_run_is_reproducible(tiny_split, tmp_path):
    cfg = tiny_config(epochs=2)
    a = run_pretext(tiny_split, cfg, tmp_path / "a")
    b = run_pretext(tiny_split, cfg, tmp_path / "b")
    cols = lambda p: [(r["epoch"], r["mean_loss"]) for r in read_metrics(p)]
    assert cols(a.metrics) == cols(b.metrics)
    for k, p in a.state.online.named_parameters().items():
        assert np.array_equal(p.data, b.state.online.named_parameters()[k].data)


def test_resume_matches_uninterrupted(tiny_split, tmp_path):
    cfg = tiny_config(epochs=4, checkpoint_every=2)
    full = run_pretext(tiny_split, cfg, tmp_path / "full")
    part = run_pretext(tiny_split, cfg, tmp_path / "part", stop_after=2)
    assert part.checkpoint.name == "checkpoint_epoch0002.npz"
    resumed = run_pretext(tiny_split, cfg, tmp_path / "part", resume_from=part.checkpoint)
    np.testing.assert_allclose(resumed.epoch_losses, full.epoch_losses[2:], rtol=0, atol=1e-6)
    rows = read_metrics(resumed.metrics)
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3, 4]


def test_config_round_trip():
    cfg = PretextConfig(epochs=7, lr=1e-3, loss=LossConfig("nce", sigma=0.5), seed=9)
    rc = cfg.to_run_config()
    assert PretextConfig.from_run_config(rc) == cfg
    assert PretextConfig.from_run_config(RunConfig.from_json(rc.to_json())) == cfg
    assert PretextConfig.from_run_config(RunConfig()) == PretextConfig()
