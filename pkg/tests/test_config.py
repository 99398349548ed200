import pytest

from contrawr.config import SCHEMA, RunConfig, load_config
from contrawr.errors import ConfigError


def test_defaults_cover_schema():
    rc = RunConfig()
    assert set(rc) == set(SCHEMA)
    assert (rc["loss.sigma"], rc["loss.delta"], rc["loss.temperature"]) == (2.0, 0.2, 2.0)
    assert rc["train.batch_size"] == 256 and rc["probe.max_iter"] == 500


def test_ini_round_trip(tmp_path):
    rc = RunConfig().replace(loss__sigma=0.5, augment__bands="2:6, 20:40", model__widths="4,8,8,16")
    path = tmp_path / "c.ini"
    path.write_text(rc.to_ini())
    assert load_config(path) == rc
    assert RunConfig.from_json(rc.to_json()) == rc
    assert rc["augment.bands"] == ((2.0, 6.0), (20.0, 40.0))


def test_overrides_beat_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nlr = 0.01\nepochs = 4\n")
    rc = load_config(path, {"train.lr": "0.5"})
    assert rc["train.lr"] == 0.5 and rc["train.epochs"] == 4


@pytest.mark.parametrize(
    "values",
    [{"loss.nope": 1}, {"train.epochs": "many"}, {"stft.log_amplitude": "maybe"}, {"augment.bands": "1-5"}],
)
def test_rejects_bad_entries(values):
    with pytest.raises(ConfigError):
        RunConfig(values)


def test_unknown_key_in_file_is_named(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[loss]\nsigmaa = 2\n")
    with pytest.raises(ConfigError, match="loss.sigmaa"):
        load_config(path)


def test_typed_views_validate():
    with pytest.raises(ConfigError):
        RunConfig({"loss.delta": -1}).loss()
    with pytest.raises(ConfigError):
        RunConfig({"stft.window": 255}).stft()
    with pytest.raises(ConfigError):
        RunConfig({"augment.noise_degree": -0.1}).augment_policy()
    assert RunConfig().encoder((4, 129, 43)).latent_dim == 128
