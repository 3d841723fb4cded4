import pytest

from spshm.config import DEFAULT_CONFIG_TEXT, RunConfig, load_config, parse_config
from spshm.sim import ConfigError


def test_defaults():
    cfg = load_config()
    assert cfg.scenario == "battery_open"
    assert cfg.sim.seed == 7 and cfg.sim.n_orbits == 4
    assert cfg.ad.model == "SeasonalNaive" and cfg.ad.quantile == 0.995
    assert cfg.fl.window == 64 and cfg.sim.fl_window_s == 64
    assert cfg.mdm.k == 3 and cfg.mdm.corpus is None


def test_default_text_parses_to_defaults():
    assert parse_config(DEFAULT_CONFIG_TEXT) == parse_config("")


def test_partial_overlay(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[sim]\nseed = 11\n[ad]\nmodel = AR\norder = 6\n")
    cfg = load_config(p)
    assert cfg.sim.seed == 11 and cfg.sim.orbit_period_s == 5700
    assert cfg.ad.model == "AR" and cfg.ad.params == {"order": 6}


@pytest.mark.parametrize("text,needle", [
    ("[sim]\nsede = 3\n", "sede"),
    ("[sim]\nseed = three\n", "expects int"),
    ("[sim]\nscenario = lunar\n", "scenario"),
    ("[ad]\nmodel = LSTM\n", "LSTM"),
    ("[ad]\nmodel = AR\nperiod = 3\n", "period"),
    ("[ad]\nmodel = AR\norder = 0\n", "order"),
    ("[ad]\nmin_event_s = 0\n", "min_event_s"),
    ("[fl]\ncolour = red\n", "colour"),
    ("[extra]\na = 1\n", "extra"),
    ("not an ini file", "malformed"),
    ("[sim]\neclipse_fraction = 1.5\n", "eclipse_fraction"),
])
def test_rejections(text, needle):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert needle in str(err.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_overrides():
    cfg = RunConfig().with_overrides(seed=3, quantile=0.9, k=5, window=32)
    assert (cfg.sim.seed, cfg.ad.quantile, cfg.mdm.k, cfg.fl.window, cfg.sim.fl_window_s) == (3, 0.9, 5, 32, 32)
    for kw in ({"quantile": 1.0}, {"k": 0}, {"window": 4}):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(**kw)


def test_digest_tracks_content():
    a = load_config()
    assert a.digest() == load_config().digest()
    assert a.digest() != a.with_overrides(seed=8).digest()
