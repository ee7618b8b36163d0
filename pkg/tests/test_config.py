import pytest
from hypothesis import given
from hypothesis import strategies as st

from allen_cahn_euler.config import DEFAULT_PATHS, EXPERIMENTS, RunConfig, parse_config, serialize_config
from allen_cahn_euler.errors import ConfigError


def test_empty_text_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.modes == 128 and cfg.fine_dt == 2.0**-12 and cfg.seed == 20101
    assert cfg.dt_levels == tuple(2.0**-k for k in range(4, 10))
    assert cfg.path_count == DEFAULT_PATHS["pathwise-rate"] == 50
    assert cfg.p is None and cfg.noise.mode_count == 128
    assert cfg.rng == "philox" and "rng = philox" in serialize_config(cfg)


def test_unsupported_generator_rejected():
    with pytest.raises(ConfigError, match="^rng: "):
        parse_config("rng = mt19937")


def test_parses_values_comments_and_shorthand():
    text = """
    # a comment
    experiment = strong      # trailing comment
    time.dt_levels = 2^-3, 2^-5
    stats.p = 1, 2
    space.padded = true
    paths = auto
    noise.q0 = 1e2
    """
    cfg = parse_config(text)
    assert cfg.experiment == "strong" and cfg.dt_levels == (0.125, 0.03125)
    assert cfg.p == (1.0, 2.0) and cfg.padded is True and cfg.paths is None and cfg.q0 == 100.0
    assert cfg.path_count == 200


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'noise.sigma'"):
        parse_config("noise.sigma = 1")


@pytest.mark.parametrize(
    "text, key",
    [
        ("space.modes = x", "space.modes"),
        ("noise.epsilon = 0.7", "noise.epsilon"),
        ("holder.gamma", "line 1"),
        ("experiment = nope", "experiment"),
        ("convolution.beta = 3", "convolution.beta"),
        ("time.horizons = 2, 1", "time.horizons"),
        ("paths = 0", "paths"),
        ("space.padded = maybe", "space.padded"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_non_dyadic_level_names_both_values():
    with pytest.raises(ConfigError) as info:
        parse_config("time.dt_levels = 0.1\ntime.fine_dt = 2^-12")
    assert "0.1" in str(info.value) and "0.000244140625" in str(info.value)


def test_overrides_win():
    cfg = parse_config("seed = 1", seed=7, paths=3, out=None)
    assert cfg.seed == 7 and cfg.paths == 3 and cfg.out == "results"


configs = st.builds(
    RunConfig,
    experiment=st.sampled_from(EXPERIMENTS),
    seed=st.integers(0, 2**63),
    paths=st.none() | st.integers(1, 500),
    threads=st.integers(0, 8),
    modes=st.integers(1, 512),
    padded=st.booleans(),
    dt_levels=st.lists(st.integers(0, 12), min_size=1, max_size=6, unique=True).map(
        lambda ks: tuple(2.0**-k for k in ks)
    ),
    r=st.floats(0, 4),
    q0=st.floats(1e-9, 1e6),
    epsilon=st.floats(1e-3, 0.499),
    p=st.none() | st.lists(st.floats(1, 40), min_size=1, max_size=3).map(tuple),
    beta=st.floats(0, 2),
    gamma=st.floats(0, 0.499),
    newton_tol=st.floats(1e-14, 1e-3),
    out=st.text("abcxyz/_-", min_size=1, max_size=12),
)


@given(configs)
def test_round_trip(cfg):
    text = serialize_config(cfg)
    back = parse_config(text)
    assert back == cfg
    assert serialize_config(back) == text
