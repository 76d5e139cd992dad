import pytest

from rgspectra.config import load_config, load_config_resolved, parse_function, parse_text, resolve
from rgspectra.errors import ConfigError
from rgspectra.graphs import KNN, RGG


def write(tmp_path, text):
    p = tmp_path / "x.cfg"
    p.write_text(text)
    return p


def test_minimal_file_gets_defaults(tmp_path):
    cfg, resolved = load_config_resolved(write(tmp_path, "# nothing\n"))
    assert cfg.dimension == 2 and cfg.model == RGG(1.0)
    assert cfg.n_grid == [64.0, 256.0, 1024.0] and cfg.replicates == 1000 and cfg.seed == 0
    assert resolved["model"] == "rgg" and resolved["f"] == "poly:0,0,1"


def test_full_file(tmp_path):
    text = "dimension = 1\nmodel = knn\nk = 3\nf = x^3  # cubic\nn_grid = 32, 64\nreplicates = 200\nseed = 9\n"
    cfg = load_config(write(tmp_path, text))
    assert cfg.model == KNN(3) and cfg.f.coefficients == (0, 0, 0, 1)
    assert cfg.n_grid == [32.0, 64.0] and cfg.seed == 9


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError, match="line 2: unknown key 'colour'"):
        parse_text("seed = 1\ncolour = blue\n")


def test_duplicate_key_is_rejected():
    with pytest.raises(ConfigError, match="line 3: duplicate key 'seed'"):
        parse_text("seed = 1\n\nseed = 2\n")


def test_missing_equals_sign():
    with pytest.raises(ConfigError, match="line 1"):
        parse_text("seed 1\n")


def test_weighted_needs_nonzero_c():
    with pytest.raises(ConfigError, match="c != 0"):
        resolve(parse_text("f = gauss1\nweighted = true\nc = 0\n"))
    with pytest.raises(ConfigError, match="c != 0"):
        resolve(parse_text("f = gauss1\nweighted = true\n"))
    cfg, _ = resolve(parse_text("f = gauss1\nweighted = true\nc = 1\n"))
    assert cfg.weighted and cfg.c == 1.0


def test_semantic_errors_become_config_errors():
    with pytest.raises(ConfigError):
        resolve(parse_text("n_grid = 256, 64\n"))
    with pytest.raises(ConfigError):
        resolve(parse_text("model = knn\n"))
    with pytest.raises(ConfigError):
        resolve(parse_text("weighted = maybe\n"))
    with pytest.raises(ConfigError):
        resolve(parse_text("f = nonsense\n"))


def test_function_specs():
    assert parse_function("x^2").coefficients == (0, 0, 1)
    assert parse_function("poly:1,2").coefficients == (1, 2)
    assert parse_function("bump").name == "bump"
