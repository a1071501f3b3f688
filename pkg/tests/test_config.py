"""Typed run configuration: defaults, dict/JSON round trips, and the
key-path-naming validation errors."""

import dataclasses

import pytest

from shocklab.config import (
    ConfigError,
    RunConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    save_config,
)


@pytest.fixture()
def cfg():
    return default_config()


def test_defaults(cfg):
    assert cfg.params.gamma == 3.0
    assert cfg.params.epsilon == 1e-2
    assert cfg.grid.n_nodes == 4097
    assert cfg.solver.cfl == 0.4
    assert cfg.shooting.jacobian_source == "sensitivity"
    assert cfg.output.cadence == 0.25
    # fd step defaults to 1e-6 * epsilon unless pinned
    assert cfg.fd_step == pytest.approx(1e-8)
    pinned = dataclasses.replace(cfg, shooting=dataclasses.replace(
        cfg.shooting, fd_step=1e-5))
    assert pinned.fd_step == 1e-5


def test_data_overrides_reach_the_data_block():
    cfg = default_config(alpha=2e-4, perturbation="odd")
    assert cfg.data.alpha == 2e-4
    assert cfg.data.perturbation == "odd"


def test_dict_round_trip_is_identity(cfg):
    d = config_to_dict(cfg)
    assert config_from_dict(d) == cfg
    # and the dict itself is plain data: strings, numbers, lists, dicts
    def plain(v):
        if isinstance(v, dict):
            return all(isinstance(k, str) and plain(x) for k, x in v.items())
        if isinstance(v, list):
            return all(plain(x) for x in v)
        return v is None or isinstance(v, (str, int, float, bool))
    assert plain(d)


def test_file_round_trip_is_identity(cfg, tmp_path):
    path = tmp_path / "run.json"
    save_config(cfg, str(path))
    assert load_config(str(path)) == cfg


def test_unknown_keys_are_rejected_with_paths(cfg):
    d = config_to_dict(cfg)
    with pytest.raises(ConfigError, match="unknown key bogus"):
        config_from_dict({**d, "bogus": 1})
    with pytest.raises(ConfigError, match="unknown key solver.cflx"):
        config_from_dict({**d, "solver": {**d["solver"], "cflx": 0.4}})
    with pytest.raises(ConfigError, match="unknown key params.mach"):
        config_from_dict({**d, "params": {**d["params"], "mach": 2.0}})


def test_type_errors_name_the_key_path(cfg):
    d = config_to_dict(cfg)
    with pytest.raises(ConfigError, match="grid.n_nodes"):
        config_from_dict({**d, "grid": {**d["grid"], "n_nodes": "lots"}})
    with pytest.raises(ConfigError, match="solver.cfl"):
        config_from_dict({**d, "solver": {**d["solver"], "cfl": "fast"}})
    with pytest.raises(ConfigError, match="solver.cfl"):
        config_from_dict({**d, "solver": {**d["solver"], "cfl": True}})


def test_value_errors_name_the_block(cfg):
    d = config_to_dict(cfg)
    with pytest.raises(ConfigError, match="jacobian_source"):
        config_from_dict({**d, "shooting": {**d["shooting"],
                                            "jacobian_source": "magic"}})
    with pytest.raises(ConfigError, match="params"):
        config_from_dict({**d, "params": {**d["params"], "gamma": 0.5}})
    with pytest.raises(ConfigError, match="perturbation"):
        config_from_dict({**d, "data": {**d["data"], "perturbation": "spiky"}})


def test_partial_dicts_fill_in_defaults(cfg):
    got = config_from_dict({"params": {"gamma": 1.4, "epsilon": 1e-2,
                                       "kappa0": 1.0, "bigM": 2.0, "ell": 0.1}})
    assert got.params.gamma == 1.4
    assert got.grid == cfg.grid
    assert got.shooting == cfg.shooting


def test_bad_json_is_a_config_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_round_trip_preserves_float_bits(cfg, tmp_path):
    tweaked = dataclasses.replace(
        cfg, solver=dataclasses.replace(cfg.solver, cfl=0.1 + 0.2))
    path = tmp_path / "bits.json"
    save_config(tweaked, str(path))
    back = load_config(str(path))
    assert back.solver.cfl == tweaked.solver.cfl  # exact, not approximate
    assert isinstance(back, RunConfig)
