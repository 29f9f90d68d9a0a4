import json

import pytest
from hypothesis import given, strategies as st

from sausage.config import ConfigError, ExperimentConfig, format_value, parse_value
from sausage.runner import EXIT_ERROR, EXIT_OK, EXIT_WARN, ResultRecord, execute, rerun, run

idents = st.from_regex(r"[a-z][a-z_]{0,8}", fullmatch=True)
scalars = st.one_of(st.booleans(), st.integers(-10**6, 10**6),
                    st.floats(-1e6, 1e6, allow_nan=False).filter(lambda v: not v.is_integer()),
                    st.from_regex(r"[a-z][a-z0-9_:.]{0,10}", fullmatch=True)
                    .filter(lambda s: s not in ("true", "false")))
values = st.one_of(scalars, st.lists(st.integers(-1000, 1000), min_size=2, max_size=5))


def cap_cfg(**kw):
    base = dict(subcommand="capacity", d=3, points="0 0 0; 1 0 0", master_seed=1)
    base.update(kw)
    return ExperimentConfig(**base)


@given(st.dictionaries(idents, values, max_size=6), st.integers(0, 2**40),
       st.sampled_from(["capacity", "bcap", "hitting"]), st.integers(3, 9))
def test_config_round_trip(params, seed, sub, d):
    cfg = ExperimentConfig(sub, d=d, N=1, law="binary", set="A.txt", master_seed=seed,
                           workers=3, params=params)
    again = ExperimentConfig.from_text(cfg.to_text())
    assert again == cfg
    assert again.to_text() == cfg.to_text()


def test_parse_value_types():
    assert parse_value("1e5") == 100000 and isinstance(parse_value("1e5"), int)
    assert parse_value("0.25") == 0.25
    assert parse_value("20,40,80") == [20, 40, 80]
    assert parse_value("true") is True
    assert parse_value("gamma:1.5") == "gamma:1.5"
    assert format_value([1, 2.5]) == "1,2.5"


def test_overrides_win_and_unknown_keys_become_params():
    cfg = cap_cfg(params={"method": "qp"})
    new = cfg.with_overrides({"d": "5", "method": "exact", "replicas": "30"})
    assert new.d == 5 and new.params == {"method": "exact", "replicas": 30}
    assert cfg.params == {"method": "qp"}


def test_config_errors_name_the_field():
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_text("[experiment]\nd = 3\n")
    assert e.value.field == "subcommand"
    with pytest.raises(ConfigError, match="^d: must be an integer"):
        ExperimentConfig.from_text("[experiment]\nsubcommand = capacity\nd = 2.5\n")
    with pytest.raises(ConfigError, match="unknown experiment field"):
        ExperimentConfig.from_mapping({"subcommand": "capacity", "colour": "red"})


def test_digest_ignores_workers_and_output():
    a, b = cap_cfg(workers=1), cap_cfg(workers=4, output="elsewhere")
    assert a.digest() == b.digest() != cap_cfg(master_seed=2).digest()


def test_point_set_sources(tmp_path):
    f = tmp_path / "A.txt"
    f.write_text("d=3\n0 0 0\n0 1 0\n")
    assert len(cap_cfg(points=None, set=str(f)).point_set()) == 2
    with pytest.raises(ConfigError, match="does not match"):
        cap_cfg(points=None, set=str(f), d=5).point_set()
    with pytest.raises(ConfigError, match="file not found"):
        cap_cfg(points=None, set=str(tmp_path / "nope")).point_set()


def test_exit_codes():
    code, body = execute(cap_cfg(), write=False)
    assert code == EXIT_OK and body["estimates"][0]["mean"] > 0
    code, body = execute(ExperimentConfig("sausage", d=4, N=2, points="0 0 0 0"), write=False)
    assert code == EXIT_ERROR and body == {"error": "d: d > 2N required (got d=4, N=2)",
                                           "field": "d", "kind": "config"}
    code, body = execute(cap_cfg(params={"kernel": "cauchy"}), write=False)
    assert code == EXIT_ERROR and body["field"] == "kernel"
    # a horizon far too short leaves a truncation bias above the standard error
    code, body = execute(cap_cfg(params={"method": "mc", "replicas": 20, "horizon": 2}),
                         write=False)
    assert code == EXIT_WARN and body["warnings"]


def test_output_layout_and_rerun(tmp_path):
    cfg = cap_cfg(output=str(tmp_path), params={"method": "mc", "replicas": 30,
                                                "horizon": 10**5})
    rec = run(cfg)
    out = tmp_path / "capacity"
    dirs = list(out.iterdir())
    assert [p.name for p in dirs if p.is_dir()] == [rec.path.split("/")[-1]]
    folder = dirs[0] if dirs[0].is_dir() else dirs[1]
    assert folder.name.endswith(cfg.digest())
    assert sorted(p.name for p in folder.iterdir()) == ["config.echo", "record.json",
                                                       "trends.csv"]
    saved = ResultRecord.from_dict(json.loads((folder / "record.json").read_text()))
    assert rerun(saved).numeric_payload() == rec.numeric_payload()
    # same config twice in one second gets a suffixed folder
    rec2 = run(cfg)
    assert rec2.path != rec.path


def test_worker_count_does_not_change_results():
    cfg = ExperimentConfig("hitting", d=5, N=2, points="0 0 0 0 0", master_seed=3,
                           params={"shells": [4, 6], "replicas": 40, "horizon_factor": 3})
    a = run(cfg, write=False)
    b = run(ExperimentConfig.from_text(cfg.to_text()).with_overrides({"workers": 2}),
            write=False)
    assert a.numeric_payload() == b.numeric_payload()


def test_unknown_subcommand():
    code, body = execute(ExperimentConfig("teleport"), write=False)
    assert code == EXIT_ERROR and body["field"] == "subcommand"
