import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochepi import io
from stochepi.config import load_config, load_scenario, scenario_ids, validate
from stochepi.exceptions import ConfigError, ParseError
from stochepi.inference.mh import Chain
from stochepi.models import Trajectory
from stochepi.observation import ObservedSeries


@pytest.fixture
def raw():
    return copy.deepcopy(load_scenario("noisy-sir").raw)


def test_bundled_scenarios_validate():
    ids = scenario_ids()
    assert {"noisy-sir", "noisy-sir-abc", "underreported-known", "underreported-unknown",
            "seir-underreported", "sweep-noise", "sweep-pobs", "sweep-truncation"} <= set(ids)
    for sid in ids:
        assert load_scenario(sid).scenario_id == sid


def test_unknown_scenario():
    with pytest.raises(ConfigError):
        load_scenario("nope")


@pytest.mark.parametrize("where,path", [((), "colour"), (("sampler",), "sampler.colour"),
                                        (("sampler", "pilot"), "sampler.pilot.colour")])
def test_unknown_key_names_path(raw, where, path):
    node = raw
    for key in where:
        node = node[key]
    node["colour"] = 1
    with pytest.raises(ConfigError) as err:
        validate(raw)
    assert err.value.path == path
    assert "unknown key" in str(err.value)


@pytest.mark.parametrize("mutate,path", [
    (lambda r: r.update(population=-1), "population"),
    (lambda r: r.update(init=[4800, 20, 1]), "init"),
    (lambda r: r["obs"].update(kind="poisson"), "obs.kind"),
    (lambda r: r["obs"].update(p_obs=0.5), "obs.p_obs"),
    (lambda r: r["sampler"].update(theta0=[1.0]), "sampler.theta0"),
    (lambda r: r["sampler"].update(params=["beta", "p_obs"]), "sampler.params"),
    (lambda r: r["sampler"].update(epsilon=3.0), "sampler.epsilon"),
    (lambda r: r["sampler"].update(adaptive={"t0": 10}), "sampler.h"),
    (lambda r: r.update(truncate=40), "truncate"),
    (lambda r: r["grid"].update(last=0), "grid.last"),
])
def test_invalid_fields(raw, mutate, path):
    mutate(raw)
    with pytest.raises(ConfigError) as err:
        validate(raw)
    assert err.value.path == path


def test_bad_json(tmp_path):
    f = tmp_path / "c.json"
    f.write_text('{"id": 1,\n oops}')
    with pytest.raises(ConfigError) as err:
        load_config(f)
    assert "line 2" in str(err.value)


def test_sweep_variants():
    labels = [label for label, _ in load_scenario("sweep-truncation").variants()]
    assert labels == ["truncate=15", "truncate=11", "truncate=7", "truncate=3"]
    pobs = dict(load_scenario("sweep-pobs").variants())
    assert pobs["p_obs=0.05"].obs["p_obs"] == 0.05
    assert "sweep" not in pobs["p_obs=0.05"].raw


def test_with_seed(raw):
    cfg = validate(raw).with_seed(99)
    assert cfg.seed == 99 and raw["seed"] == 1


# -- io ----------------------------------------------------------------------------

def test_format_value():
    assert io.format_value(np.int64(3)) == "3"
    assert io.format_value(0.1) == "0.10000000000000001"
    assert io.format_value(float("nan")) == "nan"
    assert io.format_value(-np.inf) == "-inf"


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=30))
def test_real_columns_round_trip_exactly(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("t") / "x.csv"
    col = np.array(values, dtype=float)
    io.write_table(path, ["x"], [col])
    _, (back,) = io.read_table(path)
    np.testing.assert_array_equal(back.astype(float), col)


def test_chain_round_trip_byte_stable(tmp_path):
    rng = np.random.default_rng(1)
    samples = np.repeat(rng.normal(size=(6, 2)), 2, axis=0)
    accepted = np.tile([True, False], 6)
    accepted[0] = False
    chain = Chain(("beta", "gamma"), samples, rng.normal(size=12) * 100, accepted)
    io.write_chain(tmp_path / "a.csv", chain)
    back = io.read_chain(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.samples, samples)
    np.testing.assert_array_equal(back.accepted, accepted)
    assert back.names == ("beta", "gamma")
    io.write_chain(tmp_path / "b.csv", back)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_trajectory_round_trip(tmp_path, ode_path):
    io.write_trajectory(tmp_path / "h.csv", ode_path)
    back = io.read_trajectory(tmp_path / "h.csv", ("S", "I", "R"))
    np.testing.assert_array_equal(back.states, ode_path.states)
    traj = Trajectory(np.arange(3.0), np.array([[3, 0, 0], [2, 1, 0], [2, 0, 1]]), ("S", "I", "R"))
    io.write_trajectory(tmp_path / "g.csv", traj)
    assert (tmp_path / "g.csv").read_text().splitlines()[1] == "0,3,0,0"
    assert io.read_trajectory(tmp_path / "g.csv").states.dtype == np.int64


def test_observed_round_trip(tmp_path, binomial_data, noisy_data):
    for series in (binomial_data, noisy_data):
        io.write_observed(tmp_path / "o.csv", series)
        back = io.read_observed(tmp_path / "o.csv")
        np.testing.assert_array_equal(back.values, series.values)
        assert back.integer == series.integer
        assert back.columns == series.columns


def test_parse_error_line_numbers(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("t,S,I,R\n0,1,2,3\n1,1,x,3\n")
    with pytest.raises(ParseError) as err:
        io.read_trajectory(f)
    assert err.value.line == 3
    f.write_text("t,S,I,R\n0,1,2,3\n1,1,2\n")
    with pytest.raises(ParseError) as err:
        io.read_trajectory(f)
    assert err.value.line == 3
    f.write_text("t,S,I,R\n0,1,2,3\n0,1,2,3\n")
    with pytest.raises(ParseError) as err:
        io.read_trajectory(f)
    assert err.value.line == 3
    f.write_text("t,A\n0,1\n")
    with pytest.raises(ParseError) as err:
        io.read_trajectory(f, ("S", "I", "R"))
    assert err.value.line == 1


def test_missing_file(tmp_path):
    with pytest.raises(ParseError):
        io.read_observed(tmp_path / "missing.csv")


def test_chain_accept_flag_checked(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text("step,beta,log_target,accepted\n0,1.0,-3,0\n1,1.0,-3,2\n")
    with pytest.raises(ParseError) as err:
        io.read_chain(f)
    assert err.value.line == 3


def test_json_sorted_and_null(tmp_path):
    io.write_json(tmp_path / "s.json", {"b": np.float64(np.nan), "a": np.arange(2)})
    text = (tmp_path / "s.json").read_text()
    assert json.loads(text) == {"a": [0, 1], "b": None}
    assert text.index('"a"') < text.index('"b"')


def test_bands_columns(tmp_path):
    bands = np.zeros((2, 3, 3))
    io.write_bands(tmp_path / "b.csv", [0.0, 1.0], bands, ("S", "I", "R"))
    header = (tmp_path / "b.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "S_q2.5", "S_q50", "S_q97.5"]
    assert len(header) == 10


def test_observed_series_columns():
    s = ObservedSeries([1.0], np.ones((1, 2)), ["I", "R"])
    assert s.columns == ("I", "R")
