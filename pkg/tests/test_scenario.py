from importlib import resources

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dnsite.simulator import DEFAULT_SEED, Scenario, ScenarioError, expand, loads, parse


def test_defaults_follow_workload_description():
    sc = Scenario()
    assert sc.duration == 600 and sc.violator_fraction == 0.4 and sc.nominal_ttl == 15
    assert sc.sleep_mean == 35 and (sc.hidden_clients_min, sc.hidden_clients_max) == (1, 5)
    assert sc.size_mean == 225_000 and sc.size_cap == 625_000
    assert sc.seed == DEFAULT_SEED


scenarios = st.builds(
    Scenario,
    name=st.from_regex(r"[a-z][a-z0-9_]{0,12}", fullmatch=True),
    duration=st.floats(1, 10_000),
    seed=st.integers(0, 2**64 - 1),
    ldns_count=st.integers(1, 100),
    violator_fraction=st.floats(0, 1),
    nominal_ttl=st.floats(0.5, 1000),
    sleep_mean=st.floats(0.1, 100),
    size_kind=st.sampled_from(["fixed", "lognormal"]),
    policy=st.sampled_from(["round_robin", "measurement_based"]),
    window=st.sampled_from([0.1, 0.5, 1.0, 10.0, 30.0]),
)


@given(scenarios)
def test_serialization_round_trips(sc):
    assert loads(sc.dumps()) == sc


@given(scenarios, st.floats(0.5, 100))
def test_digest_changes_iff_field_changes(sc, ttl):
    assert sc.digest() == loads(sc.dumps()).digest()
    other = sc.replace(nominal_ttl=ttl)
    assert (other.digest() == sc.digest()) == (other == sc)


def test_validation_lists_every_violation():
    with pytest.raises(ScenarioError) as e:
        loads("# dnsite-scenario v1\nduration = -5\nldns_count = 0\nviolator_fraction = 2\nwindow = 0.15\n"
              "nosuchkey = 1\n")
    msgs = "\n".join(e.value.errors)
    for key in ("duration", "ldns_count", "violator_fraction", "window", "nosuchkey"):
        assert key in msgs


def test_missing_header_rejected():
    with pytest.raises(ScenarioError):
        loads("duration = 10\n")


def test_sweep_lockstep_expansion():
    base, sweep = parse("# dnsite-scenario v1\nsweep.ldns_count = 10, 45\nsweep.sleep_mean = 35, 14\n")
    points = expand(base, sweep)
    assert [(p.ldns_count, p.sleep_mean) for _, p in points] == [(10, 35.0), (45, 14.0)]
    with pytest.raises(ScenarioError):
        parse("# dnsite-scenario v1\nsweep.ldns_count = 10, 45\nsweep.sleep_mean = 35\n")


def test_load_reference_rescales_idle_time():
    sc = Scenario(size_kind="fixed", size_mean=30_000, load_reference_size=225_000)
    assert sc.effective_sleep_mean == pytest.approx(35 * 30 / 225)


def test_pareto_shape_must_exceed_one():
    assert Scenario(pareto_shape=1.0).validate()


@pytest.mark.parametrize("name", ["fig_error_window", "fig_clientrate", "fig_filesize", "fig_ttl",
                                  "fig_hideclients", "fig_wndsize", "fig_wnd_udp", "fig_wndsize_sims"])
def test_bundled_scenarios_parse(name):
    text = (resources.files("dnsite.scenarios") / f"{name}.scn").read_text()
    base, sweep = parse(text)
    assert base.name == name
    assert all(not p.validate() for _, p in expand(base, sweep))
