from decimal import Decimal

import pytest

from idem.exceptions import InvalidModel, InvalidScenario
from idem.identity import persistence_segments
from idem.ledger import LedgerFile, load, read_ledger, save
from idem.model import Retraining
from idem.scenario import (
    BUILTIN_NAMES,
    Constant,
    LinearDecay,
    Query,
    Retrain,
    Scenario,
    StepDecay,
    build_history,
    builtin_scenario,
    builtin_scenarios,
    dump_scenario,
    generate_trajectory,
    load_scenario,
    run_scenario,
)
from idem.tau import tau_at, tau_trajectory
from tests.conftest import SCORE, SCORE_KIND, accuracy_ladder, accuracy_profile


def test_all_builtin_scenarios_pass():
    scenarios = builtin_scenarios()

    assert [scenario.name for scenario in scenarios] == list(BUILTIN_NAMES)

    for scenario in scenarios:
        report = run_scenario(scenario)

        assert report.outcomes, scenario.name
        assert report.passed, "\n".join(str(outcome) for outcome in report.outcomes if not outcome.passed)


def test_scenarios_report_the_expected_failures():
    outcomes = {
        (report.name, outcome.query.op, outcome.actual.get("failed_condition"))
        for report in map(run_scenario, builtin_scenarios())
        for outcome in report.outcomes
    }

    assert ("llm_two_countries", "check_synchronic", "ProfileMismatch") in outcomes
    assert ("hospitals", "check_synchronic", "LevelMismatch") in outcomes
    assert ("fitness_app", "check_diachronic_pointwise", None) in outcomes
    assert ("fitness_app", "check_persistence_path", "LevelMismatch") in outcomes


def test_figure_1_squares():
    scenario = builtin_scenario("figure_1")
    x, y = scenario.ledger.history("fig_x"), scenario.ledger.history("fig_y")
    coinciding = [t for t in range(0, 1000, 10) if tau_at(x, t) == tau_at(y, t)]

    for square in (100, 350, 650, 800):
        assert square in coinciding
    assert any(t not in coinciding for t in range(400, 600, 10))
    assert len(persistence_segments(x, 0, 1000, SCORE_KIND)) == 3


def test_run_scenario_is_deterministic():
    scenario = builtin_scenario("hospitals")

    assert run_scenario(scenario) == run_scenario(scenario)


def test_wrong_expectation_fails_only_that_query():
    scenario = builtin_scenario("toy_bob")
    wrong = Query("tau_at", {"x": "toy_x", "t": 500}, {"level": "1"})
    report = run_scenario(Scenario("broken", scenario.ledger, scenario.queries + (wrong,)))

    assert not report.passed
    assert [outcome.passed for outcome in report.outcomes].count(False) == 1
    assert report.outcomes[-1].actual == {"level": "0"}


def test_errors_become_failed_outcomes():
    scenario = builtin_scenario("toy_bob")
    before = Query("tau_at", {"x": "toy_x", "t": -5}, {"level": "1"})
    report = run_scenario(Scenario("broken", scenario.ledger, (before,)))

    assert not report.passed
    assert report.outcomes[0].error.startswith("BeforeDeployment")


def test_empty_query_list_gives_an_empty_report():
    report = run_scenario(Scenario("empty", LedgerFile()))

    assert report.outcomes == ()
    assert report.passed


def test_scenarios_validate_their_queries():
    ledger = builtin_scenario("toy_bob").ledger

    with pytest.raises(InvalidScenario):
        unknown = Query("check_synchronic", {"x": "toy_x", "y": "nobody", "t": 1, "kind": "predict"})
        Scenario("bad", ledger, (unknown,))
    with pytest.raises(InvalidScenario):
        Scenario("bad", ledger, (Query("drop_tables", {}),))
    with pytest.raises(InvalidScenario):
        builtin_scenario("nope")


def test_dump_load_scenario_roundtrip():
    for name in BUILTIN_NAMES:
        scenario = builtin_scenario(name)
        data = dump_scenario(scenario)

        assert load_scenario(data) == scenario
        assert dump_scenario(load_scenario(data)) == data


def test_load_scenario_rejects_files_without_a_scenario_document():
    data = dump_scenario(builtin_scenario("warehouse"))
    ledger_only = b"".join(data.splitlines(keepends=True)[:-1])

    with pytest.raises(InvalidScenario):
        load_scenario(ledger_only)
    with pytest.raises(InvalidScenario):
        load_scenario(b"")
    assert read_ledger(ledger_only).histories()


def test_constant_trajectory():
    measurements = generate_trajectory(Constant("0.95"), [], (0, 100), seed=1)

    assert len(measurements) == 100
    assert {m.value for m in measurements} == {Decimal("0.95")}
    assert [m.at for m in measurements] == list(range(100))


def test_linear_decay_crosses_the_level_boundary_at_50():
    measurements = generate_trajectory(LinearDecay("0.95", "0.001"), [], (0, 100), seed=1)
    h = build_history("x", SCORE, accuracy_profile(), accuracy_ladder(), measurements)

    assert measurements[50].value == Decimal("0.9")
    assert tau_at(h, 50) == Decimal(1)
    assert tau_at(h, 51) == Decimal("0.5")
    assert tau_trajectory(h, 0, 100).discontinuities == (51,)


def test_step_decay_with_retraining_gives_a_discontinuity():
    model = StepDecay("0.95", ((30, "0.1"), (60, "0.1")))
    measurements = generate_trajectory(model, [Retrain(50, "0.95")], (0, 100), seed=1, step=10)
    h = build_history("x", SCORE, accuracy_profile(), accuracy_ladder(), measurements, [Retrain(50, "0.95")])

    assert [str(m.value) for m in measurements] == ["0.95"] * 3 + ["0.85"] * 2 + ["0.95"] + ["0.85"] * 4
    assert tau_trajectory(h, 0, 100).discontinuities == (30, 50, 60)
    assert any(isinstance(event, Retraining) and event.at == 50 for event in h.events)


def test_trajectories_are_deterministic_per_seed():
    model = LinearDecay("0.95", "0.0005")
    a = generate_trajectory(model, [Retrain(40, "0.97")], (0, 80), seed=7, jitter="0.01")
    b = generate_trajectory(model, [Retrain(40, "0.97")], (0, 80), seed=7, jitter="0.01")
    c = generate_trajectory(model, [Retrain(40, "0.97")], (0, 80), seed=8, jitter="0.01")

    assert a == b
    assert a != c
    assert all(abs(m.value - model.drift(model.start, 0, m.at)) <= Decimal("0.01") for m in a if m.at < 40)


def test_generated_values_fit_the_ledger_precision():
    model = LinearDecay("0.95", "0.0000000003")
    measurements = generate_trajectory(model, [], (0, 50), seed=5, jitter="0.000000007")

    assert all(-m.value.as_tuple().exponent <= 9 for m in measurements)
    assert generate_trajectory(model, [], (0, 50), seed=5)[5].value == Decimal("0.949999998")

    h = build_history("x", SCORE, accuracy_profile(), accuracy_ladder(), measurements)
    assert load(save([h])) == [h]


def test_generated_histories_only_change_at_measurement_ticks():
    model = StepDecay("0.97", ((20, "0.1"), (45, "0.2")))
    measurements = generate_trajectory(model, [Retrain(70, "0.96")], (0, 100), seed=3, step=5, jitter="0.02")
    h = build_history("x", SCORE, accuracy_profile(), accuracy_ladder(), measurements, [Retrain(70, "0.96")])
    trajectory = tau_trajectory(h, 0, 100)

    assert set(trajectory.discontinuities) <= {m.at for m in measurements}
    for t in range(100):
        assert trajectory.level_at(t) == tau_at(h, t)


@pytest.mark.parametrize(
    "make",
    [
        lambda: Constant("-0.1"),
        lambda: LinearDecay("0.9", "-0.01"),
        lambda: StepDecay("0.9", ((-1, "0.1"),)),
        lambda: StepDecay("0.9", ((10, "-0.1"),)),
        lambda: Retrain(10, "-1"),
        lambda: generate_trajectory(Constant("0.9"), [], (10, 10), seed=1),
        lambda: generate_trajectory(Constant("0.9"), [], (0, 10), seed=1, step=0),
        lambda: generate_trajectory(Constant("0.9"), [Retrain(20, "0.9")], (0, 10), seed=1),
        lambda: generate_trajectory(Constant("0.9"), [], (0, 10), seed=1, jitter="-0.1"),
        lambda: Constant(0.9),
    ],
)
def test_invalid_model_parameters(make):
    with pytest.raises(InvalidModel):
        make()
