import random
from decimal import Decimal

import pytest

from idem.contracts import parse_contract, parse_ladder, parse_profile
from idem.exceptions import BeforeDeployment, InvalidInterval, NoData
from idem.model import Measurement, Retraining
from idem.tau import capability_value_at, contract_satisfied, tau_at, tau_stable_under, tau_trajectory
from tests.conftest import decimal_grid, history, random_fleet


def test_accuracy_ladder_on_the_full_grid():
    for accuracy in decimal_grid("0.00", "1.00", "0.01"):
        level = tau_at(history("x", [(0, str(accuracy))]), 0)

        if accuracy >= Decimal("0.9"):
            assert level == Decimal(1)
        elif accuracy >= Decimal("0.7"):
            assert level == Decimal("0.5")
        else:
            assert level == Decimal(0)


def test_grid_has_101_points():
    assert len(decimal_grid("0.00", "1.00", "0.01")) == 101


def test_tau_before_deployment_and_without_data():
    h = history("x", [(20, "0.95")], t0=10)

    with pytest.raises(BeforeDeployment):
        tau_at(h, 5)
    with pytest.raises(NoData):
        tau_at(h, 15)
    with pytest.raises(NoData):
        capability_value_at(h, "robustness", 30)

    assert tau_at(h, 20) == Decimal(1)


def test_capability_value_is_step_held():
    h = history("x", [(0, "0.95"), (100, "0.8")])

    assert capability_value_at(h, "accuracy", 99) == Decimal("0.95")
    assert capability_value_at(h, "accuracy", 100) == Decimal("0.8")


def test_constant_measurements_give_a_single_piece(toy_y):
    trajectory = tau_trajectory(toy_y, 0, 1000)

    assert len(trajectory.pieces) == 1
    assert trajectory.discontinuities == ()
    assert trajectory.level_at(999) == Decimal(1)


def test_trajectory_of_a_decaying_system(toy_x):
    trajectory = tau_trajectory(toy_x, 50, 500)

    assert [(piece.start, piece.end, piece.level) for piece in trajectory.pieces] == [
        (50, 150, Decimal(1)),
        (150, 400, Decimal("0.5")),
        (400, 500, Decimal(0)),
    ]
    assert trajectory.discontinuities == (150, 400)

    with pytest.raises(InvalidInterval):
        trajectory.level_at(500)
    with pytest.raises(InvalidInterval):
        tau_trajectory(toy_x, 500, 500)


def test_retraining_is_a_discontinuity(theseus):
    assert tau_trajectory(theseus, 0, 300).discontinuities == (100, 200)
    assert tau_at(theseus, 200) == Decimal(1)


def test_trajectory_matches_brute_force_evaluation():
    rng = random.Random(42)

    for _ in range(100):
        h = random_fleet(rng, 1, max_events=20)[0]
        end = rng.randint(1, 80)
        trajectory = tau_trajectory(h, 0, end)

        for t in range(end):
            assert trajectory.level_at(t) == tau_at(h, t)

        # Pieces tile the interval and neighbours differ
        assert trajectory.pieces[0].start == 0
        assert trajectory.pieces[-1].end == end
        for left, right in zip(trajectory.pieces, trajectory.pieces[1:]):
            assert left.end == right.start
            assert left.level != right.level

        assert all(piece.level in h.ladder.levels for piece in trajectory.pieces)


def test_tau_changes_only_at_event_ticks():
    rng = random.Random(3)

    for h in random_fleet(rng, 50):
        for t in range(1, 70):
            if t not in h.change_points:
                assert tau_at(h, t) == tau_at(h, t - 1)


def test_plain_contracts():
    h = history("x", [(0, "0.95"), (10, "0.85")])

    assert contract_satisfied(parse_contract("accuracy >= 0.9"), h, 5)
    assert not contract_satisfied(parse_contract("accuracy >= 0.9"), h, 10)
    assert contract_satisfied(parse_contract("accuracy < 0.9"), h, 10)

    with pytest.raises(NoData):
        contract_satisfied(parse_contract("latency < 10"), h, 10)


def test_windowed_contracts_use_the_window_mean():
    h = history("x").with_events(
        [Measurement(0, "uptime", "1"), Measurement(10, "uptime", "0.99"), Measurement(20, "uptime", "1")]
    )
    contract = parse_contract("uptime >= 0.995 over 20ms")

    # Mean of 1, 0.99 and 1
    assert contract_satisfied(contract, h, 20)
    # [15, 35] only holds the 1 at 20
    assert contract_satisfied(contract, h, 35)
    # [5, 25] holds 0.99 and 1, mean 0.995
    assert contract_satisfied(contract, h, 25)
    # [0, 10] holds 1 and 0.99
    assert contract_satisfied(contract, h, 10)
    assert not contract_satisfied(parse_contract("uptime >= 0.996 over 20ms"), h, 25)

    with pytest.raises(NoData):
        contract_satisfied(contract, h, 100)


def test_window_means_are_compared_exactly():
    big = "1000000000000000000000000000.000000001"
    contract = parse_contract(f"uptime >= {big} over 1d")

    assert contract_satisfied(contract, history("x").with_events([Measurement(0, "uptime", big)]), 0)
    assert contract_satisfied(
        contract, history("x").with_events([Measurement(0, "uptime", big), Measurement(10, "uptime", big)]), 10
    )

    below = history("x").with_events(
        [Measurement(0, "uptime", big), Measurement(10, "uptime", "1000000000000000000000000000")]
    )
    assert not contract_satisfied(contract, below, 10)

    # Mean of 1, 0 and 0 sits strictly between both thresholds
    thirds = history("x").with_events(
        [Measurement(0, "uptime", "1"), Measurement(1, "uptime", "0"), Measurement(2, "uptime", "0")]
    )
    assert contract_satisfied(parse_contract("uptime > 0.333333333 over 1s"), thirds, 2)
    assert not contract_satisfied(parse_contract("uptime >= 0.333333334 over 1s"), thirds, 2)


def test_windows_are_clipped_at_deployment():
    h = history("x", t0=100).with_events([Measurement(100, "uptime", "0.9")])

    assert not contract_satisfied(parse_contract("uptime >= 0.95 over 1d"), h, 150)
    assert contract_satisfied(parse_contract("uptime >= 0.85 over 1d"), h, 150)


def test_max_episode_bounds_the_longest_violation():
    h = history("x").with_events(
        [
            Measurement(0, "uptime", "1"),
            Measurement(10, "uptime", "0.5"),
            Measurement(15, "uptime", "1"),
            Measurement(40, "uptime", "0.5"),
            Measurement(48, "uptime", "1"),
        ]
    )

    assert contract_satisfied(parse_contract("uptime >= 0.6 over 100ms max-episode 8ms"), h, 60)
    assert not contract_satisfied(parse_contract("uptime >= 0.6 over 100ms max-episode 7ms"), h, 60)
    # The window [45, 60] only sees the tail of the second episode
    assert contract_satisfied(parse_contract("uptime >= 0.6 over 15ms max-episode 3ms"), h, 60)
    # An open episode counts up to t
    assert not contract_satisfied(parse_contract("uptime >= 0.6 over 100ms max-episode 4ms"), h, 45)


def test_per_group_contracts_hold_for_every_group():
    h = history("x").with_events(
        [
            Measurement(0, "fpr", "0.02", "men"),
            Measurement(0, "fpr", "0.04", "women"),
            Measurement(50, "fpr", "0.07", "women"),
        ]
    )
    contract = parse_contract("fpr <= 0.05 per-group")

    assert contract_satisfied(contract, h, 10)
    assert not contract_satisfied(contract, h, 50)

    with pytest.raises(NoData):
        contract_satisfied(parse_contract("fnr <= 0.05 per-group"), h, 10)


def test_tau_stability_under_perturbation():
    ladder = parse_ladder("level 1 when accuracy in [0.9, inf), robustness in [0.8, inf)\ndefault 0")
    profile = parse_profile(["accuracy >= 0.9"])
    h = history("x", profile=profile, ladder=ladder).with_events(
        [Measurement(0, "accuracy", "0.95"), Measurement(0, "robustness", "0.85"), Measurement(10, "accuracy", "0.91")]
    )

    assert tau_stable_under(h, 5, "0.01")
    assert tau_stable_under(h, 5, "0.05")
    assert not tau_stable_under(h, 5, "0.06")
    assert not tau_stable_under(h, 10, "0.02")
    assert tau_stable_under(h, 10, "0")

    with pytest.raises(ValueError):
        tau_stable_under(h, 10, "-0.1")


def test_retraining_alone_does_not_change_the_level():
    h = history("x", [(0, "0.95")], [Retraining(10)])

    assert tau_trajectory(h, 0, 20).discontinuities == ()
