import random
from decimal import Decimal
from typing import List, Optional, Sequence, Tuple

import pytest

from idem.contracts import parse_ladder, parse_profile
from idem.model import (
    ArtifactHistory,
    KindPath,
    LifecycleEvent,
    Measurement,
    ProfileChange,
    Retraining,
    TechnoFunction,
    TrustLadder,
    TrustProfile,
)

ACCURACY_LADDER = "level 1 when accuracy in [0.9, inf)\nlevel 0.5 when accuracy in [0.7, 0.9)\ndefault 0"
SCORE = TechnoFunction("predict", "numerical_score", ("tabular_data",))
SCORE_KIND = KindPath.parse("predict/numerical_score")


def accuracy_ladder() -> TrustLadder:
    return parse_ladder(ACCURACY_LADDER)


def accuracy_profile() -> TrustProfile:
    return parse_profile(["accuracy >= 0.9"])


def history(
    system_id: str,
    accuracies: Sequence[Tuple[int, str]] = (),
    events: Sequence[LifecycleEvent] = (),
    t0: int = 0,
    techno_function: TechnoFunction = SCORE,
    profile: Optional[TrustProfile] = None,
    ladder: Optional[TrustLadder] = None,
) -> ArtifactHistory:
    """A scoring system with accuracy measurements and extra events merged in tick order."""

    merged = [Measurement(at, "accuracy", value) for at, value in accuracies] + list(events)
    merged.sort(key=lambda event: event.at)

    return ArtifactHistory.deploy(
        system_id, techno_function, profile or accuracy_profile(), ladder or accuracy_ladder(), t0
    ).with_events(merged)


def random_fleet(rng: random.Random, size: int, max_events: int = 6) -> List[ArtifactHistory]:
    """Systems sharing t0 = 0 with accuracies drawn near the ladder boundaries and occasional profile changes."""

    values = ["0.65", "0.7", "0.75", "0.85", "0.9", "0.95"]
    stricter = parse_profile(["accuracy >= 0.95"])
    fleet = []

    for index in range(size):
        events: List[LifecycleEvent] = [Measurement(0, "accuracy", rng.choice(values))]

        for at in sorted(rng.sample(range(1, 60), rng.randint(0, max_events - 1))):
            roll = rng.random()

            if roll < 0.7:
                events.append(Measurement(at, "accuracy", rng.choice(values)))
            elif roll < 0.85:
                events.append(Retraining(at))
            else:
                events.append(ProfileChange(at, rng.choice([stricter, accuracy_profile()])))

        fleet.append(history(f"s{index}", events=events))

    return fleet


def decimal_grid(start: str, stop: str, step: str) -> List[Decimal]:
    current, end, increment = Decimal(start), Decimal(stop), Decimal(step)
    grid = []

    while current <= end:
        grid.append(current)
        current += increment

    return grid


@pytest.fixture
def toy_x() -> ArtifactHistory:
    return history("toy_x", [(0, "0.95"), (100, "0.95"), (150, "0.89"), (200, "0.8"), (300, "0.72"), (400, "0.65")])


@pytest.fixture
def toy_y() -> ArtifactHistory:
    return history("toy_y", [(0, "0.95")])


@pytest.fixture
def theseus() -> ArtifactHistory:
    """Dips to 0.5 at 100 and is retrained back to 1 at 200."""

    return history("theseus", [(0, "0.95"), (100, "0.8"), (200, "0.96")], [Retraining(200, "restore")])
