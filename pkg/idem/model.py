"""
This module contains the domain types shared by all modules: kinds, techno-functions, contracts, profiles, ladders
and artifact histories. All types are immutable; a history only "changes" by building a new one.
"""

import re
from bisect import bisect_right
from dataclasses import dataclass
from decimal import MAX_EMAX, MAX_PREC, MIN_EMIN, Context, Decimal, InvalidOperation, localcontext
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple, Union

from idem.exceptions import BeforeDeployment, DuplicateContract, InvalidHistory

Timestamp = int
"""Milliseconds since the ledger epoch."""

MAX_TICK = 2**63 - 1

IDENTIFIER = re.compile(r"[a-z][a-z0-9_]*")
DURATION_UNITS = (("d", 86_400_000), ("h", 3_600_000), ("m", 60_000), ("s", 1_000), ("ms", 1))

DecimalLike = Union[Decimal, str, int]


def is_identifier(text: object) -> bool:
    return isinstance(text, str) and IDENTIFIER.fullmatch(text) is not None


def to_decimal(value: DecimalLike) -> Decimal:
    """Convert to an exact, normalized Decimal. Binary floats are refused."""

    if isinstance(value, bool) or not isinstance(value, (Decimal, str, int)):
        raise TypeError(f"expected an exact decimal, got {type(value).__name__}")

    try:
        result = Decimal(value)
    except InvalidOperation as e:
        raise ValueError(f"'{value}' is not a decimal number") from e

    if not result.is_finite():
        raise ValueError(f"'{value}' is not finite")

    return Decimal(canonical_decimal(result))


def canonical_decimal(value: Decimal) -> str:
    """
    >>> canonical_decimal(Decimal("0.90"))
    '0.9'
    >>> canonical_decimal(Decimal("1E+2"))
    '100'
    """

    text = format(value, "f")

    if "." in text:
        text = text.rstrip("0").rstrip(".")

    return "0" if text in ("0", "-0") else text


def format_duration(ticks: int) -> str:
    for suffix, size in DURATION_UNITS:
        if ticks % size == 0:
            return f"{ticks // size}{suffix}"

    raise AssertionError("unreachable: ms divides every integer")


def is_tick(value: object) -> bool:
    return not isinstance(value, bool) and isinstance(value, int) and 0 <= value <= MAX_TICK


def exact_arithmetic():
    """A decimal context in which sums, differences and products are never rounded."""

    return localcontext(Context(prec=MAX_PREC, Emax=MAX_EMAX, Emin=MIN_EMIN))


def _require_tick(value: object, what: str) -> None:
    if not is_tick(value):
        raise InvalidHistory(f"{what} must be an integer tick in [0, 2**63), got {value!r}")


class Comparator(Enum):
    GE = ">="
    GT = ">"
    LE = "<="
    LT = "<"

    def holds(self, value: Decimal, threshold: Decimal) -> bool:
        if self is Comparator.GE:
            return value >= threshold
        if self is Comparator.GT:
            return value > threshold
        if self is Comparator.LE:
            return value <= threshold

        return value < threshold


class Verb(Enum):
    PREDICT = "predict"
    RECOGNIZE = "recognize"
    GENERATE = "generate"


@dataclass(frozen=True)
class KindPath:
    """A nested AI system kind, e.g. predict/credit_risk_score/tabular. Ancestors are proper prefixes."""

    segments: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

        if not self.segments:
            raise ValueError("a kind needs at least one segment")

        for segment in self.segments:
            if not is_identifier(segment):
                raise ValueError(f"invalid kind segment '{segment}'")

    @classmethod
    def parse(cls, text: str) -> "KindPath":
        return cls(tuple(text.strip().split("/")))

    def is_ancestor_of(self, other: "KindPath") -> bool:
        return len(self.segments) < len(other.segments) and other.segments[: len(self.segments)] == self.segments

    def contains(self, other: "KindPath") -> bool:
        return self == other or self.is_ancestor_of(other)

    def __str__(self) -> str:
        return "/".join(self.segments)


@dataclass(frozen=True)
class TechnoFunction:
    """'[to predict/recognize/generate] X using Y'."""

    verb: Verb
    object: Optional[str] = None
    resources: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "verb", Verb(self.verb))
        object.__setattr__(self, "resources", tuple(self.resources))

        if self.object is not None and not is_identifier(self.object):
            raise ValueError(f"invalid techno-function object '{self.object}'")
        if self.resources and self.object is None:
            raise ValueError("resources can only refine a techno-function with an object")

        for resource in self.resources:
            if not is_identifier(resource):
                raise ValueError(f"invalid techno-function resource '{resource}'")

    @property
    def kind_path(self) -> KindPath:
        tail = () if self.object is None else (self.object, *self.resources)

        return KindPath((self.verb.value, *tail))


@dataclass(frozen=True)
class ContractSpec:
    capability: str
    comparator: Comparator
    threshold: Decimal
    window: Optional[int] = None
    max_episode: Optional[int] = None
    per_group: bool = False

    def __post_init__(self):
        if not is_identifier(self.capability):
            raise ValueError(f"invalid capability '{self.capability}'")

        object.__setattr__(self, "comparator", Comparator(self.comparator))
        object.__setattr__(self, "threshold", to_decimal(self.threshold))

        for name in ("window", "max_episode"):
            value = getattr(self, name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, int) or value <= 0):
                raise ValueError(f"{name} must be a positive number of ticks, got {value!r}")

        if self.max_episode is not None and self.window is None:
            raise ValueError("max_episode requires a window")

    @property
    def signature(self) -> Tuple[str, Comparator, Optional[int], bool]:
        return self.capability, self.comparator, self.window, self.per_group

    def render(self) -> str:
        parts = [self.capability, self.comparator.value, canonical_decimal(self.threshold)]

        if self.window is not None:
            parts += ["over", format_duration(self.window)]
        if self.max_episode is not None:
            parts += ["max-episode", format_duration(self.max_episode)]
        if self.per_group:
            parts.append("per-group")

        return " ".join(parts)

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class TrustProfile:
    """The set of contracts formulating a system's trustworthiness requirements."""

    contracts: FrozenSet[ContractSpec] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "contracts", frozenset(self.contracts))
        seen: Dict[tuple, ContractSpec] = {}

        for contract in sorted(self.contracts, key=ContractSpec.render):
            if contract.signature in seen:
                raise DuplicateContract(f"'{seen[contract.signature]}' and '{contract}' share a signature")

            seen[contract.signature] = contract

    @classmethod
    def of(cls, *contracts: ContractSpec) -> "TrustProfile":
        return cls(frozenset(contracts))

    def canonical(self) -> Tuple[str, ...]:
        return tuple(sorted(contract.render() for contract in self.contracts))

    def __str__(self) -> str:
        return "{" + ", ".join(self.canonical()) + "}"


@dataclass(frozen=True)
class LadderCondition:
    """capability in [lower, upper); upper None stands for +inf."""

    capability: str
    lower: Decimal
    upper: Optional[Decimal] = None

    def __post_init__(self):
        if not is_identifier(self.capability):
            raise ValueError(f"invalid capability '{self.capability}'")

        object.__setattr__(self, "lower", to_decimal(self.lower))

        if self.upper is not None:
            object.__setattr__(self, "upper", to_decimal(self.upper))
            if self.upper <= self.lower:
                raise ValueError(f"empty interval [{self.lower}, {self.upper}) for {self.capability}")

    def contains(self, value: Decimal) -> bool:
        return self.lower <= value and (self.upper is None or value < self.upper)

    def render(self) -> str:
        upper = "inf" if self.upper is None else canonical_decimal(self.upper)

        return f"{self.capability} in [{canonical_decimal(self.lower)}, {upper})"


@dataclass(frozen=True)
class LadderRule:
    conditions: Tuple[LadderCondition, ...]
    level: Decimal

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "level", to_decimal(self.level))

        if not self.conditions:
            raise ValueError("a ladder rule needs at least one condition")
        if self.level < 0:
            raise ValueError(f"trustworthiness levels are non-negative, got {self.level}")

    def matches(self, values: Mapping[str, Decimal]) -> bool:
        return all(condition.contains(values[condition.capability]) for condition in self.conditions)

    def render(self) -> str:
        conditions = ", ".join(condition.render() for condition in self.conditions)

        return f"level {canonical_decimal(self.level)} when {conditions}"


@dataclass(frozen=True)
class TrustLadder:
    """Ordered rules defining the trustworthiness function. The first matching rule wins."""

    rules: Tuple[LadderRule, ...]
    default_level: Decimal

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "default_level", to_decimal(self.default_level))

        if self.default_level < 0:
            raise ValueError(f"trustworthiness levels are non-negative, got {self.default_level}")

    @property
    def levels(self) -> FrozenSet[Decimal]:
        return frozenset(rule.level for rule in self.rules) | {self.default_level}

    @property
    def capabilities(self) -> Tuple[str, ...]:
        ordered = dict.fromkeys(condition.capability for rule in self.rules for condition in rule.conditions)

        return tuple(ordered)

    def evaluate(self, values: Mapping[str, Decimal]) -> Decimal:
        for rule in self.rules:
            if rule.matches(values):
                return rule.level

        return self.default_level

    def render(self) -> str:
        return "\n".join([rule.render() for rule in self.rules] + [f"default {canonical_decimal(self.default_level)}"])


@dataclass(frozen=True)
class CapabilityMeasurement:
    capability: str
    value: Decimal
    at: Timestamp
    group: Optional[str] = None

    def __post_init__(self):
        if not is_identifier(self.capability):
            raise ValueError(f"invalid capability '{self.capability}'")
        if self.group is not None and not is_identifier(self.group):
            raise ValueError(f"invalid group '{self.group}'")

        object.__setattr__(self, "value", to_decimal(self.value))


@dataclass(frozen=True)
class LifecycleEvent:
    at: Timestamp

    kind = "event"


@dataclass(frozen=True)
class Deployment(LifecycleEvent):
    """The successful deployment of a system, carrying its definition at that time."""

    techno_function: TechnoFunction
    profile: TrustProfile
    ladder: TrustLadder

    kind = "deployment"


@dataclass(frozen=True)
class Measurement(LifecycleEvent):
    capability: str
    value: Decimal
    group: Optional[str] = None

    kind = "measurement"

    def __post_init__(self):
        # Reuse the validation of the measurement value type
        object.__setattr__(self, "value", self.measurement.value)

    @classmethod
    def of(cls, measurement: CapabilityMeasurement) -> "Measurement":
        return cls(measurement.at, measurement.capability, measurement.value, measurement.group)

    @property
    def measurement(self) -> CapabilityMeasurement:
        return CapabilityMeasurement(self.capability, self.value, self.at, self.group)


@dataclass(frozen=True)
class Retraining(LifecycleEvent):
    note: str = ""

    kind = "retraining"


@dataclass(frozen=True)
class ProfileChange(LifecycleEvent):
    profile: TrustProfile

    kind = "profile_change"


@dataclass(frozen=True)
class ArtifactHistory:
    """
    One AI system's timeline. The first event is its Deployment, which fixes t0, the techno-function, the initial
    profile and the ladder. Events are ordered by tick; ties keep ingestion order.
    """

    system_id: str
    events: Tuple[LifecycleEvent, ...]

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))

        if not is_identifier(self.system_id):
            raise InvalidHistory(f"invalid system_id '{self.system_id}'")
        if not self.events or not isinstance(self.events[0], Deployment):
            raise InvalidHistory(f"{self.system_id}: the first event must be its Deployment")

        previous = None
        for event in self.events:
            _require_tick(event.at, f"{self.system_id} {event.kind} timestamp")

            if previous is not None:
                if isinstance(event, Deployment):
                    raise InvalidHistory(f"{self.system_id}: more than one Deployment")
                if event.at < previous.at:
                    raise InvalidHistory(f"{self.system_id}: {event.kind} at {event.at} precedes {previous.at}")

            previous = event

    @classmethod
    def deploy(
        cls,
        system_id: str,
        techno_function: TechnoFunction,
        profile: TrustProfile,
        ladder: TrustLadder,
        at: Timestamp = 0,
    ) -> "ArtifactHistory":
        return cls(system_id, (Deployment(at, techno_function, profile, ladder),))

    def with_event(self, event: LifecycleEvent) -> "ArtifactHistory":
        return ArtifactHistory(self.system_id, self.events + (event,))

    def with_events(self, events: Iterable[LifecycleEvent]) -> "ArtifactHistory":
        return ArtifactHistory(self.system_id, self.events + tuple(events))

    @property
    def deployment(self) -> Deployment:
        return self.events[0]  # type: ignore

    @property
    def t0(self) -> Timestamp:
        return self.deployment.at

    @property
    def techno_function(self) -> TechnoFunction:
        return self.deployment.techno_function

    @property
    def initial_profile(self) -> TrustProfile:
        return self.deployment.profile

    @property
    def ladder(self) -> TrustLadder:
        return self.deployment.ladder

    def require_deployed(self, t: Timestamp) -> None:
        if t < self.t0:
            raise BeforeDeployment(self.system_id, t, self.t0)

    @cached_property
    def change_points(self) -> Tuple[Timestamp, ...]:
        """Sorted distinct ticks of every event after the Deployment."""

        return tuple(sorted({event.at for event in self.events[1:]}))

    @cached_property
    def _profile_changes(self) -> Tuple[List[Timestamp], List[TrustProfile]]:
        ticks, profiles = [], []

        for event in self.events:
            if isinstance(event, ProfileChange):
                if ticks and ticks[-1] == event.at:
                    profiles[-1] = event.profile
                else:
                    ticks.append(event.at)
                    profiles.append(event.profile)

        return ticks, profiles

    @cached_property
    def _series(self) -> Dict[Tuple[str, Optional[str]], Tuple[List[Timestamp], List[Decimal]]]:
        series: Dict[Tuple[str, Optional[str]], Tuple[List[Timestamp], List[Decimal]]] = {}

        for event in self.events:
            if not isinstance(event, Measurement):
                continue

            ticks, values = series.setdefault((event.capability, event.group), ([], []))

            # Several measurements on one tick: the last one ingested is the one in force
            if ticks and ticks[-1] == event.at:
                values[-1] = event.value
            else:
                ticks.append(event.at)
                values.append(event.value)

        return series

    def profile_at(self, t: Timestamp) -> TrustProfile:
        self.require_deployed(t)
        ticks, profiles = self._profile_changes
        index = bisect_right(ticks, t)

        return self.initial_profile if index == 0 else profiles[index - 1]

    def series(self, capability: str, group: Optional[str] = None) -> Tuple[List[Timestamp], List[Decimal]]:
        return self._series.get((capability, group), ([], []))

    def value_at(self, capability: str, t: Timestamp, group: Optional[str] = None) -> Optional[Decimal]:
        ticks, values = self.series(capability, group)
        index = bisect_right(ticks, t)

        return None if index == 0 else values[index - 1]

    def groups(self, capability: str, until: Optional[Timestamp] = None) -> Tuple[str, ...]:
        found = {
            group
            for (name, group), (ticks, _) in self._series.items()
            if name == capability and group is not None and (until is None or ticks[0] <= until)
        }

        return tuple(sorted(found))


def kind_membership(tf: TechnoFunction, kind: KindPath) -> bool:
    return kind.contains(tf.kind_path)


def profile_at(h: ArtifactHistory, t: Timestamp) -> TrustProfile:
    return h.profile_at(t)


def profiles_equal(a: TrustProfile, b: TrustProfile) -> bool:
    return a.canonical() == b.canonical()
