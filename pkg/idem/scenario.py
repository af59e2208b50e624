"""
A module containing executable scenarios: worked examples of identity and persistence frozen as ledgers plus
queries with expected outcomes, and generators for synthetic capability trajectories.

A scenario file is a ledger followed by one scenario document::

    {"name":"toy_bob","notes":"...","queries":[{"args":{...},"expect":{...},"op":"tau_at"}],"type":"scenario"}
"""

import json
import logging
import random
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

from idem.contracts import MAX_FRACTIONAL_DIGITS
from idem.exceptions import IdemException, InvalidModel, InvalidScenario
from idem.identity import (
    IdentityVerdict,
    check_diachronic_pointwise,
    check_general_identity,
    check_persistence_path,
    check_synchronic,
    pairwise_partition,
    partition_fleet,
    persistence_segments,
    tolerance_relation,
)
from idem.ledger import LedgerFile, canonical_line, dump_ledger, read_ledger
from idem.model import (
    ArtifactHistory,
    CapabilityMeasurement,
    DecimalLike,
    KindPath,
    LifecycleEvent,
    Measurement,
    Retraining,
    TechnoFunction,
    Timestamp,
    TrustLadder,
    TrustProfile,
    canonical_decimal,
    exact_arithmetic,
    is_tick,
    to_decimal,
)
from idem.tau import tau_at

logger = logging.getLogger("IDEM")

FIXTURES = Path(__file__).parent / "fixtures"
BUILTIN_NAMES = ("toy_bob", "warehouse", "hospitals", "llm_two_countries", "fitness_app", "figure_1")
QUANTUM = Decimal(1).scaleb(-MAX_FRACTIONAL_DIGITS)


def _non_negative(value: DecimalLike, what: str) -> Decimal:
    try:
        result = to_decimal(value)
    except (TypeError, ValueError) as e:
        raise InvalidModel(f"{what}: {e}") from e

    if result < 0:
        raise InvalidModel(f"{what} must be non-negative, got {result}")

    return result


@dataclass(frozen=True)
class Constant:
    level: Decimal

    def __post_init__(self):
        object.__setattr__(self, "level", _non_negative(self.level, "constant level"))

    @property
    def start(self) -> Decimal:
        return self.level

    def drift(self, base: Decimal, anchor: Timestamp, t: Timestamp) -> Decimal:
        return base


@dataclass(frozen=True)
class LinearDecay:
    """Loses `rate` per tick since the anchor."""

    start: Decimal
    rate: Decimal

    def __post_init__(self):
        object.__setattr__(self, "start", _non_negative(self.start, "start value"))
        object.__setattr__(self, "rate", _non_negative(self.rate, "decay rate"))

    def drift(self, base: Decimal, anchor: Timestamp, t: Timestamp) -> Decimal:
        return base - self.rate * (t - anchor)


@dataclass(frozen=True)
class StepDecay:
    """Drops by a fixed amount at given ticks. Only drops strictly after the anchor count."""

    start: Decimal
    drops: Tuple[Tuple[Timestamp, Decimal], ...]

    def __post_init__(self):
        object.__setattr__(self, "start", _non_negative(self.start, "start value"))

        drops = []
        for tick, amount in self.drops:
            if not is_tick(tick):
                raise InvalidModel(f"drop tick must be an integer tick, got {tick!r}")

            drops.append((tick, _non_negative(amount, f"drop at {tick}")))

        object.__setattr__(self, "drops", tuple(sorted(drops)))

    def drift(self, base: Decimal, anchor: Timestamp, t: Timestamp) -> Decimal:
        return base - sum((amount for tick, amount in self.drops if anchor < tick <= t), Decimal(0))


DriftModel = Union[Constant, LinearDecay, StepDecay]


@dataclass(frozen=True)
class Retrain:
    at: Timestamp
    restore_to: Decimal

    def __post_init__(self):
        object.__setattr__(self, "restore_to", _non_negative(self.restore_to, "restore target"))


def generate_trajectory(
    model: DriftModel,
    retrainings: Sequence[Retrain],
    span: Tuple[Timestamp, Timestamp],
    seed: int,
    capability: str = "accuracy",
    step: int = 1,
    jitter: DecimalLike = 0,
) -> List[CapabilityMeasurement]:
    """
    One measurement every `step` ticks of [start, end) and one at every retraining. Values follow the drift model
    from the latest anchor: the model's start value, or the restore target of the latest retraining.
    """

    start, end = span
    jitter = _non_negative(jitter, "jitter")

    if start >= end:
        raise InvalidModel(f"empty span [{start}, {end})")
    if step <= 0:
        raise InvalidModel(f"step must be positive, got {step}")
    if start < 0:
        raise InvalidModel(f"span starts at negative tick {start}")

    pending = sorted(retrainings, key=lambda retrain: retrain.at)
    for retrain in pending:
        if not start <= retrain.at < end:
            raise InvalidModel(f"retraining at {retrain.at} lies outside [{start}, {end})")

    rng = random.Random(seed)
    base, anchor = model.start, start
    measurements = []

    for t in sorted(set(range(start, end, step)) | {retrain.at for retrain in pending}):
        while pending and pending[0].at <= t:
            base, anchor = pending[0].restore_to, pending[0].at
            pending.pop(0)

        with exact_arithmetic():
            value = model.drift(base, anchor, t)
            if jitter:
                value += jitter * Decimal(rng.randint(-1000, 1000)) / 1000

            value = max(value, Decimal(0)).quantize(QUANTUM)

        measurements.append(CapabilityMeasurement(capability, value, t))

    return measurements


def build_history(
    system_id: str,
    techno_function: TechnoFunction,
    profile: TrustProfile,
    ladder: TrustLadder,
    measurements: Sequence[CapabilityMeasurement],
    retrainings: Sequence[Retrain] = (),
    deployed_at: Optional[Timestamp] = None,
) -> ArtifactHistory:
    ticks = [m.at for m in measurements] + [retrain.at for retrain in retrainings]
    if deployed_at is None:
        deployed_at = min(ticks, default=0)

    # A retraining precedes the measurements taken on its tick
    keyed: List[Tuple[Timestamp, int, LifecycleEvent]] = [
        (retrain.at, 0, Retraining(retrain.at, f"restore to {canonical_decimal(retrain.restore_to)}"))
        for retrain in retrainings
    ]
    keyed += [(m.at, 1, Measurement.of(m)) for m in measurements]
    keyed.sort(key=lambda item: (item[0], item[1]))

    history = ArtifactHistory.deploy(system_id, techno_function, profile, ladder, deployed_at)

    return history.with_events(event for _, _, event in keyed)


@dataclass(frozen=True)
class Query:
    op: str
    args: Dict[str, Any] = field(default_factory=dict)
    expect: Dict[str, Any] = field(default_factory=dict)

    def system_ids(self) -> List[str]:
        referenced = [self.args[key] for key in ("x", "y") if key in self.args]

        return referenced + list(self.args.get("systems", []))

    def to_dict(self) -> Dict[str, Any]:
        return {"op": self.op, "args": self.args, "expect": self.expect}

    def __str__(self) -> str:
        arguments = " ".join(f"{key}={self.args[key]}" for key in sorted(self.args))

        return f"{self.op} {arguments}"


def _verdict(verdict: IdentityVerdict) -> Dict[str, Any]:
    condition = None if verdict.failed_condition is None else verdict.failed_condition.value

    return {"identical": verdict.identical, "failed_condition": condition, "on_path": verdict.on_path}


def _kind(args: Dict[str, Any]) -> KindPath:
    return KindPath.parse(args["kind"])


def _fleet(ledger: LedgerFile, args: Dict[str, Any]) -> List[ArtifactHistory]:
    if "systems" in args:
        return [ledger.history(system_id) for system_id in args["systems"]]

    return ledger.histories()


def _partition(ledger: LedgerFile, args: Dict[str, Any]) -> Dict[str, Any]:
    fleet, kind = _fleet(ledger, args), _kind(args)
    partition = partition_fleet(fleet, args["t"], kind)

    if partition != pairwise_partition(fleet, args["t"], kind):
        raise InvalidScenario("partition disagrees with the pairwise identity oracle")

    return {"classes": [list(members) for members in partition.classes], "excluded": dict(partition.excluded)}


def _segments(ledger: LedgerFile, args: Dict[str, Any]) -> Dict[str, Any]:
    segments = persistence_segments(ledger.history(args["x"]), args["from"], args["to"], _kind(args))

    return {
        "segments": [[segment.start, segment.end, canonical_decimal(segment.level)] for segment in segments],
        "count": len(segments),
    }


OPERATIONS: Dict[str, Callable[[LedgerFile, Dict[str, Any]], Dict[str, Any]]] = {
    "check_general_identity": lambda ledger, args: _verdict(
        check_general_identity(
            ledger.history(args["x"]), args["t1"], ledger.history(args["y"]), args["t2"], _kind(args)
        )
    ),
    "check_synchronic": lambda ledger, args: _verdict(
        check_synchronic(ledger.history(args["x"]), ledger.history(args["y"]), args["t"], _kind(args))
    ),
    "check_diachronic_pointwise": lambda ledger, args: _verdict(
        check_diachronic_pointwise(ledger.history(args["x"]), args["t1"], args["t2"], _kind(args))
    ),
    "check_persistence_path": lambda ledger, args: _verdict(
        check_persistence_path(ledger.history(args["x"]), args["t1"], args["t2"], _kind(args))
    ),
    "persistence_segments": _segments,
    "partition_fleet": _partition,
    "tau_at": lambda ledger, args: {"level": canonical_decimal(tau_at(ledger.history(args["x"]), args["t"]))},
    "tolerance_relation": lambda ledger, args: {
        "related": tolerance_relation(
            ledger.history(args["x"]), ledger.history(args["y"]), args["t"], to_decimal(args["epsilon"])
        )
    },
}


@dataclass(frozen=True)
class Scenario:
    name: str
    ledger: LedgerFile
    queries: Tuple[Query, ...] = ()
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        known = {h.system_id for h in self.ledger.histories()}

        for query in self.queries:
            if query.op not in OPERATIONS:
                raise InvalidScenario(f"{self.name}: unknown operation '{query.op}'")

            missing = [system_id for system_id in query.system_ids() if system_id not in known]
            if missing:
                raise InvalidScenario(f"{self.name}: {query.op} references unknown systems {missing}")


@dataclass(frozen=True)
class QueryOutcome:
    query: Query
    expected: Dict[str, Any]
    actual: Optional[Dict[str, Any]]
    passed: bool
    error: Optional[str] = None

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        observed = self.error if self.error is not None else json.dumps(self.actual, sort_keys=True)

        return f"{status} {self.query} expected={json.dumps(self.expected, sort_keys=True)} actual={observed}"


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    outcomes: Tuple[QueryOutcome, ...]

    @property
    def passed(self) -> bool:
        return all(outcome.passed for outcome in self.outcomes)


def run_scenario(s: Scenario) -> ScenarioReport:
    outcomes = []

    for query in s.queries:
        try:
            actual = OPERATIONS[query.op](s.ledger, query.args)
        except (IdemException, KeyError, TypeError, ValueError) as e:
            outcomes.append(QueryOutcome(query, query.expect, None, False, f"{type(e).__name__}: {e}"))
            continue

        passed = all(actual.get(key) == value for key, value in query.expect.items())
        outcomes.append(QueryOutcome(query, query.expect, actual, passed))
        logger.debug("%s: %s -> %s", s.name, query, "pass" if passed else "fail")

    return ScenarioReport(s.name, tuple(outcomes))


def load_scenario(data: bytes) -> Scenario:
    """The last line is the scenario document, everything before it the ledger."""

    try:
        lines = data.decode("utf-8").rstrip("\n").split("\n")
        document = json.loads(lines[-1])
    except (UnicodeDecodeError, json.JSONDecodeError, RecursionError) as e:
        raise InvalidScenario(f"the last line must be a scenario document: {e}") from e

    if not isinstance(document, dict) or document.get("type") != "scenario":
        raise InvalidScenario("the last line must be a scenario document")

    ledger = read_ledger(("\n".join(lines[:-1]) + "\n").encode("utf-8"))

    try:
        queries = tuple(Query(q["op"], q.get("args", {}), q.get("expect", {})) for q in document.get("queries", []))
        return Scenario(document["name"], ledger, queries, document.get("notes", ""))
    except (KeyError, TypeError, AttributeError) as e:
        raise InvalidScenario(f"malformed scenario document: {e}") from e


def dump_scenario(s: Scenario) -> bytes:
    document = {"type": "scenario", "name": s.name, "notes": s.notes, "queries": [q.to_dict() for q in s.queries]}

    return dump_ledger(s.ledger) + canonical_line(document)


def builtin_scenario(name: str) -> Scenario:
    if name not in BUILTIN_NAMES:
        raise InvalidScenario(f"no builtin scenario '{name}', choose from {', '.join(BUILTIN_NAMES)}")

    return load_scenario((FIXTURES / f"{name}.jsonl").read_bytes())


def builtin_scenarios() -> List[Scenario]:
    return [builtin_scenario(name) for name in BUILTIN_NAMES]
