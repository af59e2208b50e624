"""
A module containing the append-only ledger of artifact histories: the JSON-lines file format, event validation and
canonical (de)serialization.

The first line of a ledger is its header document, every further line one event of one system. Contracts and
ladders are stored as canonical DSL text and decimals as strings, so that saving a loaded ledger is byte-stable.
"""

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from idem.contracts import decimal_literal, parse_ladder, parse_profile
from idem.exceptions import (
    DuplicateContract,
    DuplicateDeployment,
    MalformedRecord,
    MissingDeployment,
    OutOfOrder,
    ParseError,
    UnknownSystem,
    UnsupportedVersion,
)
from idem.model import (
    ArtifactHistory,
    Deployment,
    LifecycleEvent,
    Measurement,
    ProfileChange,
    Retraining,
    TechnoFunction,
    Timestamp,
    TrustProfile,
    canonical_decimal,
    is_identifier,
    is_tick,
)

logger = logging.getLogger("IDEM")

LEDGER_VERSION = 1
SUPPORTED_VERSIONS = frozenset({1})
TICK = timedelta(milliseconds=1)
DEFAULT_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass(frozen=True)
class LedgerHeader:
    epoch: datetime = DEFAULT_EPOCH
    tick_unit: str = "ms"
    version: int = LEDGER_VERSION

    def ticks_at(self, instant: datetime) -> Timestamp:
        ticks = (instant - self.epoch) // TICK

        if ticks < 0:
            raise ValueError(f"{instant.isoformat()} precedes the ledger epoch {self.epoch.isoformat()}")

        return ticks

    def instant_at(self, ticks: Timestamp) -> datetime:
        return self.epoch + ticks * TICK

    def parse_time(self, text: str) -> Timestamp:
        """Integer ticks, or an ISO-8601 instant mapped through the epoch."""

        if text.isdigit():
            return int(text)

        instant = datetime.fromisoformat(text)
        if instant.tzinfo is None:
            raise ValueError(f"'{text}' has no UTC offset")

        return self.ticks_at(instant)

    def to_dict(self) -> Dict[str, Any]:
        return {"type": "header", "epoch": self.epoch.isoformat(), "tick_unit": self.tick_unit, "version": self.version}

    @classmethod
    def from_dict(cls, document: Dict[str, Any], line: int = 1) -> "LedgerHeader":
        if document.get("type") != "header":
            raise MalformedRecord("the first line must be the header document", line)

        version = document.get("version")
        if isinstance(version, bool) or not isinstance(version, int):
            raise MalformedRecord("header version must be an integer", line)
        if version not in SUPPORTED_VERSIONS:
            raise UnsupportedVersion(f"ledger version {version} is not supported", line)
        if document.get("tick_unit") != "ms":
            raise MalformedRecord("tick_unit must be 'ms'", line)

        try:
            epoch = datetime.fromisoformat(document["epoch"])
        except (KeyError, TypeError, ValueError) as e:
            raise MalformedRecord("header epoch must be an ISO-8601 instant", line) from e

        if epoch.tzinfo is None:
            raise MalformedRecord("header epoch needs a UTC offset", line)

        return cls(epoch, "ms", version)


@dataclass(frozen=True)
class LedgerRecord:
    system_id: str
    event: LifecycleEvent


@dataclass(frozen=True)
class LedgerFile:
    header: LedgerHeader = field(default_factory=LedgerHeader)
    records: Tuple[LedgerRecord, ...] = ()

    @cached_property
    def latest_ticks(self) -> Dict[str, Timestamp]:
        latest: Dict[str, Timestamp] = {}

        for record in self.records:
            latest[record.system_id] = record.event.at

        return latest

    @cached_property
    def _histories(self) -> Dict[str, ArtifactHistory]:
        events: Dict[str, List[LifecycleEvent]] = {}

        for record in self.records:
            events.setdefault(record.system_id, []).append(record.event)

        return {system_id: ArtifactHistory(system_id, tuple(items)) for system_id, items in events.items()}

    def histories(self) -> List[ArtifactHistory]:
        """Histories in order of deployment in the file."""

        return list(self._histories.values())

    def history(self, system_id: str) -> ArtifactHistory:
        try:
            return self._histories[system_id]
        except KeyError:
            raise UnknownSystem(f"no system '{system_id}' in the ledger") from None


def _validate(latest: Dict[str, Timestamp], system_id: str, event: LifecycleEvent, line: Optional[int]) -> None:
    if not is_identifier(system_id):
        raise MalformedRecord(f"invalid system_id '{system_id}'", line)
    if not is_tick(event.at):
        raise MalformedRecord(f"timestamp must be an integer tick in [0, 2**63), got {event.at!r}", line)

    if isinstance(event, Deployment):
        if system_id in latest:
            raise DuplicateDeployment(f"{system_id} is already deployed", line)
    elif system_id not in latest:
        raise MissingDeployment(f"{event.kind} for {system_id}, which has no Deployment", line)
    elif event.at < latest[system_id]:
        raise OutOfOrder(f"{event.kind} at {event.at} for {system_id}, latest recorded is {latest[system_id]}", line)

    latest[system_id] = event.at


def append_event(file: LedgerFile, system_id: str, e: LifecycleEvent) -> LedgerFile:
    latest = dict(file.latest_ticks)
    _validate(latest, system_id, e, None)

    return LedgerFile(file.header, file.records + (LedgerRecord(system_id, e),))


def encode_event(system_id: str, event: LifecycleEvent) -> Dict[str, Any]:
    document: Dict[str, Any] = {"type": "event", "system": system_id, "event": event.kind, "at": event.at}

    if isinstance(event, Deployment):
        techno_function: Dict[str, Any] = {"verb": event.techno_function.verb.value}
        if event.techno_function.object is not None:
            techno_function["object"] = event.techno_function.object
        techno_function["resources"] = list(event.techno_function.resources)

        document["techno_function"] = techno_function
        document["profile"] = list(event.profile.canonical())
        document["ladder"] = event.ladder.render()
    elif isinstance(event, Measurement):
        document["capability"] = event.capability
        document["value"] = canonical_decimal(event.value)
        if event.group is not None:
            document["group"] = event.group
    elif isinstance(event, Retraining):
        document["note"] = event.note
    elif isinstance(event, ProfileChange):
        document["profile"] = list(event.profile.canonical())
    else:
        raise TypeError(f"cannot encode {type(event).__name__}")

    return document


def _profile(document: Dict[str, Any]) -> TrustProfile:
    contracts = document["profile"]

    if not isinstance(contracts, list) or not all(isinstance(contract, str) for contract in contracts):
        raise TypeError("profile must be a list of contract texts")

    return parse_profile(contracts)


def decode_event(document: Any, line: Optional[int] = None) -> Tuple[str, LifecycleEvent]:
    if not isinstance(document, dict) or document.get("type", "event") != "event":
        raise MalformedRecord("expected an event document", line)

    try:
        system_id, kind, at = document["system"], document["event"], document["at"]

        if not is_tick(at):
            raise ValueError(f"'at' must be an integer tick in [0, 2**63), got {at!r}")

        if kind == "deployment":
            definition, ladder = document["techno_function"], document["ladder"]
            if not isinstance(ladder, str):
                raise TypeError("ladder must be ladder DSL text")

            resources = definition.get("resources", [])
            if not isinstance(resources, list):
                raise TypeError("resources must be a list")

            techno_function = TechnoFunction(definition["verb"], definition.get("object"), tuple(resources))
            event: LifecycleEvent = Deployment(at, techno_function, _profile(document), parse_ladder(ladder))
        elif kind == "measurement":
            if not isinstance(document["value"], str):
                raise TypeError("measurement values are decimal strings")

            value = decimal_literal(document["value"])
            event = Measurement(at, document["capability"], value, document.get("group"))
        elif kind == "retraining":
            event = Retraining(at, str(document.get("note", "")))
        elif kind == "profile_change":
            event = ProfileChange(at, _profile(document))
        else:
            raise ValueError(f"unknown event kind '{kind}'")
    except (AttributeError, KeyError, TypeError, ValueError, ParseError, DuplicateContract) as e:
        raise MalformedRecord(f"invalid event document: {e}", line) from e

    return system_id, event


def parse_event_document(text: str) -> Tuple[str, LifecycleEvent]:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"event is not a JSON document: {e.msg}") from e
    except RecursionError as e:
        raise MalformedRecord("event document is nested too deeply") from e

    return decode_event(document)


def canonical_line(document: Dict[str, Any]) -> bytes:
    return (json.dumps(document, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n").encode("utf-8")


def read_ledger(data: bytes) -> LedgerFile:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedRecord("ledger is not UTF-8", data[: e.start].count(b"\n") + 1) from e

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        return LedgerFile()

    header = None
    records: List[LedgerRecord] = []
    latest: Dict[str, Timestamp] = {}

    for number, content in enumerate(lines, start=1):
        try:
            document = json.loads(content)
        except json.JSONDecodeError as e:
            raise MalformedRecord(f"not a JSON document: {e.msg}", number) from e
        except RecursionError as e:
            raise MalformedRecord("JSON document nested too deeply", number) from e

        if not isinstance(document, dict):
            raise MalformedRecord("not a JSON object", number)

        if header is None:
            header = LedgerHeader.from_dict(document, number)
            continue

        system_id, event = decode_event(document, number)
        _validate(latest, system_id, event, number)
        records.append(LedgerRecord(system_id, event))

    return LedgerFile(header, tuple(records))


def dump_ledger(file: LedgerFile) -> bytes:
    lines = [canonical_line(file.header.to_dict())]
    lines += [canonical_line(encode_event(record.system_id, record.event)) for record in file.records]

    return b"".join(lines)


def load(data: bytes) -> List[ArtifactHistory]:
    return read_ledger(data).histories()


def save(histories: Sequence[ArtifactHistory], header: Optional[LedgerHeader] = None) -> bytes:
    """Histories are written one after the other, each in event order."""

    latest: Dict[str, Timestamp] = {}
    records: List[LedgerRecord] = []

    for h in histories:
        for event in h.events:
            _validate(latest, h.system_id, event, None)
            records.append(LedgerRecord(h.system_id, event))

    return dump_ledger(LedgerFile(header or LedgerHeader(), tuple(records)))


def read_path(path: Union[str, Path]) -> LedgerFile:
    return read_ledger(Path(path).read_bytes())


def append_to_path(path: Union[str, Path], system_id: str, event: LifecycleEvent) -> LedgerFile:
    """Validate the event against the ledger on disk, then append one line without touching earlier bytes."""

    path = Path(path)
    data = path.read_bytes() if path.exists() else b""
    ledger = read_ledger(data)
    updated = append_event(ledger, system_id, event)

    with path.open("ab") as f:
        if not data:
            f.write(canonical_line(ledger.header.to_dict()))
        elif not data.endswith(b"\n"):
            f.write(b"\n")

        f.write(canonical_line(encode_event(system_id, event)))

    logger.debug("Appended %s at %s for %s to %s", event.kind, event.at, system_id, path)

    return updated
