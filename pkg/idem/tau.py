"""
The tau module evaluates capability levels, contract satisfaction and the trustworthiness function over histories.

Measurements are step-held: a capability keeps the value of its latest measurement until the next one, so the
trustworthiness function is piecewise constant and only changes at event timestamps.
"""

import itertools
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from decimal import Decimal
from typing import Dict, List, Optional, Tuple

from idem.exceptions import InvalidInterval, NoData
from idem.model import ArtifactHistory, ContractSpec, DecimalLike, Timestamp, exact_arithmetic, to_decimal


@dataclass(frozen=True)
class TauPiece:
    start: Timestamp
    end: Timestamp
    level: Decimal


@dataclass(frozen=True)
class TauTrajectory:
    """The trustworthiness function over [start, end) as maximal constant pieces."""

    start: Timestamp
    end: Timestamp
    pieces: Tuple[TauPiece, ...]

    @property
    def discontinuities(self) -> Tuple[Timestamp, ...]:
        return tuple(piece.start for piece in self.pieces[1:])

    def level_at(self, t: Timestamp) -> Decimal:
        if not self.start <= t < self.end:
            raise InvalidInterval(f"{t} lies outside [{self.start}, {self.end})")

        index = bisect_right([piece.start for piece in self.pieces], t) - 1

        return self.pieces[index].level


def capability_value_at(h: ArtifactHistory, capability: str, t: Timestamp, group: Optional[str] = None) -> Decimal:
    h.require_deployed(t)
    value = h.value_at(capability, t, group)

    if value is None:
        raise NoData(h.system_id, capability, t, group)

    return value


def _window_holds(h: ArtifactHistory, c: ContractSpec, start: Timestamp, t: Timestamp, group: Optional[str]) -> bool:
    """The window mean against the threshold, compared as sum against threshold times count."""

    ticks, values = h.series(c.capability, group)
    in_window = values[bisect_left(ticks, start) : bisect_right(ticks, t)]

    if not in_window:
        raise NoData(h.system_id, c.capability, t, group)

    with exact_arithmetic():
        return c.comparator.holds(sum(in_window, Decimal(0)), c.threshold * len(in_window))


def _longest_episode(h: ArtifactHistory, c: ContractSpec, start: Timestamp, t: Timestamp, group: Optional[str]) -> int:
    """Length of the longest maximal run inside [start, t] during which the step-held value violates c."""

    ticks, values = h.series(c.capability, group)
    first, last = bisect_right(ticks, start), bisect_right(ticks, t)
    points = [(start, values[first - 1])] if first > 0 else []
    points += list(zip(ticks[first:last], values[first:last]))

    longest = 0
    episode_start: Optional[Timestamp] = None

    for at, value in points:
        violated = not c.comparator.holds(value, c.threshold)

        if violated and episode_start is None:
            episode_start = at
        elif not violated and episode_start is not None:
            longest = max(longest, at - episode_start)
            episode_start = None

    if episode_start is not None:
        longest = max(longest, t - episode_start)

    return longest


def _satisfied_for(c: ContractSpec, h: ArtifactHistory, t: Timestamp, group: Optional[str]) -> bool:
    if c.window is None:
        return c.comparator.holds(capability_value_at(h, c.capability, t, group), c.threshold)

    start = max(t - c.window, h.t0)

    if not _window_holds(h, c, start, t, group):
        return False
    if c.max_episode is not None:
        return _longest_episode(h, c, start, t, group) <= c.max_episode

    return True


def _groups_in_scope(c: ContractSpec, h: ArtifactHistory, t: Timestamp) -> List[str]:
    groups = h.groups(c.capability, until=t)

    if c.window is None:
        return list(groups)

    start = max(t - c.window, h.t0)

    return [group for group in groups if any(start <= tick <= t for tick in h.series(c.capability, group)[0])]


def contract_satisfied(c: ContractSpec, h: ArtifactHistory, t: Timestamp) -> bool:
    h.require_deployed(t)

    if not c.per_group:
        return _satisfied_for(c, h, t, None)

    groups = _groups_in_scope(c, h, t)
    if not groups:
        raise NoData(h.system_id, c.capability, t)

    return all(_satisfied_for(c, h, t, group) for group in groups)


def _ladder_inputs(h: ArtifactHistory, t: Timestamp) -> Dict[str, Decimal]:
    return {capability: capability_value_at(h, capability, t) for capability in h.ladder.capabilities}


def tau_at(h: ArtifactHistory, t: Timestamp) -> Decimal:
    h.require_deployed(t)

    return h.ladder.evaluate(_ladder_inputs(h, t))


def tau_trajectory(h: ArtifactHistory, start: Timestamp, end: Timestamp) -> TauTrajectory:
    if start >= end:
        raise InvalidInterval(f"empty trajectory interval [{start}, {end})")

    h.require_deployed(start)
    starts: List[Timestamp] = []
    levels: List[Decimal] = []

    for point in [start] + [tick for tick in h.change_points if start < tick < end]:
        level = tau_at(h, point)

        if levels and levels[-1] == level:
            continue

        starts.append(point)
        levels.append(level)

    ends = starts[1:] + [end]
    pieces = tuple(TauPiece(s, e, level) for s, e, level in zip(starts, ends, levels))

    return TauTrajectory(start, end, pieces)


def tau_stable_under(h: ArtifactHistory, t: Timestamp, delta: DecimalLike) -> bool:
    """True iff τ at t does not move when any ladder capability shifts by -delta, 0 or +delta."""

    delta = to_decimal(delta)
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")

    h.require_deployed(t)
    values = _ladder_inputs(h, t)
    reference = h.ladder.evaluate(values)
    capabilities = list(values)

    for offsets in itertools.product((-delta, Decimal(0), delta), repeat=len(capabilities)):
        with exact_arithmetic():
            shifted = {capability: values[capability] + offset for capability, offset in zip(capabilities, offsets)}

        if h.ladder.evaluate(shifted) != reference:
            return False

    return True
