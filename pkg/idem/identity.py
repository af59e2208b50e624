"""
The identity module decides the identity criteria of AI system kinds: the general criterion comparing a system x at
t1 with a system y at t2, its synchronic and diachronic readings, path-continuous persistence and fleet partitioning.

Identity is always relative to an explicit kind. Conditions are checked in a fixed order (deployment time, kind,
profile, level) and a negative verdict names the first one that failed.
"""

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

from idem.exceptions import InvalidInterval, NoData, NotOfKind
from idem.model import (
    ArtifactHistory,
    DecimalLike,
    KindPath,
    Timestamp,
    TrustProfile,
    exact_arithmetic,
    kind_membership,
    profiles_equal,
    to_decimal,
)
from idem.tau import tau_at

logger = logging.getLogger("IDEM")


class Condition(Enum):
    DEPLOYMENT_MISMATCH = "DeploymentMismatch"
    KIND_MISMATCH = "KindMismatch"
    PROFILE_MISMATCH = "ProfileMismatch"
    LEVEL_MISMATCH = "LevelMismatch"
    NO_DATA = "NoData"


@dataclass(frozen=True)
class IdentityVerdict:
    identical: bool
    failed_condition: Optional[Condition] = None
    details: str = ""
    on_path: bool = False

    def __post_init__(self):
        if self.identical == (self.failed_condition is not None):
            raise ValueError("a failed condition is reported if and only if the verdict is negative")

    @classmethod
    def success(cls, details: str = "") -> "IdentityVerdict":
        return cls(True, None, details)

    @classmethod
    def failure(cls, condition: Condition, details: str, on_path: bool = False) -> "IdentityVerdict":
        return cls(False, condition, details, on_path)

    def __str__(self) -> str:
        if self.identical:
            return "identical"

        suffix = "(path)" if self.on_path else ""

        return f"not-identical: {self.failed_condition.value}{suffix}"  # type: ignore


@dataclass(frozen=True)
class PersistenceSegment:
    """A maximal interval of constant profile and level: one incarnation of the system."""

    start: Timestamp
    end: Timestamp
    profile: TrustProfile
    level: Decimal
    incarnation_index: int


@dataclass(frozen=True)
class FleetPartition:
    classes: Tuple[Tuple[str, ...], ...]
    excluded: Dict[str, str] = field(default_factory=dict)

    def __str__(self) -> str:
        return " ".join("{" + ",".join(members) + "}" for members in self.classes)


class UnionFind:
    """
    Disjoint sets with union by rank and path compression.

    >>> uf = UnionFind()
    >>> uf.union("x", "y")
    >>> uf.find("y") == uf.find("x")
    True
    """

    def __init__(self):
        self.parent: Dict[Hashable, Hashable] = {}
        self.rank: Counter = Counter()

    def find(self, x: Hashable) -> Hashable:
        if x not in self.parent:
            self.parent[x] = x
        elif self.parent[x] != x:
            self.parent[x] = self.find(self.parent[x])

        return self.parent[x]

    def union(self, x: Hashable, y: Hashable) -> None:
        px, py = self.find(x), self.find(y)

        if px == py:
            return

        if self.rank[px] < self.rank[py]:
            px, py = py, px

        self.parent[py] = px

        if self.rank[px] == self.rank[py]:
            self.rank[px] += 1

    def groups(self) -> List[List[Hashable]]:
        members: Dict[Hashable, List[Hashable]] = {}

        for x in self.parent:
            members.setdefault(self.find(x), []).append(x)

        return list(members.values())


def check_general_identity(
    x: ArtifactHistory, t1: Timestamp, y: ArtifactHistory, t2: Timestamp, kind: KindPath
) -> IdentityVerdict:
    x.require_deployed(t1)
    y.require_deployed(t2)

    if x.t0 != y.t0:
        return IdentityVerdict.failure(
            Condition.DEPLOYMENT_MISMATCH, f"{x.system_id} deployed at {x.t0}, {y.system_id} at {y.t0}"
        )

    for h in (x, y):
        if not kind_membership(h.techno_function, kind):
            return IdentityVerdict.failure(
                Condition.KIND_MISMATCH, f"{h.system_id} ({h.techno_function.kind_path}) is not of kind {kind}"
            )

    px, py = x.profile_at(t1), y.profile_at(t2)
    if not profiles_equal(px, py):
        return IdentityVerdict.failure(Condition.PROFILE_MISMATCH, f"{px} differs from {py}")

    try:
        lx, ly = tau_at(x, t1), tau_at(y, t2)
    except NoData as e:
        return IdentityVerdict.failure(Condition.NO_DATA, str(e))

    if lx != ly:
        return IdentityVerdict.failure(
            Condition.LEVEL_MISMATCH, f"tau of {x.system_id} at {t1} is {lx}, tau of {y.system_id} at {t2} is {ly}"
        )

    return IdentityVerdict.success(f"{x.system_id}@{t1} and {y.system_id}@{t2} are identical as {kind}")


def check_synchronic(x: ArtifactHistory, y: ArtifactHistory, t: Timestamp, kind: KindPath) -> IdentityVerdict:
    return check_general_identity(x, t, y, t, kind)


def check_diachronic_pointwise(x: ArtifactHistory, t1: Timestamp, t2: Timestamp, kind: KindPath) -> IdentityVerdict:
    """Only the endpoints are compared: a dip in between that is restored by t2 does not matter here."""

    return check_general_identity(x, t1, x, t2, kind)


def check_persistence_path(x: ArtifactHistory, t1: Timestamp, t2: Timestamp, kind: KindPath) -> IdentityVerdict:
    """The pointwise criterion, plus constant profile and level at every instant of [t1, t2]."""

    if t1 > t2:
        raise InvalidInterval(f"persistence path from {t1} back to {t2}")

    verdict = check_diachronic_pointwise(x, t1, t2, kind)
    if not verdict.identical:
        return verdict

    profile, level = x.profile_at(t1), tau_at(x, t1)

    for tick in x.change_points:
        if not t1 < tick <= t2:
            continue

        if not profiles_equal(x.profile_at(tick), profile):
            return IdentityVerdict.failure(
                Condition.PROFILE_MISMATCH, f"profile of {x.system_id} changes at {tick}", on_path=True
            )

        current = tau_at(x, tick)
        if current != level:
            return IdentityVerdict.failure(
                Condition.LEVEL_MISMATCH, f"tau of {x.system_id} is {current} at {tick}, {level} at {t1}", on_path=True
            )

    return IdentityVerdict.success(f"{x.system_id} persists through [{t1}, {t2}]")


def persistence_segments(
    x: ArtifactHistory, start: Timestamp, end: Timestamp, kind: KindPath
) -> List[PersistenceSegment]:
    if start >= end:
        raise InvalidInterval(f"empty segmentation interval [{start}, {end})")
    if not kind_membership(x.techno_function, kind):
        raise NotOfKind(f"{x.system_id} ({x.techno_function.kind_path}) is not of kind {kind}")

    x.require_deployed(start)
    breaks: List[Tuple[Timestamp, TrustProfile, Decimal]] = []

    for point in [start] + [tick for tick in x.change_points if start < tick < end]:
        profile, level = x.profile_at(point), tau_at(x, point)

        if breaks and profiles_equal(breaks[-1][1], profile) and breaks[-1][2] == level:
            continue

        breaks.append((point, profile, level))

    ends = [point for point, _, _ in breaks[1:]] + [end]

    return [
        PersistenceSegment(point, segment_end, profile, level, index)
        for index, ((point, profile, level), segment_end) in enumerate(zip(breaks, ends))
    ]


def _screen(
    systems: Sequence[ArtifactHistory], t: Timestamp, kind: KindPath
) -> Tuple[List[Tuple[ArtifactHistory, Decimal]], Dict[str, str]]:
    included: List[Tuple[ArtifactHistory, Decimal]] = []
    excluded: Dict[str, str] = {}
    seen = set()

    for h in systems:
        if h.system_id in seen:
            raise ValueError(f"{h.system_id} appears twice in the fleet")

        seen.add(h.system_id)

        if not kind_membership(h.techno_function, kind):
            excluded[h.system_id] = "kind"
        elif t < h.t0:
            excluded[h.system_id] = "before-deployment"
        else:
            try:
                included.append((h, tau_at(h, t)))
            except NoData:
                excluded[h.system_id] = "no-data"

    return included, excluded


def _sorted_classes(groups: List[List[str]]) -> Tuple[Tuple[str, ...], ...]:
    return tuple(sorted(tuple(sorted(members)) for members in groups))


def partition_fleet(systems: Sequence[ArtifactHistory], t: Timestamp, kind: KindPath) -> FleetPartition:
    """Group systems by (t0, canonical profile, level), which is sound because identity is an equivalence."""

    included, excluded = _screen(systems, t, kind)
    groups: Dict[tuple, List[str]] = {}

    for h, level in included:
        groups.setdefault((h.t0, h.profile_at(t).canonical(), level), []).append(h.system_id)

    partition = FleetPartition(_sorted_classes(list(groups.values())), excluded)
    logger.debug("Partitioned %s systems into %s classes, %s excluded", len(systems), len(groups), len(excluded))

    return partition


def pairwise_partition(systems: Sequence[ArtifactHistory], t: Timestamp, kind: KindPath) -> FleetPartition:
    """Brute-force partition: check_synchronic on every pair, closed transitively with a union-find."""

    included, excluded = _screen(systems, t, kind)
    uf = UnionFind()

    for h, _ in included:
        uf.find(h.system_id)

    for (x, _), (y, _) in itertools.combinations(included, 2):
        if check_synchronic(x, y, t, kind).identical:
            uf.union(x.system_id, y.system_id)

    return FleetPartition(_sorted_classes(uf.groups()), excluded)  # type: ignore


def count_individuals(systems: Sequence[ArtifactHistory], t: Timestamp, kind: KindPath) -> int:
    return len(partition_fleet(systems, t, kind).classes)


def _epsilon(epsilon: DecimalLike) -> Decimal:
    value = to_decimal(epsilon)

    if value < 0:
        raise ValueError(f"epsilon must be non-negative, got {value}")

    return value


def tolerance_relation(x: ArtifactHistory, y: ArtifactHistory, t: Timestamp, epsilon: DecimalLike) -> bool:
    """|tau_x(t) - tau_y(t)| <= epsilon. Not transitive for epsilon > 0, so it is not an identity criterion."""

    bound, lx, ly = _epsilon(epsilon), tau_at(x, t), tau_at(y, t)

    with exact_arithmetic():
        return abs(lx - ly) <= bound


def interval_tolerance_relation(
    x: ArtifactHistory, y: ArtifactHistory, t1: Timestamp, t2: Timestamp, epsilon: DecimalLike
) -> bool:
    """The largest distance between both trustworthiness functions over [t1, t2] stays within epsilon."""

    if t1 > t2:
        raise InvalidInterval(f"tolerance interval from {t1} back to {t2}")

    bound = _epsilon(epsilon)
    points = {t1, t2} | {tick for tick in x.change_points + y.change_points if t1 < tick <= t2}

    levels = [(tau_at(x, point), tau_at(y, point)) for point in sorted(points)]

    with exact_arithmetic():
        return all(abs(lx - ly) <= bound for lx, ly in levels)


def find_transitivity_violation(
    systems: Sequence[ArtifactHistory], t: Timestamp, epsilon: DecimalLike
) -> Optional[Tuple[str, str, str]]:
    """A triple (a, b, c) with a ~ b and b ~ c but not a ~ c under the tolerance relation, if one exists."""

    bound = _epsilon(epsilon)
    levels = {h.system_id: tau_at(h, t) for h in systems}

    with exact_arithmetic():
        for a, b, c in itertools.permutations(sorted(levels), 3):
            related_ab = abs(levels[a] - levels[b]) <= bound
            related_bc = abs(levels[b] - levels[c]) <= bound

            if related_ab and related_bc and abs(levels[a] - levels[c]) > bound:
                return a, b, c

    return None
