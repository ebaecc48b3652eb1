"""Adjacency units, neighbor generation, and the brute-force sensitivity oracle.

Two datasets are adjacent under a relation when one can be obtained from the
other by adding or removing the events of a single *unit*:

    impression                  one impression
    conversion                  one conversion
    user x publisher            all of a user's impressions on one publisher
    user x advertiser           a user's impressions for one advertiser plus
                                their conversions on that advertiser
    user x publisher x adv      a user's impressions on one publisher for one
                                advertiser (conversions excluded: they relate
                                to every publisher)
    user                        everything belonging to one user

The sensitivity oracle enumerates *every* removal neighbor, plus one
addition neighbor per group of a caller-supplied pool of candidate events.
The supremum over all possible additions is not enumerable, so the result
is exact for removals and a certified lower bound overall.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .bounding import (
    Configuration,
    Relation,
    ScopeKey,
    l1_distance,
    run,
)
from .events import (
    Conversion,
    Dataset,
    Impression,
    IntegrityError,
    event_from_record,
    make_dataset,
)


@dataclass(frozen=True)
class AdjacencyUnit:
    """One unit of an adjacency relation: the event ids that move together."""

    relation: Relation
    key: ScopeKey
    impression_ids: frozenset[str]
    conversion_ids: frozenset[str]


def _unit_key_for_impression(relation: Relation, imp: Impression) -> tuple[str, ...]:
    if relation == Relation.IMPRESSION:
        return (imp.id,)
    if relation == Relation.USER_PUBLISHER:
        return (imp.user, imp.publisher)
    if relation == Relation.USER_ADVERTISER:
        return (imp.user, imp.advertiser)
    if relation == Relation.USER_PUBLISHER_ADVERTISER:
        return (imp.user, imp.publisher, imp.advertiser)
    if relation == Relation.USER:
        return (imp.user,)
    raise ValueError(f"impressions do not belong to {relation.value} units")


def _unit_key_for_conversion(relation: Relation, conv: Conversion) -> tuple[str, ...] | None:
    if relation == Relation.CONVERSION:
        return (conv.id,)
    if relation == Relation.USER_ADVERTISER:
        return (conv.user, conv.advertiser)
    if relation == Relation.USER:
        return (conv.user,)
    return None


def adjacency_units(dataset: Dataset, relation: Relation) -> list[AdjacencyUnit]:
    """Partition the dataset's events into the relation's units.

    Every impression belongs to exactly one unit; conversions belong to a
    unit only under the conversion, user x advertiser, and user relations.
    """
    members: dict[tuple[str, ...], tuple[set[str], set[str]]] = {}

    def bucket(key: tuple[str, ...]) -> tuple[set[str], set[str]]:
        return members.setdefault(key, (set(), set()))

    if relation == Relation.CONVERSION:
        for conv in dataset.conversions:
            bucket((conv.id,))[1].add(conv.id)
    else:
        for imp in dataset.impressions:
            bucket(_unit_key_for_impression(relation, imp))[0].add(imp.id)
        for conv in dataset.conversions:
            key = _unit_key_for_conversion(relation, conv)
            if key is not None:
                bucket(key)[1].add(conv.id)
    return [
        AdjacencyUnit(relation, ScopeKey(relation, key),
                      frozenset(imp_ids), frozenset(conv_ids))
        for key, (imp_ids, conv_ids) in members.items()
    ]


def remove_unit(dataset: Dataset, unit: AdjacencyUnit) -> Dataset:
    """The dataset with the unit's events removed (a removal neighbor)."""
    present = dataset.ids()
    missing = (unit.impression_ids | unit.conversion_ids) - present
    if missing:
        raise ValueError(f"stale unit: ids {sorted(missing)} not in dataset")
    return Dataset(
        tuple(i for i in dataset.impressions if i.id not in unit.impression_ids),
        tuple(c for c in dataset.conversions if c.id not in unit.conversion_ids),
    )


@dataclass(frozen=True)
class PoolGroup:
    """Candidate events that would be added together as one unit."""

    label: str
    impressions: tuple[Impression, ...] = ()
    conversions: tuple[Conversion, ...] = ()

    def events(self):
        return (*self.impressions, *self.conversions)


@dataclass(frozen=True)
class NeighborPool:
    """Candidate additions for the sensitivity oracle, grouped by target unit."""

    groups: tuple[PoolGroup, ...] = ()


EMPTY_POOL = NeighborPool()


def parse_pool(lines) -> NeighborPool:
    """Read a pool file: the event JSON-lines schema plus a 'unit' field."""
    grouped: dict[str, tuple[list[Impression], list[Conversion]]] = {}
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        obj = json.loads(raw)
        label = str(obj.get("unit", ""))
        if not label:
            raise ValueError(f"line {lineno}: pool record missing 'unit' field")
        imps, convs = grouped.setdefault(label, ([], []))
        event = event_from_record(obj, lineno)
        if isinstance(event, Impression):
            imps.append(event)
        else:
            convs.append(event)
    return NeighborPool(tuple(
        PoolGroup(label, tuple(imps), tuple(convs))
        for label, (imps, convs) in grouped.items()
    ))


def _group_unit_key(group: PoolGroup, relation: Relation) -> tuple[str, ...]:
    """The single unit key a pool group would create; raises if it spans more."""
    keys = set()
    for imp in group.impressions:
        if relation == Relation.CONVERSION:
            raise ValueError(f"pool group {group.label!r}: impressions cannot "
                             f"be added under the conversion relation")
        keys.add(_unit_key_for_impression(relation, imp))
    for conv in group.conversions:
        key = _unit_key_for_conversion(relation, conv)
        if key is None:
            raise ValueError(f"pool group {group.label!r}: conversions do not "
                             f"belong to {relation.value} units")
        keys.add(key)
    if not keys:
        raise ValueError(f"pool group {group.label!r} is empty")
    if len(keys) > 1:
        raise ValueError(f"pool group {group.label!r} spans {len(keys)} units "
                         f"of {relation.value}; a neighbor may differ by one")
    if relation in (Relation.IMPRESSION, Relation.CONVERSION) and \
            len(group.impressions) + len(group.conversions) != 1:
        raise ValueError(f"pool group {group.label!r} must contain exactly one "
                         f"event under the {relation.value} relation")
    return keys.pop()


def add_group(dataset: Dataset, group: PoolGroup) -> Dataset:
    """The dataset with the group's events added (an addition neighbor)."""
    return make_dataset(dataset.impressions + group.impressions,
                        dataset.conversions + group.conversions)


def neighbors(dataset: Dataset, relation: Relation,
              pool: NeighborPool = EMPTY_POOL):
    """Yield (description, neighbor dataset) for every adjacent dataset.

    Removal neighbors are exhaustive.  Addition neighbors come from the
    pool; each group must form a complete *new* unit of the relation — the
    units list every event of, say, a (user, publisher) pair, so extending
    a unit that already has events in the dataset is not an adjacent step.
    """
    existing = dataset.ids()
    units = adjacency_units(dataset, relation)
    for unit in units:
        yield (f"remove:{'/'.join(unit.key.parts)}", remove_unit(dataset, unit))
    occupied = {unit.key.parts for unit in units}
    for group in pool.groups:
        key = _group_unit_key(group, relation)
        if relation not in (Relation.IMPRESSION, Relation.CONVERSION) \
                and key in occupied:
            raise ValueError(
                f"pool group {group.label!r} extends unit {key} which already "
                f"has events; an addition neighbor must create a new unit")
        collision = {e.id for e in group.events()} & existing
        if collision:
            raise IntegrityError(
                f"pool group {group.label!r} reuses dataset ids {sorted(collision)}")
        yield (f"add:{group.label}", add_group(dataset, group))


def worst_neighbor(dataset: Dataset, cfg: Configuration,
                   pool: NeighborPool = EMPTY_POOL
                   ) -> tuple[float, str | None, Dataset | None]:
    """Exhaustively find the neighbor with the largest attributed-dataset shift.

    Returns ``(distance, description, neighbor)``; the latter two are None
    when the dataset has no neighbors at all (empty dataset, empty pool).
    """
    base = run(dataset, cfg)
    best, best_desc, best_neighbor = 0.0, None, None
    for desc, neighbor in neighbors(dataset, cfg.relation, pool):
        dist = l1_distance(base, run(neighbor, cfg))
        if best_desc is None or dist > best:
            best, best_desc, best_neighbor = dist, desc, neighbor
    return best, best_desc, best_neighbor


def empirical_sensitivity(dataset: Dataset, cfg: Configuration,
                          pool: NeighborPool = EMPTY_POOL) -> float:
    """Max attributed-dataset l1 shift over all enumerated neighbors.

    Exact over removal neighbors; a lower bound on the true supremum, since
    additions are limited to the supplied pool.
    """
    return worst_neighbor(dataset, cfg, pool)[0]
