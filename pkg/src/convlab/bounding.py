"""Attribution systems: contribution bounding around the attribution rule.

Running a rule over a dataset yields an attributed dataset: a map from
(impression id, conversion id) pairs to positive credit weights.  Without
bounding, one event can accumulate unbounded credit, so the credit flowing
through each *contribution bounding scope* (one unit of the configured
adjacency relation) is limited by a budget ``r``.  Three enforcement points
are implemented:

post_attribution
    Run the rule as usual; admit each weighted pair only while its scope
    still has budget, charging the pair's weight.

pre_attribution
    Before the rule runs for a conversion, charge one unit from every scope
    that contributed an eligible impression; scopes out of budget have their
    impressions removed from the rule's input entirely.

event_admission
    A stricter reading of pre-attribution used by some systems: charge one
    unit per *event* on arrival in a single chronological pass, and drop
    events whose scope is exhausted before attribution ever runs.  This
    variant is deliberately separate because it produces different results
    from pre_attribution on the same inputs (see ``reproduce --table 4``).

The distance between attributed datasets is the l1 distance on weights,
treating absent pairs as weight zero.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

from .attribution import AttributionRule, ConfigurationError, _raw_attribute
from .events import Conversion, Dataset, Impression, event_key

# Budget comparisons tolerate tiny float debris from multi-touch spreading,
# e.g. three charges of 1/3 must still leave room for nothing but zero.
BUDGET_SLACK = 1e-9


class Relation(str, Enum):
    """Adjacency relations; each doubles as the contribution bounding scope."""

    IMPRESSION = "impression"
    CONVERSION = "conversion"
    USER_PUBLISHER = "user_publisher"
    USER_ADVERTISER = "user_advertiser"
    USER_PUBLISHER_ADVERTISER = "user_publisher_advertiser"
    USER = "user"


class Enforcement(str, Enum):
    NONE = "none"
    PRE_ATTRIBUTION = "pre_attribution"
    POST_ATTRIBUTION = "post_attribution"
    EVENT_ADMISSION = "event_admission"


# Relations whose units contain conversions as well as impressions.
CONVERSION_BEARING_RELATIONS = frozenset(
    {Relation.CONVERSION, Relation.USER_ADVERTISER, Relation.USER})


@dataclass(frozen=True, slots=True)
class ScopeKey:
    """Structural identity of one contribution bounding scope."""

    relation: Relation
    parts: tuple[str, ...]


def scope_key(relation: Relation, event_or_pair) -> ScopeKey:
    """The bounding scope an impression (or attributed pair) charges.

    The conversion relation has no scope: each conversion enters attribution
    exactly once, so no enforcement is ever applied there.
    """
    if relation == Relation.CONVERSION:
        raise ConfigurationError(
            "the conversion relation has no contribution bounding scope; "
            "use enforcement 'none'")
    if isinstance(event_or_pair, tuple):
        imp, conv = event_or_pair
        if imp.user != conv.user or imp.advertiser != conv.advertiser:
            raise ValueError(
                f"pair ({imp.id!r}, {conv.id!r}) does not share user and advertiser")
    else:
        imp = event_or_pair
    if not isinstance(imp, Impression):
        raise ValueError(f"expected an impression or (impression, conversion) pair, "
                         f"got {type(event_or_pair).__name__}")
    if relation == Relation.IMPRESSION:
        return ScopeKey(relation, (imp.id,))
    if relation == Relation.USER_PUBLISHER:
        return ScopeKey(relation, (imp.user, imp.publisher))
    if relation == Relation.USER_ADVERTISER:
        return ScopeKey(relation, (imp.user, imp.advertiser))
    if relation == Relation.USER_PUBLISHER_ADVERTISER:
        return ScopeKey(relation, (imp.user, imp.publisher, imp.advertiser))
    return ScopeKey(relation, (imp.user,))


def conversion_scope_key(relation: Relation, conv: Conversion) -> ScopeKey | None:
    """The scope a conversion belongs to, or None if conversions are not
    members of this relation's units."""
    if relation == Relation.CONVERSION:
        raise ConfigurationError(
            "the conversion relation has no contribution bounding scope")
    if relation == Relation.USER_ADVERTISER:
        return ScopeKey(relation, (conv.user, conv.advertiser))
    if relation == Relation.USER:
        return ScopeKey(relation, (conv.user,))
    return None


@dataclass(frozen=True)
class Configuration:
    """One attribution-system configuration: rule, relation, enforcement, bound."""

    rule: AttributionRule
    relation: Relation
    enforcement: Enforcement
    r: int = 1

    def __post_init__(self):
        if isinstance(self.r, bool) or not isinstance(self.r, int) or self.r < 1:
            raise ConfigurationError(f"contribution bound r must be a positive "
                                     f"integer, got {self.r!r}")
        if self.relation == Relation.CONVERSION and self.enforcement != Enforcement.NONE:
            raise ConfigurationError(
                "the conversion relation admits no enforcement; use 'none'")


class AttributedDataset:
    """Weighted (impression id, conversion id) pairs; absent pairs weigh 0.

    Zero weights are never stored, so two attributed datasets are equal
    exactly when they assign the same weight to every pair.
    """

    __slots__ = ("_weights",)

    def __init__(self, triples: Iterable[tuple[str, str, float]] = ()):
        weights: dict[tuple[str, str], float] = {}
        for imp_id, conv_id, weight in triples:
            if weight < 0:
                raise ValueError(f"negative weight {weight!r} for "
                                 f"({imp_id!r}, {conv_id!r})")
            if weight == 0:
                continue
            key = (imp_id, conv_id)
            if key in weights:
                raise ValueError(f"duplicate pair ({imp_id!r}, {conv_id!r})")
            weights[key] = weight
        self._weights = weights

    def weight(self, imp_id: str, conv_id: str) -> float:
        return self._weights.get((imp_id, conv_id), 0.0)

    def items(self) -> Iterator[tuple[tuple[str, str], float]]:
        return iter(self._weights.items())

    def pairs(self) -> set[tuple[str, str]]:
        return set(self._weights)

    def total_weight(self) -> float:
        return sum(self._weights.values())

    def __len__(self) -> int:
        return len(self._weights)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AttributedDataset):
            return NotImplemented
        return self._weights == other._weights

    def __repr__(self) -> str:
        entries = ", ".join(f"({i}, {c}): {w:g}"
                            for (i, c), w in sorted(self._weights.items()))
        return f"AttributedDataset({{{entries}}})"


def l1_distance(a: AttributedDataset, b: AttributedDataset) -> float:
    """Sum of |weight difference| over the union of pairs.

    Accumulated with ``math.fsum`` so the result is exactly rounded and
    therefore independent of iteration order (symmetry holds bitwise).
    """
    terms = [abs(weight - b._weights.get(key, 0.0)) for key, weight in a.items()]
    terms.extend(weight for key, weight in b.items() if key not in a._weights)
    return math.fsum(terms)


def attributed_to_jsonl(attributed: AttributedDataset) -> Iterator[str]:
    """Serialize as JSON lines sorted by (conversion id, impression id).

    Weights are printed with 12 significant digits.
    """
    ordered = sorted(attributed.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    for (imp_id, conv_id), weight in ordered:
        yield json.dumps({"impression": imp_id, "conversion": conv_id,
                          "weight": float(f"{weight:.12g}")})


def attributed_from_jsonl(lines: Iterable[str]) -> AttributedDataset:
    triples = []
    for raw in lines:
        if not raw.strip():
            continue
        obj = json.loads(raw)
        triples.append((obj["impression"], obj["conversion"], float(obj["weight"])))
    return AttributedDataset(triples)


def _eligibility(dataset: Dataset):
    """Index impressions so each conversion's eligible prefix is one bisect.

    Eligible means: same user and advertiser, and strictly earlier in the
    canonical (t, id) order.
    """
    groups: dict[tuple[str, str], list[Impression]] = {}
    for imp in dataset.impressions:
        groups.setdefault((imp.user, imp.advertiser), []).append(imp)
    keys = {ua: [event_key(i) for i in imps] for ua, imps in groups.items()}

    def eligible(conv: Conversion) -> Sequence[Impression]:
        ua = (conv.user, conv.advertiser)
        imps = groups.get(ua)
        if not imps:
            return ()
        return imps[:bisect_left(keys[ua], event_key(conv))]

    return eligible


def run_unbounded(dataset: Dataset, rule: AttributionRule) -> AttributedDataset:
    """Attribute every conversion over all eligible impressions, no budgets."""
    eligible = _eligibility(dataset)
    triples: list[tuple[str, str, float]] = []
    for conv in dataset.conversions:
        imps = eligible(conv)
        if not imps:
            continue
        for imp, weight in zip(imps, _raw_attribute(rule, imps, conv)):
            if weight > 0:
                triples.append((imp.id, conv.id, weight))
    return AttributedDataset(triples)


def _require(cfg: Configuration, enforcement: Enforcement) -> None:
    if cfg.enforcement != enforcement:
        raise ConfigurationError(
            f"configuration has enforcement {cfg.enforcement.value!r}, "
            f"runner requires {enforcement.value!r}")
    if cfg.relation == Relation.CONVERSION:
        raise ConfigurationError("the conversion relation admits no enforcement")


def run_post_attribution(dataset: Dataset, cfg: Configuration) -> AttributedDataset:
    """Charge each emitted pair's weight against its scope's budget.

    Conversions are processed oldest first, and within one conversion the
    weight vector is spent oldest impression first.  A pair whose scope
    cannot cover its full weight is dropped without any fallback.  Pairs
    with weight zero are skipped outright: they charge nothing and are not
    stored.
    """
    _require(cfg, Enforcement.POST_ATTRIBUTION)
    eligible = _eligibility(dataset)
    budget: dict[ScopeKey, float] = {}
    triples: list[tuple[str, str, float]] = []
    for conv in dataset.conversions:
        imps = eligible(conv)
        if not imps:
            continue
        for imp, weight in zip(imps, _raw_attribute(cfg.rule, imps, conv)):
            if weight <= 0:
                continue
            scope = scope_key(cfg.relation, imp)
            remaining = budget.get(scope, float(cfg.r))
            if remaining >= weight - BUDGET_SLACK:
                budget[scope] = remaining - weight
                triples.append((imp.id, conv.id, weight))
    return AttributedDataset(triples)


def run_pre_attribution(dataset: Dataset, cfg: Configuration) -> AttributedDataset:
    """Charge one unit per involved scope before the rule sees a conversion.

    Every scope contributing at least one eligible impression is charged,
    whether or not the rule ends up crediting that scope.  Exhausted scopes
    have all their impressions removed from the rule's input; the rule then
    runs on whatever survives.
    """
    _require(cfg, Enforcement.PRE_ATTRIBUTION)
    eligible = _eligibility(dataset)
    budget: dict[ScopeKey, float] = {}
    triples: list[tuple[str, str, float]] = []
    for conv in dataset.conversions:
        imps = eligible(conv)
        if not imps:
            continue
        scopes = {}  # ordered set of involved scopes
        for imp in imps:
            scopes.setdefault(scope_key(cfg.relation, imp), None)
        surviving = set()
        for scope in scopes:
            remaining = budget.get(scope, float(cfg.r))
            if remaining >= 1:
                budget[scope] = remaining - 1
                surviving.add(scope)
        selected = [imp for imp in imps
                    if scope_key(cfg.relation, imp) in surviving]
        if not selected:
            continue
        for imp, weight in zip(selected, _raw_attribute(cfg.rule, selected, conv)):
            if weight > 0:
                triples.append((imp.id, conv.id, weight))
    return AttributedDataset(triples)


def run_event_admission(dataset: Dataset, cfg: Configuration) -> AttributedDataset:
    """Charge one unit per event on arrival; attribute over admitted events.

    A single chronological pass admits an impression only while its scope
    has budget.  Conversions are charged the same way when they belong to
    the relation's units (user and user x advertiser relations); under the
    other relations conversions are always admitted.  Attribution then runs
    as if the dropped events never existed.
    """
    _require(cfg, Enforcement.EVENT_ADMISSION)
    budget: dict[ScopeKey, float] = {}
    admitted_imps: list[Impression] = []
    admitted_convs: list[Conversion] = []

    def admit(scope: ScopeKey | None) -> bool:
        if scope is None:
            return True
        remaining = budget.get(scope, float(cfg.r))
        if remaining >= 1:
            budget[scope] = remaining - 1
            return True
        return False

    for event in dataset.events_in_order():
        if isinstance(event, Impression):
            if admit(scope_key(cfg.relation, event)):
                admitted_imps.append(event)
        else:
            if admit(conversion_scope_key(cfg.relation, event)):
                admitted_convs.append(event)
    survivors = Dataset(tuple(admitted_imps), tuple(admitted_convs))
    return run_unbounded(survivors, cfg.rule)


_RUNNERS = {
    Enforcement.PRE_ATTRIBUTION: run_pre_attribution,
    Enforcement.POST_ATTRIBUTION: run_post_attribution,
    Enforcement.EVENT_ADMISSION: run_event_admission,
}


def run(dataset: Dataset, cfg: Configuration) -> AttributedDataset:
    """Run the configured attribution system on the dataset."""
    if cfg.enforcement == Enforcement.NONE:
        return run_unbounded(dataset, cfg.rule)
    return _RUNNERS[cfg.enforcement](dataset, cfg)
