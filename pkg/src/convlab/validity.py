"""The validity lab: adversarial constructions, randomized checks, classification.

A configuration (rule, relation, enforcement, bound r) is *valid* with
constant C0 when any two adjacent datasets always land within l1 distance
C0 * r after bounded attribution, for every positive integer r.  Validity is
what lets the measurement layer add noise independent of how many publishers
and advertisers exist.

This module provides three things:

* Generators for the adversarial dataset pairs that witness the invalid
  configurations.  Each builds a concrete adjacent pair (D, D') whose
  attributed distance grows without bound in a scale parameter p.
* ``check_validity``: a randomized checker that hammers a configuration
  with random datasets (exhaustive removal neighbors plus addition pools)
  and with the registered constructions, and reports either an observed
  bound or a concrete witness.
* ``classification_table``: the full matrix of verdicts over rules,
  relations, and enforcement points, plus the static expected constants
  used by the measurement layer's refusal gate.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .attribution import (
    AttributionRule,
    ConfigurationError,
    first_position_vector,
    first_priority,
    make_rule,
    uniform_position_vector,
    uniform_priority,
)
from .adjacency import NeighborPool, PoolGroup, worst_neighbor
from .bounding import (
    Configuration,
    Enforcement,
    Relation,
    l1_distance,
    run,
    run_unbounded,
)
from .events import Conversion, Dataset, Impression, make_dataset

DISTANCE_TOL = 1e-9

# Candidate constant used to refute cells where no constant is claimed.
# Every established constant is 1 or 2, so exceeding 2.05 * r rules out all
# of them while never tripping on a configuration that is exactly 2-valid.
REFUTATION_C0 = 2.05

# Default ceiling for the scale parameter when hunting witnesses.
P_CEILING = 256


class CounterexampleKind(str, Enum):
    """Registered adversarial constructions, named by rule and relation."""

    LTA_USER_PUB_ADV = "lta_user_pub_adv"
    ANYRULE_USER_PUB = "anyrule_user_pub"
    UNI_IMPRESSION = "uni_impression"
    EXP_IMPRESSION = "exp_impression"
    USHAPED_IMPRESSION = "ushaped_impression"
    MULTITOUCH_USER_PUB_ADV = "multitouch_user_pub_adv"


def _impression(id: str, t: int, publisher: str, advertiser: str = "A1") -> Impression:
    return Impression(id, t, "U", publisher, advertiser)


def _conversion(id: str, t: int, advertiser: str = "A1") -> Conversion:
    return Conversion(id, t, "U", advertiser)


def _last_touch_routing_pair(p: int) -> tuple[Dataset, Dataset]:
    """Adjacent pair where one publisher soaks up all last-touch credit.

    One user, one advertiser, p publishers.  Before each conversion c_k the
    user sees an impression on publisher P_k immediately followed by one on
    publisher P_p, so P_p takes every last touch.  Removing P_p's
    impressions (one user x publisher x advertiser unit) re-routes each c_k
    to its own publisher: p - 1 re-attributions across distinct scopes, so
    no per-scope budget can contain the change.
    """
    heavy = f"P{p:04d}"
    imps, convs = [], []
    t = 0
    for k in range(1, p):
        t += 1
        imps.append(_impression(f"i{2 * k - 1:04d}", t, f"P{k:04d}"))
        t += 1
        imps.append(_impression(f"i{2 * k:04d}", t, heavy))
        t += 1
        convs.append(_conversion(f"c{k:04d}", t))
    base = make_dataset(imps, convs)
    neighbor = Dataset(
        tuple(i for i in base.impressions if i.publisher != heavy),
        base.conversions)
    return base, neighbor


def _prefix_flood_pair(p: int, *, u_shaped: bool = False,
                       equal_times: bool = False,
                       distinct_publishers: bool = False
                       ) -> tuple[Dataset, Dataset]:
    """Adjacent pair where removing the oldest impression re-spreads credit.

    Impressions i_1..i_p arrive in order; after i_j a burst of conversions
    attributes over the whole prefix i_1..i_j.  Dropping i_1 (one impression
    unit, or one user x publisher x advertiser unit when each impression
    sits on its own publisher) shifts every fractional weight in every
    burst, and the total shift grows like a harmonic sum in p.

    The burst after i_j has j conversions, which stresses uniform spreading;
    with ``u_shaped`` it has j - 2 (for j >= 4), matching the middle-credit
    share of u-shaped rules.  With ``equal_times`` every event carries the
    same timestamp and ids carry the order, so time-decay weighting sees
    zero gaps everywhere and degenerates to uniform spreading.
    """
    imps, convs = [], []
    position = 0
    for j in range(1, p + 1):
        position += 1
        stamp = 0 if equal_times else position
        publisher = f"P{j:04d}" if distinct_publishers else "P0001"
        imp_id = f"{position:06d}i" if equal_times else f"i{j:04d}"
        imps.append(_impression(imp_id, stamp, publisher))
        burst = (j - 2) if u_shaped else j
        for k in range(1, max(burst, 0) + 1):
            position += 1
            stamp = 0 if equal_times else position
            conv_id = f"{position:06d}c" if equal_times else f"c{j:04d}_{k:02d}"
            convs.append(_conversion(conv_id, stamp))
    base = make_dataset(imps, convs)
    neighbor = Dataset(base.impressions[1:], base.conversions)
    return base, neighbor


def _pairwise_probe_dataset(p: int) -> Dataset:
    """One advertiser per publisher pair, two impressions and one conversion.

    Across all pairs every publisher appears in p - 1 attributions, so the
    total unbounded attribution weight (one unit per conversion) is spread
    over p publishers: some publisher must collect at least (p - 1) / 2.
    """
    imps, convs = [], []
    t = 0
    for j in range(1, p):
        for k in range(j + 1, p + 1):
            advertiser = f"A{j:03d}x{k:03d}"
            t += 1
            imps.append(Impression(f"i{j:03d}x{k:03d}a", t, "U", f"P{j:04d}", advertiser))
            t += 1
            imps.append(Impression(f"i{j:03d}x{k:03d}b", t, "U", f"P{k:04d}", advertiser))
            t += 1
            convs.append(Conversion(f"c{j:03d}x{k:03d}", t, "U", advertiser))
    return make_dataset(imps, convs)


def publisher_weight_probe(rule: AttributionRule, p: int) -> dict[str, float]:
    """Unbounded attribution weight each publisher collects on the probe."""
    probe = _pairwise_probe_dataset(p)
    publisher_of = {i.id: i.publisher for i in probe.impressions}
    totals: dict[str, float] = {f"P{j:04d}": 0.0 for j in range(1, p + 1)}
    for (imp_id, _), weight in run_unbounded(probe, rule).items():
        totals[publisher_of[imp_id]] += weight
    return totals


def _heavy_publisher_pair(p: int, rule: AttributionRule) -> tuple[Dataset, Dataset]:
    """Adjacent pair refuting any rule under the user x publisher relation.

    First probe the rule on the pairwise dataset to find the publisher that
    collects the most credit (at least (p-1)/2 by pigeonhole).  Keep only
    that publisher's advertisers; removing its impressions (one user x
    publisher unit) makes each remaining publisher's lone impression the
    entire attribution input, worth a full unit each, while before removal
    those impressions held at most half the credit in aggregate.
    """
    totals = publisher_weight_probe(rule, p)
    heavy = max(sorted(totals), key=lambda pub: totals[pub])
    heavy_index = int(heavy[1:])
    keep = {
        f"A{min(j, heavy_index):03d}x{max(j, heavy_index):03d}"
        for j in range(1, p + 1) if j != heavy_index
    }
    probe = _pairwise_probe_dataset(p)
    base = Dataset(
        tuple(i for i in probe.impressions if i.advertiser in keep),
        tuple(c for c in probe.conversions if c.advertiser in keep))
    neighbor = Dataset(
        tuple(i for i in base.impressions if i.publisher != heavy),
        base.conversions)
    return base, neighbor


_MIN_P = {
    CounterexampleKind.LTA_USER_PUB_ADV: 2,
    CounterexampleKind.ANYRULE_USER_PUB: 2,
    CounterexampleKind.UNI_IMPRESSION: 1,
    CounterexampleKind.EXP_IMPRESSION: 1,
    CounterexampleKind.USHAPED_IMPRESSION: 4,
    CounterexampleKind.MULTITOUCH_USER_PUB_ADV: 1,
}

MULTITOUCH_LAYOUTS = ("uniform", "equal_time", "u_shaped")


def construct_counterexample(kind: CounterexampleKind, p: int,
                             rule: AttributionRule | None = None,
                             layout: str = "uniform") -> tuple[Dataset, Dataset]:
    """Build the adjacent pair (D, D') for one registered construction.

    ``rule`` is required for ``anyrule_user_pub`` (the construction probes
    the rule to locate the heaviest publisher).  ``layout`` selects the
    conversion pattern for ``multitouch_user_pub_adv``: "uniform",
    "equal_time" (for time-decay rules), or "u_shaped".
    """
    kind = CounterexampleKind(kind)
    minimum = _MIN_P[kind]
    if kind == CounterexampleKind.MULTITOUCH_USER_PUB_ADV and layout == "u_shaped":
        minimum = 4
    if p < minimum:
        raise ValueError(f"{kind.value} requires p >= {minimum}, got {p}")
    if kind == CounterexampleKind.LTA_USER_PUB_ADV:
        return _last_touch_routing_pair(p)
    if kind == CounterexampleKind.ANYRULE_USER_PUB:
        if rule is None:
            raise ValueError("anyrule_user_pub needs the rule under test")
        return _heavy_publisher_pair(p, rule)
    if kind == CounterexampleKind.UNI_IMPRESSION:
        return _prefix_flood_pair(p)
    if kind == CounterexampleKind.EXP_IMPRESSION:
        return _prefix_flood_pair(p, equal_times=True)
    if kind == CounterexampleKind.USHAPED_IMPRESSION:
        return _prefix_flood_pair(p, u_shaped=True)
    if layout not in MULTITOUCH_LAYOUTS:
        raise ValueError(f"unknown multitouch layout {layout!r}")
    return _prefix_flood_pair(p, u_shaped=(layout == "u_shaped"),
                              equal_times=(layout == "equal_time"),
                              distinct_publishers=True)


# Builders take (p, rule) so the registry is uniform and picklable.

def _build_uni_impression(p, rule):
    return construct_counterexample(CounterexampleKind.UNI_IMPRESSION, p)


def _build_exp_impression(p, rule):
    return construct_counterexample(CounterexampleKind.EXP_IMPRESSION, p)


def _build_ushaped_impression(p, rule):
    return construct_counterexample(CounterexampleKind.USHAPED_IMPRESSION, p)


def _build_anyrule_user_pub(p, rule):
    return construct_counterexample(CounterexampleKind.ANYRULE_USER_PUB, p, rule)


def _build_lta_user_pub_adv(p, rule):
    return construct_counterexample(CounterexampleKind.LTA_USER_PUB_ADV, p)


def _build_multitouch_uniform(p, rule):
    return construct_counterexample(CounterexampleKind.MULTITOUCH_USER_PUB_ADV, p)


def _build_multitouch_equal_time(p, rule):
    return construct_counterexample(
        CounterexampleKind.MULTITOUCH_USER_PUB_ADV, p, layout="equal_time")


def _build_multitouch_u_shaped(p, rule):
    return construct_counterexample(
        CounterexampleKind.MULTITOUCH_USER_PUB_ADV, p, layout="u_shaped")


def registered_constructions(relation: Relation):
    """Witness generators applicable to post-attribution cells of a relation."""
    if relation == Relation.IMPRESSION:
        return (("uni_impression", _build_uni_impression),
                ("exp_impression", _build_exp_impression),
                ("ushaped_impression", _build_ushaped_impression))
    if relation == Relation.USER_PUBLISHER:
        return (("anyrule_user_pub", _build_anyrule_user_pub),)
    if relation == Relation.USER_PUBLISHER_ADVERTISER:
        return (("lta_user_pub_adv", _build_lta_user_pub_adv),
                ("multitouch_uniform", _build_multitouch_uniform),
                ("multitouch_equal_time", _build_multitouch_equal_time),
                ("multitouch_u_shaped", _build_multitouch_u_shaped))
    return ()


def construction_distance(build, p: int, cfg: Configuration) -> float:
    base, neighbor = build(p, cfg.rule)
    return l1_distance(run(base, cfg), run(neighbor, cfg))


def construction_growth(kind: CounterexampleKind, ps, cfg: Configuration,
                        layout: str = "uniform") -> list[tuple[int, float]]:
    """The witness distance of one construction at each scale in ``ps``."""
    points = []
    for p in ps:
        base, neighbor = construct_counterexample(kind, p, cfg.rule, layout)
        points.append((p, l1_distance(run(base, cfg), run(neighbor, cfg))))
    return points


def _p_schedule(ceiling: int) -> list[int]:
    ps = [5]
    while ps[-1] * 2 <= ceiling:
        ps.append(ps[-1] * 2)
    if ps[-1] != ceiling:
        ps.append(ceiling)
    return ps


# --- Randomized checking -------------------------------------------------

@dataclass(frozen=True)
class DatasetShape:
    """Size envelope for random datasets; small enough to enumerate neighbors."""

    max_impressions: int = 10
    max_conversions: int = 8
    users: int = 2
    publishers: int = 4
    advertisers: int = 3
    max_time: int = 100


DEFAULT_SHAPE = DatasetShape()


def random_dataset(rng: np.random.Generator,
                   shape: DatasetShape = DEFAULT_SHAPE) -> Dataset:
    """A small random event log; timestamps collide on purpose now and then."""
    n_imp = min(int(rng.geometric(0.30)), shape.max_impressions)
    n_conv = min(int(rng.geometric(0.35)), shape.max_conversions)
    imps = [
        Impression(
            id=f"ri{k:03d}",
            t=int(rng.integers(0, shape.max_time + 1)),
            user=f"U{int(rng.integers(1, shape.users + 1))}",
            publisher=f"P{int(rng.integers(1, shape.publishers + 1))}",
            advertiser=f"A{int(rng.integers(1, shape.advertisers + 1))}",
            engagement="click" if rng.random() < 0.7 else "view",
        )
        for k in range(n_imp)
    ]
    convs = [
        Conversion(
            id=f"rc{k:03d}",
            t=int(rng.integers(0, shape.max_time + 1)),
            user=f"U{int(rng.integers(1, shape.users + 1))}",
            advertiser=f"A{int(rng.integers(1, shape.advertisers + 1))}",
            value=round(float(rng.uniform(0, 20)), 2),
        )
        for k in range(n_conv)
    ]
    return make_dataset(imps, convs)


def random_pool(dataset: Dataset, relation: Relation,
                rng: np.random.Generator,
                shape: DatasetShape = DEFAULT_SHAPE,
                groups: int = 3) -> NeighborPool:
    """Random addition candidates, each group forming one *fresh* unit.

    An addition neighbor must create a unit that has no events in the base
    dataset, so composite keys mix existing users/advertisers (to interact
    with existing attribution paths) with a fresh component that keeps the
    unit new.  Impression and conversion units are single fresh events and
    may reuse any attribute values.
    """
    counter = 0

    def fresh_id(prefix: str) -> str:
        nonlocal counter
        counter += 1
        return f"a{prefix}{counter:03d}"

    def stamp() -> int:
        return int(rng.integers(0, shape.max_time + 1))

    def pick(prefix: str, bound: int) -> str:
        return f"{prefix}{int(rng.integers(1, bound + 1))}"

    def value() -> float:
        return round(float(rng.uniform(0, 20)), 2)

    up_keys = {(i.user, i.publisher) for i in dataset.impressions}
    upa_keys = {(i.user, i.publisher, i.advertiser) for i in dataset.impressions}
    ua_keys = {(i.user, i.advertiser) for i in dataset.impressions} | {
        (c.user, c.advertiser) for c in dataset.conversions}
    users = {i.user for i in dataset.impressions} | {c.user for c in dataset.conversions}

    def fresh_label(base: str, taken_under) -> str:
        n = 0
        label = base
        while taken_under(label):
            label = f"{base}x{n}"
            n += 1
        return label

    built: list[PoolGroup] = []
    for g in range(groups):
        user = pick("U", shape.users)
        publisher = pick("P", shape.publishers)
        advertiser = pick("A", shape.advertisers)
        imps: list[Impression] = []
        convs: list[Conversion] = []
        if relation == Relation.IMPRESSION:
            imps.append(Impression(fresh_id("i"), stamp(), user, publisher, advertiser))
        elif relation == Relation.CONVERSION:
            convs.append(Conversion(fresh_id("c"), stamp(), user, advertiser,
                                    value=value()))
        elif relation == Relation.USER_PUBLISHER:
            publisher = fresh_label(publisher, lambda p: (user, p) in up_keys)
            for _ in range(int(rng.integers(1, 4))):
                imps.append(Impression(fresh_id("i"), stamp(), user, publisher,
                                       pick("A", shape.advertisers)))
        elif relation == Relation.USER_ADVERTISER:
            advertiser = fresh_label(advertiser, lambda a: (user, a) in ua_keys)
            for _ in range(int(rng.integers(0, 3))):
                imps.append(Impression(fresh_id("i"), stamp(), user,
                                       pick("P", shape.publishers), advertiser))
            for _ in range(int(rng.integers(0, 3))):
                convs.append(Conversion(fresh_id("c"), stamp(), user, advertiser,
                                        value=value()))
            if not imps and not convs:
                convs.append(Conversion(fresh_id("c"), stamp(), user, advertiser))
        elif relation == Relation.USER_PUBLISHER_ADVERTISER:
            publisher = fresh_label(
                publisher, lambda p: (user, p, advertiser) in upa_keys)
            for _ in range(int(rng.integers(1, 4))):
                imps.append(Impression(fresh_id("i"), stamp(), user, publisher,
                                       advertiser))
        else:  # user relation: a brand-new user's events are self-contained
            user = fresh_label(user, lambda u: u in users)
            for _ in range(int(rng.integers(0, 3))):
                imps.append(Impression(fresh_id("i"), stamp(), user,
                                       pick("P", shape.publishers),
                                       pick("A", shape.advertisers)))
            for _ in range(int(rng.integers(0, 3))):
                convs.append(Conversion(fresh_id("c"), stamp(), user,
                                        pick("A", shape.advertisers),
                                        value=value()))
            if not imps and not convs:
                convs.append(Conversion(fresh_id("c"), stamp(), user, advertiser))
        built.append(PoolGroup(f"g{g}", tuple(imps), tuple(convs)))
    return NeighborPool(tuple(built))


@dataclass(frozen=True)
class Witness:
    """A concrete adjacent pair whose distance exceeds the tested bound."""

    source: str
    distance: float
    base: Dataset
    neighbor: Dataset


@dataclass(frozen=True)
class ValidityReport:
    rule: str
    relation: Relation
    enforcement: Enforcement
    r: int
    c0_tested: float
    c0_claimed: float | None    # the tested constant when it held, else None
    verdict: str                # "valid_observed" | "invalid_witnessed"
    max_ratio: float            # largest observed distance / r
    trials: int
    witness: Witness | None

    @property
    def valid(self) -> bool:
        return self.verdict == "valid_observed"


VALID_OBSERVED = "valid_observed"
INVALID_WITNESSED = "invalid_witnessed"


def check_validity(cfg: Configuration, c0: float, trials: int = 1000,
                   shape: DatasetShape = DEFAULT_SHAPE,
                   rng: np.random.Generator | int | None = None,
                   p_ceiling: int = P_CEILING) -> ValidityReport:
    """Hunt for a violation of `distance <= c0 * r` over adjacent pairs.

    Registered constructions for the cell are evaluated first at growing
    scale p (they are deterministic and cheap relative to the trials); if
    one exceeds the bound the verdict is settled and the random trials are
    skipped, since further evidence cannot change it.  Otherwise ``trials``
    random datasets are checked against every removal neighbor plus a fresh
    random addition pool.  Invalidity always carries a concrete witness;
    validity is an observation, never a proof.
    """
    generator = rng if isinstance(rng, np.random.Generator) \
        else np.random.default_rng(rng)
    bound = c0 * cfg.r + DISTANCE_TOL
    max_ratio = 0.0
    witness = None
    if cfg.enforcement == Enforcement.POST_ATTRIBUTION:
        for name, build in registered_constructions(cfg.relation):
            for p in _p_schedule(p_ceiling):
                try:
                    base, neighbor = build(p, cfg.rule)
                    distance = l1_distance(run(base, cfg), run(neighbor, cfg))
                except ConfigurationError:
                    break  # rule undefined at this scale; larger p is too
                max_ratio = max(max_ratio, distance / cfg.r)
                if distance > bound:
                    witness = Witness(f"construction:{name}@p={p}",
                                      distance, base, neighbor)
                    break
            if witness is not None:
                break
    trials_run = 0
    if witness is None:
        for _ in range(trials):
            trials_run += 1
            dataset = random_dataset(generator, shape)
            pool = random_pool(dataset, cfg.relation, generator, shape)
            distance, desc, neighbor = worst_neighbor(dataset, cfg, pool)
            max_ratio = max(max_ratio, distance / cfg.r)
            if distance > bound:
                witness = Witness(f"random:{desc}", distance, dataset, neighbor)
                break
    verdict = INVALID_WITNESSED if witness is not None else VALID_OBSERVED
    return ValidityReport(
        rule=cfg.rule.name, relation=cfg.relation, enforcement=cfg.enforcement,
        r=cfg.r, c0_tested=c0,
        c0_claimed=c0 if verdict == VALID_OBSERVED else None,
        verdict=verdict, max_ratio=max_ratio, trials=trials_run,
        witness=witness)


# --- Classification -------------------------------------------------------

BUILTIN_RULE_KINDS = ("LTA", "FTA", "UNI", "EXP", "U-S")

# Row order of the classification matrix.
CLASSIFIED_RELATIONS = (
    Relation.IMPRESSION,
    Relation.USER,
    Relation.USER_PUBLISHER,
    Relation.USER_ADVERTISER,
    Relation.USER_PUBLISHER_ADVERTISER,
)


def builtin_claimed_c0(kind: str, relation: Relation,
                       enforcement: Enforcement) -> float | None:
    """The constant this lab certifies for a built-in rule's cell; None = invalid.

    Conversion-relation cells are 1-valid for every rule, as are the user
    and user x advertiser relations under either enforcement: those units
    carry their conversions with them, so only the unit's own pairs can
    change and the budget bounds them directly.

    Pre-attribution is valid at *every* relation, but the constant at the
    impression-only-unit relations (impression, user x publisher, user x
    publisher x advertiser) is 2, not 1: each affected conversion can have
    a full unit of credit re-routed from the changed unit's impressions to
    surviving ones (|old| + |new| = 2), and the scope charge bounds how many
    conversions are affected by r.  The factor is tight already for a
    three-event dataset, so a 1-claim would be refuted by the checker.

    Under post-attribution, single-touch rules keep C0=2 validity at the
    impression relation (first-touch also at user x publisher x
    advertiser); the remaining cells admit no constant.
    """
    if relation == Relation.CONVERSION:
        return 1.0
    if enforcement == Enforcement.PRE_ATTRIBUTION:
        if relation in (Relation.USER, Relation.USER_ADVERTISER):
            return 1.0
        return 2.0
    if enforcement != Enforcement.POST_ATTRIBUTION:
        return None
    if relation in (Relation.USER, Relation.USER_ADVERTISER):
        return 1.0
    if relation == Relation.USER_PUBLISHER:
        return None
    if relation == Relation.IMPRESSION:
        return 2.0 if kind in ("LTA", "FTA") else None
    if relation == Relation.USER_PUBLISHER_ADVERTISER:
        return 2.0 if kind == "FTA" else None
    return None


def family_claimed_c0(relation: Relation, enforcement: Enforcement) -> float:
    """The constant a POS/IPA family member must meet to count as valid."""
    static = builtin_claimed_c0("FTA", relation, enforcement)
    return static if static is not None else REFUTATION_C0


def claimed_c0_for(rule: AttributionRule, relation: Relation,
                   enforcement: Enforcement) -> float | None:
    if rule.kind in BUILTIN_RULE_KINDS:
        return builtin_claimed_c0(rule.kind, relation, enforcement)
    return family_claimed_c0(relation, enforcement)


_INVALID_REASONS = {
    Relation.IMPRESSION:
        "removing one impression re-spreads fractional credit across "
        "unboundedly many conversions under multi-touch spreading",
    Relation.USER_PUBLISHER:
        "one publisher's impressions can absorb credit whose removal "
        "re-routes it across unboundedly many other publishers, for any rule",
    Relation.USER_PUBLISHER_ADVERTISER:
        "removing one publisher's impressions re-routes credit to "
        "unboundedly many other publishers",
}


@dataclass(frozen=True)
class ClassifiedCell:
    valid: bool
    c0: float | None
    reason: str


def classify_configuration(cfg: Configuration,
                           p_ceiling: int = 64) -> ClassifiedCell:
    """Decide whether a configuration supports constant-scale noise.

    Built-in rules are answered from the established classification.
    POS/IPA instances in the undecided cells (impression and user x
    publisher x advertiser, post-attribution) are probed against the
    registered constructions at the family constant; a witness means the
    instance behaves like the invalid family members.
    """
    relation, enforcement = cfg.relation, cfg.enforcement
    if relation == Relation.CONVERSION:
        return ClassifiedCell(True, 1.0, "each conversion is attributed once, "
                                         "so its removal shifts at most one unit")
    if enforcement == Enforcement.NONE:
        return ClassifiedCell(False, None, "no contribution bounding is applied; "
                                           "one scope's credit is unbounded")
    if enforcement == Enforcement.EVENT_ADMISSION:
        return ClassifiedCell(False, None,
                              "no constant has been established for "
                              "event-admission enforcement")
    if cfg.rule.kind in BUILTIN_RULE_KINDS:
        c0 = builtin_claimed_c0(cfg.rule.kind, relation, enforcement)
        if c0 is None:
            reason = (f"{cfg.rule.kind} at the {relation.value} relation with "
                      f"{enforcement.value} enforcement has no constant bound: "
                      f"{_INVALID_REASONS[relation]}")
            return ClassifiedCell(False, None, reason)
        return ClassifiedCell(True, c0, "established constant for this cell")
    if enforcement == Enforcement.PRE_ATTRIBUTION:
        return ClassifiedCell(True, family_claimed_c0(relation, enforcement),
                              "pre-attribution charging bounds every scope's "
                              "influence for any rule")
    if relation in (Relation.USER, Relation.USER_ADVERTISER):
        return ClassifiedCell(True, 1.0, "the scope contains every pair that can "
                                         "change, so the budget is the bound")
    if relation == Relation.USER_PUBLISHER:
        return ClassifiedCell(False, None, _INVALID_REASONS[relation])
    claim = family_claimed_c0(relation, enforcement)
    probe = replace(cfg, r=1)
    for name, build in registered_constructions(relation):
        for p in _p_schedule(p_ceiling):
            try:
                distance = construction_distance(build, p, probe)
            except ConfigurationError:
                # The rule is undefined at this scale (e.g. a tabulated
                # vector table ran out).  Attribution fails closed beyond
                # that length, so larger scales cannot occur in operation.
                break
            if distance > claim + DISTANCE_TOL:
                reason = (f"{cfg.rule.name} at the {relation.value} relation with "
                          f"post-attribution enforcement exceeds {claim} * r on "
                          f"the {name} construction at p={p}")
                return ClassifiedCell(False, None, reason)
    return ClassifiedCell(True, claim,
                          f"instance withstood all registered constructions "
                          f"up to p={p_ceiling} at C0={claim}")


def default_rules() -> list[AttributionRule]:
    return [
        make_rule("LTA"),
        make_rule("FTA"),
        make_rule("UNI"),
        make_rule("EXP", half_life=1.0),
        make_rule("U-S"),
    ]


def family_instance_rules() -> list[AttributionRule]:
    """POS/IPA members that exhibit the family's valid/invalid split."""
    return [
        make_rule("POS", pos_vectors=first_position_vector, label="POS[first-touch]"),
        make_rule("POS", pos_vectors=uniform_position_vector, label="POS[uniform]"),
        make_rule("IPA", priority=first_priority, label="IPA[first-touch]"),
        make_rule("IPA", priority=uniform_priority, label="IPA[uniform]"),
    ]


def _classification_cells(rules):
    cells = []
    for rule in rules:
        cells.append((rule, Relation.CONVERSION, Enforcement.NONE))
        for relation in CLASSIFIED_RELATIONS:
            for enforcement in (Enforcement.POST_ATTRIBUTION,
                                Enforcement.PRE_ATTRIBUTION):
                cells.append((rule, relation, enforcement))
    return cells


def _run_cell(args) -> ValidityReport:
    rule, relation, enforcement, trials, shape, p_ceiling, seed = args
    cfg = Configuration(rule=rule, relation=relation, enforcement=enforcement, r=1)
    claim = claimed_c0_for(rule, relation, enforcement)
    c0 = claim if claim is not None else REFUTATION_C0
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return check_validity(cfg, c0, trials=trials, shape=shape, rng=rng,
                          p_ceiling=p_ceiling)


def classification_table(rules=None, trials: int = 100, seed: int = 0,
                         shape: DatasetShape = DEFAULT_SHAPE,
                         p_ceiling: int = P_CEILING,
                         jobs: int = 1) -> list[ValidityReport]:
    """Classify every (rule, relation, enforcement) cell plus the conversion row.

    Cells claiming a constant are checked at that constant; cells with no
    established constant are checked at the refutation candidate and are
    expected to produce a witness.  Cell seeds derive from (seed, index) so
    results are identical no matter how work is scheduled across ``jobs``.
    """
    if rules is None:
        rules = default_rules() + family_instance_rules()
    cells = _classification_cells(rules)
    tasks = [
        (rule, relation, enforcement, trials, shape, p_ceiling, [seed, index])
        for index, (rule, relation, enforcement) in enumerate(cells)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell, tasks))
    return [_run_cell(task) for task in tasks]
