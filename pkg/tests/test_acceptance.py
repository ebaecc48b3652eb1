"""Acceptance suite: one criterion per test, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  Criterion 4 carries one documented expected failure: the
per-conversion pre-attribution enforcement admits a tight factor-two
re-attribution shift at the impression-only-unit relations, so the
constant 1 stated for those cells is refuted by a three-event dataset
(see ``test_bounding.py``); the cells are certified at constant 2 instead.
"""

import math
import time

import numpy as np
import pytest

from convlab.attribution import attribute, make_rule
from convlab.bounding import (
    AttributedDataset,
    Configuration,
    Enforcement,
    Relation,
    l1_distance,
    run_event_admission,
    run_post_attribution,
    run_pre_attribution,
    run_unbounded,
)
from convlab.dp import laplace_samples
from convlab.events import Conversion, Impression, demo_dataset
from convlab.queries import QuerySpec, sensitivity_of
from convlab.validity import (
    CounterexampleKind,
    VALID_OBSERVED,
    check_validity,
    classification_table,
    construct_counterexample,
    construction_growth,
    default_rules,
    family_instance_rules,
)

POST = Enforcement.POST_ATTRIBUTION
PRE = Enforcement.PRE_ATTRIBUTION

LTA = make_rule("LTA")
FTA = make_rule("FTA")
UNI = make_rule("UNI")
EXP = make_rule("EXP", half_life=1.0)
USH = make_rule("U-S")


def _verdict(name: str, ok: bool, started: float, limit: float, detail: str = ""):
    elapsed = time.monotonic() - started
    status = "PASS" if ok and elapsed < limit else "FAIL"
    line = f"[{status}] {name} ({elapsed:.1f}s, limit {limit:.0f}s)"
    if detail:
        line += f" — {detail}"
    print(line)
    assert ok, f"{name}: {detail}"
    assert elapsed < limit, f"{name}: overran {limit}s ({elapsed:.1f}s)"


def test_criterion_1_credit_split():
    started = time.monotonic()
    imps = [Impression(f"i{k}", k, "U", f"P{k}", "A") for k in (1, 2, 3, 4)]
    conv = Conversion("c", 5, "U", "A")
    ok = attribute(LTA, imps, conv) == (0, 0, 0, 1)
    ok &= attribute(FTA, imps, conv) == (1, 0, 0, 0)
    ok &= attribute(UNI, imps, conv) == (0.25, 0.25, 0.25, 0.25)
    exp = attribute(EXP, imps, conv)
    ok &= all(abs(w - e) <= 1e-3
              for w, e in zip(exp, (0.0667, 0.1333, 0.2667, 0.5333)))
    _verdict("criterion 1: four-impression credit split", bool(ok), started, 1.0)


def test_criterion_2_post_attribution_rows():
    started = time.monotonic()
    demo = demo_dataset()
    rows = {
        None: {("i2", "c1"), ("i2", "c2"), ("i2", "c3"), ("i4", "c4"), ("i5", "c5")},
        Relation.IMPRESSION: {("i2", "c1"), ("i2", "c2"), ("i4", "c4"), ("i5", "c5")},
        Relation.USER_ADVERTISER: {("i2", "c1"), ("i2", "c2"), ("i5", "c5")},
        Relation.USER: {("i2", "c1"), ("i2", "c2")},
    }
    ok = run_unbounded(demo, LTA).pairs() == rows[None]
    for relation in (Relation.IMPRESSION, Relation.USER_ADVERTISER, Relation.USER):
        got = run_post_attribution(
            demo, Configuration(LTA, relation, POST, 2)).pairs()
        ok &= got == rows[relation]
    _verdict("criterion 2: post-attribution bounding rows", bool(ok), started, 1.0)


def test_criterion_3_event_admission_rows():
    started = time.monotonic()
    demo = demo_dataset()
    admitted_ua = run_event_admission(
        demo, Configuration(LTA, Relation.USER_ADVERTISER,
                            Enforcement.EVENT_ADMISSION, 2))
    admitted_user = run_event_admission(
        demo, Configuration(LTA, Relation.USER, Enforcement.EVENT_ADMISSION, 2))
    ok = admitted_ua.pairs() == {("i5", "c5")}
    ok &= admitted_user.pairs() == set()
    # the per-conversion charging variant is emitted alongside and differs
    charged_ua = run_pre_attribution(
        demo, Configuration(LTA, Relation.USER_ADVERTISER, PRE, 2))
    charged_user = run_pre_attribution(
        demo, Configuration(LTA, Relation.USER, PRE, 2))
    ok &= charged_ua.pairs() == {("i2", "c1"), ("i2", "c2"), ("i5", "c5")}
    ok &= charged_user.pairs() == {("i2", "c1"), ("i2", "c2")}
    from convlab.cli import TABLE4_NOTE, _reproduce_table4
    text = _reproduce_table4(None)
    ok &= TABLE4_NOTE in text and "(i5, c5)" in text and "(empty)" in text
    _verdict("criterion 3: event-admission rows with the per-conversion "
             "variant alongside", bool(ok), started, 1.0)


GREEN_CELLS = [
    # (label, rule, relation, enforcement, certified C0)
    ("conversion / none", UNI, Relation.CONVERSION, Enforcement.NONE, 1.0),
    ("impression / pre", UNI, Relation.IMPRESSION, PRE, 2.0),
    ("user / pre", USH, Relation.USER, PRE, 1.0),
    ("user x publisher / pre", EXP, Relation.USER_PUBLISHER, PRE, 2.0),
    ("user x advertiser / pre", LTA, Relation.USER_ADVERTISER, PRE, 1.0),
    ("user x pub x adv / pre", LTA, Relation.USER_PUBLISHER_ADVERTISER, PRE, 2.0),
    ("user / post", UNI, Relation.USER, POST, 1.0),
    ("user x advertiser / post", EXP, Relation.USER_ADVERTISER, POST, 1.0),
    ("impression / post, LTA", LTA, Relation.IMPRESSION, POST, 2.0),
    ("impression / post, FTA", FTA, Relation.IMPRESSION, POST, 2.0),
    ("user x pub x adv / post, FTA", FTA,
     Relation.USER_PUBLISHER_ADVERTISER, POST, 2.0),
]


def test_criterion_4_green_cells_hold_their_constants():
    started = time.monotonic()
    failures = []
    for index, (label, rule, relation, enforcement, c0) in enumerate(GREEN_CELLS):
        for r in (1, 2, 3):
            cfg = Configuration(rule, relation, enforcement, r)
            report = check_validity(cfg, c0, trials=1000,
                                    rng=np.random.default_rng([4, index, r]),
                                    p_ceiling=96)
            if report.verdict != VALID_OBSERVED:
                failures.append((label, r, report.witness.source,
                                 report.witness.distance))
    detail = ("pre-attribution cells at impression-only units certified at "
              "C0=2 (the stated constant 1 is refuted; see the companion "
              "expected-failure test)")
    _verdict("criterion 4: green cells, 1000 trials each, r in {1,2,3}",
             not failures, started, 300.0,
             detail if not failures else f"violations: {failures}")


@pytest.mark.xfail(strict=True,
                   reason="documented defect: per-conversion pre-attribution "
                          "charging admits a tight 2r re-attribution shift at "
                          "the impression, user x publisher, and user x pub x "
                          "adv relations, so the constant 1 stated for those "
                          "cells cannot hold (three-event counterexample in "
                          "test_bounding.py); the lab certifies C0=2 there")
def test_criterion_4_pre_attribution_constant_one_as_stated():
    for relation, rule in ((Relation.IMPRESSION, UNI),
                           (Relation.USER_PUBLISHER, EXP),
                           (Relation.USER_PUBLISHER_ADVERTISER, LTA)):
        cfg = Configuration(rule, relation, PRE, 1)
        report = check_validity(cfg, 1.0, trials=300, rng=44, p_ceiling=40)
        assert report.verdict == VALID_OBSERVED, \
            f"{relation.value}: witnessed {report.witness.source} at " \
            f"distance {report.witness.distance}"


def test_criterion_5_invalidity_witnesses():
    started = time.monotonic()

    def dist(kind, p, rule, relation, layout="uniform"):
        base, neighbor = construct_counterexample(kind, p, rule, layout)
        cfg = Configuration(rule, relation, POST, 1)
        return l1_distance(run_post_attribution(base, cfg),
                           run_post_attribution(neighbor, cfg))

    ok = dist(CounterexampleKind.LTA_USER_PUB_ADV, 5, LTA,
              Relation.USER_PUBLISHER_ADVERTISER) >= 4.0
    for rule in (LTA, FTA, UNI, EXP, USH):
        ok &= dist(CounterexampleKind.ANYRULE_USER_PUB, 5, rule,
                   Relation.USER_PUBLISHER) >= 2.0
    uni_value = dist(CounterexampleKind.UNI_IMPRESSION, 10, UNI,
                     Relation.IMPRESSION)
    expected = 1.0 + sum(2.0 / j for j in range(2, 11))
    ok &= abs(uni_value - expected) <= 1e-5
    ok &= abs(uni_value - 4.85794) <= 1e-5
    ok &= uni_value >= 2 * math.log(5)
    exp_value = dist(CounterexampleKind.EXP_IMPRESSION, 10, EXP,
                     Relation.IMPRESSION)
    ok &= abs(exp_value - uni_value) <= 1e-9
    ok &= dist(CounterexampleKind.USHAPED_IMPRESSION, 20, USH,
               Relation.IMPRESSION) >= 0.2 * math.log(19 / 4)
    for rule, layout, floor in ((UNI, "uniform", 2 * math.log(5)),
                                (EXP, "equal_time", 2 * math.log(5)),
                                (USH, "u_shaped", 0.2 * math.log(19 / 4))):
        p = 10 if layout != "u_shaped" else 20
        ok &= dist(CounterexampleKind.MULTITOUCH_USER_PUB_ADV, p, rule,
                   Relation.USER_PUBLISHER_ADVERTISER, layout) >= floor
    for kind, rule, relation, layout in (
            (CounterexampleKind.UNI_IMPRESSION, UNI, Relation.IMPRESSION, "uniform"),
            (CounterexampleKind.EXP_IMPRESSION, EXP, Relation.IMPRESSION, "uniform"),
            (CounterexampleKind.USHAPED_IMPRESSION, USH, Relation.IMPRESSION,
             "uniform"),
            (CounterexampleKind.LTA_USER_PUB_ADV, LTA,
             Relation.USER_PUBLISHER_ADVERTISER, "uniform"),
            (CounterexampleKind.ANYRULE_USER_PUB, UNI,
             Relation.USER_PUBLISHER, "uniform"),
            (CounterexampleKind.MULTITOUCH_USER_PUB_ADV, UNI,
             Relation.USER_PUBLISHER_ADVERTISER, "uniform")):
        cfg = Configuration(rule, relation, POST, 1)
        growth = [d for _, d in construction_growth(kind, (5, 10, 20, 40), cfg,
                                                    layout)]
        ok &= all(a <= b + 1e-9 for a, b in zip(growth, growth[1:]))
        ok &= growth[-1] > growth[0]
    _verdict("criterion 5: invalidity witnesses and monotone growth",
             bool(ok), started, 30.0)


EXPECTED_PATTERN = {
    ("LTA", Relation.IMPRESSION): True, ("FTA", Relation.IMPRESSION): True,
    ("UNI", Relation.IMPRESSION): False, ("EXP", Relation.IMPRESSION): False,
    ("U-S", Relation.IMPRESSION): False,
    ("LTA", Relation.USER_PUBLISHER_ADVERTISER): False,
    ("FTA", Relation.USER_PUBLISHER_ADVERTISER): True,
    ("UNI", Relation.USER_PUBLISHER_ADVERTISER): False,
    ("EXP", Relation.USER_PUBLISHER_ADVERTISER): False,
    ("U-S", Relation.USER_PUBLISHER_ADVERTISER): False,
}


def test_criterion_6_classification_matrix_full_trials():
    started = time.monotonic()
    reports = classification_table(trials=1000, seed=0)
    by_cell = {(r.rule, r.relation, r.enforcement): r for r in reports}
    mismatches = []

    def expect(rule_name, relation, enforcement, want_valid):
        report = by_cell[(rule_name, relation, enforcement)]
        if report.valid != want_valid:
            mismatches.append((rule_name, relation.value, enforcement.value,
                               report.verdict))

    for rule in default_rules():
        kind = rule.kind
        expect(rule.name, Relation.CONVERSION, Enforcement.NONE, True)
        for relation in (Relation.IMPRESSION, Relation.USER,
                         Relation.USER_PUBLISHER, Relation.USER_ADVERTISER,
                         Relation.USER_PUBLISHER_ADVERTISER):
            expect(rule.name, relation, PRE, True)
            if relation in (Relation.USER, Relation.USER_ADVERTISER):
                expect(rule.name, relation, POST, True)
            elif relation == Relation.USER_PUBLISHER:
                expect(rule.name, relation, POST, False)
            else:
                expect(rule.name, relation, POST,
                       EXPECTED_PATTERN[(kind, relation)])
    for rule in family_instance_rules():
        first_family = "first" in rule.name
        for relation in (Relation.IMPRESSION, Relation.USER_PUBLISHER_ADVERTISER):
            expect(rule.name, relation, POST, first_family)
        expect(rule.name, Relation.USER_PUBLISHER, POST, False)
        for relation in (Relation.IMPRESSION, Relation.USER,
                         Relation.USER_PUBLISHER, Relation.USER_ADVERTISER,
                         Relation.USER_PUBLISHER_ADVERTISER):
            expect(rule.name, relation, PRE, True)
        expect(rule.name, Relation.USER, POST, True)
        expect(rule.name, Relation.USER_ADVERTISER, POST, True)
        expect(rule.name, Relation.CONVERSION, Enforcement.NONE, True)
    _verdict("criterion 6: classification matrix at full trial count",
             not mismatches, started, 600.0,
             f"{len(reports)} cells" if not mismatches else str(mismatches))


def test_criterion_7_mechanism_checks():
    started = time.monotonic()
    draws = laplace_samples(2.0, 1_000_000, np.random.default_rng(7))
    variance = float(np.var(draws))
    ok = abs(variance - 8.0) <= 0.02 * 8.0
    from convlab.dp import PrivacyParams, measure
    demo = demo_dataset()
    result = measure(demo,
                     Configuration(LTA, Relation.USER_ADVERTISER, POST, 3),
                     QuerySpec(kind="capped_value_sum", cap=100.0),
                     PrivacyParams(epsilon=0.5, c0=1.0, seed=0))
    ok &= result.noise_scale == 1.0 * 3 * 100.0 / 0.5
    result = measure(demo, Configuration(FTA, Relation.IMPRESSION, POST, 1),
                     QuerySpec(kind="sliced_count"),
                     PrivacyParams(epsilon=1.0, c0=2.0, seed=0))
    ok &= result.noise_scale == 2.0
    ok &= sensitivity_of(QuerySpec(kind="sliced_count")) == 1.0
    ok &= sensitivity_of(QuerySpec(kind="capped_value_sum", cap=7.5)) == 7.5
    ok &= sensitivity_of(QuerySpec(kind="distinct_users")) == 1.0
    _verdict("criterion 7: sampler variance and noise calibration",
             bool(ok), started, 30.0, f"variance {variance:.4f}")


def test_criterion_8_metric_and_simplex_properties():
    started = time.monotonic()
    rng = np.random.default_rng(8)
    imp_ids = [f"i{k}" for k in range(5)]
    conv_ids = [f"c{k}" for k in range(5)]

    def random_weights():
        triples = []
        for imp in imp_ids:
            for conv in conv_ids:
                if rng.random() < 0.25:
                    triples.append((imp, conv, float(rng.uniform(0.01, 4.0))))
        return AttributedDataset(triples)

    metric_failures = 0
    for _ in range(10_000):
        a, b, c = random_weights(), random_weights(), random_weights()
        dab, dba = l1_distance(a, b), l1_distance(b, a)
        if dab < 0 or dab != dba:
            metric_failures += 1
        if (dab == 0.0) != (a == b):
            metric_failures += 1
        if dab > l1_distance(a, c) + l1_distance(c, b) + 1e-9:
            metric_failures += 1

    rules = [LTA, FTA, UNI, EXP, USH]
    simplex_failures = 0
    for _ in range(10_000):
        m = int(rng.integers(1, 12))
        times = np.sort(rng.integers(0, 30, size=m))
        imps = [Impression(f"s{k:02d}", int(t), "U", f"P{k % 3}", "A")
                for k, t in enumerate(times)]
        conv = Conversion("sc", int(times[-1]) + int(rng.integers(0, 5)), "U", "A")
        weights = attribute(rules[int(rng.integers(len(rules)))], imps, conv)
        if len(weights) != m or any(w < 0 for w in weights):
            simplex_failures += 1
        elif abs(math.fsum(weights) - 1.0) > 1e-9:
            simplex_failures += 1
    ok = metric_failures == 0 and simplex_failures == 0
    _verdict("criterion 8: metric axioms and simplex membership, 10k cases each",
             ok, started, 30.0,
             f"metric failures {metric_failures}, simplex failures {simplex_failures}")
