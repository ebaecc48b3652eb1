"""Shared fixtures and hypothesis strategies for the test suite."""

from __future__ import annotations

import pytest
from hypothesis import strategies as st

from convlab.events import Conversion, Impression, make_dataset, demo_dataset

USERS = ("U1", "U2")
PUBLISHERS = ("P1", "P2", "P3")
ADVERTISERS = ("A1", "A2")


@pytest.fixture
def demo():
    return demo_dataset()


@st.composite
def impressions(draw, id_):
    return Impression(
        id=id_,
        t=draw(st.integers(0, 20)),
        user=draw(st.sampled_from(USERS)),
        publisher=draw(st.sampled_from(PUBLISHERS)),
        advertiser=draw(st.sampled_from(ADVERTISERS)),
        engagement=draw(st.sampled_from(("click", "view"))),
    )


@st.composite
def conversions(draw, id_):
    return Conversion(
        id=id_,
        t=draw(st.integers(0, 20)),
        user=draw(st.sampled_from(USERS)),
        advertiser=draw(st.sampled_from(ADVERTISERS)),
        value=draw(st.floats(0, 50, allow_nan=False, width=16)),
    )


@st.composite
def datasets(draw, max_events: int = 12):
    """Small random datasets with deliberately colliding timestamps."""
    n_imp = draw(st.integers(0, max_events // 2))
    n_conv = draw(st.integers(0, max_events // 2))
    imps = [draw(impressions(f"i{k:02d}")) for k in range(n_imp)]
    convs = [draw(conversions(f"c{k:02d}")) for k in range(n_conv)]
    return make_dataset(imps, convs)


@st.composite
def weight_maps(draw, max_pairs: int = 8):
    """Random attributed-dataset weight assignments over a tiny key space."""
    keys = draw(st.lists(
        st.tuples(st.sampled_from([f"i{k}" for k in range(4)]),
                  st.sampled_from([f"c{k}" for k in range(4)])),
        max_size=max_pairs, unique=True))
    return [
        (imp, conv, draw(st.floats(0.01, 5.0, allow_nan=False)))
        for imp, conv in keys
    ]
