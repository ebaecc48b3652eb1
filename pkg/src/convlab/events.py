"""Event data model, JSON-lines ingestion, and the built-in demo dataset.

An impression is an ad engagement (click or view) by a user on a publisher
site; a conversion is a valuable action (purchase, sign-up, ...) on an
advertiser site.  A ``Dataset`` is an immutable event log of both kinds,
kept in one canonical chronological order: ascending ``(t, id)``, so equal
timestamps are broken deterministically by id.

The JSON-lines schema is one object per line:

    {"kind": "impression", "id": ..., "t": ..., "user": ..., "publisher": ...,
     "advertiser": ..., "engagement": "click"|"view", "meta": {...}}
    {"kind": "conversion", "id": ..., "t": ..., "user": ..., "advertiser": ...,
     "conv_type": "purchase"|"signup"|"add_to_cart"|"other", "value": ...,
     "meta": {...}}

``value`` defaults to 0 and ``meta`` to the empty map when absent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Iterator

ENGAGEMENTS = ("click", "view")
CONVERSION_TYPES = ("purchase", "signup", "add_to_cart", "other")


class ParseError(ValueError):
    """A line of the event log is not valid JSON."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SchemaError(ValueError):
    """A record is well-formed JSON but violates the event schema."""

    def __init__(self, line: int | None, message: str):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class IntegrityError(ValueError):
    """Records are individually valid but inconsistent as a dataset."""


@dataclass(frozen=True, slots=True)
class Impression:
    """One ad engagement on a publisher site."""

    id: str
    t: int
    user: str
    publisher: str
    advertiser: str
    engagement: str = "click"
    meta: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Conversion:
    """One valuable action on an advertiser site."""

    id: str
    t: int
    user: str
    advertiser: str
    conv_type: str = "purchase"
    value: float = 0.0
    meta: dict[str, str] = field(default_factory=dict)


Event = Impression | Conversion


def event_key(event: Event) -> tuple[int, str]:
    """Canonical chronological sort key; ids are unique, so this is total."""
    return (event.t, event.id)


@dataclass(frozen=True, slots=True)
class Dataset:
    """Chronologically ordered impressions and conversions.

    Both lists are sorted ascending by ``(t, id)`` and ids are unique across
    the two lists.  Instances are immutable and safe to share between
    concurrent readers; build them with :func:`make_dataset` or
    :func:`parse_events`.
    """

    impressions: tuple[Impression, ...] = ()
    conversions: tuple[Conversion, ...] = ()

    def ids(self) -> set[str]:
        return {e.id for e in self.impressions} | {e.id for e in self.conversions}

    def events_in_order(self) -> list[Event]:
        """All events merged into one chronological stream."""
        return sorted([*self.impressions, *self.conversions], key=event_key)


def make_dataset(impressions: Iterable[Impression],
                 conversions: Iterable[Conversion]) -> Dataset:
    """Sort events into canonical order and check id uniqueness."""
    imps = tuple(sorted(impressions, key=event_key))
    convs = tuple(sorted(conversions, key=event_key))
    seen: set[str] = set()
    for e in (*imps, *convs):
        if e.id in seen:
            raise IntegrityError(f"duplicate id {e.id!r}")
        seen.add(e.id)
    return Dataset(imps, convs)


def _require(obj: dict, name: str, line: int):
    if name not in obj:
        raise SchemaError(line, f"missing required field {name!r}")
    return obj[name]


def _string_field(obj: dict, name: str, line: int) -> str:
    value = _require(obj, name, line)
    if not isinstance(value, str) or not value:
        raise SchemaError(line, f"field {name!r} must be a non-empty string")
    return value


def _timestamp_field(obj: dict, line: int) -> int:
    value = _require(obj, "t", line)
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(line, "field 't' must be an integer")
    if value < 0:
        raise SchemaError(line, "field 't' must be >= 0")
    return value


def _meta_field(obj: dict, line: int) -> dict[str, str]:
    meta = obj.get("meta", {})
    if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()):
        raise SchemaError(line, "field 'meta' must map strings to strings")
    return dict(meta)


def _impression_from(obj: dict, line: int) -> Impression:
    engagement = _string_field(obj, "engagement", line)
    if engagement not in ENGAGEMENTS:
        raise SchemaError(line, f"engagement must be one of {ENGAGEMENTS}")
    return Impression(
        id=_string_field(obj, "id", line),
        t=_timestamp_field(obj, line),
        user=_string_field(obj, "user", line),
        publisher=_string_field(obj, "publisher", line),
        advertiser=_string_field(obj, "advertiser", line),
        engagement=engagement,
        meta=_meta_field(obj, line),
    )


def _conversion_from(obj: dict, line: int) -> Conversion:
    conv_type = _string_field(obj, "conv_type", line)
    if conv_type not in CONVERSION_TYPES:
        raise SchemaError(line, f"conv_type must be one of {CONVERSION_TYPES}")
    value = obj.get("value", 0.0)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(line, "field 'value' must be a number")
    if value < 0:
        raise SchemaError(line, "field 'value' must be >= 0")
    return Conversion(
        id=_string_field(obj, "id", line),
        t=_timestamp_field(obj, line),
        user=_string_field(obj, "user", line),
        advertiser=_string_field(obj, "advertiser", line),
        conv_type=conv_type,
        value=float(value),
        meta=_meta_field(obj, line),
    )


def event_from_record(obj: dict, line: int | None = None) -> Event:
    """Build one event from a decoded JSON-lines record."""
    if not isinstance(obj, dict):
        raise SchemaError(line, "record must be a JSON object")
    kind = obj.get("kind")
    if kind == "impression":
        return _impression_from(obj, line)
    if kind == "conversion":
        return _conversion_from(obj, line)
    raise SchemaError(line, f"unknown kind {kind!r}")


def parse_events(lines: Iterable[str]) -> Dataset:
    """Parse a JSON-lines event stream into a canonical Dataset.

    Input order is irrelevant: the result is sorted by ``(t, id)``.  Blank
    lines are skipped.  Raises :class:`ParseError` for malformed JSON,
    :class:`SchemaError` for records missing or mistyping fields, and
    :class:`IntegrityError` for duplicate ids.
    """
    impressions: list[Impression] = []
    conversions: list[Conversion] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, f"invalid JSON: {exc.msg}") from None
        event = event_from_record(obj, lineno)
        if isinstance(event, Impression):
            impressions.append(event)
        else:
            conversions.append(event)
        if event.id in seen:
            raise IntegrityError(f"duplicate id {event.id!r} (line {lineno})")
        seen.add(event.id)
    impressions.sort(key=event_key)
    conversions.sort(key=event_key)
    return Dataset(tuple(impressions), tuple(conversions))


def event_to_record(event: Event) -> dict:
    """The JSON-lines object for one event, with all fields explicit."""
    if isinstance(event, Impression):
        return {
            "kind": "impression", "id": event.id, "t": event.t,
            "user": event.user, "publisher": event.publisher,
            "advertiser": event.advertiser, "engagement": event.engagement,
            "meta": dict(event.meta),
        }
    return {
        "kind": "conversion", "id": event.id, "t": event.t,
        "user": event.user, "advertiser": event.advertiser,
        "conv_type": event.conv_type, "value": event.value,
        "meta": dict(event.meta),
    }


def serialize_events(dataset: Dataset) -> Iterator[str]:
    """Yield the dataset as JSON lines in chronological order.

    Round-trips exactly: ``parse_events(serialize_events(d)) == d``.
    """
    for event in dataset.events_in_order():
        yield json.dumps(event_to_record(event))


def validate_dataset(dataset: Dataset) -> list[str]:
    """Return one description per invariant violation; empty means valid."""
    violations: list[str] = []
    seen: set[str] = set()
    for label, events in (("impression", dataset.impressions),
                          ("conversion", dataset.conversions)):
        previous = None
        for index, event in enumerate(events):
            if event.id in seen:
                violations.append(f"duplicate id {event.id!r}")
            seen.add(event.id)
            if previous is not None and event_key(event) < event_key(previous):
                violations.append(
                    f"{label} ordering violated at index {index} (id {event.id!r})")
            previous = event
            if event.t < 0:
                violations.append(f"negative timestamp on {label} {event.id!r}")
    for imp in dataset.impressions:
        if imp.engagement not in ENGAGEMENTS:
            violations.append(f"invalid engagement on impression {imp.id!r}")
    for conv in dataset.conversions:
        if conv.conv_type not in CONVERSION_TYPES:
            violations.append(f"invalid conv_type on conversion {conv.id!r}")
        if conv.value < 0:
            violations.append(f"negative value on conversion {conv.id!r}")
    return violations


def demo_dataset() -> Dataset:
    """The worked example dataset used throughout the docs and tests.

    One user interacts with ads for two advertisers, each impression on its
    own publisher, and converts five times:

        i1(t=1, A1)  i2(t=2, A1)  c1(t=3, A1)  c2(t=4, A1)  c3(t=5, A1)
        i3(t=6, A1)  i4(t=7, A1)  c4(t=8, A1)  i5(t=9, A2)  c5(t=10, A2)

    Under last-touch attribution without bounding this attributes c1..c3 to
    i2, c4 to i4, and c5 to i5.
    """
    user = "U"
    imps = [
        Impression("i1", 1, user, "P1", "A1"),
        Impression("i2", 2, user, "P2", "A1"),
        Impression("i3", 6, user, "P3", "A1"),
        Impression("i4", 7, user, "P4", "A1"),
        Impression("i5", 9, user, "P5", "A2"),
    ]
    convs = [
        Conversion("c1", 3, user, "A1"),
        Conversion("c2", 4, user, "A1"),
        Conversion("c3", 5, user, "A1"),
        Conversion("c4", 8, user, "A1"),
        Conversion("c5", 10, user, "A2"),
    ]
    return make_dataset(imps, convs)
