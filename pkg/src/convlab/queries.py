"""Measurement queries over attributed datasets, and their sensitivities.

A query maps an attributed dataset to a real vector, one coordinate per
slice.  Its sensitivity is the largest l1 change of that vector per unit
l1 change of the attributed dataset; it calibrates the noise added by the
measurement layer.

    sliced_count       per slice, total attributed weight           sens 1
    capped_value_sum   per slice, sum of weight * min(value, cap)   sens cap
    distinct_users     number of users with any attributed pair     sens 1

Slices are predicates on the attributes of the (impression, conversion)
pair; a field is looked up on the impression first (including its metadata),
then on the conversion.  Declared-overlapping slices multiply the
sensitivity by the maximum number of slices one pair can match.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bounding import AttributedDataset
from .events import Conversion, Dataset, Impression, IntegrityError

QUERY_KINDS = ("sliced_count", "capped_value_sum", "distinct_users")


@dataclass(frozen=True)
class Slice:
    """Match pairs whose ``field`` equals ``equals``; no field matches all."""

    field: str | None = None
    equals: str | None = None

    def matches(self, imp: Impression, conv: Conversion) -> bool:
        if self.field is None:
            return True
        return _field_value(self.field, imp, conv) == self.equals


def _field_value(field: str, imp: Impression, conv: Conversion):
    # Impression attributes shadow conversion attributes on name conflicts
    # (slicing by publisher or geo reads the impression side).
    for source in (
        {"id": imp.id, "user": imp.user, "publisher": imp.publisher,
         "advertiser": imp.advertiser, "engagement": imp.engagement},
        imp.meta,
        {"id": conv.id, "user": conv.user, "advertiser": conv.advertiser,
         "conv_type": conv.conv_type},
        conv.meta,
    ):
        if field in source:
            return source[field]
    return None


@dataclass(frozen=True)
class QuerySpec:
    kind: str
    slices: tuple[Slice, ...] = (Slice(),)
    cap: float | None = None
    max_overlap: int = 1

    def __post_init__(self):
        if self.kind not in QUERY_KINDS:
            raise ValueError(f"unknown query kind {self.kind!r}")
        if self.kind == "capped_value_sum" and (self.cap is None or self.cap <= 0):
            raise ValueError("capped_value_sum requires cap > 0")
        if self.max_overlap < 1:
            raise ValueError("max_overlap must be >= 1")
        if not self.slices:
            raise ValueError("at least one slice is required")

    @property
    def dimension(self) -> int:
        return 1 if self.kind == "distinct_users" else len(self.slices)


def parse_query(obj: dict) -> QuerySpec:
    """Build a QuerySpec from its JSON form.

    Example: {"kind": "sliced_count",
              "slices": [{"field": "publisher", "equals": "P1"}]}
    """
    slices = tuple(
        Slice(field=s.get("field"), equals=s.get("equals"))
        for s in obj.get("slices", [{}])
    ) or (Slice(),)
    cap = obj.get("cap")
    return QuerySpec(kind=obj["kind"], slices=slices,
                     cap=None if cap is None else float(cap),
                     max_overlap=int(obj.get("max_overlap", 1)))


def query_to_dict(query: QuerySpec) -> dict:
    out: dict = {"kind": query.kind}
    if query.kind != "distinct_users":
        out["slices"] = [
            {} if s.field is None else {"field": s.field, "equals": s.equals}
            for s in query.slices
        ]
    if query.cap is not None:
        out["cap"] = query.cap
    if query.max_overlap != 1:
        out["max_overlap"] = query.max_overlap
    return out


def evaluate(query: QuerySpec, attributed: AttributedDataset,
             dataset: Dataset) -> tuple[float, ...]:
    """The query's measurement vector, one coordinate per slice."""
    imps = {i.id: i for i in dataset.impressions}
    convs = {c.id: c for c in dataset.conversions}
    if query.kind == "distinct_users":
        users = set()
        for (imp_id, conv_id), _ in attributed.items():
            conv = convs.get(conv_id)
            if imp_id not in imps or conv is None:
                raise IntegrityError(
                    f"attributed pair ({imp_id!r}, {conv_id!r}) references "
                    f"events missing from the dataset")
            users.add(conv.user)
        return (float(len(users)),)
    values = [0.0] * len(query.slices)
    for (imp_id, conv_id), weight in attributed.items():
        imp = imps.get(imp_id)
        conv = convs.get(conv_id)
        if imp is None or conv is None:
            raise IntegrityError(
                f"attributed pair ({imp_id!r}, {conv_id!r}) references "
                f"events missing from the dataset")
        if query.kind == "sliced_count":
            contribution = weight
        else:
            contribution = weight * min(conv.value, query.cap)
        for index, slice_ in enumerate(query.slices):
            if slice_.matches(imp, conv):
                values[index] += contribution
    return tuple(values)


def sensitivity_of(query: QuerySpec) -> float:
    """Worst-case l1 change of the vector per unit l1 change of weights."""
    if query.kind == "capped_value_sum":
        base = query.cap
    else:
        base = 1.0
    return base * query.max_overlap
