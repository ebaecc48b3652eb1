"""Attribution rules: how one conversion's unit of credit is split.

A rule maps a non-empty, time-sorted sequence of impressions (same user and
advertiser as the conversion, none later than it) to a weight vector on the
probability simplex.  Built-in rules:

    LTA   last touch: (0, ..., 0, 1)
    FTA   first touch: (1, 0, ..., 0)
    UNI   uniform: (1/m, ..., 1/m)
    EXP   time decay: weight proportional to 0.5 ** (gap / half_life)
    U-S   u-shaped: 0.4 first, 0.4 last, 0.2 spread over the middle

Two parameterized families are supported as well.  A positional rule (POS)
is a table of vectors indexed only by the sequence length; an impression
priority rule (IPA) is any function of the impression sequence alone, so its
output never depends on the conversion.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .events import Conversion, Impression, event_key

RULE_KINDS = ("LTA", "FTA", "UNI", "EXP", "U-S", "POS", "IPA")

# Built-in rules must land on the simplex almost exactly; user-supplied
# POS/IPA vectors get a looser gate so tabulated inputs survive rounding.
SIMPLEX_TOL = 1e-9
USER_SIMPLEX_TOL = 1e-6

PositionVectors = Callable[[int], Sequence[float]]
PriorityFunction = Callable[[Sequence[Impression]], Sequence[float]]


class ConfigurationError(ValueError):
    """A rule or run configuration is internally inconsistent."""


@dataclass(frozen=True)
class AttributionRule:
    """A configured attribution rule; use :func:`make_rule` to build one."""

    kind: str
    half_life: float | None = None
    pos_vectors: PositionVectors | None = None
    priority: PriorityFunction | None = None
    label: str | None = None

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind == "EXP":
            return f"EXP(half_life={self.half_life:g})"
        return self.kind

    def weights(self, impressions: Sequence[Impression],
                conversion: Conversion) -> tuple[float, ...]:
        return attribute(self, impressions, conversion)


def make_rule(kind: str, *, half_life: float | None = None,
              pos_vectors: PositionVectors | None = None,
              priority: PriorityFunction | None = None,
              label: str | None = None) -> AttributionRule:
    """Validate parameters and return a rule handle.

    EXP requires ``half_life > 0``; POS requires ``pos_vectors`` (length m ->
    vector on the simplex); IPA requires ``priority``.  The other kinds take
    no parameters.
    """
    if kind not in RULE_KINDS:
        raise ConfigurationError(f"unknown attribution rule {kind!r}")
    if kind == "EXP":
        if half_life is None or not half_life > 0:
            raise ConfigurationError("EXP requires half_life > 0")
    elif half_life is not None:
        raise ConfigurationError(f"half_life is only meaningful for EXP, not {kind}")
    if kind == "POS":
        if pos_vectors is None:
            raise ConfigurationError("POS requires a position-vector table")
    elif pos_vectors is not None:
        raise ConfigurationError("pos_vectors is only meaningful for POS")
    if kind == "IPA":
        if priority is None:
            raise ConfigurationError("IPA requires a priority function")
    elif priority is not None:
        raise ConfigurationError("priority is only meaningful for IPA")
    return AttributionRule(kind=kind, half_life=half_life,
                           pos_vectors=pos_vectors, priority=priority,
                           label=label)


def _check_input(impressions: Sequence[Impression], conversion: Conversion) -> None:
    if len(impressions) == 0:
        raise ValueError("attribution input must contain at least one impression")
    previous = None
    for imp in impressions:
        if imp.user != conversion.user or imp.advertiser != conversion.advertiser:
            raise ValueError(
                f"impression {imp.id!r} does not share the conversion's user/advertiser")
        if imp.t > conversion.t:
            raise ValueError(f"impression {imp.id!r} is later than the conversion")
        if previous is not None and event_key(imp) < event_key(previous):
            raise ValueError("impressions must be sorted from least to most recent")
        previous = imp


def _check_simplex(weights: Sequence[float], m: int, tol: float, what: str) -> None:
    if len(weights) != m:
        raise ConfigurationError(f"{what} returned {len(weights)} weights for {m} impressions")
    total = 0.0
    for w in weights:
        if w < -tol:
            raise ConfigurationError(f"{what} produced a negative weight {w!r}")
        total += w
    if abs(total - 1.0) > tol:
        raise ConfigurationError(f"{what} weights sum to {total!r}, not 1")


def _exp_weights(impressions: Sequence[Impression], conversion: Conversion,
                 half_life: float) -> list[float]:
    gaps = [conversion.t - imp.t for imp in impressions]
    # Shift by the smallest gap so the largest raw weight is exactly 1;
    # this cannot change the normalized result but avoids 0/0 underflow.
    nearest = min(gaps)
    raw = [0.5 ** ((gap - nearest) / half_life) for gap in gaps]
    total = 0.0
    for value in raw:  # fixed left-to-right order for cross-run determinism
        total += value
    return [value / total for value in raw]


def _ushaped_weights(m: int) -> list[float]:
    if m == 1:
        return [1.0]
    if m == 2:
        return [0.5, 0.5]
    middle = 0.2 / (m - 2)
    return [0.4] + [middle] * (m - 2) + [0.4]


def attribute(rule: AttributionRule, impressions: Sequence[Impression],
              conversion: Conversion) -> tuple[float, ...]:
    """Split the conversion's unit credit over the impression sequence.

    The result has one entry per impression, entries are non-negative, and
    they sum to 1 (a point on the probability simplex).
    """
    _check_input(impressions, conversion)
    weights = _raw_attribute(rule, impressions, conversion)
    if rule.kind not in ("POS", "IPA"):  # user rules are checked in the raw path
        _check_simplex(weights, len(impressions), SIMPLEX_TOL, f"{rule.kind} rule")
    return weights


def _raw_attribute(rule: AttributionRule, impressions: Sequence[Impression],
                   conversion: Conversion) -> tuple[float, ...]:
    """Weight computation without input validation, for runners whose inputs
    are eligible prefixes by construction.  User-supplied POS/IPA outputs
    are still gated on the simplex."""
    m = len(impressions)
    kind = rule.kind
    if kind == "LTA":
        weights: Sequence[float] = [0.0] * (m - 1) + [1.0]
    elif kind == "FTA":
        weights = [1.0] + [0.0] * (m - 1)
    elif kind == "UNI":
        weights = [1.0 / m] * m
    elif kind == "EXP":
        weights = _exp_weights(impressions, conversion, rule.half_life)
    elif kind == "U-S":
        weights = _ushaped_weights(m)
    elif kind == "POS":
        weights = list(rule.pos_vectors(m))
        _check_simplex(weights, m, USER_SIMPLEX_TOL, f"position vector for m={m}")
    elif kind == "IPA":
        weights = list(rule.priority(tuple(impressions)))
        _check_simplex(weights, m, USER_SIMPLEX_TOL, "priority function")
    else:  # pragma: no cover - make_rule rejects unknown kinds
        raise ConfigurationError(f"unknown attribution rule {kind!r}")
    return tuple(weights)


# Reference POS / IPA instances.  Both families contain first-touch and
# uniform behaviour; these instances are what the classification runner
# uses to show the families split between valid and invalid members.

def first_position_vector(m: int) -> list[float]:
    """POS table equivalent to first-touch attribution."""
    return [1.0] + [0.0] * (m - 1)


def uniform_position_vector(m: int) -> list[float]:
    """POS table equivalent to uniform attribution."""
    return [1.0 / m] * m


def first_priority(impressions: Sequence[Impression]) -> list[float]:
    """IPA priority equivalent to first-touch attribution."""
    return first_position_vector(len(impressions))


def uniform_priority(impressions: Sequence[Impression]) -> list[float]:
    """IPA priority equivalent to uniform attribution."""
    return uniform_position_vector(len(impressions))


@dataclass(frozen=True)
class TabulatedVectors:
    """Picklable lookup of per-length weight vectors, for POS/IPA configs."""

    table: tuple[tuple[int, tuple[float, ...]], ...]

    def vector(self, m: int) -> tuple[float, ...]:
        for length, weights in self.table:
            if length == m:
                return weights
        raise ConfigurationError(f"vector table has no entry for m={m}")

    def __call__(self, arg) -> tuple[float, ...]:
        # POS passes the length, IPA passes the impression sequence.
        m = arg if isinstance(arg, int) else len(arg)
        return self.vector(m)


def _tabulate(vectors: dict[int, Sequence[float]]) -> TabulatedVectors:
    items = sorted((int(m), tuple(float(w) for w in v)) for m, v in vectors.items())
    return TabulatedVectors(tuple(items))


def pos_rule_from_table(vectors: dict[int, Sequence[float]], *,
                        label: str | None = None) -> AttributionRule:
    """Build a POS rule from tabulated vectors keyed by sequence length.

    Attribution of a sequence longer than the table raises a configuration
    error, which keeps tabulated configs honest about their supported range.
    """
    return make_rule("POS", pos_vectors=_tabulate(vectors), label=label)


def ipa_rule_from_table(vectors: dict[int, Sequence[float]], *,
                        label: str | None = None) -> AttributionRule:
    """Build an IPA rule whose priority depends only on sequence length."""
    return make_rule("IPA", priority=_tabulate(vectors), label=label)
