"""End-to-end private measurement: bounded attribution, query, Laplace noise.

The measurement pipeline runs the configured attribution system, evaluates
the query, and perturbs each coordinate with independent Laplace noise of
scale ``c0 * r * sensitivity / epsilon``.  With a valid configuration that
makes the whole release epsilon-differentially private under the
configuration's adjacency relation.

Configurations with no established constant are refused by default rather
than silently noised, because the noise needed to cover them grows with the
number of publishers and advertisers, which is unbounded in practice.
Callers who know what they are doing can override the refusal.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .attribution import ConfigurationError
from .bounding import Configuration, run
from .events import Dataset
from .queries import QuerySpec, evaluate, query_to_dict, sensitivity_of
from .validity import classify_configuration


class InvalidConfigurationError(ConfigurationError):
    """Measuring was refused: the configuration has no established constant."""


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy budget for one measurement."""

    epsilon: float
    c0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be > 0")
        if not self.c0 >= 1:
            raise ConfigurationError("c0 must be >= 1")


@dataclass(frozen=True)
class NoisyMeasurement:
    values: tuple[float, ...]
    noise_scale: float
    epsilon_spent: float
    config_fingerprint: str

    def to_dict(self) -> dict:
        return {"values": list(self.values), "noise_scale": self.noise_scale,
                "epsilon_spent": self.epsilon_spent,
                "config_fingerprint": self.config_fingerprint}


def laplace_inverse_cdf(p: float, scale: float) -> float:
    """Quantile function of the zero-mean Laplace distribution."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    u = p - 0.5
    return -scale * math.copysign(1.0, u) * math.log1p(-2.0 * abs(u))


def laplace_sample(scale: float, rng: np.random.Generator) -> float:
    """One Laplace draw via the inverse CDF; deterministic given rng state."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    # random() lives in [0, 1); clamp the measure-zero 0.0 to a far quantile.
    p = max(rng.random(), 5e-324)
    return laplace_inverse_cdf(p, scale)


def laplace_samples(scale: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized Laplace draws, same transform as :func:`laplace_sample`."""
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    u = np.maximum(rng.random(n), 5e-324) - 0.5
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def config_fingerprint(cfg: Configuration, query: QuerySpec,
                       epsilon: float) -> str:
    """Stable hash of everything that determines a measurement's distribution."""
    payload = {
        "rule": cfg.rule.name,
        "relation": cfg.relation.value,
        "enforcement": cfg.enforcement.value,
        "r": cfg.r,
        "query": query_to_dict(query),
        "epsilon": epsilon,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode("utf-8"))
    return digest.hexdigest()[:16]


def measurement_rng(seed: int, fingerprint: str) -> np.random.Generator:
    """One independent, reproducible stream per (seed, configuration)."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, int(fingerprint, 16)]))


def measure(dataset: Dataset, cfg: Configuration, query: QuerySpec,
            params: PrivacyParams, *,
            unsafe_allow_invalid: bool = False) -> NoisyMeasurement:
    """Run the attribution system, evaluate the query, add calibrated noise.

    The configuration must be one with an established constant, and
    ``params.c0`` must equal that constant; anything else is refused unless
    ``unsafe_allow_invalid`` is set, in which case the caller's c0 is used
    verbatim and the output carries no privacy guarantee.
    """
    cell = classify_configuration(cfg)
    if not cell.valid:
        if not unsafe_allow_invalid:
            raise InvalidConfigurationError(
                f"refusing to measure: {cell.reason}. "
                f"Pass unsafe_allow_invalid to proceed without a guarantee.")
        c0 = params.c0
    else:
        if params.c0 != cell.c0:
            raise ConfigurationError(
                f"c0={params.c0} does not match the classification constant "
                f"{cell.c0} for this configuration")
        c0 = cell.c0
    noiseless = evaluate(query, run(dataset, cfg), dataset)
    scale = c0 * cfg.r * sensitivity_of(query) / params.epsilon
    fingerprint = config_fingerprint(cfg, query, params.epsilon)
    rng = measurement_rng(params.seed, fingerprint)
    values = tuple(value + laplace_sample(scale, rng) for value in noiseless)
    return NoisyMeasurement(values=values, noise_scale=scale,
                            epsilon_spent=params.epsilon,
                            config_fingerprint=fingerprint)


def compose(spent: Iterable[float] | Sequence[float]) -> float:
    """Total epsilon under sequential composition (the plain sum)."""
    total = 0.0
    for epsilon in spent:
        if not epsilon > 0:
            raise ValueError(f"spent epsilon values must be > 0, got {epsilon}")
        total += epsilon
    return total
