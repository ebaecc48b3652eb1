"""Differentially private ad conversion measurement and its validity lab."""

from .events import (
    Conversion,
    Dataset,
    Impression,
    IntegrityError,
    ParseError,
    SchemaError,
    demo_dataset,
    make_dataset,
    parse_events,
    serialize_events,
    validate_dataset,
)
from .attribution import (
    AttributionRule,
    ConfigurationError,
    attribute,
    make_rule,
)
from .bounding import (
    AttributedDataset,
    Configuration,
    Enforcement,
    Relation,
    ScopeKey,
    attributed_from_jsonl,
    attributed_to_jsonl,
    conversion_scope_key,
    l1_distance,
    run,
    run_event_admission,
    run_post_attribution,
    run_pre_attribution,
    run_unbounded,
    scope_key,
)
from .adjacency import (
    AdjacencyUnit,
    NeighborPool,
    PoolGroup,
    adjacency_units,
    empirical_sensitivity,
    parse_pool,
    remove_unit,
    worst_neighbor,
)
from .queries import QuerySpec, Slice, evaluate, parse_query, sensitivity_of
from .dp import (
    InvalidConfigurationError,
    NoisyMeasurement,
    PrivacyParams,
    compose,
    laplace_sample,
    measure,
)
from .validity import (
    CounterexampleKind,
    DatasetShape,
    ValidityReport,
    check_validity,
    classification_table,
    classify_configuration,
    construct_counterexample,
)

__version__ = "0.1.0"
