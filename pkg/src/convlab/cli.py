"""Command-line front end.

Subcommands:

    attribute    run a bounded attribution system, emit the attributed dataset
    measure      run the private measurement pipeline, emit a noisy vector
    sensitivity  brute-force the attributed-dataset sensitivity of a config
    classify     build the validity matrix over rules x relations x enforcement
    reproduce    render the built-in reference tables (1, 3, 4, 5)

Global conventions: ``--events`` points at a JSON-lines event log,
``--config`` at a JSON file supplying defaults for any flag (including POS
and IPA vector tables), ``--output`` at a file or directory for artifacts.
Exit status is 0 on success, 1 on a user error (bad flags, bad input files,
refused configurations), 2 on an internal error.  The CONVLAB_JOBS
environment variable overrides ``--jobs``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

from .attribution import (
    AttributionRule,
    ConfigurationError,
    attribute,
    ipa_rule_from_table,
    make_rule,
    pos_rule_from_table,
)
from .adjacency import EMPTY_POOL, parse_pool, worst_neighbor
from .bounding import (
    Configuration,
    Enforcement,
    Relation,
    attributed_to_jsonl,
    run,
)
from .dp import InvalidConfigurationError, PrivacyParams, measure
from .events import (
    Conversion,
    Impression,
    IntegrityError,
    ParseError,
    SchemaError,
    make_dataset,
    parse_events,
    serialize_events,
)
from .queries import QuerySpec, parse_query
from . import report, validity

USER_ERRORS = (ParseError, SchemaError, IntegrityError, ConfigurationError,
               InvalidConfigurationError, FileNotFoundError,
               IsADirectoryError, PermissionError)


class CliError(Exception):
    """User-facing error; message printed to stderr, exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit(2); we reserve 2
        raise CliError(f"{message}\n{self.format_usage()}".rstrip())


RULE_ALIASES = {"US": "U-S", "U-S": "U-S"}

RELATION_ALIASES = {
    "impression": Relation.IMPRESSION,
    "conversion": Relation.CONVERSION,
    "user": Relation.USER,
    "user_publisher": Relation.USER_PUBLISHER,
    "user-publisher": Relation.USER_PUBLISHER,
    "user_advertiser": Relation.USER_ADVERTISER,
    "user-advertiser": Relation.USER_ADVERTISER,
    "user_publisher_advertiser": Relation.USER_PUBLISHER_ADVERTISER,
    "user-publisher-advertiser": Relation.USER_PUBLISHER_ADVERTISER,
}

ENFORCEMENT_ALIASES = {
    "none": Enforcement.NONE,
    "pre": Enforcement.PRE_ATTRIBUTION,
    "pre_attribution": Enforcement.PRE_ATTRIBUTION,
    "post": Enforcement.POST_ATTRIBUTION,
    "post_attribution": Enforcement.POST_ATTRIBUTION,
    "event": Enforcement.EVENT_ADMISSION,
    "event_admission": Enforcement.EVENT_ADMISSION,
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict):
        raise CliError(f"config file {path} must hold a JSON object")
    return config


def _setting(args, config: dict, name: str, default=None):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    return config.get(name, default)


def _load_events(args, config) -> "Dataset":
    path = _setting(args, config, "events")
    if not path:
        raise CliError("--events is required (or 'events' in the config file)")
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh)


def _rule_from(args, config) -> AttributionRule:
    kind = _setting(args, config, "rule")
    if not kind:
        raise CliError("--rule is required (or 'rule' in the config file)")
    kind = RULE_ALIASES.get(kind.upper(), kind.upper())
    if kind == "EXP":
        half_life = _setting(args, config, "half_life")
        if half_life is None:
            raise CliError("EXP needs --half-life")
        return make_rule("EXP", half_life=float(half_life))
    if kind in ("POS", "IPA"):
        vectors = config.get("vectors")
        if not vectors:
            raise CliError(f"{kind} needs a 'vectors' table in the config file, "
                           f"mapping sequence length to a weight vector")
        builder = pos_rule_from_table if kind == "POS" else ipa_rule_from_table
        return builder({int(m): v for m, v in vectors.items()},
                       label=config.get("label"))
    return make_rule(kind)


def _configuration_from(args, config) -> Configuration:
    rule = _rule_from(args, config)
    relation_name = _setting(args, config, "relation")
    if not relation_name:
        raise CliError("--relation is required")
    try:
        relation = RELATION_ALIASES[relation_name.lower()]
    except KeyError:
        raise CliError(f"unknown relation {relation_name!r}; choose from "
                       f"{sorted(set(RELATION_ALIASES))}") from None
    enforcement_name = _setting(args, config, "enforcement", "post")
    try:
        enforcement = ENFORCEMENT_ALIASES[enforcement_name.lower()]
    except KeyError:
        raise CliError(f"unknown enforcement {enforcement_name!r}; choose from "
                       f"{sorted(set(ENFORCEMENT_ALIASES))}") from None
    r = int(_setting(args, config, "bound", 1))
    return Configuration(rule=rule, relation=relation, enforcement=enforcement, r=r)


def _query_from(args, config) -> QuerySpec:
    raw = _setting(args, config, "query")
    if raw is None:
        return QuerySpec(kind="sliced_count")
    if isinstance(raw, dict):
        return parse_query(raw)
    text = raw.strip()
    if not text.startswith("{"):
        with open(text, encoding="utf-8") as fh:
            return parse_query(json.load(fh))
    return parse_query(json.loads(text))


def _resolve_jobs(args) -> int:
    env = os.environ.get("CONVLAB_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliError(f"CONVLAB_JOBS must be an integer, got {env!r}") from None
    return max(1, getattr(args, "jobs", 1) or 1)


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --- subcommands ----------------------------------------------------------

def _cmd_attribute(args) -> int:
    config = _load_config(args.config)
    dataset = _load_events(args, config)
    cfg = _configuration_from(args, config)
    attributed = run(dataset, cfg)
    lines = "".join(line + "\n" for line in attributed_to_jsonl(attributed))
    _emit(lines, _setting(args, config, "output"))
    return 0


def _cmd_measure(args) -> int:
    config = _load_config(args.config)
    dataset = _load_events(args, config)
    cfg = _configuration_from(args, config)
    query = _query_from(args, config)
    epsilon = _setting(args, config, "epsilon")
    if epsilon is None:
        raise CliError("--epsilon is required for measure")
    c0 = _setting(args, config, "c0")
    if c0 is None:
        cell = validity.classify_configuration(cfg)
        c0 = cell.c0 if cell.c0 is not None else 1.0
    params = PrivacyParams(epsilon=float(epsilon), c0=float(c0),
                           seed=int(_setting(args, config, "seed", 0)))
    try:
        result = measure(dataset, cfg, query, params,
                         unsafe_allow_invalid=args.unsafe_allow_invalid)
    except InvalidConfigurationError as exc:
        raise CliError(str(exc).replace("Pass unsafe_allow_invalid",
                                        "Pass --unsafe-allow-invalid")) from None
    _emit(json.dumps(result.to_dict(), indent=2) + "\n",
          _setting(args, config, "output"))
    return 0


def _cmd_sensitivity(args) -> int:
    config = _load_config(args.config)
    dataset = _load_events(args, config)
    cfg = _configuration_from(args, config)
    pool = EMPTY_POOL
    pool_path = _setting(args, config, "pool")
    if pool_path:
        with open(pool_path, encoding="utf-8") as fh:
            pool = parse_pool(fh)
    distance, desc, _ = worst_neighbor(dataset, cfg, pool)
    payload = {"empirical_sensitivity": distance, "worst_neighbor": desc,
               "relation": cfg.relation.value, "enforcement": cfg.enforcement.value,
               "r": cfg.r, "rule": cfg.rule.name}
    _emit(json.dumps(payload, indent=2) + "\n", _setting(args, config, "output"))
    return 0


def _write_classification_artifacts(reports, outdir: Path,
                                    growth_curves=None) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    witness_dir = outdir / "witnesses"
    payload = []
    for item in reports:
        witness_path = None
        if item.witness is not None:
            witness_dir.mkdir(exist_ok=True)
            stem = f"{item.rule}_{item.relation.value}_{item.enforcement.value}"
            stem = stem.replace("/", "_").replace("[", "_").replace("]", "")
            base_file = witness_dir / f"{stem}.base.jsonl"
            neighbor_file = witness_dir / f"{stem}.neighbor.jsonl"
            base_file.write_text(
                "".join(line + "\n" for line in serialize_events(item.witness.base)),
                encoding="utf-8")
            neighbor_file.write_text(
                "".join(line + "\n"
                        for line in serialize_events(item.witness.neighbor)),
                encoding="utf-8")
            witness_path = str(base_file.relative_to(outdir))
        payload.append(report.report_to_dict(item, witness_path))
    report.write_json(outdir / "classification.json", payload)
    report.write_csv(outdir / "classification.csv",
                     ["rule", "relation", "enforcement", "verdict", "c0",
                      "max_ratio", "trials", "witness"],
                     report.classification_rows(reports))
    report.classification_figure(reports, outdir / "classification.png")
    if growth_curves:
        report.growth_figure(growth_curves, outdir / "witness_growth.png")


def _classification_text(reports) -> str:
    rules = list(dict.fromkeys(r.rule for r in reports))
    lookup = {(r.rule, r.relation, r.enforcement): r for r in reports}
    header = ["relation / enforcement", *rules]
    rows = []
    for enforcement, label in ((Enforcement.POST_ATTRIBUTION, "post"),
                               (Enforcement.PRE_ATTRIBUTION, "pre"),
                               (Enforcement.NONE, "none")):
        relations = [rel for rel in (*validity.CLASSIFIED_RELATIONS,
                                     Relation.CONVERSION)
                     if (rules[0], rel, enforcement) in lookup]
        for relation in relations:
            row = [f"{report.RELATION_LABELS[relation]} / {label}"]
            for rule in rules:
                item = lookup.get((rule, relation, enforcement))
                if item is None:
                    row.append("")
                elif item.valid:
                    row.append(f"+ C0={item.c0_claimed:g}")
                else:
                    row.append("-")
            rows.append(row)
    return report.format_table(header, rows)


def _cmd_classify(args) -> int:
    trials = 1000 if args.full else args.trials
    jobs = _resolve_jobs(args)
    reports = validity.classification_table(
        trials=trials, seed=args.seed, jobs=jobs, p_ceiling=args.p_ceiling)
    text = _classification_text(reports)
    sys.stdout.write(text + "\n")
    sys.stdout.write(f"\ncells: {len(reports)}  trials/cell: {trials}  "
                     f"seed: {args.seed}\n")
    if args.output:
        _write_classification_artifacts(reports, Path(args.output))
    return 0


def _table1_dataset():
    imps = [
        Impression("imp1", 1, "U", "publisher1", "A", engagement="click"),
        Impression("imp2", 2, "U", "publisher2", "A", engagement="click"),
        Impression("imp3", 3, "U", "publisher3", "A", engagement="view"),
        Impression("imp4", 4, "U", "publisher4", "A", engagement="click"),
    ]
    return make_dataset(imps, [Conversion("conv", 5, "U", "A")]), imps


def _reproduce_table1(outdir: Path | None) -> str:
    dataset, imps = _table1_dataset()
    conv = dataset.conversions[0]
    rules = [("LTA", make_rule("LTA")), ("FTA", make_rule("FTA")),
             ("UNI", make_rule("UNI")), ("EXP", make_rule("EXP", half_life=1.0))]
    rows = []
    split = {}
    for name, rule in rules:
        weights = attribute(rule, dataset.impressions, conv)
        split[name] = list(weights)
        rows.append([name, *(f"{w:.4f}" for w in weights)])
    headers = ["rule", *(imp.publisher for imp in imps)]
    text = ("Credit split on the example path "
            "(four impressions at t=1..4, conversion at t=5, half-life 1)\n\n"
            + report.format_table(headers, rows) + "\n")
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        report.write_json(outdir / "table1.json", split)
        report.write_csv(outdir / "table1.csv", headers,
                         [[name, *weights] for name, weights in split.items()])
        report.credit_split_figure(split, outdir / "table1.png")
    return text


def _pairs_cell(attributed) -> str:
    ordered = sorted(attributed.pairs(), key=lambda ic: (ic[1], ic[0]))
    return " ".join(f"({i}, {c})" for i, c in ordered) if ordered else "(empty)"


def _reproduce_table3(outdir: Path | None) -> str:
    from .events import demo_dataset

    dataset = demo_dataset()
    lta = make_rule("LTA")
    rows_spec = [
        ("none", None),
        ("impression (bound=2)", Relation.IMPRESSION),
        ("user x advertiser (bound=2)", Relation.USER_ADVERTISER),
        ("user (bound=2)", Relation.USER),
    ]
    rows = []
    payload = {}
    for label, relation in rows_spec:
        if relation is None:
            attributed = run(dataset, Configuration(
                lta, Relation.IMPRESSION, Enforcement.NONE, 1))
        else:
            attributed = run(dataset, Configuration(
                lta, relation, Enforcement.POST_ATTRIBUTION, 2))
        rows.append([label, _pairs_cell(attributed)])
        payload[label] = sorted(
            [[i, c, w] for (i, c), w in attributed.items()],
            key=lambda t: (t[1], t[0]))
    text = ("Post-attribution contribution bounding on the demo dataset "
            "(last-touch rule)\n\n"
            + report.format_table(["bounding", "attributed pairs"], rows) + "\n")
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        report.write_json(outdir / "table3.json", payload)
        report.write_csv(outdir / "table3.csv", ["bounding", "attributed pairs"], rows)
    return text


TABLE4_NOTE = (
    "note: the per-event admission variant charges each event on arrival, so\n"
    "impressions alone can exhaust a scope before any conversion is seen.\n"
    "The per-conversion pre-attribution runner charges one unit per involved\n"
    "scope per conversion and therefore yields different results on the same\n"
    "inputs; both are shown above.")


def _reproduce_table4(outdir: Path | None) -> str:
    from .events import demo_dataset

    dataset = demo_dataset()
    lta = make_rule("LTA")
    rows = []
    payload = {"event_admission": {}, "pre_attribution": {}}
    for label, relation in (("user x advertiser (bound=2)", Relation.USER_ADVERTISER),
                            ("user (bound=2)", Relation.USER)):
        admitted = run(dataset, Configuration(
            lta, relation, Enforcement.EVENT_ADMISSION, 2))
        charged = run(dataset, Configuration(
            lta, relation, Enforcement.PRE_ATTRIBUTION, 2))
        rows.append([label, _pairs_cell(admitted), _pairs_cell(charged)])
        payload["event_admission"][label] = sorted(
            [[i, c, w] for (i, c), w in admitted.items()])
        payload["pre_attribution"][label] = sorted(
            [[i, c, w] for (i, c), w in charged.items()])
    text = ("Pre-attribution contribution bounding on the demo dataset "
            "(last-touch rule)\n\n"
            + report.format_table(
                ["bounding", "event admission", "per-conversion charging"], rows)
            + "\n\n" + TABLE4_NOTE + "\n")
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
        payload["note"] = TABLE4_NOTE.replace("\n", " ")
        report.write_json(outdir / "table4.json", payload)
        report.write_csv(outdir / "table4.csv",
                         ["bounding", "event_admission", "pre_attribution"], rows)
    return text


def _reproduce_table5(args, outdir: Path | None) -> str:
    trials = 1000 if args.full else args.trials
    reports = validity.classification_table(
        trials=trials, seed=args.seed, jobs=_resolve_jobs(args),
        p_ceiling=args.p_ceiling)
    text = ("Validity of configurations "
            f"(observed; {trials} trials per cell, seed {args.seed})\n\n"
            + _classification_text(reports) + "\n")
    if outdir:
        curves = {}
        post = Enforcement.POST_ATTRIBUTION
        growth_specs = [
            ("uni_impression / UNI", validity.CounterexampleKind.UNI_IMPRESSION,
             make_rule("UNI"), Relation.IMPRESSION, "uniform"),
            ("exp_impression / EXP", validity.CounterexampleKind.EXP_IMPRESSION,
             make_rule("EXP", half_life=1.0), Relation.IMPRESSION, "uniform"),
            ("ushaped_impression / U-S",
             validity.CounterexampleKind.USHAPED_IMPRESSION,
             make_rule("U-S"), Relation.IMPRESSION, "uniform"),
            ("lta_user_pub_adv / LTA",
             validity.CounterexampleKind.LTA_USER_PUB_ADV,
             make_rule("LTA"), Relation.USER_PUBLISHER_ADVERTISER, "uniform"),
            ("anyrule_user_pub / UNI",
             validity.CounterexampleKind.ANYRULE_USER_PUB,
             make_rule("UNI"), Relation.USER_PUBLISHER, "uniform"),
        ]
        for label, kind, rule, relation, layout in growth_specs:
            cfg = Configuration(rule, relation, post, 1)
            curves[label] = validity.construction_growth(
                kind, (5, 10, 20, 40), cfg, layout)
        _write_classification_artifacts(reports, outdir, growth_curves=curves)
    return text


def _cmd_reproduce(args) -> int:
    outdir = Path(args.output) if args.output else None
    if args.table == 1:
        text = _reproduce_table1(outdir)
    elif args.table == 3:
        text = _reproduce_table3(outdir)
    elif args.table == 4:
        text = _reproduce_table4(outdir)
    elif args.table == 5:
        text = _reproduce_table5(args, outdir)
    else:
        raise CliError("--table must be one of 1, 3, 4, 5")
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convlab",
                     description="Differentially private ad conversion "
                                 "measurement and its validity lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, events=True):
        p.add_argument("--config", help="JSON file with defaults for any flag")
        p.add_argument("--output", help="output file (or directory for reports)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers (CONVLAB_JOBS overrides)")
        if events:
            p.add_argument("--events", help="JSON-lines event log")

    def add_configuration(p):
        p.add_argument("--rule", help="LTA, FTA, UNI, EXP, U-S, POS, IPA")
        p.add_argument("--half-life", type=float, help="EXP half-life")
        p.add_argument("--relation",
                       help="impression, conversion, user, user_publisher, "
                            "user_advertiser, user_publisher_advertiser")
        p.add_argument("--enforcement",
                       help="none, pre, post, event_admission (default post)")
        p.add_argument("--bound", type=int, help="contribution bound r (default 1)")

    p = sub.add_parser("attribute", help="emit the attributed dataset")
    add_common(p)
    add_configuration(p)
    p.set_defaults(func=_cmd_attribute)

    p = sub.add_parser("measure", help="emit a noisy measurement vector")
    add_common(p)
    add_configuration(p)
    p.add_argument("--query", help="query JSON (inline or a file path)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--c0", type=float,
                   help="noise constant; defaults to the classification's value")
    p.add_argument("--unsafe-allow-invalid", action="store_true",
                   help="measure anyway when the configuration is refused")
    p.set_defaults(func=_cmd_measure)

    p = sub.add_parser("sensitivity", help="brute-force empirical sensitivity")
    add_common(p)
    add_configuration(p)
    p.add_argument("--pool", help="JSON-lines addition pool with a 'unit' field")
    p.set_defaults(func=_cmd_sensitivity)

    p = sub.add_parser("classify", help="validity matrix over all configurations")
    add_common(p, events=False)
    p.add_argument("--trials", type=int, default=100,
                   help="random trials per cell (default 100)")
    p.add_argument("--full", action="store_true", help="run 1000 trials per cell")
    p.add_argument("--p-ceiling", type=int, default=validity.P_CEILING)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("reproduce", help="render a built-in reference table")
    add_common(p, events=False)
    p.add_argument("--table", type=int, required=True, choices=(1, 3, 4, 5))
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--full", action="store_true")
    p.add_argument("--p-ceiling", type=int, default=validity.P_CEILING)
    p.set_defaults(func=_cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"convlab: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS as exc:
        print(f"convlab: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
