"""Report rendering: aligned text tables, delimited files, and figures.

Everything here is presentation only.  Figures are written as PNG via the
Agg backend so report generation works headless; numbers in text tables are
fixed to four decimals while JSON/CSV artifacts keep full precision.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bounding import Enforcement, Relation
from .validity import ValidityReport

RELATION_LABELS = {
    Relation.IMPRESSION: "impression",
    Relation.CONVERSION: "conversion",
    Relation.USER: "user",
    Relation.USER_PUBLISHER: "user x publisher",
    Relation.USER_ADVERTISER: "user x advertiser",
    Relation.USER_PUBLISHER_ADVERTISER: "user x pub x adv",
}

_VALID_COLOR = (0.78, 0.91, 0.78)
_INVALID_COLOR = (0.95, 0.70, 0.70)


def format_table(headers: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    """Left-aligned fixed-width text table with a dashed header rule."""
    materialized = [list(map(str, row)) for row in rows]
    widths = [len(h) for h in headers]
    for row in materialized:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = [line(headers), line(["-" * w for w in widths])]
    out.extend(line(row) for row in materialized)
    return "\n".join(out)


def write_csv(path: Path, headers: Sequence[str],
              rows: Iterable[Sequence[object]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save(fig, path: Path) -> None:
    # Strip the Software tag so identical inputs give byte-identical PNGs.
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def credit_split_figure(rows: dict[str, Sequence[float]], path: Path) -> None:
    """Grouped bars: credit per impression position for each rule."""
    rules = list(rows)
    positions = len(next(iter(rows.values())))
    width = 0.8 / len(rules)
    fig, ax = plt.subplots(figsize=(7, 4))
    for index, rule in enumerate(rules):
        offsets = [k + index * width for k in range(positions)]
        ax.bar(offsets, rows[rule], width=width, label=rule)
    ax.set_xticks([k + 0.4 - width / 2 for k in range(positions)])
    ax.set_xticklabels([f"impression {k + 1}" for k in range(positions)])
    ax.set_ylabel("credit share")
    ax.set_title("Credit split across the impression path")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def classification_figure(reports: Sequence[ValidityReport], path: Path) -> None:
    """Matrix of verdicts: rows are (relation, enforcement), columns rules."""
    rules = list(dict.fromkeys(r.rule for r in reports))
    row_keys: list[tuple[Relation, Enforcement]] = []
    for enforcement in (Enforcement.POST_ATTRIBUTION, Enforcement.PRE_ATTRIBUTION,
                        Enforcement.NONE):
        for report in reports:
            if report.enforcement == enforcement and \
                    (report.relation, enforcement) not in row_keys:
                row_keys.append((report.relation, enforcement))
    lookup = {(r.rule, r.relation, r.enforcement): r for r in reports}
    fig, ax = plt.subplots(
        figsize=(1.6 * len(rules) + 3, 0.5 * len(row_keys) + 2))
    ax.set_xlim(0, len(rules))
    ax.set_ylim(0, len(row_keys))
    for y, (relation, enforcement) in enumerate(row_keys):
        for x, rule in enumerate(rules):
            report = lookup.get((rule, relation, enforcement))
            if report is None:
                continue
            color = _VALID_COLOR if report.valid else _INVALID_COLOR
            ax.add_patch(plt.Rectangle((x, len(row_keys) - 1 - y), 1, 1,
                                       facecolor=color, edgecolor="white"))
            text = (f"C0={report.c0_claimed:g}" if report.valid else "invalid")
            ax.text(x + 0.5, len(row_keys) - 0.5 - y, text,
                    ha="center", va="center", fontsize=8)
    ax.set_xticks([x + 0.5 for x in range(len(rules))])
    ax.set_xticklabels(rules, fontsize=8)
    short_enf = {Enforcement.POST_ATTRIBUTION: "post",
                 Enforcement.PRE_ATTRIBUTION: "pre",
                 Enforcement.NONE: "none"}
    ax.set_yticks([len(row_keys) - 0.5 - y for y in range(len(row_keys))])
    ax.set_yticklabels(
        [f"{RELATION_LABELS[rel]} / {short_enf[enf]}" for rel, enf in row_keys],
        fontsize=8)
    ax.tick_params(length=0)
    for spine in ax.spines.values():
        spine.set_visible(False)
    ax.set_title("Configuration validity (observed)")
    fig.tight_layout()
    _save(fig, path)


def growth_figure(curves: dict[str, Sequence[tuple[int, float]]],
                  path: Path) -> None:
    """Witness distance against the construction scale parameter."""
    fig, ax = plt.subplots(figsize=(6.5, 4))
    for name, points in curves.items():
        ps = [p for p, _ in points]
        dists = [d for _, d in points]
        ax.plot(ps, dists, marker="o", label=name)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("scale parameter p")
    ax.set_ylabel("attributed-dataset l1 shift")
    ax.set_title("Witness growth for invalid configurations")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def classification_rows(reports: Sequence[ValidityReport]) -> list[list[object]]:
    """Flat rows (rule, relation, enforcement, verdict, c0, max_ratio, trials)."""
    rows = []
    for report in reports:
        rows.append([
            report.rule, report.relation.value, report.enforcement.value,
            report.verdict,
            "" if report.c0_claimed is None else report.c0_claimed,
            round(report.max_ratio, 6), report.trials,
            report.witness.source if report.witness else "",
        ])
    return rows


def report_to_dict(report: ValidityReport, witness_path: str | None = None) -> dict:
    payload = {
        "rule": report.rule,
        "relation": report.relation.value,
        "enforcement": report.enforcement.value,
        "r": report.r,
        "c0_tested": report.c0_tested,
        "c0_claimed": report.c0_claimed,
        "verdict": report.verdict,
        "max_ratio": report.max_ratio,
        "trials": report.trials,
    }
    if report.witness is not None:
        payload["witness"] = {"source": report.witness.source,
                              "distance": report.witness.distance}
        if witness_path is not None:
            payload["witness"]["files"] = witness_path
    return payload
