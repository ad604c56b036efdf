"""Report persistence: JSONL rows, JSON aggregates, aligned tables, CSV, figures.

Rows are appended line-by-line and flushed, so an interrupted run always
leaves a valid JSONL prefix. Aggregates are re-derived from the rows with
an independent summation before anything is written; a mismatch beyond
1e-12 aborts the write instead of publishing numbers that do not add up.
"""
from __future__ import annotations

import csv
import json
import math
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ROWS_FILE = "rows.jsonl"
REPORT_FILE = "report.json"
TABLE_FILE = "table.txt"
CSV_FILE = "rows.csv"
METRICS_FIGURE = "metrics.png"
SWEEP_FILE = "sweep.json"
SWEEP_TABLE_FILE = "sweep_table.txt"
SWEEP_FIGURE = "sweep.png"

AGGREGATE_TOLERANCE = 1e-12

DEFAULT_FORMATS = ("table", "csv", "figures")


class ReportError(Exception):
    pass


@dataclass
class ScoreReport:
    """Per-record rows plus the aggregate block and run provenance."""

    rows: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)


class RowWriter:
    """Appends one JSON object per line, flushing after each row."""

    def __init__(self, path: str):
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")

    def append(self, row: Mapping) -> None:
        self._fh.write(json.dumps(row, sort_keys=True) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RowWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def recompute_means(rows: Sequence[Mapping]) -> dict[str, float]:
    """Metric means re-derived from rows with math.fsum (the verification route)."""
    sums: dict[str, list[float]] = {}
    for row in rows:
        for name, value in row.get("scores", {}).items():
            sums.setdefault(name, []).append(float(value))
    return {name: math.fsum(values) / len(values) for name, values in sums.items()}


def verify_aggregates(rows: Sequence[Mapping], aggregates: Mapping) -> None:
    """Raise unless every aggregate mean matches the rows within 1e-12."""
    recomputed = recompute_means(rows)
    reported = aggregates.get("metrics", {})
    for name, value in reported.items():
        if name not in recomputed:
            raise ReportError(f"aggregate {name!r} has no supporting rows")
        if abs(recomputed[name] - value) > AGGREGATE_TOLERANCE:
            raise ReportError(
                f"aggregate {name!r} = {value} but rows recompute to {recomputed[name]}"
            )


def render_table(aggregates: Mapping, provenance: Mapping | None = None) -> str:
    """Human-readable aligned table; not-applicable metrics print as --."""
    lines = []
    if provenance:
        lines.append(f"method: {provenance.get('method', '?')}")
        lines.append(f"config_hash: {provenance.get('config_hash', '?')}")
        lines.append("")
    entries: list[tuple[str, str]] = []
    for name, value in sorted(aggregates.get("metrics", {}).items()):
        entries.append((name, f"{value:.4f}"))
    for name in sorted(aggregates.get("not_applicable", [])):
        entries.append((name, "--"))
    for name, value in sorted(aggregates.get("counts", {}).items()):
        entries.append((name, str(value)))
    for metric, stats in sorted(aggregates.get("judge", {}).items()):
        mean = stats.get("mean")
        entries.append((f"judge:{metric}", "--" if mean is None else f"{mean:.4f}"))
        entries.append((f"judge:{metric}:failure_rate", f"{stats.get('failure_rate', 0.0):.4f}"))
    width = max((len(name) for name, _ in entries), default=0)
    lines.extend(f"{name.ljust(width)}  {value}" for name, value in entries)
    return "\n".join(lines) + "\n"


def write_csv(rows: Sequence[Mapping], path: str) -> None:
    metric_names = sorted({name for row in rows for name in row.get("scores", {})})
    judge_names = sorted({name for row in rows for name in row.get("judge", {})})
    header = ["record_id", "method", "error", "generation", "retrieved_ids"]
    header += metric_names + [f"judge:{n}" for n in judge_names]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            retrieved = row.get("retrieved_ids")
            values = [
                row.get("record_id", ""),
                row.get("method", ""),
                row.get("error") or "",
                row.get("generation") or "",
                "|".join(retrieved) if retrieved else "",
            ]
            values += [row.get("scores", {}).get(name, "") for name in metric_names]
            for name in judge_names:
                verdict = row.get("judge", {}).get(name)
                values.append("" if verdict is None or verdict.get("score") is None else verdict["score"])
            writer.writerow(values)


def metrics_figure(aggregates: Mapping, path: str, title: str = "") -> None:
    """Horizontal bar chart of aggregate metric means."""
    metrics = sorted(aggregates.get("metrics", {}).items())
    names = [name for name, _ in metrics]
    values = [value for _, value in metrics]
    fig, ax = plt.subplots(figsize=(7, max(2.0, 0.45 * len(names) + 1.0)))
    ax.barh(range(len(names)), values, color="#4878cf")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names)
    ax.invert_yaxis()
    ax.set_xlim(0.0, 1.05)
    ax.set_xlabel("mean score")
    if title:
        ax.set_title(title)
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(sweep: Mapping, path: str) -> None:
    """Percentage change vs ratio, one line per metric, zero line marked."""
    entries = sweep.get("entries", [])
    ratios = [entry["ratio"] for entry in entries]
    metric_names = sorted({name for entry in entries for name in entry.get("deltas_pct", {})})
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for name in metric_names:
        deltas = [entry["deltas_pct"].get(name) for entry in entries]
        xs = [r for r, d in zip(ratios, deltas) if d is not None]
        ys = [d for d in deltas if d is not None]
        ax.plot(xs, ys, marker="o", label=name)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xlabel("reranker ratio")
    ax.set_ylabel("change vs base (%)")
    ax.set_xticks(ratios)
    ax.grid(alpha=0.3)
    if metric_names:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep_table(sweep: Mapping) -> str:
    entries = sweep.get("entries", [])
    metric_names = sorted({name for entry in entries for name in entry.get("deltas_pct", {})})
    header = ["ratio", "depth"] + metric_names
    rows = [header]
    for entry in entries:
        row = [str(entry["ratio"]), str(entry["requested_depth"])]
        for name in metric_names:
            delta = entry["deltas_pct"].get(name)
            row.append("--" if delta is None else f"{delta:+.2f}%")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
    return "\n".join(lines) + "\n"


def write_report_files(
    report: ScoreReport, out_dir: str, formats: Sequence[str] = DEFAULT_FORMATS
) -> list[str]:
    """Write rows.jsonl, report.json, and the requested extra formats.

    Raises ReportError when there are no rows or when the aggregate block
    does not match the rows.
    """
    if not report.rows:
        raise ReportError("refusing to write a report with no rows")
    verify_aggregates(report.rows, report.aggregates)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    rows_path = os.path.join(out_dir, ROWS_FILE)
    with RowWriter(rows_path) as writer:
        for row in report.rows:
            writer.append(row)
    written.append(rows_path)

    report_path = os.path.join(out_dir, REPORT_FILE)
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(
            {"aggregates": report.aggregates, "provenance": report.provenance},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    written.append(report_path)

    if "table" in formats:
        table_path = os.path.join(out_dir, TABLE_FILE)
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(render_table(report.aggregates, report.provenance))
        written.append(table_path)
    if "csv" in formats:
        csv_path = os.path.join(out_dir, CSV_FILE)
        write_csv(report.rows, csv_path)
        written.append(csv_path)
    if "figures" in formats:
        figure_path = os.path.join(out_dir, METRICS_FIGURE)
        metrics_figure(
            report.aggregates, figure_path, title=report.provenance.get("method", "")
        )
        written.append(figure_path)
    return written


def load_run(out_dir: str) -> ScoreReport:
    """Load a run directory written by write_report_files (or a live run)."""
    rows_path = os.path.join(out_dir, ROWS_FILE)
    report_path = os.path.join(out_dir, REPORT_FILE)
    if not os.path.exists(rows_path) or not os.path.exists(report_path):
        raise ReportError(f"{out_dir} does not contain {ROWS_FILE} and {REPORT_FILE}")
    rows = []
    with open(rows_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    with open(report_path, encoding="utf-8") as fh:
        blob = json.load(fh)
    return ScoreReport(
        rows=rows,
        aggregates=blob.get("aggregates", {}),
        provenance=blob.get("provenance", {}),
    )


def write_sweep_files(sweep: Mapping, out_dir: str, formats: Sequence[str] = DEFAULT_FORMATS) -> list[str]:
    """Write sweep.json plus the aligned table and ratio figure."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    sweep_path = os.path.join(out_dir, SWEEP_FILE)
    with open(sweep_path, "w", encoding="utf-8") as fh:
        json.dump(sweep, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(sweep_path)
    if "table" in formats:
        table_path = os.path.join(out_dir, SWEEP_TABLE_FILE)
        with open(table_path, "w", encoding="utf-8") as fh:
            fh.write(render_sweep_table(sweep))
        written.append(table_path)
    if "figures" in formats:
        figure_path = os.path.join(out_dir, SWEEP_FIGURE)
        sweep_figure(sweep, figure_path)
        written.append(figure_path)
    return written
