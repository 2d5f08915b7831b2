"""Summaries over a results CSV: overall and per-field accuracy rankings."""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError
from .trial import CSV_COLUMNS, read_results

__all__ = ["report", "group_rows"]

_GROUPABLE = [c for c in CSV_COLUMNS
              if c not in ("config_hash", "train_loss_per_epoch",
                           "eval_loss_per_epoch", "eval_acc_per_epoch",
                           "max_eval_acc", "official_test_acc", "seconds")]


def _sort_key(value: str):
    try:
        return (0, float(value), "")
    except ValueError:
        return (1, 0.0, value)


def group_rows(rows: list[dict[str, str]], field: str) -> dict[str, list[dict[str, str]]]:
    """Bucket rows by a config column, sorted numerically when possible."""
    f = field.strip().lower()
    if f not in _GROUPABLE:
        raise ConfigError(f"cannot group by {field!r}; choose one of {_GROUPABLE}")
    groups: dict[str, list[dict[str, str]]] = {}
    for row in rows:
        groups.setdefault(row[f], []).append(row)
    return {k: groups[k] for k in sorted(groups, key=_sort_key)}


def _accs(rows: list[dict[str, str]]) -> list[float]:
    return [float(r["max_eval_acc"]) for r in rows if r["max_eval_acc"]]


def _stats_line(label: str, rows: list[dict[str, str]]) -> str:
    accs = _accs(rows)
    failed = len(rows) - len(accs)
    if not accs:
        return f"{label}: {len(rows)} trials, no finished trials ({failed} failed)"
    line = (f"{label}: {len(rows)} trials, max_eval_acc max={max(accs):.4f} "
            f"mean={sum(accs) / len(accs):.4f}")
    if failed:
        line += f" ({failed} failed)"
    return line


def report(csv_path, group_by: list[str] | None = None, plot_dir=None) -> str:
    """Render ranking text; optionally drop x,y data files per group field."""
    rows = read_results(csv_path)
    if not rows:
        return "no trials"
    lines = [_stats_line("all", rows)]
    accs = _accs(rows)
    if accs:
        best = max((r for r in rows if r["max_eval_acc"]),
                   key=lambda r: float(r["max_eval_acc"]))
        lines.append(f"best: {best['config_hash']} ({best['dataset']} {best['model']} "
                     f"{best['activation']}) max_eval_acc={float(best['max_eval_acc']):.4f}")
    for field in group_by or []:
        lines.append("")
        lines.append(f"grouped by {field}:")
        groups = group_rows(rows, field)
        for value, members in groups.items():
            lines.append("  " + _stats_line(f"{field}={value}", members))
        if plot_dir is not None:
            path = _write_plot_data(plot_dir, field, groups)
            lines.append(f"  wrote {path}")
    return "\n".join(lines)


def _write_plot_data(plot_dir, field: str, groups: dict[str, list[dict[str, str]]]) -> Path:
    """One whitespace-separated text file per field: value, max, mean, n."""
    out = Path(plot_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"by_{field.strip().lower()}.dat"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {field} max_eval_acc_max max_eval_acc_mean n\n")
        for value, members in groups.items():
            accs = _accs(members)
            if not accs:
                continue
            fh.write(f"{value} {max(accs):.6f} {sum(accs) / len(accs):.6f} {len(accs)}\n")
    return path
