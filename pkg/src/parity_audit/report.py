"""Serialization and rendering of audit and experiment results.

Renderers take the plain JSON documents produced by ``to_json`` so that saved
results can be re-rendered without recomputation.
"""

from __future__ import annotations

import csv
import json
import math
from html import escape
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .experiments import feature_mode_label, sign_marker

# ------------------------------------------------------------------------ csv


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records(path: str | Path, records: Sequence[Mapping], columns: Sequence[str] | None = None) -> None:
    """Write records as CSV; floats use ``repr`` so they parse back bit-exact."""
    if columns is None:
        columns = []
        for r in records:
            columns.extend(k for k in r if k not in columns)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in records:
            w.writerow([_cell(r.get(c)) for c in columns])


def _parse(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_records(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ------------------------------------------------------------------ markdown


def fmt4(v) -> str:
    if v is None:
        return "undefined"
    if isinstance(v, float):
        if v != 0 and abs(v) < 1e-3:
            return f"{v:.2E}"
        return f"{v:.4f}"
    return str(v)


def md_table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for r in rows:
        lines.append("| " + " | ".join(fmt4(v) if not isinstance(v, str) else v for v in r) + " |")
    return "\n".join(lines)


def config_block(config: Mapping) -> str:
    return "```json\n" + json.dumps(config, indent=2, sort_keys=True) + "\n```"


# --------------------------------------------------------------------- audit


def boundary_records(table: Mapping) -> list[dict]:
    out = []
    for r in table["rows"]:
        for m in table["metrics"]:
            rec = {"candidate": r["candidate"], "threshold": r["threshold"], "metric": m, "overall": r["overall"][m]}
            for g, mv in r["groups"].items():
                rec[f"group:{g}"] = mv[m]
            rec["variance"] = r["variance"][m]
            rec["variance_with_overall"] = r["variance_with_overall"][m]
            out.append(rec)
    return out


def render_audit_md(choice_doc: Mapping, parity_doc: Mapping) -> str:
    table = choice_doc["boundary"]
    choice = choice_doc["choice"]
    verdict = parity_doc["verdict"]
    metrics = table["metrics"]
    parts = [f"# Parity audit: `{table['feature']}`", ""]
    status = "PASS" if verdict["passed"] else "FAIL"
    parts.append(
        f"Classification parity on **{verdict['metric']}** at ξ = {verdict['xi']:g}: **{status}** "
        f"(evaluated at the overall Youden threshold {fmt4(parity_doc['threshold'])})."
    )
    parts.append("")
    header = ["group", "n", *metrics_all()]
    rows = [["overall", parity_doc["sizes"].get("overall", ""), *(parity_doc["overall"][m] for m in metrics_all())]]
    for g, mv in parity_doc["groups"].items():
        rows.append([g, parity_doc["sizes"].get(g, ""), *(mv[m] for m in metrics_all())])
    parts += ["## Metrics per group", "", md_table([str(h) for h in header], rows), ""]
    if verdict["pairs"]:
        parts += [
            "## Pairwise differences",
            "",
            md_table(
                ["group a", "group b", "|difference|", "pass"],
                [[p["group_a"], p["group_b"], p["difference"], "yes" if p["passed"] else "no"] for p in verdict["pairs"]],
            ),
            "",
        ]
    if verdict["flags"]:
        parts += [f"Flags: {', '.join(verdict['flags'])}", ""]
    parts += ["## Performance boundary", ""]
    groups = list(table["rows"][0]["groups"]) if table["rows"] else []
    for m in metrics:
        parts.append(f"### {m}")
        parts.append("")
        rows = []
        for r in table["rows"]:
            rows.append(
                [
                    r["candidate"],
                    r["threshold"],
                    r["overall"][m],
                    *(r["groups"][g][m] for g in groups),
                    r["variance"][m],
                    r["variance_with_overall"][m],
                ]
            )
        parts += [md_table(["candidate", "threshold", "overall", *groups, "variance", "variance (incl. overall)"], rows), ""]
    parts += [
        "## Fairness threshold",
        "",
        f"Selected candidate **{choice['candidate']}** (threshold {fmt4(choice['threshold'])}) minimizes the "
        f"{choice['metric']} variance ({fmt4(choice['variance'])}, mode `{choice['mode']}`).",
        "",
    ]
    other = choice_doc.get("choice_other_mode")
    if other:
        parts += [
            f"Under mode `{other['mode']}` the selection is **{other['candidate']}** "
            f"(variance {fmt4(other['variance'])}).",
            "",
        ]
    parts += ["## Configuration", "", config_block(choice_doc["config"]), ""]
    return "\n".join(parts)


def metrics_all() -> tuple[str, ...]:
    return ("auc", "precision", "recall", "f1", "brier", "specificity")


# ---------------------------------------------------------------------- grid


def grid_records(grid: Mapping) -> list[dict]:
    """One record per cell x metric, in the layout of an ablation results table."""
    deltas = {d["comparison"]: d for d in grid["deltas"]}
    out = []
    for key, cell in grid["cells"].items():
        spec = cell["spec"]
        d = deltas.get(key)
        for m in ("auc", "precision", "recall", "f1", "brier"):
            rec = {
                "algorithm": spec["algorithm"],
                "metric": m,
                "sigma": spec["sampling"],
                "F": feature_mode_label(spec["feature_mode"]),
                "threshold": cell["threshold"],
                "overall_delta": None if d is None else d["metrics"][m]["overall"],
                "overall": cell["overall"][m],
            }
            for g, mv in cell["groups"].items():
                rec[f"delta:{g}"] = None if d is None else d["metrics"][m]["groups"][g]
                rec[f"group:{g}"] = mv[m]
            rec["variance_change"] = None if d is None else d["metrics"][m]["variance_change"]
            rec["variance"] = cell["variance"][m]
            rec["markers"] = "" if d is None else _markers(d["metrics"][m])
            out.append(rec)
    return out


def _markers(md: Mapping) -> str:
    return f"overall{md['overall_marker'] or '='} variance{md['variance_marker'] or '='}"


def render_grid_md(grid: Mapping) -> str:
    parts = [f"# Ablation grid: protected feature `{grid['protected']}`", ""]
    prox = grid.get("proxies")
    if prox is not None:
        names = ", ".join(f"`{p}`" for p in prox["proxies"]) or "none"
        parts += [f"Proxy features (top-{prox['k']} by importance, association ≥ {prox['tau']:g}): {names}", ""]
    cells = list(grid["cells"].values())
    groups = list(cells[0]["groups"]) if cells else []
    deltas = {d["comparison"]: d for d in grid["deltas"]}
    for algo in dict.fromkeys(c["spec"]["algorithm"] for c in cells):
        parts += [f"## {algo}", ""]
        header = ["metric", "σ", "F", "Δ overall", "overall"]
        for g in groups:
            header += [f"Δ {g}", g]
        header += ["variance change", "variance", "threshold"]
        rows = []
        for m in ("auc", "precision", "recall", "f1", "brier"):
            for key, c in grid["cells"].items():
                if c["spec"]["algorithm"] != algo:
                    continue
                d = deltas.get(key)
                dm = None if d is None else d["metrics"][m]
                row = [m, str(c["spec"]["sampling"]), feature_mode_label(c["spec"]["feature_mode"])]
                row += [_signed(None if dm is None else dm["overall"]), c["overall"][m]]
                for g in groups:
                    row += [_signed(None if dm is None else dm["groups"][g]), c["groups"][g][m]]
                row += [_signed(None if dm is None else dm["variance_change"]), c["variance"][m], c["threshold"]]
                rows.append(row)
        parts += [md_table(header, rows), ""]
    parts += [
        "Deltas are comparison minus the F=1 cell of the same σ; variance change is relative, "
        "(var − var_F1) / var_F1. `+`/`−` mark increases/decreases.",
        "",
        "## Configuration",
        "",
        config_block(grid["config"]),
        "",
    ]
    return "\n".join(parts)


def _signed(v) -> str:
    if v is None:
        return "–"
    mark = sign_marker(v)
    return f"{mark}{abs(v):.4f}" if mark else f"{v:.4f}"


# ------------------------------------------------------------------- compare


def compare_records(cmp: Mapping) -> list[dict]:
    out = []
    for row in cmp["rows"]:
        rec = {"configuration": row}
        for a in cmp["algorithms"]:
            rec[f"auc:{a}"] = cmp["auc"][row][a]
        for a in cmp["algorithms"]:
            rec[f"variance:{a}"] = cmp["variance"][row][a]
        out.append(rec)
    return out


def render_compare_md(cmp: Mapping, config: Mapping | None = None) -> str:
    algos = cmp["algorithms"]
    parts = [f"# Method comparison: protected feature `{cmp['protected']}`", ""]
    rows = [[r, *(cmp["auc"][r][a] for a in algos), *(cmp["variance"][r][a] for a in algos)] for r in cmp["rows"]]
    parts += [md_table(["", *(f"AUC {a}" for a in algos), *(f"AUC variance {a}" for a in algos)], rows), ""]
    parts += ["## Rankings (ascending)", ""]
    rank_rows = [
        [r, " < ".join(cmp["rank_by_auc"][r]), " < ".join(cmp["rank_by_variance"][r])] for r in cmp["rank_by_auc"]
    ]
    parts += [md_table(["configuration", "by AUC", "by AUC variance"], rank_rows), ""]
    parts += [
        "The two rankings are computed independently; agreement between them is not implied.",
        "",
    ]
    if config:
        parts += ["## Configuration", "", config_block(config), ""]
    return "\n".join(parts)


# ----------------------------------------------------------------------- svg

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def boundary_svg(table: Mapping, choice: Mapping | None = None) -> str:
    """Self-contained SVG: one panel per metric, candidates on x, one point series
    for the overall data and one per group. The selected candidate is boxed."""
    rows = table["rows"]
    metrics = table["metrics"]
    groups = list(rows[0]["groups"]) if rows else []
    series = ["overall", *groups]
    pw, ph, ml, mt, mb = 520, 260, 60, 30, 70
    width = ml + pw + 150
    height = len(metrics) * (ph + mt + mb) + 10
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    n = max(len(rows), 1)
    for pi, m in enumerate(metrics):
        top = pi * (ph + mt + mb) + mt
        vals = [v for r in rows for v in [r["overall"][m], *(r["groups"][g][m] for g in groups)] if v is not None]
        lo, hi = (min(vals), max(vals)) if vals else (0.0, 1.0)
        if math.isclose(lo, hi):
            lo, hi = lo - 0.05, hi + 0.05
        pad = (hi - lo) * 0.08
        lo, hi = lo - pad, hi + pad

        def y(v):
            return top + ph - (v - lo) / (hi - lo) * ph

        def x(i):
            return ml + (i + 0.5) * pw / n

        out.append(f'<g class="panel" data-metric="{escape(m)}">')
        out.append(f'<text x="{ml}" y="{top - 10}" font-size="13" font-weight="bold">{escape(m)}</text>')
        out.append(f'<rect x="{ml}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
        for k in range(5):
            v = lo + (hi - lo) * k / 4
            out.append(f'<line x1="{ml - 4}" y1="{y(v):.2f}" x2="{ml}" y2="{y(v):.2f}" stroke="#444"/>')
            out.append(f'<text x="{ml - 6}" y="{y(v) + 4:.2f}" text-anchor="end">{v:.3f}</text>')
        for i, r in enumerate(rows):
            label = escape(r["candidate"])
            out.append(
                f'<text x="{x(i):.2f}" y="{top + ph + 14}" text-anchor="end" '
                f'transform="rotate(-35 {x(i):.2f} {top + ph + 14})">{label}</text>'
            )
            if choice is not None and r["candidate"] == choice.get("candidate") and m == choice.get("metric"):
                out.append(
                    f'<rect class="selected" x="{x(i) - pw / n / 2 + 3:.2f}" y="{top + 2}" '
                    f'width="{pw / n - 6:.2f}" height="{ph - 4}" fill="none" stroke="orange" stroke-width="2"/>'
                )
        for si, s in enumerate(series):
            color = _PALETTE[si % len(_PALETTE)]
            out.append(f'<g class="series" data-series="{escape(s)}" fill="{color}">')
            for i, r in enumerate(rows):
                v = r["overall"][m] if s == "overall" else r["groups"][s][m]
                if v is None:
                    continue
                out.append(f'<circle cx="{x(i):.2f}" cy="{y(v):.2f}" r="4"><title>{escape(s)}: {v:.4f}</title></circle>')
            out.append("</g>")
        for si, s in enumerate(series):
            color = _PALETTE[si % len(_PALETTE)]
            ly = top + 12 + si * 16
            out.append(f'<circle cx="{ml + pw + 16}" cy="{ly}" r="4" fill="{color}"/>')
            out.append(f'<text x="{ml + pw + 26}" y="{ly + 4}">{escape(s)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
