"""Aligned plain-text tables for metric reports.

Layouts follow the usual results-table shape: one header row (two for the
function-call table, whose tool-selection columns sit under a group label),
values as percentages with two decimals unless noted.
"""

from __future__ import annotations


def _pct(x: float) -> str:
    return f"{100 * x:.2f}"


def render_table(headers: list[str], rows: list[list[str]], group: list[tuple[str, int]] | None = None) -> str:
    cols = list(zip(headers, *rows)) if rows else [(h,) for h in headers]
    widths = [max(len(str(c)) for c in col) for col in cols]
    lines = []
    if group:
        cells, i = [], 0
        for label, span in group:
            w = sum(widths[i:i + span]) + 2 * (span - 1)
            cells.append(label.center(w))
            i += span
        lines.append("  ".join(cells).rstrip())
    fmt = lambda r: "  ".join(str(c).rjust(w) if k else str(c).ljust(w) for k, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    lines.append(fmt(headers).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    lines.extend(fmt(r).rstrip() for r in rows)
    return "\n".join(lines) + "\n"


def fc_table(report: dict, label: str = "model") -> str:
    s = report["selection"]
    return render_table(
        ["Model", "ACC", "F1", "Precision", "Recall", "ACC", "ACC", "ACC"],
        [[label, _pct(s["acc"]), _pct(s["f1"]), _pct(s["precision"]), _pct(s["recall"]),
          _pct(report["param_acc"]), _pct(report["response_acc"]), _pct(report["overall_acc"])]],
        group=[("", 1), ("Tool Selection", 4), ("Param", 1), ("Response", 1), ("Overall", 1)],
    )


def rejection_table(report: dict, label: str = "model") -> str:
    # this table reports fractions, not percentages
    return render_table(
        ["", "Precision", "Recall", "F1 Score"],
        [[label, f"{report['precision']:.2f}", f"{report['recall']:.2f}", f"{report['f1']:.2f}"]],
    )


def qa_table(report: dict, label: str = "model") -> str:
    return render_table(["Model", "Presence"], [[label, _pct(report["presence_rate"])]])


def wer_table(report: dict, label: str = "model") -> str:
    key = "cer" if "cer" in report else "wer"
    return render_table(
        ["Model", key.upper(), "Sub", "Ins", "Del", "RefLen"],
        [[label, _pct(report[key]), str(report["substitutions"]), str(report["insertions"]),
          str(report["deletions"]), str(report["ref_len"])]],
    )


def emotion_table(report: dict, label: str = "model") -> str:
    labels = list(report["per_label"])
    return render_table(
        ["Model", *[l.capitalize() for l in labels], "Overall"],
        [[label, *[_pct(report["per_label"][l]) for l in labels], _pct(report["overall"])]],
    )


def winrate_table(report: dict, label: str = "model") -> str:
    return render_table(["Model", "Win rate"], [[label, _pct(report["win_rate"])]])


def latency_table(report: dict, label: str = "model") -> str:
    return render_table(
        ["", "Total", "First Chunk", "Per-Step", "Network"],
        [[label, f"{report['total_s']:.4f}", f"{report['first_chunk_s']:.4f}",
          f"{report['per_step_s']:.4f}", f"{report['derived_network_s']:.4f}"]],
    )
