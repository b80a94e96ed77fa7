"""Report figures. Everything renders off-screen to a file."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _bars(ax, names, values, ylabel, ylim=(0, 1.05)):
    bars = ax.bar(names, values, color="#4c72b0", width=0.6)
    for b, v in zip(bars, values):
        ax.annotate(f"{v:.2f}", (b.get_x() + b.get_width() / 2, v), ha="center", va="bottom", fontsize=8)
    ax.set_ylabel(ylabel)
    if ylim:
        ax.set_ylim(*ylim)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_fc(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        s = report["selection"]
        _bars(ax, ["sel acc", "sel F1", "sel P", "sel R", "param", "response", "overall"],
              [s["acc"], s["f1"], s["precision"], s["recall"], report["param_acc"],
               report["response_acc"], report["overall_acc"]], "accuracy")
        ax.set_title("Function call")
        return _save(fig, path)


def plot_rejection(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(6, 2.8))
        _bars(ax1, ["precision", "recall", "F1"], [report["precision"], report["recall"], report["f1"]], "score")
        m = [[report["tp"], report["fn"]], [report["fp"], report["tn"]]]
        ax2.imshow(m, cmap="Blues")
        for i in range(2):
            for j in range(2):
                ax2.text(j, i, str(m[i][j]), ha="center", va="center")
        ax2.set_xticks([0, 1], ["respond", "reject"])
        ax2.set_yticks([0, 1], ["should respond", "should reject"])
        ax2.set_xlabel("predicted")
        ax1.set_title("Rejection")
        return _save(fig, path)


def plot_qa(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3, 3))
        _bars(ax, ["presence"], [report["presence_rate"]], "rate")
        return _save(fig, path)


def plot_wer(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        vals = [report["substitutions"], report["insertions"], report["deletions"]]
        _bars(ax, ["sub", "ins", "del"], vals, "edits", ylim=None)
        key = "cer" if "cer" in report else "wer"
        ax.set_title(f"{key.upper()} = {report[key]:.3f}")
        return _save(fig, path)


def plot_emotion(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        labels = list(report["per_label"])
        _bars(ax, labels, [report["per_label"][l] for l in labels], "accuracy")
        ax.axhline(report["overall"], color="#c44e52", lw=1, ls="--", label="overall")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_winrate(report: dict, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 1.8))
        c = report["counts"]
        left = 0
        for key, color in (("candidate", "#55a868"), ("tie", "#cccccc"), ("baseline", "#c44e52")):
            ax.barh([0], [c.get(key, 0)], left=left, color=color, label=key)
            left += c.get(key, 0)
        ax.set_yticks([])
        ax.set_title(f"win rate {report['win_rate']:.3f}")
        ax.legend(frameon=False, ncol=3, loc="upper center", bbox_to_anchor=(0.5, -0.25))
        return _save(fig, path)


def plot_latency(report: dict, path) -> Path:
    """Total latency split into first-chunk compute and network."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 2.2))
        ax.barh([0], [report["first_chunk_s"]], color="#4c72b0", label="first chunk")
        ax.barh([0], [report["derived_network_s"]], left=[report["first_chunk_s"]], color="#dd8452",
                label="network")
        ax.set_yticks([])
        ax.set_xlabel("seconds")
        ax.set_title(f"total {report['total_s']:.4f}s, per-step {report['per_step_s']:.4f}s", loc="left")
        ax.legend(frameon=False, ncol=2, loc="lower right", bbox_to_anchor=(1.0, 1.12))
        return _save(fig, path)
