"""Training-run reports: loss-curve figures plus a delimited summary table.

Reads the line-delimited loss log written by `fit` and renders PNG figures
next to a TSV summary, so a run can be inspected without a notebook. The
summary repeats the two convergence diagnostics used on tiny runs: the
trailing-window mean and the least-squares slope per field.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import InvalidConfig
from .losses import REPORT_FIELDS, LossReport

SUMMARY_HEADER = "# field\tfirst\tlast\tmin\tmax\tmean\ttrailing_mean\tslope"
COMPONENT_FIELDS = ("adv_g", "diversity", "style_rec", "cycle", "makeup", "guide")


def load_loss_log(path) -> list[LossReport]:
    """Parse a loss log; header and blank lines are skipped."""
    reports = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        reports.append(LossReport.from_line(line))
    if not reports:
        raise InvalidConfig(f"no loss records in {path}")
    return reports


def _columns(reports: list[LossReport]) -> dict:
    return {name: np.array([getattr(r, name) for r in reports], dtype=np.float64)
            for name in REPORT_FIELDS}


def _slope(values: np.ndarray) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.polyfit(np.arange(len(values)), values, 1)[0])


def summarize(reports: list[LossReport], trailing: int = 50) -> list[str]:
    """One TSV row per loss field, header first."""
    cols = _columns(reports)
    lines = [SUMMARY_HEADER]
    for name in REPORT_FIELDS:
        if name == "step":
            continue
        v = cols[name]
        tail = v[-trailing:]
        lines.append("\t".join([
            name,
            f"{v[0]:.10e}", f"{v[-1]:.10e}",
            f"{v.min():.10e}", f"{v.max():.10e}", f"{v.mean():.10e}",
            f"{tail.mean():.10e}", f"{_slope(v):.10e}",
        ]))
    return lines


def _plot_totals(cols: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(cols["step"], cols["total_g"], label="total G")
    ax.plot(cols["step"], cols["total_d"], label="total D")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("generator / discriminator totals")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _plot_components(cols: dict, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for name in COMPONENT_FIELDS:
        ax.plot(cols["step"], cols[name], label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_title("generator loss components")
    ax.legend(ncol=3, fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(log_path, out_dir, *, trailing: int = 50) -> dict:
    """Render figures and the summary; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = load_loss_log(log_path)
    cols = _columns(reports)

    totals_png = out_dir / "loss_totals.png"
    components_png = out_dir / "loss_components.png"
    summary_tsv = out_dir / "summary.tsv"
    _plot_totals(cols, totals_png)
    _plot_components(cols, components_png)
    summary_tsv.write_text("\n".join(summarize(reports, trailing)) + "\n")
    return {"figures": [totals_png, components_png], "summary": summary_tsv}
