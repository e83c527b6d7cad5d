"""SVG figures for a report: flow-time, volume-time and flow-volume."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _render(x, y, xlabel, ylabel, title, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, lw=1.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_report_plots(report, out_dir) -> list:
    """Write the three standard spirometry figures; returns the paths."""
    from pathlib import Path

    out = Path(out_dir)
    vt = report.volume_time
    fv = report.flow_volume
    paths = [out / "flow_time.svg", out / "volume_time.svg",
             out / "flow_volume.svg"]
    _render(vt["times_s"], fv["flow_lps"], "time (s)", "flow (L/s)",
            "Flow rate vs time", paths[0])
    _render(vt["times_s"], vt["volume_l"], "time (s)", "volume (L)",
            "Volume vs time", paths[1])
    _render(fv["volume_l"], fv["flow_lps"], "volume (L)", "flow (L/s)",
            "Flow-volume loop", paths[2])
    return paths
