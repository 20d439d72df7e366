"""Static SVG line charts of the per step metrics, one series per method."""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, List, Sequence

import matplotlib as mpl

mpl.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from rsu_cloud_crm.harness import MetricsRow  # noqa: E402

log = logging.getLogger(__name__)

CHART_METRICS = (
    "vm_migrations_added",
    "control_plane_ops",
    "host_count",
    "total_infrastructure_delay",
)

LABELS = {
    "vm_migrations_added": "VM migrations",
    "vm_migrations_eq1_literal": "VM tear downs",
    "control_plane_ops": "control plane operations",
    "host_count": "service hosts",
    "total_infrastructure_delay": "total infrastructure delay (s)",
    "mean_unit_delay": "mean unit delay (s)",
    "max_edge_utilization": "max edge utilization",
}

# fixed ids and no date so identical rows give identical files
SVG_RC = {"svg.hashsalt": "rsu-cloud-crm", "svg.fonttype": "none"}


def _series(rows: Iterable[MetricsRow], metric: str):
    """Mean of `metric` per (method, step) over the seeds, feasible rows only."""
    sums = defaultdict(lambda: defaultdict(list))
    for row in rows:
        if row.feasible:
            sums[row.method][row.step].append(getattr(row, metric))
    return {
        method: sorted((step, sum(v) / len(v)) for step, v in steps.items())
        for method, steps in sums.items()
    }


def emit_charts(
    rows: Sequence[MetricsRow], out_dir, metrics: Sequence[str] = CHART_METRICS
) -> List[Path]:
    """Write `metric_<name>.svg` for each of `metrics` into `out_dir`."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    with mpl.rc_context(SVG_RC):
        for metric in metrics:
            fig, ax = plt.subplots(figsize=(6, 3.5))
            for method, points in _series(rows, metric).items():
                steps = [step + 1 for step, _ in points]
                values = [value for _, value in points]
                ax.plot(steps, values, marker="o", label=method)
            ax.set_xlabel("time step")
            ax.set_ylabel(LABELS.get(metric, metric))
            ax.grid(True, alpha=0.3)
            if ax.get_legend_handles_labels()[0]:
                ax.legend()
            path = out_dir / f"metric_{metric}.svg"
            fig.savefig(
                path, format="svg", bbox_inches="tight", metadata={"Date": None}
            )
            plt.close(fig)
            log.debug(f"Chart written to {path}")
            written.append(path)
    return written
