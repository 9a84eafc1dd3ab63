"""Files written by a run: trace and metrics CSV, manifest, summary charts."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .engine import PHASES, TraceSet
from .network import Scenario, ScenarioError, scenario_from_dict, scenario_to_dict

TRACE_HEADER = "# diupfc-trace v1"
METRICS_HEADER = "# diupfc-metrics v1"
_PER_PHASE = (("v_left", "v_left"), ("v_right", "v_right"), ("i", "i_line"), ("vm", "v_m"), ("vdcm", "v_dc_module"))
_TOTALS = (("p_src", "p_source"), ("q_src", "q_source"), ("p_mod", "p_module"), ("q_mod", "q_module"),
           ("vdc_shared", "v_dc_shared"))


def trace_columns() -> list[str]:
    cols = ["t"]
    for p in PHASES:
        cols += [f"{name}_{p}" for name, _ in _PER_PHASE]
    return cols + [name for name, _ in _TOTALS]


def fmt(x: float) -> str:
    """Nine significant digits."""
    return f"{x:.9g}"


def trace_matrix(tr: TraceSet) -> np.ndarray:
    cols = [tr.t]
    for k in range(3):
        cols += [getattr(tr, attr)[k] for _, attr in _PER_PHASE]
    cols += [getattr(tr, attr) for _, attr in _TOTALS]
    return np.column_stack(cols)


def write_trace_csv(tr: TraceSet, path: str | Path) -> None:
    data = trace_matrix(tr)
    with open(path, "w", newline="") as f:
        f.write(TRACE_HEADER + "\n")
        f.write(",".join(trace_columns()) + "\n")
        for row in data:
            f.write(",".join(fmt(v) for v in row) + "\n")


def read_trace_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    with open(path) as f:
        first = f.readline().rstrip("\n")
        if first != TRACE_HEADER:
            raise ValueError(f"{path}: not a diupfc trace (header {first!r})")
        cols = f.readline().rstrip("\n").split(",")
        data = np.loadtxt(f, delimiter=",", ndmin=2)
    return cols, data


METRIC_COLUMNS = ["t_start", "t_end", "command", "p_avg", "q_avg", "i_rms_a", "i_rms_b", "i_rms_c",
                  "thd_a", "thd_b", "thd_c", "settle_time", "settled"]


def write_metrics_csv(metrics, path: str | Path) -> None:
    with open(path, "w", newline="") as f:
        f.write(METRICS_HEADER + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for m in metrics:
            w.writerow([fmt(m.t_start), fmt(m.t_end), m.command, fmt(m.p_avg), fmt(m.q_avg),
                        *(fmt(x) for x in m.i_rms), *(fmt(x) for x in m.thd),
                        "nan" if math.isnan(m.settle_time) else fmt(m.settle_time), int(m.settled)])


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def scenario_hash(sc: Scenario) -> str:
    """sha256 of the canonical scenario document; independent of platform and key order."""
    return hashlib.sha256(canonical_json(scenario_to_dict(sc)).encode()).hexdigest()


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(obj, path: str | Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    try:
        with os.fdopen(fd, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)
            f.write("\n")
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_scenario(path: str | Path) -> Scenario:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ScenarioError("<document>", f"invalid JSON: {exc}") from None
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path: str | Path) -> None:
    with open(path, "w") as f:
        json.dump(scenario_to_dict(sc), f, indent=2)
        f.write("\n")


def write_charts(tr: TraceSet, sc: Scenario, path: str | Path) -> None:
    """Static SVG: line currents, source and module power, dc-link voltages."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(3, 1, figsize=(9, 9), sharex=True)
    for k, p in enumerate(PHASES):
        axes[0].plot(tr.t, tr.i_line[k], lw=0.7, label=f"i_{p}")
    axes[0].set_ylabel("line current (A)")
    axes[1].plot(tr.t, tr.p_source, label="P source")
    axes[1].plot(tr.t, tr.q_source, label="Q source")
    axes[1].plot(tr.t, tr.p_module, label="P module")
    axes[1].set_ylabel("power (W, var)")
    for k, p in enumerate(PHASES):
        axes[2].plot(tr.t, tr.v_dc_module[k], lw=0.8, label=f"module {p}")
    axes[2].set_ylabel("module dc (V)")
    axes[2].set_xlabel("time (s)")
    for t, _ in sc.schedule:
        for ax in axes:
            ax.axvline(t, color="0.6", lw=0.6, ls="--")
    for ax in axes:
        ax.legend(loc="upper right", fontsize=7)
        ax.grid(alpha=0.3)
    fig.suptitle(f"case {sc.name}")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def write_region_svg(regions, path: str | Path, title: str = "") -> None:
    """One panel per region boundary."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, len(regions), figsize=(4.2 * len(regions), 4), squeeze=False)
    for ax, r in zip(axes[0], regions):
        ax.fill(r.x, r.y, alpha=0.25)
        ax.plot(r.x, r.y, lw=0.8)
        ax.set_xlabel(r.x_label)
        ax.set_ylabel(r.y_label)
        ax.set_title(r.kind, fontsize=9)
        ax.grid(alpha=0.3)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
