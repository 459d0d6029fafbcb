"""Delimited output and figures.

Every CSV starts with the line `# kinetic-ap-lab v1`, followed by `# key:
value` metadata lines and a comma-separated header row.  Floats are written
with repr (shortest round-trip form), so a fixed config and seed produce
byte-identical files.  Figures are rendered with the Agg backend next to
the CSVs they illustrate.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

FORMAT_TAG = "# kinetic-ap-lab v1"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _write_prelude(fh, meta: dict | None) -> None:
    fh.write(FORMAT_TAG + "\n")
    for key in sorted(meta or {}):
        fh.write(f"# {key}: {_fmt(meta[key])}\n")


def write_table(path, columns: tuple[str, ...], rows, meta: dict | None = None) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _write_prelude(fh, meta)
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(
                    f"row of width {len(row)} under {len(columns)} columns")
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def write_records(path, records, meta: dict | None = None) -> Path:
    """Per-step diagnostics trajectory."""
    fields = records[0].FIELDS
    rows = [tuple(getattr(r, name) for name in fields) for r in records]
    return write_table(path, fields, rows, meta)


def write_snapshot(path, mesh, values: np.ndarray, meta: dict | None = None) -> Path:
    """Full phase-space field, one row per (i, j) cell."""
    rows = []
    for i, xi in enumerate(mesh.x.centers):
        for j, vj in enumerate(mesh.v.centers):
            rows.append((i, j, xi, vj, values[i, j]))
    return write_table(path, ("i", "j", "x", "v", "f"), rows, meta)


def write_macro(path, xmesh, rho, J=None, S=None, meta: dict | None = None) -> Path:
    """Macroscopic fields on the spatial mesh."""
    J = np.zeros_like(rho) if J is None else J
    S = np.zeros_like(rho) if S is None else S
    rows = [(i, xmesh.centers[i], rho[i], J[i], S[i])
            for i in range(xmesh.centers.size)]
    return write_table(path, ("i", "x", "rho", "J", "S"), rows, meta)


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Inverse of write_table for numeric tables; returns (meta, columns, data)."""
    meta: dict = {}
    columns: list[str] = []
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != FORMAT_TAG:
            raise ValueError(f"{path}: missing format tag {FORMAT_TAG!r}")
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, val = line[2:].partition(": ")
                meta[key] = val
            elif not columns:
                columns = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    return meta, columns, np.array(rows)


def write_summary(path, summary: dict) -> Path:
    path = Path(path)

    def default(obj):
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        raise TypeError(f"not JSON-serializable: {type(obj)}")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=default)
        fh.write("\n")
    return path


# ----------------------------------------------------------------- figures

def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_decay(path, curves: dict, title: str = "", ylabel: str = "norm") -> Path:
    """Semilog-y time series, one line per labelled (t, y) pair."""
    fig, ax = _new_axes(title)
    for label, (t, y) in curves.items():
        positive = np.asarray(y) > 0
        ax.semilogy(np.asarray(t)[positive], np.asarray(y)[positive],
                    label=label, lw=1.2)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_profiles(path, curves: dict, title: str = "", ylabel: str = "rho") -> Path:
    """Spatial profiles, one line per labelled (x, values) pair."""
    fig, ax = _new_axes(title)
    for label, (x, y) in curves.items():
        style = {"lw": 2.0, "color": "k", "ls": "--"} if label == "heat" else {"lw": 1.2}
        ax.plot(x, y, label=label, **style)
    ax.set_xlabel("x")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_rates(path, epsilons, rates, title: str = "") -> Path:
    fig, ax = _new_axes(title)
    ax.semilogx(epsilons, rates, "o-")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("fitted decay rate")
    return _save(fig, path)
