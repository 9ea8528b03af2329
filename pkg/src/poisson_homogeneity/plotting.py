"""SVG power curves from the CSV files written by the power and rate-probe commands."""

from __future__ import annotations

import csv
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp so identical inputs give identical files
matplotlib.rcParams["svg.hashsalt"] = "poisson-homogeneity"
_SVG_META = {"Date": None, "Creator": None}


def _read(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def plot_power(path, out):
    rows = _read(path)
    labels = list(dict.fromkeys(r["label"] for r in rows))
    curves = defaultdict(dict)
    for r in rows:
        curves[r["procedure"]][r["label"]] = float(r["power"])
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(labels))
    for proc, vals in curves.items():
        ax.plot(x, [vals.get(lab, float("nan")) for lab in labels], marker="o", label=proc)
    ax.set_xticks(list(x), labels)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel(rows[0]["family"] + " parameter" if rows else "parameter")
    ax.set_ylabel("estimated power")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_rate_probe(path, out):
    rows = _read(path)
    curves = defaultdict(list)
    for r in rows:
        curves[(r["L"], r["J"], r["D"])].append((float(r["r"]), float(r["power"])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for (L, J, D), pts in curves.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker=".", label=f"L={L} J={J} D={D}")
    ax.set_xlabel("r")
    ax.set_ylabel("estimated power")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_csv(path, out_dir):
    """Render one SVG next to the name of ``path`` inside ``out_dir``; returns its path."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    base = os.path.splitext(os.path.basename(path))[0]
    out = os.path.join(out_dir, base + ".svg")
    if header[:2] == ["family", "label"]:
        plot_power(path, out)
    elif header[:3] == ["L", "J", "D"]:
        plot_rate_probe(path, out)
    else:
        raise ValueError(f"{path}: not a power or rate-probe CSV")
    return out
