"""Figure rendering for sweep and trace CSV outputs."""

from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(text: str) -> list:
    return list(csv.DictReader(io.StringIO(text)))


def render_sweep(csv_text: str, out_path: str) -> None:
    """One line per scheme with stderr bars, WSR versus the swept value."""
    rows = _read_csv(csv_text)
    if not rows:
        raise ValueError("empty sweep CSV")
    param = rows[0]["param"]
    schemes = []
    for r in rows:
        if r["scheme"] not in schemes:
            schemes.append(r["scheme"])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for scheme in schemes:
        pts = [(float(r["value"]), float(r["mean_wsr"]), float(r["stderr"]))
               for r in rows if r["scheme"] == scheme]
        pts.sort()
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        e = [p[2] for p in pts]
        ax.errorbar(x, y, yerr=e, marker="o", capsize=3, label=scheme)
    ax.set_xlabel(param)
    ax.set_ylabel("weighted sum rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_trace(csv_text: str, out_path: str) -> None:
    """Convergence curve: WSR against the outer iteration index."""
    rows = _read_csv(csv_text)
    if not rows:
        raise ValueError("empty trace CSV")
    x = [int(r["iter"]) for r in rows]
    y = [float(r["wsr"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(x, y, marker="o")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("weighted sum rate (bits/s/Hz)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
