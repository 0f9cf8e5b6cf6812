"""Figures and delimited summaries for simulator output."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .ops import SENDER_COST  # noqa: E402


def flatten(d: dict, prefix: str = "") -> list[tuple[str, object]]:
    """Sorted (dotted key, scalar) pairs of a nested metrics dict."""
    out = []
    for k in sorted(d):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.extend(flatten(v, key + "."))
        elif isinstance(v, list):
            for i, item in enumerate(v):
                if isinstance(item, dict):
                    out.extend(flatten(item, f"{key}.{i}."))
                else:
                    out.append((f"{key}.{i}", item))
        else:
            out.append((key, v))
    return out


def tsv(d: dict) -> str:
    return "".join(f"{k}\t{v}\n" for k, v in flatten(d))


def reject_figure(metrics: dict, path: str) -> str:
    rejects = metrics.get("rejects", {})
    labels = ["ACCEPT"] + sorted(rejects)
    values = [metrics.get("accepts", 0)] + [rejects[k] for k in sorted(rejects)]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(labels, values, color=["tab:green"] + ["tab:red"] * len(rejects))
    ax.set_ylabel("verdicts")
    ax.set_title("Verdicts by reason")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def ops_figure(metrics: dict, path: str) -> str:
    sender = metrics.get("sender_ops", {})
    n = max(1, sender.get("count", 0))
    keys = sorted(SENDER_COST)
    measured = [sender.get(k, 0) / n for k in keys]
    expected = [SENDER_COST[k] for k in keys]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = range(len(keys))
    ax.bar([x - 0.2 for x in xs], expected, width=0.4, label="cost table")
    ax.bar([x + 0.2 for x in xs], measured, width=0.4, label="measured per broadcast")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(keys)
    ax.legend()
    ax.set_title("Sender operations per broadcast")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def forge_figure(rows: list[tuple[int, int, int]], path: str) -> str:
    """rows: (b, accepts, trials).  Plots measured pass rate against 2^-b with 3-sigma bars."""
    bs = [r[0] for r in rows]
    rates = [r[1] / r[2] if r[2] else 0.0 for r in rows]
    sig = [3 * ((2.0 ** -b) * (1 - 2.0 ** -b) / r[2]) ** 0.5 if r[2] else 0.0 for b, r in zip(bs, rows)]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.errorbar(bs, [2.0 ** -b for b in bs], yerr=sig, fmt="o", label="2^-b with 3 sigma", capsize=4)
    ax.plot(bs, rates, "x", markersize=10, label="measured")
    ax.set_yscale("log")
    ax.set_xlabel("b (primes per class)")
    ax.set_ylabel("forged pseudonym pass rate")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def render_all(metrics: dict, out_dir: str) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    return [reject_figure(metrics, os.path.join(out_dir, "verdicts.png")),
            ops_figure(metrics, os.path.join(out_dir, "sender_ops.png"))]
