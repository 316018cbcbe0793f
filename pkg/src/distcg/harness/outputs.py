"""Write experiment results: CSV tables, RSE traces, manifest, plot files.

Every file except ``table_time.csv`` and the PNG figures is a deterministic
function of the configuration and seeds.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..baselines import ABM_FORM
from .config import format_config
from .records import BYTES_PER_SCALAR, VECTORS_PER_MESSAGE

TABLE_HEADER = "# distcg-table v1"
TRACE_HEADER = "# distcg-trace v1"
MANIFEST_HEADER = "# distcg-manifest v1"
BYTES_PER_MB = 1e6
TIMING_LABEL = "per-agent compute seconds = total loop time / N, sequential simulation"

DECISIONS = {
    "rse": "||x_i - x*|| / ||x*||, max and min over agents",
    "bytes": (f"sent only, {BYTES_PER_SCALAR} * n * vectors_per_message * deg(i) * iterations; "
              + ", ".join(f"{k}={v}" for k, v in VECTORS_PER_MESSAGE.items())),
    "megabyte": f"{BYTES_PER_MB:g} bytes",
    "timing": TIMING_LABEL,
    "abm_form": ABM_FORM,
    "tuning": "golden-section over log10(alpha) or log10(rho); score = fractional iterations to tol",
    "table_cells": "mean +- population std over converged runs; n/a when none converged",
}


def kappa_label(kappa):
    return f"{float(kappa):.2f}"


def _cell(values, fmt):
    if not values:
        return "n/a"
    v = np.asarray(values, dtype=float)
    return f"{fmt % v.mean()} ± {fmt % v.std()}"


def _table(records, algorithms, kappas, value, fmt):
    rows = []
    for algo in algorithms:
        row = [algo]
        for kappa in kappas:
            vals = [value(r) for r in records
                    if r.algorithm == algo and r.kappa == kappa and r.converged]
            row.append(_cell(vals, fmt))
        rows.append(row)
    return rows


def write_table(path, title, algorithms, kappas, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"{TABLE_HEADER} {title}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm"] + [f"kappa={kappa_label(k)}" for k in kappas])
        w.writerows(rows)


def write_trace(path, rec):
    with open(path, "w", newline="") as fh:
        fh.write(f"{TRACE_HEADER} {rec.algorithm}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "rse_max", "rse_min"])
        for k, (hi, lo) in enumerate(zip(rec.rse_max, rec.rse_min)):
            w.writerow([k, repr(float(hi)), repr(float(lo))])


def write_records(path, records):
    """One deterministic row per run (no timing)."""
    with open(path, "w", newline="") as fh:
        fh.write(f"{TABLE_HEADER} runs\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "kappa", "trial", "graph_seed", "problem_seed", "iterations",
                    "converged", "diverged", "final_rse_max", "mean_bytes_per_agent",
                    "params", "error"])
        for r in records:
            params = ";".join(f"{k}={_fmt_param(v)}" for k, v in sorted(r.params.items())
                              if k != "form")
            w.writerow([r.algorithm, kappa_label(r.kappa), r.trial, r.seeds.get("graph", ""),
                        r.seeds.get("problem", ""), r.iterations, int(r.converged),
                        int(r.diverged), repr(float(r.final_rse)) if r.rse_max else "",
                        repr(float(r.mean_bytes)), params, r.error or ""])


def _fmt_param(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_manifest(path, result):
    cfg = result.config
    lines = [MANIFEST_HEADER]
    for line in format_config(cfg).splitlines()[1:]:
        key, _, val = line.partition(" = ")
        lines.append(f"config.{key}={val}")
    for key, val in DECISIONS.items():
        lines.append(f"decision.{key}={val}")
    for s in result.setups:
        tag = f"trial[kappa={kappa_label(s.kappa_target)},{s.trial}]"
        lines.append(f"{tag}.graph_seed={s.graph_seed}")
        lines.append(f"{tag}.problem_seed={s.problem_seed}")
        lines.append(f"{tag}.kappa_actual={s.kappa!r}")
        lines.append(f"{tag}.n_edges={s.graph.n_edges}")
        lines.append(f"{tag}.lambda={s.mixing.lam!r}")
    for r in result.records:
        tag = f"run[{r.algorithm},kappa={kappa_label(r.kappa)},{r.trial}]"
        for k, v in sorted(r.params.items()):
            lines.append(f"{tag}.{k}={_fmt_param(v)}")
        lines.append(f"{tag}.iterations={r.iterations}")
        lines.append(f"{tag}.converged={int(r.converged)}")
        if r.error:
            lines.append(f"{tag}.error={r.error}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_gnuplot(path, traces):
    """``traces``: list of (kappa label, [(algorithm, csv filename)])."""
    lines = ["# distcg-gnuplot v1", "set datafile separator ','", "set datafile commentschars '#'",
             "set logscale y", "set xlabel 'iteration'", "set ylabel 'RSE (max over agents)'",
             "set terminal pngcairo size 800,500"]
    for label, files in traces:
        lines.append(f"set output 'rse_{label}.png'")
        lines.append(f"set title 'kappa = {label}'")
        plots = [f"'{fname}' using 1:2 skip 1 with lines title '{algo}'" for algo, fname in files]
        lines.append("plot " + ", \\\n     ".join(plots))
    Path(path).write_text("\n".join(lines) + "\n")


def plot_traces(path, label, traces):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for algo, rec in traces:
        if not rec.rse_max:
            continue
        it = np.arange(len(rec.rse_max))
        (line,) = ax.semilogy(it, rec.rse_max, label=algo)
        ax.semilogy(it, rec.rse_min, color=line.get_color(), alpha=0.35, lw=0.8)
    ax.set_xlabel("iteration")
    ax.set_ylabel("RSE (max; faint: min over agents)")
    ax.set_title(f"kappa = {label}")
    ax.grid(True, which="major", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def plot_bytes(path, records, algorithms, kappas):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / max(len(algorithms), 1)
    xs = np.arange(len(kappas))
    for j, algo in enumerate(algorithms):
        means = []
        for kappa in kappas:
            vals = [r.mean_bytes / BYTES_PER_MB for r in records
                    if r.algorithm == algo and r.kappa == kappa and r.converged]
            means.append(np.mean(vals) if vals else np.nan)
        ax.bar(xs + j * width, means, width, label=algo)
    ax.set_xticks(xs + 0.4 - width / 2, [kappa_label(k) for k in kappas])
    ax.set_xlabel("kappa")
    ax.set_ylabel("MB sent per agent")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def emit_outputs(result, out_dir, figures=True):
    """Write all output files for ``result`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    algos, kappas, recs = list(cfg.algorithms), list(cfg.kappas), result.records
    written = []

    def add(name):
        written.append(out / name)
        return out / name

    write_table(add("table_time.csv"), "compute seconds per agent (" + TIMING_LABEL + ")",
                algos, kappas, _table(recs, algos, kappas, lambda r: r.compute_seconds, "%.3e"))
    write_table(add("table_bytes.csv"), "MB sent per agent", algos, kappas,
                _table(recs, algos, kappas, lambda r: r.mean_bytes / BYTES_PER_MB, "%.6g"))
    write_table(add("table_iterations.csv"), "iterations to tolerance", algos, kappas,
                _table(recs, algos, kappas, lambda r: r.iterations, "%.6g"))
    write_records(add("runs.csv"), recs)

    gp = []
    for kappa in kappas:
        label = kappa_label(kappa)
        files, traced = [], []
        for algo in algos:
            match = [r for r in recs if r.algorithm == algo and r.kappa == kappa
                     and r.trial == cfg.trace_trial and r.rse_max]
            if not match:
                continue
            fname = f"rse_trace_{algo}_{label}.csv"
            write_trace(add(fname), match[0])
            files.append((algo, fname))
            traced.append((algo, match[0]))
        gp.append((label, files))
        if figures and traced:
            plot_traces(add(f"rse_{label}.png"), label, traced)
    if figures:
        plot_bytes(add("bytes.png"), recs, algos, kappas)
    write_gnuplot(add("plot_rse.plt"), gp)
    write_manifest(add("manifest.txt"), result)
    return written
