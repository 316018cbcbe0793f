"""Analysis quantities computed from a recorded DC-Grad run.

All norms of stacked ``(N, n)`` matrices are spectral norms. ``tilde(B)`` is
``B`` minus its row mean; ``mean(B)`` is the matrix whose rows all equal the
row mean, so ``||mean(B)||_2 = sqrt(N) * ||row mean||``.

Step-size and beta extremes (``alpha_max``, ``beta_max``, ``r_alpha``,
``r_beta``) are taken over the recorded iterations only.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SLACK = 1e-9


@dataclass(frozen=True)
class IterateTrace:
    """Snapshots ``k = 0..K`` of x, s, z, g (shape ``(K+1, N, n)``) and alpha
    (``(K+1, N)``); ``beta[k]`` (shape ``(K, N)``) is the parameter that
    turned ``s^(k)`` into ``s^(k+1)``."""

    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    g: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def from_history(cls, states):
        states = list(states)
        stack = lambda name: np.array([getattr(st, name) for st in states])  # noqa: E731
        beta = np.array([st.beta for st in states[1:]]).reshape(len(states) - 1, -1)
        return cls(stack("x"), stack("s"), stack("z"), stack("g"), stack("alpha"), beta)

    @property
    def n_snapshots(self):
        return self.x.shape[0]

    @property
    def n_agents(self):
        return self.x.shape[1]

    def __post_init__(self):
        k1 = self.x.shape[0]
        for name in ("s", "z", "g", "alpha"):
            if getattr(self, name).shape[0] != k1:
                raise ValueError(f"trace field {name} has inconsistent length")
        if self.beta.shape[0] != max(k1 - 1, 0):
            raise ValueError("beta must have one row fewer than the snapshots")


def tilde(b):
    return b - b.mean(axis=0, keepdims=True)


def spec(b):
    return float(np.linalg.norm(b, 2)) if b.size else 0.0


def mean_norm(b):
    """``||(1/N) 1 1^T B||_2``."""
    return math.sqrt(b.shape[0]) * float(np.linalg.norm(b.mean(axis=0)))


def consensus_violation(trace: IterateTrace, k):
    """``(||x~||, ||s~||, ||z~||, ||g~||)`` at snapshot ``k``."""
    return tuple(spec(tilde(getattr(trace, f)[k])) for f in ("x", "s", "z", "g"))


@dataclass(frozen=True)
class StepConstants:
    alpha_max: float
    beta_max: float
    r_alpha: float
    r_beta: float


def step_constants(trace: IterateTrace) -> StepConstants:
    alpha_max = float(np.max(trace.alpha))
    min_abar = float(np.min(trace.alpha.mean(axis=1)))
    r_alpha = alpha_max / min_abar
    if trace.beta.size:
        beta_max = float(np.max(np.abs(trace.beta)))
        min_bbar = float(np.min(np.abs(trace.beta.mean(axis=1))))
        r_beta = beta_max / min_bbar if min_bbar > 0 else math.inf
    else:
        beta_max, r_beta = 0.0, math.inf
    return StepConstants(alpha_max, beta_max, r_alpha, r_beta)


def _t(coef, norm):
    # inf * 0 -> 0: a vanishing quantity contributes nothing
    return 0.0 if norm == 0.0 else coef * norm


def _alpha_z(trace, k):
    return trace.alpha[k][:, None] * trace.z[k]


def _beta_s(trace, k):
    if k < 0:
        return np.zeros_like(trace.s[0])
    return trace.beta[k][:, None] * trace.s[k]


def lemma1_check(trace: IterateTrace, k, lam, lipschitz, constants=None, slack=SLACK):
    """Evaluate the three consensus-violation bounds for the step ``k-1 -> k``.

    Returns ``[(name, lhs, rhs, satisfied), ...]`` for the x, s and z bounds.
    """
    if not 1 <= k < trace.n_snapshots:
        raise IndexError(f"k={k} outside 1..{trace.n_snapshots - 1}")
    c = constants or step_constants(trace)
    L = lipschitz
    p = k - 1
    xt, st, zt = (spec(tilde(getattr(trace, f)[p])) for f in ("x", "s", "z"))
    az = mean_norm(_alpha_z(trace, p))
    bs = mean_norm(_beta_s(trace, p))
    x_lhs, s_lhs, z_lhs, g_now = consensus_violation(trace, k)

    x_rhs = (lam * xt + _t(lam * c.alpha_max * (1 + c.r_alpha), zt)
             + _t(lam * c.r_alpha, az))
    s_rhs = (g_now + _t(c.beta_max * (1 + c.r_beta), st) + _t(1 + c.r_beta, bs))
    z_rhs = (_t(lam + lam ** 2 * L * c.alpha_max * (1 + c.r_alpha), zt)
             + lam * L * (lam + 1) * xt
             + _t(lam * L * (lam * c.r_alpha + 1), az)
             + lam * (spec(_beta_s(trace, p)) + spec(_beta_s(trace, p - 1))))
    return [(name, lhs, rhs, bool(lhs <= rhs + slack))
            for name, lhs, rhs in (("x_tilde", x_lhs, x_rhs), ("s_tilde", s_lhs, s_rhs),
                                   ("z_tilde", z_lhs, z_rhs))]


def appendix_b_sequences(trace: IterateTrace):
    """Running root-sum-squares ``X, S, Z`` (per snapshot) and ``R`` (per step).

    ``R^(k)`` accumulates ``||mean(alpha z)^(l)||^2 + ||mean(beta s)^(l)||^2
    + ||g~^(l+1)||^2`` for ``l <= k``.
    """
    K1 = trace.n_snapshots
    xs = np.array([spec(tilde(trace.x[k])) for k in range(K1)])
    ss = np.array([spec(tilde(trace.s[k])) for k in range(K1)])
    zs = np.array([spec(tilde(trace.z[k])) for k in range(K1)])
    r_inc = np.array([mean_norm(_alpha_z(trace, k)) ** 2 + mean_norm(_beta_s(trace, k)) ** 2
                      + spec(tilde(trace.g[k + 1])) ** 2 for k in range(K1 - 1)])
    cum = lambda v: np.sqrt(np.cumsum(v ** 2)) if v.size else v  # noqa: E731
    return {"X": cum(xs), "S": cum(ss), "Z": cum(zs),
            "R": np.sqrt(np.cumsum(r_inc)) if r_inc.size else r_inc}


def mean_tracking_error(trace: IterateTrace) -> np.ndarray:
    """``||z_bar - s_bar||`` (row-mean vectors) at every snapshot."""
    return np.linalg.norm(trace.z.mean(axis=1) - trace.s.mean(axis=1), axis=1)


def tracker_conservation_error(trace: IterateTrace) -> np.ndarray:
    """``||1^T z^(k+1) - 1^T (z^(k) + s^(k+1) - s^(k))||`` per step."""
    lhs = trace.z[1:].sum(axis=1)
    rhs = (trace.z[:-1] + trace.s[1:] - trace.s[:-1]).sum(axis=1)
    return np.linalg.norm(lhs - rhs, axis=1)


def mean_gradient_norm(trace: IterateTrace, k=-1) -> float:
    """``||mean(g)^(k)||_2``."""
    return mean_norm(trace.g[k])


def diagnostics_rows(trace: IterateTrace, lam, lipschitz):
    c = step_constants(trace)
    seqs = appendix_b_sequences(trace)
    track = mean_tracking_error(trace)
    rows = []
    for k in range(trace.n_snapshots):
        xt, st, zt, gt = consensus_violation(trace, k)
        row = {"iteration": k, "x_tilde": xt, "s_tilde": st, "z_tilde": zt, "g_tilde": gt,
               "mean_alpha_z": mean_norm(_alpha_z(trace, k)),
               "mean_beta_s": mean_norm(_beta_s(trace, k)) if k < trace.beta.shape[0] else "",
               "zbar_minus_sbar": float(track[k]),
               "g_bar": mean_gradient_norm(trace, k),
               "X": seqs["X"][k], "S": seqs["S"][k], "Z": seqs["Z"][k],
               "R": seqs["R"][k] if k < seqs["R"].size else ""}
        if k >= 1:
            for name, lhs, rhs, ok in lemma1_check(trace, k, lam, lipschitz, c):
                row[f"{name}_lhs"], row[f"{name}_rhs"], row[f"{name}_ok"] = lhs, rhs, int(ok)
        rows.append(row)
    return rows


def write_diagnostics_csv(trace: IterateTrace, path, lam, lipschitz):
    rows = diagnostics_rows(trace, lam, lipschitz)
    fields = list(rows[-1].keys()) if len(rows) > 1 else list(rows[0].keys())
    with open(Path(path), "w", newline="") as fh:
        fh.write("# distcg-diagnostics v1\n")
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})
    return rows


def zone_entry(problem, xs_history):
    """First snapshot after which every agent's own residuals stay within ``xi``.

    Returns ``len(xs_history)`` if the quadratic zone is never entered for good.
    """
    inside = [bool(np.all(np.abs(problem.residuals(x)) <= problem.xi)) for x in xs_history]
    entry = len(inside)
    for k in range(len(inside) - 1, -1, -1):
        if not inside[k]:
            break
        entry = k
    return entry


def phase_slopes(rse, entry):
    """Average slope of ``log10(rse)`` before and after ``entry``.

    Returns ``(before, after)``; either is ``nan`` when its phase is empty.
    """
    lr = np.log10(np.asarray(rse, dtype=float))
    last = lr.size - 1
    before = (lr[entry] - lr[0]) / entry if 0 < entry <= last else math.nan
    after = (lr[last] - lr[entry]) / (last - entry) if entry < last else math.nan
    return before, after
