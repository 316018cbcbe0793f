"""Golden-section search and step-size / penalty tuning."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineKind, run_baseline
from .cg_core import BetaScheme
from .dcgrad import DEFAULT_SCHEME
from .dcgrad import run as run_dcgrad
from .errors import InvalidParameterError, TuningError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

DEFAULT_GAMMAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEFAULT_BETA_CAPS = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5)
RHO_BRACKET = (1e-3, 1e2)
ALPHA_FLOOR = 1e-5
DIVERGED_PENALTY = 1000.0


@dataclass
class GoldenResult:
    best_param: float
    best_score: float
    evaluations: list = field(default_factory=list)
    exhausted: bool = False
    bracket: tuple = ()

    @property
    def best_seen(self):
        return min(self.evaluations, key=lambda e: e[1])


def golden_section(score, lo, hi, tol_interval=1e-6, max_evals=100) -> GoldenResult:
    """Minimize a unimodal ``score`` on ``[lo, hi]``.

    Returns the midpoint of the final bracket (scored with one extra
    evaluation). When ``max_evals`` runs out first the best point seen is
    returned and ``exhausted`` is set.
    """
    if lo > hi:
        raise InvalidParameterError("need lo <= hi")
    if not tol_interval > 0:
        raise InvalidParameterError("tol_interval must be positive")
    evals = []

    def f(t):
        v = float(score(t))
        evals.append((t, v))
        return v

    if lo == hi:
        return GoldenResult(lo, f(lo), evals, bracket=(lo, hi))
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol_interval:
        if len(evals) >= max_evals:
            t, v = min(evals, key=lambda e: e[1])
            return GoldenResult(t, v, evals, exhausted=True, bracket=(a, b))
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    mid = 0.5 * (a + b)
    return GoldenResult(mid, f(mid), evals, bracket=(a, b))


def fractional_iterations(rse_trace, tol):
    """Iterations to reach ``tol``, interpolated log-linearly inside the last step.

    Gives the tuner a score that varies continuously with the parameter
    instead of the piecewise-constant integer count.
    """
    for k, r in enumerate(rse_trace):
        if r <= tol:
            if k == 0:
                return 0.0
            prev = rse_trace[k - 1]
            if r <= 0.0:
                return float(k)
            return k - 1 + math.log(prev / tol) / math.log(prev / r)
    return None


def score_record(rec, tol, max_iter):
    """Convergent runs score their fractional iteration count; stalled runs
    score ``max_iter`` plus a log-RSE penalty; divergent runs score worse
    still, and the earlier they blow up the worse."""
    if rec.converged:
        frac = fractional_iterations(rec.rse_max, tol)
        return float(rec.iterations) if frac is None else frac
    if rec.diverged:
        return max_iter + DIVERGED_PENALTY + (max_iter - rec.iterations) / max(max_iter, 1)
    final = rec.final_rse
    if not np.isfinite(final):
        return max_iter + DIVERGED_PENALTY
    return max_iter + max(0.0, math.log10(max(final, tol) / tol))


@dataclass
class TuneResult:
    algorithm: str
    params: dict
    score: float
    log: list = field(default_factory=list)
    exhausted: bool = False
    converged: bool = True

    def log_rows(self):
        """``(algorithm, eval index, param name, value, extra, score)`` rows."""
        return [(self.algorithm, i, *row) for i, row in enumerate(self.log)]


def default_alpha_bracket(problem):
    return (ALPHA_FLOOR, 2.0 / problem.aggregate_lipschitz)


def _make_runner(algo, problem, graph, w, x0, tol):
    if algo == "dcgrad":
        def go(alpha, extra, max_iter):
            scheme = extra if isinstance(extra, BetaScheme) else DEFAULT_SCHEME
            return run_dcgrad(problem, graph, w, alpha, scheme, tol, max_iter, x0)
    elif algo == "abm":
        def go(alpha, extra, max_iter):
            return run_baseline(BaselineKind("abm", gamma=extra or 0.0), problem, graph, w,
                                alpha, tol, max_iter, x0)
    elif algo in ("diging_atc", "ab_push_pull"):
        def go(alpha, extra, max_iter):
            return run_baseline(algo, problem, graph, w, alpha, tol, max_iter, x0)
    elif algo == "c_admm":
        if problem.loss != "squared":
            from .errors import UnsupportedLossError
            raise UnsupportedLossError("C-ADMM primal has no closed form for the Huber loss")

        def go(rho, extra, max_iter):
            return run_baseline(BaselineKind("c_admm", rho=rho), problem, graph, w, None,
                                tol, max_iter, x0)
    else:
        raise InvalidParameterError(f"unknown algorithm {algo!r}")
    return go


def tune_algorithm(algo, problem, graph, w, bracket=None, budget=40, *, tol=1e-13,
                   max_iter=5000, x0=None, scheme=None, beta_caps=None, gammas=None,
                   tol_log=1e-3, require_convergence=True) -> TuneResult:
    """Pick the parameter minimizing (fractional) iterations to ``tol``.

    The search runs golden-section over ``log10`` of the step-size (or of
    ``rho`` for C-ADMM), ``budget`` evaluations per search. DC-Grad also
    scans ``beta_caps`` (clamping the given ``scheme``) and ABm scans
    ``gammas``; each grid value gets its own search.
    """
    go = _make_runner(algo, problem, graph, w, x0, tol)
    name = "rho" if algo == "c_admm" else "alpha"
    if bracket is None:
        bracket = RHO_BRACKET if algo == "c_admm" else default_alpha_bracket(problem)
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 < lo <= hi):
        raise InvalidParameterError(f"bad bracket {bracket}")

    if algo == "dcgrad":
        base = scheme or DEFAULT_SCHEME
        caps = beta_caps if beta_caps is not None else DEFAULT_BETA_CAPS
        extras = [BetaScheme(base.kind, cap) for cap in caps] if caps else [base]
    elif algo == "abm":
        extras = list(gammas if gammas is not None else DEFAULT_GAMMAS)
    else:
        extras = [None]

    log = []
    best = None
    exhausted = False
    seen = []
    for extra in extras:

        def score(t, extra=extra):
            # Only the overall best matters, so once two runs have finished
            # every later run may stop as soon as it is beaten.
            cap = max_iter if len(seen) < 2 else min(max_iter, int(min(seen)) + 2)
            v = score_record(go(10.0 ** t, extra, cap), tol, cap)
            seen.append(v)
            return v

        res = golden_section(score, math.log10(lo), math.log10(hi), tol_log, budget)
        exhausted |= res.exhausted
        for t, v in res.evaluations:
            log.append((name, 10.0 ** t, _extra_label(extra), v))
        t, v = res.best_seen
        if best is None or v < best[1]:
            best = (t, v, extra)
    t, v, extra = best
    if v >= max_iter and require_convergence:
        raise TuningError(f"{algo}: no evaluation converged within {max_iter} iterations",
                          [row[-1] for row in log])
    params = {name: 10.0 ** t}
    if isinstance(extra, BetaScheme):
        params["beta_scheme"] = extra.label()
        params["beta_cap"] = extra.cap
    elif algo == "abm":
        params["gamma"] = extra
    return TuneResult(algo, params, v, log, exhausted, converged=v < max_iter)


def _extra_label(extra):
    if extra is None:
        return ""
    if isinstance(extra, BetaScheme):
        return extra.label()
    return f"gamma={extra:g}"
