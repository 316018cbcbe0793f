from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError

BYTES_PER_SCALAR = 8
VECTORS_PER_MESSAGE = {
    "dcgrad": 2,
    "diging_atc": 2,
    "ab_push_pull": 2,
    "abm": 2,
    "c_admm": 1,
    "vanilla_cg": 1,
}
DIVERGENCE_RSE = 1e8


def message_bytes(algo, graph, n, iterations) -> np.ndarray:
    """Cumulative bytes sent by each agent: ``8 * n * vpm * deg(i) * iterations``."""
    vpm = VECTORS_PER_MESSAGE[algo]
    return BYTES_PER_SCALAR * n * vpm * graph.degrees.astype(np.int64) * int(iterations)


@dataclass
class RunRecord:
    algorithm: str
    rse_max: list = field(default_factory=list)
    rse_min: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    diverged: bool = False
    bytes_per_agent: np.ndarray | None = None
    compute_seconds: float = 0.0
    params: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    kappa: float | None = None
    trial: int = 0
    final_state: object = None
    history: list | None = None
    error: str | None = None

    @property
    def final_rse(self):
        return self.rse_max[-1] if self.rse_max else float("nan")

    @property
    def mean_bytes(self):
        return float(np.mean(self.bytes_per_agent)) if self.bytes_per_agent is not None else 0.0


def run_loop(algorithm, step, state, problem, graph, tol_rse, max_iter, *,
             stop="rse", tol_grad=None, keep_history=False, params=None):
    """Drive ``step(state) -> state`` until every agent's RSE is below ``tol_rse``.

    ``state`` must expose a stacked ``x`` array. With ``stop="grad"`` the
    criterion is the aggregate gradient norm at the agents' mean instead.
    Divergence ends the run with ``diverged=True`` and the trace retained.
    """
    rec = RunRecord(algorithm, params=dict(params or {}))
    history = [state] if keep_history else None
    have_star = problem.x_star is not None

    def metric(st):
        if have_star:
            r = problem.rse(st.x)
            rec.rse_max.append(float(r.max()))
            rec.rse_min.append(float(r.min()))
        if stop == "grad":
            return float(np.linalg.norm(problem.gradient(st.x.mean(axis=0))))
        return rec.rse_max[-1]

    threshold = tol_grad if stop == "grad" else tol_rse
    value = metric(state)
    k = 0
    t0 = time.perf_counter()
    try:
        while value > threshold and k < max_iter:
            state = step(state)
            k += 1
            if keep_history:
                history.append(state)
            value = metric(state)
            if have_star and not rec.rse_max[-1] <= DIVERGENCE_RSE:
                rec.diverged = True
                rec.error = f"RSE exceeded {DIVERGENCE_RSE:g} at iteration {k}"
                break
    except DivergenceError as exc:
        rec.diverged = True
        rec.error = str(exc)
    elapsed = time.perf_counter() - t0
    rec.iterations = k
    rec.converged = (not rec.diverged) and value <= threshold
    rec.final_state = state
    rec.history = history
    rec.compute_seconds = elapsed / problem.n_agents
    if graph is not None and algorithm in VECTORS_PER_MESSAGE:
        rec.bytes_per_agent = message_bytes(algorithm, graph, problem.dim, k)
    return rec
