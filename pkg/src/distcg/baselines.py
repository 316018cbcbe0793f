"""Comparison methods: gradient tracking (ATC and CTA, with optional
momentum) and decentralized consensus ADMM.

Update forms, with ``W`` doubly stochastic and ``y(0) = g(0)``:

* DIGing-ATC:      ``x+ = W(x - a y)``,            ``y+ = W(y + g+ - g)``
* AB/Push-Pull:    ``x+ = W x - a y``,             ``y+ = W y + g+ - g``
* ABm:             ``x+ = W x - a y + m (x - x_prev)``, same ``y`` update
* C-ADMM:          ``p+ = p + rho L x``, then the closed-form primal
  ``x_i+ = (2 C_i^T C_i + 2 rho d_i I)^{-1} (2 C_i^T y_i - p_i+ + rho sum_j (x_i + x_j))``

With doubly-stochastic weights AB/Push-Pull coincides with DIGing-CTA.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InvalidParameterError, UnsupportedLossError
from .graph import laplacian
from .harness.records import run_loop
from .mixing import MixingMatrix

ABM_FORM = "heavy-ball on x after CTA combine: x+ = Wx - a*y + m*(x - x_prev)"
KINDS = ("diging_atc", "ab_push_pull", "abm", "c_admm")


@dataclass(frozen=True)
class BaselineKind:
    kind: str
    rho: float | None = None
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown baseline {self.kind!r}")
        if self.kind == "c_admm" and not (self.rho is not None and self.rho > 0):
            raise InvalidParameterError("C-ADMM needs rho > 0")
        if not 0 <= self.gamma < 1:
            raise InvalidParameterError("momentum must lie in [0, 1)")


@dataclass(frozen=True)
class TrackingState:
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    x_prev: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class AdmmState:
    x: np.ndarray
    p: np.ndarray
    k: int = 0


def _w(w):
    return w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)


def _stacked(x0, problem):
    if x0 is None:
        return np.zeros((problem.n_agents, problem.dim))
    return np.array(np.broadcast_to(np.asarray(x0, float), (problem.n_agents, problem.dim)))


def _finite(k, *arrays):
    # inf/nan anywhere makes the sum non-finite
    if not np.isfinite(sum(float(a.sum()) for a in arrays)):
        raise DivergenceError(f"non-finite value at iteration {k}", k)


def _alpha(alpha):
    if isinstance(alpha, float) and alpha > 0:
        return alpha
    a = np.asarray(alpha, dtype=float)
    if not np.all(a > 0):
        raise InvalidParameterError("step-size must be positive")
    return a[:, None] if a.ndim == 1 else a


def init_tracking(problem, x0=None) -> TrackingState:
    x = _stacked(x0, problem)
    g = problem.local_gradients(x)
    return TrackingState(x=x, y=g.copy(), g=g, x_prev=x.copy())


def diging_atc_step(state: TrackingState, w, problem, alpha) -> TrackingState:
    w = _w(w)
    x = w @ (state.x - _alpha(alpha) * state.y)
    g = problem.local_gradients(x)
    y = w @ (state.y + g - state.g)
    _finite(state.k + 1, x, y)
    return TrackingState(x=x, y=y, g=g, x_prev=state.x, k=state.k + 1)


def abm_step(state: TrackingState, w, problem, alpha, gamma=0.0) -> TrackingState:
    w = _w(w)
    x = w @ state.x - _alpha(alpha) * state.y
    if gamma:
        x = x + gamma * (state.x - state.x_prev)
    g = problem.local_gradients(x)
    y = w @ state.y + g - state.g
    _finite(state.k + 1, x, y)
    return TrackingState(x=x, y=y, g=g, x_prev=state.x, k=state.k + 1)


def ab_push_pull_step(state: TrackingState, w, problem, alpha) -> TrackingState:
    return abm_step(state, w, problem, alpha, 0.0)


class AdmmSolver:
    """Precomputed per-agent primal systems for a fixed graph and ``rho``."""

    def __init__(self, problem, graph, rho):
        if problem.loss != "squared":
            raise UnsupportedLossError("C-ADMM primal has no closed form for the Huber loss")
        if not rho > 0:
            raise InvalidParameterError("rho must be positive")
        self.rho = float(rho)
        self.lap = laplacian(graph).astype(float)
        self.adj = graph.adjacency().astype(float)
        deg = graph.degrees.astype(float)
        n = problem.dim
        self.rhs0 = np.stack([2.0 * a.c.T @ a.y for a in problem.agents])
        self.inv = np.stack([
            np.linalg.inv(2.0 * a.c.T @ a.c + 2.0 * self.rho * d * np.eye(n))
            for a, d in zip(problem.agents, deg)])
        self.deg = deg

    def step(self, state: AdmmState) -> AdmmState:
        x = state.x
        p = state.p + self.rho * (self.lap @ x)
        # rho * sum_{j in N_i} (x_i + x_j) = rho * (d_i x_i + (A x)_i)
        rhs = self.rhs0 - p + self.rho * (self.deg[:, None] * x + self.adj @ x)
        x_next = np.einsum("inm,im->in", self.inv, rhs)
        _finite(state.k + 1, x_next, p)
        return AdmmState(x=x_next, p=p, k=state.k + 1)


def c_admm_step(state: AdmmState, graph, problem, rho) -> AdmmState:
    return AdmmSolver(problem, graph, rho).step(state)


def init_admm(problem, x0=None) -> AdmmState:
    x = _stacked(x0, problem)
    return AdmmState(x=x, p=np.zeros_like(x))


def run_baseline(kind: BaselineKind | str, problem, graph, w, alpha=None, tol_rse=1e-13,
                 max_iter=10_000, x0=None, keep_history=False):
    if isinstance(kind, str):
        kind = BaselineKind(kind)
    if kind.kind == "c_admm":
        solver = AdmmSolver(problem, graph, kind.rho)
        return run_loop("c_admm", solver.step, init_admm(problem, x0), problem, graph,
                        tol_rse, max_iter, keep_history=keep_history,
                        params={"rho": kind.rho})
    if alpha is None:
        raise InvalidParameterError(f"{kind.kind} needs a step-size")
    state = init_tracking(problem, x0)
    params = {"alpha": np.asarray(alpha).tolist()}
    if kind.kind == "diging_atc":
        step = lambda st: diging_atc_step(st, w, problem, alpha)  # noqa: E731
    elif kind.kind == "ab_push_pull":
        step = lambda st: ab_push_pull_step(st, w, problem, alpha)  # noqa: E731
    else:
        params["gamma"] = kind.gamma
        params["abm_form"] = ABM_FORM
        step = lambda st: abm_step(st, w, problem, alpha, kind.gamma)  # noqa: E731
    return run_loop(kind.kind, step, state, problem, graph, tol_rse, max_iter,
                    keep_history=keep_history, params=params)
