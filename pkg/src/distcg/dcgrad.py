"""Distributed conjugate gradient over a mixing matrix.

Each agent keeps a local iterate ``x_i``, a local conjugate direction ``s_i``
and a tracker ``z_i`` of the network-average direction. One synchronous round:

1. every agent sends ``u_i = x_i + alpha_i z_i`` and sets
   ``x_i <- sum_j w_ij u_j``;
2. every agent evaluates its gradient at the new iterate and updates
   ``s_i <- -g_i + beta_i s_i`` with beta from purely local quantities;
3. every agent sends ``v_i = z_i + s_i_new - s_i_old`` and sets
   ``z_i <- sum_j w_ij v_j``.

Messages of a phase are all built from the state before that phase, so the
result does not depend on the order agents are visited in.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cg_core import BetaScheme, beta_rows
from .errors import DivergenceError, InvalidParameterError
from .harness.records import run_loop
from .mixing import MixingMatrix

DEFAULT_SCHEME = BetaScheme("fletcher_reeves", cap=0.5)


@dataclass(frozen=True)
class AgentState:
    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    g_prev: np.ndarray
    alpha: float
    beta: float


@dataclass(frozen=True)
class Message:
    u: np.ndarray
    v: np.ndarray
    sender: int


@dataclass(frozen=True)
class SwarmState:
    """Stacked agent variables; row ``i`` belongs to agent ``i``.

    ``g`` is the local gradient at ``x``; ``beta`` holds the parameters used
    to form the current ``s`` from the previous one (zeros at ``k = 0``).
    """

    x: np.ndarray
    s: np.ndarray
    z: np.ndarray
    g: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    k: int = 0

    @property
    def n_agents(self):
        return self.x.shape[0]

    def agent(self, i) -> AgentState:
        return AgentState(self.x[i], self.s[i], self.z[i], self.g[i],
                          float(self.alpha[i]), float(self.beta[i]))


def _as_alphas(alphas, n_agents):
    a = np.broadcast_to(np.asarray(alphas, dtype=float), (n_agents,)).copy()
    if not np.all(a > 0):
        raise InvalidParameterError("step-sizes must be positive")
    return a


def _as_stacked(x0, problem):
    if x0 is None:
        return np.zeros((problem.n_agents, problem.dim))
    x0 = np.asarray(x0, dtype=float)
    return np.array(np.broadcast_to(x0, (problem.n_agents, problem.dim)))


def init_swarm(problem, x0=None, alphas=1e-2) -> SwarmState:
    x = _as_stacked(x0, problem)
    g = problem.local_gradients(x)
    s = -g
    return SwarmState(x=x, s=s, z=s.copy(), g=g, alpha=_as_alphas(alphas, problem.n_agents),
                      beta=np.zeros(problem.n_agents), k=0)


def _check_finite(k, *arrays):
    # inf/nan anywhere makes the sum non-finite
    if not np.isfinite(sum(float(a.sum()) for a in arrays)):
        raise DivergenceError(f"non-finite value at iteration {k}", k)


def _mix(w, rows):
    return w @ rows


def _w(w):
    return w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)


def outgoing_u(swarm: SwarmState) -> np.ndarray:
    return swarm.x + swarm.alpha[:, None] * swarm.z


def outgoing_messages(swarm: SwarmState, s_next) -> list:
    """The two vectors each agent broadcasts in the round leaving ``swarm``."""
    u = outgoing_u(swarm)
    v = swarm.z + s_next - swarm.s
    return [Message(u[i], v[i], i) for i in range(swarm.n_agents)]


def dcgrad_step(swarm: SwarmState, w, problem, scheme: BetaScheme = DEFAULT_SCHEME) -> SwarmState:
    w = _w(w)
    k = swarm.k + 1
    x_next = _mix(w, outgoing_u(swarm))
    g_next = problem.local_gradients(x_next)
    b = beta_rows(scheme, g_next, swarm.g, swarm.s)
    s_next = -g_next + b[:, None] * swarm.s
    z_next = _mix(w, swarm.z + s_next - swarm.s)
    _check_finite(k, x_next, z_next)
    return SwarmState(x=x_next, s=s_next, z=z_next, g=g_next, alpha=swarm.alpha,
                      beta=b, k=k)


def vanilla_distributed_cg_step(swarm: SwarmState, w, problem,
                                scheme: BetaScheme = DEFAULT_SCHEME, alphas=None) -> SwarmState:
    """Consensus on ``x`` plus a local CG step; no direction tracking.

    Constant steps leave it stuck away from the optimum whenever the local
    gradients disagree at ``x*``.
    """
    w = _w(w)
    alpha = swarm.alpha if alphas is None else _as_alphas(alphas, swarm.n_agents)
    k = swarm.k + 1
    x_next = _mix(w, swarm.x) + alpha[:, None] * swarm.s
    g_next = problem.local_gradients(x_next)
    b = beta_rows(scheme, g_next, swarm.g, swarm.s)
    s_next = -g_next + b[:, None] * swarm.s
    _check_finite(k, x_next, g_next, s_next)
    return replace(swarm, x=x_next, s=s_next, z=s_next, g=g_next, alpha=alpha, beta=b, k=k)


def _check_pair(graph, w, problem):
    mm = w if isinstance(w, MixingMatrix) else MixingMatrix(np.asarray(w, float), np.nan)
    if mm.n_agents != problem.n_agents:
        raise InvalidParameterError("mixing matrix size does not match the problem")
    if graph is not None and not mm.is_compatible(graph):
        raise InvalidParameterError("mixing matrix not compatible with graph")


def run(problem, graph, w, alphas, scheme: BetaScheme = DEFAULT_SCHEME, tol_rse=1e-13,
        max_iter=10_000, x0=None, *, stop="rse", tol_grad=None, keep_history=False):
    """Run DC-Grad until the worst agent's RSE reaches ``tol_rse``.

    ``alphas`` may be a scalar or one positive step per agent. Pass
    ``stop="grad"`` with ``tol_grad`` for instances without a known optimum.
    """
    if not tol_rse > 0:
        raise InvalidParameterError("tol_rse must be positive")
    _check_pair(graph, w, problem)
    state = init_swarm(problem, x0, alphas)
    params = {"alpha": np.asarray(alphas).tolist(), "beta_scheme": scheme.label()}
    return run_loop("dcgrad", lambda st: dcgrad_step(st, w, problem, scheme), state,
                    problem, graph, tol_rse, max_iter, stop=stop, tol_grad=tol_grad,
                    keep_history=keep_history, params=params)


def run_vanilla(problem, graph, w, alphas, scheme: BetaScheme = DEFAULT_SCHEME,
                tol_rse=1e-13, max_iter=10_000, x0=None, keep_history=False):
    _check_pair(graph, w, problem)
    state = init_swarm(problem, x0, alphas)
    params = {"alpha": np.asarray(alphas).tolist(), "beta_scheme": scheme.label()}
    return run_loop("vanilla_cg", lambda st: vanilla_distributed_cg_step(st, w, problem, scheme),
                    state, problem, graph, tol_rse, max_iter, keep_history=keep_history,
                    params=params)
