"""Doubly-stochastic mixing matrices compatible with a graph."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .graph import Graph, laplacian

STOCHASTIC_TOL = 1e-12


def power_spectral_norm(m, rtol=1e-12, max_iter=10_000, seed=0):
    """Spectral norm of ``m`` by power iteration on ``m.T @ m``."""
    m = np.asarray(m, dtype=float)
    if not np.any(m):
        return 0.0
    mtm = m.T @ m
    v = np.random.default_rng(seed).standard_normal(mtm.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = mtm @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        new = float(v @ mtm @ v)
        if abs(new - est) <= rtol * max(abs(new), np.finfo(float).tiny):
            est = new
            break
        est = new
    return math.sqrt(max(est, 0.0))


@dataclass(frozen=True)
class MixingMatrix:
    w: np.ndarray
    lam: float

    @property
    def n_agents(self):
        return self.w.shape[0]

    def deviation(self):
        """``M = W - 11^T/N``."""
        n = self.n_agents
        return self.w - np.full((n, n), 1.0 / n)

    def is_compatible(self, g: Graph) -> bool:
        allowed = g.adjacency().astype(bool) | np.eye(g.n_agents, dtype=bool)
        return not np.any(self.w[~allowed] != 0.0)

    def check(self, g: Graph | None = None, tol=STOCHASTIC_TOL):
        """Raise if the matrix violates double stochasticity, the spectral
        condition, or (when ``g`` is given) graph compatibility."""
        if np.max(np.abs(self.w.sum(axis=1) - 1.0)) > tol:
            raise InvalidParameterError("row sums differ from 1")
        if np.max(np.abs(self.w.sum(axis=0) - 1.0)) > tol:
            raise InvalidParameterError("column sums differ from 1")
        if not self.lam < 1.0:
            raise InvalidParameterError(f"spectral gap condition fails: lambda={self.lam}")
        if g is not None and not self.is_compatible(g):
            raise InvalidParameterError("mixing matrix not compatible with graph")


def spectral_gap(w) -> float:
    """``rho(W - 11^T/N)``; accepts a MixingMatrix or a raw array."""
    w = w.w if isinstance(w, MixingMatrix) else np.asarray(w, dtype=float)
    n = w.shape[0]
    return power_spectral_norm(w - np.full((n, n), 1.0 / n))


def _finish(w):
    return MixingMatrix(w, spectral_gap(w))


def metropolis_hastings(g: Graph, epsilon: float = 1.0) -> MixingMatrix:
    if epsilon <= 0:
        raise InvalidParameterError("epsilon must be positive")
    deg = g.degrees
    w = np.zeros((g.n_agents, g.n_agents))
    for i, j in g.sorted_edges():
        w[i, j] = w[j, i] = 1.0 / (max(deg[i], deg[j]) + epsilon)
    for i in range(g.n_agents):
        w[i, i] = 1.0 - (w[i].sum() - w[i, i])
    return _finish(w)


def laplacian_weights(g: Graph, tau: float | None = None, epsilon: float = 1.0) -> MixingMatrix:
    """``W = I - L/tau``; ``tau=None`` picks ``max deg + epsilon``."""
    lap = laplacian(g).astype(float)
    if tau is None:
        if epsilon <= 0:
            raise InvalidParameterError("epsilon must be positive")
        tau = float(g.degrees.max()) + epsilon
    lam_max = float(np.linalg.eigvalsh(lap)[-1])
    if tau <= 0.5 * lam_max:
        raise InvalidParameterError(f"tau={tau} must exceed lambda_max(L)/2={0.5 * lam_max}")
    w = np.eye(g.n_agents) - lap / tau
    return _finish(w)


def consensus_horizon(lam: float, target: float = 1e-10) -> int:
    """Smallest k with ``lam**k <= target``."""
    if lam <= 0.0:
        return 1
    return max(1, math.ceil(math.log(target) / math.log(lam)))
