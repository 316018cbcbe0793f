"""Shared fixtures-by-function for tests that need recorded DC-Grad runs."""
import numpy as np

from distcg.cg_core import BetaScheme
from distcg.dcgrad import run
from distcg.diagnostics import IterateTrace
from distcg.graph import Graph, generate_random_connected
from distcg.mixing import metropolis_hastings
from distcg.problems import AgentObjective, ProblemInstance, generate_ls_instance


def consistent_ls_instance(n_agents, n, m_range, seed):
    """LS instance whose agents all share the minimizer (noise-free data)."""
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(n)
    agents = []
    for _ in range(n_agents):
        c = rng.standard_normal((int(rng.integers(m_range[0], m_range[1] + 1)), n))
        agents.append(AgentObjective(c, c @ x_true))
    return ProblemInstance(agents, x_true)


def traced_run(problem, graph, alpha_frac=0.3, scheme=BetaScheme("fletcher_reeves", 0.2),
               tol=1e-13, max_iter=10_000):
    """DC-Grad with history; returns ``(record, trace, lam, L)``."""
    mm = metropolis_hastings(graph)
    rec = run(problem, graph, mm.w, alpha_frac / problem.lipschitz, scheme, tol, max_iter,
              keep_history=True)
    return rec, IterateTrace.from_history(rec.history), mm.lam, problem.lipschitz


def ls_case(seed, n_agents=8, n=4, kappa=0.5, consistent=False):
    m_range = (4, 9)
    p = (consistent_ls_instance(n_agents, n, m_range, seed) if consistent
         else generate_ls_instance(n_agents, n, m_range, seed=seed))
    g = Graph.complete(n_agents) if kappa >= 1 else generate_random_connected(n_agents, kappa, seed=seed)
    return p, g
