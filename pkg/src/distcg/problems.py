"""Per-agent least-squares and Huber objectives and their reference optima."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GenerationError, InvalidParameterError

FIXTURE_HEADER = "# distcg-problem v1"
SQUARED = "squared"
HUBER = "huber"


def huber_value(u, xi):
    a = np.abs(u)
    return np.where(a <= xi, 0.5 * u * u, xi * (a - 0.5 * xi))


def huber_derivative(u, xi):
    return np.clip(u, -xi, xi)


@dataclass(frozen=True)
class AgentObjective:
    """``f_i(x) = ||C x - y||^2`` or the component-wise Huber penalty of ``C x - y``."""

    c: np.ndarray
    y: np.ndarray
    loss: str = SQUARED
    xi: float = 1.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if c.shape[0] != y.shape[0] or c.shape[0] < 1 or c.shape[1] < 1:
            raise InvalidParameterError(f"incompatible C {c.shape} and y {y.shape}")
        if self.loss not in (SQUARED, HUBER):
            raise InvalidParameterError(f"unknown loss {self.loss!r}")
        if self.loss == HUBER and not self.xi > 0:
            raise InvalidParameterError("huber threshold must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "y", y)

    @property
    def dim(self):
        return self.c.shape[1]

    def residual(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidParameterError(f"expected x of shape ({self.dim},), got {x.shape}")
        return self.c @ x - self.y

    def eval(self, x):
        r = self.residual(x)
        if self.loss == SQUARED:
            return float(r @ r), 2.0 * (self.c.T @ r)
        return float(huber_value(r, self.xi).sum()), self.c.T @ huber_derivative(r, self.xi)

    def value(self, x):
        return self.eval(x)[0]

    def gradient(self, x):
        return self.eval(x)[1]

    @cached_property
    def lipschitz(self) -> float:
        top = float(np.linalg.eigvalsh(self.c.T @ self.c)[-1])
        return 2.0 * top if self.loss == SQUARED else top


@dataclass
class ProblemInstance:
    """Consensus problem ``min (1/N) sum_i f_i(x)`` with its known optimum."""

    agents: list
    x_star: np.ndarray | None = None
    f_star: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {a.dim for a in self.agents}
        if len(dims) != 1:
            raise InvalidParameterError("agents disagree on dimension")
        kinds = {(a.loss, a.xi if a.loss == HUBER else None) for a in self.agents}
        if len(kinds) != 1:
            raise InvalidParameterError("agents must share one loss kind")
        self._c_all = np.vstack([a.c for a in self.agents])
        self._y_all = np.concatenate([a.y for a in self.agents])
        sizes = np.array([a.c.shape[0] for a in self.agents])
        self._owner = np.repeat(np.arange(len(self.agents)), sizes)
        self._starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        if self.agents[0].loss == SQUARED:
            self._gram2 = np.stack([2.0 * a.c.T @ a.c for a in self.agents])
            self._cty2 = np.stack([2.0 * a.c.T @ a.y for a in self.agents])
        if self.x_star is not None:
            self.x_star = np.asarray(self.x_star, dtype=float)
            if self.f_star is None:
                self.f_star = self.value(self.x_star)

    @property
    def n_agents(self):
        return len(self.agents)

    @property
    def dim(self):
        return self.agents[0].dim

    @property
    def loss(self):
        return self.agents[0].loss

    @property
    def xi(self):
        return self.agents[0].xi

    @property
    def is_quadratic(self):
        return self.loss == SQUARED

    @property
    def m_sizes(self):
        return [a.c.shape[0] for a in self.agents]

    @cached_property
    def lipschitz(self) -> float:
        """``max_i L_i``."""
        return max(a.lipschitz for a in self.agents)

    @cached_property
    def aggregate_lipschitz(self) -> float:
        """Gradient Lipschitz constant of the averaged objective."""
        top = float(np.linalg.eigvalsh(self._c_all.T @ self._c_all)[-1]) / self.n_agents
        return 2.0 * top if self.is_quadratic else top

    # --- stacked evaluation: row i of X is agent i's iterate ---
    def residuals(self, xs):
        return np.einsum("ij,ij->i", self._c_all, xs[self._owner]) - self._y_all

    def local_gradients(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.shape != (self.n_agents, self.dim):
            raise InvalidParameterError(f"expected stacked iterates {(self.n_agents, self.dim)}")
        if self.is_quadratic:
            return np.einsum("inm,im->in", self._gram2, xs) - self._cty2
        r = self.residuals(xs)
        weights = huber_derivative(r, self.xi)
        return np.add.reduceat(self._c_all * weights[:, None], self._starts, axis=0)

    def local_values(self, xs):
        r = self.residuals(np.asarray(xs, dtype=float))
        per_row = r * r if self.is_quadratic else huber_value(r, self.xi)
        return np.add.reduceat(per_row, self._starts)

    # --- aggregate oracle f(x) = (1/N) sum f_i(x) ---
    def _tile(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidParameterError(f"expected x of shape ({self.dim},)")
        return np.broadcast_to(x, (self.n_agents, self.dim))

    def value(self, x):
        r = self._c_all @ np.asarray(x, dtype=float) - self._y_all
        per_row = r * r if self.is_quadratic else huber_value(r, self.xi)
        return float(per_row.sum()) / self.n_agents

    def gradient(self, x):
        r = self._c_all @ np.asarray(x, dtype=float) - self._y_all
        w = 2.0 * r if self.is_quadratic else huber_derivative(r, self.xi)
        return (self._c_all.T @ w) / self.n_agents

    def curvature(self, x, s):
        """``s^T H s`` with H the (generalized) Hessian of f at ``x``."""
        cs = self._c_all @ s
        if self.is_quadratic:
            return 2.0 * float(cs @ cs) / self.n_agents
        r = self._c_all @ x - self._y_all
        active = np.abs(r) <= self.xi
        return float(cs[active] @ cs[active]) / self.n_agents

    def hessian(self, x):
        if self.is_quadratic:
            return 2.0 * self._c_all.T @ self._c_all / self.n_agents
        r = self._c_all @ x - self._y_all
        ca = self._c_all[np.abs(r) <= self.xi]
        return ca.T @ ca / self.n_agents

    def rse(self, xs):
        """Per-agent ``||x_i - x*|| / ||x*||``."""
        d = np.atleast_2d(xs) - self.x_star
        return np.sqrt(np.einsum("ij,ij->i", d, d)) / self._star_norm

    @property
    def _star_norm(self):
        if getattr(self, "_star_cache", (None,))[0] is not self.x_star:
            self._star_cache = (self.x_star, float(np.linalg.norm(self.x_star)))
        return self._star_cache[1]


def _sample_ls(rng, n_agents, n, m_range):
    lo, hi = m_range
    ms = rng.integers(lo, hi + 1, size=n_agents)
    cs = [rng.standard_normal((m, n)) for m in ms]
    ys = [rng.standard_normal(m) for m in ms]
    return cs, ys


def _solve_normal_equations(cs, ys):
    a = sum(c.T @ c for c in cs)
    b = sum(c.T @ y for c, y in zip(cs, ys))
    if np.linalg.cond(a) > 1e12:
        raise np.linalg.LinAlgError("aggregate normal matrix is singular")
    x = np.linalg.solve(a, b)
    # one refinement pass
    x = x + np.linalg.solve(a, b - a @ x)
    return x


def generate_ls_instance(n_agents=50, n=10, m_range=(5, 30), seed=0, max_attempts=100):
    """Least-squares instance with standard-normal ``C_i`` and ``y_i``."""
    if m_range[0] < 1 or m_range[1] < m_range[0]:
        raise InvalidParameterError(f"bad m_range {m_range}")
    seq = np.random.SeedSequence(seed)
    for attempt, child in enumerate(seq.spawn(max_attempts)):
        rng = np.random.default_rng(child)
        cs, ys = _sample_ls(rng, n_agents, n, m_range)
        try:
            x_star = _solve_normal_equations(cs, ys)
        except np.linalg.LinAlgError:
            continue
        agents = [AgentObjective(c, y, SQUARED) for c, y in zip(cs, ys)]
        meta = {"family": "ls", "seed": seed, "attempt": attempt, "m_range": tuple(m_range),
                "data": "C_i, y_i i.i.d. standard normal"}
        return ProblemInstance(agents, x_star, meta=meta)
    raise GenerationError(f"no nonsingular instance in {max_attempts} attempts")


def _huber_optimum(cs, ys, xi):
    # With every residual inside the quadratic zone the Huber optimum is the
    # least-squares point; refine it with the centralized CG solver.
    from .cg_core import BetaScheme, cg_minimize

    agents = [AgentObjective(c, y, HUBER, xi) for c, y in zip(cs, ys)]
    inst = ProblemInstance(agents)
    x0 = _solve_normal_equations(cs, ys)
    x, _ = cg_minimize(inst, x0, BetaScheme("pr_plus"), step_rule="armijo",
                       tol=1e-14, max_iter=500)
    return inst, x


def generate_huber_instance(n_agents=50, n=10, xi=1.0, seed=0, noise=0.1,
                            init_distance=(5.0, 10.0), spread=0.1, max_attempts=100):
    """Robust least-squares instance with one observation per agent.

    Data follow ``y_i = c_i^T x_true + noise * e_i``; draws are repeated until
    every residual at the optimum lies strictly inside the quadratic zone.

    Initial iterates share a far starting point ``x_star + d`` with
    ``||d|| / ||x_star||`` drawn from ``init_distance``, perturbed per agent
    by ``spread * ||d||``. Any agent whose own residual is still below
    ``2 xi`` is pushed along its regressor so that every agent starts in the
    linear zone. Returns ``(instance, x_init)``.
    """
    if not xi > 0:
        raise InvalidParameterError("xi must be positive")
    seq = np.random.SeedSequence(seed)
    for attempt, child in enumerate(seq.spawn(max_attempts)):
        rng = np.random.default_rng(child)
        x_true = rng.standard_normal(n)
        cs = [rng.standard_normal((1, n)) for _ in range(n_agents)]
        ys = [c @ x_true + noise * rng.standard_normal(1) for c in cs]
        try:
            inst, x_star = _huber_optimum(cs, ys, xi)
        except np.linalg.LinAlgError:
            continue
        res = np.array([float((c @ x_star - y)[0]) for c, y in zip(cs, ys)])
        if np.any(np.abs(res) >= xi):
            continue
        v = rng.standard_normal(n)
        d = v / np.linalg.norm(v) * rng.uniform(*init_distance) * np.linalg.norm(x_star)
        x_init = x_star + d + spread * np.linalg.norm(d) / np.sqrt(n) * rng.standard_normal((n_agents, n))
        for i, (c, y) in enumerate(zip(cs, ys)):
            ci = c[0]
            r = ci @ x_init[i] - y[0]
            if abs(r) < 2.0 * xi:
                target = (1.0 if r >= 0 else -1.0) * 2.0 * xi
                x_init[i] += (target - r) / (ci @ ci) * ci
        inst.x_star = x_star
        inst.f_star = inst.value(x_star)
        inst.meta = {"family": "huber", "seed": seed, "attempt": attempt, "xi": xi,
                     "noise": noise, "data": "y_i = c_i^T x_true + noise*N(0,1)"}
        return inst, x_init
    raise GenerationError(f"huber data generation failed after {max_attempts} attempts")


# --- fixture I/O ---

def format_problem(inst: ProblemInstance, x_init=None) -> str:
    lines = [FIXTURE_HEADER,
             f"N {inst.n_agents}",
             f"n {inst.dim}",
             "m " + " ".join(str(m) for m in inst.m_sizes),
             f"loss {inst.loss}",
             f"xi {inst.xi!r}",
             f"seed {inst.meta.get('seed', '')}"]
    for a in inst.agents:
        for row, yv in zip(a.c, a.y):
            lines.append(" ".join(repr(float(v)) for v in row) + " | " + repr(float(yv)))
    if inst.x_star is not None:
        lines.append("x_star " + " ".join(repr(float(v)) for v in inst.x_star))
    if x_init is not None:
        for row in np.atleast_2d(x_init):
            lines.append("x_init " + " ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_problem(text: str):
    """Inverse of :func:`format_problem`; returns ``(instance, x_init or None)``."""
    rows = text.splitlines()
    if not rows or rows[0].strip() != FIXTURE_HEADER:
        raise InvalidParameterError("missing problem fixture header")
    head = {}
    it = iter(rows[1:])
    for _ in range(6):
        key, _, val = next(it).partition(" ")
        head[key] = val
    n_agents, n = int(head["N"]), int(head["n"])
    ms = [int(v) for v in head["m"].split()]
    loss, xi = head["loss"], float(head["xi"])
    body = [ln for ln in it if ln.strip()]
    data_rows = [ln for ln in body if "|" in ln]
    if len(data_rows) != sum(ms) or len(ms) != n_agents:
        raise InvalidParameterError("fixture row count does not match header")
    agents, pos = [], 0
    for m in ms:
        c = np.empty((m, n))
        y = np.empty(m)
        for r in range(m):
            lhs, rhs = data_rows[pos].split("|")
            c[r] = [float(v) for v in lhs.split()]
            y[r] = float(rhs)
            pos += 1
        agents.append(AgentObjective(c, y, loss, xi))
    x_star = None
    x_init = []
    for ln in body:
        if ln.startswith("x_star "):
            x_star = np.array([float(v) for v in ln.split()[1:]])
        elif ln.startswith("x_init "):
            x_init.append([float(v) for v in ln.split()[1:]])
    seed = head["seed"].strip()
    meta = {"family": "ls" if loss == SQUARED else "huber",
            "seed": int(seed) if seed.lstrip("-").isdigit() else seed}
    inst = ProblemInstance(agents, x_star, meta=meta)
    return inst, (np.array(x_init) if x_init else None)


def save_problem(inst, path, x_init=None):
    Path(path).write_text(format_problem(inst, x_init))


def load_problem(path):
    return parse_problem(Path(path).read_text())
