"""Centralized nonlinear conjugate gradient and the shared beta formulas."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InvalidParameterError

BETA_KINDS = ("hestenes_stiefel", "fletcher_reeves", "polak_ribiere", "pr_plus")
_ALIASES = {"hs": "hestenes_stiefel", "fr": "fletcher_reeves", "pr": "polak_ribiere",
            "prp": "pr_plus", "pr+": "pr_plus"}
HS_FLOOR = 1e-300


@dataclass(frozen=True)
class BetaScheme:
    """A beta rule, optionally clamped to ``[0, cap]``."""

    kind: str = "fletcher_reeves"
    cap: float | None = None

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in BETA_KINDS:
            raise InvalidParameterError(f"unknown beta scheme {self.kind!r}")
        if self.cap is not None and not self.cap > 0:
            raise InvalidParameterError("beta cap must be positive")
        object.__setattr__(self, "kind", kind)

    @classmethod
    def parse(cls, text):
        """``"fr"``, ``"pr_plus"``, ``"clamped(fr,0.5)"`` or ``"fr@0.5"``."""
        text = text.strip()
        if text.startswith("clamped(") and text.endswith(")"):
            kind, cap = text[len("clamped("):-1].split(",")
            return cls(kind.strip(), float(cap))
        if "@" in text:
            kind, cap = text.split("@")
            return cls(kind.strip(), float(cap))
        return cls(text)

    def label(self):
        return self.kind if self.cap is None else f"clamped({self.kind},{self.cap:g})"


def _ratio(num, den):
    return 0.0 if den == 0.0 else num / den


def beta(scheme: BetaScheme, g_next, g_prev, s_prev) -> float:
    """Conjugate update parameter; degenerate denominators give 0."""
    g_next = np.asarray(g_next, dtype=float)
    g_prev = np.asarray(g_prev, dtype=float)
    s_prev = np.asarray(s_prev, dtype=float)
    if not (g_next.shape == g_prev.shape == s_prev.shape):
        raise InvalidParameterError("beta arguments must share a shape")
    kind = scheme.kind
    if kind == "hestenes_stiefel":
        dg = g_next - g_prev
        den = float(dg @ s_prev)
        val = 0.0 if abs(den) < HS_FLOOR else float(dg @ g_next) / den
    elif kind == "fletcher_reeves":
        val = _ratio(float(g_next @ g_next), float(g_prev @ g_prev))
    else:
        val = _ratio(float((g_next - g_prev) @ g_next), float(g_prev @ g_prev))
        if kind == "pr_plus":
            val = max(0.0, val)
    if scheme.cap is not None:
        val = min(max(0.0, val), scheme.cap)
    return val


def beta_rows(scheme: BetaScheme, g_next, g_prev, s_prev) -> np.ndarray:
    """Row-wise :func:`beta` for stacked ``(N, n)`` arrays."""
    g_next = np.asarray(g_next, dtype=float)
    g_prev = np.asarray(g_prev, dtype=float)
    kind = scheme.kind
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "hestenes_stiefel":
            dg = g_next - g_prev
            den = np.einsum("ij,ij->i", dg, np.asarray(s_prev, dtype=float))
            num = np.einsum("ij,ij->i", dg, g_next)
            val = np.where(np.abs(den) < HS_FLOOR, 0.0, num / den)
        else:
            den = np.einsum("ij,ij->i", g_prev, g_prev)
            if kind == "fletcher_reeves":
                num = np.einsum("ij,ij->i", g_next, g_next)
            else:
                num = np.einsum("ij,ij->i", g_next - g_prev, g_next)
            val = np.where(den == 0.0, 0.0, num / den)
            if kind == "pr_plus":
                val = np.maximum(0.0, val)
    if scheme.cap is not None:
        val = np.clip(val, 0.0, scheme.cap)
    return val


@dataclass(frozen=True)
class CgState:
    x: np.ndarray
    g: np.ndarray
    s: np.ndarray
    k: int = 0


@dataclass
class CgTrace:
    xs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    values: list = field(default_factory=list)
    directions: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    restarts: int = 0
    converged: bool = False
    max_iter_reached: bool = False

    @property
    def iterations(self):
        return len(self.xs) - 1


def _armijo(fun, x, fx, g, s, alpha0, c1=1e-4, max_halvings=60, delta=0.1):
    slope = float(g @ s)
    flat = 1e-12 * max(abs(fx), 1.0)
    alpha = alpha0
    for _ in range(max_halvings):
        f_new = fun.value(x + alpha * s)
        if f_new <= fx + c1 * alpha * slope:
            return alpha
        # Near the optimum the decrease drops below rounding; fall back to
        # the approximate Wolfe test on the directional derivative.
        if abs(f_new - fx) <= flat and float(fun.gradient(x + alpha * s) @ s) <= (2 * delta - 1) * slope:
            return alpha
        alpha *= 0.5
    return alpha


def _step_size(fun, step_rule, x, fx, g, s):
    if not isinstance(step_rule, str):
        return float(step_rule)
    if step_rule == "exact":
        if not getattr(fun, "is_quadratic", False):
            raise InvalidParameterError("exact line search needs a quadratic objective")
        curv = fun.curvature(x, s)
        return -float(g @ s) / curv if curv > 0 else 0.0
    if step_rule == "armijo":
        curv = fun.curvature(x, s) if hasattr(fun, "curvature") else 0.0
        alpha0 = -float(g @ s) / curv if curv > 0 else 1.0
        return _armijo(fun, x, fx, g, s, alpha0)
    raise InvalidParameterError(f"unknown step rule {step_rule!r}")


def cg_minimize(fun, x0, scheme: BetaScheme = BetaScheme(), step_rule="exact",
                tol=1e-10, max_iter=1000, restart=True):
    """Nonlinear CG on an oracle exposing ``value``/``gradient`` (and ``curvature``
    for the exact or Armijo rules).

    ``step_rule`` is ``"exact"`` (quadratics), ``"armijo"`` or a fixed float step.
    Returns ``(x, trace)``; ``trace.max_iter_reached`` flags non-convergence.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    x = np.array(x0, dtype=float)
    g = fun.gradient(x)
    s = -g
    fx = fun.value(x)
    trace = CgTrace(xs=[x.copy()], grad_norms=[float(np.linalg.norm(g))], values=[fx],
                    directions=[s.copy()])
    for k in range(max_iter):
        if trace.grad_norms[-1] <= tol:
            trace.converged = True
            return x, trace
        if restart and float(s @ g) >= 0:
            s = -g
            trace.restarts += 1
            trace.directions[-1] = s.copy()
        alpha = _step_size(fun, step_rule, x, fx, g, s)
        x = x + alpha * s
        g_next = fun.gradient(x)
        fx = fun.value(x)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(g_next)) and np.isfinite(fx)):
            raise DivergenceError(f"non-finite iterate at iteration {k + 1}", k + 1)
        b = beta(scheme, g_next, g, s)
        s = -g_next + b * s
        g = g_next
        trace.xs.append(x.copy())
        trace.grad_norms.append(float(np.linalg.norm(g)))
        trace.values.append(fx)
        trace.directions.append(s.copy())
        trace.alphas.append(alpha)
        trace.betas.append(b)
    trace.converged = trace.grad_norms[-1] <= tol
    trace.max_iter_reached = not trace.converged
    return x, trace


class Quadratic:
    """``f(x) = 0.5 x^T A x - b^T x`` with an exact curvature oracle."""

    is_quadratic = True

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def value(self, x):
        return 0.5 * float(x @ self.a @ x) - float(self.b @ x)

    def gradient(self, x):
        return self.a @ x - self.b

    def curvature(self, x, s):
        return float(s @ self.a @ s)

    def minimizer(self):
        return np.linalg.solve(self.a, self.b)
