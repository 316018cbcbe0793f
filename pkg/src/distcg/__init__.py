"""Distributed conjugate-gradient consensus optimization (DC-Grad) and baselines.

Submodules: ``graph``, ``mixing``, ``problems``, ``cg_core``, ``dcgrad``,
``baselines``, ``tuning``, ``diagnostics`` and ``harness``.
"""

__version__ = "0.1.0"
