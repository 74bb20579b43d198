"""Nonlinear-program description shared by both trajectory-optimization layers.

A problem is a named-block decision vector with a scalar cost, a stacked
constraint function with lower/upper bounds (rows with equal bounds are
equalities), and box bounds on the variables. Cost and constraints must be
JAX-traceable; derivatives are provided by forward-mode AD.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

import jax
import jax.numpy as jnp

from .diff import make_jacobian_fn


@dataclass
class VariableLayout:
    """Ordered named blocks of the decision vector."""

    blocks: list[tuple[str, int]]

    def __post_init__(self):
        self.slices: dict[str, slice] = {}
        offset = 0
        for name, size in self.blocks:
            self.slices[name] = slice(offset, offset + size)
            offset += size
        self.size = offset

    def pack(self, parts: dict[str, np.ndarray]) -> np.ndarray:
        x = np.zeros(self.size)
        for name, sl in self.slices.items():
            x[sl] = np.asarray(parts[name], dtype=float).ravel()
        return x

    def unpack(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.asarray(x[sl]) for name, sl in self.slices.items()}

    def get(self, x, name: str):
        return x[self.slices[name]]


@dataclass
class NlpProblem:
    layout: VariableLayout
    cost_fn: Callable  # x -> scalar, jax-traceable
    constraint_fn: Callable  # x -> (m,), jax-traceable
    c_lb: np.ndarray
    c_ub: np.ndarray
    x_lb: np.ndarray
    x_ub: np.ndarray
    x0: np.ndarray
    constraint_groups: list[tuple[str, slice]] = field(default_factory=list)
    cost_hessian: np.ndarray | None = None  # constant Hessian; computed if None
    hessian_mode: str = "constant"  # "constant" (quadratic costs) or "exact"
    name: str = "nlp"
    # builders sharing jitted kernels across problem instances set this
    compiled_override: tuple | None = None

    def __post_init__(self):
        self.c_lb = np.asarray(self.c_lb, dtype=float)
        self.c_ub = np.asarray(self.c_ub, dtype=float)
        self.x_lb = np.asarray(self.x_lb, dtype=float)
        self.x_ub = np.asarray(self.x_ub, dtype=float)
        self.x0 = np.asarray(self.x0, dtype=float)
        if np.any(self.c_lb > self.c_ub) or np.any(self.x_lb > self.x_ub):
            raise ValueError("lower bounds must not exceed upper bounds")
        self._compiled = None
        self._hess_jit = None

    @property
    def n(self) -> int:
        return self.layout.size

    @property
    def m(self) -> int:
        return self.c_lb.size

    def compiled(self):
        """(cost, grad, cons, jac) as fast numpy-in/numpy-out callables."""
        if self.compiled_override is not None:
            return self.compiled_override
        if self._compiled is None:
            cost_jit = jax.jit(self.cost_fn)
            grad_jit = jax.jit(jax.grad(self.cost_fn))
            cons_jit = jax.jit(self.constraint_fn)
            jac = make_jacobian_fn(self.constraint_fn, self.n)
            self._compiled = (
                lambda x: float(cost_jit(jnp.asarray(x))),
                lambda x: np.asarray(grad_jit(jnp.asarray(x))),
                lambda x: np.asarray(cons_jit(jnp.asarray(x))),
                jac,
            )
        return self._compiled

    def hessian(self) -> np.ndarray:
        """Constant cost Hessian (our costs are quadratic in the variables)."""
        if self.cost_hessian is None:
            H = np.asarray(jax.hessian(self.cost_fn)(jnp.asarray(self.x0)))
            self.cost_hessian = 0.5 * (H + H.T)
        return self.cost_hessian

    def hessian_at(self, x: np.ndarray) -> np.ndarray:
        """Exact cost Hessian at a point, eigenvalue-floored to stay PSD."""
        if self._hess_jit is None:
            self._hess_jit = jax.jit(jax.hessian(self.cost_fn))
        H = np.asarray(self._hess_jit(jnp.asarray(x)))
        H = 0.5 * (H + H.T)
        w, V = np.linalg.eigh(H)
        return (V * np.maximum(w, 1e-8)) @ V.T

    def group_residuals(self, x: np.ndarray) -> dict[str, float]:
        """Max violation of each named constraint group at ``x``."""
        _, _, cons, _ = self.compiled()
        c = cons(x)
        viol = np.maximum(c - self.c_ub, 0.0) + np.maximum(self.c_lb - c, 0.0)
        return {name: float(viol[sl].max(initial=0.0))
                for name, sl in self.constraint_groups}
