"""Derivative provision: forward-mode AD with a finite-difference harness.

All solver-facing derivatives come from JAX forward-mode AD over float64
functions. Central finite differences exist only as a cross-check, never in
the solve path.
"""

from __future__ import annotations

from functools import partial

import numpy as np

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp  # noqa: E402


class DerivativeError(RuntimeError):
    """Non-finite values encountered while differentiating."""


def gradient(fn, x: np.ndarray) -> np.ndarray:
    """Gradient of a scalar function at ``x`` via forward-over-reverse AD."""
    g = np.asarray(jax.grad(fn)(jnp.asarray(x, dtype=jnp.float64)))
    if not np.all(np.isfinite(g)):
        raise DerivativeError("non-finite gradient")
    return g


def jacobian(fn, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Dense Jacobian via forward-mode AD, seeded in chunks to bound memory."""
    x = jnp.asarray(x, dtype=jnp.float64)
    n = x.shape[0]
    cols = []
    eye = jnp.eye(n, dtype=jnp.float64)
    jvp_one = lambda v: jax.jvp(fn, (x,), (v,))[1]
    for start in range(0, n, chunk):
        seeds = eye[start:start + chunk]
        cols.append(jax.vmap(jvp_one)(seeds))
    J = np.asarray(jnp.concatenate(cols, axis=0)).T
    if not np.all(np.isfinite(J)):
        raise DerivativeError("non-finite Jacobian")
    return J


def make_jacobian_fn(fn, n: int, chunk: int = 256):
    """Compiled Jacobian evaluator for repeated calls at fixed dimension."""
    eye = jnp.eye(n, dtype=jnp.float64)

    @jax.jit
    def jac(x):
        x = jnp.asarray(x, dtype=jnp.float64)
        jvp_one = lambda v: jax.jvp(fn, (x,), (v,))[1]
        blocks = [jax.vmap(jvp_one)(eye[s:s + chunk]) for s in range(0, n, chunk)]
        return jnp.concatenate(blocks, axis=0).T

    return lambda x: np.asarray(jac(x))


def hessian(fn, x: np.ndarray) -> np.ndarray:
    H = np.asarray(jax.hessian(fn)(jnp.asarray(x, dtype=jnp.float64)))
    if not np.all(np.isfinite(H)):
        raise DerivativeError("non-finite Hessian")
    return H


def finite_difference_jacobian(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences; the independent cross-check oracle."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    J = np.zeros((f0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = step
        fp = np.atleast_1d(np.asarray(fn(x + dx), dtype=float))
        fm = np.atleast_1d(np.asarray(fn(x - dx), dtype=float))
        J[:, i] = (fp - fm) / (2 * step)
    return J


def check_against_finite_differences(
    fn, points, rtol: float = 1e-5, step: float = 1e-6
) -> float:
    """Max relative mismatch between AD and central differences over points.

    Raises AssertionError beyond ``rtol``; returns the worst relative error.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        J_ad = jacobian(fn, x)
        J_fd = finite_difference_jacobian(fn, x, step=step)
        scale = np.maximum(1.0, np.abs(J_fd))
        rel = np.max(np.abs(J_ad - J_fd) / scale)
        worst = max(worst, float(rel))
    if worst > rtol:
        raise AssertionError(
            f"AD/finite-difference mismatch {worst:.3e} exceeds rtol {rtol:.1e}")
    return worst
