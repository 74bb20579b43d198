"""Dense convex QP solver: active set with exact KKT re-solves.

    minimize    0.5 x^T H x + g^T x
    subject to  A_eq x  = b_eq
                A_in x >= b_in

Intended for the small, strictly convex programs of the controller stack
(tens of variables); solves are direct, so residuals sit at machine
precision rather than at an iterative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        n = self.g.size
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
            self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        else:
            self.A_in = np.asarray(self.A_in, dtype=float).reshape(-1, n)
            self.b_in = np.asarray(self.b_in, dtype=float).reshape(-1)
        if not np.allclose(self.H, self.H.T, atol=1e-10):
            raise ValueError("QP Hessian must be symmetric")


@dataclass
class QpSolution:
    x: np.ndarray
    duals_eq: np.ndarray
    duals_in: np.ndarray
    status: str  # optimal | primal_infeasible | dual_infeasible | max_iter
    iterations: int
    stationarity: float = np.inf
    feasibility: float = np.inf
    certificate: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _kkt_solve(H, g, A, b):
    """Equality-constrained solve; multipliers follow H x + g = A^T lam."""
    n = g.size
    ma = A.shape[0]
    K = np.empty((n + ma, n + ma))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    K[n:, n:] = 0.0
    rhs = np.concatenate([-g, b])
    sol = np.linalg.solve(K, rhs)
    return sol[:n], -sol[n:]


def solve_qp(problem: QpProblem, tol: float = 1e-8, max_iter: int = 200) -> QpSolution:
    """Active-set solve; equalities stay in the working set permanently."""
    H, g = problem.H, problem.g
    A_eq, b_eq = problem.A_eq, problem.b_eq
    A_in, b_in = problem.A_in, problem.b_in
    n = g.size
    me, mi = A_eq.shape[0], A_in.shape[0]

    eigs = np.linalg.eigvalsh(H)
    if eigs[0] < -1e-10:
        raise ValueError("QP Hessian must be positive semidefinite")
    if eigs[0] < 1e-12:
        # singular PSD Hessian: unbounded when the gradient or constraints
        # cannot pin the flat directions (certificate: a null direction)
        null_mask = eigs < 1e-12
        _, V = np.linalg.eigh(H)
        for k in np.where(null_mask)[0]:
            d = V[:, k]
            moves_cost = abs(g @ d) > 1e-12
            blocked = (me and np.any(np.abs(A_eq @ d) > 1e-12)) or (
                mi and np.any(np.abs(A_in @ d) > 1e-12))
            if moves_cost and not blocked:
                return QpSolution(
                    x=np.zeros(n), duals_eq=np.zeros(me), duals_in=np.zeros(mi),
                    status="dual_infeasible", iterations=0,
                    certificate=d if g @ d < 0 else -d)
        H = H + 1e-10 * np.eye(n)  # pinned flat directions: tiny ridge

    working: list[int] = []
    x = np.zeros(n)
    duals_in = np.zeros(mi)
    duals_eq = np.zeros(me)
    for it in range(1, max_iter + 1):
        rows = A_in[working] if working else np.zeros((0, n))
        A_act = np.vstack([A_eq, rows])
        b_act = np.concatenate([b_eq, b_in[working] if working else np.zeros(0)])
        try:
            x, lam = _kkt_solve(H, g, A_act, b_act)
        except np.linalg.LinAlgError:
            x, lam, consistent = _kkt_lstsq(H, g, A_act, b_act, tol)
            if not consistent:
                cert = np.zeros(me + mi)
                for j, idx in enumerate(working):
                    cert[me + idx] = lam[me + j] if me + j < lam.size else 1.0
                return QpSolution(
                    x=x, duals_eq=lam[:me], duals_in=_scatter(lam[me:], working, mi),
                    status="primal_infeasible", iterations=it, certificate=cert)
        lam_in = lam[me:]
        if working and lam_in.size and lam_in.min() < -tol:
            drop = int(np.argmin(lam_in))
            working.pop(drop)
            continue
        viol = A_in @ x - b_in if mi else np.zeros(0)
        candidates = [i for i in range(mi) if i not in working and viol[i] < -tol]
        if not candidates:
            duals_in = _scatter(lam_in, working, mi)
            duals_eq = lam[:me]
            stat = np.linalg.norm(
                H @ x + g - A_eq.T @ duals_eq - A_in.T @ duals_in, ord=np.inf)
            feas = 0.0
            if me:
                feas = max(feas, np.abs(A_eq @ x - b_eq).max())
            if mi:
                feas = max(feas, max(0.0, -(A_in @ x - b_in).min()))
            return QpSolution(x=x, duals_eq=duals_eq, duals_in=duals_in,
                              status="optimal", iterations=it,
                              stationarity=stat, feasibility=feas)
        working.append(min(candidates, key=lambda i: viol[i]))
    return QpSolution(x=x, duals_eq=duals_eq, duals_in=duals_in,
                      status="max_iter", iterations=max_iter)


def _scatter(vals: np.ndarray, idx: list[int], m: int) -> np.ndarray:
    out = np.zeros(m)
    for v, i in zip(vals, idx):
        out[i] = v
    return out


def _kkt_lstsq(H, g, A, b, tol):
    n = g.size
    ma = A.shape[0]
    K = np.zeros((n + ma, n + ma))
    K[:n, :n] = H
    K[:n, n:] = A.T
    K[n:, :n] = A
    rhs = np.concatenate([-g, b])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    residual = K @ sol - rhs
    consistent = np.abs(residual[n:]).max(initial=0.0) <= 1e3 * tol
    return sol[:n], -sol[n:], consistent
