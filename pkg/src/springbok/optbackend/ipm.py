"""Primal-dual interior-point solver with filter line search.

Handles   min f(x)   s.t.   c_lb <= c(x) <= c_ub,   x_lb <= x <= x_ub.

Inequality rows receive slack variables; bounds enter through logarithmic
barriers with a monotone barrier-parameter schedule. Search directions come
from a sparse regularized KKT solve; the cost Hessian is constant for the
quadratic objectives used here, so the reduced system stays convex and no
inertia correction is needed. Acceptance follows a (constraint violation,
barrier objective) filter with an Armijo switch near feasibility.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .nlp import NlpProblem

logger = logging.getLogger(__name__)

_BIG = 1e19


@dataclass
class NlpSolution:
    x: np.ndarray
    status: str  # optimal | max_iter | line_search_failed | numeric_error
    iterations: int
    objective: float
    kkt_error: float
    constraint_violation: float
    multipliers: np.ndarray = field(repr=False, default=None)
    bound_multipliers: tuple = field(repr=False, default=None)
    group_residuals: dict = field(default_factory=dict)
    solve_time: float = 0.0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


@dataclass
class IpmOptions:
    tol: float = 1e-6
    max_iter: int = 400
    mu0: float = 1e-1
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    tau_min: float = 0.99
    kappa_eps: float = 10.0
    gamma_theta: float = 1e-5
    gamma_phi: float = 1e-5
    eta_phi: float = 1e-4
    delta_w0: float = 1e-8
    delta_c: float = 1e-8
    max_ls: int = 24
    polish: bool = True
    mu_strategy: str = "monotone"  # or "adaptive" (LOQO-style centering)
    warm_start_duals: bool = True
    log_every: int = 0  # 0 disables per-iteration logging


def _push_inside(v, lb, ub, frac=1e-2, floor=1e-6):
    """Move a point strictly inside its box (IPOPT-style push)."""
    v = np.asarray(v, dtype=float).copy()
    span = np.minimum(ub - lb, 1.0)
    pad = np.maximum(floor, frac * span)
    lo_f = lb > -_BIG
    hi_f = ub < _BIG
    both = lo_f & hi_f
    pad = np.where(both, np.minimum(pad, 0.25 * (ub - lb)), pad)
    v = np.where(lo_f, np.maximum(v, lb + pad), v)
    v = np.where(hi_f, np.minimum(v, ub - pad), v)
    return v


def solve_nlp(problem: NlpProblem, options: IpmOptions | None = None) -> NlpSolution:
    opts = options or IpmOptions()
    t_start = time.perf_counter()
    cost, grad, cons, jac = problem.compiled()

    n = problem.n
    m = problem.m
    eq = np.isclose(problem.c_lb, problem.c_ub)
    ineq = ~eq
    ms = int(np.sum(ineq))

    # combined primal z = (x, s); slack s mirrors the inequality rows
    zl = np.concatenate([problem.x_lb, problem.c_lb[ineq]])
    zu = np.concatenate([problem.x_ub, problem.c_ub[ineq]])
    zl = np.where(np.isfinite(zl), zl, -_BIG)
    zu = np.where(np.isfinite(zu), zu, _BIG)
    lo_f = zl > -_BIG
    hi_f = zu < _BIG

    exact_hessian = problem.hessian_mode == "exact"

    def hessian_block(x):
        Hx = problem.hessian_at(x) if exact_hessian else problem.hessian()
        Hz = sp.lil_matrix((n + ms, n + ms))
        Hz[:n, :n] = sp.csr_matrix(np.atleast_2d(Hx))
        return Hz.tocsr()

    Hz = hessian_block(problem.x0)

    def residual_c(x, s):
        c = cons(x)
        r = np.empty(m)
        r[eq] = c[eq] - problem.c_lb[eq]
        r[ineq] = c[ineq] - s
        return r, c

    # constant slack block of the combined Jacobian [J(x) | -E_ineq]
    slack_block = sp.csr_matrix(
        (-np.ones(ms), (np.where(ineq)[0], np.arange(ms))), shape=(m, ms))

    def jac_z(x):
        return sp.hstack([sp.csr_matrix(jac(x)), slack_block], format="csr")

    def barrier_value(x, s, mu):
        z = np.concatenate([x, s])
        val = cost(x)
        if mu > 0:
            dl = z[lo_f] - zl[lo_f]
            du = zu[hi_f] - z[hi_f]
            if np.any(dl <= 0) or np.any(du <= 0):
                return np.inf
            val -= mu * (np.sum(np.log(dl)) + np.sum(np.log(du)))
        return val

    # -- initialization ------------------------------------------------------
    x = _push_inside(problem.x0, zl[:n], zu[:n])
    c0 = cons(x)
    s = _push_inside(c0[ineq], zl[n:], zu[n:])
    z = np.concatenate([x, s])
    mu = opts.mu0
    tau = max(opts.tau_min, 1.0 - mu)
    zL = np.where(lo_f, mu / np.maximum(z - zl, 1e-8), 0.0)
    zU = np.where(hi_f, mu / np.maximum(zu - z, 1e-8), 0.0)
    y = np.zeros(m)
    if opts.warm_start_duals and m > 0:
        # least-squares multiplier estimate at the start point
        Jz0 = jac_z(x)
        g0 = np.concatenate([grad(x), np.zeros(ms)]) - zL + zU
        A = (Jz0 @ Jz0.T + 1e-8 * sp.eye(m)).tocsc()
        try:
            y = spla.splu(A).solve(-(Jz0 @ g0))
            if np.abs(y).max(initial=0.0) > 1e3:
                y = np.zeros(m)
        except RuntimeError:
            y = np.zeros(m)
    delta_w = 0.0

    filt: list[tuple[float, float]] = []
    best = None
    status = "max_iter"
    message = ""
    it = 0

    for it in range(1, opts.max_iter + 1):
        z = np.concatenate([x, s])
        r_c, c_raw = residual_c(x, s)
        g = grad(x)
        Jz = jac_z(x)
        if exact_hessian:
            Hz = hessian_block(x)
        grad_L = np.concatenate([g, np.zeros(ms)]) + Jz.T @ y - zL + zU
        comp_l = np.where(lo_f, (z - zl) * zL, 0.0)
        comp_u = np.where(hi_f, (zu - z) * zU, 0.0)

        s_d = max(100.0, (np.abs(y).sum() + np.abs(zL).sum() + np.abs(zU).sum())
                  / max(1, m + lo_f.sum() + hi_f.sum())) / 100.0
        err_dual = np.abs(grad_L).max(initial=0.0) / s_d
        err_feas = np.abs(r_c).max(initial=0.0)
        err_comp0 = max(np.abs(comp_l).max(initial=0.0),
                        np.abs(comp_u).max(initial=0.0)) / s_d
        kkt0 = max(err_dual, err_feas, err_comp0)
        if opts.log_every and it % opts.log_every == 0:
            logger.info("%s it=%d f=%.6e kkt=%.2e feas=%.2e mu=%.1e",
                        problem.name, it, cost(x), kkt0, err_feas, mu)
        theta = np.abs(r_c).sum()
        best_key = (max(err_feas, opts.tol), cost(x))
        if best is None or best_key < best[:2]:
            best = (*best_key, x.copy(), s.copy(), y.copy(), zL.copy(), zU.copy())

        if kkt0 <= opts.tol:
            status = "optimal"
            break

        # barrier parameter update
        mu_floor = opts.tol / 10.0
        if opts.mu_strategy == "adaptive":
            comp = np.concatenate([comp_l[lo_f], comp_u[hi_f]])
            if comp.size:
                avg = comp.mean()
                xi = comp.min() / max(avg, 1e-300)
                sigma = 0.1 * min(0.05 * (1.0 - xi) / max(xi, 1e-12), 2.0) ** 3
                mu = float(np.clip(sigma * avg, mu_floor, opts.mu0))
            else:
                mu = mu_floor
            tau = max(opts.tau_min, 1.0 - mu)
        else:
            err_comp_mu = max(
                np.abs(comp_l - np.where(lo_f, mu, 0.0)).max(initial=0.0),
                np.abs(comp_u - np.where(hi_f, mu, 0.0)).max(initial=0.0)) / s_d
            while mu > mu_floor and \
                    max(err_dual, err_feas, err_comp_mu) <= opts.kappa_eps * mu:
                mu = max(mu_floor, min(opts.kappa_mu * mu, mu ** opts.theta_mu))
                tau = max(opts.tau_min, 1.0 - mu)
                err_comp_mu = max(
                    np.abs(comp_l - np.where(lo_f, mu, 0.0)).max(initial=0.0),
                    np.abs(comp_u - np.where(hi_f, mu, 0.0)).max(initial=0.0)) / s_d

        # KKT solve with primal regularization retries
        dl = np.where(lo_f, z - zl, 1.0)
        du = np.where(hi_f, zu - z, 1.0)
        sigma = np.where(lo_f, zL / dl, 0.0) + np.where(hi_f, zU / du, 0.0)
        rhs_top = -(np.concatenate([g, np.zeros(ms)]) + Jz.T @ y) \
            + np.where(lo_f, mu / dl, 0.0) - np.where(hi_f, mu / du, 0.0)
        rhs = np.concatenate([rhs_top, -r_c])

        solved = False
        dw = delta_w
        for attempt in range(12):
            W = Hz + sp.diags(sigma + dw + opts.delta_w0)
            K = sp.bmat([[W, Jz.T], [Jz, -opts.delta_c * sp.eye(m)]], format="csc")
            try:
                lu = spla.splu(K)
                step = lu.solve(rhs)
            except RuntimeError:
                dw = max(1e-8, 10.0 * dw) if dw else 1e-8
                continue
            if not np.all(np.isfinite(step)):
                dw = max(1e-8, 10.0 * dw) if dw else 1e-8
                continue
            solved = True
            break
        if not solved:
            status = "numeric_error"
            message = "KKT factorization failed"
            break
        delta_w = dw * 0.33 if dw > 1e-10 else 0.0
        dz = step[:n + ms]
        dy = step[n + ms:]
        dzL = np.where(lo_f, mu / dl - zL - sigma_part(zL, dl, dz), 0.0)
        dzU = np.where(hi_f, mu / du - zU + sigma_part(zU, du, dz), 0.0)

        # fraction to boundary
        alpha_max = 1.0
        neg = dz < 0
        if np.any(neg & lo_f):
            alpha_max = min(alpha_max, np.min(
                -tau * dl[neg & lo_f] / dz[neg & lo_f]))
        pos = dz > 0
        if np.any(pos & hi_f):
            alpha_max = min(alpha_max, np.min(
                tau * du[pos & hi_f] / dz[pos & hi_f]))
        alpha_z = 1.0
        for v, dv in ((zL, dzL), (zU, dzU)):
            negv = dv < 0
            if np.any(negv & (v > 0)):
                alpha_z = min(alpha_z, np.min(
                    -tau * v[negv & (v > 0)] / dv[negv & (v > 0)]))

        # filter line search on (theta, phi)
        phi0 = barrier_value(x, s, mu)
        dphi = (np.concatenate([g, np.zeros(ms)])
                - np.where(lo_f, mu / dl, 0.0)
                + np.where(hi_f, mu / du, 0.0)) @ dz
        alpha = alpha_max
        accepted = False
        for _ in range(opts.max_ls):
            z_t = z + alpha * dz
            x_t, s_t = z_t[:n], z_t[n:]
            r_t, _ = residual_c(x_t, s_t)
            theta_t = np.abs(r_t).sum()
            phi_t = barrier_value(x_t, s_t, mu)
            if not np.isfinite(phi_t):
                alpha *= 0.5
                continue
            in_filter = any(theta_t >= th_f and phi_t >= ph_f for th_f, ph_f in filt)
            if in_filter:
                alpha *= 0.5
                continue
            switch = (dphi < 0) and (theta <= opts.tol * 10)
            if switch:
                ok = phi_t <= phi0 + opts.eta_phi * alpha * dphi
            else:
                ok = (theta_t <= (1 - opts.gamma_theta) * theta) or \
                     (phi_t <= phi0 - opts.gamma_phi * theta)
            if ok:
                if not switch:
                    filt.append(((1 - opts.gamma_theta) * theta,
                                 phi0 - opts.gamma_phi * theta))
                    if len(filt) > 200:
                        filt.pop(0)
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if delta_w < 1e6:
                delta_w = max(1e-6, delta_w * 100.0)
                filt.clear()
                continue
            status = "line_search_failed"
            message = f"line search failed at iteration {it}"
            break

        x = x + alpha * dz[:n]
        s = s + alpha * dz[n:]
        y = y + alpha * dy
        zL = np.where(lo_f, np.clip(zL + alpha_z * dzL, 1e-14, 1e14), 0.0)
        zU = np.where(hi_f, np.clip(zU + alpha_z * dzU, 1e-14, 1e14), 0.0)
        # dual safeguard keeps bound multipliers near mu/(slack)
        dl = np.where(lo_f, np.maximum(x_s_concat(x, s) - zl, 1e-14), 1.0)
        du = np.where(hi_f, np.maximum(zu - x_s_concat(x, s), 1e-14), 1.0)
        kap = 1e10
        zL = np.where(lo_f, np.clip(zL, mu / (kap * dl), kap * mu / dl), 0.0)
        zU = np.where(hi_f, np.clip(zU, mu / (kap * du), kap * mu / du), 0.0)

    else:
        it = opts.max_iter

    if status != "optimal" and best is not None:
        _, _, x, s, y, zL, zU = best

    if opts.polish and status == "optimal":
        x = _polish_equalities(problem, cons, jac, x, eq)

    r_c, _ = residual_c(x, s)
    c_final = cons(x)
    viol = float(np.maximum(c_final - problem.c_ub, 0.0).max(initial=0.0))
    viol = max(viol, float(np.maximum(problem.c_lb - c_final, 0.0).max(initial=0.0)))
    g = grad(x)
    Jz = jac_z(x)
    grad_L = np.concatenate([g, np.zeros(ms)]) + Jz.T @ y - zL + zU
    kkt = max(float(np.abs(grad_L).max(initial=0.0)), viol)
    groups = problem.group_residuals(x)
    return NlpSolution(
        x=x, status=status, iterations=it, objective=float(cost(x)),
        kkt_error=kkt, constraint_violation=viol, multipliers=y,
        bound_multipliers=(zL, zU), group_residuals=groups,
        solve_time=time.perf_counter() - t_start, message=message)


def sigma_part(zv, dv, dz):
    return zv / dv * dz


def x_s_concat(x, s):
    return np.concatenate([x, s])


def _polish_equalities(problem, cons, jac, x, eq, max_steps: int = 3):
    """Gauss-Newton projection onto the equality manifold.

    Runs after convergence to push equality residuals toward machine
    precision; steps are tiny (within the solver tolerance), so inequality
    margins survive.
    """
    target = problem.c_lb
    for _ in range(max_steps):
        c = cons(x)
        r = c[eq] - target[eq]
        if np.abs(r).max(initial=0.0) <= 1e-12:
            break
        J = jac(x)[eq]
        JJt = J @ J.T + 1e-12 * np.eye(J.shape[0])
        try:
            w = np.linalg.solve(JJt, r)
        except np.linalg.LinAlgError:
            break
        dx = -J.T @ w
        if np.linalg.norm(dx) > 1e-3:
            break
        x = np.clip(x + dx, problem.x_lb, problem.x_ub)
    return x
