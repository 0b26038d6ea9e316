"""Primal-dual interior-point method for sparse nonlinear programs.

Solves ``min f(x)`` subject to ``g_lb <= g(x) <= g_ub`` and
``x_lb <= x <= x_ub``. Inequality rows get slack variables, fixed variables
are eliminated, and a log-barrier subproblem is followed with a monotone
decrease of the barrier parameter. Newton steps come from an LDL^T
factorization (qdldl, AMD ordering) of the symmetric indefinite KKT matrix
whose inertia is corrected by diagonal shifts. Steps are globalized by a
backtracking line search with second-order corrections, accepting trial
points either by an l1 merit function or by a filter on (infeasibility,
barrier objective).

Any object exposing ``n``, ``m``, ``x_lb``, ``x_ub``, ``g_lb``, ``g_ub``,
``eval_f``, ``eval_grad_f``, ``eval_g``, ``jacobian_structure``,
``eval_jac_g``, ``hessian_structure`` and ``eval_h`` can be solved.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import qdldl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

STATUSES = ("optimal", "max-iter", "infeasible-detected", "numerical-failure")


@dataclass
class SolverOptions:
    tol: float = 1e-6
    constr_viol_tol: float | None = None
    max_iter: int = 500
    mu_init: float = 0.1
    mu_decrease: float = 0.2
    mu_superlinear: float = 1.5
    barrier_tol_factor: float = 10.0
    tau_min: float = 0.99
    bound_push: float = 1e-2
    bound_frac: float = 1e-2
    kappa_sigma: float = 1e10
    delta_w_init: float = 1e-4
    delta_w_min: float = 1e-20
    delta_w_max: float = 1e40
    delta_w_grow_first: float = 100.0
    delta_w_grow: float = 8.0
    delta_w_shrink: float = 1.0 / 3.0
    delta_c_static: float = 1e-9
    max_refinement: int = 10
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    line_search: str = "filter"
    second_order_correction: bool = True
    max_soc: int = 4
    max_grad_scale: float = 100.0
    least_squares_multipliers: bool = True
    max_ls_failures: int = 6
    verbose: bool = False

    def __post_init__(self):
        if not (self.tol > 0 and self.mu_init > 0 and 0 < self.mu_decrease < 1):
            raise ValueError("tol, mu_init must be positive and mu_decrease in (0, 1)")
        if not 0 < self.tau_min < 1:
            raise ValueError("tau_min must lie in (0, 1)")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack must lie in (0, 1)")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.line_search not in ("merit", "filter"):
            raise ValueError(f"line_search must be 'merit' or 'filter', got {self.line_search!r}")


@dataclass
class SolverSolution:
    status: str
    x: np.ndarray
    objective: float
    constraint_multipliers: np.ndarray
    lower_bound_multipliers: np.ndarray
    upper_bound_multipliers: np.ndarray
    constraints: np.ndarray
    kkt: dict
    iterations: int
    log: list = field(default_factory=list)
    seconds: float = 0.0
    message: str = ""

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class KKTSystem:
    """Fixed-pattern symmetric KKT matrix ``[[W + D + dw I, J^T], [J, -dc I]]``.

    ``W`` is given as a lower-triangle pattern over ``n`` primal unknowns and
    ``J`` as a coordinate pattern of ``m`` rows. The upper triangle is stored
    in CSC form, which is what qdldl consumes.
    """

    def __init__(self, n: int, m: int, h_rows, h_cols, j_rows, j_cols):
        self.n, self.m = n, m
        size = n + m
        h_rows, h_cols = np.asarray(h_rows, dtype=np.int64), np.asarray(h_cols, dtype=np.int64)
        j_rows, j_cols = np.asarray(j_rows, dtype=np.int64), np.asarray(j_cols, dtype=np.int64)
        # upper triangle coordinates (row <= col)
        ur = np.concatenate([np.minimum(h_rows, h_cols), j_cols, np.arange(size)])
        uc = np.concatenate([np.maximum(h_rows, h_cols), n + j_rows, np.arange(size)])
        keys, self._slot = np.unique(uc * size + ur, return_inverse=True)
        cols = keys // size
        self._indices = (keys % size).astype(np.int32)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(cols, minlength=size))]).astype(np.int32)
        self._nh, self._nj = len(h_rows), len(j_rows)
        self._nnz = len(keys)
        self.size = size
        self._solver = None
        self._diag_slots = self._slot[self._nh + self._nj:]

    def upper(self, h_vals, j_vals, diag) -> sp.csc_matrix:
        data = np.bincount(self._slot, np.concatenate([h_vals, j_vals, diag]), minlength=self._nnz)
        return sp.csc_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(self.size, self.size))

    @staticmethod
    def full(upper: sp.csc_matrix) -> sp.csc_matrix:
        return (upper + upper.T - sp.diags(upper.diagonal())).tocsc()

    def factor(self, upper: sp.csc_matrix):
        """Factorize; returns ``(positive, negative, zero)`` pivot counts or ``None``."""
        try:
            if self._solver is None:
                self._solver = qdldl.Solver(upper, upper=True)
            else:
                self._solver.update(upper, upper=True)
            d = self._solver.factors()[1]
        except Exception as exc:  # qdldl raises on zero pivots
            log.debug("factorization failed: %s", exc)
            self._solver = None
            return None
        if not np.all(np.isfinite(d)):
            self._solver = None
            return None
        return int(np.sum(d > 0)), int(np.sum(d < 0)), int(np.sum(d == 0))

    def solve(self, rhs, target: sp.csc_matrix | None = None, max_refinement: int = 10):
        """Solve with the last factorization, refining against ``target`` (full matrix)."""
        sol = self._solver.solve(rhs)
        if target is None:
            return sol
        norm_rhs = max(np.max(np.abs(rhs)), 1e-300)
        best, best_res = sol, np.inf
        for _ in range(max_refinement + 1):
            res = rhs - target @ sol
            r = np.max(np.abs(res)) / norm_rhs
            if not np.isfinite(r):
                break
            if r < best_res:
                best, best_res = sol, r
            else:
                break
            if r < 1e-14:
                break
            sol = sol + self._solver.solve(res)
        if best_res > 1e-6:
            try:
                lu = spla.splu(target.tocsc())
                alt = lu.solve(rhs)
                alt_res = np.max(np.abs(rhs - target @ alt)) / norm_rhs
                if alt_res < best_res:
                    best, best_res = alt, alt_res
            except RuntimeError:
                pass
        self.last_residual = best_res
        return best


@dataclass
class Regularization:
    delta_w: float = 0.0
    delta_w_last: float = 0.0
    delta_c: float = 0.0


def factor_with_inertia(kkt: KKTSystem, h_vals, j_vals, primal_diag, opts: SolverOptions, state: Regularization,
                        delta_c: float = 0.0):
    """Shift the primal block until the inertia is ``(n, m, 0)``.

    Returns the target matrix used for refinement, or ``None`` when the
    shift exceeds its limit.
    """
    n, m = kkt.n, kkt.m
    dc_static = opts.delta_c_static if m else 0.0

    def attempt(dw):
        diag = np.concatenate([primal_diag + dw, np.full(m, -(delta_c + dc_static))])
        up = kkt.upper(h_vals, j_vals, diag)
        return kkt.factor(up), diag

    inertia, diag = attempt(0.0)
    dw = 0.0
    if inertia is None or inertia[0] != n or inertia[1] != m:
        if state.delta_w_last == 0.0:
            dw = opts.delta_w_init
        else:
            dw = max(opts.delta_w_min, opts.delta_w_shrink * state.delta_w_last)
        while True:
            inertia, diag = attempt(dw)
            if inertia is not None and inertia[0] == n and inertia[1] == m:
                break
            dw *= opts.delta_w_grow_first if state.delta_w_last == 0.0 else opts.delta_w_grow
            if dw > opts.delta_w_max:
                return None
        state.delta_w_last = dw
    state.delta_w = dw
    target_diag = diag.copy()
    target_diag[n:] = -delta_c
    return KKTSystem.full(kkt.upper(h_vals, j_vals, target_diag))


def kkt_solve(hessian, jacobian, rhs, opts: SolverOptions | None = None, state: Regularization | None = None):
    """Solve ``[[H, J^T], [J, 0]] d = rhs`` with inertia correction.

    ``hessian`` is a symmetric ``n x n`` and ``jacobian`` an ``m x n`` matrix
    (dense or sparse). Returns ``(d, state)``; ``state.delta_w`` reports the
    primal shift that was needed. Raises ``np.linalg.LinAlgError`` if the
    shift exceeds its limit.
    """
    opts = opts or SolverOptions()
    state = state or Regularization()
    H = sp.coo_matrix(sp.tril(sp.csr_matrix(hessian)))
    Jm = sp.coo_matrix(sp.csr_matrix(jacobian))
    n, m = H.shape[0], Jm.shape[0]
    kkt = KKTSystem(n, m, H.row, H.col, Jm.row, Jm.col)
    target = factor_with_inertia(kkt, H.data, Jm.data, np.zeros(n), opts, state)
    if target is None:
        raise np.linalg.LinAlgError("KKT matrix could not be regularized")
    return kkt.solve(np.asarray(rhs, dtype=float), target, opts.max_refinement), state


class CallbackProblem:
    """Small NLP defined by Python callables with dense derivatives.

    ``jac(x)`` returns an ``(m, n)`` array and ``hess(x, lagrange, obj_factor)``
    the ``(n, n)`` Hessian of ``obj_factor f + lagrange . g``.
    """

    def __init__(self, n, f, grad, x_lb=None, x_ub=None, g=None, jac=None, hess=None,
                 g_lb=None, g_ub=None, x0=None, m=0):
        self.n, self.m = n, m
        self._f, self._grad, self._g, self._jac, self._hess = f, grad, g, jac, hess
        self.x_lb = np.full(n, -np.inf) if x_lb is None else np.asarray(x_lb, dtype=float)
        self.x_ub = np.full(n, np.inf) if x_ub is None else np.asarray(x_ub, dtype=float)
        self.g_lb = np.zeros(m) if g_lb is None else np.asarray(g_lb, dtype=float)
        self.g_ub = np.zeros(m) if g_ub is None else np.asarray(g_ub, dtype=float)
        self.x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
        self._jr, self._jc = np.divmod(np.arange(m * n), n)
        self._hr, self._hc = np.tril_indices(n)

    def eval_f(self, x):
        return float(self._f(x))

    def eval_grad_f(self, x):
        return np.asarray(self._grad(x), dtype=float)

    def eval_g(self, x):
        return np.asarray(self._g(x), dtype=float).reshape(self.m) if self.m else np.zeros(0)

    def jacobian_structure(self):
        return self._jr, self._jc

    def eval_jac_g(self, x):
        return np.asarray(self._jac(x), dtype=float).reshape(-1) if self.m else np.zeros(0)

    def hessian_structure(self):
        return self._hr, self._hc

    def eval_h(self, x, lagrange, obj_factor=1.0):
        return np.asarray(self._hess(x, lagrange, obj_factor), dtype=float)[self._hr, self._hc]

    def initial_point(self):
        return self.x0.copy()


def default_initial_point(problem) -> np.ndarray:
    """The problem's own starting guess (or zeros), clipped into the variable bounds."""
    x = problem.initial_point() if hasattr(problem, "initial_point") else np.zeros(problem.n)
    return np.clip(np.asarray(x, dtype=float), problem.x_lb, problem.x_ub)


def _push(x, lo, hi, opts):
    """Move ``x`` strictly inside ``[lo, hi]``."""
    x = x.copy()
    has_lo, has_hi = np.isfinite(lo), np.isfinite(hi)
    width = np.where(has_lo & has_hi, hi - lo, np.inf)
    p_lo = np.minimum(opts.bound_push * np.maximum(1.0, np.abs(np.where(has_lo, lo, 0.0))), opts.bound_frac * width)
    p_hi = np.minimum(opts.bound_push * np.maximum(1.0, np.abs(np.where(has_hi, hi, 0.0))), opts.bound_frac * width)
    x = np.where(has_lo, np.maximum(x, lo + p_lo), x)
    x = np.where(has_hi, np.minimum(x, hi - p_hi), x)
    return x


class _Reformulated:
    """The problem over free variables plus inequality slacks with scaled rows."""

    def __init__(self, problem, x_start, opts):
        self.p = problem
        lo, hi = problem.x_lb, problem.x_ub
        self.free = np.flatnonzero(lo < hi)
        self.x_full = np.where(lo == hi, lo, x_start).astype(float)
        self.nx = len(self.free)
        eq = problem.g_lb == problem.g_ub
        self.eq_rows = np.flatnonzero(eq)
        self.in_rows = np.flatnonzero(~eq)
        self.m = problem.m
        self.ns = len(self.in_rows)
        self.nz = self.nx + self.ns
        self.lo = np.concatenate([lo[self.free], problem.g_lb[self.in_rows]])
        self.hi = np.concatenate([hi[self.free], problem.g_ub[self.in_rows]])
        self.has_lo, self.has_hi = np.isfinite(self.lo), np.isfinite(self.hi)
        self.rhs = np.where(eq, problem.g_lb, 0.0)
        pos = np.full(problem.n, -1)
        pos[self.free] = np.arange(self.nx)
        self.pos = pos
        jr, jc = problem.jacobian_structure()
        jr, jc = np.asarray(jr), np.asarray(jc)
        keep = pos[jc] >= 0
        self.j_keep = np.flatnonzero(keep)
        slack_row = np.full(self.m, -1)
        slack_row[self.in_rows] = np.arange(self.ns)
        self.j_rows = np.concatenate([jr[keep], self.in_rows])
        self.j_cols = np.concatenate([pos[jc[keep]], self.nx + np.arange(self.ns)])
        hr, hc = problem.hessian_structure()
        hr, hc = np.asarray(hr), np.asarray(hc)
        hkeep = (pos[hr] >= 0) & (pos[hc] >= 0)
        self.h_keep = np.flatnonzero(hkeep)
        self.h_rows, self.h_cols = pos[hr[hkeep]], pos[hc[hkeep]]
        self.obj_scale = 1.0
        self.row_scale = np.ones(self.m)
        self._jr_all = jr

    def x_of(self, z):
        x = self.x_full.copy()
        x[self.free] = z[: self.nx]
        return x

    def set_scaling(self, z, max_grad):
        x = self.x_of(z)
        gmax = np.max(np.abs(self.p.eval_grad_f(x)[self.free])) if self.nx else 0.0
        self.obj_scale = min(1.0, max_grad / gmax) if gmax > 0 else 1.0
        if self.m:
            jv = np.abs(self.p.eval_jac_g(x))[self.j_keep]
            rmax = np.zeros(self.m)
            np.maximum.at(rmax, self._jr_all[self.j_keep], jv)
            self.row_scale = np.where(rmax > max_grad, max_grad / np.maximum(rmax, 1e-300), 1.0)

    def f(self, z):
        return self.obj_scale * self.p.eval_f(self.x_of(z))

    def grad(self, z):
        out = np.zeros(self.nz)
        out[: self.nx] = self.obj_scale * self.p.eval_grad_f(self.x_of(z))[self.free]
        return out

    def raw_c(self, z):
        """Unscaled constraint residual (``g - rhs`` or ``g - s``)."""
        g = self.p.eval_g(self.x_of(z)) - self.rhs
        g[self.in_rows] -= z[self.nx:]
        return g

    def c(self, z):
        return self.row_scale * self.raw_c(z)

    def jac_vals(self, z):
        v = self.p.eval_jac_g(self.x_of(z))[self.j_keep]
        vals = np.concatenate([v, -np.ones(self.ns)])
        return vals * self.row_scale[self.j_rows]

    def jac(self, z, vals=None):
        vals = self.jac_vals(z) if vals is None else vals
        return sp.csr_matrix((vals, (self.j_rows, self.j_cols)), shape=(self.m, self.nz))

    def hess_vals(self, z, y, sigma):
        v = self.p.eval_h(self.x_of(z), y * self.row_scale, sigma * self.obj_scale)
        return np.asarray(v)[self.h_keep]


def solve(problem, opts: SolverOptions | None = None, x0=None) -> SolverSolution:
    """Solve ``problem``; see the module docstring for the method."""
    opts = opts or SolverOptions()
    t_start = time.perf_counter()
    cv_tol = opts.constr_viol_tol if opts.constr_viol_tol is not None else opts.tol
    x_start = default_initial_point(problem) if x0 is None else np.clip(np.asarray(x0, dtype=float),
                                                                       problem.x_lb, problem.x_ub)
    R = _Reformulated(problem, x_start, opts)
    nx, nz, m = R.nx, R.nz, R.m

    z = np.zeros(nz)
    z[:nx] = x_start[R.free]
    if R.ns:
        z[nx:] = np.clip(problem.eval_g(R.x_of(z))[R.in_rows], R.lo[nx:], R.hi[nx:])
    z = _push(z, R.lo, R.hi, opts)
    R.set_scaling(z, opts.max_grad_scale)

    lo, hi, has_lo, has_hi = R.lo, R.hi, R.has_lo, R.has_hi
    zl = np.where(has_lo, 1.0, 0.0)
    zu = np.where(has_hi, 1.0, 0.0)
    y = np.zeros(m)
    kkt = KKTSystem(nz, m, R.h_rows, R.h_cols, R.j_rows, R.j_cols)
    reg = Regularization()
    mu = opts.mu_init
    history = []

    def slack_lo(zz):
        return np.where(has_lo, zz - lo, 1.0)

    def slack_hi(zz):
        return np.where(has_hi, hi - zz, 1.0)

    def barrier(zz, fval):
        return fval - mu * (np.sum(np.log(slack_lo(zz)[has_lo])) + np.sum(np.log(slack_hi(zz)[has_hi])))

    def barrier_grad(zz, g):
        out = g.copy()
        out[has_lo] -= mu / (zz - lo)[has_lo]
        out[has_hi] += mu / (hi - zz)[has_hi]
        return out

    fval, grad, cval = R.f(z), R.grad(z), R.c(z)
    jvals = R.jac_vals(z)
    Jm = R.jac(z, jvals)

    if opts.least_squares_multipliers and m:
        try:
            ls = KKTSystem(nz, m, np.zeros(0, int), np.zeros(0, int), R.j_rows, R.j_cols)
            st = Regularization()
            tgt = factor_with_inertia(ls, np.zeros(0), jvals, np.ones(nz), opts, st)
            if tgt is not None:
                sol = ls.solve(np.concatenate([-(grad - zl + zu), np.zeros(m)]), tgt, 3)
                cand = sol[nz:]
                if np.all(np.isfinite(cand)) and np.max(np.abs(cand), initial=0.0) <= 1e3:
                    y = cand
        except Exception as exc:  # pragma: no cover - defensive
            log.debug("least-squares multipliers skipped: %s", exc)

    nu = 1.0
    filter_pts: list = []
    filter_mu = None
    theta_max = theta_min = None
    status, message = "max-iter", ""
    ls_failures = 0
    it = 0

    def errors(mu_val):
        sl, sh = slack_lo(z), slack_hi(z)
        rd = grad + Jm.T @ y - zl + zu
        s_max = 100.0
        nmult = m + 2 * nz
        sd = max(s_max, (np.sum(np.abs(y)) + np.sum(zl) + np.sum(zu)) / max(nmult, 1)) / s_max
        sc = max(s_max, (np.sum(zl) + np.sum(zu)) / max(2 * nz, 1)) / s_max
        comp = np.concatenate([(sl * zl - mu_val)[has_lo], (sh * zu - mu_val)[has_hi]])
        e_du = np.max(np.abs(rd), initial=0.0) / sd
        e_pr = np.max(np.abs(cval), initial=0.0)
        e_co = np.max(np.abs(comp), initial=0.0) / sc
        return e_du, e_pr, e_co

    while True:
        e_du, e_pr, e_co = errors(0.0)
        raw_viol = np.max(np.abs(R.raw_c(z)), initial=0.0)
        if max(e_du, e_pr, e_co) <= opts.tol and raw_viol <= cv_tol:
            status = "optimal"
            break
        if it >= opts.max_iter:
            status = "max-iter"
            break
        # barrier update
        while True:
            b_du, b_pr, b_co = errors(mu)
            if max(b_du, b_pr, b_co) > opts.barrier_tol_factor * mu:
                break
            new_mu = max(opts.tol / 10.0, min(opts.mu_decrease * mu, mu**opts.mu_superlinear))
            if new_mu >= mu:
                break
            mu = new_mu
        tau = max(opts.tau_min, 1.0 - mu)

        sl, sh = slack_lo(z), slack_hi(z)
        sigma = np.where(has_lo, zl / sl, 0.0) + np.where(has_hi, zu / sh, 0.0)
        hvals = R.hess_vals(z, y, 1.0)
        target = factor_with_inertia(kkt, hvals, jvals, sigma, opts, reg)
        if target is None:
            status, message = "numerical-failure", "inertia correction failed"
            break
        bgrad = barrier_grad(z, grad)
        rhs = -np.concatenate([bgrad + Jm.T @ y, cval])
        sol = kkt.solve(rhs, target, opts.max_refinement)
        dz, dy = sol[:nz], sol[nz:]
        if not np.all(np.isfinite(sol)):
            status, message = "numerical-failure", "non-finite Newton step"
            break
        dzl = np.where(has_lo, mu / sl - zl - (zl / sl) * dz, 0.0)
        dzu = np.where(has_hi, mu / sh - zu + (zu / sh) * dz, 0.0)

        def max_step(v, dv, mask):
            neg = mask & (dv < 0)
            if not np.any(neg):
                return 1.0
            return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))

        a_max = min(max_step(sl, dz, has_lo), max_step(sh, -dz, has_hi))
        a_dual = min(max_step(zl, dzl, has_lo), max_step(zu, dzu, has_hi))

        c_norm = np.sum(np.abs(cval))
        gd = float(bgrad @ dz)
        phi_bar = barrier(z, fval)
        if opts.line_search == "merit":
            H = sp.coo_matrix((hvals, (R.h_rows, R.h_cols)), shape=(nz, nz))
            dWd = float(dz @ (H @ dz) + dz @ (H.T @ dz) - np.sum(H.diagonal() * dz * dz))
            dWd += float(np.sum(sigma * dz * dz))
            if c_norm > 0:
                need = (gd + max(dWd, 0.0) / 2.0) / ((1.0 - 0.1) * c_norm)
                if nu < need:
                    nu = need + 1.0
            phi0 = phi_bar + nu * c_norm
            dphi = gd - nu * c_norm

            def acceptable(a, phi_t, theta_t):
                return phi_t + nu * theta_t <= phi0 + opts.armijo * a * min(dphi, 0.0) + 1e-14 * abs(phi0)
        else:
            if mu != filter_mu:
                filter_pts.clear()
                filter_mu = mu
            if theta_max is None:
                theta_max = 1e4 * max(1.0, c_norm)
                theta_min = 1e-4 * max(1.0, c_norm)

            def acceptable(a, phi_t, theta_t):
                if not np.isfinite(phi_t) or theta_t > theta_max:
                    return False
                if any(theta_t >= th and phi_t >= ph for th, ph in filter_pts):
                    return False
                switching = gd < 0 and a * (-gd) ** 2.3 > c_norm**1.1
                if c_norm <= theta_min and switching:
                    return phi_t <= phi_bar + opts.armijo * a * gd + 1e-14 * abs(phi_bar)
                return theta_t <= (1.0 - 1e-5) * c_norm or phi_t <= phi_bar - 1e-5 * c_norm

        alpha = a_max
        accepted = False
        trials = 0
        soc_tried = False
        for trials in range(1, opts.max_backtracks + 1):
            zt = z + alpha * dz
            try:
                ft, ct = R.f(zt), R.c(zt)
                phit, thetat = barrier(zt, ft), np.sum(np.abs(ct))
            except (FloatingPointError, ValueError):
                phit, thetat = np.inf, np.inf
            if np.isfinite(phit) and acceptable(alpha, phit, thetat):
                accepted = True
                break
            if (opts.second_order_correction and not soc_tried and trials == 1 and np.isfinite(phit)
                    and thetat >= c_norm):
                soc_tried = True
                c_soc, c_prev, a_soc = alpha * cval + ct, thetat, alpha
                for _ in range(opts.max_soc):
                    sol2 = kkt.solve(-np.concatenate([bgrad + Jm.T @ y, c_soc]), target, opts.max_refinement)
                    dz2 = sol2[:nz]
                    a2 = min(max_step(sl, dz2, has_lo), max_step(sh, -dz2, has_hi))
                    zs = z + a2 * dz2
                    try:
                        fs, cs = R.f(zs), R.c(zs)
                        phis, thetas = barrier(zs, fs), np.sum(np.abs(cs))
                    except (FloatingPointError, ValueError):
                        break
                    if np.isfinite(phis) and acceptable(a_soc, phis, thetas):
                        dz, dy = dz2, sol2[nz:]
                        dzl = np.where(has_lo, mu / sl - zl - (zl / sl) * dz, 0.0)
                        dzu = np.where(has_hi, mu / sh - zu + (zu / sh) * dz, 0.0)
                        a_dual = min(max_step(zl, dzl, has_lo), max_step(zu, dzu, has_hi))
                        alpha, zt, ft, ct = a2, zs, fs, cs
                        accepted = True
                        break
                    if not np.isfinite(thetas) or thetas > 0.99 * c_prev:
                        break
                    c_soc, c_prev, a_soc = a2 * c_soc + cs, thetas, a2
                if accepted:
                    break
            alpha *= opts.backtrack

        if accepted and opts.line_search == "filter":
            switching = gd < 0 and alpha * (-gd) ** 2.3 > c_norm**1.1
            armijo_step = switching and barrier(zt, ft) <= phi_bar + opts.armijo * alpha * gd + 1e-14 * abs(phi_bar)
            if not armijo_step:
                filter_pts.append(((1.0 - 1e-5) * c_norm, phi_bar - 1e-5 * c_norm))

        if not accepted:
            ls_failures += 1
            if ls_failures > opts.max_ls_failures:
                infeasible = np.max(np.abs(R.raw_c(z)), initial=0.0) > max(cv_tol, 1e-4)
                status = "infeasible-detected" if infeasible else "numerical-failure"
                message = "line search failed repeatedly"
                break
            # take a short step anyway and bias the next factorization towards descent
            alpha = min(a_max, 1e-2)
            zt = z + alpha * dz
            ft, ct = R.f(zt), R.c(zt)
            reg.delta_w_last = max(reg.delta_w_last, opts.delta_w_init) * 10.0
        else:
            ls_failures = 0

        z = zt
        y = y + alpha * dy
        zl = zl + a_dual * dzl
        zu = zu + a_dual * dzu
        sl, sh = slack_lo(z), slack_hi(z)
        zl = np.where(has_lo, np.clip(zl, mu / (opts.kappa_sigma * sl), opts.kappa_sigma * mu / sl), 0.0)
        zu = np.where(has_hi, np.clip(zu, mu / (opts.kappa_sigma * sh), opts.kappa_sigma * mu / sh), 0.0)
        fval, cval = ft, ct
        grad = R.grad(z)
        jvals = R.jac_vals(z)
        Jm = R.jac(z, jvals)
        it += 1
        entry = {
            "iter": it,
            "objective": fval / R.obj_scale,
            "inf_pr": float(np.max(np.abs(cval), initial=0.0)),
            "inf_du": float(e_du),
            "mu": float(mu),
            "alpha_pr": float(alpha),
            "alpha_du": float(a_dual),
            "delta_w": float(reg.delta_w),
            "trials": trials,
        }
        history.append(entry)
        if opts.verbose:
            log.info("%4d %+.8e pr %.2e du %.2e mu %.1e a %.2e dw %.1e", it, entry["objective"],
                     entry["inf_pr"], entry["inf_du"], mu, alpha, reg.delta_w)

    e_du, e_pr, e_co = errors(0.0)
    x = R.x_of(z)
    lam = y * R.row_scale / R.obj_scale
    zl_x = np.zeros(problem.n)
    zu_x = np.zeros(problem.n)
    zl_x[R.free] = zl[:nx] / R.obj_scale
    zu_x[R.free] = zu[:nx] / R.obj_scale
    return SolverSolution(
        status=status,
        x=x,
        objective=float(problem.eval_f(x)),
        constraint_multipliers=lam,
        lower_bound_multipliers=zl_x,
        upper_bound_multipliers=zu_x,
        constraints=problem.eval_g(x),
        kkt={
            "stationarity": float(e_du),
            "feasibility": float(e_pr),
            "complementarity": float(e_co),
            "constraint_violation": float(np.max(np.abs(R.raw_c(z)), initial=0.0)),
        },
        iterations=it,
        log=history,
        seconds=time.perf_counter() - t_start,
        message=message,
    )
