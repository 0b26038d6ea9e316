"""Finite-difference oracles for sparse derivatives."""

import numpy as np
import scipy.sparse as sp


def color_columns(pattern: sp.spmatrix) -> np.ndarray:
    """Greedy grouping of columns that share no nonzero row."""
    pat = sp.csc_matrix(pattern, dtype=bool)
    groups = np.full(pat.shape[1], -1)
    taken = []  # rows used by each group
    for c in range(pat.shape[1]):
        rows = set(pat.indices[pat.indptr[c]:pat.indptr[c + 1]].tolist())
        for g, used in enumerate(taken):
            if not used & rows:
                used |= rows
                groups[c] = g
                break
        else:
            taken.append(set(rows))
            groups[c] = len(taken) - 1
    return groups


def fd_sparse(fun, x, pattern, h=1e-6):
    """Central differences of ``fun`` compressed by column grouping.

    Returns ``(estimate, leak)``: the estimate on ``pattern`` and the largest
    finite-difference value that landed on a row no column of its group
    claims, which exposes entries missing from the pattern.
    """
    pat = sp.csc_matrix(pattern, dtype=bool)
    groups = color_columns(pat)
    rows_out, cols_out, vals = [], [], []
    leak = 0.0
    for g in range(groups.max() + 1):
        cols = np.flatnonzero(groups == g)
        step = np.zeros_like(x)
        step[cols] = h * np.maximum(1.0, np.abs(x[cols]))
        diff = (np.asarray(fun(x + step)) - np.asarray(fun(x - step)))
        claimed = np.zeros(len(diff), dtype=bool)
        for c in cols:
            r = pat.indices[pat.indptr[c]:pat.indptr[c + 1]]
            rows_out.append(r)
            cols_out.append(np.full(len(r), c))
            vals.append(diff[r] / (2 * step[c]))
            claimed[r] = True
        if (~claimed).any():
            leak = max(leak, float(np.max(np.abs(diff[~claimed]) / (2 * h))))
    est = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows_out), np.concatenate(cols_out))),
                        shape=pat.shape)
    return est, leak


def relative_mismatch(analytic: sp.spmatrix, estimate: sp.spmatrix) -> float:
    """Largest entrywise error scaled by ``max(|entry|, 1)``."""
    a = sp.csr_matrix(analytic)
    e = sp.csr_matrix(estimate)
    diff = abs(a - e).tocoo()
    if diff.nnz == 0:
        return 0.0
    scale = np.maximum(np.abs(np.asarray(a[diff.row, diff.col]).ravel()), 1.0)
    return float(np.max(diff.data / scale))


def random_point(problem, rng, spread=0.1):
    """Interior point near the problem's start, away from kinks at zero flux."""
    x = problem.initial_point()
    lo, hi = problem.x_lb, problem.x_ub
    width = np.where(np.isfinite(hi - lo), hi - lo, 1.0)
    x = x + spread * width * rng.uniform(-1, 1, x.size)
    x = np.where(np.abs(x) < 1e-3, 1e-3 + 0.05 * rng.uniform(size=x.size), x)
    fixed = lo == hi
    inner_lo = np.where(np.isfinite(lo), lo + 1e-3 * width, -np.inf)
    inner_hi = np.where(np.isfinite(hi), hi - 1e-3 * width, np.inf)
    x = np.clip(x, inner_lo, inner_hi)
    x[fixed] = lo[fixed]
    return x


def derivative_errors(problem, x, lagrange, h=1e-6):
    """Jacobian and Lagrangian-Hessian mismatches against finite differences."""
    rows, cols = problem.jacobian_structure()
    jpat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(problem.m, problem.n))
    jac = problem.jacobian(x)
    jfd, jleak = fd_sparse(problem.eval_g, x, jpat, h)

    def lagrangian_gradient(z):
        return problem.eval_grad_f(z) + problem.jacobian(z).T @ lagrange

    hess = problem.hessian(x, lagrange)
    hr, hc = problem.hessian_structure()
    hpat = sp.csr_matrix((np.ones(len(hr)), (hr, hc)), shape=(problem.n, problem.n))
    hpat = ((hpat + hpat.T) != 0).astype(float)
    hfd, hleak = fd_sparse(lagrangian_gradient, x, hpat, h)
    return {
        "jacobian": relative_mismatch(jac, jfd),
        "jacobian_leak": jleak,
        "hessian": relative_mismatch(hess, hfd),
        "hessian_leak": hleak,
    }
