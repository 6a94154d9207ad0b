"""Entropy-regularized linear maximization over the simplex with moment constraints.

Solves ``max_p  sum(p * c) - sum(p * log p)`` subject to ``A_eq p = b_eq`` and
``A_in p <= b_in``. The optimum is the Gibbs distribution
``p ∝ exp(c - A_eq' nu - A_in' mu)`` with ``mu >= 0``; the multipliers minimize
the convex dual ``log sum exp(c - A' lam) + lam' b``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConvergenceError, InfeasibleError


@dataclass(frozen=True)
class GibbsResult:
    probs: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    log_partition: float


def _gibbs(c, a, lam):
    z = c - lam @ a
    top = np.max(z)
    e = np.exp(z - top)
    total = e.sum()
    return e / total, top + np.log(total)


def _newton(c, a, b, lam0, tol, max_iter=200):
    """Minimize ``log sum exp(c - a' lam) + lam' b`` over unconstrained ``lam``."""
    lam = lam0.copy()
    p, lse = _gibbs(c, a, lam)
    f = lse + lam @ b
    for _ in range(max_iter):
        mean = a @ p
        grad = b - mean
        if np.max(np.abs(grad), initial=0.0) <= tol:
            return lam, p, True
        centered = a - mean[:, None]
        hess = (centered * p) @ centered.T
        reg = 1e-14 * max(1.0, float(np.trace(hess)))
        step = -np.linalg.lstsq(hess + reg * np.eye(hess.shape[0]), grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = lam + t * step
            p_c, lse_c = _gibbs(c, a, cand)
            f_c = lse_c + cand @ b
            # near the optimum f is flat to rounding, so also accept a smaller gradient
            g_c = np.max(np.abs(b - a @ p_c), initial=0.0)
            if f_c <= f + 1e-4 * t * (grad @ step) or g_c < (1 - 0.5 * t) * np.max(np.abs(grad)) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12:
            break
        lam, p, f = cand, p_c, f_c
    # rounding limits attainable accuracy; accept a modest multiple of tol
    return lam, p, np.max(np.abs(b - a @ p), initial=0.0) <= 100 * tol


def gibbs_with_moments(c, a_eq=None, b_eq=None, a_in=None, b_in=None, tol: float = 1e-11) -> GibbsResult:
    """Solve the constrained entropy-regularized problem.

    Parameters
    ----------
    c : array_like
        Per-atom scores.
    a_eq, b_eq : array_like, optional
        Equality moment constraints (rows are features).
    a_in, b_in : array_like, optional
        Inequality moment constraints ``a_in @ p <= b_in``.
    tol : float
        Moment residual tolerance (absolute, after row scaling).

    Raises
    ------
    InfeasibleError
        If no active set yields a consistent solution, which happens only
        when the constraints have no strictly feasible distribution.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    a_in = np.zeros((0, n)) if a_in is None else np.atleast_2d(np.asarray(a_in, dtype=float))
    b_in = np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float).reshape(-1)
    # scale rows so tolerances are comparable across features
    s_eq = np.maximum(np.max(np.abs(a_eq), axis=1, initial=0.0), 1e-300)
    s_in = np.maximum(np.max(np.abs(a_in), axis=1, initial=0.0), 1e-300)
    a_eq, b_eq = a_eq / s_eq[:, None], b_eq / s_eq
    a_in, b_in = a_in / s_in[:, None], b_in / s_in
    support = np.isfinite(c)
    # rows that no distribution can violate are never active
    binding = [i for i in range(a_in.shape[0]) if np.max(a_in[i, support]) > b_in[i]]
    scales_in = s_in
    a_in, b_in, s_in = a_in[binding], b_in[binding], s_in[binding]
    m_e, m_i = a_eq.shape[0], a_in.shape[0]
    best = None
    # enumerate active sets, smallest first; the first consistent one is optimal
    for size in range(m_i + 1):
        for active in itertools.combinations(range(m_i), size):
            act = list(active)
            rows = a_in[act][:, support]
            if np.any(b_in[act] <= rows.min(axis=1, initial=np.inf)) or np.any(b_in[act] >= rows.max(axis=1, initial=-np.inf)):
                continue
            a = np.vstack([a_eq, a_in[act]])
            b = np.concatenate([b_eq, b_in[act]])
            lam, p, ok = _newton(c, a, b, np.zeros(a.shape[0]), tol)
            if not ok:
                continue
            mu_act = lam[m_e:]
            if np.any(mu_act < -1e-10):
                continue
            inactive = [i for i in range(m_i) if i not in act]
            if inactive and np.any(a_in[inactive] @ p > b_in[inactive] + 100 * tol):
                continue
            mu = np.zeros(scales_in.size)
            mu[np.asarray(binding, dtype=int)[act]] = np.maximum(mu_act, 0.0) / s_in[act]
            lse = float(logsumexp(c - lam @ a))
            best = GibbsResult(p, lam[:m_e] / s_eq, mu, lse)
            break
        if best is not None:
            break
    if best is None:
        raise InfeasibleError("moment constraints admit no strictly feasible distribution", {"targets_eq": b_eq, "targets_in": b_in})
    return best


def blahut_arimoto_scores(w: np.ndarray, p: np.ndarray, log_w: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """BA exponent ``c_m = sum_j W_mj log(W_mj / r_j)`` and the mutual information (nats).

    ``w`` is a row-stochastic channel matrix (dense or scipy sparse CSR).
    """
    from scipy import sparse

    if sparse.issparse(w):
        r = np.asarray(w.T @ p).reshape(-1)
        coo = w.tocoo()
        # outputs unreachable under p only matter for atoms with zero mass
        vals = coo.data * (np.log(coo.data) - np.log(np.maximum(r[coo.col], 1e-300)))
        c = np.bincount(coo.row, weights=vals, minlength=w.shape[0])
    else:
        r = p @ w
        if log_w is None:
            with np.errstate(divide="ignore"):
                log_w = np.log(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(w > 0, w * (log_w - np.log(np.maximum(r, 1e-300))[None, :]), 0.0)
        c = terms.sum(axis=1)
    return c, float(p[p > 0] @ c[p > 0])


def check_ascent(trace, tol: float = 1e-10):
    diffs = np.diff(np.asarray(trace, dtype=float))
    if np.any(diffs < -tol):
        raise ConvergenceError("objective decreased during alternating maximization", residual=float(-diffs.min()))
