"""Deterministic numerical kernels shared across the package.

All transforms use the unitary DFT convention ``F[m, k] = exp(-2j*pi*m*k/n) / sqrt(n)``.
Eigen- and singular-vectors are phase-normalized so that the first
non-negligible component of each vector is real and positive, which makes
results reproducible across runs and platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import (
    BracketError,
    ContractError,
    ConvergenceError,
    InfeasibleError,
    InvalidDimensionError,
    ValidationError,
)

STRUCT_TOL = 1e-9
KKT_TOL = 1e-6


def unitary_dft(n: int) -> np.ndarray:
    """Return the unitary DFT matrix of size ``n``.

    Parameters
    ----------
    n : int
        Transform length, at least 1.

    Returns
    -------
    numpy.ndarray
        Complex ``(n, n)`` matrix with entries ``exp(-2j*pi*m*k/n)/sqrt(n)``.
    """
    n = int(n)
    if n < 1:
        raise InvalidDimensionError(f"DFT size must be >= 1, got {n}")
    idx = np.arange(n)
    # reduce the exponent modulo n before scaling to keep phases exact for large n
    phase = np.outer(idx, idx) % n
    return np.exp(-2j * np.pi * phase / n) / math.sqrt(n)


def _phase_factors(vectors: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Unit phases that make the first non-negligible entry of each column real positive."""
    rot = np.ones(vectors.shape[1], dtype=complex)
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        scale = np.max(np.abs(col)) if col.size else 0.0
        if scale == 0.0:
            continue
        first = np.flatnonzero(np.abs(col) > rel_tol * scale)[0]
        rot[j] = np.conj(col[first]) / abs(col[first])
    return rot


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its first non-negligible entry is real positive."""
    return np.asarray(vectors, dtype=complex) * _phase_factors(vectors)


def _as_finite_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidDimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def hermitian_eig(a, tol: float = STRUCT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Parameters
    ----------
    a : array_like
        Square matrix, Hermitian within ``tol`` relative to its norm.
    tol : float
        Hermitian-ness tolerance.

    Returns
    -------
    q : numpy.ndarray
        Unitary matrix of eigenvectors (columns), phase-normalized.
    lam : numpy.ndarray
        Real eigenvalues sorted in descending order.
    """
    a = _as_finite_matrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"matrix must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.conj().T)) > tol * scale:
        raise ValidationError("matrix is not Hermitian within tolerance")
    herm = 0.5 * (a + a.conj().T)
    lam, q = np.linalg.eigh(herm)
    order = np.argsort(-lam, kind="stable")
    return _fix_phases(q[:, order]), lam[order]


def complex_svd(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full singular value decomposition ``A = U diag(s) V^H``.

    Returns
    -------
    u : numpy.ndarray
        ``(m, m)`` unitary matrix.
    s : numpy.ndarray
        ``min(m, n)`` singular values, descending.
    v : numpy.ndarray
        ``(n, n)`` unitary matrix (not its conjugate transpose).
    """
    a = _as_finite_matrix(a, "A").astype(complex)
    u, s, vh = np.linalg.svd(a, full_matrices=True)
    v = vh.conj().T
    k = s.size
    # the same phase applied to paired columns keeps A = U S V^H intact
    rot = _phase_factors(u[:, :k])
    u[:, :k] *= rot
    v[:, :k] *= rot
    u[:, k:] = _fix_phases(u[:, k:])
    v[:, k:] = _fix_phases(v[:, k:])
    return u, s, v


def bisect_water_level(
    evaluate: Callable[[float], float],
    target: float,
    lo: float,
    hi: float,
    tol: float = 1e-10,
    precision: float | None = None,
) -> float:
    """Find ``mu`` in ``[lo, hi]`` with ``evaluate(mu)`` equal to ``target``.

    Parameters
    ----------
    evaluate : callable
        Monotone nondecreasing scalar function.
    target : float
        Level to reach.
    lo, hi : float
        Bracket with ``evaluate(lo) <= target <= evaluate(hi)``.
    tol : float
        Acceptable ``|evaluate(mu) - target|``.
    precision : float, optional
        Smallest bracket width worth resolving. Defaults to a few ulps of the
        bracket, which bounds the iteration count by about 55.

    Returns
    -------
    float
        The located level.
    """
    lo, hi = float(lo), float(hi)
    if not hi >= lo:
        raise BracketError(f"empty bracket [{lo}, {hi}]")
    f_lo, f_hi = evaluate(lo), evaluate(hi)
    if f_lo > f_hi:
        raise ContractError("evaluate(lo) > evaluate(hi); function is not nondecreasing")
    if target < f_lo - tol or target > f_hi + tol:
        raise BracketError(f"target {target} outside [{f_lo}, {f_hi}]")
    if abs(f_lo - target) <= tol:
        return lo
    if abs(f_hi - target) <= tol:
        return hi
    if precision is None:
        precision = 4 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi))
    n_iter = max(1, math.ceil(math.log2(max(hi - lo, precision) / precision))) + 2
    best, best_err = lo, abs(f_lo - target)
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        f_mid = evaluate(mid)
        err = abs(f_mid - target)
        if err < best_err:
            best, best_err = mid, err
        if err <= tol:
            return mid
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(
        "bisection exhausted its iteration budget; function may be discontinuous",
        residual=best_err,
        iterate=best,
    )


@dataclass
class QpProblem:
    """Convex QP ``min 0.5 x'Hx + c'x`` s.t. ``A_eq x = b_eq``, ``A_in x <= b_in``, ``lb <= x <= ub``.

    Any constraint block may be omitted. ``H`` must be symmetric positive
    semidefinite within ``1e-9`` relative to its norm.
    """

    h: np.ndarray
    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        self.h = np.atleast_2d(np.asarray(self.h, dtype=float))
        n = self.h.shape[0]
        if self.h.shape != (n, n) or n < 1:
            raise InvalidDimensionError(f"H must be square and non-empty, got {self.h.shape}")
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        if self.c.size != n:
            raise InvalidDimensionError("linear term length does not match H")
        if not (np.all(np.isfinite(self.h)) and np.all(np.isfinite(self.c))):
            raise ValidationError("QP data must be finite")
        scale = max(1.0, float(np.max(np.abs(self.h))))
        if np.max(np.abs(self.h - self.h.T)) > STRUCT_TOL * scale:
            raise ValidationError("H is not symmetric")
        self.h = 0.5 * (self.h + self.h.T)
        if np.linalg.eigvalsh(self.h)[0] < -STRUCT_TOL * scale:
            raise ValidationError("H is not positive semidefinite")
        self.a_eq, self.b_eq = self._block(self.a_eq, self.b_eq, n, "equality")
        self.a_in, self.b_in = self._block(self.a_in, self.b_in, n, "inequality")
        self.lb = self._bound(self.lb, n, -np.inf)
        self.ub = self._bound(self.ub, n, np.inf)
        if np.any(self.lb > self.ub):
            raise InfeasibleError("lower bound exceeds upper bound", {"bounds": True})

    @staticmethod
    def _block(a, b, n, what):
        if a is None:
            return np.zeros((0, n)), np.zeros(0)
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if a.shape[1] != n or a.shape[0] != b.size:
            raise InvalidDimensionError(f"{what} constraint dimensions are inconsistent")
        return a, b

    @staticmethod
    def _bound(v, n, default):
        if v is None:
            return np.full(n, default)
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != n:
            raise InvalidDimensionError("bound length does not match H")
        return v

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.h @ x + self.c @ x)

    def all_inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack general inequalities and finite box bounds as ``G x <= g``."""
        eye = np.eye(self.n)
        lo = np.isfinite(self.lb)
        hi = np.isfinite(self.ub)
        g_mat = np.vstack([self.a_in, -eye[lo], eye[hi]])
        g_vec = np.concatenate([self.b_in, -self.lb[lo], self.ub[hi]])
        return g_mat, g_vec

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        g_mat, g_vec = self.all_inequalities()
        v_in = np.max(g_mat @ x - g_vec, initial=0.0)
        v_eq = np.max(np.abs(self.a_eq @ x - self.b_eq), initial=0.0)
        return float(max(v_in, v_eq, 0.0))


@dataclass
class QpResult:
    """Solution of :func:`solve_qp` with optimality diagnostics."""

    x: np.ndarray
    objective: float
    kkt_residual: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    iterations: int
    active: list = field(default_factory=list)


def _normalize_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(a, axis=1)
    keep = norms > 0
    if np.any(~keep) and np.any(b[~keep] < -STRUCT_TOL):
        raise InfeasibleError("constraint row 0'x <= b with b < 0", {"zero_row": True})
    return a[keep] / norms[keep, None], b[keep] / norms[keep]


def _feasible_start(a_eq, b_eq, g_mat, g_vec, n):
    """Elastic LP: minimize total violation; zero optimum means feasible."""
    m_e, m_i = a_eq.shape[0], g_mat.shape[0]
    n_var = n + 2 * m_e + m_i
    cost = np.concatenate([np.zeros(n), np.ones(2 * m_e + m_i)])
    a_eq_lp = np.hstack([a_eq, np.eye(m_e), -np.eye(m_e), np.zeros((m_e, m_i))]) if m_e else None
    a_ub_lp = np.hstack([g_mat, np.zeros((m_i, 2 * m_e)), -np.eye(m_i)]) if m_i else None
    bounds = [(None, None)] * n + [(0, None)] * (n_var - n)
    res = linprog(
        cost,
        A_ub=a_ub_lp,
        b_ub=g_vec if m_i else None,
        A_eq=a_eq_lp,
        b_eq=b_eq if m_e else None,
        bounds=bounds,
        method="highs-ds",
    )
    if res.status != 0:
        raise InfeasibleError(f"feasibility phase failed: {res.message}", {"lp_status": res.status})
    violation = float(res.fun)
    if violation > 1e-8:
        cert = {"min_total_violation": violation}
        if res.eqlin is not None and m_e:
            cert["eq_duals"] = np.asarray(res.eqlin.marginals)
        if res.ineqlin is not None and m_i:
            cert["ineq_duals"] = np.asarray(res.ineqlin.marginals)
        raise InfeasibleError(f"constraints are infeasible (min total violation {violation:.3e})", cert)
    return np.asarray(res.x[:n], dtype=float)


def _independent_subset(rows: np.ndarray, candidates, base: np.ndarray) -> list:
    chosen = []
    current = base
    rank = np.linalg.matrix_rank(current) if current.size else 0
    for i in candidates:
        trial = np.vstack([current, rows[i]]) if current.size else rows[i][None, :]
        r = np.linalg.matrix_rank(trial, tol=1e-10)
        if r > rank:
            chosen.append(i)
            current, rank = trial, r
    return chosen


def solve_qp(problem: QpProblem, tol: float = KKT_TOL, max_iter: int = 2000, full_output: bool = False):
    """Solve a linearly constrained convex QP with a primal active-set method.

    A phase-one elastic LP either certifies infeasibility or supplies a
    feasible vertex. The active-set loop then works in the null space of the
    working constraints and follows zero-curvature descent rays when the
    reduced Hessian is singular, so PSD (not only PD) Hessians are handled.

    Parameters
    ----------
    problem : QpProblem
    tol : float
        Bound on the scaled KKT residual at return.
    max_iter : int
        Active-set iteration budget.
    full_output : bool
        Return a :class:`QpResult` instead of the bare solution vector.

    Raises
    ------
    InfeasibleError
        With the minimal total violation as certificate.
    ConvergenceError
        When the budget is exhausted; carries the last residual and iterate.
    """
    n = problem.n
    h, c = problem.h, problem.c
    a_eq, b_eq = _normalize_rows(problem.a_eq, problem.b_eq) if problem.a_eq.size else (problem.a_eq, problem.b_eq)
    g_raw, gv_raw = problem.all_inequalities()
    g_mat, g_vec = _normalize_rows(g_raw, gv_raw) if g_raw.size else (g_raw, gv_raw)
    m_i = g_mat.shape[0]

    x = _feasible_start(a_eq, b_eq, g_mat, g_vec, n)
    h_scale = max(1.0, float(np.max(np.abs(h))))
    act_tol = 1e-9 * max(1.0, float(np.max(np.abs(x), initial=0.0)))

    eq_rows = _independent_subset(a_eq, range(a_eq.shape[0]), np.zeros((0, n)))
    a_eq_ind = a_eq[eq_rows]
    slack = g_vec - g_mat @ x
    near = [int(i) for i in np.argsort(slack) if slack[i] <= act_tol]
    working = _independent_subset(g_mat, near, a_eq_ind)

    zero_steps = 0
    # a full unblocked Newton step lands on the working-set minimizer; re-solving
    # there only yields roundoff steps when H is ill-conditioned
    on_minimizer = False
    for it in range(1, max_iter + 1):
        a_w = np.vstack([a_eq_ind, g_mat[working]]) if working else a_eq_ind
        grad = h @ x + c
        if a_w.shape[0]:
            _, sv, vt = np.linalg.svd(a_w)
            rank = int(np.sum(sv > 1e-10))
            z = vt[rank:].T
        else:
            z = np.eye(n)
        p = np.zeros(n)
        ray = False
        if z.shape[1] and not on_minimizer:
            hz = z.T @ h @ z
            gz = z.T @ grad
            ev, evec = np.linalg.eigh(0.5 * (hz + hz.T))
            coef = evec.T @ gz
            flat = ev <= 1e-11 * h_scale
            g_norm = max(1.0, float(np.max(np.abs(grad))))
            if np.any(flat & (np.abs(coef) > 1e-12 * g_norm)):
                # descent along a direction of zero curvature: move to a blocking constraint
                d = -(evec[:, flat] @ coef[flat])
                p = z @ d
                ray = True
            else:
                pz = -(evec[:, ~flat] @ (coef[~flat] / ev[~flat]))
                p = z @ pz
        step_norm = float(np.max(np.abs(p), initial=0.0))
        if not ray and step_norm <= 1e-13 * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            # stationary on the working set: inspect multipliers
            if a_w.shape[0]:
                lam = np.linalg.lstsq(a_w.T, -grad, rcond=None)[0]
            else:
                lam = np.zeros(0)
            mu = lam[a_eq_ind.shape[0]:]
            if mu.size == 0 or mu.min() >= -tol * 1e-3:
                return _finish(problem, x, a_eq, b_eq, g_mat, g_vec, working, eq_rows, it, tol, full_output, a_eq_ind)
            if zero_steps > 50:
                drop = int(np.flatnonzero(mu < -tol * 1e-3)[0])
            else:
                drop = int(np.argmin(mu))
            working.pop(drop)
            on_minimizer = False
            continue
        # ratio test against constraints outside the working set
        ap = g_mat @ p
        slack = g_vec - g_mat @ x
        cand = np.ones(m_i, dtype=bool)
        cand[working] = False
        cand &= ap > 1e-14 * max(1.0, step_norm)
        alpha = np.inf if ray else 1.0
        block = -1
        if np.any(cand):
            ratios = np.full(m_i, np.inf)
            ratios[cand] = np.maximum(slack[cand], 0.0) / ap[cand]
            j = int(np.argmin(ratios))
            if ratios[j] < alpha:
                alpha, block = float(ratios[j]), j
        if not np.isfinite(alpha):
            raise ConvergenceError("objective is unbounded below on the feasible set", residual=np.inf, iterate=x)
        zero_steps = zero_steps + 1 if alpha == 0.0 else 0
        x = x + alpha * p
        on_minimizer = block < 0 and not ray
        if block >= 0:
            working.append(block)
    residual = _kkt_residual(problem, x, a_eq, b_eq, g_mat, g_vec, working, a_eq_ind)[0]
    raise ConvergenceError(f"active-set QP did not converge in {max_iter} iterations", residual=residual, iterate=x)


def _kkt_residual(problem, x, a_eq, b_eq, g_mat, g_vec, working, a_eq_ind):
    grad = problem.h @ x + problem.c
    m_e = a_eq_ind.shape[0]
    a_w = np.vstack([a_eq_ind, g_mat[working]]) if working else a_eq_ind
    if a_w.shape[0]:
        lam = np.linalg.lstsq(a_w.T, -grad, rcond=None)[0]
    else:
        lam = np.zeros(0)
    nu = lam[:m_e]
    mu_full = np.zeros(g_mat.shape[0])
    mu_full[working] = np.maximum(lam[m_e:], 0.0)
    stat = grad + a_eq_ind.T @ nu + g_mat.T @ mu_full
    scale = max(1.0, float(np.max(np.abs(grad))), float(np.max(np.abs(problem.c))))
    primal = max(
        float(np.max(g_mat @ x - g_vec, initial=0.0)),
        float(np.max(np.abs(a_eq @ x - b_eq), initial=0.0)),
    )
    comp = float(np.max(np.abs(mu_full * (g_vec - g_mat @ x)), initial=0.0))
    dual = float(np.max(-lam[m_e:], initial=0.0))
    res = max(float(np.max(np.abs(stat))) / scale, primal, comp / scale, dual / scale)
    return res, nu, mu_full


def _finish(problem, x, a_eq, b_eq, g_mat, g_vec, working, eq_rows, it, tol, full_output, a_eq_ind):
    res, nu, mu = _kkt_residual(problem, x, a_eq, b_eq, g_mat, g_vec, working, a_eq_ind)
    if res > tol:
        raise ConvergenceError(f"KKT residual {res:.3e} exceeds tolerance {tol:.1e}", residual=res, iterate=x)
    if not full_output:
        return x
    return QpResult(
        x=x,
        objective=problem.objective(x),
        kkt_residual=res,
        eq_multipliers=nu,
        ineq_multipliers=mu,
        iterations=it,
        active=list(working),
    )
