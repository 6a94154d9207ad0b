"""Probabilistic constellation shaping under a kurtosis cap.

The mutual information of a fixed-geometry alphabet over complex AWGN is
maximized over its probability vector, with the transmitted constellation
normalized to unit power and its fourth moment (kurtosis) capped at ``c0``.

Formulation
-----------
For an alphabet ``a`` and probabilities ``p`` with power ``P = sum p|a|^2``
the transmitted points are ``a / sqrt(P)``. The problem is therefore solved
as a one-dimensional search over ``P``; for fixed ``P`` the channel is fixed,
the constraints ``sum p|a|^2 = P`` and ``sum p|a|^4 <= c0 P^2`` are linear and
a constrained Blahut-Arimoto iteration finds the optimal ``p``. For the
alphabet's natural scale (``P`` = uniform power) this is the textbook
fixed-alphabet problem; letting ``P`` move keeps small caps feasible for
alphabets, such as 64-QAM, without a unit-modulus ring at that scale.

Symmetry
--------
Scores are averaged over orbits of multiplication by ``j``, so solutions are
invariant under 90 degree rotations; this zeroes the mean and the
pseudo-variance automatically.

Quadrature
----------
The output plane is discretized with a Gauss-Hermite product rule centered
on every alphabet point and importance-weighted against the uniform mixture.
Rows are renormalized, which turns the AWGN channel into an exact discrete
memoryless channel on which Blahut-Arimoto is exact.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .constellation import Constellation
from .errors import ConvergenceError, InfeasibleError, ValidationError
from .maxent import blahut_arimoto_scores, gibbs_with_moments

LOG2E = 1.0 / math.log(2.0)
DEFAULT_GH_ORDER = 16
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 5000
RING_DECIMALS = 9


@dataclass
class PcsProblem:
    """Shaping problem data.

    Parameters
    ----------
    alphabet : array_like
        Complex points (any scale).
    c0 : float
        Kurtosis cap, at least 1.
    snr : float
        Linear ``Es/N0`` with unit symbol energy.
    gh_order : int
        Gauss-Hermite points per real dimension.
    """

    alphabet: np.ndarray
    c0: float
    snr: float
    gh_order: int = DEFAULT_GH_ORDER

    def __post_init__(self):
        a = np.asarray(self.alphabet, dtype=complex).reshape(-1)
        if a.size < 2 or not np.all(np.isfinite(a)):
            raise ValidationError("alphabet needs at least two finite points")
        if np.max(np.abs(a)) == 0:
            raise ValidationError("alphabet cannot be normalized (all points at zero)")
        # natural scale: unit power under the uniform distribution
        self.alphabet = a / math.sqrt(float(np.mean(np.abs(a) ** 2)))
        if self.c0 < 1:
            raise InfeasibleError(f"kurtosis cap {self.c0} is below 1, the minimum for any distribution")
        if self.snr <= 0:
            raise ValidationError("snr must be positive")
        if self.gh_order < 2:
            raise ValidationError("quadrature order must be >= 2")


@dataclass
class PcsSolution:
    """Optimized probabilities and diagnostics.

    ``points`` are the transmitted (unit-power) points, ``scale_power`` the
    power of the natural-scale alphabet under ``probs``.
    """

    probs: np.ndarray
    points: np.ndarray
    mi: float
    kurtosis_achieved: float
    iterations: int
    converged: bool
    scale_power: float
    trace: list = field(default_factory=list)

    def constellation(self, label: str = "shaped") -> Constellation:
        return Constellation(self.points, self.probs, label)

    def to_dict(self) -> dict:
        return {
            "probs": self.probs.tolist(),
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "mi_bits": self.mi,
            "kurtosis": self.kurtosis_achieved,
            "iterations": self.iterations,
            "converged": self.converged,
            "scale_power": self.scale_power,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def rotation_orbits(points: np.ndarray, decimals: int = 9) -> np.ndarray:
    """Class label per point for the orbit under multiplication by ``j``.

    Points whose rotated images are not in the alphabet form singleton classes.
    """
    key = {}
    for i, z in enumerate(points):
        key[(round(z.real, decimals), round(z.imag, decimals))] = i
    labels = -np.ones(points.size, dtype=int)
    nxt = 0
    for i, z in enumerate(points):
        if labels[i] >= 0:
            continue
        labels[i] = nxt
        w = z
        for _ in range(3):
            w = w * 1j
            j = key.get((round(w.real, decimals), round(w.imag, decimals)))
            if j is not None and labels[j] < 0:
                labels[j] = nxt
        nxt += 1
    return labels


def _orbit_average(values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    sums = np.bincount(labels, weights=values)
    counts = np.bincount(labels)
    return (sums / counts)[labels]


class _Channel:
    """Discretized AWGN channel for a fixed set of transmitted points."""

    def __init__(self, points: np.ndarray, snr: float, gh_order: int, drop: float = 1e-15):
        n0 = 1.0 / snr
        t, w = np.polynomial.hermite.hermgauss(gh_order)
        ta, tb = np.meshgrid(t, t, indexing="ij")
        offsets = (math.sqrt(n0) * (ta + 1j * tb)).reshape(-1)
        weights = (np.outer(w, w) / math.pi).reshape(-1)
        m = points.size
        nodes = (points[:, None] + offsets[None, :]).reshape(-1)
        node_w = np.tile(weights, m) / m
        loglik = -np.abs(nodes[None, :] - points[:, None]) ** 2 / n0
        log_mix = logsumexp(loglik, axis=0) - math.log(m)
        logw = loglik - log_mix[None, :] + np.log(node_w)[None, :]
        dense = np.exp(logw)
        col_max = dense.max(axis=0)
        dense[dense < drop * col_max[None, :]] = 0.0
        dense /= dense.sum(axis=1, keepdims=True)
        self.w = sparse.csr_matrix(dense)

    def mi_bits(self, p: np.ndarray) -> float:
        return blahut_arimoto_scores(self.w, p)[1] * LOG2E


def awgn_mi(probs, alphabet, snr: float, gh_order: int = DEFAULT_GH_ORDER, check_grid: bool = True) -> float:
    """Mutual information (bits) of a discrete input over complex AWGN at ``Es/N0 = snr``.

    The alphabet is scaled to unit power under ``probs`` before transmission.
    """
    p = np.asarray(probs, dtype=float)
    a = np.asarray(alphabet, dtype=complex)
    if p.shape != a.shape or np.any(p < 0) or abs(p.sum() - 1) > 1e-9:
        raise ValidationError("probs must be a distribution over the alphabet")
    if snr <= 0:
        raise ValidationError("snr must be positive")
    power = float(p @ np.abs(a) ** 2)
    if power <= 0:
        return 0.0
    if check_grid:
        grid_self_check(a / math.sqrt(float(np.mean(np.abs(a) ** 2))), gh_order)
    ch = _Channel(a / math.sqrt(power), snr, gh_order)
    return ch.mi_bits(p)


def grid_self_check(alphabet, gh_order: int):
    """Uniform-input MI at very high SNR must equal ``log2 M`` within 0.01 bit."""
    a = np.asarray(alphabet, dtype=complex)
    ch = _Channel(a, 1e8, gh_order)
    mi = ch.mi_bits(np.full(a.size, 1.0 / a.size))
    if abs(mi - math.log2(a.size)) > 0.01:
        raise ValidationError(f"quadrature grid too coarse: high-SNR MI {mi:.4f} vs log2 M {math.log2(a.size):.4f}")


def _rings(alphabet: np.ndarray) -> np.ndarray:
    return np.unique(np.round(np.abs(alphabet) ** 2, RING_DECIMALS))


def _envelope_min(u_vals: np.ndarray, power: float) -> float:
    """Smallest achievable ``E|a|^4`` at mean power ``power`` (lower convex envelope)."""
    rings = np.unique(u_vals)
    if power < rings[0] - 1e-12 or power > rings[-1] + 1e-12:
        return np.inf
    k = np.searchsorted(rings, power)
    if k < rings.size and abs(rings[k] - power) <= 1e-12:
        return power**2
    lo, hi = rings[k - 1], rings[k]
    return (lo + hi) * power - lo * hi


def _feasible(u_vals, power, c0, margin=0.0) -> bool:
    return _envelope_min(u_vals, power) <= c0 * power**2 * (1 - margin)


class _Solver:
    def __init__(self, problem: PcsProblem, tol: float, max_iter: int):
        self.a = problem.alphabet
        self.c0 = problem.c0
        self.snr = problem.snr
        self.order = problem.gh_order
        self.tol = tol
        self.max_iter = max_iter
        self.u = np.abs(self.a) ** 2
        self.v = self.u**2
        self.labels = rotation_orbits(self.a)
        self.iterations = 0
        self._cache = {}

    def channel(self, power: float) -> _Channel:
        key = round(power, 14)
        if key not in self._cache:
            self._cache[key] = _Channel(self.a / math.sqrt(power), self.snr, self.order)
        return self._cache[key]

    def inner(self, power: float, p0: np.ndarray | None, support: np.ndarray | None, tol: float):
        """Constrained BA at fixed power ``P``; returns (p, mi_bits, trace, converged)."""
        ch = self.channel(power)
        mask = np.ones(self.a.size, dtype=bool) if support is None else support
        start = np.where(mask, 1.0, 0.0) / mask.sum()
        if p0 is not None:
            # a small uniform admixture keeps every atom reachable
            start = np.where(mask, (1 - 1e-9) * p0 + 1e-9 * start, 0.0)
        with np.errstate(divide="ignore"):
            p = self._project(np.log(start), power, mask)
        trace = []
        mi_prev = -np.inf
        converged = False
        for _ in range(self.max_iter):
            c, mi_nats = blahut_arimoto_scores(ch.w, p)
            mi = mi_nats * LOG2E
            trace.append(mi)
            self.iterations += 1
            if mi - mi_prev < tol:
                converged = True
                break
            mi_prev = mi
            with np.errstate(divide="ignore"):
                scores = np.log(p) + c
            p = self._project(scores, power, mask)
        return p, trace[-1], trace, converged

    def _project(self, scores, power, mask):
        scores = _orbit_average(np.where(mask, scores, 0.0), self.labels)
        scores = np.where(mask, scores, -np.inf)
        u, v = self.u, self.v
        if self.c0 <= 1 + 1e-12:
            # constant modulus: the support already fixes power and fourth moment
            res = gibbs_with_moments(scores)
        else:
            res = gibbs_with_moments(scores, a_eq=u[None, :], b_eq=[power], a_in=v[None, :], b_in=[self.c0 * power**2])
        p = np.where(mask, res.probs, 0.0)
        return _orbit_average(p, self.labels)


def _candidate_powers(u_vals, c0, extra=()):
    rings = np.unique(u_vals)
    grid = np.linspace(rings[0], rings[-1], 17)
    cands = np.concatenate([rings, grid, [1.0], np.asarray(extra, dtype=float)])
    cands = np.unique(np.round(cands, 12))
    # the extreme rings pin the support to a single ring, leaving no interior
    inner = (cands > rings[0] * (1 + 1e-9)) & (cands < rings[-1] * (1 - 1e-9))
    return np.array([p for p in cands[inner] if _feasible(u_vals, p, c0, 1e-6)])


def _feasible_interval(u_vals, power, c0, step=1e-3):
    """Bracket of the connected feasible set containing ``power``."""
    lo = hi = power
    rings = np.unique(u_vals)
    span = rings[-1] - rings[0]
    while lo - step * span > rings[0] and _feasible(u_vals, lo - step * span, c0, 1e-6):
        lo -= step * span
    while hi + step * span < rings[-1] and _feasible(u_vals, hi + step * span, c0, 1e-6):
        hi += step * span
    return lo, hi


def mba_solve(problem: PcsProblem, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, warm_start: PcsSolution | None = None) -> PcsSolution:
    """Maximize AWGN mutual information under the kurtosis cap.

    Parameters
    ----------
    problem : PcsProblem
    tol : float
        Stop when the per-iteration MI gain (bits) falls below ``tol``.
    max_iter : int
        Blahut-Arimoto iteration budget per inner solve.
    warm_start : PcsSolution, optional
        A solution for a smaller cap; it stays feasible and is used as a
        starting point, which makes sweeps monotone.

    Returns
    -------
    PcsSolution
    """
    grid_self_check(problem.alphabet, problem.gh_order)
    s = _Solver(problem, tol, max_iter)
    a, u = s.a, s.u
    if problem.c0 <= 1 + 1e-12:
        best = None
        for ring in _rings(a):
            mask = np.isclose(u, ring, rtol=0, atol=10 ** (-RING_DECIMALS + 1))
            level = float(np.mean(u[mask]))
            p, mi, trace, conv = s.inner(level, None, mask, tol)
            if best is None or mi > best[1] + 1e-12:
                best = (p, mi, trace, conv, level)
        p, mi, trace, conv, power = best
        return _package(s, p, mi, trace, conv, power)

    extra = [warm_start.scale_power] if warm_start is not None else []
    cands = _candidate_powers(u, problem.c0, extra)
    if cands.size == 0:
        raise InfeasibleError(f"no power level admits kurtosis <= {problem.c0}")
    coarse_tol = max(tol, 1e-5)
    scored = []
    for pw in cands:
        try:
            p, mi, _, _ = s.inner(float(pw), None, None, coarse_tol)
        except InfeasibleError:
            continue
        scored.append((mi, float(pw), p))
    if warm_start is not None:
        pw = warm_start.scale_power
        p, mi, _, _ = s.inner(pw, np.asarray(warm_start.probs), None, coarse_tol)
        scored.append((mi + 1e-12, pw, p))
    scored.sort(key=lambda t: -t[0])
    mi0, p_star, prob0 = scored[0]
    # golden-section refinement of the power within its feasible component
    lo, hi = _feasible_interval(u, p_star, problem.c0)
    span = np.unique(u)
    width = (span[-1] - span[0]) / 16
    lo, hi = max(lo, p_star - width), min(hi, p_star + width)
    best = (mi0, p_star, prob0)
    if hi - lo > 1e-9:
        gr = (math.sqrt(5) - 1) / 2
        x1, x2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
        f1 = s.inner(x1, best[2], None, coarse_tol)
        f2 = s.inner(x2, best[2], None, coarse_tol)
        for _ in range(14):
            if f1[1] > f2[1]:
                hi, x2, f2 = x2, x1, f1
                x1 = hi - gr * (hi - lo)
                f1 = s.inner(x1, f2[0], None, coarse_tol)
            else:
                lo, x1, f1 = x1, x2, f2
                x2 = lo + gr * (hi - lo)
                f2 = s.inner(x2, f1[0], None, coarse_tol)
        for x, f in ((x1, f1), (x2, f2)):
            if f[1] > best[0]:
                best = (f[1], x, f[0])
    _, power, p0 = best
    p, mi, trace, conv = s.inner(power, p0, None, tol)
    if warm_start is not None and mi < warm_start.mi:
        # the warm start is feasible here, so never report less than it achieved
        p, mi, trace, conv = s.inner(warm_start.scale_power, np.asarray(warm_start.probs), None, tol)
        power = warm_start.scale_power
    return _package(s, p, mi, trace, conv, power)


def _package(s: _Solver, p, mi, trace, converged, power) -> PcsSolution:
    if not converged:
        raise ConvergenceError("shaping iteration budget exhausted", residual=trace[-1] - trace[-2] if len(trace) > 1 else np.nan, iterate=p)
    pts = s.a / math.sqrt(power)
    kurt = float(p @ np.abs(pts) ** 4)
    return PcsSolution(p, pts, float(mi), kurt, s.iterations, converged, float(power), list(trace))


@dataclass(frozen=True)
class TradeoffPoint:
    c0: float
    mi: float
    kurtosis: float
    support_size: int
    solution: PcsSolution


def sweep_tradeoff(problem: PcsProblem, c0_list, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> list[TradeoffPoint]:
    """Solve for each cap in ascending order, warm-starting from the previous cap."""
    c0_list = [float(c) for c in c0_list]
    if any(b < a for a, b in zip(c0_list, c0_list[1:])):
        raise ValidationError("c0 list must be ascending")
    out = []
    prev = None
    for c0 in c0_list:
        prob = PcsProblem(problem.alphabet, c0, problem.snr, problem.gh_order)
        sol = mba_solve(prob, tol, max_iter, warm_start=prev)
        out.append(TradeoffPoint(c0, sol.mi, sol.kurtosis_achieved, int(np.sum(sol.probs > 1e-6)), sol))
        prev = sol
    return out


def tradeoff_csv(points: list[TradeoffPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["c0", "mi_bits", "kurtosis", "support_size"])
    for pt in points:
        w.writerow([f"{pt.c0:.17g}", f"{pt.mi:.17g}", f"{pt.kurtosis:.17g}", pt.support_size])
    return buf.getvalue()
