"""Nyquist pulses on an oversampled periodic grid and sidelobe-aware pulse design.

Grid conventions
----------------
A pulse is a length ``L*N`` tap vector at spacing ``T/L``. Its squared
spectrum ``S = N |F_{LN} p|^2`` lives on frequencies ``f = m/(N T)``; bins
``0..N-1`` cover ``[0, 1/T)`` and bins ``LN-N..LN-1`` cover ``[-1/T, 0)``.
For a Nyquist pulse whose spectrum fits in ``[-1/T, 1/T)`` the folded
spectrum condition reads ``S[m] + S[LN-N+m] = 1``, so the first ``N`` bins
``g = S[:N]`` determine the pulse. ``g`` equals one near DC, rolls off
monotonically around ``N/2`` and is zero near ``1/T``. The complementary
vector ``1 - g`` is the same information read on the negative-frequency half
(zeros first, ones last).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainError, InvalidDimensionError, ValidationError
from .numerics import QpProblem, solve_qp, unitary_dft

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True, eq=False)
class Pulse:
    """Unit-energy oversampled pulse with its first-``N`` squared-spectrum samples."""

    taps: np.ndarray
    g: np.ndarray
    alpha: float
    l: int
    n: int
    label: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=complex).reshape(-1)
        if taps.size != self.l * self.n:
            raise InvalidDimensionError(f"expected {self.l * self.n} taps, got {taps.size}")
        energy = float(np.vdot(taps, taps).real)
        if abs(energy - 1.0) > 1e-9:
            raise ValidationError(f"pulse energy is {energy}, expected 1")
        g = np.asarray(self.g, dtype=float).reshape(-1)
        taps.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "g", g)

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "l": self.l,
            "n": self.n,
            "taps": [[float(z.real), float(z.imag)] for z in self.taps],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Pulse":
        unknown = set(data) - {"alpha", "l", "n", "taps"}
        if unknown:
            raise ValidationError(f"unknown pulse fields: {sorted(unknown)}")
        t = np.asarray(data["taps"], dtype=float)
        taps = t[:, 0] + 1j * t[:, 1]
        l, n = int(data["l"]), int(data["n"])
        return cls(taps, _first_bins(taps, n), float(data["alpha"]), l, n, "loaded")


@dataclass(frozen=True)
class NyquistReport:
    """Zero-ISI diagnostics: worst symbol-lag ACF error and worst folded-sum error."""

    isi_max: float
    folded_max: float
    tol: float

    @property
    def max_violation(self) -> float:
        return max(self.isi_max, self.folded_max)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol


def _first_bins(taps: np.ndarray, n: int) -> np.ndarray:
    spec = n * np.abs(np.fft.fft(taps)) ** 2 / taps.size
    return spec[:n]


def raised_cosine(f, alpha: float) -> np.ndarray:
    """Raised-cosine spectrum (peak 1) at frequencies ``f`` in units of ``1/T``."""
    af = np.abs(np.asarray(f, dtype=float))
    lo = (1 - alpha) / 2
    hi = (1 + alpha) / 2
    out = np.where(af <= lo, 1.0, 0.0)
    if alpha > 0:
        band = (af > lo) & (af < hi)
        out = np.where(band, 0.5 * (1 + np.cos(np.pi / alpha * (af - lo))), out)
    else:
        out = np.where(np.isclose(af, 0.5), 0.5, out)
    return out


def _check_grid(l: int, n: int):
    if int(l) < 2:
        raise ValidationError("oversampling factor must be >= 2; pulse effects vanish at L = 1")
    if int(n) < 1:
        raise InvalidDimensionError("symbol count must be >= 1")


def full_spectrum(g, l: int) -> np.ndarray:
    """Extend first-``N`` bins to the ``LN`` grid with the folded complement."""
    g = np.asarray(g, dtype=float).reshape(-1)
    n = g.size
    s = np.zeros(l * n)
    s[:n] = g
    s[l * n - n:] = 1.0 - g
    return s


def taps_from_spectrum(g, l: int, alpha: float = float("nan"), label: str = "from-spectrum") -> Pulse:
    """Zero-phase pulse whose squared spectrum has first bins ``g``.

    Parameters
    ----------
    g : array_like
        Values in ``[0, 1]`` on bins ``0..N-1``.
    l : int
        Oversampling factor, at least 2.

    Returns
    -------
    Pulse
        Taps are the inverse unitary DFT of ``sqrt(S / N)``.
    """
    g = np.asarray(g, dtype=float).reshape(-1)
    _check_grid(l, g.size)
    if np.any(g < -1e-12) or np.any(g > 1 + 1e-12):
        raise DomainError("squared-spectrum samples must lie in [0, 1]")
    g = np.clip(g, 0.0, 1.0)
    n = g.size
    s = full_spectrum(g, l)
    amp = np.sqrt(s / n)
    taps = np.fft.ifft(amp) * math.sqrt(l * n)
    # the folded complement makes the energy exactly one; remove rounding
    taps = taps / np.linalg.norm(taps)
    return Pulse(taps, g, alpha, int(l), n, label)


def rrc_taps(alpha: float, l: int, n: int) -> Pulse:
    """Root-raised-cosine pulse wrapped onto the ``LN``-periodic grid.

    Sampling the RRC spectrum on the ``LN`` frequency grid is the exact DFT of
    the infinitely wrapped time-domain RRC, so the result is Nyquist to
    machine precision.
    """
    if not 0.0 <= alpha <= 1.0:
        raise DomainError("roll-off must lie in [0, 1]")
    _check_grid(l, n)
    g = raised_cosine(np.arange(n) / n, alpha)
    return taps_from_spectrum(g, l, alpha, f"rrc-{alpha:g}")


def rrc_impulse(t, alpha: float) -> np.ndarray:
    """Continuous-time unit-energy RRC impulse response, ``t`` in symbol periods."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    a = alpha
    zero = np.isclose(t, 0.0)
    out[zero] = 1 - a + 4 * a / np.pi
    if a > 0:
        sing = np.isclose(np.abs(t), 1 / (4 * a))
        out[sing & ~zero] = a / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * a)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * a)))
    else:
        sing = np.zeros_like(zero)
    rest = ~(zero | sing)
    tr = t[rest]
    num = np.sin(np.pi * tr * (1 - a)) + 4 * a * tr * np.cos(np.pi * tr * (1 + a))
    den = np.pi * tr * (1 - (4 * a * tr) ** 2)
    out[rest] = num / den
    return out


def gaussian_pulse(bt: float, l: int, n: int) -> Pulse:
    """Gaussian pulse (not Nyquist) with bandwidth-time product ``bt``."""
    _check_grid(l, n)
    m = np.arange(l * n)
    t = (m - (m >= l * n / 2) * l * n) / l
    sigma = math.sqrt(math.log(2)) / (2 * math.pi * bt)
    taps = np.exp(-(t**2) / (2 * sigma**2)).astype(complex)
    taps /= np.linalg.norm(taps)
    return Pulse(taps, _first_bins(taps, n), float("nan"), l, n, f"gaussian-{bt:g}")


def squared_spectrum(p: Pulse) -> np.ndarray:
    """First ``N`` samples of ``N |F_{LN} taps|^2``."""
    f = np.fft.fft(p.taps) / math.sqrt(p.taps.size)
    return p.n * (np.abs(f) ** 2)[: p.n]


def nyquist_check(p: Pulse, tol: float = 1e-3) -> NyquistReport:
    """Check zero ISI at symbol lags and the folded-spectrum sum."""
    ln = p.taps.size
    spec = np.abs(np.fft.fft(p.taps)) ** 2
    acf = np.fft.ifft(spec)
    sym = acf[:: p.l]
    delta = np.zeros(p.n)
    delta[0] = 1.0
    isi = float(np.max(np.abs(sym - delta)))
    s = p.n * spec / ln
    folded = s.reshape(p.l, p.n).sum(axis=0)
    return NyquistReport(isi, float(np.max(np.abs(folded - 1.0))), tol)


def gk_vector(g, k: int, l: int) -> np.ndarray:
    """Lag-``k`` combination ``g + (1 - g) exp(-j 2 pi k / L)``."""
    g = np.asarray(g, dtype=float)
    return g + (1.0 - g) * np.exp(-2j * np.pi * k / l)


def lag_frequency_vectors(n: int, l: int, lags) -> np.ndarray:
    """Rows ``exp(-j 2 pi m k / (L N)) / sqrt(N)`` for ``m = 0..N-1`` and each lag ``k``."""
    lags = np.asarray(lags, dtype=float).reshape(-1, 1)
    m = np.arange(n)[None, :]
    return np.exp(-2j * np.pi * ((lags * m) % (l * n)) / (l * n)) / math.sqrt(n)


def n_alpha_for(alpha: float, n: int) -> int:
    """Transition-band width: the integer nearest ``alpha * n`` with ``n - width`` even."""
    target = alpha * n
    cands = [w for w in (math.floor(target) - 1, math.floor(target), math.floor(target) + 1, math.floor(target) + 2) if 0 <= w <= n and (n - w) % 2 == 0]
    return min(cands, key=lambda w: (abs(w - target), w))


@dataclass
class PulseDesignSpec:
    """Inputs of :func:`design_pulse`.

    Parameters
    ----------
    alpha : float
        Roll-off; the transition width is ``n_alpha`` bins.
    n, l : int
        Symbols per block and oversampling factor.
    sidelobe_region : sequence of int
        Lags (in ``1..LN-1``) whose sidelobes are minimized.
    objective : {"sum", "max", "full_expected"}
    basis : ModulationBasis, optional
        Required for ``full_expected``.
    kurtosis : float, optional
        Required for ``full_expected``.
    m : int
        Coherent integration count for ``full_expected``.
    weights : sequence of float, optional
        Per-lag weights of the scalarized objective.
    n_alpha : int, optional
        Explicit transition width; ``n - n_alpha`` must be even.
    """

    alpha: float
    n: int
    l: int
    sidelobe_region: list
    objective: str = "sum"
    basis: object = None
    kurtosis: float | None = None
    m: int = 1
    weights: list | None = None
    n_alpha: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError("roll-off must lie in [0, 1]")
        _check_grid(self.l, self.n)
        region = np.unique(np.asarray(self.sidelobe_region, dtype=int))
        if region.size == 0:
            raise ValidationError("sidelobe region is empty")
        if region.min() < 1 or region.max() > self.l * self.n - 1:
            raise ValidationError("sidelobe lags must lie in 1..LN-1")
        self.sidelobe_region = region
        if self.n_alpha is None:
            self.n_alpha = n_alpha_for(self.alpha, self.n)
        elif (self.n - self.n_alpha) % 2 or not 0 <= self.n_alpha <= self.n:
            raise ValidationError(f"n - n_alpha must be even and nonnegative (n={self.n}, n_alpha={self.n_alpha})")
        if self.objective not in ("sum", "max", "full_expected"):
            raise ValidationError(f"unknown objective {self.objective!r}")
        if self.objective == "full_expected" and (self.basis is None or self.kurtosis is None):
            raise ValidationError("full_expected needs a basis and a kurtosis")
        if self.m < 1:
            raise ValidationError("coherent integration count must be >= 1")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != region.shape or np.any(w < 0):
                raise ValidationError("weights must be nonnegative, one per region lag")

    @property
    def free_slice(self) -> slice:
        start = (self.n - self.n_alpha) // 2
        return slice(start, start + self.n_alpha)

    def fixed_g(self) -> np.ndarray:
        """Spectrum with the fixed bins set and the transition band at zero."""
        g = np.zeros(self.n)
        g[: self.free_slice.start] = 1.0
        return g


def _lag_affine_maps(spec: PulseDesignSpec):
    """Complex affine maps ``g_free -> g~_k`` for every region lag.

    Returns ``a`` with shape (K, N, F) and ``d`` with shape (K, N) so that
    ``g~_k = a[k] @ g_free + d[k]``.
    """
    sl = spec.free_slice
    w = np.exp(-2j * np.pi * spec.sidelobe_region / spec.l)
    base = spec.fixed_g()
    d = base[None, :] + (1 - base[None, :]) * w[:, None]
    sel = np.zeros((spec.n, spec.n_alpha))
    sel[np.arange(sl.start, sl.stop), np.arange(spec.n_alpha)] = 1.0
    # within the free band the zero-filled base contributes w; the variable part adds (1 - w) g
    a = (1 - w)[:, None, None] * sel[None, :, :]
    return a, d


def lag_quadratics(spec: PulseDesignSpec):
    """Per-lag quadratic forms ``q_k(x) = x'Q_k x + c_k'x + r_k`` in the free bins.

    The value equals the lag-``k`` iceberg (``sum``/``max``) or the full
    expected squared ACF (``full_expected``), in units where the mainlobe of a
    single block is ``N^2``.
    """
    a, d = _lag_affine_maps(spec)
    f = lag_frequency_vectors(spec.n, spec.l, spec.sidelobe_region)
    n = spec.n
    # iceberg: N |f^H g~|^2 with f^H g~ = row . g~ where row = conj(f)
    rows = np.conj(f)
    lin_a = np.einsum("kn,knf->kf", rows, a) * math.sqrt(n)
    lin_b = np.einsum("kn,kn->k", rows, d) * math.sqrt(n)
    q = np.einsum("kf,kg->kfg", np.conj(lin_a), lin_a).real
    c = 2 * np.real(np.conj(lin_b)[:, None] * lin_a)
    r = np.abs(lin_b) ** 2
    if spec.objective == "full_expected":
        from .modulation import bistochastic_v

        vt = bistochastic_v(spec.basis).T
        kappa = float(spec.kurtosis)
        # ||g~||^2 term
        qa = np.einsum("knf,kng->kfg", np.conj(a), a).real
        ca = 2 * np.einsum("kn,knf->kf", np.conj(d), a).real
        ra = np.sum(np.abs(d) ** 2, axis=1)
        # N ||V^T (g~ o conj f)||^2 term
        fa = np.conj(f)[:, :, None] * a
        fd = np.conj(f) * d
        ba = np.einsum("mn,knf->kmf", vt, fa)
        bd = np.einsum("mn,kn->km", vt, fd)
        qb = np.einsum("kmf,kmg->kfg", np.conj(ba), ba).real * n
        cb = 2 * np.einsum("km,kmf->kf", np.conj(bd), ba).real * n
        rb = np.sum(np.abs(bd) ** 2, axis=1) * n
        q = q + (qa + (kappa - 2) * qb) / spec.m
        c = c + (ca + (kappa - 2) * cb) / spec.m
        r = r + (ra + (kappa - 2) * rb) / spec.m
    q = 0.5 * (q + np.transpose(q, (0, 2, 1)))
    return q, c, r


def _feasible_constraints(spec: PulseDesignSpec):
    fdim = spec.n_alpha
    a_eq = np.ones((1, fdim))
    b_eq = np.array([spec.n / 2 - spec.free_slice.start])
    # nonincreasing: g[j+1] - g[j] <= 0
    a_in = np.zeros((max(fdim - 1, 0), fdim))
    for j in range(fdim - 1):
        a_in[j, j] = -1.0
        a_in[j, j + 1] = 1.0
    return a_eq, b_eq, a_in, np.zeros(max(fdim - 1, 0)), np.zeros(fdim), np.ones(fdim)


def _psd_clip(q: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh(0.5 * (q + q.T))
    return (vec * np.maximum(lam, 0.0)) @ vec.T


def region_objective(g, spec: PulseDesignSpec) -> np.ndarray:
    """Per-lag objective values for a full length-``N`` spectrum ``g``."""
    g = np.asarray(g, dtype=float)
    q, c, r = lag_quadratics(spec)
    x = g[spec.free_slice]
    fixed = spec.fixed_g()
    mask = np.ones(spec.n, dtype=bool)
    mask[spec.free_slice] = False
    if not np.allclose(g[mask], fixed[mask], atol=1e-12):
        # spectra off the feasible pattern: evaluate the lag maps directly
        f = lag_frequency_vectors(spec.n, spec.l, spec.sidelobe_region)
        gt = np.stack([gk_vector(g, k, spec.l) for k in spec.sidelobe_region])
        ice = spec.n * np.abs(np.sum(np.conj(f) * gt, axis=1)) ** 2
        if spec.objective != "full_expected":
            return ice
        from .acf import expected_squared_acf_lags

        return expected_squared_acf_lags(g, spec.l, spec.basis, spec.kurtosis, spec.m, spec.sidelobe_region).total
    return np.einsum("f,kfg,g->k", x, q, x) + c @ x + r


def design_pulse(spec: PulseDesignSpec, tol: float = 1e-6, max_iter: int = 400) -> Pulse:
    """Optimize the transition band of a Nyquist spectrum for low region sidelobes.

    Feasible spectra keep ``g = 1`` on the first ``(N - N_alpha)/2`` bins,
    ``g = 0`` on the last ``(N - N_alpha)/2`` bins, are nonincreasing and sum
    to ``N/2``.

    Parameters
    ----------
    spec : PulseDesignSpec
    tol : float
        KKT tolerance of the QP (``sum``/``full_expected``) or relative
        optimality gap of the bundle method (``max``).

    Returns
    -------
    Pulse
        Zero-phase pulse; ``info`` holds the objective value and solver stats.
    """
    fixed = spec.fixed_g()
    if spec.n_alpha == 0:
        g = fixed.copy()
        return taps_from_spectrum(g, spec.l, spec.alpha, f"designed-{spec.objective}")
    q, c, r = lag_quadratics(spec)
    w = np.ones(q.shape[0]) if spec.weights is None else np.asarray(spec.weights, dtype=float)
    a_eq, b_eq, a_in, b_in, lb, ub = _feasible_constraints(spec)
    if spec.objective in ("sum", "full_expected"):
        h = _psd_clip(2 * np.einsum("k,kfg->fg", w, q))
        lin = w @ c
        scale = max(1.0, float(np.max(np.abs(h))), float(np.max(np.abs(lin))))
        prob = QpProblem(h / scale, lin / scale, a_eq, b_eq, a_in, b_in, lb, ub)
        res = solve_qp(prob, tol=tol, max_iter=max(max_iter, 50 * spec.n_alpha), full_output=True)
        x = res.x
        info = {"kkt_residual": res.kkt_residual, "iterations": res.iterations}
    else:
        x, info = _minimax_bundle(q, c, r, (a_eq, b_eq, a_in, b_in, lb, ub), tol, max_iter)
    x = _clean_design(x, spec)
    g = fixed.copy()
    g[spec.free_slice] = x
    vals = np.einsum("f,kfg,g->k", x, q, x) + c @ x + r
    info["objective"] = float(np.max(vals)) if spec.objective == "max" else float(w @ vals)
    pulse = taps_from_spectrum(g, spec.l, spec.alpha, f"designed-{spec.objective}")
    return Pulse(pulse.taps, g, spec.alpha, spec.l, spec.n, pulse.label, info)


def _clean_design(x: np.ndarray, spec: PulseDesignSpec) -> np.ndarray:
    """Remove solver round-off so the structural constraints hold to machine precision."""
    x = np.clip(x, 0.0, 1.0)
    x = np.minimum.accumulate(x)
    target = spec.n / 2 - spec.free_slice.start
    for _ in range(4):
        gap = target - x.sum()
        if abs(gap) < 1e-14:
            break
        # spread the gap over entries with room so that ordering is kept
        room = (1.0 - x) if gap > 0 else x
        if room.sum() <= 0:
            break
        x = np.clip(x + gap * room / room.sum(), 0.0, 1.0)
        x = np.minimum.accumulate(x)
    return x


def _minimax_bundle(q, c, r, cons, tol, max_iter):
    """Proximal bundle method for ``min_x max_k q_k(x)`` over a polyhedron."""
    a_eq, b_eq, a_in, b_in, lb, ub = cons
    fdim = q.shape[1]

    def values(x):
        return np.einsum("f,kfg,g->k", x, q, x) + c @ x + r

    def grads(x):
        return 2 * np.einsum("kfg,g->kf", q, x) + c

    # start from the sum-objective optimum
    h0 = _psd_clip(2 * q.sum(axis=0))
    s0 = max(1.0, float(np.max(np.abs(h0))))
    center = solve_qp(QpProblem(h0 / s0, c.sum(axis=0) / s0, a_eq, b_eq, a_in, b_in, lb, ub), tol=1e-8)
    f_center = float(values(center).max())
    scale = max(1.0, abs(f_center))
    rho = float(np.max(np.linalg.norm(q, axis=(1, 2)))) + 1e-12
    cut_g = grads(center)
    cut_b = cut_g @ center - values(center)
    # decision vector is (x, t); the x rows of the polyhedron carry a zero t column
    pad = lambda m: np.hstack([m, np.zeros((m.shape[0], 1))])
    gap = np.inf
    for it in range(1, max_iter + 1):
        h = np.zeros((fdim + 1, fdim + 1))
        h[:fdim, :fdim] = rho * np.eye(fdim)
        lin = np.concatenate([-rho * center, [1.0]])
        rows = np.hstack([cut_g, -np.ones((cut_g.shape[0], 1))])
        prob = QpProblem(
            h / scale,
            lin / scale,
            pad(a_eq),
            b_eq,
            np.vstack([pad(a_in), rows]),
            np.concatenate([b_in, cut_b]),
            np.concatenate([lb, [-np.inf]]),
            np.concatenate([ub, [np.inf]]),
        )
        res = solve_qp(prob, tol=1e-9, max_iter=4000, full_output=True)
        x, t = res.x[:fdim], res.x[fdim]
        model = t
        gap = f_center - model
        if gap <= tol * scale:
            return center, {"objective_gap": gap, "iterations": it}
        f_x = float(values(x).max())
        if f_x <= f_center - 0.1 * gap:
            center, f_center = x, f_x
        # keep cuts that are active in the subproblem, add cuts at the trial point
        mu = res.ineq_multipliers[a_in.shape[0]: a_in.shape[0] + cut_g.shape[0]]
        keep = mu > 1e-12
        new_g = grads(x)
        new_b = new_g @ x - values(x)
        cut_g = np.vstack([cut_g[keep], new_g])
        cut_b = np.concatenate([cut_b[keep], new_b])
    raise ConvergenceError("minimax pulse design did not converge", residual=gap / scale, iterate=center)


def range_to_lag(range_m, symbol_rate: float, l: int, c: float = SPEED_OF_LIGHT):
    """Round-trip delay of a range in units of the sample spacing ``1/(L * symbol_rate)``."""
    delay = 2 * np.asarray(range_m, dtype=float) / c
    return np.rint(delay * symbol_rate * l).astype(int)


def lag_to_range(lag, symbol_rate: float, l: int, c: float = SPEED_OF_LIGHT):
    return np.asarray(lag, dtype=float) / (symbol_rate * l) * c / 2


def region_lags(range_lo: float, range_hi: float, reference_range: float, symbol_rate: float, l: int, c: float = SPEED_OF_LIGHT) -> np.ndarray:
    """Sidelobe lags of a strong echo at ``reference_range`` that fall in a range window."""
    ref = int(range_to_lag(reference_range, symbol_rate, l, c))
    delay_lo = 2 * range_lo / c * symbol_rate * l
    delay_hi = 2 * range_hi / c * symbol_rate * l
    lags = np.arange(math.ceil(delay_lo), math.floor(delay_hi) + 1) - ref
    return lags[lags > 0]
