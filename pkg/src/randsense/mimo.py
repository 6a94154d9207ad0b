"""MIMO precoding for channel estimation with random Gaussian data signals.

Model: ``Y_s = H_s W S + Z_s`` with ``E[H_s^H H_s] = R_H``, data ``S`` with
i.i.d. ``CN(0, I)`` columns and noise variance ``sigma_s^2``. The sensing
metric is the LMMSE error ``Tr[(R_H^{-1} + c W S S^H W^H)^{-1}]`` with
``c = 1/(sigma_s^2 N_s)``, averaged over ``S`` (ergodic LMMSE, ELMMSE).

Gradients are Wirtinger derivatives ``df/dconj(W)``; the steepest-descent
direction of a real function of ``W`` is ``-df/dconj(W)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .constellation import make_rng
from .errors import ConvergenceError, InfeasibleError, InvalidDimensionError, ValidationError
from .numerics import bisect_water_level, complex_svd, hermitian_eig

Z99 = float(norm.ppf(0.995))


def _encode_complex(a: np.ndarray):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def _decode_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def exponential_correlation(n: int, coefficient: float) -> np.ndarray:
    """Toeplitz correlation ``coefficient^|i-j|`` with unit diagonal."""
    if not 0 <= coefficient < 1:
        raise ValidationError("correlation coefficient must lie in [0, 1)")
    idx = np.arange(n)
    return coefficient ** np.abs(idx[:, None] - idx[None, :]).astype(float)


@dataclass
class MimoScenario:
    """Antenna counts, channel statistics and noise levels of one ISAC link."""

    n_t: int
    n_s: int
    n_c: int
    n: int
    r_h: np.ndarray
    h_c: np.ndarray
    sigma_s: float
    sigma_c: float
    p_t: float

    def __post_init__(self):
        self.r_h = np.asarray(self.r_h, dtype=complex)
        self.h_c = np.atleast_2d(np.asarray(self.h_c, dtype=complex))
        if self.r_h.shape != (self.n_t, self.n_t):
            raise InvalidDimensionError("r_h must be n_t x n_t")
        if self.h_c.shape != (self.n_c, self.n_t):
            raise InvalidDimensionError("h_c must be n_c x n_t")
        if min(self.n_t, self.n_s, self.n_c, self.n) < 1:
            raise InvalidDimensionError("dimensions must be positive")
        scale = max(1.0, float(np.max(np.abs(self.r_h))))
        if np.max(np.abs(self.r_h - self.r_h.conj().T)) > 1e-9 * scale:
            raise ValidationError("r_h must be Hermitian")
        self.r_h = 0.5 * (self.r_h + self.r_h.conj().T)
        if np.linalg.eigvalsh(self.r_h)[0] < -1e-9 * scale:
            raise ValidationError("r_h must be positive semidefinite")
        if not self.p_t > 0:
            raise ValidationError("power budget must be positive")
        if not (self.sigma_s > 0 and self.sigma_c > 0):
            raise ValidationError("noise levels must be positive")

    @property
    def c(self) -> float:
        return 1.0 / (self.sigma_s**2 * self.n_s)

    @property
    def snr_db(self) -> float:
        return 10 * math.log10(self.p_t / self.sigma_s**2)

    @classmethod
    def exponential(
        cls,
        n_t: int,
        n_s: int,
        n: int,
        snr_db: float,
        n_c: int = 4,
        coefficient: float = 0.7,
        p_t: float = 1.0,
        comm_snr_db: float | None = None,
        seed: int = 0,
        entry_variance: float = 1.0,
    ) -> "MimoScenario":
        """Exponential-correlation sensing prior and an i.i.d. ``CN(0,1)`` communication channel.

        The sensing channel has entries of variance ``entry_variance``, so
        ``R_H = N_s * entry_variance * [coefficient^|i-j|]``.
        """
        rng = make_rng(seed)
        h_c = (rng.standard_normal((n_c, n_t)) + 1j * rng.standard_normal((n_c, n_t))) / math.sqrt(2)
        comm = snr_db if comm_snr_db is None else comm_snr_db
        return cls(
            n_t,
            n_s,
            n_c,
            n,
            n_s * entry_variance * exponential_correlation(n_t, coefficient),
            h_c,
            math.sqrt(p_t / 10 ** (snr_db / 10)),
            math.sqrt(p_t / 10 ** (comm / 10)),
            p_t,
        )

    def to_dict(self) -> dict:
        return {
            "n_t": self.n_t,
            "n_s": self.n_s,
            "n_c": self.n_c,
            "n": self.n,
            "r_h": _encode_complex(self.r_h),
            "h_c": _encode_complex(self.h_c),
            "sigma_s": self.sigma_s,
            "sigma_c": self.sigma_c,
            "p_t": self.p_t,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MimoScenario":
        return cls(
            int(d["n_t"]),
            int(d["n_s"]),
            int(d["n_c"]),
            int(d["n"]),
            _decode_complex(d["r_h"]),
            _decode_complex(d["h_c"]),
            float(d["sigma_s"]),
            float(d["sigma_c"]),
            float(d["p_t"]),
        )


@dataclass
class Precoder:
    w: np.ndarray
    provenance: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2))

    def to_dict(self) -> dict:
        return {"w": _encode_complex(self.w), "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> "Precoder":
        return cls(_decode_complex(d["w"]), d["provenance"])


@dataclass(frozen=True)
class SgdConfig:
    """Projected SGD with momentum; step ``step0 * p_t / (1 + r / decay)``."""

    batch: int = 8
    step0: float = 0.1
    decay: float = 200.0
    momentum: float = 0.9
    iters: int = 2000
    eval_every: int = 50
    eval_samples: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.batch < 1 or self.iters < 1 or self.eval_every < 1 or self.eval_samples < 1:
            raise ValidationError("batch, iters, eval_every and eval_samples must be positive")
        if not 0 <= self.momentum < 1:
            raise ValidationError("momentum must lie in [0, 1)")
        if not (self.step0 > 0 and self.decay > 0):
            raise ValidationError("step0 and decay must be positive")

    def step(self, r: int, p_t: float) -> float:
        return self.step0 * p_t / (1.0 + r / self.decay)

    def satisfies_robbins_monro(self) -> bool:
        # sum 1/(1 + r/d) diverges like d log r; sum 1/(1 + r/d)^2 <= d^2 pi^2/6 + 1
        return self.step0 > 0 and self.decay > 0


def draw_signals(scenario: MimoScenario, trials: int, rng: np.random.Generator) -> np.ndarray:
    """``trials`` data matrices with i.i.d. ``CN(0, 1)`` entries, shape ``(trials, n_t, n)``."""
    shape = (trials, scenario.n_t, scenario.n)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def _error_cov(x: np.ndarray, scenario: MimoScenario) -> np.ndarray:
    """Posterior covariance ``R (I + c X X^H R)^{-1}`` (batched over leading axes).

    Equal to ``R - R X (X^H R X + sigma^2 N_s I)^{-1} X^H R`` by the
    push-through identity, but only ``n_t x n_t`` systems are solved.
    """
    r = scenario.r_h
    xx = x @ np.swapaxes(x.conj(), -1, -2)
    m = np.eye(scenario.n_t) + scenario.c * (xx @ r)
    # R M^{-1} = (M^{-H} R)^H with M^H = I + c R X X^H
    e = np.swapaxes(np.linalg.solve(np.swapaxes(m.conj(), -1, -2), r).conj(), -1, -2)
    return 0.5 * (e + np.swapaxes(e.conj(), -1, -2))


def lmmse_estimate(y: np.ndarray, x: np.ndarray, scenario: MimoScenario) -> np.ndarray:
    """LMMSE estimate ``Y (X^H R X + sigma^2 N_s I)^{-1} X^H R`` of the sensing channel."""
    y = np.asarray(y, dtype=complex)
    x = np.asarray(x, dtype=complex)
    if x.shape[-2] != scenario.n_t or y.shape[-1] != x.shape[-1] or y.shape[-2] != scenario.n_s:
        raise InvalidDimensionError("Y must be n_s x N and X must be n_t x N")
    k = np.swapaxes(x.conj(), -1, -2) @ scenario.r_h @ x + scenario.sigma_s**2 * scenario.n_s * np.eye(x.shape[-1])
    return y @ np.linalg.solve(k, np.swapaxes(x.conj(), -1, -2) @ scenario.r_h)


def conditional_mmse(w: np.ndarray, s: np.ndarray, scenario: MimoScenario):
    """LMMSE error for precoder ``w`` and data ``s``; batched over leading axes of ``s``.

    Uses the inverse-free form, so singular ``R_H`` is allowed.
    """
    w = np.asarray(w, dtype=complex)
    s = np.asarray(s, dtype=complex)
    if w.shape != (scenario.n_t, scenario.n_t) or s.shape[-2] != scenario.n_t:
        raise InvalidDimensionError("w must be n_t x n_t and s must be n_t x N")
    e = _error_cov(w @ s, scenario)
    out = np.trace(e, axis1=-2, axis2=-1).real
    return float(out) if out.ndim == 0 else out


def mmse_gradient(w: np.ndarray, s: np.ndarray, scenario: MimoScenario) -> np.ndarray:
    """Wirtinger gradient ``-c E^2 W S S^H`` of the LMMSE error, averaged over a batch of ``s``."""
    s = np.asarray(s, dtype=complex)
    e = _error_cov(w @ s, scenario)
    sss = s @ np.swapaxes(s.conj(), -1, -2)
    g = -scenario.c * (e @ e @ w @ sss)
    return g.mean(axis=0) if g.ndim == 3 else g


def mean_ci(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    ci = Z99 * float(values.std(ddof=1)) / math.sqrt(values.size) if values.size > 1 else 0.0
    return float(values.mean()), ci


def elmmse_samples(w: np.ndarray, scenario: MimoScenario, trials: int, seed: int, chunk: int = 256) -> np.ndarray:
    """Per-realization LMMSE errors of ``w`` over ``trials`` data draws."""
    rng = make_rng(seed)
    out = []
    left = trials
    while left > 0:
        k = min(chunk, left)
        out.append(conditional_mmse(w, draw_signals(scenario, k, rng), scenario))
        left -= k
    return np.concatenate(out)


def elmmse_mc(w: np.ndarray, scenario: MimoScenario, trials: int, seed: int, deterministic_s: np.ndarray | None = None):
    """Monte Carlo ELMMSE of ``w``: ``(mean, 99% CI half-width)``.

    With ``deterministic_s`` the expectation collapses to that single
    realization and the CI is zero.
    """
    if deterministic_s is not None:
        return conditional_mmse(w, deterministic_s, scenario), 0.0
    if trials < 100:
        raise ValidationError("ELMMSE estimation needs at least 100 trials")
    return mean_ci(elmmse_samples(w, scenario, trials, seed))


def wf_precoder(scenario: MimoScenario) -> Precoder:
    """Water-filling precoder that is optimal for orthogonal training ``S S^H = N I``."""
    q, lam = hermitian_eig(scenario.r_h)
    if lam[0] <= 0:
        raise ValidationError("r_h must be nonzero")
    pos = lam > 1e-12 * lam[0]
    inv = np.full(lam.size, np.inf)
    inv[pos] = 1.0 / lam[pos]
    scale = scenario.sigma_s**2 * scenario.n_s / scenario.n

    def power(mu):
        return scale * float(np.sum(np.maximum(mu - inv[pos], 0.0)))

    hi = float(np.max(inv[pos])) + scenario.p_t / scale + 1.0
    mu = bisect_water_level(power, scenario.p_t, 0.0, hi, tol=1e-12 * scenario.p_t)
    d = np.sqrt(scale * np.maximum(mu - inv, 0.0))
    w = q * d[None, :]
    w *= math.sqrt(scenario.p_t / np.sum(np.abs(w) ** 2))
    return Precoder(w, "wf", {"water_level": mu})


def _water_fill(inv_slope: np.ndarray, floors: np.ndarray, total: float) -> tuple[np.ndarray, float]:
    """Exact solution of ``sum_i (mu a_i - b_i)^+ = total`` for ``mu`` (all ``a_i > 0``)."""
    order = np.argsort(floors / inv_slope)
    a, b = inv_slope[order], floors[order]
    cum_a, cum_b = np.cumsum(a), np.cumsum(b)
    breaks = b / a
    mu = np.inf
    for k in range(a.size):
        cand = (total + cum_b[k]) / cum_a[k]
        if k + 1 == a.size or cand <= breaks[k + 1]:
            mu = cand
            break
    return np.maximum(mu * inv_slope - floors, 0.0), mu


def ddp_precoder(s: np.ndarray, scenario: MimoScenario) -> Precoder:
    """Per-realization optimal precoder (modified water-filling).

    With ``R_H = Q diag(lam) Q^H`` (descending) and ``S = U diag(sig) V^H``
    (descending), ``W = Q diag(sqrt(t)) U^H`` where
    ``t_i = (mu theta_i^{-1/2} - 1/(lam_i theta_i))^+``, ``theta_i = c sig_i^2``
    and ``mu`` meets the power budget. Directions with ``theta_i = 0`` (when
    ``N < n_t``) or ``lam_i = 0`` receive no power.
    """
    s = np.asarray(s, dtype=complex)
    if s.shape != (scenario.n_t, scenario.n):
        raise InvalidDimensionError("s must be n_t x N")
    q, lam = hermitian_eig(scenario.r_h)
    u, sig, _ = complex_svd(s)
    theta = np.zeros(scenario.n_t)
    theta[: sig.size] = scenario.c * sig**2
    use = (theta > 1e-14 * max(theta.max(), 1e-300)) & (lam > 1e-12 * lam[0])
    if not np.any(use):
        raise ValidationError("data realization or prior carries no usable direction")
    t = np.zeros(scenario.n_t)
    t[use], mu = _water_fill(1.0 / np.sqrt(theta[use]), 1.0 / (lam[use] * theta[use]), scenario.p_t)
    w = (q * np.sqrt(t)[None, :]) @ u.conj().T
    w *= math.sqrt(scenario.p_t / np.sum(np.abs(w) ** 2))
    return Precoder(w, "ddp", {"mu": mu, "allocation": t})


def ddp_elmmse_samples(scenario: MimoScenario, trials: int, seed: int) -> np.ndarray:
    """Per-realization optimal LMMSE errors (same data draws as :func:`elmmse_samples` for equal seeds)."""
    rng = make_rng(seed)
    out = np.empty(trials)
    done = 0
    while done < trials:
        k = min(256, trials - done)
        for s in draw_signals(scenario, k, rng):
            out[done] = conditional_mmse(ddp_precoder(s, scenario).w, s, scenario)
            done += 1
    return out


def _project_ball(w: np.ndarray, p_t: float) -> np.ndarray:
    pw = float(np.sum(np.abs(w) ** 2))
    return w if pw <= p_t else w * math.sqrt(p_t / pw)


def dip_precoder(scenario: MimoScenario, cfg: SgdConfig = SgdConfig(), init: np.ndarray | None = None) -> Precoder:
    """Data-independent precoder by projected SGD with momentum on the ELMMSE.

    Starts from the water-filling precoder unless ``init`` is given. The
    objective is estimated every ``cfg.eval_every`` iterations on a fixed set
    of ``cfg.eval_samples`` draws and the best iterate is returned.

    Raises
    ------
    ConvergenceError
        When the monitored objective exceeds ten times its initial value.
    """
    rng = make_rng(cfg.seed)
    eval_s = draw_signals(scenario, cfg.eval_samples, make_rng([cfg.seed, 1]))
    w = wf_precoder(scenario).w if init is None else _project_ball(np.asarray(init, dtype=complex), scenario.p_t)
    f0 = float(np.mean(conditional_mmse(w, eval_s, scenario)))
    best_f, best_w, best_it = f0, w.copy(), 0
    vel = np.zeros_like(w)
    trace = [(0, f0)]
    for r in range(cfg.iters):
        g = mmse_gradient(w, draw_signals(scenario, cfg.batch, rng), scenario)
        vel = cfg.momentum * vel + g
        w = _project_ball(w - cfg.step(r, scenario.p_t) * vel, scenario.p_t)
        if (r + 1) % cfg.eval_every == 0:
            f = float(np.mean(conditional_mmse(w, eval_s, scenario)))
            trace.append((r + 1, f))
            if not np.isfinite(f) or f > 10 * f0:
                raise ConvergenceError("projected SGD diverged", residual=f, iterate=w)
            if f < best_f:
                best_f, best_w, best_it = f, w.copy(), r + 1
    return Precoder(best_w, "dip", {"trace": trace, "best_iteration": best_it, "best_objective": best_f})


def rate(w: np.ndarray, scenario: MimoScenario) -> float:
    """Achievable rate ``log2 det(I + H_c W W^H H_c^H / sigma_c^2)`` in bits/s/Hz."""
    g = scenario.h_c @ np.asarray(w, dtype=complex) / scenario.sigma_c
    _, logdet = np.linalg.slogdet(np.eye(scenario.n_c) + g @ g.conj().T)
    return float(logdet) / math.log(2)


def _rate_omega(omega: np.ndarray, scenario: MimoScenario) -> float:
    g = scenario.h_c / scenario.sigma_c
    _, logdet = np.linalg.slogdet(np.eye(scenario.n_c) + g @ omega @ g.conj().T)
    return float(logdet) / math.log(2)


def max_rate_precoder(scenario: MimoScenario) -> Precoder:
    """Capacity-achieving (rate water-filling) precoder on ``H_c``."""
    _, gains, v_full = complex_svd(scenario.h_c / scenario.sigma_c)
    g2 = gains**2
    use = g2 > 1e-14 * g2.max()
    t = np.zeros(g2.size)
    t[use], _ = _water_fill(np.ones(int(use.sum())), 1.0 / g2[use], scenario.p_t)
    v = v_full[:, : g2.size]
    w = np.zeros((scenario.n_t, scenario.n_t), dtype=complex)
    w[:, : g2.size] = v * np.sqrt(t)[None, :]
    return Precoder(w, "max_rate", {"rate": rate(w, scenario)})


def max_rate(scenario: MimoScenario) -> float:
    return rate(max_rate_precoder(scenario).w, scenario)


class _OmegaStep:
    """Frobenius projection of ``P = W W^H`` onto ``{Omega >= 0 : rate(Omega) >= r0}``.

    Only the block of ``Omega`` on the row space of ``H_c`` affects the rate,
    and the optimal correction there is ``Delta = tau Phi`` with
    ``Phi = g (I + g B g)^{-1} g`` positive semidefinite, so ``P + V Delta V^H``
    stays PSD. ``tau`` (the rate multiplier over the penalty weight) is found
    by bracketing root search.
    """

    def __init__(self, scenario: MimoScenario):
        _, gains, v_full = complex_svd(scenario.h_c / scenario.sigma_c)
        keep = gains > 1e-12 * gains[0]
        self.g = gains[keep]
        self.v = v_full[:, : self.g.size]
        self.scenario = scenario

    def _delta(self, tau: float, b0: np.ndarray, start: np.ndarray) -> np.ndarray:
        g = self.g
        delta = start
        for _ in range(50):
            a = np.eye(g.size) + g[:, None] * (b0 + delta) * g[None, :]
            phi = g[:, None] * np.linalg.inv(a) * g[None, :]
            phi = 0.5 * (phi + phi.conj().T)
            resid = delta - tau * phi
            if np.max(np.abs(resid)) <= 1e-14 * max(1.0, float(np.max(np.abs(delta)))):
                break
            ev, vec = np.linalg.eigh(phi)
            rr = vec.conj().T @ resid @ vec
            step = -rr / (1.0 + tau * np.outer(ev, ev))
            delta = delta + vec @ step @ vec.conj().T
            delta = 0.5 * (delta + delta.conj().T)
        return delta

    def _bits(self, b: np.ndarray) -> float:
        g = self.g
        _, logdet = np.linalg.slogdet(np.eye(g.size) + g[:, None] * b * g[None, :])
        return float(logdet) / math.log(2)

    def __call__(self, p: np.ndarray, r0: float) -> np.ndarray:
        b0 = self.v.conj().T @ p @ self.v
        if self._bits(b0) >= r0:
            return p
        zero = np.zeros_like(b0)

        def excess(tau):
            return self._bits(b0 + self._delta(tau, b0, zero)) - r0

        hi = 1.0
        while excess(hi) < 0:
            hi *= 4.0
            if hi > 1e12:
                raise InfeasibleError("rate floor unreachable in the Omega step", {"r0": r0})
        tau = brentq(excess, 0.0, hi, xtol=1e-13, rtol=1e-12)
        # land on the feasible side of the root
        while excess(tau) < 0:
            tau *= 1 + 1e-10
        delta = self._delta(tau, b0, zero)
        return p + self.v @ delta @ self.v.conj().T


def _penalized(w, s, omega, rho, scenario):
    diff = omega - w @ w.conj().T
    f = conditional_mmse(w, s, scenario)
    f = float(np.mean(f)) if np.ndim(f) else f
    return f + 0.5 * rho * float(np.sum(np.abs(diff) ** 2))


def _penalized_grad(w, s, omega, rho, scenario):
    diff = omega - w @ w.conj().T
    return mmse_gradient(w, s, scenario) - rho * diff @ w


def _pg_w_step(w, s, omega, rho, scenario, iters, eta):
    """Projected gradient with backtracking on the penalized objective (fixed data ``s``)."""
    f = _penalized(w, s, omega, rho, scenario)
    for _ in range(iters):
        g = _penalized_grad(w, s, omega, rho, scenario)
        while True:
            cand = _project_ball(w - eta * g, scenario.p_t)
            step = cand - w
            f_c = _penalized(cand, s, omega, rho, scenario)
            bound = f + 2 * float(np.real(np.vdot(g, step))) + float(np.sum(np.abs(step) ** 2)) / eta
            # the bound is only resolvable to rounding of f
            if f_c <= bound + 1e-13 * abs(f):
                break
            eta *= 0.5
        moved = float(np.sqrt(np.sum(np.abs(step) ** 2)))
        if f_c < f:
            w, f = cand, f_c
        eta *= 2.0
        if moved <= 1e-10 * max(1.0, math.sqrt(scenario.p_t)):
            break
    return w, eta


def isac_precoder(
    mode: str,
    scenario: MimoScenario,
    r0: float,
    rho0: float = 1.0,
    rho_factor: float = 5.0,
    rounds: int = 8,
    cfg: SgdConfig | None = None,
    s: np.ndarray | None = None,
    init: np.ndarray | None = None,
    ao_iters: int = 10,
    w_iters: int = 5,
    dip_batch: int = 64,
) -> Precoder:
    """Penalty alternating optimization for ELMMSE under a rate floor.

    Solves ``min f(W) + <Lam, Omega - W W^H> + rho/2 ||Omega - W W^H||^2`` over
    ``Omega`` with ``rate(Omega) >= r0`` and ``||W||_F^2 <= p_t``, alternating
    an exact ``Omega`` projection and a ``W`` descent step (projected gradient
    on ``f(W; s)`` for ``mode='ddp'``; for ``mode='dip'`` the same step on the
    sample-average ELMMSE over ``dip_batch`` draws fixed for the whole run). After each round the multiplier ``Lam`` absorbs the
    residual and ``rho`` grows by ``rho_factor``, until
    ``||Omega - W W^H||_F <= 1e-4 ||Omega||_F``. The multiplier update lets the
    residual close at finite ``rho``.

    Passing ``s = sqrt(N) I`` with ``mode='ddp'`` gives the design for
    orthogonal training, which is the deterministic-LMMSE baseline.

    Raises
    ------
    InfeasibleError
        When ``r0`` exceeds the capacity at power ``p_t``.
    ConvergenceError
        When the final precoder misses the rate floor by more than 1e-3.
    """
    if mode not in ("ddp", "dip"):
        raise ValidationError("mode must be 'ddp' or 'dip'")
    cap = max_rate(scenario)
    if r0 > cap + 1e-9:
        raise InfeasibleError(f"rate floor {r0} exceeds capacity {cap}", {"capacity": cap})
    cfg = cfg or SgdConfig()
    if mode == "ddp":
        if s is None:
            raise ValidationError("ddp mode needs a data realization")
        s = np.asarray(s, dtype=complex)
        w = ddp_precoder(s, scenario).w if init is None and s.shape[1] == scenario.n else None
        if w is None:
            w = wf_precoder(scenario).w if init is None else np.asarray(init, dtype=complex)
    else:
        w = dip_precoder(scenario, cfg).w if init is None else np.asarray(init, dtype=complex)
    w = _project_ball(w, scenario.p_t)
    omega_step = _OmegaStep(scenario)
    rng = make_rng([cfg.seed, 2])
    rho = rho0
    eta = 1.0 / max(1.0, scenario.c * scenario.n * float(np.max(np.linalg.eigvalsh(scenario.r_h))) ** 2)
    lam = np.zeros((scenario.n_t, scenario.n_t), dtype=complex)
    saa = draw_signals(scenario, dip_batch, rng) if mode == "dip" else None
    history = []
    gap, omega = np.inf, w @ w.conj().T
    for _ in range(rounds):
        for _ in range(ao_iters):
            w_prev = w
            omega = omega_step(w @ w.conj().T - lam / rho, r0)
            if mode == "ddp":
                w, eta = _pg_w_step(w, s, omega + lam / rho, rho, scenario, w_iters, eta)
                eta = min(eta, 1.0)
            else:
                w, eta = _pg_w_step(w, saa, omega + lam / rho, rho, scenario, w_iters, eta)
                eta = min(eta, 1.0)
            if np.linalg.norm(w - w_prev) <= 1e-6 * math.sqrt(scenario.p_t):
                break
        omega = omega_step(w @ w.conj().T - lam / rho, r0)
        resid = omega - w @ w.conj().T
        gap = float(np.linalg.norm(resid))
        lam = lam + rho * resid
        history.append({"rho": rho, "gap": gap, "rate": rate(w, scenario)})
        if gap <= 1e-4 * float(np.linalg.norm(omega)):
            break
        rho *= rho_factor
    converged = gap <= 1e-4 * float(np.linalg.norm(omega))
    w, shift = _restore_rate(w, scenario, r0)
    achieved = rate(w, scenario)
    if achieved < r0 - 1e-3:
        raise ConvergenceError(f"penalty AO stagnated: rate {achieved:.4f} below floor {r0:.4f}", residual=r0 - achieved, iterate=w)
    diag = {"history": history, "rate": achieved, "gap": gap, "converged": converged, "restoration": shift}
    return Precoder(w, f"isac_{mode}", diag)


def _rate_gradient(w: np.ndarray, scenario: MimoScenario) -> np.ndarray:
    g = scenario.h_c / scenario.sigma_c
    inner = np.eye(scenario.n_c) + g @ w @ w.conj().T @ g.conj().T
    return g.conj().T @ np.linalg.solve(inner, g @ w) / math.log(2)


def _restore_rate(w: np.ndarray, scenario: MimoScenario, r0: float) -> tuple[np.ndarray, float]:
    """Small move that lifts the rate to ``r0`` while staying in the power ball.

    Follows the rate gradient (tangential to the power sphere when the budget
    is active) with the smallest feasible step, re-linearizing a few times;
    falls back to the segment toward the max-rate precoder. Returns the new
    precoder and the Frobenius distance moved.
    """
    start = w
    for _ in range(20):
        if rate(w, scenario) >= r0:
            return w, float(np.linalg.norm(w - start))
        d = _rate_gradient(w, scenario)
        pw = float(np.sum(np.abs(w) ** 2))
        if pw >= scenario.p_t * (1 - 1e-12):
            d = d - float(np.real(np.vdot(w, d))) / pw * w
        d /= max(float(np.linalg.norm(d)), 1e-300)

        def moved(a):
            cand = w + a * d
            return cand * math.sqrt(scenario.p_t / float(np.sum(np.abs(cand) ** 2))) if pw >= scenario.p_t * (1 - 1e-12) else _project_ball(cand, scenario.p_t)

        a = 1e-6
        while rate(moved(a), scenario) < r0 and a < 1.0:
            a *= 2.0
        if rate(moved(a), scenario) >= r0:
            lo, hi = 0.0, a
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if rate(moved(mid), scenario) >= r0:
                    hi = mid
                else:
                    lo = mid
            return moved(hi), float(np.linalg.norm(moved(hi) - start))
        # take the best point along the path and re-linearize
        w = max((moved(b) for b in np.linspace(0, a, 33)[1:]), key=lambda v: rate(v, scenario))
    target = max_rate_precoder(scenario).w

    def excess(t):
        return rate((1 - t) * start + t * target, scenario) - r0

    t = brentq(excess, 0.0, 1.0, xtol=1e-14)
    while excess(t) < 0 and t < 1:
        t = min(1.0, t + 1e-12 + 1e-9 * t)
    out = (1 - t) * start + t * target
    return out, float(np.linalg.norm(out - start))
