"""Periodic auto-correlation of random pulse-shaped signals: sampling, closed form, Monte Carlo.

All ACFs are periodic (cyclic-prefix model). For a length-``LN`` signal the
lag-``k`` value is ``R_k = sum_i conj(x_i) x_{i+k}`` with indices taken mod ``LN``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .constellation import GaussianSymbols, kurtosis, make_rng, sample, validate_moments
from .errors import InvalidDimensionError, NormalizationError, ValidationError
from .modulation import ModulationBasis, bistochastic_v
from .pulse import Pulse, gk_vector, lag_frequency_vectors, nyquist_check

Z99 = 2.5758293035489004
# complex samples held per Monte Carlo chunk
_MC_BLOCK_BUDGET = 4_000_000


@dataclass(frozen=True, eq=False)
class BasebandSignal:
    """Oversampled transmit signal with a record of how it was generated."""

    samples: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=complex)
        if not np.all(np.isfinite(x)):
            raise ValidationError("signal has non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.shape[-1]


@dataclass(frozen=True, eq=False)
class AcfStats:
    """Expected squared ACF per lag split into squared mean (iceberg) and variance (sea)."""

    lags: np.ndarray
    iceberg: np.ndarray
    sea: np.ndarray
    n: int
    m: int

    @property
    def total(self) -> np.ndarray:
        return self.iceberg + self.sea

    @property
    def total_db(self) -> np.ndarray:
        """Level relative to ``N^2`` in dB."""
        return 10 * np.log10(np.maximum(self.total, 1e-300) / self.n**2)

    @property
    def sea_db(self) -> np.ndarray:
        return 10 * np.log10(np.maximum(self.sea, 1e-300) / self.n**2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "iceberg", "sea", "total", "total_db"])
        for row in zip(self.lags, self.iceberg, self.sea, self.total, self.total_db):
            w.writerow([int(row[0])] + [f"{v:.17g}" for v in row[1:]])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class McAcfResult:
    """Monte Carlo estimate of the expected squared ACF with 99% normal-approximation CIs."""

    mean: np.ndarray
    ci_halfwidth: np.ndarray
    std: np.ndarray
    trials: int
    acf_mean: np.ndarray | None = None
    acf_variance: np.ndarray | None = None

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.ci_halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.ci_halfwidth

    def contains(self, values, rel_tol: float = 1e-9) -> np.ndarray:
        """Per-lag coverage test; zero-width intervals use a relative tolerance."""
        values = np.asarray(values, dtype=float)
        slack = rel_tol * np.maximum(np.abs(self.mean), 1.0)
        return np.abs(values - self.mean) <= self.ci_halfwidth + slack


def _check_inputs(basis: ModulationBasis, pulse: Pulse):
    if basis.n != pulse.n:
        raise InvalidDimensionError(f"basis size {basis.n} does not match pulse symbol count {pulse.n}")


def shape_symbols(symbols, basis: ModulationBasis, pulse: Pulse) -> np.ndarray:
    """Vectorized shaping; ``symbols`` may carry leading batch axes."""
    _check_inputs(basis, pulse)
    s = np.asarray(symbols, dtype=complex)
    if s.shape[-1] != basis.n:
        raise InvalidDimensionError(f"expected {basis.n} symbols per block, got {s.shape[-1]}")
    x = s @ basis.matrix.T
    up = np.zeros(s.shape[:-1] + (pulse.l * pulse.n,), dtype=complex)
    up[..., :: pulse.l] = x
    return np.fft.ifft(np.fft.fft(up, axis=-1) * np.fft.fft(pulse.taps), axis=-1)


def shape_signal(symbols, basis: ModulationBasis, pulse: Pulse, provenance: dict | None = None) -> BasebandSignal:
    """Map a symbol block through ``U``, zero-stuff by ``L`` and circularly convolve with the pulse.

    Parameters
    ----------
    symbols : array_like
        Length-``N`` complex symbols.
    basis : ModulationBasis
    pulse : Pulse

    Returns
    -------
    BasebandSignal
        Length ``L*N`` samples.
    """
    s = np.asarray(symbols, dtype=complex)
    if s.ndim != 1:
        raise InvalidDimensionError("shape_signal takes a single symbol block")
    prov = {"basis": basis.kind, "pulse": pulse.label}
    prov.update(provenance or {})
    return BasebandSignal(shape_symbols(s, basis, pulse), prov)


def _samples(x) -> np.ndarray:
    return x.samples if isinstance(x, BasebandSignal) else np.asarray(x, dtype=complex)


def periodic_acf(x, method: str = "fft") -> np.ndarray:
    """Periodic ACF ``R_k = x^H J_k x`` for every lag (last axis).

    Parameters
    ----------
    x : BasebandSignal or array_like
    method : {"fft", "shift"}
        ``shift`` is the direct O(n^2) evaluation, kept as a reference.
    """
    v = _samples(x)
    if method == "fft":
        r = np.fft.ifft(np.abs(np.fft.fft(v, axis=-1)) ** 2, axis=-1)
        r[..., 0] = r[..., 0].real
        return r
    if method == "shift":
        if v.ndim != 1:
            raise InvalidDimensionError("shift method takes one signal")
        return np.array([np.vdot(v, np.roll(v, -k)) for k in range(v.size)])
    raise ValidationError(f"unknown ACF method {method!r}")


def coherent_integrated_acf(signals) -> np.ndarray:
    """Average of the periodic ACFs of ``M`` signals."""
    signals = list(signals)
    if not signals:
        raise ValidationError("need at least one signal")
    arr = np.stack([_samples(s) for s in signals])
    return periodic_acf(arr).mean(axis=0)


def mainlobe_level(n: int, kappa: float, m: int = 1) -> float:
    """Expected squared zero-lag ACF ``n^2 + (kappa - 1) n / m``."""
    if n < 1 or m < 1 or kappa < 1:
        raise ValidationError("need n >= 1, m >= 1 and kappa >= 1")
    return n**2 + (kappa - 1) * n / m


def _standardized_kurtosis(constellation) -> float:
    if isinstance(constellation, GaussianSymbols):
        return 2.0
    rep = validate_moments(constellation)
    if not rep.ok:
        raise NormalizationError(f"constellation violates zero-mean/zero-pseudo-variance/unit-power: {rep.violations}")
    return kurtosis(constellation)


def expected_squared_acf_lags(g, l: int, basis: ModulationBasis, kappa: float, m: int = 1, lags=None) -> AcfStats:
    """Closed-form expected squared ACF from the first-``N`` spectrum bins ``g``.

    ``iceberg_k = N |f_k^H g~_k|^2`` and
    ``sea_k = (||g~_k||^2 + (kappa - 2) N ||V^T (g~_k o conj f_k)||^2) / m`` where
    ``f_k[n] = exp(-j 2 pi n k / (LN)) / sqrt(N)`` and ``V = |F_N U|^2``.
    """
    g = np.asarray(g, dtype=float)
    n = g.size
    lags = np.arange(l * n) if lags is None else np.asarray(lags, dtype=int)
    f = lag_frequency_vectors(n, l, lags)
    w = np.exp(-2j * np.pi * lags / l)
    gt = g[None, :] + (1 - g[None, :]) * w[:, None]
    ice = n * np.abs(np.sum(np.conj(f) * gt, axis=1)) ** 2
    vt_proj = (gt * np.conj(f)) @ bistochastic_v(basis)
    sea = (np.sum(np.abs(gt) ** 2, axis=1) + (kappa - 2) * n * np.sum(np.abs(vt_proj) ** 2, axis=1)) / m
    return AcfStats(lags, ice, sea, n, m)


def expected_squared_acf(basis: ModulationBasis, constellation, pulse: Pulse, m: int = 1) -> AcfStats:
    """Closed-form mean of ``|R_bar_k|^2`` over i.i.d. symbols, for every lag.

    Parameters
    ----------
    basis : ModulationBasis
    constellation : Constellation or GaussianSymbols
        Must have zero mean, zero pseudo-variance and unit power.
    pulse : Pulse
        Must pass :func:`nyquist_check` at 1e-3.
    m : int
        Number of coherently integrated blocks.
    """
    _check_inputs(basis, pulse)
    if m < 1:
        raise ValidationError("coherent integration count must be >= 1")
    rep = nyquist_check(pulse, 1e-3)
    if not rep.passed:
        raise ValidationError(f"pulse is not Nyquist (max violation {rep.max_violation:.2e})")
    kappa = _standardized_kurtosis(constellation)
    return expected_squared_acf_lags(pulse.g, pulse.l, basis, kappa, m)


def _mc_chunk(seed_seq, size, basis, constellation, pulse, m):
    rng = make_rng(seed_seq)
    s = sample(constellation, (size, m, basis.n), rng=rng)
    x = shape_symbols(s, basis, pulse)
    r = periodic_acf(x).mean(axis=1)
    p = np.abs(r) ** 2
    return p.sum(axis=0), (p**2).sum(axis=0), r.sum(axis=0)


def mc_expected_squared_acf(
    basis: ModulationBasis,
    constellation,
    pulse: Pulse,
    m: int = 1,
    trials: int = 10_000,
    seed=0,
    chunk: int = 2000,
    pool: Executor | None = None,
) -> McAcfResult:
    """Monte Carlo estimate of the expected squared ACF.

    Trials are split into fixed-size chunks, each with its own child seed, and
    the partial sums are reduced in chunk order, so the result does not
    depend on whether an executor ``pool`` runs the chunks. Chunks shrink for large ``m`` to bound memory.

    Besides the mean of ``|R_bar_k|^2`` the result carries the sample mean and
    sample variance of ``R_bar_k`` itself; the variance estimates the
    sea level without relying on the closed form.
    """
    if trials < 100:
        raise ValidationError("need at least 100 trials")
    _check_inputs(basis, pulse)
    chunk = max(1, min(chunk, _MC_BLOCK_BUDGET // (m * pulse.l * pulse.n)))
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(children, sizes))
    if pool is not None:
        parts = list(pool.map(lambda job: _mc_chunk(job[0], job[1], basis, constellation, pulse, m), jobs))
    else:
        parts = [_mc_chunk(c, s, basis, constellation, pulse, m) for c, s in jobs]
    s1 = np.zeros(pulse.l * pulse.n)
    s2 = np.zeros(pulse.l * pulse.n)
    sr = np.zeros(pulse.l * pulse.n, dtype=complex)
    for a, b, c in parts:
        s1 += a
        s2 += b
        sr += c
    mean = s1 / trials
    var = np.maximum(s2 / trials - mean**2, 0.0) * trials / (trials - 1)
    std = np.sqrt(var)
    acf_mean = sr / trials
    acf_var = np.maximum(s1 - trials * np.abs(acf_mean) ** 2, 0.0) / (trials - 1)
    return McAcfResult(mean, Z99 * std / math.sqrt(trials), std, trials, acf_mean, acf_var)


def pulse_iceberg(pulse: Pulse) -> np.ndarray:
    """``N^2 |p^H J_k p|^2``: the squared ACF of the pulse itself, scaled to the signal mainlobe."""
    r = periodic_acf(pulse.taps)
    return pulse.n**2 * np.abs(r) ** 2
