"""Matched-filter ranging on the periodic sample grid, CFAR detection and the OFDM receive chain."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import uniform_filter1d

from .acf import BasebandSignal
from .constellation import make_rng
from .errors import InvalidDimensionError, ValidationError
from .modulation import ModulationBasis
from .numerics import unitary_dft
from .pulse import SPEED_OF_LIGHT


@dataclass(frozen=True)
class Target:
    delay: float
    amplitude: complex


@dataclass(frozen=True)
class Scene:
    """Point targets on the sample grid plus white noise.

    Parameters
    ----------
    targets : sequence of Target or (delay, amplitude) pairs
        Delays in seconds.
    noise_sigma : float
        Per-sample noise standard deviation (complex, ``E|z|^2 = noise_sigma^2``).
    sample_interval : float
        Grid spacing ``T_s`` in seconds.
    """

    targets: tuple
    noise_sigma: float
    sample_interval: float

    def __post_init__(self):
        tg = tuple(t if isinstance(t, Target) else Target(float(t[0]), complex(t[1])) for t in self.targets)
        if any(t.delay < 0 for t in tg):
            raise ValidationError("target delays must be nonnegative")
        if self.noise_sigma < 0:
            raise ValidationError("noise level must be nonnegative")
        if self.sample_interval <= 0:
            raise ValidationError("sample interval must be positive")
        object.__setattr__(self, "targets", tg)

    @classmethod
    def from_ranges(cls, ranges_m, amplitudes, noise_sigma: float, sample_interval: float, c: float = SPEED_OF_LIGHT):
        delays = 2 * np.asarray(ranges_m, dtype=float) / c
        return cls(tuple(zip(delays, amplitudes)), noise_sigma, sample_interval)

    def lags(self) -> np.ndarray:
        return np.array([int(round(t.delay / self.sample_interval)) for t in self.targets], dtype=int)

    def to_dict(self) -> dict:
        return {
            "targets": [[t.delay, t.amplitude.real, t.amplitude.imag] for t in self.targets],
            "noise_sigma": self.noise_sigma,
            "sample_interval": self.sample_interval,
        }


@dataclass(frozen=True, eq=False)
class RangeProfile:
    """Matched-filter output over all cyclic lags."""

    values: np.ndarray
    grid_spacing: float

    def ranges(self, c: float = SPEED_OF_LIGHT) -> np.ndarray:
        return np.arange(self.values.size) * self.grid_spacing * c / 2

    def power_db(self) -> np.ndarray:
        return 10 * np.log10(np.maximum(np.abs(self.values) ** 2, 1e-300))

    def to_csv(self, c: float = SPEED_OF_LIGHT) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lag", "range_m", "power_db"])
        for k, (r, p) in enumerate(zip(self.ranges(c), self.power_db())):
            w.writerow([k, f"{r:.17g}", f"{p:.17g}"])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class DetectionResult:
    """CFAR output: gated detections, all threshold crossings and the threshold itself."""

    lags: np.ndarray
    threshold: np.ndarray
    crossings: np.ndarray
    delays: np.ndarray


@dataclass(frozen=True, eq=False)
class RangeEstimate:
    delays: np.ndarray
    ranges: np.ndarray
    lags: np.ndarray
    errors: np.ndarray | None = None
    rmse: float | None = None
    partial: bool = False


def synthesize_echo(x, scene: Scene, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Sum of cyclically delayed, scaled copies of ``x`` plus complex white noise."""
    samples = x.samples if isinstance(x, BasebandSignal) else np.asarray(x, dtype=complex)
    n = samples.shape[-1]
    y = np.zeros_like(samples)
    for t, lag in zip(scene.targets, scene.lags()):
        if lag >= n:
            raise ValidationError(f"target delay {t.delay:.3e}s exceeds the {n}-sample cyclic window")
        y = y + t.amplitude * np.roll(samples, lag, axis=-1)
    if scene.noise_sigma > 0:
        gen = rng if rng is not None else make_rng(seed)
        z = gen.standard_normal(samples.shape) + 1j * gen.standard_normal(samples.shape)
        y = y + scene.noise_sigma / math.sqrt(2) * z
    return y


def matched_filter_profile(y, x, grid_spacing: float = 1.0) -> RangeProfile | np.ndarray:
    """Cyclic cross-correlation ``sum_i conj(x_i) y_{i+k}`` for every lag ``k``.

    Batched inputs (leading axes) return a bare array.
    """
    xs = x.samples if isinstance(x, BasebandSignal) else np.asarray(x, dtype=complex)
    ys = np.asarray(y, dtype=complex)
    if ys.shape[-1] != xs.shape[-1]:
        raise InvalidDimensionError("echo and reference lengths differ")
    vals = np.fft.ifft(np.fft.fft(ys, axis=-1) * np.conj(np.fft.fft(xs, axis=-1)), axis=-1)
    if vals.ndim == 1:
        return RangeProfile(vals, grid_spacing)
    return vals


def integrate_profiles(profiles) -> RangeProfile:
    """Elementwise mean of profiles on a common grid."""
    profiles = list(profiles)
    if not profiles:
        raise ValidationError("need at least one profile")
    spacing = profiles[0].grid_spacing
    size = profiles[0].values.size
    for p in profiles[1:]:
        if p.values.size != size or not math.isclose(p.grid_spacing, spacing):
            raise ValidationError("profiles are on different grids")
    return RangeProfile(np.mean([p.values for p in profiles], axis=0), spacing)


def cfar_scale(pfa: float, train: int) -> float:
    """CA-CFAR multiplier giving false-alarm probability ``pfa`` for exponential cells."""
    n_cells = 2 * train
    return n_cells * (pfa ** (-1.0 / n_cells) - 1.0)


def cfar_detect(profile, pfa: float, guard: int, train: int) -> DetectionResult:
    """Cell-averaging CFAR on ``|profile|^2`` with cyclic windows.

    The noise estimate for each cell is the mean of ``train`` cells on each
    side beyond ``guard`` guard cells. Detections are threshold crossings
    that are also local maxima of the power.
    """
    if not 0 < pfa < 1:
        raise ValidationError("pfa must lie in (0, 1)")
    if train < 1 or guard < 0:
        raise ValidationError("need train >= 1 and guard >= 0")
    vals = profile.values if isinstance(profile, RangeProfile) else np.asarray(profile)
    spacing = profile.grid_spacing if isinstance(profile, RangeProfile) else 1.0
    power = np.abs(vals) ** 2
    n = power.size
    if 2 * (guard + train) + 1 > n:
        raise ValidationError("CFAR window exceeds the profile length")
    # sum over the full window minus the guard window, both centered and cyclic
    outer = uniform_filter1d(power, 2 * (guard + train) + 1, mode="wrap") * (2 * (guard + train) + 1)
    inner = uniform_filter1d(power, 2 * guard + 1, mode="wrap") * (2 * guard + 1)
    noise = (outer - inner) / (2 * train)
    threshold = cfar_scale(pfa, train) * noise
    crossings = power > threshold
    local_max = (power >= np.roll(power, 1)) & (power >= np.roll(power, -1))
    lags = np.flatnonzero(crossings & local_max)
    return DetectionResult(lags, threshold, crossings, lags * spacing)


def _local_maxima(power: np.ndarray) -> np.ndarray:
    return (power > np.roll(power, 1)) & (power >= np.roll(power, -1))


def estimate_ranges(profile: RangeProfile, q: int, region=None, truth_ranges=None, c: float = SPEED_OF_LIGHT, region_width: float | None = None) -> RangeEstimate:
    """Pick the ``q`` strongest local maxima within ``region`` and score them.

    Parameters
    ----------
    profile : RangeProfile
    q : int
        Number of targets to report.
    region : sequence of int, optional
        Candidate lags; the full grid by default.
    truth_ranges : sequence of float, optional
        True ranges in meters for the RMSE.
    region_width : float, optional
        Width in meters of the search window; unmatched truths are charged
        half of it. Defaults to the span of ``region``.

    Notes
    -----
    Truths are paired greedily (closest first) with unused estimates.
    """
    if q < 1:
        raise ValidationError("q must be >= 1")
    power = np.abs(profile.values) ** 2
    cand = np.arange(power.size) if region is None else np.asarray(region, dtype=int)
    peaks = cand[_local_maxima(power)[cand]]
    order = peaks[np.argsort(-power[peaks], kind="stable")]
    chosen = np.sort(order[:q])
    delays = chosen * profile.grid_spacing
    ranges = delays * c / 2
    partial = chosen.size < q
    if truth_ranges is None:
        return RangeEstimate(delays, ranges, chosen, partial=partial)
    truth = np.asarray(truth_ranges, dtype=float)
    if region_width is None:
        span = cand.max() - cand.min() if cand.size else 0
        region_width = span * profile.grid_spacing * c / 2
    errors = pair_errors(ranges, truth, region_width / 2)
    rmse = float(np.sqrt(np.mean(errors**2)))
    return RangeEstimate(delays, ranges, chosen, errors, rmse, partial)


def pair_errors(estimates, truth, miss_penalty: float) -> np.ndarray:
    """Greedy closest-pair matching; unmatched truths cost ``miss_penalty``."""
    est = list(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    errors = np.full(truth.size, float(miss_penalty))
    open_truth = list(range(truth.size))
    while est and open_truth:
        dist = np.abs(np.subtract.outer(truth[open_truth], est))
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        errors[open_truth[i]] = dist[i, j]
        open_truth.pop(i)
        est.pop(j)
    return errors


def circular_channel(h, x) -> np.ndarray:
    """Cyclic convolution of a channel impulse response with a symbol-rate block."""
    x = np.asarray(x, dtype=complex)
    hh = np.zeros(x.shape[-1], dtype=complex)
    h = np.asarray(h, dtype=complex)
    if h.size > x.shape[-1]:
        raise ValidationError("channel is longer than the block")
    hh[: h.size] = h
    return np.fft.ifft(np.fft.fft(hh) * np.fft.fft(x, axis=-1), axis=-1)


@dataclass(frozen=True, eq=False)
class CommRxResult:
    estimates: np.ndarray
    decisions: np.ndarray
    ser: float
    erasures: np.ndarray


def ofdm_comm_rx(y, channel_taps, symbols_truth, basis: ModulationBasis, constellation, cp_window: int | None = None) -> CommRxResult:
    """One-tap equalization per subcarrier followed by minimum-distance demapping.

    ``y`` is the symbol-rate received block ``h (*) (U s) + z``. Subcarriers
    with zero channel gain are erased and excluded from the SER denominator.
    """
    if basis.kind != "ofdm":
        raise ValidationError("the one-tap receiver needs an OFDM-family basis")
    n = basis.n
    y = np.asarray(y, dtype=complex)
    if y.shape[-1] != n:
        raise InvalidDimensionError("received block length differs from basis size")
    h = np.asarray(channel_taps, dtype=complex)
    limit = n if cp_window is None else cp_window
    if h.size > limit:
        raise ValidationError("channel is longer than the cyclic-prefix window")
    hh = np.zeros(n, dtype=complex)
    hh[: h.size] = h
    f = unitary_dft(n)
    gains = f @ hh
    dead = np.abs(gains) < 1e-12 * max(1.0, float(np.max(np.abs(gains))))
    safe = np.where(dead, 1.0, gains)
    per_carrier = (f @ y) / (math.sqrt(n) * safe)
    fu = f @ basis.matrix
    est = fu.conj().T @ per_carrier
    # symbol i rides on the subcarriers where column i of F U has weight
    erased = (np.abs(fu[dead, :]) > 1e-9).any(axis=0) if np.any(dead) else np.zeros(n, dtype=bool)
    pts = constellation.points
    dec = pts[np.argmin(np.abs(est[:, None] - pts[None, :]), axis=1)]
    truth = np.asarray(symbols_truth, dtype=complex)
    good = ~erased
    errors = np.abs(dec - truth) > 1e-9
    ser = float(errors[good].mean()) if good.any() else float("nan")
    return CommRxResult(est, dec, ser, np.flatnonzero(erased))


def qpsk_ser(es_n0: float) -> float:
    """Exact QPSK symbol error rate at linear ``Es/N0``."""
    from scipy.special import erfc

    qv = 0.5 * erfc(math.sqrt(es_n0) / math.sqrt(2))
    return 2 * qv - qv**2
