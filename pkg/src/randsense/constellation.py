"""Discrete complex constellations, their moments, and reproducible sampling.

Point ordering
--------------
PSK points are stored so that ``points[gray(k)]`` sits at angular position
``k``, where ``gray(k) = k ^ (k >> 1)``. Square QAM uses a per-axis Gray map:
``points[(gray(i) << b) | gray(q)]`` has in-phase level index ``i`` and
quadrature level index ``q``, ``b = log2(sqrt(M))``. Cross QAM points are
listed row-major (top row first, left to right); no Gray labeling exists for
those shapes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NormalizationError, UnsupportedError, ValidationError

SQUARE_QAM = (16, 64, 256, 1024)
CROSS_QAM = (32, 128, 512, 2048)
PROB_TOL = 1e-12
RENORM_TOL = 1e-9
MOMENT_TOL = 1e-9


def _gray(k):
    return k ^ (k >> 1)


@dataclass(frozen=True)
class MomentReport:
    """First, second and fourth moments of a constellation.

    ``violations`` lists which zero-mean / zero-pseudo-variance / unit-power
    conditions fail beyond the tolerance used to build the report.
    """

    mean: complex
    pseudo_variance: complex
    power: float
    kurtosis: float
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True, eq=False)
class Constellation:
    """Immutable discrete alphabet with a probability mass function.

    Parameters
    ----------
    points : array_like
        Complex symbol alphabet.
    probs : array_like, optional
        Probabilities; uniform when omitted. Sums off by at most 1e-9 are
        renormalized, larger deviations are rejected.
    label : str
    """

    points: np.ndarray
    probs: np.ndarray | None = None
    label: str = ""
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).reshape(-1)
        if pts.size == 0 or not np.all(np.isfinite(pts)):
            raise ValidationError("constellation needs at least one finite point")
        if self.probs is None:
            p = np.full(pts.size, 1.0 / pts.size)
        else:
            p = np.asarray(self.probs, dtype=float).reshape(-1)
            if p.size != pts.size:
                raise ValidationError("points and probs have different lengths")
            if np.any(p < 0) or not np.all(np.isfinite(p)):
                raise ValidationError("probabilities must be finite and nonnegative")
            total = p.sum()
            if abs(total - 1.0) > RENORM_TOL:
                raise ValidationError(f"probabilities sum to {total}, not 1")
            p = p / total
        pts.setflags(write=False)
        p.setflags(write=False)
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        cdf.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "_cdf", cdf)

    @property
    def size(self) -> int:
        return self.points.size

    def moments(self, tol: float = MOMENT_TOL) -> MomentReport:
        return validate_moments(self, tol)

    @property
    def is_standardized(self) -> bool:
        """True when zero mean, zero pseudo-variance and unit power hold to 1e-9."""
        return validate_moments(self, MOMENT_TOL).ok

    def normalized(self) -> "Constellation":
        """Copy scaled to unit average power."""
        power = float(self.probs @ np.abs(self.points) ** 2)
        if power <= 0:
            raise NormalizationError("cannot normalize a zero-power constellation")
        return Constellation(self.points / math.sqrt(power), self.probs, self.label)

    def with_probs(self, probs) -> "Constellation":
        return Constellation(self.points, probs, self.label)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "points": [[float(z.real), float(z.imag)] for z in self.points],
            "probs": [float(v) for v in self.probs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Constellation":
        unknown = set(data) - {"label", "points", "probs"}
        if unknown:
            raise ValidationError(f"unknown constellation fields: {sorted(unknown)}")
        pts = np.asarray(data["points"], dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValidationError("points must be a list of [re, im] pairs")
        return cls(pts[:, 0] + 1j * pts[:, 1], data.get("probs"), data.get("label", ""))

    @classmethod
    def from_json(cls, text: str) -> "Constellation":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class GaussianSymbols:
    """Circularly symmetric complex Gaussian symbols with unit power (kurtosis 2)."""

    label: str = "gaussian"

    @property
    def is_standardized(self) -> bool:
        return True

    def moments(self, tol: float = MOMENT_TOL) -> MomentReport:
        return MomentReport(0j, 0j, 1.0, 2.0)


def _psk(order: int) -> np.ndarray:
    k = np.arange(order)
    pts = np.empty(order, dtype=complex)
    pts[_gray(k)] = np.exp(1j * (np.pi / order + 2 * np.pi * k / order))
    return pts


def _square_qam(order: int) -> np.ndarray:
    side = int(round(math.sqrt(order)))
    bits = side.bit_length() - 1
    levels = 2 * np.arange(side) - (side - 1)
    i, q = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
    pts = np.empty(order, dtype=complex)
    pts[(_gray(i) << bits) | _gray(q)] = levels[i] + 1j * levels[q]
    return pts


def _cross_qam(order: int) -> np.ndarray:
    # a 2^(b+1) x 2^(b+1) odd-integer grid with the four c x c corners removed
    side = 3 * int(round(math.sqrt(order / 32))) * 2
    corner = side // 6
    levels = 2 * np.arange(side) - (side - 1)
    pts = []
    for r in range(side):
        for col in range(side):
            in_corner_r = r < corner or r >= side - corner
            in_corner_c = col < corner or col >= side - corner
            if in_corner_r and in_corner_c:
                continue
            pts.append(levels[col] + 1j * levels[side - 1 - r])
    pts = np.asarray(pts)
    assert pts.size == order
    return pts


def integer_lattice(kind: str, order: int) -> np.ndarray:
    """Unnormalized point set (odd integers for QAM, unit circle for PSK)."""
    kind = kind.lower()
    if kind == "psk":
        if order < 4:
            raise UnsupportedError("PSK orders below 4 are not supported (BPSK has nonzero pseudo-variance)")
        return _psk(int(order))
    if kind == "qam":
        if order in SQUARE_QAM:
            return _square_qam(order)
        if order in CROSS_QAM:
            return _cross_qam(order)
        raise UnsupportedError(f"QAM order {order} is not supported; use one of {SQUARE_QAM + CROSS_QAM}")
    raise UnsupportedError(f"unknown constellation kind {kind!r}")


def make_standard(kind: str, order: int) -> Constellation:
    """Uniform unit-power PSK or QAM constellation.

    Parameters
    ----------
    kind : {"psk", "qam"}
    order : int
        PSK: any order >= 4. QAM: square 16/64/256/1024 or cross 32/128/512/2048.

    Examples
    --------
    >>> c = make_standard("qam", 16)
    >>> round(kurtosis(c), 6)
    1.32
    """
    raw = integer_lattice(kind, order)
    label = f"{order}-{kind.upper()}"
    return Constellation(raw, None, label).normalized()


def two_ring_apsk(inner_points: int = 8, outer_points: int = 8, ratio: float = 3.0, inner_prob: float = 0.9) -> Constellation:
    """Unit-power two-ring APSK with a heavy outer ring (super-Gaussian for the defaults).

    Ring radii are ``r`` and ``ratio * r``; each ring is a uniform PSK.
    """
    if inner_points < 3 or outer_points < 3:
        raise UnsupportedError("each ring needs at least 3 points for zero pseudo-variance")
    inner = np.exp(2j * np.pi * np.arange(inner_points) / inner_points)
    outer = ratio * np.exp(2j * np.pi * (np.arange(outer_points) + 0.5) / outer_points)
    probs = np.concatenate([np.full(inner_points, inner_prob / inner_points), np.full(outer_points, (1 - inner_prob) / outer_points)])
    c = Constellation(np.concatenate([inner, outer]), probs, f"APSK-{inner_points}+{outer_points}")
    return c.normalized()


def validate_moments(c, tol: float = MOMENT_TOL) -> MomentReport:
    """Report mean, pseudo-variance, power and kurtosis and flag violations.

    Kurtosis is the normalized fourth moment ``E|s|^4 / (E|s|^2)^2``.
    """
    if isinstance(c, GaussianSymbols):
        return c.moments(tol)
    p, s = c.probs, c.points
    mean = complex(p @ s)
    pvar = complex(p @ s**2)
    power = float(p @ np.abs(s) ** 2)
    fourth = float(p @ np.abs(s) ** 4)
    kurt = fourth / power**2 if power > 0 else float("nan")
    bad = []
    if abs(mean) > tol:
        bad.append("mean")
    if abs(pvar) > tol:
        bad.append("pseudo_variance")
    if abs(power - 1.0) > tol:
        bad.append("power")
    return MomentReport(mean, pvar, power, kurt, tuple(bad))


def kurtosis(c) -> float:
    """Fourth moment ``sum p |s|^4`` of a unit-power constellation."""
    if isinstance(c, GaussianSymbols):
        return 2.0
    power = float(c.probs @ np.abs(c.points) ** 2)
    if abs(power - 1.0) > MOMENT_TOL:
        raise NormalizationError(f"constellation power is {power}; normalize before computing kurtosis")
    return float(c.probs @ np.abs(c.points) ** 4)


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) from an int or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def sample(c, n: int, seed=None, rng: np.random.Generator | None = None) -> np.ndarray:
    """Draw ``n`` i.i.d. symbols (any shape accepted for ``n``).

    Uses inverse-CDF lookup on the cached cumulative table.
    """
    gen = rng if rng is not None else make_rng(seed)
    shape = (n,) if np.isscalar(n) else tuple(n)
    if any(int(d) < 1 for d in shape):
        raise ValidationError("sample size must be >= 1")
    if isinstance(c, GaussianSymbols):
        return (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / math.sqrt(2)
    u = gen.random(shape)
    idx = np.searchsorted(c._cdf, u, side="right")
    np.minimum(idx, c.size - 1, out=idx)
    return c.points[idx]


def from_config(spec) -> Constellation | GaussianSymbols:
    """Build a constellation from a config value.

    Accepted forms: ``"16-qam"``, ``"8-psk"``, ``"gaussian"``, ``"apsk-super"``,
    ``{"kind": "qam", "order": 64}`` or the JSON point/prob dictionary.
    """
    if isinstance(spec, str):
        name = spec.lower()
        if name == "gaussian":
            return GaussianSymbols()
        if name == "apsk-super":
            return two_ring_apsk()
        try:
            order, kind = name.split("-")
            return make_standard(kind, int(order))
        except ValueError as exc:
            raise ValidationError(f"cannot parse constellation {spec!r}") from exc
    if isinstance(spec, dict):
        if "points" in spec:
            return Constellation.from_dict(spec)
        unknown = set(spec) - {"kind", "order"}
        if unknown:
            raise ValidationError(f"unknown constellation fields: {sorted(unknown)}")
        return make_standard(spec["kind"], int(spec["order"]))
    raise ValidationError(f"cannot interpret constellation spec {spec!r}")
