"""Reproducible experiments: parameter records, drivers and result tables.

Every driver takes a validated parameter record, an integer seed and an
optional executor, and returns a list of :class:`Table` / :class:`Document`
results. Work handed to the executor is keyed by deterministic per-item
seeds and reduced in submission order, so results do not depend on the
number of workers.
"""

from __future__ import annotations

import math
import typing
from concurrent.futures import Executor
from dataclasses import MISSING, dataclass, field, fields

import numpy as np

from . import acf, cdtheory, mimo, pcs
from . import pulse as pulse_mod
from .constellation import GaussianSymbols, from_config as constellation_from_config, kurtosis, make_rng, sample
from .errors import ConfigError
from .modulation import from_config as basis_from_config
from .ranging import RangeProfile, Scene, estimate_ranges, matched_filter_profile, synthesize_echo


@dataclass
class Table:
    """Rows under a fixed header; emitted as ``<name>.csv`` or ``<name>.json``."""

    name: str
    header: list
    rows: list

    def column(self, key: str) -> list:
        i = self.header.index(key)
        return [r[i] for r in self.rows]

    def records(self) -> list[dict]:
        return [dict(zip(self.header, r)) for r in self.rows]


@dataclass
class Document:
    """Free-form JSON result, emitted as ``<name>.json``."""

    name: str
    data: dict


# ---------------------------------------------------------------- parameters


def _check_value(value, tp, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union or (origin is not None and str(origin) == "<class 'types.UnionType'>"):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _check_value(value, inner[0], path)
    if tp is typing.Any:
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(path, f"expected a finite number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        (item,) = typing.get_args(tp)
        return [_check_value(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {value!r}")
        return value
    raise TypeError(f"unsupported parameter type {tp!r}")


def parse_params(cls, data, path: str = "params"):
    """Build a parameter record, rejecting unknown fields and wrong types."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(path, "expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{path}.{key}", "unknown field")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = _check_value(data[f.name], hints[f.name], f"{path}.{f.name}")
        elif f.default is MISSING and f.default_factory is MISSING:
            raise ConfigError(f"{path}.{f.name}", "required field missing")
    obj = cls(**kwargs)
    obj.validate(path)
    return obj


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(path, message)


def _ascending(values, path):
    _require(all(b >= a for a, b in zip(values, values[1:])), path, "must be sorted ascending")


@dataclass
class AcfCompareParams:
    n: int = 8
    l: int = 4
    m: int = 1
    trials: int = 100_000
    bases: list[str] = field(default_factory=lambda: ["sc", "ofdm", "cdma"])
    constellations: list[str] = field(default_factory=lambda: ["4-psk", "16-qam"])
    pulses: list[str] = field(default_factory=lambda: ["rrc-0.35", "brickwall"])
    lags: list[int] | None = None
    chunk: int = 2000

    def validate(self, path):
        _require(self.n >= 1, f"{path}.n", "must be >= 1")
        _require(self.l >= 2, f"{path}.l", "must be >= 2")
        _require(self.m >= 1, f"{path}.m", "must be >= 1")
        _require(self.trials >= 100, f"{path}.trials", "must be >= 100")
        _require(self.chunk >= 1, f"{path}.chunk", "must be >= 1")
        for key in ("bases", "constellations", "pulses"):
            _require(len(getattr(self, key)) > 0, f"{path}.{key}", "must be nonempty")
        if self.lags is not None:
            _require(all(0 <= k < self.l * self.n for k in self.lags), f"{path}.lags", "lags must lie in 0..LN-1")


@dataclass
class CoherentIntegrationParams:
    n: int = 128
    l: int = 10
    basis: str = "ofdm"
    constellation: str = "16-qam"
    pulse: str = "rrc-0.35"
    m_list: list[int] = field(default_factory=lambda: [1, 100, 1000])
    trials: list[int] = field(default_factory=lambda: [2000, 200, 100])

    def validate(self, path):
        _require(self.l >= 2, f"{path}.l", "must be >= 2")
        _require(len(self.m_list) > 0 and all(m >= 1 for m in self.m_list), f"{path}.m_list", "needs counts >= 1")
        _ascending(self.m_list, f"{path}.m_list")
        _require(len(self.trials) == len(self.m_list), f"{path}.trials", "needs one trial count per m")
        _require(all(t >= 100 for t in self.trials), f"{path}.trials", "each count must be >= 100")


@dataclass
class ModulationCompareParams:
    n: int = 128
    l: int = 10
    constellation: str = "16-qam"
    pulse: str = "rrc-0.35"
    bases: list[str] = field(default_factory=lambda: ["sc", "cdma", "ofdm"])
    m_list: list[int] = field(default_factory=lambda: [1, 100])

    def validate(self, path):
        _require(self.l >= 2, f"{path}.l", "must be >= 2")
        _require(len(self.bases) > 0, f"{path}.bases", "must be nonempty")
        _require(len(self.m_list) > 0 and all(m >= 1 for m in self.m_list), f"{path}.m_list", "needs counts >= 1")


@dataclass
class PcsSweepParams:
    constellation: str = "64-qam"
    snr_db: float = 25.0
    c0_list: list[float] = field(default_factory=lambda: [1.0, 1.381])
    gh_order: int = pcs.DEFAULT_GH_ORDER
    tol: float = pcs.DEFAULT_TOL
    max_iter: int = pcs.DEFAULT_MAX_ITER
    proxy_n: int = 128
    proxy_l: int = 10
    proxy_pulse: str = "rrc-0.35"

    def validate(self, path):
        _require(len(self.c0_list) > 0, f"{path}.c0_list", "must be nonempty")
        _ascending(self.c0_list, f"{path}.c0_list")
        _require(all(c >= 1 for c in self.c0_list), f"{path}.c0_list", "caps must be >= 1")
        _require(self.tol > 0, f"{path}.tol", "must be positive")


@dataclass
class CdCurveParams:
    power_budget: float = 10.0
    d_list: list[float] = field(default_factory=lambda: [0.1, 0.15, 0.2, 0.3, 1.0])
    include_tight: bool = True
    tight_offset: float = 1e-4
    n_x: int = 65
    span: float = 16 / 3
    n_h: int = 20
    y_step: float = 0.05
    tol: float = cdtheory.DEFAULT_TOL
    max_iter: int = 50_000

    def validate(self, path):
        _require(self.power_budget > 0, f"{path}.power_budget", "must be positive")
        _require(len(self.d_list) > 0, f"{path}.d_list", "must be nonempty")
        _ascending(self.d_list, f"{path}.d_list")
        _require(self.tight_offset > 0, f"{path}.tight_offset", "must be positive")
        _require(self.n_x >= 3 and self.n_x % 2 == 1, f"{path}.n_x", "must be odd and >= 3")


@dataclass
class PulseDesignParams:
    n: int = 128
    l: int = 10
    alpha: float = 0.35
    symbol_rate: float = 100e6
    region_m: list[float] = field(default_factory=lambda: [23.74, 31.24])
    reference_m: float = 20.0
    objective: str = "sum"
    basis: str = "ofdm"
    constellation: str = "16-qam"
    m: int = 1000

    def validate(self, path):
        _require(len(self.region_m) == 2 and self.region_m[0] < self.region_m[1], f"{path}.region_m", "needs [low, high] with low < high")
        _require(self.region_m[0] > self.reference_m, f"{path}.region_m", "must lie beyond the reference range")
        _require(self.objective in ("sum", "max", "full_expected"), f"{path}.objective", "must be sum, max or full_expected")
        _require(self.symbol_rate > 0, f"{path}.symbol_rate", "must be positive")
        _require(self.m >= 1, f"{path}.m", "must be >= 1")


@dataclass
class RangingTwoTargetParams(PulseDesignParams):
    strong_m: float = 20.0
    weak_m: float = 30.0
    gap_db: list[float] = field(default_factory=lambda: [43.0, 46.0])
    noise_sigma: float = 0.1
    m_list: list[int] = field(default_factory=lambda: [1, 1000])
    trials: int = 200

    def validate(self, path):
        super().validate(path)
        _require(len(self.gap_db) == 2 and self.gap_db[0] <= self.gap_db[1], f"{path}.gap_db", "needs [low, high]")
        _require(self.noise_sigma >= 0, f"{path}.noise_sigma", "must be nonnegative")
        _require(len(self.m_list) > 0 and all(m >= 1 for m in self.m_list), f"{path}.m_list", "needs counts >= 1")
        _require(self.trials >= 1, f"{path}.trials", "must be >= 1")
        _require(self.region_m[0] <= self.weak_m <= self.region_m[1], f"{path}.weak_m", "must lie inside region_m")


@dataclass
class MimoBaseParams:
    n_t: int = 32
    n_s: int = 32
    n: int = 24
    n_c: int = 4
    coefficient: float = 0.7
    entry_variance: float = 1.0
    scenario_seed: int = 1
    trials: int = 500
    sgd: dict = field(default_factory=dict)

    def validate(self, path):
        for key in ("n_t", "n_s", "n", "n_c"):
            _require(getattr(self, key) >= 1, f"{path}.{key}", "must be >= 1")
        _require(0 <= self.coefficient < 1, f"{path}.coefficient", "must lie in [0, 1)")
        _require(self.trials >= 100, f"{path}.trials", "must be >= 100")
        allowed = {f.name for f in fields(mimo.SgdConfig)} - {"seed"}
        for key, value in self.sgd.items():
            _require(key in allowed, f"{path}.sgd.{key}", "unknown field")
            _check_value(value, float if key in ("step0", "decay", "momentum") else int, f"{path}.sgd.{key}")

    def sgd_config(self, seed: int) -> mimo.SgdConfig:
        return mimo.SgdConfig(**self.sgd, seed=seed)


@dataclass
class MimoSensingSweepParams(MimoBaseParams):
    snr_db_list: list[float] = field(default_factory=lambda: [0.0, 10.0, 20.0, 30.0])

    def validate(self, path):
        super().validate(path)
        _require(len(self.snr_db_list) > 0, f"{path}.snr_db_list", "must be nonempty")
        _ascending(self.snr_db_list, f"{path}.snr_db_list")


@dataclass
class MimoIsacTradeoffParams(MimoBaseParams):
    n: int = 20
    snr_db: float = 15.0
    r0_list: list[float] = field(default_factory=lambda: [0.0, 20.0, 24.0, 27.0, 29.0, 30.5])
    ddp_realizations: int = 24
    trials: int = 400
    rho0: float = 1.0
    rho_factor: float = 5.0
    rounds: int = 8

    def validate(self, path):
        super().validate(path)
        _require(len(self.r0_list) > 0 and all(r >= 0 for r in self.r0_list), f"{path}.r0_list", "needs nonnegative rate floors")
        _ascending(self.r0_list, f"{path}.r0_list")
        _require(self.ddp_realizations >= 2, f"{path}.ddp_realizations", "must be >= 2")
        _require(self.rho0 > 0 and self.rho_factor > 1, f"{path}.rho_factor", "need rho0 > 0 and rho_factor > 1")


# ---------------------------------------------------------------- helpers


def _map(pool: Executor | None, fn, items) -> list:
    items = list(items)
    if pool is None:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def make_pulse(spec: str, n: int, l: int) -> pulse_mod.Pulse:
    """``"rrc-<alpha>"`` or ``"brickwall"`` (zero roll-off)."""
    name = spec.lower()
    if name == "brickwall":
        return pulse_mod.rrc_taps(0.0, l, n)
    if name.startswith("rrc-"):
        try:
            alpha = float(name[4:])
        except ValueError as exc:
            raise ConfigError("pulse", f"cannot parse roll-off in {spec!r}") from exc
        return pulse_mod.rrc_taps(alpha, l, n)
    raise ConfigError("pulse", f"unknown pulse {spec!r}")


def sea_level_db(sea: np.ndarray, n: int) -> float:
    """Mean variance over the nonzero lags relative to ``N^2``, in dB."""
    return 10 * math.log10(float(np.mean(sea[1:])) / n**2)


def acf_stats_table(stats: acf.AcfStats, name: str = "acf_stats") -> Table:
    header = ["lag", "iceberg", "sea", "total", "total_db"]
    rows = [[int(k), a, b, t, d] for k, a, b, t, d in zip(stats.lags, stats.iceberg, stats.sea, stats.total, stats.total_db)]
    return Table(name, header, rows)


def _kappa(const) -> float:
    return 2.0 if isinstance(const, GaussianSymbols) else kurtosis(const)


# ---------------------------------------------------------------- ACF experiments


def run_acf_compare(p: AcfCompareParams, seed: int, pool: Executor | None = None) -> list:
    """Closed form against Monte Carlo for every basis/constellation/pulse combination."""
    combos = [(b, c, q) for b in p.bases for c in p.constellations for q in p.pulses]
    lags = np.arange(p.l * p.n) if p.lags is None else np.asarray(p.lags, dtype=int)

    def one(item):
        idx, (b, c, q) = item
        basis, const, pul = basis_from_config(b, p.n), constellation_from_config(c), make_pulse(q, p.n, p.l)
        exact = acf.expected_squared_acf(basis, const, pul, p.m)
        mc = acf.mc_expected_squared_acf(basis, const, pul, p.m, p.trials, seed=[seed, idx], chunk=p.chunk)
        return exact, mc

    parts = _map(pool, one, enumerate(combos))
    detail, cover = [], []
    for idx, ((b, c, q), (exact, mc)) in enumerate(zip(combos, parts)):
        inside = mc.contains(exact.total)
        for k in lags:
            detail.append([idx, b, c, q, int(k), exact.total[k], mc.mean[k], mc.ci_halfwidth[k], bool(inside[k])])
        cover.append([idx, b, c, q, int(lags.size), float(np.mean(inside[lags]))])
    header = ["config", "basis", "constellation", "pulse", "lag", "closed_form", "mc_mean", "mc_ci_halfwidth", "inside_ci"]
    inside_all = sum(r[-1] * r[-2] for r in cover)
    total = sum(r[-2] for r in cover)
    summary = {"trials": p.trials, "m": p.m, "pooled_inside_fraction": inside_all / total, "lags_checked": total}
    return [
        Table("acf_compare", header, detail),
        Table("coverage", ["config", "basis", "constellation", "pulse", "lags", "inside_fraction"], cover),
        Document("summary", summary),
    ]


def run_coherent_integration(p: CoherentIntegrationParams, seed: int, pool: Executor | None = None) -> list:
    basis = basis_from_config(p.basis, p.n)
    const = constellation_from_config(p.constellation)
    pul = make_pulse(p.pulse, p.n, p.l)

    def one(item):
        idx, (m, trials) = item
        return acf.mc_expected_squared_acf(basis, const, pul, m, trials, seed=[seed, idx])

    mcs = _map(pool, one, enumerate(zip(p.m_list, p.trials)))
    out, rows = [], []
    base_cf = base_mc = None
    for m, trials, mc in zip(p.m_list, p.trials, mcs):
        stats = acf.expected_squared_acf(basis, const, pul, m)
        out.append(acf_stats_table(stats, f"acf_stats_m{m}"))
        cf_db = sea_level_db(stats.sea, p.n)
        mc_db = sea_level_db(mc.acf_variance, p.n)
        if base_cf is None:
            base_cf, base_mc = cf_db, mc_db
        rows.append([m, trials, cf_db, mc_db, base_cf - cf_db, base_mc - mc_db])
    out.append(Table("sea_levels", ["m", "trials", "closed_form_sea_db", "mc_sea_db", "closed_form_drop_db", "mc_drop_db"], rows))
    return out


def run_modulation_compare(p: ModulationCompareParams, seed: int, pool: Executor | None = None) -> list:
    const = constellation_from_config(p.constellation)
    pul = make_pulse(p.pulse, p.n, p.l)
    detail, levels = [], []
    for m in p.m_list:
        stats = {b: acf.expected_squared_acf(basis_from_config(b, p.n), const, pul, m) for b in p.bases}
        best = min(sea_level_db(s.sea, p.n) for s in stats.values())
        for b, s in stats.items():
            for k in range(s.lags.size):
                detail.append([b, m, int(k), s.iceberg[k], s.sea[k], s.total[k], s.total_db[k]])
            lvl = sea_level_db(s.sea, p.n)
            levels.append([b, m, lvl, lvl - best])
    return [
        Table("modulation_compare", ["basis", "m", "lag", "iceberg", "sea", "total", "total_db"], detail),
        Table("sea_levels", ["basis", "m", "sea_level_db", "above_best_db"], levels),
        Document("summary", {"constellation": p.constellation, "kurtosis": _kappa(const)}),
    ]


# ---------------------------------------------------------------- shaping and C-D


def run_pcs_sweep(p: PcsSweepParams, seed: int, pool: Executor | None = None) -> list:
    const = constellation_from_config(p.constellation)
    snr = 10 ** (p.snr_db / 10)
    problem = pcs.PcsProblem(const.points, p.c0_list[0], snr, p.gh_order)
    points = pcs.sweep_tradeoff(problem, p.c0_list, p.tol, p.max_iter)
    uniform = pcs.awgn_mi(np.full(const.size, 1 / const.size), const.points, snr, p.gh_order)
    proxy_pulse = make_pulse(p.proxy_pulse, p.proxy_n, p.proxy_l)
    ofdm = basis_from_config("ofdm", p.proxy_n)
    curve, dists = [], []
    for pt in points:
        sea = acf.expected_squared_acf_lags(proxy_pulse.g, p.proxy_l, ofdm, pt.kurtosis, 1).sea
        curve.append([pt.c0, pt.mi, pt.kurtosis, pt.support_size, sea_level_db(sea, p.proxy_n), pt.solution.iterations, pt.solution.converged])
        for z, pr in zip(pt.solution.points, pt.solution.probs):
            dists.append([pt.c0, complex(z), float(pr)])
    summary = {"snr_db": p.snr_db, "uniform_mi_bits": uniform, "uniform_kurtosis": _kappa(const)}
    return [
        Table("tradeoff", ["c0", "mi_bits", "kurtosis", "support_size", "ofdm_sea_level_db", "iterations", "converged"], curve),
        Table("distributions", ["c0", "point", "prob"], dists),
        Document("summary", summary),
    ]


def cd_distortion_list(p: CdCurveParams) -> tuple[list[float], float]:
    problem = cdtheory.make_problem(p.power_budget, max(p.d_list), p.n_x, p.span, p.n_h, p.y_step)
    d_min = cdtheory.min_distortion(problem)
    d_list = [d for d in p.d_list if d > d_min + 1e-12]
    if p.include_tight:
        d_list = sorted(set([d_min + p.tight_offset] + d_list))
    return d_list, d_min


def run_cd_curve(p: CdCurveParams, seed: int, pool: Executor | None = None) -> list:
    problem = cdtheory.make_problem(p.power_budget, max(p.d_list), p.n_x, p.span, p.n_h, p.y_step)
    d_list, d_min = cd_distortion_list(p)
    points = cdtheory.cd_curve(problem, d_list, p.tol, p.max_iter)
    curve, dists = [], []
    for pt in points:
        s = pt.solution
        curve.append([pt.distortion_cap, pt.rate, s.avg_distortion, s.avg_power, s.effective_support(), s.converged, s.gap])
        for x, pr in zip(s.x_grid, s.probs):
            dists.append([pt.distortion_cap, float(x), float(pr)])
    summary = {"power_budget": p.power_budget, "min_distortion": d_min, "gaussian_input_rate_nats": cdtheory.gaussian_input_mi(problem)}
    return [
        Table("curve", ["distortion_cap", "rate_nats", "avg_distortion", "avg_power", "effective_support", "converged", "dual_gap"], curve),
        Table("distributions", ["distortion_cap", "x", "prob"], dists),
        Document("summary", summary),
    ]


# ---------------------------------------------------------------- pulse design and ranging


def _designed_pulse(p: PulseDesignParams):
    lags = pulse_mod.region_lags(p.region_m[0], p.region_m[1], p.reference_m, p.symbol_rate, p.l)
    extra = {}
    if p.objective == "full_expected":
        extra = {"basis": basis_from_config(p.basis, p.n), "kurtosis": _kappa(constellation_from_config(p.constellation)), "m": p.m}
    spec = pulse_mod.PulseDesignSpec(p.alpha, p.n, p.l, lags, p.objective, **extra)
    return pulse_mod.design_pulse(spec), spec


def run_pulse_design(p: PulseDesignParams, seed: int, pool: Executor | None = None) -> list:
    designed, spec = _designed_pulse(p)
    rrc = pulse_mod.rrc_taps(p.alpha, p.l, p.n)
    basis = basis_from_config(p.basis, p.n)
    kappa = _kappa(constellation_from_config(p.constellation))
    region = spec.sidelobe_region
    stats = {name: acf.expected_squared_acf_lags(pl.g, p.l, basis, kappa, p.m) for name, pl in (("rrc", rrc), ("designed", designed))}
    ice = {name: acf.pulse_iceberg(pl) for name, pl in (("rrc", rrc), ("designed", designed))}
    in_region = np.zeros(p.l * p.n, dtype=bool)
    in_region[region] = True
    offsets = pulse_mod.lag_to_range(np.arange(p.l * p.n), p.symbol_rate, p.l)
    rel = lambda v: 10 * np.log10(np.maximum(v, 1e-300) / p.n**2)
    side = [
        [int(k), float(offsets[k]), bool(in_region[k]), rel(ice["rrc"][k]), rel(ice["designed"][k]), float(stats["rrc"].total_db[k]), float(stats["designed"].total_db[k])]
        for k in range(p.l * p.n)
    ]
    spectrum = [[i, float(a), float(b)] for i, (a, b) in enumerate(zip(rrc.g, designed.g))]
    summary = {
        "region_lags": [int(region[0]), int(region[-1])],
        "n_alpha": spec.n_alpha,
        "objective": p.objective,
        "rrc_region_iceberg_sum": float(ice["rrc"][region].sum()),
        "designed_region_iceberg_sum": float(ice["designed"][region].sum()),
        "rrc_region_iceberg_max": float(ice["rrc"][region].max()),
        "designed_region_iceberg_max": float(ice["designed"][region].max()),
        "solver": {k: v for k, v in designed.info.items() if isinstance(v, (int, float))},
    }
    return [
        Table("spectrum", ["bin", "g_rrc", "g_designed"], spectrum),
        Table("sidelobes", ["lag", "range_offset_m", "in_region", "rrc_iceberg_db", "designed_iceberg_db", "rrc_total_db", "designed_total_db"], side),
        Document("summary", summary),
    ]


def _ranging_trial(pulses: dict, basis, const, p: RangingTwoTargetParams, m: int, trial_seed, keep_profile: bool):
    rng = make_rng(trial_seed)
    symbols = sample(const, (m, p.n), rng=rng)
    gap = rng.uniform(p.gap_db[0], p.gap_db[1])
    phases = np.exp(2j * np.pi * rng.uniform(size=2))
    ts = 1.0 / (p.symbol_rate * p.l)
    scene = Scene.from_ranges([p.strong_m, p.weak_m], [phases[0], phases[1] * 10 ** (-gap / 20)], p.noise_sigma, ts)
    lo = math.ceil(2 * p.region_m[0] / pulse_mod.SPEED_OF_LIGHT / ts)
    hi = math.floor(2 * p.region_m[1] / pulse_mod.SPEED_OF_LIGHT / ts)
    region = np.arange(lo, hi + 1)
    out = {}
    for name, pl in pulses.items():
        x = acf.shape_symbols(symbols, basis, pl)
        # the same noise realization for every pulse
        y = synthesize_echo(x, scene, rng=make_rng(list(trial_seed) + [1]))
        prof = RangeProfile(matched_filter_profile(y, x).mean(axis=0), ts)
        est = estimate_ranges(prof, 1, region, [p.weak_m], region_width=p.region_m[1] - p.region_m[0])
        out[name] = (float(est.errors[0]), prof.values if keep_profile else None)
    return out


def run_ranging_two_target(p: RangingTwoTargetParams, seed: int, pool: Executor | None = None) -> list:
    designed, _ = _designed_pulse(p)
    pulses = {"rrc": pulse_mod.rrc_taps(p.alpha, p.l, p.n), "designed": designed}
    basis = basis_from_config(p.basis, p.n)
    const = constellation_from_config(p.constellation)
    rows, profiles = [], []
    ts = 1.0 / (p.symbol_rate * p.l)
    for m in p.m_list:
        jobs = [(m, t) for t in range(p.trials)]
        res = _map(pool, lambda job: _ranging_trial(pulses, basis, const, p, job[0], [seed, job[0], job[1]], job[1] == 0), jobs)
        for name in pulses:
            err = np.array([r[name][0] for r in res])
            rows.append([name, m, p.trials, float(np.sqrt(np.mean(err**2))), float(np.mean(err < 1.0))])
            prof = res[0][name][1]
            power = 10 * np.log10(np.maximum(np.abs(prof) ** 2, 1e-300) / p.n**2)
            for k in range(prof.size):
                profiles.append([name, m, k, k * ts * pulse_mod.SPEED_OF_LIGHT / 2, float(power[k])])
    return [
        Table("rmse", ["pulse", "m", "trials", "rmse_m", "within_1m"], rows),
        Table("profiles", ["pulse", "m", "lag", "range_m", "power_db"], profiles),
        Document("summary", {"designed_solver": {k: v for k, v in designed.info.items() if isinstance(v, (int, float))}}),
    ]


# ---------------------------------------------------------------- MIMO


def _scenario(p: MimoBaseParams, snr_db: float) -> mimo.MimoScenario:
    return mimo.MimoScenario.exponential(
        p.n_t, p.n_s, p.n, snr_db, n_c=p.n_c, coefficient=p.coefficient, seed=p.scenario_seed, entry_variance=p.entry_variance
    )


def run_mimo_sensing_sweep(p: MimoSensingSweepParams, seed: int, pool: Executor | None = None) -> list:
    """WF, DIP and per-realization DDP ELMMSE with paired (common-data) confidence intervals."""

    def one(snr):
        sc = _scenario(p, snr)
        wf = mimo.wf_precoder(sc)
        dip = mimo.dip_precoder(sc, p.sgd_config(seed))
        eval_seed = [seed, 1]
        vals = {
            "wf": mimo.elmmse_samples(wf.w, sc, p.trials, eval_seed),
            "dip": mimo.elmmse_samples(dip.w, sc, p.trials, eval_seed),
            "ddp": mimo.ddp_elmmse_samples(sc, p.trials, eval_seed),
        }
        rates = {"wf": mimo.rate(wf.w, sc), "dip": mimo.rate(dip.w, sc), "ddp": float("nan")}
        lam = np.sort(np.linalg.eigvalsh(sc.r_h))
        floor = float(lam[: max(p.n_t - p.n, 0)].sum())
        return vals, rates, floor

    res = _map(pool, one, p.snr_db_list)
    sweep, gaps, floors = [], [], {}
    for snr, (vals, rates, floor) in zip(p.snr_db_list, res):
        for name in ("wf", "dip", "ddp"):
            mean, ci = mimo.mean_ci(vals[name])
            sweep.append([snr, name, mean, ci, rates[name]])
        for hi, lo in (("wf", "dip"), ("dip", "ddp")):
            mean, ci = mimo.mean_ci(vals[hi] - vals[lo])
            gaps.append([snr, f"{hi}-{lo}", mean, ci])
        floors[str(snr)] = floor
    return [
        Table("sweep", ["snr_db", "scheme", "elmmse", "elmmse_ci", "rate"], sweep),
        Table("gaps", ["snr_db", "pair", "mean_difference", "ci_halfwidth"], gaps),
        Document("summary", {"rank_floor_bound": floors, "trials": p.trials}),
    ]


def _front(rates, errs):
    order = np.argsort(rates, kind="stable")
    return np.asarray(rates, dtype=float)[order], np.asarray(errs, dtype=float)[order]


def rate_at_elmmse(rates, errs, target: float) -> float:
    """Largest rate on the chord interpolation of a tradeoff curve with ELMMSE <= ``target``.

    Chords lie above a convex ELMMSE-vs-rate curve, so the value is a lower
    bound on what the scheme achieves. Returns ``nan`` when the target lies
    below the curve's smallest ELMMSE.
    """
    r, e = _front(rates, errs)
    if target < e.min():
        return float("nan")
    best = float(r[e <= target].max())
    for i in range(r.size - 1):
        if e[i] <= target < e[i + 1]:
            t = (target - e[i]) / (e[i + 1] - e[i])
            best = max(best, float(r[i] + t * (r[i + 1] - r[i])))
    return best


def elmmse_at_rate(rates, errs, target: float) -> float:
    """ELMMSE needed for rate ``target`` by chord interpolation (an upper bound for convex curves)."""
    r, e = _front(rates, errs)
    if target <= r[0]:
        return float(e[0])
    if target > r[-1]:
        return float("nan")
    i = int(np.searchsorted(r, target)) - 1
    t = (target - r[i]) / (r[i + 1] - r[i])
    return float(e[i] + t * (e[i + 1] - e[i]))


def matched_rate_gains(better: tuple, worse: tuple) -> list[tuple[float, float]]:
    """``(elmmse, rate gain)`` at each point of ``worse`` whose ELMMSE the ``better`` curve also reaches."""
    out = []
    e_min, e_max = min(better[1]), max(better[1])
    for r, e in zip(*worse):
        if e_min <= e <= e_max:
            out.append((float(e), rate_at_elmmse(*better, e) - float(r)))
    return out


def matched_elmmse_gaps_db(better: tuple, worse: tuple) -> list[tuple[float, float]]:
    """``(rate, dB reduction)`` of ``better`` at each rate of ``worse`` inside ``better``'s rate range."""
    out = []
    for r, e in zip(*worse):
        eb = elmmse_at_rate(*better, r)
        if math.isfinite(eb) and r <= max(better[0]):
            out.append((float(r), 10 * math.log10(float(e) / eb)))
    return out


def run_mimo_isac_tradeoff(p: MimoIsacTradeoffParams, seed: int, pool: Executor | None = None) -> list:
    """Rate floor sweep for ISAC-DDP, ISAC-DIP and the deterministic-LMMSE baseline."""
    sc = _scenario(p, p.snr_db)
    capacity = mimo.max_rate(sc)
    too_high = [r for r in p.r0_list if r > capacity]
    if too_high:
        raise ConfigError("params.r0_list", f"rate floors {too_high} exceed the capacity {capacity:.6g}")
    cfg = p.sgd_config(seed)
    dip0 = mimo.dip_precoder(sc, cfg)
    realizations = mimo.draw_signals(sc, p.ddp_realizations, make_rng([seed, 5]))
    # the deterministic design assumes S S^H = N I
    s_det = math.sqrt(p.n) * np.eye(p.n_t)
    kw = {"rho0": p.rho0, "rho_factor": p.rho_factor, "rounds": p.rounds}
    eval_seed = [seed, 7]

    def one(r0):
        base = mimo.isac_precoder("ddp", sc, r0, s=s_det, **kw)
        dip = mimo.isac_precoder("dip", sc, r0, cfg=cfg, init=dip0.w, **kw)
        ddp = [mimo.isac_precoder("ddp", sc, r0, s=s, **kw) for s in realizations]
        e_ddp = np.array([mimo.conditional_mmse(d.w, s, sc) for d, s in zip(ddp, realizations)])
        r_ddp = np.array([mimo.rate(d.w, sc) for d in ddp])
        return {
            "baseline": (mimo.rate(base.w, sc), mimo.rate(base.w, sc), mimo.mean_ci(mimo.elmmse_samples(base.w, sc, p.trials, eval_seed)), base.diagnostics["converged"]),
            "isac_dip": (mimo.rate(dip.w, sc), mimo.rate(dip.w, sc), mimo.mean_ci(mimo.elmmse_samples(dip.w, sc, p.trials, eval_seed)), dip.diagnostics["converged"]),
            "isac_ddp": (float(r_ddp.mean()), float(r_ddp.min()), mimo.mean_ci(e_ddp), all(d.diagnostics["converged"] for d in ddp)),
        }

    res = _map(pool, one, p.r0_list)
    rows = []
    curves = {name: ([], []) for name in ("baseline", "isac_dip", "isac_ddp")}
    for r0, out in zip(p.r0_list, res):
        for name in ("baseline", "isac_dip", "isac_ddp"):
            r_avg, r_min, (e, ci), conv = out[name]
            rows.append([r0, name, r_avg, r_min, e, ci, conv])
            curves[name][0].append(r_avg)
            curves[name][1].append(e)
    rows.sort(key=lambda row: (row[0], row[1]))
    rate_gains = matched_rate_gains(curves["isac_dip"], curves["baseline"])
    db_gaps = matched_elmmse_gaps_db(curves["isac_ddp"], curves["isac_dip"])
    summary = {
        "capacity_bits": capacity,
        "dip_over_baseline_rate_gain": [{"elmmse": e, "gain_bits": g} for e, g in rate_gains],
        "ddp_over_dip_elmmse_gap_db": [{"rate": r, "gap_db": g} for r, g in db_gaps],
        "min_rate_gain_bits": min((g for _, g in rate_gains), default=float("nan")),
        "min_elmmse_gap_db": min((g for _, g in db_gaps), default=float("nan")),
    }
    return [
        Table("tradeoff", ["r0", "scheme", "rate", "rate_min", "elmmse", "elmmse_ci", "converged"], rows),
        Document("summary", summary),
    ]


EXPERIMENTS = {
    "acf_compare": (AcfCompareParams, run_acf_compare),
    "coherent_integration": (CoherentIntegrationParams, run_coherent_integration),
    "modulation_compare": (ModulationCompareParams, run_modulation_compare),
    "pcs_sweep": (PcsSweepParams, run_pcs_sweep),
    "cd_curve": (CdCurveParams, run_cd_curve),
    "pulse_design": (PulseDesignParams, run_pulse_design),
    "ranging_two_target": (RangingTwoTargetParams, run_ranging_two_target),
    "mimo_sensing_sweep": (MimoSensingSweepParams, run_mimo_sensing_sweep),
    "mimo_isac_tradeoff": (MimoIsacTradeoffParams, run_mimo_isac_tradeoff),
}
