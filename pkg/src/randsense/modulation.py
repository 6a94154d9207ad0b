"""Unitary modulation bases and the bistochastic matrix that governs ACF sidelobes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import hadamard

from .errors import InvalidDimensionError, UnsupportedError, ValidationError
from .numerics import unitary_dft

KINDS = ("sc", "ofdm", "cdma", "afdm", "otfs", "custom")
UNITARY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ModulationBasis:
    """An ``n x n`` unitary basis ``U`` mapping symbols to time-domain samples.

    Parameters
    ----------
    kind : str
        One of ``sc, ofdm, cdma, afdm, otfs, custom``.
    matrix : numpy.ndarray
        The unitary matrix.
    params : dict
        Construction parameters; enough to rebuild the matrix for every kind
        except ``custom``.
    """

    kind: str
    matrix: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedError(f"unknown basis kind {self.kind!r}")
        mat = np.asarray(self.matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise InvalidDimensionError(f"basis must be a non-empty square matrix, got {mat.shape}")
        err = np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0])))
        if err > UNITARY_TOL:
            raise ValidationError(f"basis is not unitary (residual {err:.2e})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def to_dict(self) -> dict:
        if self.kind == "custom":
            raise UnsupportedError("custom bases cannot be serialized as metadata")
        return {"kind": self.kind, "n": self.n, "params": _jsonable(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> "ModulationBasis":
        unknown = set(data) - {"kind", "n", "params"}
        if unknown:
            raise ValidationError(f"unknown basis fields: {sorted(unknown)}")
        params = dict(data.get("params", {}))
        kind = data["kind"]
        n = int(data["n"])
        if "permutation" in params or "phases" in params:
            sign = "sub_gaussian" if kind == "ofdm" else "super_gaussian"
            return optimal_basis(sign, n, params.get("permutation"), params.get("phases"))
        return make_basis(kind, n, **params)


def _jsonable(params: dict) -> dict:
    out = {}
    for key, val in params.items():
        out[key] = val.tolist() if isinstance(val, np.ndarray) else val
    return out


def make_basis(kind: str, n: int, **params) -> ModulationBasis:
    """Construct a standard modulation basis.

    Parameters
    ----------
    kind : {"sc", "ofdm", "cdma", "afdm", "otfs"}
    n : int
        Number of symbols per block.
    **params
        ``c1``, ``c2`` (AFDM chirp rates, default 0) or ``n1``, ``n2`` (OTFS
        Doppler and delay sizes with ``n1 * n2 == n``).

    Returns
    -------
    ModulationBasis
    """
    kind = kind.lower()
    n = int(n)
    if n < 1:
        raise InvalidDimensionError("basis size must be >= 1")
    allowed = {"afdm": {"c1", "c2"}, "otfs": {"n1", "n2"}}.get(kind, set())
    extra = set(params) - allowed
    if extra:
        raise ValidationError(f"unexpected parameters for {kind}: {sorted(extra)}")
    if kind == "sc":
        return ModulationBasis("sc", np.eye(n, dtype=complex))
    if kind == "ofdm":
        return ModulationBasis("ofdm", unitary_dft(n).conj().T)
    if kind == "cdma":
        if n & (n - 1):
            raise UnsupportedError(f"Walsh-Hadamard basis needs a power-of-2 size, got {n}")
        return ModulationBasis("cdma", hadamard(n).astype(complex) / np.sqrt(n))
    if kind == "afdm":
        c1 = float(params.get("c1", 0.0))
        c2 = float(params.get("c2", 0.0))
        k = np.arange(n)
        lam1 = np.exp(-2j * np.pi * c1 * k**2)
        lam2 = np.exp(-2j * np.pi * c2 * k**2)
        mat = lam1.conj()[:, None] * unitary_dft(n).conj().T * lam2.conj()[None, :]
        return ModulationBasis("afdm", mat, {"c1": c1, "c2": c2})
    if kind == "otfs":
        if "n1" not in params or "n2" not in params:
            raise InvalidDimensionError("OTFS needs n1 and n2")
        n1, n2 = int(params["n1"]), int(params["n2"])
        if n1 < 1 or n2 < 1 or n1 * n2 != n:
            raise InvalidDimensionError(f"OTFS factorization {n1}x{n2} does not equal n={n}")
        mat = np.kron(unitary_dft(n1).conj().T, np.eye(n2))
        return ModulationBasis("otfs", mat, {"n1": n1, "n2": n2})
    raise UnsupportedError(f"unknown basis kind {kind!r}")


def custom_basis(matrix) -> ModulationBasis:
    """Wrap an arbitrary unitary matrix."""
    return ModulationBasis("custom", matrix)


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def bistochastic_v(basis) -> np.ndarray:
    """Elementwise squared modulus of ``F_N U``.

    Rows and columns of the result sum to one whenever ``U`` is unitary.
    """
    u = basis.matrix if isinstance(basis, ModulationBasis) else np.asarray(basis, dtype=complex)
    v = np.abs(unitary_dft(u.shape[0]) @ u) ** 2
    return v


def optimal_basis(excess_kurtosis_sign: str, n: int, permutation=None, phases=None) -> ModulationBasis:
    """Basis minimizing the expected sidelobe level at every lag.

    Parameters
    ----------
    excess_kurtosis_sign : {"sub_gaussian", "super_gaussian"}
        ``sub_gaussian`` (kurtosis < 2) gives ``F^H P Diag(exp(j theta))``,
        i.e. OFDM up to subcarrier permutation and phase rotation;
        ``super_gaussian`` gives ``P Diag(exp(j theta))`` (single carrier).
    n : int
    permutation : sequence of int, optional
        Column permutation; identity by default.
    phases : sequence of float, optional
        Per-symbol phase rotations; zero by default.
    """
    n = int(n)
    perm = np.arange(n) if permutation is None else np.asarray(permutation, dtype=int)
    if perm.shape != (n,) or not np.array_equal(np.sort(perm), np.arange(n)):
        raise ValidationError("permutation must be a rearrangement of 0..n-1")
    theta = np.zeros(n) if phases is None else np.asarray(phases, dtype=float)
    if theta.shape != (n,):
        raise InvalidDimensionError("phases must have length n")
    pd = np.zeros((n, n), dtype=complex)
    pd[perm, np.arange(n)] = np.exp(1j * theta)
    params = {}
    if permutation is not None:
        params["permutation"] = perm.tolist()
    if phases is not None:
        params["phases"] = theta.tolist()
    if excess_kurtosis_sign == "sub_gaussian":
        return ModulationBasis("ofdm", unitary_dft(n).conj().T @ pd, params)
    if excess_kurtosis_sign == "super_gaussian":
        return ModulationBasis("sc", pd, params)
    raise ValidationError("excess_kurtosis_sign must be 'sub_gaussian' or 'super_gaussian'")


def from_config(spec, n: int) -> ModulationBasis:
    """Build a basis from ``"ofdm"`` or ``{"kind": "afdm", "c1": ..., "c2": ...}``."""
    if isinstance(spec, str):
        return make_basis(spec, n)
    if isinstance(spec, dict):
        params = dict(spec)
        kind = params.pop("kind")
        return make_basis(kind, n, **params)
    raise ValidationError(f"cannot interpret basis spec {spec!r}")
