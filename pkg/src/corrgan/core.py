"""Correlation-matrix and elliptope-vector types.

A valid correlation matrix is symmetric, has a unit diagonal, entries in
[-1, 1] and no eigenvalue below ``-psd_tol``.  Symmetry is enforced by
storage: only the upper triangle of the input is authoritative, so asymmetry
can only exist in :class:`RawMatrix` values (e.g. un-repaired GAN output).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PSD_TOL = 1e-8
DIAG_TOL = 1e-8


class CorrganError(Exception):
    """Base class for workbench errors."""


class StructuralError(CorrganError):
    """Malformed input: wrong shape, non-finite entries, broken bijection."""


class DomainError(CorrganError):
    """Values outside the valid mathematical domain (e.g. not PSD)."""


class DegenerateDataError(CorrganError):
    """Input data that cannot support the requested estimate."""


def _as_square(values, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise StructuralError(f"{name} must be square, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise StructuralError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise StructuralError(f"{name} contains non-finite entries")
    return arr


def _mirror_upper(arr: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one; upper is authoritative."""
    out = np.triu(arr, 1)
    out = out + out.T
    np.fill_diagonal(out, np.diag(arr))
    return out


def min_eigenvalue(values: np.ndarray) -> float:
    """Smallest eigenvalue, computed on the symmetrized matrix (A+A^T)/2."""
    sym = (values + values.T) / 2.0
    return float(np.linalg.eigvalsh(sym)[0])


@dataclass(frozen=True)
class ValidationReport:
    is_valid: bool
    max_diag_deviation: float
    max_asymmetry: float
    min_eigenvalue: float
    out_of_range_count: int


@dataclass(frozen=True)
class RawMatrix:
    """Unconstrained square matrix, e.g. generator output before repair."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Exact correlation matrix: symmetric, unit diagonal, PSD within tolerance."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.values)
        if not np.array_equal(arr, arr.T):
            raise StructuralError(
                "CorrelationMatrix storage must be exactly symmetric; "
                "use from_values() to build one from an estimate"
            )
        if not np.all(np.diag(arr) == 1.0):
            raise StructuralError("CorrelationMatrix diagonal must be exactly 1")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_values(
        cls,
        values,
        psd_tol: float = PSD_TOL,
        diag_tol: float = DIAG_TOL,
    ) -> "CorrelationMatrix":
        """Build from a near-correlation matrix, validating every invariant.

        The upper triangle is mirrored onto the lower one and the diagonal is
        set to exactly 1 (it must already be within ``diag_tol``).  Entries
        may overshoot [-1, 1] by at most ``diag_tol`` and are clamped.
        """
        arr = _as_square(values, "correlation matrix")
        n = arr.shape[0]
        diag_dev = float(np.max(np.abs(np.diag(arr) - 1.0))) if n else 0.0
        if diag_dev > diag_tol:
            raise DomainError(
                f"diagonal deviates from 1 by {diag_dev:.3e} (> {diag_tol:.1e})"
            )
        sym = _mirror_upper(arr)
        np.fill_diagonal(sym, 1.0)
        overshoot = float(np.max(np.abs(sym))) - 1.0
        if overshoot > diag_tol:
            raise DomainError(
                f"entry magnitude exceeds 1 by {overshoot:.3e} (> {diag_tol:.1e})"
            )
        np.clip(sym, -1.0, 1.0, out=sym)
        np.fill_diagonal(sym, 1.0)
        lam_min = min_eigenvalue(sym)
        if lam_min < -psd_tol:
            raise DomainError(
                f"matrix is not PSD within tolerance: min eigenvalue {lam_min:.3e}"
            )
        return cls(sym)

    @classmethod
    def _trusted(cls, values: np.ndarray) -> "CorrelationMatrix":
        """Wrap values known valid by construction (e.g. a permutation of a
        validated matrix); skips the eigenvalue check."""
        return cls(np.array(values, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ElliptopeVector:
    """The n(n-1)/2 upper-triangular coefficients, row-major (C12,...,C1n,C23,...)."""

    n: int
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=np.float64).ravel()
        expected = self.n * (self.n - 1) // 2
        if self.n < 2:
            raise StructuralError(f"n must be >= 2, got {self.n}")
        if arr.size != expected:
            raise StructuralError(
                f"coefficient vector has length {arr.size}, expected {expected} for n={self.n}"
            )
        if not np.isfinite(arr).all():
            raise StructuralError("coefficients contain non-finite entries")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)


@dataclass(frozen=True)
class ReturnsPanel:
    """T x n panel of daily returns with tickers and strictly increasing dates."""

    tickers: tuple
    dates: tuple
    returns: np.ndarray
    return_kind: str = "simple"  # "simple" or "log"; informational only

    def __post_init__(self):
        arr = np.asarray(self.returns, dtype=np.float64)
        tickers = tuple(self.tickers)
        dates = tuple(self.dates)
        if arr.ndim != 2:
            raise StructuralError(f"returns must be 2-D, got shape {arr.shape}")
        t, n = arr.shape
        if t < 2:
            raise StructuralError(f"panel needs at least 2 rows, got {t}")
        if n < 2:
            raise StructuralError(f"panel needs at least 2 tickers, got {n}")
        if len(tickers) != n:
            raise StructuralError(
                f"{len(tickers)} tickers for {n} return columns"
            )
        if len(set(tickers)) != len(tickers):
            raise StructuralError("duplicate tickers in panel")
        if len(dates) != t:
            raise StructuralError(f"{len(dates)} dates for {t} return rows")
        if not np.isfinite(arr).all():
            raise StructuralError("panel contains non-finite returns")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise StructuralError("dates must be strictly increasing")
        arr.flags.writeable = False
        object.__setattr__(self, "tickers", tickers)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", arr)

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


def validate(m, psd_tol: float = PSD_TOL, diag_tol: float = DIAG_TOL) -> ValidationReport:
    """Check the three correlation-matrix defects plus entry range.

    Valid means: exactly symmetric, diagonal within ``diag_tol`` of 1, min
    eigenvalue >= ``-psd_tol`` and all entries in [-1-diag_tol, 1+diag_tol].
    """
    arr = _as_square(getattr(m, "values", m))
    max_asym = float(np.max(np.abs(arr - arr.T)))
    max_diag = float(np.max(np.abs(np.diag(arr) - 1.0)))
    lam_min = min_eigenvalue(arr)
    out_of_range = int(np.count_nonzero(np.abs(arr) > 1.0 + diag_tol))
    ok = (
        max_asym == 0.0
        and max_diag <= diag_tol
        and lam_min >= -psd_tol
        and out_of_range == 0
    )
    return ValidationReport(
        is_valid=ok,
        max_diag_deviation=max_diag,
        max_asymmetry=max_asym,
        min_eigenvalue=lam_min,
        out_of_range_count=out_of_range,
    )


def side_from_coeff_count(length: int) -> int:
    """Invert L = n(n-1)/2; raises if L is not a triangular number."""
    n = int(round((1.0 + np.sqrt(1.0 + 8.0 * length)) / 2.0))
    if n < 2 or n * (n - 1) // 2 != length:
        raise StructuralError(
            f"{length} coefficients do not form an upper triangle of any n>=2"
        )
    return n


def from_upper_vector(
    v: ElliptopeVector, psd_tol: float = PSD_TOL
) -> CorrelationMatrix:
    """Reconstruct the symmetric unit-diagonal matrix from upper-tri coefficients."""
    if v.coeffs.size and np.max(np.abs(v.coeffs)) > 1.0:
        raise DomainError("coefficients must lie in [-1, 1]")
    n = v.n
    out = np.eye(n)
    iu = np.triu_indices(n, 1)
    out[iu] = v.coeffs
    out[(iu[1], iu[0])] = v.coeffs
    lam_min = min_eigenvalue(out)
    if lam_min < -psd_tol:
        raise DomainError(
            f"coefficients lie outside the elliptope: min eigenvalue {lam_min:.3e}"
        )
    return CorrelationMatrix(out)


def to_upper_vector(m: CorrelationMatrix) -> ElliptopeVector:
    """Exact inverse of :func:`from_upper_vector`."""
    iu = np.triu_indices(m.n, 1)
    return ElliptopeVector(n=m.n, coeffs=m.values[iu].copy())


def upper_coeffs(values: np.ndarray) -> np.ndarray:
    """Row-major upper-triangular entries of a square matrix."""
    arr = np.asarray(values)
    return arr[np.triu_indices(arr.shape[0], 1)]


def estimate_correlation(p: ReturnsPanel, psd_tol: float = PSD_TOL) -> CorrelationMatrix:
    """Pearson correlation of the panel columns.

    Raises :class:`DegenerateDataError` naming the ticker if any column has
    zero variance.  Rounding noise is removed by mirroring the upper triangle,
    resetting the diagonal, and (only if needed) clipping eigenvalues at 0.
    """
    r = p.returns
    stds = r.std(axis=0)
    for ticker, s in zip(p.tickers, stds):
        if s == 0.0:
            raise DegenerateDataError(f"zero-variance returns for ticker {ticker!r}")
    c = np.corrcoef(r, rowvar=False)
    if not np.isfinite(c).all():
        raise DegenerateDataError("correlation estimate produced non-finite values")
    np.clip(c, -1.0, 1.0, out=c)
    c = _mirror_upper(c)
    np.fill_diagonal(c, 1.0)
    lam_min = min_eigenvalue(c)
    if -psd_tol < lam_min < 0.0:
        w, v = np.linalg.eigh((c + c.T) / 2.0)
        c = (v * np.maximum(w, 0.0)) @ v.T
        c = _mirror_upper(c)
        np.fill_diagonal(c, 1.0)
    return CorrelationMatrix.from_values(c, psd_tol=psd_tol)


def check_permutation(perm, n: int) -> np.ndarray:
    """Validate that perm is a bijection on {0..n-1}; returns it as an index array."""
    arr = np.asarray(perm, dtype=np.intp).ravel()
    if arr.size != n or not np.array_equal(np.sort(arr), np.arange(n)):
        raise StructuralError(f"perm is not a bijection on 0..{n - 1}: {perm}")
    return arr


def permute(m: CorrelationMatrix, perm) -> CorrelationMatrix:
    """Relabel assets: result[i, j] = m[perm[i], perm[j]].

    A permutation is a similarity transform, so eigenvalues and the
    off-diagonal multiset are preserved exactly.
    """
    idx = check_permutation(perm, m.n)
    return CorrelationMatrix._trusted(m.values[np.ix_(idx, idx)])


def equicorrelation(n: int, rho: float) -> CorrelationMatrix:
    """All off-diagonal entries equal to rho (valid for rho in [-1/(n-1), 1])."""
    out = np.full((n, n), float(rho))
    np.fill_diagonal(out, 1.0)
    return CorrelationMatrix.from_values(out)
