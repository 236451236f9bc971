"""Real Laurent polynomial matrices with exact degree bookkeeping.

A LaurentMatrix stores an n x m matrix whose entries are real Laurent
polynomials, as one dense coefficient matrix per lag.  Everything else in
the package (factorization, solution operators, identification systems)
computes on this substrate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative threshold below which a coefficient matrix counts as zero when
# trimming lag ranges.  The floor at 1 keeps all-tiny matrices intact.
TRIM_RTOL = 1e-12

# Relative threshold for dropping spurious high-order terms of an
# interpolated determinant before root finding.
DET_TRIM_RTOL = 1e-11


class ShapeMismatchError(ValueError):
    """Operands have incompatible matrix dimensions."""


class SingularMatrixError(ValueError):
    """A matrix (or its relevant leading coefficient) is numerically singular."""


@dataclass(frozen=True)
class LaurentMatrix:
    """Matrix of real Laurent polynomials, one coefficient matrix per lag.

    ``coeffs[k]`` is the n x m real matrix multiplying ``z**(min_lag + k)``.
    Instances are immutable; construct through :meth:`from_coeffs`.
    """

    coeffs: np.ndarray  # shape (n_lags, rows, cols), read-only
    min_lag: int

    def __post_init__(self):
        c = self.coeffs
        if c.ndim != 3 or c.shape[0] < 1:
            raise ValueError("coeffs must be a (n_lags, rows, cols) array with n_lags >= 1")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.flags.writeable = False

    @classmethod
    def from_coeffs(cls, coeffs, min_lag: int = 0, trim: bool = True) -> "LaurentMatrix":
        """Build from a sequence of equally shaped coefficient matrices."""
        arr = np.array([np.atleast_2d(np.asarray(c, dtype=float)) for c in coeffs], dtype=float)
        if arr.ndim != 3:
            raise ValueError("coefficient matrices must all have the same shape")
        if trim:
            arr, min_lag = _trim(arr, min_lag)
        return cls(arr, int(min_lag))

    @classmethod
    def constant(cls, mat) -> "LaurentMatrix":
        """Lag-zero matrix."""
        return cls.from_coeffs([mat], 0, trim=False)

    @classmethod
    def identity(cls, n: int) -> "LaurentMatrix":
        return cls.constant(np.eye(n))

    @classmethod
    def zero(cls, rows: int, cols: int) -> "LaurentMatrix":
        return cls(np.zeros((1, rows, cols)), 0)

    # -- basic queries ----------------------------------------------------

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def max_lag(self) -> int:
        return self.min_lag + self.coeffs.shape[0] - 1

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def coefficient(self, lag: int) -> np.ndarray:
        """Coefficient matrix at ``lag`` (zeros outside the stored range)."""
        if self.min_lag <= lag <= self.max_lag:
            return np.array(self.coeffs[lag - self.min_lag])
        return np.zeros((self.rows, self.cols))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def value(self, z: complex) -> np.ndarray:
        """Evaluate the matrix at a nonzero complex point."""
        if z == 0 and self.min_lag < 0:
            raise ZeroDivisionError("negative lags cannot be evaluated at z=0")
        out = np.zeros((self.rows, self.cols), dtype=complex)
        for k in range(self.coeffs.shape[0]):
            out += self.coeffs[k] * z ** (self.min_lag + k)
        return out

    def shifted(self, s: int) -> "LaurentMatrix":
        """Multiply by z**s."""
        return LaurentMatrix(self.coeffs, self.min_lag + s)

    def scaled(self, c: float) -> "LaurentMatrix":
        return LaurentMatrix.from_coeffs(self.coeffs * c, self.min_lag)

    def right_multiplied(self, v: np.ndarray) -> "LaurentMatrix":
        """Apply a constant matrix on the right (each coefficient @ v)."""
        return LaurentMatrix.from_coeffs(self.coeffs @ v, self.min_lag)

    def plus_part(self) -> "LaurentMatrix":
        """Lags >= 0."""
        if self.min_lag >= 0:
            return self
        if self.max_lag < 0:
            return LaurentMatrix.zero(self.rows, self.cols)
        return LaurentMatrix.from_coeffs(self.coeffs[-self.min_lag:], 0)

    def minus_part(self) -> "LaurentMatrix":
        """Lags <= -1."""
        if self.max_lag < 0:
            return self
        if self.min_lag >= 0:
            return LaurentMatrix.zero(self.rows, self.cols)
        return LaurentMatrix.from_coeffs(self.coeffs[: -self.min_lag], self.min_lag)

    def trimmed(self) -> "LaurentMatrix":
        arr, lag = _trim(np.array(self.coeffs), self.min_lag)
        return LaurentMatrix(arr, lag)

    def allclose(self, other: "LaurentMatrix", atol: float = 1e-12) -> bool:
        """Coefficient-wise comparison over the union of lag ranges."""
        if (self.rows, self.cols) != (other.rows, other.cols):
            return False
        lo = min(self.min_lag, other.min_lag)
        hi = max(self.max_lag, other.max_lag)
        for lag in range(lo, hi + 1):
            if not np.allclose(self.coefficient(lag), other.coefficient(lag), atol=atol, rtol=0.0):
                return False
        return True

    def __repr__(self):
        return (f"LaurentMatrix({self.rows}x{self.cols}, "
                f"lags {self.min_lag}..{self.max_lag})")


def _trim(arr: np.ndarray, min_lag: int):
    """Drop leading/trailing coefficient matrices that are numerical dust."""
    scale = max(float(np.max(np.abs(arr))), 1.0)
    thresh = TRIM_RTOL * scale
    keep = np.max(np.abs(arr), axis=(1, 2)) > thresh
    if not np.any(keep):
        return np.zeros((1,) + arr.shape[1:]), 0
    first = int(np.argmax(keep))
    last = int(len(keep) - 1 - np.argmax(keep[::-1]))
    out = np.array(arr[first: last + 1])
    out[np.abs(out) <= thresh] = 0.0
    return out, min_lag + first


# -- arithmetic -----------------------------------------------------------


def lp_add(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    """Coefficient-wise sum over the union of lag ranges."""
    if (a.rows, a.cols) != (b.rows, b.cols):
        raise ShapeMismatchError(
            f"cannot add {a.rows}x{a.cols} and {b.rows}x{b.cols} matrices")
    lo = min(a.min_lag, b.min_lag)
    hi = max(a.max_lag, b.max_lag)
    out = np.zeros((hi - lo + 1, a.rows, a.cols))
    out[a.min_lag - lo: a.max_lag - lo + 1] += a.coeffs
    out[b.min_lag - lo: b.max_lag - lo + 1] += b.coeffs
    return LaurentMatrix.from_coeffs(out, lo)


def lp_sub(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    return lp_add(a, b.scaled(-1.0))


def lp_mul(a: LaurentMatrix, b: LaurentMatrix) -> LaurentMatrix:
    """Cauchy product of the coefficient sequences."""
    if a.cols != b.rows:
        raise ShapeMismatchError(
            f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    na, nb = a.coeffs.shape[0], b.coeffs.shape[0]
    out = np.zeros((na + nb - 1, a.rows, b.cols))
    for i in range(na):
        for j in range(nb):
            out[i + j] += a.coeffs[i] @ b.coeffs[j]
    return LaurentMatrix.from_coeffs(out, a.min_lag + b.min_lag)


def lp_det_poly(a: LaurentMatrix) -> np.ndarray:
    """Determinant of z**(-min_lag) * a as polynomial coefficients.

    Returns ascending coefficients ``c[0] + c[1] z + ...`` with spurious
    high-order interpolation dust trimmed.  The determinant is evaluated at
    roots of unity and recovered by inverse FFT, which is exact up to
    rounding for the bounded degree n * (max_lag - min_lag).
    """
    if a.rows != a.cols:
        raise ShapeMismatchError("determinant requires a square matrix")
    n = a.rows
    deg = n * (a.max_lag - a.min_lag)
    if deg == 0:
        return np.array([float(np.linalg.det(a.coeffs[0]))])
    pts = np.exp(2j * np.pi * np.arange(deg + 1) / (deg + 1))
    vals = np.array([np.linalg.det(a.value(z) * z ** (-a.min_lag)) for z in pts])
    coef = (np.fft.fft(vals) / (deg + 1)).real
    scale = max(float(np.max(np.abs(coef))), 1.0)
    nz = np.nonzero(np.abs(coef) > DET_TRIM_RTOL * scale)[0]
    if nz.size == 0:
        return np.array([0.0])
    return coef[: nz[-1] + 1]


def lp_det_and_zeros(a: LaurentMatrix):
    """Determinant polynomial of z**(-min_lag) * a and its complex zeros.

    Zeros are the eigenvalues of the (balanced) companion matrix of the
    trimmed determinant polynomial.
    """
    coef = lp_det_poly(a)
    if coef.size == 1 and coef[0] == 0.0:
        raise SingularMatrixError("determinant is identically zero")
    zeros = np.roots(coef[::-1]) if coef.size > 1 else np.array([], dtype=complex)
    return coef, zeros


def lp_truncated_inverse_series(a: LaurentMatrix, horizon: int) -> list[np.ndarray]:
    """First ``horizon + 1`` coefficients of the matrix power-series inverse.

    For a polynomial in z (min_lag >= 0 after trimming) the expansion is in
    powers of z; for a polynomial in 1/z (max_lag <= 0) it is in powers of
    1/z.  Either way ``G[0]`` must be invertible and the returned list
    starts at the lag-0 coefficient of the inverse.
    """
    if a.rows != a.cols:
        raise ShapeMismatchError("series inverse requires a square matrix")
    t = a.trimmed()
    if t.min_lag >= 0:
        g = [t.coefficient(i) for i in range(t.max_lag + 1)]
    elif t.max_lag <= 0:
        g = [t.coefficient(-i) for i in range(-t.min_lag + 1)]
    else:
        raise ValueError("matrix mixes positive and negative lags; no one-sided expansion")
    try:
        g0_inv = np.linalg.inv(g[0])
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("leading coefficient is singular") from exc
    out = [g0_inv]
    d = len(g) - 1
    for j in range(1, horizon + 1):
        acc = np.zeros((a.rows, a.cols))
        for i in range(1, min(d, j) + 1):
            acc += g[i] @ out[j - i]
        out.append(-g0_inv @ acc)
    return out


# -- the model type -------------------------------------------------------


@dataclass(frozen=True)
class Model:
    """Validated structural pair (B, A) with declared lag bounds.

    B is n x n over lags -lam..kappa, A is n x m over lags 0..kappa.  The
    declared bounds may exceed the trimmed degrees; they fix the ambient
    coefficient space used by the identification machinery.
    """

    B: LaurentMatrix
    A: LaurentMatrix
    lam: int = field(default=-1)
    kappa: int = field(default=-1)

    def __post_init__(self):
        B, A = self.B, self.A
        if B.rows != B.cols:
            raise ShapeMismatchError("B must be square")
        if A.rows != B.rows:
            raise ShapeMismatchError("A must have the same number of rows as B")
        if B.rows < 1 or A.cols < 1:
            raise ValueError("model dimensions must be at least 1")
        if A.min_lag < 0 and not A.is_zero:
            raise ValueError("A must be a plain polynomial matrix (no negative lags)")
        lam = self.lam if self.lam >= 0 else max(0, -B.min_lag)
        kappa = self.kappa if self.kappa >= 0 else max(0, B.max_lag, A.max_lag)
        if B.min_lag < -lam or B.max_lag > kappa:
            raise ValueError(f"B lags {B.min_lag}..{B.max_lag} exceed declared bounds -{lam}..{kappa}")
        if A.max_lag > kappa:
            raise ValueError(f"A max lag {A.max_lag} exceeds declared kappa={kappa}")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kappa", kappa)

    @property
    def n(self) -> int:
        return self.B.rows

    @property
    def m(self) -> int:
        return self.A.cols

    def __repr__(self):
        return (f"Model(n={self.n}, m={self.m}, lam={self.lam}, kappa={self.kappa})")
