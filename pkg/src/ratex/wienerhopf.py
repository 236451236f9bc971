"""Wiener-Hopf factorization B = B_minus * B_plus with unit normalization.

B_minus is a polynomial in 1/z equal to the identity at infinity and
invertible outside the open unit disk; B_plus is a polynomial in z
invertible on the closed unit disk.  Existence of this factorization (with
zero partial indices) is exactly the existence/uniqueness condition for a
stationary solution, so failure modes are reported as typed errors that
downstream diagnostics can turn into verdicts.

Algorithm: form P(z) = z**lam * B(z), transpose so the sought monic
degree-lam factor becomes a right divisor, linearize as a block companion
pencil, split its spectrum at the unit circle with an ordered generalized
Schur decomposition, and reconstruct the divisor from the deflating
subspace.  B_plus then falls out of the truncated-series long division
B_minus**-1 * B with exact degree cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import ordqz

from .polylab import (
    LaurentMatrix,
    SingularMatrixError,
    lp_det_and_zeros,
    lp_mul,
    lp_truncated_inverse_series,
)


class FactorizationError(Exception):
    """The required factorization does not exist (or is numerically unresolvable)."""


class ZerosOnUnitCircle(FactorizationError):
    """det(z**lam B(z)) vanishes within the boundary tolerance of |z| = 1."""


class WrongStableCount(FactorizationError):
    """The number of zeros inside the unit circle differs from n * lam."""


class DivisorExtractionSingular(FactorizationError):
    """The deflating-subspace block is numerically singular (nonzero partial indices)."""


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances for factorization and its certificates."""

    boundary: float = 1e-9          # relative band around |z| = 1 treated as on-circle
    reconstruction: float = 1e-8    # relative bound on max-abs(B - B_minus B_plus)
    extraction_rcond: float = 1e-10  # condition floor for the subspace block


DEFAULT_TOL = ToleranceConfig()


@dataclass(frozen=True)
class WHFactors:
    """Factors of B = B_minus * B_plus plus the reconstruction certificate."""

    b_minus: LaurentMatrix
    b_plus: LaurentMatrix
    residual: float
    scale: float = 1.0

    def __post_init__(self):
        n = self.b_minus.rows
        if not np.array_equal(self.b_minus.coefficient(0), np.eye(n)):
            raise ValueError("b_minus must equal the identity at lag 0")


@dataclass(frozen=True)
class EUDiagnostic:
    """Zero locations and counts backing an existence/uniqueness verdict."""

    holds: bool
    reason: str
    zeros: np.ndarray = field(default_factory=lambda: np.array([], dtype=complex))
    stable_count: int = 0
    expected_stable: int = 0
    boundary_count: int = 0


def _classify_zeros(zeros: np.ndarray, boundary: float):
    mods = np.abs(zeros)
    on_band = np.abs(mods - 1.0) <= boundary
    stable = mods < 1.0 - boundary
    return int(np.sum(stable)), int(np.sum(on_band))


def wh_factorize(B: LaurentMatrix, tol: ToleranceConfig | None = None) -> WHFactors:
    """Factor B = B_minus * B_plus or raise a typed FactorizationError.

    Parameters
    ----------
    B : LaurentMatrix
        Square n x n Laurent polynomial matrix; lam is read off as
        -min_lag after trimming.
    tol : ToleranceConfig, optional
        Boundary band, reconstruction bound and extraction conditioning.

    Raises
    ------
    ZerosOnUnitCircle, WrongStableCount, DivisorExtractionSingular
        The three ways the existence/uniqueness condition fails.
    """
    tol = tol or DEFAULT_TOL
    if B.rows != B.cols:
        raise ValueError("B must be square")
    B = B.trimmed()
    n = B.rows
    lam = max(0, -B.min_lag)
    scale = max(B.max_abs(), 1.0)

    try:
        _, zeros = lp_det_and_zeros(B)
    except SingularMatrixError as exc:
        raise ZerosOnUnitCircle(
            "det(B) is identically zero; B(z) is nowhere invertible") from exc
    stable, on_band = _classify_zeros(zeros, tol.boundary)
    if on_band:
        raise ZerosOnUnitCircle(
            f"{on_band} zero(s) of det(z^{lam} B(z)) within {tol.boundary:g} of the unit circle")
    if stable != n * lam:
        raise WrongStableCount(
            f"found {stable} zero(s) inside the unit circle, need exactly {n * lam}")

    if lam == 0:
        b_minus = LaurentMatrix.identity(n)
        b_plus = B
        return WHFactors(b_minus, b_plus, residual=0.0, scale=scale)

    f_coeffs = _stable_monic_divisor(B, lam, tol)
    b_minus = LaurentMatrix.from_coeffs(
        [f_coeffs[i] for i in range(lam, 0, -1)] + [np.eye(n)], -lam, trim=False)

    # long division B_plus = B_minus^-1 B, exact degree cutoff at max_lag(B)
    kappa = B.max_lag
    finv = lp_truncated_inverse_series(b_minus, kappa)
    plus = [sum(finv[i] @ B.coefficient(k + i) for i in range(kappa - k + 1))
            for k in range(kappa + 1)]
    b_plus = LaurentMatrix.from_coeffs(plus, 0)

    recon = lp_mul(b_minus, b_plus)
    diff = max(abs(recon.coefficient(lag) - B.coefficient(lag)).max()
               for lag in range(-lam, kappa + 1))
    extra = 0.0
    if recon.min_lag < -lam or recon.max_lag > kappa:
        extra = max(abs(recon.coefficient(lag)).max()
                    for lag in range(recon.min_lag, recon.max_lag + 1)
                    if lag < -lam or lag > kappa)
    residual = max(diff, extra)
    if residual > tol.reconstruction * scale:
        raise DivisorExtractionSingular(
            f"reconstruction residual {residual:.3e} exceeds {tol.reconstruction:g} * scale")
    return WHFactors(b_minus, b_plus, residual=residual, scale=scale)


def _stable_monic_divisor(B: LaurentMatrix, lam: int, tol: ToleranceConfig):
    """Coefficients F_1..F_lam of B_minus = I + sum F_i z^-i.

    Works on the transposed polynomial Q(z) = (z^lam B(z))', whose monic
    right divisor of degree lam carries the stable spectrum.  The divisor is
    read off the deflating subspace of the companion pencil for the n*lam
    generalized eigenvalues inside the unit circle.
    """
    n = B.rows
    d = lam + max(B.max_lag, 0)
    q = [B.coefficient(i - lam).T for i in range(d + 1)]

    N = n * d
    A = np.zeros((N, N))
    E = np.eye(N)
    for i in range(d - 1):
        A[i * n:(i + 1) * n, (i + 1) * n:(i + 2) * n] = np.eye(n)
    for j in range(d):
        A[(d - 1) * n:, j * n:(j + 1) * n] = -q[j]
    E[(d - 1) * n:, (d - 1) * n:] = q[d]

    def inside(alpha, beta):
        return np.abs(alpha) < (1.0 - tol.boundary) * np.abs(beta)

    AA, EE, alpha, beta, _, Z = ordqz(A, E, sort=inside)
    k = n * lam
    with np.errstate(divide="ignore", invalid="ignore"):
        selected = np.abs(alpha) < (1.0 - tol.boundary) * np.abs(beta)
    if int(np.sum(selected)) != k:
        raise WrongStableCount(
            f"pencil has {int(np.sum(selected))} stable eigenvalue(s), need {k}")

    Z1 = Z[:, :k]
    U = Z1[:k, :]
    svals = np.linalg.svd(U, compute_uv=False)
    if svals[-1] <= tol.extraction_rcond * max(svals[0], 1.0):
        raise DivisorExtractionSingular(
            "deflating-subspace block is numerically singular; "
            "no monic stable divisor of the required degree exists")

    if d >= lam + 1:
        v_next = Z1[k:k + n, :]
    else:
        # degree-lam polynomial: advance the last block one step via the
        # restricted pencil map W = S_E^-1 S_A
        W = np.linalg.solve(EE[:k, :k], AA[:k, :k])
        v_next = Z1[k - n:k, :] @ W
    L = -v_next @ np.linalg.inv(U)  # [L_0 ... L_{lam-1}] of the monic divisor
    return {i: L[:, (lam - i) * n:(lam - i + 1) * n].T for i in range(1, lam + 1)}


def check_eu(B: LaurentMatrix, tol: ToleranceConfig | None = None):
    """Existence/uniqueness verdict plus zero diagnostics.

    Returns ``(holds, EUDiagnostic)``; never raises for factorization
    failures, which are folded into the verdict.
    """
    tol = tol or DEFAULT_TOL
    Bt = B.trimmed()
    n = Bt.rows
    lam = max(0, -Bt.min_lag)
    try:
        _, zeros = lp_det_and_zeros(Bt)
    except SingularMatrixError:
        return False, EUDiagnostic(False, "determinant identically zero")
    stable, on_band = _classify_zeros(zeros, tol.boundary)
    diag = EUDiagnostic(True, "", zeros=zeros, stable_count=stable,
                        expected_stable=n * lam, boundary_count=on_band)
    try:
        wh_factorize(Bt, tol)
    except FactorizationError as exc:
        return False, EUDiagnostic(False, str(exc), zeros=zeros, stable_count=stable,
                                   expected_stable=n * lam, boundary_count=on_band)
    return True, diag
