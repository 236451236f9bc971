"""Stationary-solution objects: moving-average part, extended shock loading,
transfer series, canonical-form normalization, spectral density, simulation.

For a valid model the solution is Y_t = B_plus^-1(L) M(L) eps_t where
M = [B_minus^-1 A]_+ is a polynomial, equivalently Y_t = B^-1(L) A_plus(L)
eps_t with A_plus = B_minus M.  Both routes are implemented; tests assert
they produce the same transfer coefficients.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .numrank import DEFAULT_TOL_RANK, numerical_rank
from .polylab import (
    LaurentMatrix,
    Model,
    SingularMatrixError,
    lp_det_and_zeros,
    lp_mul,
    lp_truncated_inverse_series,
)
from .wienerhopf import ToleranceConfig, WHFactors, wh_factorize

# zeros of the moving-average part this close to |z| = 1 are boundary cases
# (reported, not fatal); strictly smaller moduli violate invertibility
CF_BOUNDARY_MARGIN = 1e-9


class RankDeficientC0(Exception):
    """rank(C0) < m: no orthogonal rotation can reach the canonical form."""


class NotInvertible(Exception):
    """The transfer function loses rank inside the open unit disk."""


@dataclass(frozen=True)
class TransferSeries:
    """Leading Taylor coefficients C_0..C_N of the solution transfer function."""

    coeffs: np.ndarray  # (N + 1, n, m)

    def __post_init__(self):
        self.coeffs.flags.writeable = False

    @property
    def horizon(self) -> int:
        return self.coeffs.shape[0] - 1

    def coefficient(self, j: int) -> np.ndarray:
        if 0 <= j <= self.horizon:
            return np.array(self.coeffs[j])
        return np.zeros(self.coeffs.shape[1:])


@dataclass(frozen=True)
class SolutionBundle:
    """Everything the solution determines at a parameter point."""

    model: Model
    factors: WHFactors
    ma_part: LaurentMatrix    # [B_minus^-1 A]_+, lags 0..kappa
    a_plus: LaurentMatrix     # B_minus [B_minus^-1 A]_+, lags -lam..kappa
    transfer: TransferSeries
    c0_canonical: bool
    c0_rank: int
    warnings: tuple = field(default_factory=tuple)


def plus_part_of_bminus_inv_a(b_minus: LaurentMatrix, A: LaurentMatrix) -> LaurentMatrix:
    """Nonnegative-lag part of B_minus^-1 A.

    The lag-k coefficient is a finite sum of inverse-series coefficients of
    B_minus against A_{k..max_lag(A)}, so no truncation is involved.
    """
    if A.is_zero:
        return LaurentMatrix.zero(b_minus.rows, A.cols)
    k_a = A.max_lag
    f = lp_truncated_inverse_series(b_minus, k_a)
    out = [sum(f[i] @ A.coefficient(k + i) for i in range(k_a - k + 1))
           for k in range(k_a + 1)]
    return LaurentMatrix.from_coeffs(out, 0)


def a_plus(b_minus: LaurentMatrix, ma_part: LaurentMatrix) -> LaurentMatrix:
    """Extended shock loading B_minus * [B_minus^-1 A]_+ (lags -lam..kappa)."""
    return lp_mul(b_minus, ma_part)


def transfer_series(b_plus: LaurentMatrix, ma_part: LaurentMatrix, horizon: int) -> TransferSeries:
    """C_0..C_horizon solving B_plus * C = ma_part by matrix long division."""
    g0 = b_plus.coefficient(0)
    try:
        g0_inv = np.linalg.inv(g0)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("lag-0 coefficient of B_plus is singular") from exc
    d = b_plus.max_lag
    out = np.zeros((horizon + 1, b_plus.rows, ma_part.cols))
    for j in range(horizon + 1):
        acc = ma_part.coefficient(j)
        for i in range(1, min(d, j) + 1):
            acc = acc - b_plus.coefficient(i) @ out[j - i]
        out[j] = g0_inv @ acc
    return TransferSeries(out)


def solve_model(model: Model, tol: ToleranceConfig | None = None,
                horizon: int | None = None) -> SolutionBundle:
    """Factorize and assemble the full solution bundle for a model."""
    fac = wh_factorize(model.B, tol)
    ma = plus_part_of_bminus_inv_a(fac.b_minus, model.A)
    ap = a_plus(fac.b_minus, ma)
    if horizon is None:
        horizon = max((model.n + 1) * model.kappa + model.lam, 2)
    transfer = transfer_series(fac.b_plus, ma, horizon)
    c0 = transfer.coefficient(0)
    rank, _, _ = numerical_rank(c0)
    return SolutionBundle(
        model=model, factors=fac, ma_part=ma, a_plus=ap, transfer=transfer,
        c0_canonical=is_canonical_staircase(c0), c0_rank=rank)


# -- canonical quasi-lower triangular form --------------------------------


def staircase_rows(c0: np.ndarray, tol: float | None = None):
    """Row index of the first nonzero entry of each column, or None per column."""
    c0 = np.atleast_2d(np.asarray(c0, dtype=float))
    if tol is None:
        tol = 1e-9 * max(1.0, float(np.max(np.abs(c0))))
    rows = []
    for j in range(c0.shape[1]):
        nz = np.nonzero(np.abs(c0[:, j]) > tol)[0]
        rows.append(int(nz[0]) if nz.size else None)
    return rows


def is_canonical_staircase(c0: np.ndarray, tol: float | None = None) -> bool:
    """First nonzero of column j positive in row i_j with i_1 < ... < i_m."""
    c0 = np.atleast_2d(np.asarray(c0, dtype=float))
    rows = staircase_rows(c0, tol)
    prev = -1
    for j, r in enumerate(rows):
        if r is None or r <= prev or c0[r, j] <= 0:
            return False
        prev = r
    return True


def canonical_rotation(c0: np.ndarray, tol_rank: float = DEFAULT_TOL_RANK) -> np.ndarray:
    """Orthogonal V such that c0 @ V is canonical quasi-lower triangular.

    Householder sweep on c0', keeping pivot columns in strictly increasing
    order and pivots positive; full column rank of c0 is required.
    """
    c0 = np.atleast_2d(np.asarray(c0, dtype=float))
    n, m = c0.shape
    svals = np.linalg.svd(c0, compute_uv=False)
    cutoff = tol_rank * (svals[0] if svals.size else 0.0) * max(n, m)
    if is_canonical_staircase(c0):
        return np.eye(m)
    M = c0.T.copy()
    Q = np.eye(m)
    r = 0
    for j in range(n):
        if r == m:
            break
        x = M[r:, j]
        nx = float(np.linalg.norm(x))
        if nx <= cutoff:
            continue
        v = x.copy()
        v[0] += np.copysign(nx, x[0]) if x[0] != 0 else nx
        v /= np.linalg.norm(v)
        M[r:, :] -= 2.0 * np.outer(v, v @ M[r:, :])
        Q[r:, :] -= 2.0 * np.outer(v, v @ Q[r:, :])
        if M[r, j] < 0:
            M[r, :] *= -1.0
            Q[r, :] *= -1.0
        M[r + 1:, j] = 0.0
        r += 1
    if r < m:
        raise RankDeficientC0(f"rank(C0) = {r} < m = {m}")
    return Q.T


def _rank_drop_points(ma_part: LaurentMatrix, cutoff_scale: float):
    """Open-disk points where the moving-average part loses column rank.

    Square case: zeros of det.  Wide case (n > m): zeros of every maximal
    minor are screened by SVD of the full matrix value, plus a dense disk
    grid as a fallback that does not rely on the minors being well scaled.
    """
    n, m = ma_part.rows, ma_part.cols
    inside, boundary = [], []

    def classify(z):
        r = abs(z)
        if r < 1.0 - CF_BOUNDARY_MARGIN:
            inside.append(z)
        elif r <= 1.0 + CF_BOUNDARY_MARGIN:
            boundary.append(z)

    if n == m:
        try:
            _, zeros = lp_det_and_zeros(ma_part)
        except SingularMatrixError:
            raise NotInvertible("moving-average part is singular everywhere")
        for z in zeros:
            classify(z)
        return inside, boundary

    candidates = []
    for rows in itertools.combinations(range(n), m):
        sub = LaurentMatrix.from_coeffs(ma_part.coeffs[:, rows, :], ma_part.min_lag)
        try:
            _, zeros = lp_det_and_zeros(sub)
        except SingularMatrixError:
            continue
        candidates.extend(zeros)
    # grid screen: radii 0.1..0.9, 64 angles
    for r in np.arange(0.1, 0.95, 0.1):
        candidates.extend(r * np.exp(2j * np.pi * np.arange(64) / 64))
    scale = max(ma_part.max_abs(), 1.0)
    for z in candidates:
        if abs(z) > 1.0 + CF_BOUNDARY_MARGIN:
            continue
        svals = np.linalg.svd(ma_part.value(z), compute_uv=False)
        if svals[-1] <= cutoff_scale * scale:
            classify(z)
    return inside, boundary


def cf_check_and_normalize(bundle: SolutionBundle, tol_rank: float = DEFAULT_TOL_RANK):
    """Check the canonical-form conditions and rotate the bundle into them.

    Returns ``(V, normalized_bundle)`` with V orthogonal; raises
    RankDeficientC0 or NotInvertible when no rotation can satisfy them.
    Zeros of the moving-average part within the boundary band of the unit
    circle are reported as warnings on the returned bundle, not errors.
    """
    c0 = bundle.transfer.coefficient(0)
    m = bundle.model.m
    if bundle.c0_rank < m:
        raise RankDeficientC0(f"rank(C0) = {bundle.c0_rank} < m = {m}")
    inside, boundary = _rank_drop_points(bundle.ma_part, tol_rank)
    if inside:
        worst = min(inside, key=abs)
        raise NotInvertible(
            f"transfer function loses rank at |z| = {abs(worst):.6f} inside the unit disk")
    warnings = tuple(f"moving-average rank drop on the unit circle near z = {z:.6g}"
                     for z in boundary)
    v = canonical_rotation(c0, tol_rank)
    model = bundle.model
    if np.array_equal(v, np.eye(m)):
        new_bundle = bundle if not warnings else SolutionBundle(
            model=model, factors=bundle.factors, ma_part=bundle.ma_part,
            a_plus=bundle.a_plus, transfer=bundle.transfer,
            c0_canonical=True, c0_rank=bundle.c0_rank, warnings=warnings)
        return np.eye(m), new_bundle
    new_model = Model(model.B, model.A.right_multiplied(v), lam=model.lam, kappa=model.kappa)
    new_bundle = SolutionBundle(
        model=new_model,
        factors=bundle.factors,
        ma_part=bundle.ma_part.right_multiplied(v),
        a_plus=bundle.a_plus.right_multiplied(v),
        transfer=TransferSeries(bundle.transfer.coeffs @ v),
        c0_canonical=True,
        c0_rank=bundle.c0_rank,
        warnings=warnings)
    return v, new_bundle


# -- spectral density and simulation --------------------------------------


def unit_circle_grid(k: int) -> np.ndarray:
    """k points exp(2*pi*i*j/k), j = 0..k-1."""
    return np.exp(2j * np.pi * np.arange(k) / k)


def spectral_density(model: Model, a_plus_mat: LaurentMatrix, z_grid) -> list[np.ndarray]:
    """f(z) = B^-1(z) A_plus(z) A_plus'(1/z) B^-1'(1/z) on unit-circle points.

    Hermitian positive semidefinite by construction; the model-agnostic
    observational-equivalence oracle.
    """
    out = []
    for z in np.asarray(z_grid):
        bz = model.B.value(z)
        try:
            g = np.linalg.solve(bz, a_plus_mat.value(z))
        except np.linalg.LinAlgError as exc:
            raise SingularMatrixError(f"B(z) singular at grid point z = {z:.6g}") from exc
        out.append(g @ g.conj().T)
    return out


def spectral_distance(bundle_a: SolutionBundle, bundle_b: SolutionBundle, z_grid):
    """Max-abs difference of the two spectral densities and the comparison scale."""
    fa = spectral_density(bundle_a.model, bundle_a.a_plus, z_grid)
    fb = spectral_density(bundle_b.model, bundle_b.a_plus, z_grid)
    diff = max(float(np.max(np.abs(a - b))) for a, b in zip(fa, fb))
    scale = max(max(float(np.max(np.abs(a))) for a in fa), 1e-12)
    return diff, scale


def autocovariances_from_spectrum(bundle: SolutionBundle, lags: int, grid_size: int = 512):
    """Autocovariances gamma(0..lags) via the inverse transform of the spectrum."""
    grid = unit_circle_grid(grid_size)
    f = np.array(spectral_density(bundle.model, bundle.a_plus, grid))
    out = []
    for h in range(lags + 1):
        weights = grid ** (-h)
        out.append(np.real(np.tensordot(weights, f, axes=(0, 0)) / grid_size))
    return np.array(out)


def decay_horizon(bundle: SolutionBundle, rtol: float = 1e-12, cap: int = 10_000) -> int:
    """Smallest h with max-abs(C_h) < rtol * max-abs(C_0), capped."""
    c0_scale = max(float(np.max(np.abs(bundle.transfer.coefficient(0)))), 1e-300)
    h = max(bundle.transfer.horizon, 16)
    while True:
        series = transfer_series(bundle.factors.b_plus, bundle.ma_part, min(h, cap))
        norms = np.max(np.abs(series.coeffs), axis=(1, 2))
        small = np.nonzero(norms < rtol * c0_scale)[0]
        if small.size:
            return int(small[0])
        if h >= cap:
            return cap
        h *= 2


def simulate(bundle: SolutionBundle, T: int, seed: int,
             truncation: int | None = None) -> np.ndarray:
    """Sample path of length T from the truncated moving-average representation.

    Deterministic given the seed; innovations are i.i.d. standard normal.
    """
    h = decay_horizon(bundle) if truncation is None else truncation
    series = transfer_series(bundle.factors.b_plus, bundle.ma_part, h)
    rng = np.random.default_rng(seed)
    m, n = bundle.model.m, bundle.model.n
    eps = rng.standard_normal((T + h, m))
    y = np.zeros((T, n))
    for j in range(h + 1):
        y += eps[h - j: h - j + T] @ series.coeffs[j].T
    return y


def sample_autocovariances(y: np.ndarray, lags: int):
    """Biased (1/T) sample autocovariances gamma_hat(0..lags), mean removed."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T = y.shape[0]
    yc = y - y.mean(axis=0)
    out = []
    for h in range(lags + 1):
        out.append(yc[h:].T @ yc[: T - h] / T)
    return np.array(out)
