"""Numerical primitives: normal CDF and density, samplers, 3x3 linear algebra,
OLS with three regressors, and two goodness-of-fit tests.

Samplers take either a :class:`~leansim.rng.RngStream` (one stream, ``size``
draws in sequence) or, through the ``*_cells`` variants, a
:class:`~leansim.rng.StreamArray` (one draw per selected stream). Both routes
run the same arithmetic in the same order, so a cell reproduces the scalar
stream with the same key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .errors import DecompositionError, DomainError, FitError, StatTestError
from .rng import RngStream

__all__ = [
    "OLSResult",
    "binomial_interval",
    "chi2_uniformity_pvalue",
    "cholesky3",
    "normal_density_scaled",
    "ols3",
    "pearson_correlation",
    "sample_mvn3",
    "sample_scaled_inv_chi_squared",
    "sample_std_normal",
    "scaled_inv_chi_squared_cells",
    "shapiro_wilk",
    "std_normal_cdf",
]

# Largest degrees of freedom sampled as a plain sum of squared normals;
# above it chi-square draws use Marsaglia-Tsang gamma rejection.
CHI2_SUM_MAX_DOF = 32

_SYM_TOL = 1e-12
_RANK_TOL = 1e-10


# ----------------------------------------------------------------------------
# Normal distribution
# ----------------------------------------------------------------------------


def std_normal_cdf(u):
    """Standard normal CDF. Accepts scalars or arrays."""
    out = special.ndtr(u)
    return float(out) if np.ndim(out) == 0 else out


def normal_density_scaled(x, sigma):
    """Density of N(0, sigma**2) at ``x``."""
    if np.any(np.asarray(sigma) <= 0):
        raise DomainError(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=float)
    out = np.exp(-(x * x) / (2.0 * sigma * sigma)) / (math.sqrt(2.0 * math.pi) * sigma)
    return float(out) if out.ndim == 0 else out


def sample_std_normal(rng: RngStream, size: int | None = None):
    """Box-Muller standard normals from ``rng``."""
    if size is None:
        return rng.normal()
    return rng.normals(size)


# ----------------------------------------------------------------------------
# Chi-square family
# ----------------------------------------------------------------------------


class SingleStream:
    # Presents a single RngStream through the StreamArray index interface.
    def __init__(self, rng: RngStream):
        self.rng = rng

    def normals(self, idx):
        return self.rng.normals(len(idx))

    def uniforms(self, idx):
        return self.rng.uniforms(len(idx))


def _sum_of_squares(source, idx: np.ndarray, dof: np.ndarray) -> np.ndarray:
    total = np.zeros(idx.size)
    for k in range(int(dof.max(initial=0))):
        live = dof > k
        z = source.normals(idx[live])
        total[live] += z * z
    return total


def _gamma_mt(source, idx: np.ndarray, shape: np.ndarray) -> np.ndarray:
    # Marsaglia-Tsang for shape >= 1; returns Gamma(shape, 1) draws.
    d = shape - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(idx.size)
    pending = np.arange(idx.size)
    while pending.size:
        z = source.normals(idx[pending])
        v = 1.0 + c[pending] * z
        positive = v > 0.0
        cand = pending[positive]
        z = z[positive]
        v = v[positive]
        v3 = v * v * v
        u = source.uniforms(idx[cand])
        dc = d[cand]
        accept = np.log(1.0 - u) < 0.5 * z * z + dc - dc * v3 + dc * np.log(v3)
        out[cand[accept]] = dc[accept] * v3[accept]
        done = np.zeros(pending.size, dtype=bool)
        done[np.flatnonzero(positive)[accept]] = True
        pending = pending[~done]
    return out


def chi2_cells(source, idx: np.ndarray, dof: np.ndarray) -> np.ndarray:
    out = np.empty(idx.size)
    small = dof <= CHI2_SUM_MAX_DOF
    if small.any():
        out[small] = _sum_of_squares(source, idx[small], dof[small])
    if (~small).any():
        out[~small] = 2.0 * _gamma_mt(source, idx[~small], 0.5 * dof[~small])
    return out


def _check_inv_chi2_args(n, c) -> None:
    if np.any(np.asarray(n) < 1) or np.any(np.asarray(n) != np.floor(n)):
        raise DomainError(f"degrees of freedom must be a positive integer, got {n}")
    if np.any(np.asarray(c) <= 0) or not np.all(np.isfinite(c)):
        raise DomainError(f"scale must be positive and finite, got {c}")


def scaled_inv_chi_squared_cells(streams, dof, scale, idx=None) -> np.ndarray:
    """One ``dof * scale / chi2_dof`` draw for each selected cell of ``streams``.

    ``dof`` and ``scale`` are scalars or arrays aligned with the selection.
    """
    idx = np.arange(len(streams)) if idx is None else np.asarray(idx, dtype=np.int64)
    dof = np.broadcast_to(np.asarray(dof, dtype=np.int64), idx.shape)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), idx.shape)
    _check_inv_chi2_args(dof, scale)
    x = chi2_cells(streams, idx, dof)
    return (dof * scale) / x


def sample_scaled_inv_chi_squared(rng: RngStream, n: int, c: float, size: int | None = None):
    """Scaled inverse chi-square draws ``n * c / X`` with ``X ~ chi2_n``."""
    _check_inv_chi2_args(n, c)
    count = 1 if size is None else int(size)
    if n <= CHI2_SUM_MAX_DOF:
        z = rng.normals(count * n).reshape(count, n)
        x = np.zeros(count)
        for k in range(n):
            x += z[:, k] * z[:, k]
    else:
        one = SingleStream(rng)
        cell = np.zeros(1, dtype=np.int64)
        shape = np.array([0.5 * n])
        x = np.array([2.0 * _gamma_mt(one, cell, shape)[0] for _ in range(count)])
    out = (n * c) / x
    return float(out[0]) if size is None else out


# ----------------------------------------------------------------------------
# 3x3 linear algebra
# ----------------------------------------------------------------------------


def _as_mat3(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.shape != (3, 3):
        raise DomainError(f"expected a 3x3 matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("matrix has non-finite entries")
    return a


def cholesky3(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m`` for a 3x3 SPD matrix."""
    a = _as_mat3(m)
    scale = np.abs(a).max()
    if np.abs(a - a.T).max() > _SYM_TOL * scale:
        raise DecompositionError("matrix is not symmetric")
    low = np.zeros((3, 3))
    for i in range(3):
        for j in range(i + 1):
            s = a[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            if i == j:
                if not s > 0.0:
                    raise DecompositionError(
                        f"matrix is not positive definite: pivot {i} is {s:.3g}", pivot=i
                    )
                low[i, i] = math.sqrt(s)
            else:
                low[i, j] = s / low[j, j]
    return low


def lower_times(low: np.ndarray, z0, z1, z2):
    """``low @ (z0, z1, z2)`` for lower-triangular ``low``, componentwise."""
    return (
        low[0, 0] * z0,
        low[1, 0] * z0 + low[1, 1] * z1,
        low[2, 0] * z0 + low[2, 1] * z1 + low[2, 2] * z2,
    )


def sample_mvn3(rng: RngStream, mean, cov, size: int | None = None) -> np.ndarray:
    """Trivariate normal draws ``mean + L z``.

    Returns shape ``(3,)`` for ``size=None`` else ``(size, 3)``. A covariance
    whose entries are all below 1e-30 in magnitude is treated as a point mass.
    """
    mean = np.asarray(mean, dtype=float)
    cov = _as_mat3(cov)
    count = 1 if size is None else int(size)
    z = rng.normals(3 * count).reshape(count, 3)
    if np.abs(cov).max() < 1e-30:
        out = np.tile(mean, (count, 1))
    else:
        low = cholesky3(cov)
        d0, d1, d2 = lower_times(low, z[:, 0], z[:, 1], z[:, 2])
        out = np.column_stack([mean[0] + d0, mean[1] + d1, mean[2] + d2])
    return out[0] if size is None else out


def _solve_lower(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    y = np.empty(3)
    for i in range(3):
        y[i] = (b[i] - low[i, :i] @ y[:i]) / low[i, i]
    return y


def _solve_upper(up: np.ndarray, b: np.ndarray) -> np.ndarray:
    x = np.empty(3)
    for i in (2, 1, 0):
        x[i] = (b[i] - up[i, i + 1 :] @ x[i + 1 :]) / up[i, i]
    return x


# ----------------------------------------------------------------------------
# Ordinary least squares
# ----------------------------------------------------------------------------


@dataclass(frozen=True)
class OLSResult:
    theta_hat: np.ndarray
    sigma2_hat: float
    xtx_inv: np.ndarray
    residuals: np.ndarray


def ols3(design, response, label: str | None = None) -> OLSResult:
    """Least squares with three regressors via the normal equations.

    The residual variance uses ``n - 3`` degrees of freedom.
    """
    where = f" for {label}" if label else ""
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3 or y.shape != (x.shape[0],):
        raise FitError(f"design must be n x 3 and response length n{where}", label)
    n = x.shape[0]
    if n < 4:
        raise FitError(f"need at least 4 observations{where}, got {n}", label)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise FitError(f"non-finite input{where}", label)
    xtx = x.T @ x
    eig = np.linalg.eigvalsh(xtx)
    if not eig[0] > _RANK_TOL * eig[-1]:
        raise FitError(f"design matrix is rank deficient{where}", label)
    low = cholesky3(0.5 * (xtx + xtx.T))
    theta = _solve_upper(low.T, _solve_lower(low, x.T @ y))
    low_inv = np.column_stack([_solve_lower(low, e) for e in np.eye(3)])
    xtx_inv = low_inv.T @ low_inv
    residuals = y - x @ theta
    sigma2 = float(residuals @ residuals) / (n - 3)
    return OLSResult(theta, sigma2, 0.5 * (xtx_inv + xtx_inv.T), residuals)


# ----------------------------------------------------------------------------
# Goodness of fit
# ----------------------------------------------------------------------------

_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.5440, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def _poly(coef, x: float) -> float:
    # coefficients in increasing powers
    out = 0.0
    for c in reversed(coef):
        out = out * x + c
    return out


def _swilk_coefficients(n: int) -> np.ndarray:
    half = n // 2
    m = special.ndtri((np.arange(1, half + 1) - 0.375) / (n + 0.25))
    summ2 = 2.0 * float(m @ m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_SW_C2, rsn)
        fac = math.sqrt((summ2 - 2 * m[0] ** 2 - 2 * m[1] ** 2) / (1 - 2 * a1**2 - 2 * a2**2))
        a = -m / fac
        a[1] = a2
    else:
        fac = math.sqrt((summ2 - 2 * m[0] ** 2) / (1 - 2 * a1**2))
        a = -m / fac
    a[0] = a1
    return a


def shapiro_wilk(sample) -> tuple[float, float]:
    """Shapiro-Wilk W statistic and p-value (Royston 1995 approximation)."""
    x = np.sort(np.asarray(sample, dtype=float).ravel())
    n = x.size
    if not 4 <= n <= 5000:
        raise StatTestError(f"Shapiro-Wilk needs 4..5000 observations, got {n}")
    if not np.all(np.isfinite(x)):
        raise StatTestError("Shapiro-Wilk sample has non-finite values")
    centered = x - x.mean()
    ssq = float(centered @ centered)
    if x[-1] - x[0] <= 1e-19 * max(1.0, abs(x[0])) or ssq == 0.0:
        raise StatTestError("Shapiro-Wilk sample has zero variance")
    a = _swilk_coefficients(n)
    half = a.size
    numer = float(a @ (x[::-1][:half] - x[:half]))
    w = min(numer * numer / ssq, 1.0)

    y = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if y >= gamma:
            return w, 1e-99
        y = -math.log(gamma - y)
        mean = _poly(_SW_C3, n)
        sd = math.exp(_poly(_SW_C4, n))
    else:
        ln_n = math.log(n)
        mean = _poly(_SW_C5, ln_n)
        sd = math.exp(_poly(_SW_C6, ln_n))
    p = float(special.ndtr(-(y - mean) / sd)) if math.isfinite(y) else 1.0
    return w, p


def chi2_uniformity_pvalue(pvalues, bins: int = 20) -> float:
    """Pearson chi-square test that ``pvalues`` are uniform on [0, 1]."""
    p = np.asarray(pvalues, dtype=float).ravel()
    if p.size == 0:
        raise StatTestError("no p-values to test")
    if bins < 2:
        raise StatTestError(f"need at least 2 bins, got {bins}")
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise StatTestError("p-values must lie in [0, 1]")
    counts = np.bincount(np.minimum((p * bins).astype(np.int64), bins - 1), minlength=bins)
    expected = p.size / bins
    statistic = float(((counts - expected) ** 2).sum() / expected)
    return float(stats.chi2.sf(statistic, bins - 1))


def pearson_correlation(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be vectors of equal length")
    if x.size < 3:
        raise DomainError(f"need at least 3 points, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DomainError("correlation undefined for a constant vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def binomial_interval(p0: float, n: int, z: float) -> tuple[float, float]:
    """Normal-approximation interval ``p0 +/- z * sqrt(p0 (1 - p0) / n)``."""
    if not 0.0 < p0 < 1.0:
        raise DomainError(f"p0 must be in (0, 1), got {p0}")
    if n < 1 or z <= 0:
        raise DomainError("n and z must be positive")
    half = z * math.sqrt(p0 * (1.0 - p0) / n)
    return p0 - half, p0 + half
