"""Confidence regions, p-values, and the chi-square machinery behind them.

Coefficient subvectors and covariate-weighted sums of partial effects are
asymptotically normal with covariance taken from the inverse penalized
Fisher information (the coefficient block of the Poisson fit's inverse).
Regions are solid ellipsoids with chi-square radii: simultaneous over the
response domain, pointwise in the covariates; per-term regions over the
whole coefficient block are simultaneous in the covariates as well.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .basis import DesignBlock, term_slices
from .errors import SingularCovariance
from .fit import FitResult

_GAMMA_TOL = 1e-12
_GAMMA_MAX_ITER = 500


def _lower_gamma_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma by series, for x < a + 1."""
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_GAMMA_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _GAMMA_TOL:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))

def _upper_gamma_cf(a: float, x: float) -> float:
    """Regularized upper incomplete gamma by continued fraction, x >= a + 1."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _GAMMA_MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _GAMMA_TOL:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def regularized_gamma_p(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x < 0 or a <= 0:
        raise ValueError("need x >= 0 and a > 0")
    if x == 0:
        return 0.0
    if x < a + 1.0:
        return min(_lower_gamma_series(a, x), 1.0)
    return max(1.0 - _upper_gamma_cf(a, x), 0.0)


def chi2_cdf(x: float, k: int) -> float:
    """Chi-square distribution function with k degrees of freedom."""
    if x < 0:
        raise ValueError("chi-square support is nonnegative")
    return regularized_gamma_p(k / 2.0, x / 2.0)


def chi2_quantile(p: float, k: int) -> float:
    """Chi-square quantile by bracketed bisection on the distribution function."""
    if not 0.0 < p < 1.0:
        raise ValueError("quantile level must be in (0, 1)")
    hi = k + 10.0 * math.sqrt(2.0 * k) + 20.0
    while chi2_cdf(hi, k) < p:
        hi *= 2.0
    lo = 0.0
    while hi - lo > 1e-10 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, k) < p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Regions


@dataclass
class EffectRegion:
    """Solid confidence ellipsoid for a coefficient image."""

    center: np.ndarray
    cov: np.ndarray
    level: float
    radius: float
    floored: bool = False

    @property
    def dim(self) -> int:
        return len(self.center)

    def mahalanobis(self, point) -> float:
        diff = np.asarray(point, dtype=float) - self.center
        return float(diff @ np.linalg.solve(self.cov, diff))

    def contains(self, point) -> bool:
        return self.mahalanobis(point) <= self.radius


def _regularize_cov(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    cov = 0.5 * (cov + cov.T)
    trace = float(np.trace(cov))
    if not np.isfinite(trace) or trace <= 0:
        raise SingularCovariance("covariance has nonpositive or nonfinite trace")
    floor = 1e-12 * trace / cov.shape[0]
    eigval, eigvec = np.linalg.eigh(cov)
    if eigval[0] >= floor:
        return cov, False
    warnings.warn("near-singular region covariance; eigenvalues floored", RuntimeWarning)
    eigval = np.maximum(eigval, floor)
    return (eigvec * eigval) @ eigvec.T, True


def _make_region(center, cov, alpha) -> EffectRegion:
    cov, floored = _regularize_cov(np.asarray(cov, dtype=float))
    radius = chi2_quantile(alpha, len(center))
    return EffectRegion(np.asarray(center, dtype=float), cov, alpha, radius, floored)


def selector_matrix(blocks: list[DesignBlock], ky: int, index: int) -> np.ndarray:
    """Matrix mapping the stacked coefficient vector to one term's block."""
    slices = term_slices(blocks, ky)
    k = slices[-1].stop
    sl = slices[index]
    out = np.zeros((sl.stop - sl.start, k))
    out[:, sl] = np.eye(sl.stop - sl.start)
    return out


def effect_transform(blocks: list[DesignBlock], ky: int, term_indices,
                     covariates: dict, signs=None) -> np.ndarray:
    """Row map from coefficients to the summed effect at fixed covariates.

    Builds ``sum_j sign_j (b_j(x_j)' kron I)`` over the requested terms;
    ``covariates`` is either one mapping shared by all terms or one mapping
    per term (used by reference-coding transforms).
    """
    slices = term_slices(blocks, ky)
    k = slices[-1].stop
    out = np.zeros((ky, k))
    if signs is None:
        signs = [1.0] * len(term_indices)
    per_term = isinstance(covariates, (list, tuple))
    for pos, j in enumerate(term_indices):
        x = covariates[pos] if per_term else covariates
        row = blocks[j].row(x)
        out[:, slices[j]] += signs[pos] * np.kron(row, np.eye(ky))
    return out


def effect_region(fit: FitResult, blocks: list[DesignBlock], ky: int,
                  term_indices, covariates: dict, alpha: float,
                  signs=None) -> EffectRegion:
    """Region for a sum of partial effects at fixed covariate values:
    simultaneous over the response domain, pointwise in the covariates."""
    a = effect_transform(blocks, ky, term_indices, covariates, signs)
    center = a @ fit.theta
    cov = a @ fit.theta_cov @ a.T
    return _make_region(center, cov, alpha)


def simultaneous_region(fit: FitResult, blocks: list[DesignBlock], ky: int,
                        index: int, alpha: float) -> EffectRegion:
    """Region for one term's whole coefficient block: simultaneous over the
    response domain and the covariates."""
    s = selector_matrix(blocks, ky, index)
    center = s @ fit.theta
    cov = s @ fit.theta_cov @ s.T
    return _make_region(center, cov, alpha)


def p_value(region: EffectRegion) -> float:
    """Asymptotic p-value for the null that the effect is zero."""
    stat = region.mahalanobis(np.zeros(region.dim))
    return 1.0 - chi2_cdf(stat, region.dim)


def sample_region(region: EffectRegion, count: int, seed: int) -> np.ndarray:
    """Uniform draws from the solid ellipsoid, reproducible under the seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    d = region.dim
    chol = np.linalg.cholesky(region.cov)
    z = rng.standard_normal((count, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = rng.random(count) ** (1.0 / d)
    return region.center + math.sqrt(region.radius) * (z * r[:, None]) @ chol.T
