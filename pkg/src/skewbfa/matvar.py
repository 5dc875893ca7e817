"""Matrix-variate normal and skewed variance-mean mixture densities.

A skewed observation is built as X = M + W A + sqrt(W) V with V matrix
normal and W a positive latent weight, so every density here reduces to
a Bessel-type kernel in the two quadratic forms

    delta = tr(Sigma^-1 (X - M) Psi^-1 (X - M)')
    rho   = tr(Sigma^-1 A Psi^-1 A')

Scale matrices are factored once (Cholesky) and the factors are reused
across the quadratic forms and log-determinants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular

from .families import SKEW_FAMILIES, validate_family, validate_theta
from .gig import GigParams, sample_latent_w
from .specfun import log_bessel_k, log_gamma

LOG_2PI = math.log(2.0 * math.pi)


class DensitySingularityError(ArithmeticError):
    """The density diverges at this point (non-finite intermediate)."""


class DegenerateConditionalError(ArithmeticError):
    """The conditional weight law is not a proper GIG distribution."""


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of a symmetric positive definite matrix."""

    chol: np.ndarray
    logdet: float

    @property
    def dim(self) -> int:
        return self.chol.shape[0]


def spd_factor(s: np.ndarray) -> SpdFactor:
    s = np.asarray(s, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"scale matrix must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError("scale matrix must be finite")
    if not np.allclose(s, s.T, rtol=1e-10, atol=1e-12):
        raise ValueError("scale matrix must be symmetric")
    try:
        chol = cholesky(s, lower=True)
    except np.linalg.LinAlgError as err:
        raise ValueError("scale matrix not positive definite") from err
    except Exception as err:  # scipy raises LinAlgError from its own module
        if type(err).__name__ == "LinAlgError":
            raise ValueError("scale matrix not positive definite") from err
        raise
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return SpdFactor(chol=chol, logdet=logdet)


def _whiten(z: np.ndarray, row_factor: SpdFactor, col_factor: SpdFactor) -> np.ndarray:
    """Return L_r^-1 Z L_c^-T so Frobenius products give trace forms."""
    z = np.asarray(z, dtype=float)
    if z.shape != (row_factor.dim, col_factor.dim):
        raise ValueError(
            f"matrix shape {z.shape} does not match scales "
            f"({row_factor.dim}, {col_factor.dim})"
        )
    left = solve_triangular(row_factor.chol, z, lower=True)
    return solve_triangular(col_factor.chol, left.T, lower=True).T


def quad_delta(
    x: np.ndarray, m: np.ndarray, row_factor: SpdFactor, col_factor: SpdFactor
) -> float:
    """tr(Sigma^-1 (X - M) Psi^-1 (X - M)') from the scale factors."""
    w = _whiten(np.asarray(x, dtype=float) - np.asarray(m, dtype=float), row_factor, col_factor)
    return float(np.sum(w * w))


def quad_rho(a: np.ndarray, row_factor: SpdFactor, col_factor: SpdFactor) -> float:
    """tr(Sigma^-1 A Psi^-1 A') from the scale factors."""
    w = _whiten(a, row_factor, col_factor)
    return float(np.sum(w * w))


def _check_mean_shapes(m: np.ndarray, sigma: np.ndarray, psi: np.ndarray) -> None:
    if m.ndim != 2:
        raise ValueError("mean must be a matrix")
    n, p = m.shape
    if sigma.shape != (n, n):
        raise ValueError(f"row scale shape {sigma.shape} does not match mean rows {n}")
    if psi.shape != (p, p):
        raise ValueError(f"column scale shape {psi.shape} does not match mean columns {p}")


@dataclass(frozen=True)
class MatNormParams:
    """Matrix normal parameters: n x p mean, row scale Sigma, column scale Psi."""

    m: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    row_factor: SpdFactor = field(init=False, repr=False, compare=False)
    col_factor: SpdFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        if not np.all(np.isfinite(m)):
            raise ValueError("mean must be finite")
        _check_mean_shapes(m, sigma, psi)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "row_factor", spd_factor(sigma))
        object.__setattr__(self, "col_factor", spd_factor(psi))

    @property
    def shape(self) -> tuple[int, int]:
        return self.m.shape


@dataclass(frozen=True)
class SkewMatParams:
    """One skewed matrix-variate component: mean, skewness, scales, theta."""

    family: str
    m: np.ndarray
    a: np.ndarray
    sigma: np.ndarray
    psi: np.ndarray
    theta: dict
    row_factor: SpdFactor = field(init=False, repr=False, compare=False)
    col_factor: SpdFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        family = validate_family(self.family)
        if family not in SKEW_FAMILIES:
            raise ValueError(f"skewed density requires a skewed family, got {family!r}")
        m = np.asarray(self.m, dtype=float)
        a = np.asarray(self.a, dtype=float)
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(a))):
            raise ValueError("mean and skewness must be finite")
        if a.shape != m.shape:
            raise ValueError(f"skewness shape {a.shape} does not match mean shape {m.shape}")
        sigma = np.asarray(self.sigma, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        _check_mean_shapes(m, sigma, psi)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "theta", validate_theta(family, self.theta))
        object.__setattr__(self, "row_factor", spd_factor(sigma))
        object.__setattr__(self, "col_factor", spd_factor(psi))

    @property
    def shape(self) -> tuple[int, int]:
        return self.m.shape


def logpdf_matnorm(x: np.ndarray, params: MatNormParams) -> float:
    """Log density of the matrix normal distribution at one matrix."""
    n, p = params.shape
    delta = quad_delta(x, params.m, params.row_factor, params.col_factor)
    return -0.5 * (
        n * p * LOG_2PI + p * params.row_factor.logdet + n * params.col_factor.logdet + delta
    )


def _log_gig_kernel(aa: float, bb: float, order: float) -> float:
    """log of (bb/aa)^(order/2) K_order(sqrt(aa bb)) with boundary limits.

    At bb = 0 the product stays finite only for order > 0; at aa = 0 only
    for order < 0.  Outside those the density diverges.
    """
    if aa > 0.0 and bb > 0.0:
        return 0.5 * order * (math.log(bb) - math.log(aa)) + log_bessel_k(
            order, math.sqrt(aa * bb)
        )
    if bb == 0.0:
        if order <= 0.0:
            raise DensitySingularityError(
                "density diverges: zero residual quadratic form with non-positive kernel order"
            )
        return -math.log(2.0) + log_gamma(order) + order * (math.log(2.0) - math.log(aa))
    if aa == 0.0:
        if order >= 0.0:
            raise DensitySingularityError(
                "density diverges: zero skewness quadratic form with non-negative kernel order"
            )
        return (
            -math.log(2.0) + log_gamma(-order) - order * math.log(2.0) + order * math.log(bb)
        )
    raise ValueError("quadratic forms must be non-negative")


def _family_log_terms(family: str, theta: dict, np_product: int, rho: float, delta: float) -> float:
    """Family constant plus Bessel kernel for the marginal density."""
    half_np = 0.5 * np_product
    if family == "st":
        df = theta["df"]
        return (
            math.log(2.0)
            + 0.5 * df * math.log(0.5 * df)
            - log_gamma(0.5 * df)
            + _log_gig_kernel(rho, delta + df, -(df + np_product) / 2.0)
        )
    if family == "gh":
        om, ix = theta["concentration"], theta["index"]
        return _log_gig_kernel(rho + om, delta + om, ix - half_np) - log_bessel_k(ix, om)
    if family == "vg":
        sh = theta["shape"]
        return (
            math.log(2.0)
            + sh * math.log(sh)
            - log_gamma(sh)
            + _log_gig_kernel(rho + 2.0 * sh, delta, sh - half_np)
        )
    if family == "nig":
        rate = theta["rate"]
        return (
            math.log(2.0)
            + rate
            - 0.5 * LOG_2PI
            + _log_gig_kernel(rho + rate**2, delta + 1.0, -(1.0 + np_product) / 2.0)
        )
    raise ValueError(f"unknown skewed family {family!r}")


def logpdf_skew(x: np.ndarray, params: SkewMatParams) -> float:
    """Log density of one skewed matrix-variate observation.

    Computed entirely in log space: the normal core, the trace coupling
    term, and the family-specific Bessel kernel in (rho, delta).
    """
    n, p = params.shape
    resid_w = _whiten(np.asarray(x, dtype=float) - params.m, params.row_factor, params.col_factor)
    skew_w = _whiten(params.a, params.row_factor, params.col_factor)
    delta = float(np.sum(resid_w * resid_w))
    rho = float(np.sum(skew_w * skew_w))
    trace_term = float(np.sum(resid_w * skew_w))
    core = trace_term - 0.5 * (
        n * p * LOG_2PI + p * params.row_factor.logdet + n * params.col_factor.logdet
    )
    return core + _family_log_terms(params.family, params.theta, n * p, rho, delta)


def conditional_w_params_from_quads(
    family: str, theta: dict, np_product: int, rho: float, delta: float
) -> GigParams:
    """GIG law of the latent weight given the quadratic forms of one point."""
    family = validate_family(family)
    theta = validate_theta(family, theta)
    half_np = 0.5 * np_product
    if family == "st":
        df = theta["df"]
        a, b, order = rho, delta + df, -(df + np_product) / 2.0
    elif family == "gh":
        om, ix = theta["concentration"], theta["index"]
        a, b, order = rho + om, delta + om, ix - half_np
    elif family == "vg":
        sh = theta["shape"]
        a, b, order = rho + 2.0 * sh, delta, sh - half_np
    elif family == "nig":
        rate = theta["rate"]
        a, b, order = rho + rate**2, delta + 1.0, -(1.0 + np_product) / 2.0
    else:
        raise ValueError(f"no conditional weight law for family {family!r}")
    if a <= 0.0 or b <= 0.0:
        raise DegenerateConditionalError(
            f"conditional weight law is degenerate: a={a}, b={b} (both must be positive)"
        )
    return GigParams(a=a, b=b, index=order)


def conditional_w_params(x: np.ndarray, params: SkewMatParams) -> GigParams:
    """GIG law of the latent weight given an observation.

    The scales carried by ``params`` must be the marginal (assembled)
    scales of the observation model.
    """
    n, p = params.shape
    delta = quad_delta(x, params.m, params.row_factor, params.col_factor)
    rho = quad_rho(params.a, params.row_factor, params.col_factor)
    return conditional_w_params_from_quads(params.family, params.theta, n * p, rho, delta)


def sample_skew(params: SkewMatParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw matrices X = M + W A + sqrt(W) V with V matrix normal."""
    n, p = params.shape
    w = sample_latent_w(params.family, params.theta, count, rng)
    z = rng.standard_normal((count, n, p))
    v = params.row_factor.chol @ z @ params.col_factor.chol.T
    return params.m + w[:, None, None] * params.a + np.sqrt(w)[:, None, None] * v
