"""Bilinear factor structure for the component scale matrices.

Each component carries diagonal scales plus low-rank loadings, so the
marginal scales are Sigma* = Sigma + Lam Lam' and Psi* = Psi + Del Del'.
Inverses use the Woodbury identity through the small q x q (r x r)
inner system and log-determinants use the matrix determinant lemma,
with a dense fallback when the inner system is ill conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .families import validate_family, validate_theta
from .matvar import MatNormParams, SkewMatParams

INNER_COND_LIMIT = 1e12


@dataclass(frozen=True)
class ComponentParams:
    """One mixture component: weight, location, skewness, factor scales."""

    family: str
    pi: float
    m: np.ndarray
    a: np.ndarray
    lam: np.ndarray
    sigma_diag: np.ndarray
    delta: np.ndarray
    psi_diag: np.ndarray
    theta: dict

    def __post_init__(self):
        family = validate_family(self.family)
        pi = float(self.pi)
        if not (0.0 < pi <= 1.0):
            raise ValueError(f"mixing weight must lie in (0, 1], got {pi}")
        m = np.asarray(self.m, dtype=float)
        a = np.asarray(self.a, dtype=float)
        lam = np.asarray(self.lam, dtype=float)
        sigma_diag = np.asarray(self.sigma_diag, dtype=float)
        delta = np.asarray(self.delta, dtype=float)
        psi_diag = np.asarray(self.psi_diag, dtype=float)
        if m.ndim != 2:
            raise ValueError("mean must be a matrix")
        n, p = m.shape
        if a.shape != (n, p):
            raise ValueError(f"skewness shape {a.shape} does not match mean shape {m.shape}")
        if lam.ndim != 2 or lam.shape[0] != n:
            raise ValueError(f"row loadings shape {lam.shape} does not match {n} rows")
        if delta.ndim != 2 or delta.shape[0] != p:
            raise ValueError(f"column loadings shape {delta.shape} does not match {p} columns")
        if sigma_diag.shape != (n,):
            raise ValueError(f"row scale diagonal must have length {n}")
        if psi_diag.shape != (p,):
            raise ValueError(f"column scale diagonal must have length {p}")
        for name, arr in (("mean", m), ("skewness", a), ("row loadings", lam),
                          ("column loadings", delta)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        for name, diag in (("row", sigma_diag), ("column", psi_diag)):
            if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
                raise ValueError(f"{name} scale diagonal must be strictly positive")
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma_diag", sigma_diag)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "psi_diag", psi_diag)
        object.__setattr__(self, "theta", validate_theta(family, self.theta))

    @property
    def n(self) -> int:
        return self.m.shape[0]

    @property
    def p(self) -> int:
        return self.m.shape[1]

    @property
    def q(self) -> int:
        return self.lam.shape[1]

    @property
    def r(self) -> int:
        return self.delta.shape[1]


@dataclass(frozen=True)
class StructuredScale:
    """Assembled marginal scale with its inverse, logdet and projection.

    ``proj`` is the q x n matrix (I + Lam' Sig^-1 Lam)^-1 Lam' Sig^-1 for
    the row scale and the p x r matrix Psi^-1 Del (I + Del' Psi^-1 Del)^-1
    for the column scale; ``inner_inv`` is the inverse inner system.
    """

    dense_star: np.ndarray
    inv_star: np.ndarray
    logdet_star: float
    proj: np.ndarray
    inner_inv: np.ndarray


def _assemble_one(diag: np.ndarray, loadings: np.ndarray) -> StructuredScale:
    """Assemble diag + loadings loadings' in the L-form (proj is k x d)."""
    d, k = loadings.shape
    dense_star = np.diag(diag) + loadings @ loadings.T
    log_diag_sum = float(np.sum(np.log(diag)))
    if k == 0:
        return StructuredScale(
            dense_star=dense_star,
            inv_star=np.diag(1.0 / diag),
            logdet_star=log_diag_sum,
            proj=np.zeros((0, d)),
            inner_inv=np.zeros((0, 0)),
        )
    lt_inv_diag = loadings.T / diag
    inner = np.eye(k) + lt_inv_diag @ loadings
    inner = 0.5 * (inner + inner.T)
    if np.linalg.cond(inner) > INNER_COND_LIMIT:
        inv_star = np.linalg.inv(dense_star)
        logdet_star = float(np.linalg.slogdet(dense_star)[1])
        inner_inv = np.linalg.inv(inner)
        proj = loadings.T @ inv_star
        return StructuredScale(dense_star, inv_star, logdet_star, proj, inner_inv)
    inner_inv = np.linalg.inv(inner)
    inner_inv = 0.5 * (inner_inv + inner_inv.T)
    proj = inner_inv @ lt_inv_diag
    inv_star = np.diag(1.0 / diag) - lt_inv_diag.T @ proj
    inv_star = 0.5 * (inv_star + inv_star.T)
    logdet_star = log_diag_sum + float(np.linalg.slogdet(inner)[1])
    return StructuredScale(dense_star, inv_star, logdet_star, proj, inner_inv)


def assemble_scales(c: ComponentParams) -> tuple[StructuredScale, StructuredScale]:
    """Assemble the row and column marginal scales of one component."""
    row = _assemble_one(c.sigma_diag, c.lam)
    col_l = _assemble_one(c.psi_diag, c.delta)
    col = StructuredScale(
        dense_star=col_l.dense_star,
        inv_star=col_l.inv_star,
        logdet_star=col_l.logdet_star,
        proj=col_l.proj.T,
        inner_inv=col_l.inner_inv,
    )
    return row, col


def marginal_density_params(c: ComponentParams) -> SkewMatParams | MatNormParams:
    """Package the component's marginal observation density parameters."""
    row, col = assemble_scales(c)
    if c.family == "gauss":
        return MatNormParams(m=c.m, sigma=row.dense_star, psi=col.dense_star)
    return SkewMatParams(
        family=c.family,
        m=c.m,
        a=c.a,
        sigma=row.dense_star,
        psi=col.dense_star,
        theta=c.theta,
    )
