"""Free-parameter counting, BIC scoring, and grid search over model configs.

The grid covers family x G x q x r. When the BIC winner sits at the top of
the q or r range, the range is extended by one and the new cells fitted,
until the winner is interior, the parameter-reduction conditions fail, or a
round cap is reached.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .aecm import FitError, FitOptions, FitResult, StartFailure, fit
from .families import FAMILIES, THETA_DIM, validate_family

EXPANSION_ROUNDS = 10


class SelectionError(RuntimeError):
    """Every cell of a model grid failed to fit."""


def parsimony_condition(dim, k):
    """Whether k factors reduce the free-parameter count for a dim x dim scale."""
    return (dim - k) ** 2 > dim + k


def count_free_params(family, g, n, p, q, r):
    """Number of free parameters of a g-component model on n x p data.

    Loading matrices are counted net of their rotational freedom
    (q(q-1)/2 for the rows, r(r-1)/2 for the columns).
    """
    family = validate_family(family)
    for name, value, low in (("g", g, 1), ("n", n, 1), ("p", p, 1),
                             ("q", q, 0), ("r", r, 0)):
        if int(value) != value or value < low:
            raise ValueError(f"{name} must be an integer >= {low}, got {value}")
    if not (parsimony_condition(n, q) and parsimony_condition(p, r)):
        warnings.warn(
            f"factor structure (q={q}, r={r}) does not reduce the parameter "
            f"count for {n} x {p} data",
            UserWarning,
            stacklevel=2,
        )
    row_scale = n * q - q * (q - 1) // 2 + n
    col_scale = p * r - r * (r - 1) // 2 + p
    per_component = n * p + row_scale + col_scale + THETA_DIM[family]
    if family != "gauss":
        per_component += n * p
    return (g - 1) + g * per_component


@dataclass(frozen=True)
class ModelGridSpec:
    """Grid of model configurations to score, plus fitting effort per cell."""

    families: tuple
    g_range: tuple
    q_range: tuple
    r_range: tuple
    starts: int = 5

    def __post_init__(self):
        families = tuple(validate_family(f) for f in self.families)
        if not families:
            raise ValueError("at least one family is required")
        ranges = {}
        for name, low in (("g_range", 1), ("q_range", 0), ("r_range", 0)):
            values = tuple(int(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must be nonempty")
            if any(v < low for v in values):
                raise ValueError(f"{name} entries must be >= {low}")
            ranges[name] = tuple(sorted(set(values)))
        if int(self.starts) < 1:
            raise ValueError("starts must be at least 1")
        object.__setattr__(self, "families", families)
        for name, values in ranges.items():
            object.__setattr__(self, name, values)
        object.__setattr__(self, "starts", int(self.starts))


@dataclass(frozen=True)
class ScoredModel:
    """A fitted configuration with its parameter count and BIC."""

    family: str
    g: int
    q: int
    r: int
    fit: FitResult
    rho: int
    bic: float


@dataclass(frozen=True)
class GridRow:
    """One score-table entry; error is set when the cell failed to fit."""

    family: str
    g: int
    q: int
    r: int
    loglik: float
    rho: int
    bic: float
    converged: bool
    error: str | None = None


@dataclass(frozen=True)
class GridResult:
    best: ScoredModel
    table: tuple


def cell_seed(seed, cell):
    """Deterministic per-cell random seed derived from the cell identity."""
    family, g, q, r = cell
    key = (FAMILIES.index(validate_family(family)), int(g), int(q), int(r))
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def _cells(families, g_range, q_range, r_range):
    return [
        (family, g, q, r)
        for family in families
        for g in g_range
        for q in q_range
        for r in r_range
    ]


def grid_search(data, spec, labels=None, seed=None, max_iter=1000, known=None):
    """Fit and score every grid cell, extending boundary ranges as needed.

    ``known`` maps (family, g, q, r) to a previously computed
    (loglik, rho, bic) triple; such cells are not refit unless one of them
    wins, in which case it is refit once to materialize the model.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 3 or 0 in data.shape:
        raise ValueError("data must be a nonempty stack of matrices")
    count, n, p = data.shape
    if max(spec.q_range) >= n or max(spec.r_range) >= p:
        raise ValueError(
            f"factor counts must satisfy q < {n} and r < {p} for this data"
        )
    known = dict(known or {})

    def fit_cell(cell):
        family, g, q, r = cell
        options = FitOptions(starts=spec.starts, max_iter=max_iter,
                             random_state=cell_seed(seed, cell))
        return fit(data, family, g, q, r, labels=labels, options=options)

    rows = {}
    fits = {}

    def ensure_scored(cells):
        for cell in cells:
            if cell in rows:
                continue
            if cell in known:
                loglik, rho, bic = known[cell]
                rows[cell] = GridRow(*cell, loglik=float(loglik), rho=int(rho),
                                     bic=float(bic), converged=True)
                continue
            family, g, q, r = cell
            rho = count_free_params(family, g, n, p, q, r)
            try:
                fitted = fit_cell(cell)
            except (FitError, StartFailure) as err:
                rows[cell] = GridRow(*cell, loglik=math.nan, rho=rho,
                                     bic=-math.inf, converged=False,
                                     error=str(err))
                continue
            fits[cell] = fitted
            bic = 2.0 * fitted.final_loglik - rho * math.log(count)
            rows[cell] = GridRow(*cell, loglik=fitted.final_loglik, rho=rho,
                                 bic=bic, converged=fitted.converged)

    def winner(cells):
        best = None
        for cell in cells:
            row = rows[cell]
            if row.error is not None:
                continue
            if best is None or row.bic > rows[best].bic:
                best = cell
        return best

    q_range = list(spec.q_range)
    r_range = list(spec.r_range)
    cells = _cells(spec.families, spec.g_range, q_range, r_range)
    ensure_scored(cells)
    best = winner(cells)
    if best is None:
        details = "; ".join(
            f"{row.family} G={row.g} q={row.q} r={row.r}: {row.error}"
            for row in (rows[cell] for cell in cells)
        )
        raise SelectionError(f"all {len(cells)} grid cells failed: {details}")

    for _ in range(EXPANSION_ROUNDS):
        _, _, best_q, best_r = best
        grew = False
        if best_q == max(q_range):
            new_q = best_q + 1
            if new_q < n and parsimony_condition(n, new_q):
                q_range.append(new_q)
                grew = True
        if best_r == max(r_range):
            new_r = best_r + 1
            if new_r < p and parsimony_condition(p, new_r):
                r_range.append(new_r)
                grew = True
        if not grew:
            break
        cells = _cells(spec.families, spec.g_range, q_range, r_range)
        ensure_scored(cells)
        best = winner(cells)

    if best not in fits:
        # a known-score winner still needs an actual model
        fits[best] = fit_cell(best)
    best_row = rows[best]
    table = tuple(rows[cell] for cell in cells)
    return GridResult(
        best=ScoredModel(family=best_row.family, g=best_row.g, q=best_row.q,
                         r=best_row.r, fit=fits[best], rho=best_row.rho,
                         bic=best_row.bic),
        table=table,
    )
