"""Three-stage AECM estimation for skewed bilinear factor mixtures.

One cycle updates, in order: mixing weights, locations, skewness and
weight-law parameters (stage 1); row loadings and row scale diagonal
(stage 2); column loadings and column scale diagonal (stage 3).  Each
stage refreshes the responsibilities and conditional weight moments at
the current parameters before its conditional maximization.

Stage 3 is stage 2 on the transposed problem (rows and columns swap,
loadings and diagonals swap), so both run through one computational
core and their symmetry is exact.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar
from scipy.special import logsumexp

from .bfa import ComponentParams, assemble_scales
from .families import THETA_START, validate_family
from .gig import gig_moments_arrays
from .specfun import digamma, log_bessel_k, log_gamma

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-8
ST_DF_BOUNDS = (2.001, 500.0)
VG_SHAPE_BOUNDS = (0.05, 500.0)
GH_CONCENTRATION_BOUNDS = (0.05, 500.0)
GH_INDEX_BOUNDS = (-50.0, 50.0)


class StartFailure(RuntimeError):
    """One random start cannot continue (empty component, bad numerics)."""


class FitError(RuntimeError):
    """Every start failed; carries the per-start diagnostics."""


class DegenerateWeightsError(ArithmeticError):
    """Latent weights are all concentrated at one point (denominator ~ 0)."""


class InfiniteLikelihoodSignal(ArithmeticError):
    """The observed likelihood is numerically infinite at these parameters."""


@dataclass(frozen=True)
class MixtureModel:
    """A fitted or candidate mixture: G components sharing one family."""

    components: tuple[ComponentParams, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a mixture needs at least one component")
        first = comps[0]
        for c in comps[1:]:
            if c.family != first.family:
                raise ValueError("all components must share one family")
            if (c.n, c.p, c.q, c.r) != (first.n, first.p, first.q, first.r):
                raise ValueError("all components must share the same dimensions")
        total = sum(c.pi for c in comps)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"mixing weights must sum to 1, got {total}")
        object.__setattr__(self, "components", comps)

    @property
    def family(self) -> str:
        return self.components[0].family

    @property
    def g(self) -> int:
        return len(self.components)

    @property
    def n(self) -> int:
        return self.components[0].n

    @property
    def p(self) -> int:
        return self.components[0].p

    @property
    def q(self) -> int:
        return self.components[0].q

    @property
    def r(self) -> int:
        return self.components[0].r


@dataclass(frozen=True)
class EStepCache:
    """Responsibilities and conditional weight moments for one E-step."""

    z_hat: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_g: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray


@dataclass(frozen=True)
class LatentMoments:
    """Stacked per-observation latent factor moments for one component.

    ``e1`` and ``e2`` hold the conditional first moments of the latent
    matrix (and its 1/W weighting) with a leading observation axis;
    ``e3`` holds the weighted second-moment matrices.
    """

    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray


@dataclass(frozen=True)
class FitOptions:
    """Estimation controls: multistart, iteration budget, reproducibility."""

    starts: int = 5
    max_iter: int = 1000
    random_state: int | np.random.Generator | None = None
    init_model: MixtureModel | None = None
    floor: float = VARIANCE_FLOOR


@dataclass(frozen=True)
class FitResult:
    components: tuple[ComponentParams, ...]
    loglik_trace: tuple[float, ...]
    converged: bool
    iterations: int
    final_loglik: float
    z_hat: np.ndarray
    notes: tuple[str, ...] = ()


def _kernel_vec(aa: float, bb: np.ndarray, order: float) -> np.ndarray:
    """log of (bb/aa)^(order/2) K_order(sqrt(aa bb)) over a vector of bb.

    Boundary points take the finite limit when it exists and +inf when
    the density diverges there (the infinite-likelihood signal).
    """
    bb = np.asarray(bb, dtype=float)
    if aa == 0.0:
        if order >= 0.0:
            return np.full(bb.shape, np.inf)
        with np.errstate(divide="ignore"):
            return (-math.log(2.0) + log_gamma(-order) - order * math.log(2.0)
                    + order * np.log(bb))
    out = np.empty(bb.shape)
    pos = bb > 0.0
    if pos.any():
        bp = bb[pos]
        out[pos] = 0.5 * order * (np.log(bp) - math.log(aa)) + log_bessel_k(
            order, np.sqrt(aa * bp)
        )
    if not pos.all():
        if order > 0.0:
            out[~pos] = (-math.log(2.0) + log_gamma(order)
                         + order * (math.log(2.0) - math.log(aa)))
        else:
            out[~pos] = np.inf
    return out


def _family_kernel_params(family, theta, np_prod, rho, delta):
    """(aa, bb, order, const): the GIG kernel of the marginal density.

    The same (aa, bb, order) triple is the conditional weight law given
    the observation, so the E-step reuses it for the GIG moments.
    """
    half = 0.5 * np_prod
    if family == "st":
        df = theta["df"]
        const = math.log(2.0) + 0.5 * df * math.log(0.5 * df) - log_gamma(0.5 * df)
        return rho, delta + df, -(df + np_prod) / 2.0, const
    if family == "gh":
        om, ix = theta["concentration"], theta["index"]
        return rho + om, delta + om, ix - half, -log_bessel_k(ix, om)
    if family == "vg":
        sh = theta["shape"]
        const = math.log(2.0) + sh * math.log(sh) - log_gamma(sh)
        return rho + 2.0 * sh, delta, sh - half, const
    if family == "nig":
        rate = theta["rate"]
        const = math.log(2.0) + rate - 0.5 * LOG_2PI
        return rho + rate**2, delta + 1.0, -(1.0 + np_prod) / 2.0, const
    raise ValueError(f"no weight-mixture kernel for family {family!r}")


def _component_eval(data, c):
    """Vectorized log density of one component plus its GIG triple."""
    row, col = assemble_scales(c)
    n, p = c.n, c.p
    resid = data - c.m
    whitened = row.inv_star @ resid @ col.inv_star
    delta = np.maximum(np.einsum("inp,inp->i", whitened, resid), 0.0)
    base = -0.5 * (n * p * LOG_2PI + p * row.logdet_star + n * col.logdet_star)
    if c.family == "gauss":
        return base - 0.5 * delta, None
    trace = np.einsum("inp,np->i", whitened, c.a)
    skew_white = row.inv_star @ c.a @ col.inv_star
    rho = max(float(np.sum(skew_white * c.a)), 0.0)
    aa, bb, order, const = _family_kernel_params(c.family, c.theta, n * p, rho, delta)
    logf = base + trace + const + _kernel_vec(aa, bb, order)
    return logf, (aa, bb, order)


# Minimum Mahalanobis argument admitted into a divergent GIG kernel. When a
# location pins onto an observation the kernel grows without bound while the
# float value stays finite, so the spike must be flagged well before the
# argument saturates. Genuine fits keep the whitened distance near n*p.
SPIKE_EPS = 1e-8


def _log_density_matrix(data, model):
    """N x G component log densities; +inf raises the fallback signal."""
    count = data.shape[0]
    logf = np.empty((count, model.g))
    triples = []
    for g, c in enumerate(model.components):
        vec, triple = _component_eval(data, c)
        spiked = np.isposinf(vec).any()
        if triple is not None and triple[2] <= 0.0:
            spiked = spiked or float(np.min(triple[1])) < SPIKE_EPS
        if spiked:
            raise InfiniteLikelihoodSignal(
                f"component {g} density is infinite at some observation"
            )
        logf[:, g] = vec
        triples.append(triple)
    return logf, triples


def _validate_labels(labels, count, g):
    if labels is None:
        return None
    labels = np.asarray(labels)
    if labels.shape != (count,):
        raise ValueError(f"labels must have length {count}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == labels.astype(int)):
            raise ValueError("labels must be integers")
        labels = labels.astype(int)
    if labels.min() < 0 or labels.max() > g:
        raise ValueError(f"labels must lie in 0..{g} (0 means unlabelled)")
    return labels


def _responsibilities(logf, model, labels):
    log_pi = np.log([c.pi for c in model.components])
    weighted = logf + log_pi
    if np.isneginf(weighted.max(axis=1)).any():
        raise StartFailure("all component densities vanished for some observation")
    z = np.exp(weighted - logsumexp(weighted, axis=1, keepdims=True))
    if labels is not None:
        known = labels > 0
        z[known] = 0.0
        z[known, labels[known] - 1] = 1.0
    return z


def estep_stage1(data, model: MixtureModel, labels=None) -> EStepCache:
    """Responsibilities and conditional weight moments at the current fit."""
    data = np.asarray(data, dtype=float)
    labels = _validate_labels(labels, data.shape[0], model.g)
    logf, triples = _log_density_matrix(data, model)
    z = _responsibilities(logf, model, labels)
    count = data.shape[0]
    a = np.ones((count, model.g))
    b = np.ones((count, model.g))
    c_mom = np.zeros((count, model.g))
    for g, triple in enumerate(triples):
        if triple is None:
            continue
        aa, bb, order = triple
        if aa <= 0.0 or np.any(bb <= 0.0):
            raise StartFailure(
                "conditional weight law degenerate at some observation"
            )
        e_w, e_inv_w, e_log_w = gig_moments_arrays(aa, bb, order)
        a[:, g], b[:, g], c_mom[:, g] = e_w, e_inv_w, e_log_w
    n_g = z.sum(axis=0)
    safe = np.maximum(n_g, np.finfo(float).tiny)
    a_bar = (z * a).sum(axis=0) / safe
    b_bar = (z * b).sum(axis=0) / safe
    return EStepCache(z_hat=z, a=a, b=b, c=c_mom, n_g=n_g, a_bar=a_bar, b_bar=b_bar)


def observed_loglik(data, model: MixtureModel, labels=None) -> float:
    """Mixture log-likelihood; labelled rows use their own component only."""
    data = np.asarray(data, dtype=float)
    labels = _validate_labels(labels, data.shape[0], model.g)
    logf, _ = _log_density_matrix(data, model)
    weighted = logf + np.log([c.pi for c in model.components])
    if labels is None:
        return float(np.sum(logsumexp(weighted, axis=1)))
    known = labels > 0
    total = float(np.sum(weighted[known, labels[known] - 1]))
    if (~known).any():
        total += float(np.sum(logsumexp(weighted[~known], axis=1)))
    return total


def mstep_stage1(data, cache: EStepCache, family: str):
    """Update mixing weights, locations, and skewness matrices."""
    data = np.asarray(data, dtype=float)
    count = data.shape[0]
    g_count = cache.z_hat.shape[1]
    shape = data.shape[1:]
    pi = cache.n_g / count
    ms, a_s = [], []
    for g in range(g_count):
        z = cache.z_hat[:, g]
        n_g = cache.n_g[g]
        if family == "gauss":
            ms.append(np.einsum("i,inp->np", z, data) / n_g)
            a_s.append(np.zeros(shape))
            continue
        b_col = cache.b[:, g]
        den = cache.a_bar[g] * float(z @ b_col) - n_g
        if abs(den) < 1e-10 * n_g:
            raise DegenerateWeightsError(
                f"component {g}: weight moments are degenerate (denominator {den:.3e})"
            )
        sx = np.einsum("i,inp->np", z, data)
        sxb = np.einsum("i,inp->np", z * b_col, data)
        ms.append((cache.a_bar[g] * sxb - sx) / den)
        a_s.append((cache.b_bar[g] * sx - sxb) / den)
    return pi, ms, a_s


def _q_theta(family, theta, s_a, s_b, s_c, n_g):
    """Expected weighted log weight-density, the CM objective for theta."""
    if family == "st":
        df = theta["df"]
        return (n_g * (0.5 * df * math.log(0.5 * df) - log_gamma(0.5 * df))
                - (0.5 * df + 1.0) * s_c - 0.5 * df * s_b)
    if family == "vg":
        sh = theta["shape"]
        return n_g * (sh * math.log(sh) - log_gamma(sh)) + (sh - 1.0) * s_c - sh * s_a
    if family == "nig":
        rate = theta["rate"]
        return (n_g * (rate - 0.5 * LOG_2PI) - 1.5 * s_c - 0.5 * s_b
                - 0.5 * rate**2 * s_a)
    if family == "gh":
        om, ix = theta["concentration"], theta["index"]
        return ((ix - 1.0) * s_c - n_g * (math.log(2.0) + log_bessel_k(ix, om))
                - 0.5 * om * (s_a + s_b))
    return 0.0


def _solve_monotone_root(f, lo, hi, label, notes):
    """Root of a decreasing score on [lo, hi], clamped at the bounds."""
    if f(lo) <= 0.0:
        notes.append(f"{label} clamped at lower bound {lo}")
        return lo
    if f(hi) >= 0.0:
        notes.append(f"{label} clamped at upper bound {hi}")
        return hi
    return float(brentq(f, lo, hi, xtol=1e-10))


def _gh_coordinate_ascent(s_a, s_b, s_c, n_g, start):
    om, ix = start["concentration"], start["index"]

    def neg_q(o, i):
        return -_q_theta("gh", {"concentration": o, "index": i}, s_a, s_b, s_c, n_g)

    for _ in range(60):
        om_new = minimize_scalar(
            lambda o: neg_q(o, ix), bounds=GH_CONCENTRATION_BOUNDS,
            method="bounded", options={"xatol": 1e-9},
        ).x
        ix_new = minimize_scalar(
            lambda i: neg_q(om_new, i), bounds=GH_INDEX_BOUNDS,
            method="bounded", options={"xatol": 1e-9},
        ).x
        done = abs(om_new - om) < 1e-8 and abs(ix_new - ix) < 1e-8
        om, ix = float(om_new), float(ix_new)
        if done:
            break
    return {"concentration": om, "index": ix}


def mstep_theta(family, cache: EStepCache, thetas):
    """Per-component weight-law parameter update with a CM safeguard."""
    family = validate_family(family)
    notes: list[str] = []
    if family == "gauss":
        return [dict(t) for t in thetas], notes
    updated = []
    for g, current in enumerate(thetas):
        z = cache.z_hat[:, g]
        n_g = cache.n_g[g]
        s_a = float(z @ cache.a[:, g])
        s_b = float(z @ cache.b[:, g])
        s_c = float(z @ cache.c[:, g])
        if family == "st":
            s = (s_b + s_c) / n_g
            f = lambda nu: math.log(0.5 * nu) + 1.0 - digamma(0.5 * nu) - s
            new = {"df": _solve_monotone_root(f, *ST_DF_BOUNDS, f"component {g} df", notes)}
        elif family == "vg":
            t = (s_c - s_a) / n_g
            f = lambda gm: math.log(gm) + 1.0 - digamma(gm) + t
            new = {"shape": _solve_monotone_root(
                f, *VG_SHAPE_BOUNDS, f"component {g} shape", notes)}
        elif family == "nig":
            new = {"rate": n_g / s_a}
        else:
            new = _gh_coordinate_ascent(s_a, s_b, s_c, n_g, current)
        if _q_theta(family, new, s_a, s_b, s_c, n_g) < _q_theta(
            family, current, s_a, s_b, s_c, n_g
        ):
            notes.append(f"component {g} theta update rejected (objective decreased)")
            new = dict(current)
        updated.append(new)
    return updated, notes


def _stage_moments(resid, skew, a_col, b_col, proj, inner_inv, p_inv, free_dim):
    """Latent moments of the factor core: works on the row frame; the
    column frame passes transposed inputs."""
    la = proj @ skew
    g_mat = np.matmul(proj, resid)
    e1 = g_mat - a_col[:, None, None] * la
    e2 = b_col[:, None, None] * g_mat - la
    gp = np.matmul(g_mat, p_inv)
    t_rr = np.einsum("ikp,ilp->ikl", gp, g_mat)
    cross = np.einsum("ikp,lp->ikl", gp, la)
    hph = la @ p_inv @ la.T
    e3 = (free_dim * inner_inv
          + b_col[:, None, None] * t_rr
          - (cross + cross.transpose(0, 2, 1))
          + a_col[:, None, None] * hph)
    e3 = 0.5 * (e3 + e3.transpose(0, 2, 1))
    return LatentMoments(e1=e1, e2=e2, e3=e3)


def _stage_updates(resid, skew, z, a_col, b_col, n_g, moments, p_inv, floor):
    """Loadings and scale-diagonal update of the factor core frame."""
    k = moments.e1.shape[1]
    d = resid.shape[1]
    free_dim = resid.shape[2]
    rp = np.matmul(resid, p_inv)
    se1 = np.einsum("i,ikp->kp", z, moments.e1)
    se3 = np.einsum("i,ikl->kl", z, moments.e3)
    u1 = np.einsum("i,inp,ikp->nk", z, rp, moments.e2)
    ap = skew @ p_inv
    u = u1 - ap @ se1.T
    if k == 0:
        loadings = np.zeros((d, 0))
    else:
        try:
            loadings = np.linalg.solve(se3, u.T).T
        except np.linalg.LinAlgError as err:
            raise StartFailure("singular latent moment sum in loadings update") from err
    t1 = np.einsum("i,inp,imp->nm", z * b_col, rp, resid)
    sr = np.einsum("i,inp->np", z, resid)
    t2a = ap @ sr.T
    t2b = loadings @ u1.T
    apa = ap @ skew.T
    s_za = float(z @ a_col)
    t5 = loadings @ se1 @ ap.T
    t8 = loadings @ se3 @ loadings.T
    s_mat = (t1 - t2a - t2a.T - t2b - t2b.T + s_za * apa + t5 + t5.T + t8) / (
        n_g * free_dim
    )
    return loadings, np.maximum(np.diag(s_mat), floor)


def estep_stage2(data, model: MixtureModel, cache: EStepCache):
    """Row-factor latent moments, one stacked record per component."""
    data = np.asarray(data, dtype=float)
    out = []
    for g, c in enumerate(model.components):
        row, col = assemble_scales(c)
        out.append(_stage_moments(
            data - c.m, c.a, cache.a[:, g], cache.b[:, g],
            row.proj, row.inner_inv, col.inv_star, c.p,
        ))
    return out


def mstep_stage2(data, model: MixtureModel, cache: EStepCache, moments, floor=VARIANCE_FLOOR):
    """Update row loadings and the row scale diagonal per component."""
    data = np.asarray(data, dtype=float)
    lams, sigmas = [], []
    for g, c in enumerate(model.components):
        _, col = assemble_scales(c)
        lam, sigma = _stage_updates(
            data - c.m, c.a, cache.z_hat[:, g], cache.a[:, g], cache.b[:, g],
            cache.n_g[g], moments[g], col.inv_star, floor,
        )
        lams.append(lam)
        sigmas.append(sigma)
    return lams, sigmas


def _transposed(data, c):
    resid = np.ascontiguousarray((np.asarray(data, dtype=float) - c.m).transpose(0, 2, 1))
    return resid, c.a.T


def estep_stage3(data, model: MixtureModel, cache: EStepCache):
    """Column-factor latent moments via the transposed stage-2 core."""
    out = []
    for g, c in enumerate(model.components):
        row, col = assemble_scales(c)
        resid_t, skew_t = _transposed(data, c)
        core = _stage_moments(
            resid_t, skew_t, cache.a[:, g], cache.b[:, g],
            col.proj.T, col.inner_inv, row.inv_star, c.n,
        )
        out.append(LatentMoments(
            e1=core.e1.transpose(0, 2, 1), e2=core.e2.transpose(0, 2, 1), e3=core.e3,
        ))
    return out


def mstep_stage3(data, model: MixtureModel, cache: EStepCache, moments, floor=VARIANCE_FLOOR):
    """Update column loadings and the column scale diagonal per component."""
    deltas, psis = [], []
    for g, c in enumerate(model.components):
        row, _ = assemble_scales(c)
        resid_t, skew_t = _transposed(data, c)
        core = LatentMoments(
            e1=moments[g].e1.transpose(0, 2, 1),
            e2=moments[g].e2.transpose(0, 2, 1),
            e3=moments[g].e3,
        )
        delta, psi = _stage_updates(
            resid_t, skew_t, cache.z_hat[:, g], cache.a[:, g], cache.b[:, g],
            cache.n_g[g], core, row.inv_star, floor,
        )
        deltas.append(delta)
        psis.append(psi)
    return deltas, psis


def fallback_infinite_likelihood(model: MixtureModel, data, cache: EStepCache, previous_m):
    """Recover from an infinite likelihood: revert the locations to the
    previous iterate and refit the skewness matrices around them."""
    data = np.asarray(data, dtype=float)
    comps = []
    for g, c in enumerate(model.components):
        m_star = np.asarray(previous_m[g], dtype=float)
        if c.family == "gauss":
            a_new = np.zeros_like(c.a)
        else:
            z = cache.z_hat[:, g]
            a_new = np.einsum("i,inp->np", z, data - m_star) / float(z @ cache.a[:, g])
        comps.append(dataclasses.replace(c, m=m_star, a=a_new))
    return MixtureModel(tuple(comps))


def check_convergence(loglik_trace, epsilon: float) -> bool:
    """Aitken-acceleration stop rule on the last three trace values."""
    if len(loglik_trace) < 3:
        return False
    l0, l1, l2 = loglik_trace[-3], loglik_trace[-2], loglik_trace[-1]
    d1 = l1 - l0
    d2 = l2 - l1
    if d1 == 0.0:
        return abs(d2) < epsilon
    accel = d2 / d1
    if accel >= 1.0:
        return False
    gap = d2 / (1.0 - accel)
    return 0.0 < gap < epsilon


def _init_model(data, family, g, q, r, labels, rng, floor):
    count, n, p = data.shape
    if labels is None:
        z = rng.dirichlet(np.ones(g), size=count)
    else:
        z = rng.dirichlet(np.ones(g), size=count)
        known = labels > 0
        z[known] = 0.0
        z[known, labels[known] - 1] = 1.0
    n_g = z.sum(axis=0)
    if n_g.min() < 1.0:
        raise StartFailure("initial soft memberships leave a component empty")
    means = []
    sigmas = []
    psis = []
    for j in range(g):
        w = z[:, j]
        m = np.einsum("i,inp->np", w, data) / n_g[j]
        resid = data - m
        means.append(m)
        sigmas.append(np.maximum(
            np.einsum("i,inp->n", w, resid * resid) / (p * n_g[j]), floor
        ))
        psis.append(np.maximum(
            np.einsum("i,inp->p", w, resid * resid) / (n * n_g[j]), floor
        ))
    # On heavy-tailed data the soft-weighted scatters are outlier dominated
    # and the per-component volumes can differ by large factors, which makes
    # the first E-step collapse onto the smallest component. Keep the shapes
    # but equalize the overall level across components.
    levels = np.array([s.mean() * v.mean() for s, v in zip(sigmas, psis)])
    target = np.exp(np.mean(np.log(levels)))
    comps = []
    for j in range(g):
        factor = np.sqrt(target / levels[j])
        a = np.zeros((n, p)) if family == "gauss" else np.full((n, p), 0.1)
        comps.append(ComponentParams(
            family=family, pi=n_g[j] / count, m=means[j], a=a,
            lam=rng.uniform(-1.0, 1.0, size=(n, q)),
            sigma_diag=np.maximum(sigmas[j] * factor, floor),
            delta=rng.uniform(-1.0, 1.0, size=(p, r)),
            psi_diag=np.maximum(psis[j] * factor, floor),
            theta=dict(THETA_START[family]),
        ))
    return MixtureModel(tuple(comps))


def _rebuild(model, pi=None, m=None, a=None, theta=None, lam=None, sigma=None,
             delta=None, psi=None):
    comps = []
    for g, c in enumerate(model.components):
        comps.append(ComponentParams(
            family=c.family,
            pi=float(pi[g]) if pi is not None else c.pi,
            m=m[g] if m is not None else c.m,
            a=a[g] if a is not None else c.a,
            lam=lam[g] if lam is not None else c.lam,
            sigma_diag=sigma[g] if sigma is not None else c.sigma_diag,
            delta=delta[g] if delta is not None else c.delta,
            psi_diag=psi[g] if psi is not None else c.psi_diag,
            theta=theta[g] if theta is not None else c.theta,
        ))
    return MixtureModel(tuple(comps))


def _estep_with_loglik(data, model, labels):
    """One stage-1 E-step plus the observed log-likelihood it implies."""
    cache = estep_stage1(data, model, labels)
    logf, _ = _log_density_matrix(data, model)
    weighted = logf + np.log([c.pi for c in model.components])
    if labels is None:
        ll = float(np.sum(logsumexp(weighted, axis=1)))
    else:
        known = labels > 0
        ll = float(np.sum(weighted[known, labels[known] - 1]))
        if (~known).any():
            ll += float(np.sum(logsumexp(weighted[~known], axis=1)))
    return cache, ll


def _require_occupancy(cache):
    if cache.n_g.min() < 1.0:
        raise StartFailure(
            f"component became empty (smallest weight {cache.n_g.min():.3g})"
        )


def _run_start(data, family, g, q, r, labels, options, init):
    model = init
    trace: list[float] = []
    notes: set[str] = set()
    eps = None
    converged = False
    cache = None
    prev_m = None
    last_cache = None

    def refresh(current, fallback_cache):
        # mid-cycle E-refresh; an infinite spike reverts the location
        # update once, per the singularity safeguard
        try:
            return current, estep_stage1(data, current, labels)
        except InfiniteLikelihoodSignal:
            if fallback_cache is None or prev_m is None:
                raise StartFailure("infinite likelihood at initialization") from None
            reverted = fallback_infinite_likelihood(current, data, fallback_cache, prev_m)
            notes.add("infinite likelihood fallback applied")
            try:
                return reverted, estep_stage1(data, reverted, labels)
            except InfiniteLikelihoodSignal as err:
                raise StartFailure("likelihood still infinite after fallback") from err

    for it in range(options.max_iter + 1):
        try:
            cache, ll = _estep_with_loglik(data, model, labels)
        except InfiniteLikelihoodSignal:
            if last_cache is None or prev_m is None:
                raise StartFailure("infinite likelihood at initialization") from None
            model = fallback_infinite_likelihood(model, data, last_cache, prev_m)
            notes.add("infinite likelihood fallback applied")
            try:
                cache, ll = _estep_with_loglik(data, model, labels)
            except InfiniteLikelihoodSignal as err:
                raise StartFailure("likelihood still infinite after fallback") from err
        if not math.isfinite(ll):
            raise StartFailure(f"log-likelihood is not finite ({ll})")
        trace.append(ll)
        if eps is None and len(trace) >= 6:
            eps = 1e-3 * abs(trace[5])
        if eps is not None and check_convergence(trace, eps):
            converged = True
            break
        if it == options.max_iter:
            break

        _require_occupancy(cache)
        prev_m = [c.m for c in model.components]

        try:
            pi, ms, a_s = mstep_stage1(data, cache, family)
        except DegenerateWeightsError:
            notes.add("degenerate weight moments: held locations, refit skewness")
            pi = cache.n_g / data.shape[0]
            ms = [c.m for c in model.components]
            a_s = []
            for j, c in enumerate(model.components):
                if family == "gauss":
                    a_s.append(np.zeros_like(c.a))
                else:
                    z = cache.z_hat[:, j]
                    a_s.append(np.einsum("i,inp->np", z, data - c.m)
                               / float(z @ cache.a[:, j]))
        thetas, theta_notes = mstep_theta(family, cache, [c.theta for c in model.components])
        notes.update(theta_notes)
        model = _rebuild(model, pi=pi, m=ms, a=a_s, theta=thetas)

        model, cache2 = refresh(model, cache)
        _require_occupancy(cache2)
        moments2 = estep_stage2(data, model, cache2)
        lams, sigmas = mstep_stage2(data, model, cache2, moments2, floor=options.floor)
        model = _rebuild(model, lam=lams, sigma=sigmas)

        model, cache3 = refresh(model, cache2)
        _require_occupancy(cache3)
        moments3 = estep_stage3(data, model, cache3)
        deltas, psis = mstep_stage3(data, model, cache3, moments3, floor=options.floor)
        model = _rebuild(model, delta=deltas, psi=psis)
        last_cache = cache3

    return FitResult(
        components=model.components,
        loglik_trace=tuple(trace),
        converged=converged,
        iterations=len(trace) - 1,
        final_loglik=trace[-1],
        z_hat=cache.z_hat,
        notes=tuple(sorted(notes)),
    )


def fit(data, family, g, q, r, labels=None, options: FitOptions | None = None) -> FitResult:
    """Fit one (family, G, q, r) mixture by multistart three-stage AECM."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 3 or data.shape[0] == 0:
        raise ValueError("data must be a nonempty stack of matrices (N, n, p)")
    if not np.all(np.isfinite(data)):
        raise ValueError("data must be finite")
    family = validate_family(family)
    if g < 1 or q < 0 or r < 0:
        raise ValueError("need g >= 1 and q, r >= 0")
    options = options or FitOptions()
    labels = _validate_labels(labels, data.shape[0], g)
    rng = np.random.default_rng(options.random_state)

    best: FitResult | None = None
    failures: list[str] = []
    n_starts = 1 if options.init_model is not None else options.starts
    for start in range(n_starts):
        try:
            if options.init_model is not None:
                init = options.init_model
                if (init.family, init.g, init.q, init.r) != (family, g, q, r):
                    raise ValueError("init_model does not match the requested configuration")
                if (init.n, init.p) != data.shape[1:]:
                    raise ValueError("init_model does not match the data dimensions")
            else:
                init = _init_model(data, family, g, q, r, labels, rng, options.floor)
            result = _run_start(data, family, g, q, r, labels, options, init)
        except StartFailure as err:
            failures.append(f"start {start + 1}: {err}")
            continue
        if best is None or result.final_loglik > best.final_loglik:
            best = result
    if best is None:
        raise FitError(
            "all starts failed: " + "; ".join(failures) if failures else "all starts failed"
        )
    return best
