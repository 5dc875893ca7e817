"""Component family tags and latent-weight parameter schemas.

Five families are supported: ``"st"`` (skew-t), ``"gh"`` (generalized
hyperbolic), ``"vg"`` (variance-gamma), ``"nig"`` (normal inverse
Gaussian), and the symmetric baseline ``"gauss"``.  Each family carries a
small dict of latent-weight parameters:

====== ==========================  ==========================
family theta keys                  latent W law
====== ==========================  ==========================
st     df                          inverse gamma (df/2, df/2)
gh     concentration, index        GIG(concentration, 1, index)
vg     shape                       gamma(shape, shape)
nig    rate                        inverse Gaussian IG(1, rate)
gauss  (none)                      constant 1
====== ==========================  ==========================
"""

FAMILIES = ("st", "gh", "vg", "nig", "gauss")
SKEW_FAMILIES = ("st", "gh", "vg", "nig")

THETA_KEYS = {
    "st": ("df",),
    "gh": ("concentration", "index"),
    "vg": ("shape",),
    "nig": ("rate",),
    "gauss": (),
}

# every theta entry except the GIG index must be strictly positive
_FREE_SIGN_KEYS = frozenset({"index"})

THETA_DIM = {"st": 1, "gh": 2, "vg": 1, "nig": 1, "gauss": 0}

# moderate-tail starting values for estimation
THETA_START = {
    "st": {"df": 20.0},
    "gh": {"concentration": 1.0, "index": 0.0},
    "vg": {"shape": 5.0},
    "nig": {"rate": 1.0},
    "gauss": {},
}


def validate_family(family):
    """Return the canonical family tag or raise ValueError."""
    tag = str(family).lower()
    if tag not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return tag


def validate_theta(family, theta):
    """Check theta against the family schema; return a normalized dict."""
    tag = validate_family(family)
    theta = dict(theta or {})
    keys = THETA_KEYS[tag]
    missing = [k for k in keys if k not in theta]
    extra = [k for k in theta if k not in keys]
    if missing or extra:
        raise ValueError(
            f"family {tag!r} needs theta keys {keys}; missing {missing}, unexpected {extra}"
        )
    out = {}
    for k in keys:
        v = float(theta[k])
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError(f"theta[{k!r}] must be finite")
        if k not in _FREE_SIGN_KEYS and v <= 0.0:
            raise ValueError(f"theta[{k!r}] must be > 0, got {v}")
        out[k] = v
    return out


def theta_dim(family):
    """Number of free latent-weight parameters for the family."""
    return THETA_DIM[validate_family(family)]
