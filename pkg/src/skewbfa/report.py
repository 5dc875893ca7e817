"""Human-readable fit reports, score tables, and diagnostic figures."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .formats import FormatError

TABLE_COLUMNS = ("family", "g", "q", "r", "loglik", "rho", "bic")


def map_labels(z_hat):
    """MAP class assignment (1-based) from a responsibility matrix."""
    return np.argmax(z_hat, axis=1) + 1


def class_sizes(z_hat):
    assigned = map_labels(z_hat)
    return {g: int(np.sum(assigned == g)) for g in range(1, z_hat.shape[1] + 1)}


def fit_report_text(family, g, q, r, result, rho, bic, n_obs, labelled=0,
                    figure_name=None):
    trace = result.loglik_trace
    sizes = class_sizes(result.z_hat)
    lines = [
        "model fit report",
        f"family {family}  components {g}  row factors {q}  column factors {r}",
        f"observations {n_obs}  labelled {labelled}",
        f"iterations {result.iterations}  converged {'yes' if result.converged else 'no'}",
        f"loglik start {trace[0]!r}",
        f"loglik final {result.final_loglik!r}",
        f"free parameters {rho}",
        f"bic {bic!r}",
        "class sizes " + "  ".join(f"{k}:{v}" for k, v in sizes.items()),
    ]
    if result.notes:
        lines.append("notes " + "; ".join(result.notes))
    if figure_name:
        lines.append(f"figure {figure_name}")
    return "\n".join(lines) + "\n"


def render_loglik_figure(path, trace):
    """Log-likelihood trace by AECM cycle."""
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(range(len(trace)), trace, marker=".", lw=1.2)
    ax.set_xlabel("cycle")
    ax.set_ylabel("observed log-likelihood")
    ax.set_title("fit progress")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_grid_figure(path, table, best):
    """BIC of every scored grid cell, winner highlighted."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    families = sorted({row.family for row in table})
    for family in families:
        xs = [i for i, row in enumerate(table)
              if row.family == family and math.isfinite(row.bic)]
        ys = [table[i].bic for i in xs]
        ax.plot(xs, ys, marker="o", ls="-", lw=0.8, label=family)
    win = next(i for i, row in enumerate(table)
               if (row.family, row.g, row.q, row.r)
               == (best.family, best.g, best.q, best.r))
    ax.plot([win], [best.bic], marker="*", ms=16, color="tab:red", ls="none",
            label=f"winner {best.family} G={best.g} q={best.q} r={best.r}")
    ax.set_xlabel("grid cell")
    ax.set_ylabel("BIC")
    ax.set_title("model selection scores")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def write_score_table(path, table, best=None):
    """Delimited score table, one row per grid cell, winner as a comment."""
    lines = ["\t".join(TABLE_COLUMNS)]
    for row in table:
        lines.append("\t".join((
            row.family, str(row.g), str(row.q), str(row.r),
            repr(row.loglik), str(row.rho), repr(row.bic),
        )))
    if best is not None:
        lines.append(f"# winner\t{best.family}\t{best.g}\t{best.q}\t{best.r}"
                     f"\t{best.bic!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_score_table(path):
    """Parse completed cells from a score table: {(family,g,q,r): (ll, rho, bic)}.

    Rows whose BIC is not finite are dropped so failed cells are retried.
    """
    known = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#") or line.startswith(TABLE_COLUMNS[0] + "\t"):
            continue
        parts = line.split("\t")
        if len(parts) != len(TABLE_COLUMNS):
            raise FormatError(f"malformed score row: {line!r}")
        try:
            family = parts[0]
            g, q, r = int(parts[1]), int(parts[2]), int(parts[3])
            loglik, rho, bic = float(parts[4]), int(parts[5]), float(parts[6])
        except ValueError as err:
            raise FormatError(f"malformed score row: {err}") from None
        if math.isfinite(bic):
            known[(family, g, q, r)] = (loglik, rho, bic)
    return known
