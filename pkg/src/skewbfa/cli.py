"""Command-line surface: fit, predict, simulate, evaluate, grid.

Exit codes: 0 success, 2 usage error, 3 unreadable or malformed files,
4 numerical failure during fitting. Errors print a single machine-readable
``error: <kind>: <detail>`` line on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .aecm import (
    FitError,
    FitOptions,
    MixtureModel,
    StartFailure,
    estep_stage1,
    fit,
)
from .datagen import SimConfig, generate
from .families import FAMILIES
from .formats import (
    FormatError,
    load_model,
    read_labels,
    read_mvstack,
    save_model,
    write_labels,
    write_mvstack,
)
from .metrics import ari, mcr
from .report import (
    class_sizes,
    fit_report_text,
    map_labels,
    read_score_table,
    render_grid_figure,
    render_loglik_figure,
    write_score_table,
)
from .selection import (
    ModelGridSpec,
    SelectionError,
    count_free_params,
    grid_search,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


def _range_list(text):
    """Parse grid ranges: '1:4' is inclusive, '1,3,5' explicit, mixable."""
    values = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi = part.split(":", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    if not values:
        raise ValueError(f"empty range {text!r}")
    return tuple(values)


def _family_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _sidecar(out, suffix):
    return Path(out).with_suffix("").parent / (Path(out).with_suffix("").name + suffix)


def _cmd_fit(args):
    data, _ = read_mvstack(args.data)
    labels = read_labels(args.labels) if args.labels else None
    options = FitOptions(starts=args.starts, max_iter=args.max_iter,
                         random_state=args.seed)
    result = fit(data, args.family, args.g, args.q, args.r,
                 labels=labels, options=options)
    count, n, p = data.shape
    rho = count_free_params(args.family, args.g, n, p, args.q, args.r)
    bic = 2.0 * result.final_loglik - rho * math.log(count)
    save_model(args.out, MixtureModel(result.components), {
        "final_loglik": result.final_loglik,
        "bic": bic,
        "rho": rho,
        "iterations": result.iterations,
        "seed": args.seed,
        "converged": result.converged,
        "n_obs": count,
    })
    figure = _sidecar(args.out, ".loglik.png")
    render_loglik_figure(figure, result.loglik_trace)
    labelled = int(np.sum(labels > 0)) if labels is not None else 0
    report = fit_report_text(args.family, args.g, args.q, args.r, result,
                             rho, bic, count, labelled=labelled,
                             figure_name=figure.name)
    report_path = _sidecar(args.out, ".report.txt")
    report_path.write_text(report)
    print(f"fit {args.family} G={args.g} q={args.q} r={args.r} "
          f"loglik={result.final_loglik!r} bic={bic!r} -> {args.out}")
    return EXIT_OK


def _cmd_simulate(args):
    config = SimConfig(family=args.family, d=args.d, n_obs=args.n_obs,
                       c=args.c, seed=args.seed)
    data, labels, _ = generate(config)
    write_mvstack(args.out, data, labels)
    print(f"simulate {args.family} d={args.d} N={args.n_obs} c={args.c} "
          f"-> {args.out}")
    return EXIT_OK


def _cmd_predict(args):
    model, _ = load_model(args.model)
    data, _ = read_mvstack(args.data)
    if data.shape[1:] != (model.n, model.p):
        raise ValueError(
            f"data is {data.shape[1]} x {data.shape[2]} but the model expects "
            f"{model.n} x {model.p}"
        )
    if not np.all(np.isfinite(data)):
        raise ValueError("data must be finite")
    cache = estep_stage1(data, model)
    assigned = map_labels(cache.z_hat)
    write_labels(args.out, assigned)
    zhat_path = _sidecar(args.out, ".zhat.txt")
    zhat_path.write_text("\n".join(
        " ".join("%.17g" % v for v in row) for row in cache.z_hat
    ) + "\n")
    sizes = class_sizes(cache.z_hat)
    print("predict class sizes " + "  ".join(f"{k}:{v}" for k, v in sizes.items())
          + f" -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args):
    pred = read_labels(args.pred)
    truth = read_labels(args.truth)
    if pred.shape != truth.shape:
        raise ValueError(
            f"label counts differ: {pred.shape[0]} predicted vs "
            f"{truth.shape[0]} true"
        )
    known = (pred > 0) & (truth > 0)
    if not known.any():
        raise ValueError("no observation is labelled in both files")
    print(f"ari {ari(truth[known], pred[known])!r}")
    print(f"mcr {mcr(truth[known], pred[known])!r}")
    return EXIT_OK


def _cmd_grid(args):
    data, _ = read_mvstack(args.data)
    spec = ModelGridSpec(families=args.families, g_range=args.g,
                         q_range=args.q, r_range=args.r, starts=args.starts)
    out = Path(args.out)
    known = read_score_table(out) if out.exists() else None
    result = grid_search(data, spec, seed=args.seed, max_iter=args.max_iter,
                         known=known)
    write_score_table(out, result.table, result.best)
    figure = _sidecar(args.out, ".bic.png")
    render_grid_figure(figure, result.table, result.best)
    best = result.best
    print(f"winner {best.family} G={best.g} q={best.q} r={best.r} "
          f"bic={best.bic!r} -> {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="skewbfa",
        description="Mixtures of skewed matrix-variate bilinear factor analyzers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit_p = sub.add_parser("fit", help="fit one model configuration")
    fit_p.add_argument("data", help="MVSTACK data file")
    fit_p.add_argument("family", choices=FAMILIES)
    fit_p.add_argument("g", type=int, help="number of components")
    fit_p.add_argument("q", type=int, help="row factors")
    fit_p.add_argument("r", type=int, help="column factors")
    fit_p.add_argument("--labels", help="semi-supervision labels (0 = unlabelled)")
    fit_p.add_argument("--starts", type=int, default=5)
    fit_p.add_argument("--seed", type=int, default=None)
    fit_p.add_argument("--max-iter", type=int, default=1000)
    fit_p.add_argument("--out", required=True, help="model file to write")
    fit_p.set_defaults(handler=_cmd_fit)

    sim_p = sub.add_parser("simulate", help="draw a two-component dataset")
    sim_p.add_argument("family", choices=FAMILIES)
    sim_p.add_argument("d", type=int, help="matrix dimension (d x d)")
    sim_p.add_argument("n_obs", type=int, help="number of observations")
    sim_p.add_argument("c", type=float, help="separation of the second component")
    sim_p.add_argument("--seed", type=int, default=None)
    sim_p.add_argument("--out", required=True, help="MVSTACK file to write")
    sim_p.set_defaults(handler=_cmd_simulate)

    pred_p = sub.add_parser("predict", help="classify observations with a model")
    pred_p.add_argument("model", help="model file from fit")
    pred_p.add_argument("data", help="MVSTACK data file")
    pred_p.add_argument("--out", required=True, help="label file to write")
    pred_p.set_defaults(handler=_cmd_predict)

    eval_p = sub.add_parser("evaluate", help="score predicted against true labels")
    eval_p.add_argument("pred", help="predicted labels (plain or MVSTACK)")
    eval_p.add_argument("truth", help="true labels (plain or MVSTACK)")
    eval_p.set_defaults(handler=_cmd_evaluate)

    grid_p = sub.add_parser("grid", help="BIC search over model configurations")
    grid_p.add_argument("data", help="MVSTACK data file")
    grid_p.add_argument("--families", type=_family_list, required=True,
                        help="comma-separated families")
    grid_p.add_argument("--g", type=_range_list, required=True,
                        help="component range, e.g. 1:4")
    grid_p.add_argument("--q", type=_range_list, required=True)
    grid_p.add_argument("--r", type=_range_list, required=True)
    grid_p.add_argument("--starts", type=int, default=5)
    grid_p.add_argument("--seed", type=int, default=None)
    grid_p.add_argument("--max-iter", type=int, default=1000)
    grid_p.add_argument("--out", required=True, help="score table to write")
    grid_p.set_defaults(handler=_cmd_grid)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.handler(args)
    except FormatError as err:
        print(f"error: io: {err}", file=sys.stderr)
        return EXIT_IO
    except OSError as err:
        print(f"error: io: {err}", file=sys.stderr)
        return EXIT_IO
    except (FitError, StartFailure, SelectionError, ArithmeticError) as err:
        print(f"error: numerical: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as err:
        print(f"error: usage: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
