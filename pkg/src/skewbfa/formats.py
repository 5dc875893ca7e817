"""Text formats: the MVSTACK data container and the JSON model file.

Both formats are plain text for diffability. Floats are written with 17
significant digits in MVSTACK and with shortest-round-trip decimals in the
model file, so numeric fields survive a save/load cycle bit-identically.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .aecm import MixtureModel
from .bfa import ComponentParams

MVSTACK_MAGIC = "MVSTACK"
MVSTACK_VERSION = 1
MODEL_FORMAT = "skewbfa-model"
MODEL_VERSION = 1


class FormatError(ValueError):
    """Malformed or inconsistent file content."""


def write_mvstack(path, data, labels=None):
    """Write a stack of matrices, with an optional block of integer labels.

    Layout: a header line ``MVSTACK 1 N n p L`` followed by N blocks of
    n rows by p columns, then (when L is 1) N labels with 0 marking an
    unlabelled observation.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 3:
        raise FormatError("data must be a stack of matrices (N, n, p)")
    count, n, p = data.shape
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (count,):
            raise FormatError(f"need one label per observation, got {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer) or np.any(labels < 0):
            raise FormatError("labels must be nonnegative integers")
    flag = 0 if labels is None else 1
    lines = [f"{MVSTACK_MAGIC} {MVSTACK_VERSION} {count} {n} {p} {flag}"]
    for block in data:
        lines.extend(" ".join("%.17g" % v for v in row) for row in block)
        lines.append("")
    if labels is not None:
        lines.extend(str(int(v)) for v in labels)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mvstack(path):
    """Read an MVSTACK file; returns (data, labels or None)."""
    tokens = Path(path).read_text().split()
    if len(tokens) < 6:
        raise FormatError("truncated header")
    if tokens[0] != MVSTACK_MAGIC:
        raise FormatError(f"not an MVSTACK file (magic {tokens[0]!r})")
    try:
        version, count, n, p, flag = (int(t) for t in tokens[1:6])
    except ValueError as err:
        raise FormatError(f"non-integer header field: {err}") from None
    if version != MVSTACK_VERSION:
        raise FormatError(f"unsupported MVSTACK version {version}")
    if count < 1 or n < 1 or p < 1 or flag not in (0, 1):
        raise FormatError(f"invalid header counts N={count} n={n} p={p} L={flag}")
    body = tokens[6:]
    expected = count * n * p + (count if flag else 0)
    if len(body) != expected:
        raise FormatError(
            f"expected {expected} values after the header, found {len(body)}"
        )
    try:
        data = np.array([float(t) for t in body[: count * n * p]])
    except ValueError as err:
        raise FormatError(f"non-numeric data value: {err}") from None
    data = data.reshape(count, n, p)
    labels = None
    if flag:
        try:
            labels = np.array([int(t) for t in body[count * n * p:]])
        except ValueError as err:
            raise FormatError(f"non-integer label: {err}") from None
        if np.any(labels < 0):
            raise FormatError("labels must be nonnegative")
    return data, labels


def read_labels(path):
    """Read labels from a plain integer file or an MVSTACK label block."""
    text = Path(path).read_text()
    first = text.split(None, 1)
    if first and first[0] == MVSTACK_MAGIC:
        _, labels = read_mvstack(path)
        if labels is None:
            raise FormatError(f"{path} carries no label block")
        return labels
    try:
        labels = np.array([int(t) for t in text.split()])
    except ValueError as err:
        raise FormatError(f"non-integer label: {err}") from None
    if labels.size == 0:
        raise FormatError(f"{path} contains no labels")
    if np.any(labels < 0):
        raise FormatError("labels must be nonnegative")
    return labels


def write_labels(path, labels):
    labels = np.asarray(labels)
    Path(path).write_text("\n".join(str(int(v)) for v in labels) + "\n")


def _matrix(values, shape, what):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(shape)
    if arr.shape != shape:
        raise FormatError(f"{what} has shape {arr.shape}, expected {shape}")
    return arr


def save_model(path, model, metadata):
    """Serialize a mixture model plus fit metadata as JSON."""
    components = []
    for c in model.components:
        components.append({
            "pi": float(c.pi),
            "m": c.m.tolist(),
            "a": c.a.tolist(),
            "lam": c.lam.tolist(),
            "sigma_diag": c.sigma_diag.tolist(),
            "delta": c.delta.tolist(),
            "psi_diag": c.psi_diag.tolist(),
            "theta": {k: float(v) for k, v in c.theta.items()},
        })
    document = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "family": model.family,
        "g": model.g,
        "q": model.q,
        "r": model.r,
        "n": model.n,
        "p": model.p,
        "components": components,
        "metadata": {
            "final_loglik": float(metadata["final_loglik"]),
            "bic": float(metadata["bic"]),
            "rho": int(metadata["rho"]),
            "iterations": int(metadata["iterations"]),
            "seed": metadata.get("seed"),
            "converged": bool(metadata.get("converged", False)),
            "n_obs": int(metadata["n_obs"]),
        },
    }
    Path(path).write_text(json.dumps(document, indent=1, allow_nan=False) + "\n")


def load_model(path):
    """Read a model file back; returns (MixtureModel, metadata dict)."""
    try:
        document = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"invalid model file: {err}") from None
    if not isinstance(document, dict) or document.get("format") != MODEL_FORMAT:
        raise FormatError("not a model file")
    if document.get("version") != MODEL_VERSION:
        raise FormatError(f"unsupported model version {document.get('version')}")
    try:
        family = document["family"]
        n, p = int(document["n"]), int(document["p"])
        q, r = int(document["q"]), int(document["r"])
        raw_components = document["components"]
        metadata = dict(document["metadata"])
    except KeyError as err:
        raise FormatError(f"model file is missing field {err}") from None
    if len(raw_components) != int(document["g"]):
        raise FormatError("component count does not match g")
    components = []
    for raw in raw_components:
        try:
            components.append(ComponentParams(
                family=family,
                pi=raw["pi"],
                m=_matrix(raw["m"], (n, p), "m"),
                a=_matrix(raw["a"], (n, p), "a"),
                lam=_matrix(raw["lam"], (n, q), "lam"),
                sigma_diag=_matrix(raw["sigma_diag"], (n,), "sigma_diag"),
                delta=_matrix(raw["delta"], (p, r), "delta"),
                psi_diag=_matrix(raw["psi_diag"], (p,), "psi_diag"),
                theta=raw["theta"],
            ))
        except (KeyError, ValueError) as err:
            raise FormatError(f"invalid component: {err}") from None
    try:
        model = MixtureModel(components=tuple(components))
    except ValueError as err:
        raise FormatError(f"inconsistent model: {err}") from None
    return model, metadata
