"""CSV artifacts and the reduced-model bundle.

Numbers are written in the shortest decimal form that round-trips to the
same double, so a bundle read back reproduces the in-memory model bit for
bit.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .mor import ReducedModel
from .terms import ProjectedTerm

BUNDLE_HEADER = ("name", "row", "col", "value")
_MATRICES = ("E_r", "A_hat", "B_hat", "C_hat", "D_r", "A_r", "B_r", "C_r", "V", "W")
_VECTORS = ("x_ref", "u_ref", "y0")


def fmt(v):
    """Shortest round-trip text for a number; ints and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    """Write ``rows`` under ``header``; every row must match the header width."""
    path = Path(path)
    width = len(header)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != width:
                raise ValueError(f"{path.name}: row has {len(row)} fields, header has {width}")
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    """Return ``(header, rows)`` with every row as a list of strings."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


def _entries(name, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            yield (name, i, j, M[i, j])


def _shape_rows(name, M):
    # explicit shape so empty or all-zero blocks survive the round trip
    M = np.atleast_2d(np.asarray(M))
    return [(f"{name}.shape", M.shape[0], M.shape[1], 0.0)]


def save_reduced(path, red):
    """Write ``red`` as a long-format ``(name, row, col, value)`` bundle."""
    rows = []
    blocks = {k: getattr(red, k) for k in _MATRICES}
    blocks.update({k: np.reshape(getattr(red, k), (-1, 1)) for k in _VECTORS})
    shifts = np.asarray(red.shifts if red.shifts is not None else [], dtype=complex).reshape(-1, 1)
    blocks["shift_re"] = shifts.real
    blocks["shift_im"] = shifts.imag
    G = red.G_r
    if G is not None:
        blocks["offset"] = G.offset.reshape(-1, 1)
        blocks["lin_x"] = G.lin_x
        blocks["lin_u"] = G.lin_u
        blocks["has_base"] = np.array([[float(G.base is not None)]])
    blocks["converged"] = np.array([[float(red.converged)]])
    for name, M in blocks.items():
        M = np.asarray(M, dtype=float)
        if M.ndim == 1:
            M = M.reshape(-1, 1)
        rows += _shape_rows(name, M)
        rows += list(_entries(name, M))
    return write_csv(path, BUNDLE_HEADER, rows)


def load_reduced(path, base=None):
    """Read a bundle written by :func:`save_reduced`.

    ``base`` is the full-order nonlinear term the projection was built from
    (the bundle stores the projection, not the term itself).
    """
    header, rows = read_csv(path)
    if tuple(header) != BUNDLE_HEADER:
        raise ConfigError(f"{path}: not a reduced-model bundle (header {header})")
    shapes, values = {}, {}
    for name, i, j, v in rows:
        if name.endswith(".shape"):
            shapes[name[:-6]] = (int(i), int(j))
        else:
            values.setdefault(name, []).append((int(i), int(j), float(v)))
    blocks = {}
    for name, shape in shapes.items():
        M = np.zeros(shape)
        for i, j, v in values.get(name, []):
            M[i, j] = v
        blocks[name] = M
    missing = [k for k in _MATRICES + _VECTORS if k not in blocks]
    if missing:
        raise ConfigError(f"{path}: bundle lacks {missing}")
    V, W = blocks["V"], blocks["W"]
    m = blocks["B_hat"].shape[1]
    x_ref = blocks["x_ref"].ravel()
    G_r = None
    if "offset" in blocks:
        has_base = bool(blocks["has_base"][0, 0])
        if has_base and base is None:
            raise ConfigError(f"{path}: bundle needs the full-order nonlinear term")
        G_r = ProjectedTerm(base if has_base else None, V, W, x_ref=x_ref,
                            offset=blocks["offset"].ravel(), lin_x=blocks["lin_x"],
                            lin_u=blocks["lin_u"], m=m)
    shifts = blocks["shift_re"].ravel() + 1j * blocks["shift_im"].ravel()
    return ReducedModel(
        E_r=blocks["E_r"], A_hat=blocks["A_hat"], B_hat=blocks["B_hat"], C_hat=blocks["C_hat"],
        D_r=blocks["D_r"], V=V, W=W, A_r=blocks["A_r"], B_r=blocks["B_r"], C_r=blocks["C_r"],
        shifts=shifts, right_tangents=None, left_tangents=None, history=(),
        converged=bool(blocks["converged"][0, 0]), G_r=G_r, x_ref=x_ref,
        u_ref=blocks["u_ref"].ravel(), y0=blocks["y0"].ravel(),
    )
