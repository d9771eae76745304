"""Time-stepping kernels for structured models.

Two interchangeable backends run the semi-implicit step loop

    x_k = (E - tau A)^{-1} (E x_{k-1} + c + tau g(x_{k-1}))

with ``c`` the precomputed constant part of the right-hand side and ``g`` a
quadratic friction-type term.  The numba backend compiles the whole loop; the
numpy backend performs one vectorized step per Python iteration.  Set
``NETMOR_NUMBA=0`` to force numpy.

Each runner returns ``(n_recorded, last_step, settle_step, status, where)``
where ``status`` is one of ``OK``, ``BAD_PRESSURE`` (``where`` = term entry)
or ``DIVERGED`` (``where`` = step index).
"""

import os

import numpy as np
import scipy.linalg as sla

OK, BAD_PRESSURE, DIVERGED = 0, 1, 2

_flag = os.environ.get("NETMOR_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = _requested and numba is not None


def backend():
    """Name of the active backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def _jit(fn):
    return numba.njit(cache=True, fastmath=False)(fn) if numba is not None else fn


# ---------------------------------------------------------------- numba path

def _lu_solve_inplace(lu, piv, b):
    n = b.shape[0]
    for i in range(n):
        j = piv[i]
        if j != i:
            t = b[i]
            b[i] = b[j]
            b[j] = t
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= lu[i, k] * b[k]
        b[i] = s
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= lu[i, k] * b[k]
        b[i] = s / lu[i, i]


def _quad_accumulate(xs, u, rows, q_idx, p_kind, p_idx, p_scale, coef, W_rows, out):
    """Add ``coef q|q|/P`` into ``out``; rows are projected by ``W_rows`` if it has columns."""
    project = W_rows.shape[1] > 0
    for k in range(rows.shape[0]):
        q = xs[q_idx[k]]
        kind = p_kind[k]
        if kind == 0:
            P = 1.0
        elif kind == 1:
            P = p_scale[k] * xs[p_idx[k]]
        else:
            P = p_scale[k] * u[p_idx[k]]
        if kind != 0 and not (P > 0.0):
            return k
        val = coef[k] * q * abs(q) / P
        if project:
            for j in range(out.shape[0]):
                out[j] += W_rows[k, j] * val
        else:
            out[rows[k]] += val
    return -1


def _run_loop(lu, piv, E, c_rhs, x0, u, tau, nsteps, record_every, settle_tol, window,
              stop_on_settle, V_sub, xref_sub, lin_x,
              rows, q_idx, p_kind, p_idx, p_scale, coef, W_rows, states):
    n = x0.shape[0]
    x = x0.copy()
    g = np.empty(n)
    rhs = np.empty(n)
    reduced = V_sub.shape[1] > 0
    xs = np.empty(V_sub.shape[0]) if reduced else x
    nrec = 1
    states[0, :] = x
    quiet = 0
    settled = -1
    k = 0
    for k in range(1, nsteps + 1):
        for i in range(n):
            g[i] = 0.0
        if reduced:
            for i in range(xs.shape[0]):
                s = xref_sub[i]
                for j in range(n):
                    s += V_sub[i, j] * x[j]
                xs[i] = s
            for i in range(n):
                s = 0.0
                for j in range(n):
                    s -= lin_x[i, j] * x[j]
                g[i] = s
        else:
            xs = x
        bad = _quad_accumulate(xs, u, rows, q_idx, p_kind, p_idx, p_scale, coef, W_rows, g)
        if bad >= 0:
            return nrec, k, settled, 1, bad
        for i in range(n):
            s = c_rhs[i] + tau * g[i]
            for j in range(n):
                s += E[i, j] * x[j]
            rhs[i] = s
        _lu_solve_inplace(lu, piv, rhs)
        rel = 0.0
        for i in range(n):
            v = rhs[i]
            if not np.isfinite(v):
                return nrec, k, settled, 2, k
            d = abs(v - x[i]) / (abs(v) + 1.0)
            if d > rel:
                rel = d
        for i in range(n):
            x[i] = rhs[i]
        if k % record_every == 0:
            states[nrec, :] = x
            nrec += 1
        if rel < settle_tol:
            quiet += 1
            if quiet >= window and settled < 0:
                settled = k
                if stop_on_settle:
                    break
        else:
            quiet = 0
    states[states.shape[0] - 1, :] = x
    return nrec, k, settled, 0, -1


if numba is not None:
    _lu_solve_inplace = _jit(_lu_solve_inplace)
    _quad_accumulate = _jit(_quad_accumulate)
    _run_loop_numba = _jit(_run_loop)
else:  # pragma: no cover
    _run_loop_numba = None


# ---------------------------------------------------------------- numpy path

def _run_loop_numpy(lu, piv, E, c_rhs, x0, u, tau, nsteps, record_every, settle_tol, window,
                    stop_on_settle, V_sub, xref_sub, lin_x,
                    rows, q_idx, p_kind, p_idx, p_scale, coef, W_rows, states):
    n = x0.shape[0]
    x = x0.copy()
    reduced = V_sub.shape[1] > 0
    project = W_rows.shape[1] > 0
    st = p_kind == 1
    inp = p_kind == 2
    lu_piv = (lu, piv)
    nrec = 1
    states[0] = x
    quiet = 0
    settled = -1
    k = 0
    P = np.ones(rows.size)
    P_inp = p_scale[inp] * u[p_idx[inp]] if inp.any() else None
    for k in range(1, nsteps + 1):
        xs = xref_sub + V_sub @ x if reduced else x
        q = xs[q_idx]
        P[st] = p_scale[st] * xs[p_idx[st]]
        if P_inp is not None:
            P[inp] = P_inp
        bad = np.flatnonzero((p_kind != 0) & ~(P > 0))
        if bad.size:
            return nrec, k, settled, 1, int(bad[0])
        val = coef * q * np.abs(q) / P
        if project:
            g = W_rows.T @ val
        else:
            g = np.zeros(n)
            np.add.at(g, rows, val)
        if reduced:
            g -= lin_x @ x
        xn = sla.lu_solve(lu_piv, E @ x + c_rhs + tau * g, check_finite=False)
        if not np.all(np.isfinite(xn)):
            return nrec, k, settled, 2, k
        rel = np.max(np.abs(xn - x) / (np.abs(xn) + 1.0)) if n else 0.0
        x = xn
        if k % record_every == 0:
            states[nrec] = x
            nrec += 1
        if rel < settle_tol:
            quiet += 1
            if quiet >= window and settled < 0:
                settled = k
                if stop_on_settle:
                    break
        else:
            quiet = 0
    states[-1] = x
    return nrec, k, settled, 0, -1


def run_loop(*args, use_numba=None):
    """Dispatch to the selected backend (see module docstring)."""
    use = USE_NUMBA if use_numba is None else (use_numba and numba is not None)
    fn = _run_loop_numba if use else _run_loop_numpy
    return fn(*args)
