"""Structured nonlinear terms ``G(x, u)``.

Any callable ``G(x, u) -> ndarray`` is accepted by :func:`netmor.dae.make_dae`.
The classes here additionally expose their structure as flat arrays so the
time-stepping kernels in :mod:`netmor._kernels` can evaluate them without
calling back into Python.
"""

import numpy as np

from .errors import DimensionError, NonphysicalPressureError

#: pressure-source kinds for :class:`QuadraticTerm`
P_NONE, P_STATE, P_INPUT = 0, 1, 2


class QuadraticTerm:
    r"""Sum of entries ``coef * x[q] |x[q]| / P`` plus a constant vector.

    Entry ``k`` adds to row ``rows[k]``; the divisor ``P`` is ``1`` for
    ``p_kind == P_NONE``, ``p_scale * x[p_idx]`` for ``P_STATE`` and
    ``p_scale * u[p_idx]`` for ``P_INPUT``.  Gas friction uses the state and
    input kinds, water friction uses ``P_NONE``.
    """

    def __init__(self, n, m, rows=(), q_idx=(), p_kind=(), p_idx=(), p_scale=(),
                 coef=(), const=None):
        self.n = int(n)
        self.m = int(m)
        self.rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        self.q_idx = np.asarray(q_idx, dtype=np.int64).reshape(-1)
        self.p_kind = np.asarray(p_kind, dtype=np.int64).reshape(-1)
        self.p_idx = np.asarray(p_idx, dtype=np.int64).reshape(-1)
        self.p_scale = np.asarray(p_scale, dtype=float).reshape(-1)
        self.coef = np.asarray(coef, dtype=float).reshape(-1)
        k = self.rows.size
        for name in ("q_idx", "p_kind", "p_idx", "p_scale", "coef"):
            if getattr(self, name).size != k:
                raise DimensionError(f"{name} has {getattr(self, name).size} entries, expected {k}")
        self.const = np.zeros(self.n) if const is None else np.asarray(const, dtype=float).copy()
        if self.const.shape != (self.n,):
            raise DimensionError(f"const must have length {self.n}")
        if k and (self.rows.max() >= n or self.q_idx.max() >= n or self.rows.min() < 0):
            raise DimensionError("term index out of range")
        for arr in (self.rows, self.q_idx, self.p_kind, self.p_idx, self.p_scale,
                    self.coef, self.const):
            arr.flags.writeable = False

    @classmethod
    def zero(cls, n, m):
        return cls(n, m)

    @property
    def size(self):
        return self.rows.size

    def pressures(self, x, u):
        P = np.ones(self.size)
        st = self.p_kind == P_STATE
        inp = self.p_kind == P_INPUT
        P[st] = self.p_scale[st] * x[self.p_idx[st]]
        if inp.any():
            P[inp] = self.p_scale[inp] * np.asarray(u, dtype=float)[self.p_idx[inp]]
        bad = np.flatnonzero((self.p_kind != P_NONE) & ~(P > 0))
        if bad.size:
            k = int(bad[0])
            raise NonphysicalPressureError(
                f"nonphysical pressure {P[k]!r} at term entry {k} (row {self.rows[k]})", index=k)
        return P

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        out = self.const.copy()
        if self.size:
            q = x[self.q_idx]
            np.add.at(out, self.rows, self.coef * q * np.abs(q) / self.pressures(x, u))
        return out

    def jacobian(self, x, u):
        """Return ``(dG/dx, dG/du)`` at ``(x, u)``."""
        x = np.asarray(x, dtype=float)
        Jx = np.zeros((self.n, self.n))
        Ju = np.zeros((self.n, self.m))
        if not self.size:
            return Jx, Ju
        q = x[self.q_idx]
        P = self.pressures(x, u)
        np.add.at(Jx, (self.rows, self.q_idx), 2.0 * self.coef * np.abs(q) / P)
        dP = -self.coef * q * np.abs(q) / P**2 * self.p_scale
        st = self.p_kind == P_STATE
        inp = self.p_kind == P_INPUT
        np.add.at(Jx, (self.rows[st], self.p_idx[st]), dP[st])
        np.add.at(Ju, (self.rows[inp], self.p_idx[inp]), dP[inp])
        return Jx, Ju


class ProjectedTerm:
    r"""Petrov-Galerkin projection of a full-order term about a reference state.

    Evaluates::

        G_r(z, u) = W^T G(x_ref + V z, u) + offset - lin_x z - lin_u u

    where ``offset`` collects the constant contributions of the reference
    state and ``lin_x``/``lin_u`` remove the linearization that was moved into
    the reduced state and input matrices.
    """

    def __init__(self, base, V, W, x_ref=None, offset=None, lin_x=None, lin_u=None, m=None):
        self.base = base
        self.V = np.asarray(V, dtype=float)
        self.W = np.asarray(W, dtype=float)
        n, r = self.V.shape
        self.n, self.r = n, r
        self.m = int(m if m is not None else getattr(base, "m", 0))
        self.x_ref = np.zeros(n) if x_ref is None else np.asarray(x_ref, dtype=float)
        self.offset = np.zeros(r) if offset is None else np.asarray(offset, dtype=float)
        self.lin_x = np.zeros((r, r)) if lin_x is None else np.asarray(lin_x, dtype=float)
        self.lin_u = np.zeros((r, self.m)) if lin_u is None else np.asarray(lin_u, dtype=float)
        self._packed = None

    def lift(self, z):
        return self.x_ref + self.V @ z

    def __call__(self, z, u):
        u = np.asarray(u, dtype=float)
        g = self.base(self.lift(np.asarray(z, dtype=float)), u) if self.base is not None else 0.0
        out = self.offset - self.lin_x @ z - self.lin_u @ u
        if self.base is not None:
            out = out + self.W.T @ g
        return out

    def jacobian(self, z, u):
        if self.base is None:
            return -self.lin_x, -self.lin_u
        Jx, Ju = full_jacobian(self.base, self.lift(z), u, self.m)
        return self.W.T @ Jx @ self.V - self.lin_x, self.W.T @ Ju - self.lin_u

    def packed(self):
        """Arrays for the projected kernel; only valid for a :class:`QuadraticTerm` base."""
        if self._packed is None:
            b = self.base
            used = np.union1d(b.q_idx, b.p_idx[b.p_kind == P_STATE]).astype(np.int64)
            loc = {int(i): k for k, i in enumerate(used)}
            q_loc = np.array([loc[int(i)] for i in b.q_idx], dtype=np.int64)
            p_loc = np.array([loc[int(i)] if kd == P_STATE else i
                              for i, kd in zip(b.p_idx, b.p_kind)], dtype=np.int64)
            self._packed = dict(
                V_sub=np.ascontiguousarray(self.V[used]),
                xref_sub=np.ascontiguousarray(self.x_ref[used]),
                W_rows=np.ascontiguousarray(self.W[b.rows]),
                q_loc=q_loc,
                p_loc=p_loc,
                # base constant vector folded into the affine part
                const_r=self.W.T @ b.const,
            )
        return self._packed


def full_jacobian(G, x, u, m, eps=1e-6):
    """Jacobian of ``G`` at ``(x, u)``; analytic when ``G`` provides one."""
    if hasattr(G, "jacobian"):
        return G.jacobian(x, u)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    n = x.size
    Jx = np.zeros((n, n))
    Ju = np.zeros((n, m))
    for i in range(n):
        h = eps * max(1.0, abs(x[i]))
        d = np.zeros(n)
        d[i] = h
        Jx[:, i] = (G(x + d, u) - G(x - d, u)) / (2 * h)
    for j in range(m):
        h = eps * max(1.0, abs(u[j]))
        d = np.zeros(m)
        d[j] = h
        Ju[:, j] = (G(x, u + d) - G(x, u - d)) / (2 * h)
    return Jx, Ju
