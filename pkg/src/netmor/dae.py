"""Unified descriptor representation ``E x' = A x + B u + G(x, u)``, ``y = C x + D u``.

Every network builder returns a :class:`UnifiedDae`; the integrator and the
reduction code consume it.  Records are immutable: arrays are copied on
construction and flagged read-only.
"""

from dataclasses import dataclass, field

import warnings

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import DimensionError, SingularPencilError, SingularShiftError
from .terms import QuadraticTerm, full_jacobian

EPS = np.finfo(float).eps
#: reciprocal-condition threshold below which a shifted matrix counts as singular
RCOND_MIN = EPS * 1e3
#: regularity probes tried in order
PENCIL_PROBES = (1.0, 2.7183)


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class LinearPart:
    """Linear part ``(E, A, B, C, D)`` of a descriptor system."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = None

    def __post_init__(self):
        E, A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.E, self.A, self.B, self.C))
        _check_dims(E, A, B, C)
        D = np.zeros((C.shape[0], B.shape[1])) if self.D is None else np.atleast_2d(np.asarray(self.D, dtype=float))
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        for name, M in zip("EABCD", (E, A, B, C, D)):
            object.__setattr__(self, name, _frozen(M))

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]


@dataclass(frozen=True)
class TransferSample:
    s: complex
    H: np.ndarray


@dataclass(frozen=True, eq=False)
class UnifiedDae:
    """Validated descriptor system; build it with :func:`make_dae`.

    Besides the matrices the record carries an output offset ``y0``, a
    feed-through ``D`` (both zero for full-order network models), and the
    default operating point ``(x0, u0)`` used as initial state and as the
    linearization point for reduction.
    """

    n: int
    m: int
    p: int
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    G: object
    diff_mask: np.ndarray
    D: np.ndarray
    y0: np.ndarray
    x0: np.ndarray
    u0: np.ndarray
    input_names: tuple = ()
    output_names: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def linear(self):
        return LinearPart(self.E, self.A, self.B, self.C, self.D)

    def output(self, x, u):
        return self.C @ x + self.D @ np.asarray(u, dtype=float) + self.y0

    def residual(self, x, u):
        """Right-hand side ``A x + B u + G(x, u)``."""
        u = np.asarray(u, dtype=float)
        return self.A @ x + self.B @ u + self.G(x, u)


def _check_dims(E, A, B, C):
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise DimensionError(f"E must be square, got shape {E.shape}")
    n = E.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"A has shape {A.shape}, expected {(n, n)}")
    if B.ndim != 2 or B.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
    if C.ndim != 2 or C.shape[1] != n:
        raise DimensionError(f"C must have {n} columns, got shape {C.shape}")


def _factor(M):
    """Row-equilibrated LU of ``M`` with a reciprocal condition estimate.

    Returns ``(lu, piv, scale, rcond)``; solve ``M x = b`` as
    ``lu_solve((lu, piv), scale * b)``.
    """
    scale = np.abs(M).max(axis=1)
    scale[scale == 0] = 1.0
    scale = 1.0 / scale
    Ms = M * scale[:, None]
    with warnings.catch_warnings():
        # exact singularity is reported through rcond instead
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(Ms, check_finite=False)
    if not np.all(np.isfinite(lu)):
        return lu, piv, scale, 0.0
    anorm = np.abs(Ms).sum(axis=0).max()
    gecon = lapack.get_lapack_funcs("gecon", (lu,))
    if np.any(np.diag(lu) == 0):
        rcond = 0.0
    else:
        rcond, _ = gecon(lu, anorm, norm="1")
    return lu, piv, scale, float(rcond)


def make_dae(E, A, B, C, G=None, *, D=None, y0=None, x0=None, u0=None,
             input_names=(), output_names=(), meta=None):
    """Validate and freeze a descriptor system.

    Parameters
    ----------
    E, A : (n, n) array_like
    B : (n, m) array_like
    C : (p, n) array_like
    G : callable or None
        Additive term ``G(x, u) -> (n,)``.  ``None`` means ``G == 0``.

    Raises
    ------
    DimensionError
        Incompatible shapes.
    SingularPencilError
        ``sE - A`` singular at both regularity probes.
    """
    E, A, B, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (E, A, B, C))
    _check_dims(E, A, B, C)
    n, m, p = E.shape[0], B.shape[1], C.shape[0]
    D = np.zeros((p, m)) if D is None else np.atleast_2d(np.asarray(D, dtype=float))
    if D.shape != (p, m):
        raise DimensionError(f"D has shape {D.shape}, expected {(p, m)}")
    y0 = np.zeros(p) if y0 is None else np.asarray(y0, dtype=float).reshape(p)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    u0 = np.zeros(m) if u0 is None else np.asarray(u0, dtype=float).reshape(m)
    if G is None:
        G = QuadraticTerm.zero(n, m)
    elif not callable(G):
        raise TypeError("G must be callable")
    diff_mask = np.any(E != 0, axis=1)

    for sigma in PENCIL_PROBES:
        *_, rcond = _factor(sigma * E - A)
        if rcond >= EPS * n:
            break
    else:
        M = PENCIL_PROBES[-1] * E - A
        zero_rows = np.flatnonzero(~np.any(M != 0, axis=1))
        where = f"row {zero_rows[0]} of sE - A is zero" if zero_rows.size else f"rcond {rcond:.3g}"
        raise SingularPencilError(
            f"singular pencil: sE - A singular at probes s={PENCIL_PROBES} ({where})")

    return UnifiedDae(
        n=n, m=m, p=p, E=_frozen(E), A=_frozen(A), B=_frozen(B), C=_frozen(C), G=G,
        diff_mask=_frozen(diff_mask, bool), D=_frozen(D), y0=_frozen(y0), x0=_frozen(x0),
        u0=_frozen(u0), input_names=tuple(input_names), output_names=tuple(output_names),
        meta=dict(meta or {}),
    )


def _as_linear(lin):
    return lin.linear if isinstance(lin, UnifiedDae) else lin


def eval_transfer(lin, s):
    """Evaluate ``H(s) = C (sE - A)^{-1} B + D``.

    One LU factorization of ``sE - A`` serves all ``m`` right-hand sides.

    Raises
    ------
    SingularShiftError
        Reciprocal condition estimate of ``sE - A`` below ``1e3 * eps``.
    """
    lin = _as_linear(lin)
    s = complex(s)
    M = s * lin.E - lin.A if s.imag else (s.real * lin.E - lin.A)
    lu, piv, scale, rcond = _factor(M)
    if rcond < RCOND_MIN:
        raise SingularShiftError(f"sE - A numerically singular at s={s} (rcond {rcond:.3g})", s=s)
    X = sla.lu_solve((lu, piv), scale[:, None] * lin.B, check_finite=False)
    return lin.C @ X + lin.D


def transfer_sample(lin, s):
    return TransferSample(complex(s), eval_transfer(lin, s))


def sigma_max_sweep(lin, freqs):
    """Largest singular value of ``H(i w)`` for each ``w`` in ``freqs``.

    Returns a list of ``(w, sigma_max)`` pairs in input order.
    """
    freqs = np.asarray(freqs, dtype=float).reshape(-1)
    if freqs.size == 0:
        raise ValueError("empty frequency grid")
    if np.any(freqs <= 0) or np.any(np.diff(freqs) <= 0):
        raise ValueError("frequencies must be positive and strictly increasing")
    lin = _as_linear(lin)
    out = []
    for w in freqs:
        try:
            H = eval_transfer(lin, 1j * w)
        except SingularShiftError as exc:
            raise SingularShiftError(f"at omega={w!r}: {exc}", s=exc.s) from exc
        out.append((float(w), float(np.linalg.norm(H, 2))))
    return out


def linearize(dae, x_ref=None, u_ref=None):
    """Linear part of ``dae`` with ``G`` replaced by its Jacobian at ``(x_ref, u_ref)``."""
    x_ref = dae.x0 if x_ref is None else np.asarray(x_ref, dtype=float)
    u_ref = dae.u0 if u_ref is None else np.asarray(u_ref, dtype=float)
    Jx, Ju = full_jacobian(dae.G, x_ref, u_ref, dae.m)
    return LinearPart(dae.E, dae.A + Jx, dae.B + Ju, dae.C, dae.D)


def finite_eigenvalues(lin, cutoff=1e12):
    """Finite generalized eigenvalues of ``(A, E)``."""
    lin = _as_linear(lin)
    lam = sla.eigvals(lin.A, lin.E)
    return lam[np.isfinite(lam) & (np.abs(lam) < cutoff)]
