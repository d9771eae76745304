"""Tangential IRKA with a retained feed-through term.

The reduction works on the linear part of a model (optionally linearized
about an operating point).  Interpolation shifts and tangent directions are
iterated to a fixed point; afterwards the polynomial part ``D_r`` of the
full transfer function is folded back into the reduced matrices so that the
reduced model keeps the correct high-frequency limit while still
interpolating the full model at the converged shifts.  The nonlinear term is
carried over by Petrov-Galerkin projection.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dae import LinearPart, _factor, RCOND_MIN, eval_transfer, linearize, make_dae
from .errors import (DimensionError, HigherIndexError, RankDeficiencyError,
                     SingularShiftError)
from .terms import ProjectedTerm, QuadraticTerm, full_jacobian

RANK_TOL = 1e-10
TANGENT_RULES = ("dominant", "cyclic")
INF_TOL = 1e-10


@dataclass(frozen=True)
class TirkaConfig:
    """Reduction settings.

    ``shifts``/``right_tangents``/``left_tangents`` default to ``r`` real
    shifts log-spaced over ``shift_range`` (``[1e-3, 1e3]``) with the
    dominant singular vectors of ``H`` at each shift as tangents.  With
    ``tangent_rule="cyclic"`` shift ``i`` instead takes singular pair
    ``i mod min(m, p)``, which keeps the bases well conditioned when one
    channel dominates every sample.
    """

    r: int
    shifts: tuple = None
    right_tangents: tuple = None
    left_tangents: tuple = None
    tol: float = 1e-6
    max_iter: int = 100
    shift_range: tuple = (1e-3, 1e3)
    tangent_rule: str = "dominant"

    def __post_init__(self):
        if int(self.r) < 1:
            raise ValueError("reduced order r must be at least 1")
        lo, hi = self.shift_range
        if not 0 < lo <= hi:
            raise ValueError("shift_range must satisfy 0 < low <= high")
        if self.tangent_rule not in TANGENT_RULES:
            raise ValueError(f"tangent_rule must be one of {TANGENT_RULES}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class CorrectionPair:
    F: np.ndarray
    Fbar: np.ndarray


@dataclass(frozen=True, eq=False)
class TirkaResult:
    V: np.ndarray
    W: np.ndarray
    shifts: np.ndarray
    right_tangents: np.ndarray
    left_tangents: np.ndarray
    B_stack: np.ndarray
    C_stack: np.ndarray
    history: tuple
    shift_history: tuple
    converged: bool

    @property
    def iterations(self):
        return len(self.history)


@dataclass(frozen=True, eq=False)
class ReducedModel:
    """Reduced descriptor model ``E_r z' = A_hat z + B_hat u + G_r(z, u)``.

    Outputs are ``y = C_hat z + D_r u + y0``; the full state is approximated
    by ``x_ref + V z``.  ``A_r``, ``B_r``, ``C_r`` keep the uncorrected
    projections.
    """

    E_r: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    C_hat: np.ndarray
    D_r: np.ndarray
    V: np.ndarray
    W: np.ndarray
    A_r: np.ndarray
    B_r: np.ndarray
    C_r: np.ndarray
    shifts: np.ndarray
    right_tangents: np.ndarray
    left_tangents: np.ndarray
    history: tuple
    converged: bool
    G_r: object = None
    x_ref: np.ndarray = None
    u_ref: np.ndarray = None
    y0: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.E_r.shape[0]

    @property
    def linear(self):
        return LinearPart(self.E_r, self.A_hat, self.B_hat, self.C_hat, self.D_r)

    def to_dae(self, input_names=(), output_names=()):
        """Reduced model as a DAE ready for the integrator.

        The linearization folded into ``A_hat``/``B_hat`` is handed back to
        the nonlinear term, so the implicit part of each step is the
        projection of the full model's own linear part.  The equations are
        unchanged; only the semi-implicit split follows the full model.
        """
        r, m = self.r, self.B_hat.shape[1]
        A, B = self.A_hat, self.B_hat
        G = self.G_r if self.G_r is not None else QuadraticTerm.zero(r, m)
        if isinstance(G, ProjectedTerm) and G.base is not None:
            A, B = A - G.lin_x, B - G.lin_u
            G = ProjectedTerm(G.base, G.V, G.W, x_ref=G.x_ref, offset=G.offset, m=G.m)
        return make_dae(self.E_r, A, B, self.C_hat, G, D=self.D_r,
                        y0=self.y0, x0=np.zeros(r), u0=self.u_ref,
                        input_names=input_names, output_names=output_names,
                        meta={"reduced": True})

    def lift(self, z):
        z = np.asarray(z, dtype=float)
        base = 0.0 if self.x_ref is None else self.x_ref
        return base + z @ self.V.T if z.ndim == 2 else base + self.V @ z


# ------------------------------------------------------------------ helpers

def _threads(count):
    env = os.environ.get("NETMOR_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, count))


def _shifted_solves(lin, shifts, right, left):
    """Return lists of ``(sE - A)^{-1} B b`` and ``(sE - A)^{-T} C^T c``."""

    def one(i):
        s = complex(shifts[i])
        M = s * lin.E - lin.A if s.imag else s.real * lin.E - lin.A
        lu, piv, scale, rcond = _factor(M)
        if rcond < RCOND_MIN:
            raise SingularShiftError(f"sE - A numerically singular at shift {s}", s=s)
        v = sla.lu_solve((lu, piv), scale * (lin.B @ right[i]), check_finite=False)
        # M^T y = c'  <=>  (S M)^T (S^{-1} y) = c'  with S the row scaling
        y = sla.lu_solve((lu, piv), lin.C.T @ left[i], trans=1, check_finite=False) * scale
        return v, y

    idx = range(len(shifts))
    workers = _threads(len(shifts))
    if workers > 1 and lin.n >= 200:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(one, idx))
    else:
        out = [one(i) for i in idx]
    return [o[0] for o in out], [o[1] for o in out]


def _representatives(shifts, right, left):
    """Real shifts and the upper member of each conjugate pair, checked for closure."""
    shifts = np.asarray(shifts, dtype=complex)
    scale = np.maximum(np.abs(shifts), 1.0)
    is_real = np.abs(shifts.imag) <= 1e-12 * scale
    upper = np.flatnonzero(~is_real & (shifts.imag > 0))
    lower = np.flatnonzero(~is_real & (shifts.imag < 0))
    if upper.size != lower.size:
        raise ValueError("shift set is not closed under conjugation")
    used = set()
    for i in upper:
        d = np.abs(shifts[lower] - np.conj(shifts[i]))
        d[[k for k, j in enumerate(lower) if j in used]] = np.inf
        k = int(np.argmin(d))
        if d[k] > 1e-8 * scale[i]:
            raise ValueError(f"shift {shifts[i]} has no conjugate partner")
        j = lower[k]
        used.add(j)
        tol = 1e-8 * max(1.0, np.linalg.norm(right[i]))
        if np.linalg.norm(right[j] - np.conj(right[i])) > tol or \
                np.linalg.norm(left[j] - np.conj(left[i])) > 1e-8 * max(1.0, np.linalg.norm(left[i])):
            raise ValueError(f"tangents of conjugate shifts {shifts[i]} are not conjugate")
    order = [i for i in range(shifts.size) if is_real[i] or shifts[i].imag > 0]
    return order, is_real


def _realify(cols, is_real_list):
    out = []
    for v, real in zip(cols, is_real_list):
        if real:
            out.append(np.real(v))
        else:
            out.extend([np.real(v), np.imag(v)])
    return np.column_stack(out)


def _orthonormalize(M, stack, shifts_of_col, label):
    """QR of the column-scaled ``M``; returns ``(Q, stack @ S @ R^{-1})``."""
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0):
        bad = sorted({shifts_of_col[k] for k in np.flatnonzero(norms == 0)})
        raise RankDeficiencyError(f"{label} has zero columns for shift indices {bad}")
    S = 1.0 / norms
    Ms = M * S
    sv = np.linalg.svd(Ms, compute_uv=False)
    if sv[-1] <= RANK_TOL * max(1.0, sv[0]):
        Q, R, P = sla.qr(Ms, mode="economic", pivoting=True)
        deficiency = int(np.sum(sv <= RANK_TOL * max(1.0, sv[0])))
        weak = P[-deficiency:]
        bad = sorted({shifts_of_col[k] for k in weak})
        raise RankDeficiencyError(
            f"{label} is rank deficient (smallest singular value {sv[-1]:.3g}); "
            f"collinear shift indices {bad}")
    Q, R = np.linalg.qr(Ms)
    T = np.linalg.solve(R.T, (stack * S).T).T
    return Q, T


def _bases(lin, shifts, right, left):
    shifts = np.asarray(shifts, dtype=complex).reshape(-1)
    right = np.atleast_2d(np.asarray(right, dtype=complex))
    left = np.atleast_2d(np.asarray(left, dtype=complex))
    if right.shape != (shifts.size, lin.m) or left.shape != (shifts.size, lin.p):
        raise DimensionError("need one right (m) and one left (p) tangent per shift")
    order, is_real = _representatives(shifts, right, left)
    vs, ws = _shifted_solves(lin, shifts[order], right[order], left[order])
    flags = [bool(is_real[i]) for i in order]
    col_shift = []
    for i, real in zip(order, flags):
        col_shift.extend([i] if real else [i, i])
    Vraw = _realify(vs, flags)
    Wraw = _realify(ws, flags)
    Braw = _realify([right[i] for i in order], flags)
    Craw = _realify([left[i] for i in order], flags)
    V, B_stack = _orthonormalize(Vraw, Braw, col_shift, "V")
    W, C_stack = _orthonormalize(Wraw, Craw, col_shift, "W")
    return V, W, B_stack, C_stack


def build_krylov_bases(lin, shifts, right_tangents, left_tangents):
    """Real orthonormal bases of the tangential rational Krylov spaces.

    Column ``i`` of the raw right basis is ``(s_i E - A)^{-1} B b_i`` and of
    the raw left basis ``(s_i E - A)^{-T} C^T c_i``; conjugate pairs are
    replaced by real and imaginary parts.

    Raises
    ------
    SingularShiftError
        ``s_i E - A`` numerically singular.
    RankDeficiencyError
        A basis loses rank; the message lists the offending shift indices.
    """
    V, W, _, _ = _bases(lin, shifts, right_tangents, left_tangents)
    return V, W


def default_shifts(lin, r, shift_range=(1e-3, 1e3), tangent_rule="dominant"):
    """Log-spaced real shifts with singular vectors of ``H`` as tangents."""
    lo, hi = shift_range
    shifts = np.logspace(np.log10(lo), np.log10(hi), r).astype(complex)
    return _tangents_for(lin, shifts, tangent_rule)


def _tangents_for(lin, shifts, tangent_rule="dominant"):
    right, left = [], []
    for i, s in enumerate(shifts):
        U, sv, Vh = np.linalg.svd(eval_transfer(lin, s))
        k = i % sv.size if tangent_rule == "cyclic" else 0
        right.append(Vh[k].conj())
        left.append(U[:, k].conj())
    return shifts, np.array(right, dtype=complex), np.array(left, dtype=complex)


def _sorted(z):
    return np.sort_complex(np.asarray(z, dtype=complex))


def tirka_iterate(lin, cfg):
    """Iterate shifts to the mirror images of the reduced eigenvalues.

    Returns a :class:`TirkaResult`; not reaching ``cfg.tol`` within
    ``cfg.max_iter`` sets ``converged=False`` instead of raising.
    """
    r = int(cfg.r)
    if cfg.shifts is None:
        shifts, right, left = default_shifts(lin, r, cfg.shift_range, cfg.tangent_rule)
    else:
        shifts = np.asarray(cfg.shifts, dtype=complex).reshape(-1)
        if shifts.size != r:
            raise ValueError(f"expected {r} shifts, got {shifts.size}")
        if cfg.right_tangents is None or cfg.left_tangents is None:
            _, right, left = _tangents_for(lin, shifts, cfg.tangent_rule)
        else:
            right = np.asarray(cfg.right_tangents, dtype=complex).reshape(r, lin.m)
            left = np.asarray(cfg.left_tangents, dtype=complex).reshape(r, lin.p)
    right = np.asarray(right, dtype=complex)
    left = np.asarray(left, dtype=complex)
    history, shift_hist = [], [shifts.copy()]
    converged = False
    for _ in range(int(cfg.max_iter)):
        V, W, _, _ = _bases(lin, shifts, right, left)
        E_r, A_r = W.T @ lin.E @ V, W.T @ lin.A @ V
        B_r, C_r = W.T @ lin.B, lin.C @ V
        (alpha, beta), Y, X = sla.eig(A_r, E_r, left=True, right=True, homogeneous_eigvals=True)
        # a tiny beta means the eigenvalue is numerically infinite
        finite = np.abs(beta) > INF_TOL * np.linalg.norm(E_r, 2) * np.maximum(1.0, np.abs(alpha) / np.linalg.norm(A_r, 2))
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(finite, alpha / np.where(finite, beta, 1.0), np.inf)
        new = -lam
        new_right = np.empty_like(right)
        new_left = np.empty_like(left)
        for i in range(r):
            x, y = X[:, i], np.conj(Y[:, i])
            scale = y @ E_r @ x
            new_right[i] = (B_r.T @ y) / scale if np.isfinite(new[i]) and scale != 0 else np.nan
            new_left[i] = C_r @ x
        new = np.where(np.isfinite(new) & (new.real < 0), -np.conj(new), new)
        new, new_right, new_left = _replace_nonfinite(new, new_right, new_left, shifts, right, left)
        new, new_right, new_left = _close_conjugates(new, new_right, new_left)
        err = float(np.linalg.norm(_sorted(new) - _sorted(shifts)) / np.linalg.norm(shifts))
        history.append(err)
        shifts, right, left = new, new_right, new_left
        shift_hist.append(shifts.copy())
        if err < cfg.tol:
            converged = True
            break
    V, W, B_stack, C_stack = _bases(lin, shifts, right, left)
    return TirkaResult(V, W, shifts, right, left, B_stack, C_stack,
                       tuple(history), tuple(shift_hist), converged)


def _close_conjugates(shifts, right, left):
    """Make conjugate partners exact mirrors of each other.

    Eigenvalues of a real pencil pair up only to rounding; without exact
    pairs the lexicographic sort used by the error metric can swap members
    of a pair between iterations.
    """
    shifts, right, left = shifts.copy(), right.copy(), left.copy()
    scale = np.maximum(np.abs(shifts), 1.0)
    real = np.abs(shifts.imag) <= 1e-12 * scale
    shifts[real] = shifts[real].real
    upper = [i for i in np.flatnonzero(~real) if shifts[i].imag > 0]
    lower = [i for i in np.flatnonzero(~real) if shifts[i].imag < 0]
    for i in upper:
        if not lower:
            break
        k = int(np.argmin([abs(shifts[j] - np.conj(shifts[i])) for j in lower]))
        j = lower.pop(k)
        if abs(shifts[j] - np.conj(shifts[i])) > 1e-8 * scale[i]:
            continue
        shifts[j] = np.conj(shifts[i])
        right[j] = np.conj(right[i])
        left[j] = np.conj(left[i])
    return shifts, right, left


def _replace_nonfinite(new, nr, nl, old, orr, ol):
    """Swap non-finite candidates for the previous shift at the same sorted position."""
    bad = ~np.isfinite(new) | ~np.all(np.isfinite(nr), axis=1) | ~np.all(np.isfinite(nl), axis=1)
    if not bad.any():
        return new, nr, nl
    new, nr, nl = new.copy(), nr.copy(), nl.copy()
    good = np.flatnonzero(~bad)
    order_new = good[np.lexsort((new[good].imag, new[good].real))]
    order_old = np.lexsort((old.imag, old.real))
    # finite candidates keep their ranks; the freed ranks take the old shifts
    taken = set()
    for k, i in enumerate(order_new):
        taken.add(k)
    free_ranks = [k for k in range(new.size) if k not in taken]
    for i, k in zip(np.flatnonzero(bad), free_ranks):
        j = order_old[k]
        new[i], nr[i], nl[i] = old[j], orr[j], ol[j]
    return new, nr, nl


# ------------------------------------------------------ polynomial part

def _algebraic_split(lin, diff_mask):
    diff_mask = np.asarray(diff_mask, dtype=bool)
    alg_rows = np.flatnonzero(~diff_mask)
    alg_cols = np.flatnonzero(~np.any(lin.E != 0, axis=0))
    return alg_rows, alg_cols


def estimate_polynomial_part(lin, diff_mask, check=True):
    """Constant limit of ``H(s)`` for an index-1 semi-explicit model.

    Computes ``D - C_2 A_22^{-1} B_2`` on the algebraic rows and columns and
    cross-checks it against ``H(1e8 i)``.

    Raises
    ------
    HigherIndexError
        ``A_22`` singular (or not square).
    ValueError
        The cross-check disagrees by more than ``1e-4``.
    """
    alg_rows, alg_cols = _algebraic_split(lin, diff_mask)
    if alg_rows.size == 0:
        D = lin.D.copy()
    else:
        if alg_rows.size != alg_cols.size:
            raise HigherIndexError("higher-index DAE; polynomial part not constant")
        A22 = lin.A[np.ix_(alg_rows, alg_cols)]
        *_, rcond = _factor(A22)
        if rcond < RCOND_MIN:
            raise HigherIndexError("higher-index DAE; polynomial part not constant")
        D = lin.D - lin.C[:, alg_cols] @ np.linalg.solve(A22, lin.B[alg_rows])
    if check:
        H = eval_transfer(lin, 1e8j)
        gap = np.max(np.abs(H - D), initial=0.0)
        if gap > 1e-4 * max(1.0, np.max(np.abs(D), initial=0.0)):
            raise ValueError(f"polynomial part disagrees with H(1e8 i) by {gap:.3g}")
    return D


def polynomial_part_limit(lin, omegas=(1e7, 1e8, 1e9)):
    """High-frequency limit of ``H`` by Richardson extrapolation along the imaginary axis.

    Used for models whose algebraic block is singular.  Two extrapolations
    on successive frequency pairs must agree, otherwise the polynomial part
    grows with ``s`` and :class:`HigherIndexError` is raised.
    """
    s = [1j * w for w in omegas]
    try:
        H = [eval_transfer(lin, sk) for sk in s]
    except SingularShiftError as exc:
        raise HigherIndexError("higher-index DAE; polynomial part not constant") from exc
    est = [(s[k + 1] * H[k + 1] - s[k] * H[k]) / (s[k + 1] - s[k]) for k in range(len(s) - 1)]
    scale = max(1.0, np.max(np.abs(est[-1]), initial=0.0))
    if np.max(np.abs(est[-1] - est[-2]), initial=0.0) > 1e-4 * scale or \
            np.max(np.abs(est[-1].imag), initial=0.0) > 1e-4 * scale:
        raise HigherIndexError("higher-index DAE; polynomial part not constant")
    return est[-1].real


def polynomial_part(lin, diff_mask):
    """Index-1 Schur complement when possible, otherwise the numeric limit."""
    try:
        return estimate_polynomial_part(lin, diff_mask)
    except HigherIndexError:
        return polynomial_part_limit(lin)


# ------------------------------------------------------ assembly

def solve_correction_pair(V, W, B_stack, C_stack):
    """Minimum-norm ``F``, ``Fbar`` with ``F^T V = B_stack`` and ``W^T Fbar = C_stack^T``.

    Raises
    ------
    RankDeficiencyError
        ``V`` or ``W`` is not of full column rank.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    for name, M in (("V", V), ("W", W)):
        sv = np.linalg.svd(M, compute_uv=False)
        if sv.size == 0 or sv[-1] <= RANK_TOL * max(1.0, sv[0]):
            raise RankDeficiencyError(f"{name} is rank deficient")
    B_stack = np.atleast_2d(np.asarray(B_stack, dtype=float))
    C_stack = np.atleast_2d(np.asarray(C_stack, dtype=float))
    F = V @ np.linalg.solve(V.T @ V, B_stack.T)
    Fbar = W @ np.linalg.solve(W.T @ W, C_stack.T)
    return CorrectionPair(F, Fbar)


def assemble_reduced(lin, V, W, D_r, pair, G=None, *, x_ref=None, u_ref=None, A_full=None,
                     y_offset=None, shifts=None, right_tangents=None, left_tangents=None,
                     history=(), converged=True):
    """Form the corrected reduced matrices and the projected nonlinear term.

    ``A_hat = W^T A V + (W^T Fbar) D_r (F^T V)``, ``B_hat = W^T B - (W^T Fbar) D_r``,
    ``C_hat = C V - D_r (F^T V)``.  When ``G`` is given, ``lin`` is taken to
    be the linearization of the model about ``(x_ref, u_ref)`` and ``A_full``
    the model's own state matrix; the projected term then reproduces the
    full right-hand side on the subspace ``x_ref + range(V)``.  The linear
    part acts on deviations from ``(x_ref, u_ref)``, so the share of the
    correction carried by ``u_ref`` is moved into the constant offsets.
    """
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    n, r = V.shape
    if W.shape != (n, r) or lin.n != n:
        raise DimensionError("V and W must both be n x r with n matching the model")
    D_r = np.atleast_2d(np.asarray(D_r, dtype=float))
    if D_r.shape != (lin.p, lin.m):
        raise DimensionError(f"D_r must have shape {(lin.p, lin.m)}")
    Ct = W.T @ pair.Fbar          # r x p
    Bt = pair.F.T @ V             # m x r
    E_r = W.T @ lin.E @ V
    A_r = W.T @ lin.A @ V
    B_r = W.T @ lin.B
    C_r = lin.C @ V
    A_hat = A_r + Ct @ D_r @ Bt
    B_hat = B_r - Ct @ D_r
    C_hat = C_r - D_r @ Bt
    x_ref = np.zeros(n) if x_ref is None else np.asarray(x_ref, dtype=float)
    u_ref = np.zeros(lin.m) if u_ref is None else np.asarray(u_ref, dtype=float)
    # the linear part acts on deviations from (x_ref, u_ref); the reference
    # input's share of the feed-through correction moves into the offsets
    shift = Ct @ D_r @ u_ref
    G_r = None
    if G is not None:
        Jx, Ju = full_jacobian(G, x_ref, u_ref, lin.m)
        A0 = lin.A - Jx if A_full is None else np.asarray(A_full, dtype=float)
        G_r = ProjectedTerm(G, V, W, x_ref=x_ref, offset=W.T @ (A0 @ x_ref) + shift,
                            lin_x=W.T @ Jx @ V, lin_u=W.T @ Ju, m=lin.m)
    elif np.any(x_ref) or np.any(shift):
        G_r = ProjectedTerm(None, V, W, x_ref=x_ref, offset=W.T @ (lin.A @ x_ref) + shift, m=lin.m)
    y_ref = lin.C @ x_ref + lin.D @ u_ref if y_offset is None else np.asarray(y_offset, dtype=float)
    y0 = y_ref - D_r @ u_ref
    return ReducedModel(
        E_r=E_r, A_hat=A_hat, B_hat=B_hat, C_hat=C_hat, D_r=D_r, V=V, W=W,
        A_r=A_r, B_r=B_r, C_r=C_r,
        shifts=None if shifts is None else np.asarray(shifts),
        right_tangents=right_tangents, left_tangents=left_tangents,
        history=tuple(history), converged=bool(converged), G_r=G_r,
        x_ref=x_ref, u_ref=u_ref, y0=y0,
    )


def _transfer_and_derivative(lin, s):
    M = s * lin.E - lin.A
    lu, piv, scale, rcond = _factor(M)
    if rcond < RCOND_MIN:
        raise SingularShiftError(f"sE - A numerically singular at s={s}", s=s)
    X = sla.lu_solve((lu, piv), scale[:, None] * lin.B, check_finite=False)
    H = lin.C @ X + lin.D
    dH = -lin.C @ sla.lu_solve((lu, piv), scale[:, None] * (lin.E @ X), check_finite=False)
    return H, dH


def verify_interpolation(lin, reduced):
    """Relative residuals of the tangential interpolation conditions.

    Returns one dict per shift with keys ``shift``, ``right``, ``left`` and
    ``bitangential`` (the latter compares ``c^T H'(s) b``).
    """
    red = reduced.linear
    report = []
    for s, b, c in zip(reduced.shifts, reduced.right_tangents, reduced.left_tangents):
        s = complex(s)
        H, dH = _transfer_and_derivative(lin, s)
        try:
            Hr, dHr = _transfer_and_derivative(red, s)
        except SingularShiftError as exc:
            raise SingularShiftError(f"reduced sE - A singular at s={s}", s=s) from exc
        rb = np.linalg.norm((H - Hr) @ b) / max(np.linalg.norm(H @ b), np.finfo(float).tiny)
        lc = np.linalg.norm(c @ (H - Hr)) / max(np.linalg.norm(c @ H), np.finfo(float).tiny)
        full = c @ dH @ b
        bi = abs(full - c @ dHr @ b) / max(abs(full), np.finfo(float).tiny)
        report.append({"shift": s, "right": float(rb), "left": float(lc), "bitangential": float(bi)})
    return report


def _projected_polynomial_part(lin, V, W):
    """Feed-through already carried by the uncorrected projection.

    Zero unless ``W^T E V`` is singular, which happens when the bases keep
    algebraic directions (``r = n`` on a DAE, for instance).  The correction
    then only has to supply the remainder; adding the full polynomial part
    on top would make the reduced pencil singular.
    """
    E_r = W.T @ lin.E @ V
    sv = np.linalg.svd(E_r, compute_uv=False)
    if sv.size == 0 or sv[-1] > RANK_TOL * max(1.0, sv[0]):
        return np.zeros((lin.p, lin.m))
    proj = LinearPart(E_r, W.T @ lin.A @ V, W.T @ lin.B, lin.C @ V)
    try:
        return polynomial_part_limit(proj)
    except HigherIndexError:
        return np.zeros((lin.p, lin.m))


def reduce(dae, cfg, x_ref=None, u_ref=None, D_r=None):
    """Reduce ``dae`` about ``(x_ref, u_ref)`` (default: its operating point).

    Steps: linearize, iterate shifts, compute the polynomial part (unless
    ``D_r`` is given), subtract the share the projection already carries,
    solve for the correction pair, assemble.
    """
    x_ref = dae.x0 if x_ref is None else np.asarray(x_ref, dtype=float)
    u_ref = dae.u0 if u_ref is None else np.asarray(u_ref, dtype=float)
    lin = linearize(dae, x_ref, u_ref)
    res = tirka_iterate(lin, cfg)
    if D_r is None:
        D_r = polynomial_part(lin, dae.diff_mask)
    D_r = D_r - _projected_polynomial_part(lin, res.V, res.W)
    pair = solve_correction_pair(res.V, res.W, res.B_stack, res.C_stack)
    return assemble_reduced(
        lin, res.V, res.W, D_r, pair, dae.G, x_ref=x_ref, u_ref=u_ref, A_full=dae.A,
        y_offset=dae.output(x_ref, u_ref), shifts=res.shifts,
        right_tangents=res.right_tangents, left_tangents=res.left_tangents,
        history=res.history, converged=res.converged,
    )
