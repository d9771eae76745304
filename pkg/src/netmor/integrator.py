"""Semi-implicit Euler time stepping for descriptor systems.

Each step solves::

    (E - tau A) x_k = E x_{k-1} + tau B u_k + tau G(x_{k-1}, u_k)

so only the linear part is implicit and ``E - tau A`` is factored once per
run.  Structured terms with a constant input take a compiled fast path (see
:mod:`netmor._kernels`); anything else runs a plain Python loop with the
same semantics.
"""

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import _kernels
from .dae import EPS, _factor
from .errors import DivergenceError, NonphysicalPressureError, SingularPencilError
from .terms import ProjectedTerm, QuadraticTerm


@dataclass(frozen=True)
class StepperConfig:
    """Step size and stopping rules.

    ``settle_tol`` bounds the per-step change ``max |dx| / (|x| + 1)``; the
    run counts as settled after ``settle_window`` consecutive steps below it.
    """

    tau: float = 0.5
    max_iter: int = 1000
    settle_tol: float = 1e-8
    record_every: int = 1
    settle_window: int = 10
    stop_on_settle: bool = True

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")
        if not self.settle_tol > 0:
            raise ValueError("settle_tol must be positive")
        if int(self.record_every) < 1 or int(self.settle_window) < 1:
            raise ValueError("record_every and settle_window must be at least 1")


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Recorded trajectory.

    ``states`` and ``outputs`` hold one row per recorded time in ``t``;
    ``final_state`` is the state after the last executed step, which may
    fall between recording points.
    """

    t: np.ndarray
    states: np.ndarray
    outputs: np.ndarray
    inputs: np.ndarray
    final_state: np.ndarray
    steps: int
    settled: bool
    settle_step: int
    timings: dict = field(default_factory=dict)
    backend: str = "python"


@dataclass(frozen=True, eq=False)
class StepFactorization:
    tau: float
    lu: np.ndarray
    piv: np.ndarray


def factorize(dae, tau):
    """LU factorization of ``E - tau A``.

    Raises
    ------
    SingularPencilError
        The step matrix is numerically singular for this ``tau``.
    """
    M = dae.E - tau * dae.A
    *_, rcond = _factor(M)
    if rcond < EPS * max(1, dae.n):
        raise SingularPencilError(f"step matrix E - tau A is singular for tau={tau!r}")
    lu, piv = sla.lu_factor(M, check_finite=False)
    return StepFactorization(float(tau), np.ascontiguousarray(lu), np.ascontiguousarray(piv))


def step(dae, x_prev, u, tau, factorization=None):
    """Advance one semi-implicit Euler step.

    Passing a cached ``factorization`` gives bit-identical results to
    letting the function factor ``E - tau A`` itself.
    """
    fac = factorization if factorization is not None else factorize(dae, tau)
    if fac.tau != float(tau):
        raise ValueError(f"factorization was built for tau={fac.tau}, not {tau}")
    x_prev = np.asarray(x_prev, dtype=float)
    u = np.asarray(u, dtype=float)
    rhs = dae.E @ x_prev + tau * (dae.B @ u) + tau * dae.G(x_prev, u)
    x = sla.lu_solve((fac.lu, fac.piv), rhs, check_finite=False)
    if not np.all(np.isfinite(x)):
        raise DivergenceError("non-finite state after step", step=None)
    return x


def steady_state_residual(dae, x, u):
    """``||A x + B u + G(x, u)||_inf / (||B u||_inf + 1)``."""
    u = np.asarray(u, dtype=float)
    Bu = dae.B @ u
    r = dae.A @ x + Bu + dae.G(np.asarray(x, dtype=float), u)
    return float(np.max(np.abs(r), initial=0.0) / (np.max(np.abs(Bu), initial=0.0) + 1.0))


def _kernel_arrays(dae, u):
    """Packed arguments for the compiled loop, or ``None`` if unsupported."""
    G = dae.G
    tau_free = dae.B @ u
    if isinstance(G, QuadraticTerm):
        base, reduced = G, False
    elif isinstance(G, ProjectedTerm) and isinstance(G.base, QuadraticTerm):
        base, reduced = G.base, True
    else:
        return None
    if reduced:
        pk = G.packed()
        const = tau_free + G.offset - G.lin_u @ u + pk["const_r"]
        V_sub, xref_sub, lin_x = pk["V_sub"], pk["xref_sub"], np.ascontiguousarray(G.lin_x)
        W_rows, q_idx, p_idx = pk["W_rows"], pk["q_loc"], pk["p_loc"]
    else:
        const = tau_free + base.const
        V_sub, xref_sub, lin_x = np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0))
        W_rows, q_idx, p_idx = np.zeros((base.size, 0)), base.q_idx, base.p_idx
    return dict(
        const=const, V_sub=V_sub, xref_sub=xref_sub, lin_x=lin_x,
        term=(np.ascontiguousarray(base.rows), np.ascontiguousarray(q_idx),
              np.ascontiguousarray(base.p_kind), np.ascontiguousarray(p_idx),
              np.ascontiguousarray(base.p_scale), np.ascontiguousarray(base.coef),
              np.ascontiguousarray(W_rows)),
    )


def simulate(dae, x0=None, u=None, cfg=None, use_numba=None):
    """Run the semi-implicit scheme from ``x0`` under input ``u``.

    Parameters
    ----------
    dae : UnifiedDae
    x0 : array_like, optional
        Initial state; defaults to ``dae.x0``.
    u : array_like or callable, optional
        Constant input vector or a function ``u(t)``; defaults to ``dae.u0``.
    cfg : StepperConfig, optional
    use_numba : bool, optional
        Override the backend chosen by ``NETMOR_NUMBA``.

    Raises
    ------
    DivergenceError
        Non-finite state; ``step`` holds the step index.
    NonphysicalPressureError
        A pressure divisor left the physical range.
    """
    cfg = cfg or StepperConfig()
    x0 = np.array(dae.x0 if x0 is None else x0, dtype=float)
    if x0.shape != (dae.n,):
        raise ValueError(f"x0 must have length {dae.n}")
    u_fn = u if callable(u) else None
    u_const = None if u_fn else np.asarray(dae.u0 if u is None else u, dtype=float).reshape(dae.m)
    tau = float(cfg.tau)
    N = int(cfg.max_iter)
    every = int(cfg.record_every)

    t0 = time.perf_counter()
    fac = factorize(dae, tau)
    t_fac = time.perf_counter() - t0

    packed = _kernel_arrays(dae, u_const) if u_const is not None else None
    if packed is not None:
        states = np.zeros((N // every + 2, dae.n))
        args = [fac.lu, fac.piv, np.ascontiguousarray(dae.E), tau * packed["const"], x0, u_const,
                tau, N, every, float(cfg.settle_tol), int(cfg.settle_window), bool(cfg.stop_on_settle),
                packed["V_sub"], packed["xref_sub"], packed["lin_x"], *packed["term"], states]
        use = _kernels.USE_NUMBA if use_numba is None else use_numba
        if use:
            # compile (or load from cache) outside the timed region
            warm = list(args)
            warm[7] = 0
            warm[-1] = np.zeros_like(states)
            _kernels.run_loop(*warm, use_numba=True)
        t0 = time.perf_counter()
        nrec, last, settled, status, where = _kernels.run_loop(*args, use_numba=use)
        t_step = time.perf_counter() - t0
        if status == _kernels.BAD_PRESSURE:
            raise NonphysicalPressureError(
                f"nonphysical pressure at term entry {where} during step {last}", index=where)
        if status == _kernels.DIVERGED:
            raise DivergenceError(f"non-finite state at step {where}", step=int(where))
        final = states[-1].copy()
        rec = states[:nrec].copy()
        U = np.tile(u_const, (nrec, 1))
        backend = "numba" if use else "numpy"
    else:
        rec_list = [x0.copy()]
        u_of = (lambda t: np.asarray(u_fn(t), dtype=float).reshape(dae.m)) if u_fn else (lambda t: u_const)
        U_list = [u_of(0.0)]
        x = x0
        quiet, settled, last = 0, -1, 0
        E, B, G = dae.E, dae.B, dae.G
        lu_piv = (fac.lu, fac.piv)
        t0 = time.perf_counter()
        for k in range(1, N + 1):
            last = k
            uk = u_of(k * tau)
            xn = sla.lu_solve(lu_piv, E @ x + tau * (B @ uk) + tau * G(x, uk), check_finite=False)
            if not np.all(np.isfinite(xn)):
                raise DivergenceError(f"non-finite state at step {k}", step=k)
            rel = np.max(np.abs(xn - x) / (np.abs(xn) + 1.0)) if dae.n else 0.0
            x = xn
            if k % every == 0:
                rec_list.append(x)
                U_list.append(uk)
            if rel < cfg.settle_tol:
                quiet += 1
                if quiet >= cfg.settle_window and settled < 0:
                    settled = k
                    if cfg.stop_on_settle:
                        break
            else:
                quiet = 0
        t_step = time.perf_counter() - t0
        final = x.copy()
        rec = np.array(rec_list)
        U = np.array(U_list)
        nrec = rec.shape[0]
        backend = "python"

    t = np.arange(nrec) * tau * every
    Y = rec @ dae.C.T + U @ dae.D.T + dae.y0
    return SimulationResult(
        t=t, states=rec, outputs=Y, inputs=U, final_state=final, steps=int(last),
        settled=settled >= 0, settle_step=int(settled),
        timings={"factorization": t_fac, "stepping": t_step}, backend=backend,
    )
