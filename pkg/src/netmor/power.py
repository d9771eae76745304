"""Transmission lines and bus power-flow constraints.

Lines follow the telegrapher's equations on ``N`` segments::

    L I' = -D_x V - R I
    C V' =  D_x^T I - G V + e_1 I_0 / dx

with currents and voltages per segment, ``D_x`` the forward-difference
matrix and ``I_0`` an injected current at the sending end.  Buses attach to
line voltages and add one angle each, constrained algebraically by

    0 = p_i - P_i(V, theta) + [generator] E'_i V_i / X'_i sin(alpha_i - theta_i)

The angle block is linear only after expansion, so the assembled model keeps
the Jacobian at the nominal point in ``A`` and the remainder in ``G``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dae import make_dae
from .errors import DimensionError, TopologyError


@dataclass(frozen=True)
class LineSpec:
    """Per-unit-length parameters and geometry of one line."""

    resistance: float
    inductance: float
    capacitance: float
    conductance: float
    length: float
    segments: int

    def __post_init__(self):
        if int(self.segments) != self.segments or self.segments < 1:
            raise ValueError("a line needs at least one segment")
        if not (self.inductance > 0 and self.capacitance > 0):
            raise ValueError("inductance and capacitance must be positive")
        if not (self.resistance >= 0 and self.conductance >= 0):
            raise ValueError("resistance and conductance must be non-negative")
        if not self.length > 0:
            raise ValueError("length must be positive")

    @property
    def dx(self):
        return self.length / self.segments


@dataclass(frozen=True, eq=False)
class LineModel:
    L: np.ndarray
    C: np.ndarray
    R: np.ndarray
    G: np.ndarray
    D_x: np.ndarray
    dx: float

    @property
    def segments(self):
        return self.D_x.shape[0]

    def state_matrices(self):
        """``(E, A)`` for the state ``[I, V]``."""
        E = sla.block_diag(self.L, self.C)
        A = np.block([[-self.R, -self.D_x], [self.D_x.T, -self.G]])
        return E, A


def discretize_line_fdm(spec):
    """Diagonal parameter matrices and the forward-difference operator.

    ``D_x`` is square with ``-1`` on the diagonal and ``+1`` above it, scaled
    by ``1/dx``; the far end is grounded.
    """
    N = int(spec.segments)
    dx = spec.dx
    D_x = (np.diag(-np.ones(N)) + np.diag(np.ones(N - 1), 1)) / dx
    eye = np.eye(N)
    return LineModel(spec.inductance * eye, spec.capacitance * eye, spec.resistance * eye,
                     spec.conductance * eye, D_x, dx)


@dataclass(frozen=True)
class Bus:
    """Bus data; generators need ``emf``, ``reactance`` and ``rotor_angle``."""

    name: str
    kind: str
    power: float = 0.0
    emf: float = None
    reactance: float = None
    rotor_angle: float = None
    line: int = 0
    node: int = 0


@dataclass(frozen=True, eq=False)
class BusSystem:
    """Buses with conductance ``G`` and susceptance ``B`` matrices.

    ``voltage`` and ``theta`` hold the current magnitudes and angles used by
    :func:`power_flow_residual` and :func:`generator_power`.
    """

    buses: tuple
    G: np.ndarray
    B: np.ndarray
    voltage: np.ndarray = None
    theta: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.buses)
        Gm = np.atleast_2d(np.asarray(self.G, dtype=float)) if k else np.zeros((0, 0))
        Bm = np.atleast_2d(np.asarray(self.B, dtype=float)) if k else np.zeros((0, 0))
        if Gm.shape != (k, k) or Bm.shape != (k, k):
            raise DimensionError(f"admittance matrices must be {k} x {k}")
        if not (np.allclose(Gm, Gm.T, atol=0, rtol=0) and np.allclose(Bm, Bm.T, atol=0, rtol=0)):
            raise ValueError("admittance matrices must be symmetric")
        for b in self.buses:
            gen_fields = (b.emf, b.reactance, b.rotor_angle)
            if b.kind == "generator":
                if any(v is None for v in gen_fields):
                    raise ValueError(f"generator bus {b.name!r} needs emf, reactance and rotor_angle")
            elif b.kind == "load":
                if any(v is not None for v in gen_fields):
                    raise ValueError(f"load bus {b.name!r} must not carry generator parameters")
            else:
                raise ValueError(f"bus {b.name!r} has unknown kind {b.kind!r}")
        v = np.ones(k) if self.voltage is None else np.asarray(self.voltage, dtype=float)
        th = np.zeros(k) if self.theta is None else np.asarray(self.theta, dtype=float)
        object.__setattr__(self, "G", Gm)
        object.__setattr__(self, "B", Bm)
        object.__setattr__(self, "voltage", v)
        object.__setattr__(self, "theta", th)

    @property
    def generators(self):
        return [i for i, b in enumerate(self.buses) if b.kind == "generator"]


def power_flow_residual(bus, voltage=None, theta=None):
    """Injected power ``P_i = sum_j V_i V_j [G_ij cos(t_i - t_j) + B_ij sin(t_i - t_j)]``."""
    V = bus.voltage if voltage is None else np.asarray(voltage, dtype=float)
    th = bus.theta if theta is None else np.asarray(theta, dtype=float)
    d = th[:, None] - th[None, :]
    return V * ((bus.G * np.cos(d) + bus.B * np.sin(d)) @ V)


def _power_flow_jacobian(bus, V, th):
    d = th[:, None] - th[None, :]
    K = bus.G * np.cos(d) + bus.B * np.sin(d)
    Ks = -bus.G * np.sin(d) + bus.B * np.cos(d)
    dV = np.diag(K @ V) + V[:, None] * K
    Mt = V[:, None] * Ks * V[None, :]
    dT = np.diag(Mt.sum(axis=1)) - Mt
    return dV, dT


def generator_power(bus, voltage=None, theta=None):
    """``E' V / X' sin(alpha - theta)`` for each generator bus, in bus order.

    Raises
    ------
    ZeroDivisionError
        A generator has zero transient reactance.
    """
    V = bus.voltage if voltage is None else np.asarray(voltage, dtype=float)
    th = bus.theta if theta is None else np.asarray(theta, dtype=float)
    out = []
    for i in bus.generators:
        b = bus.buses[i]
        if b.reactance == 0:
            raise ZeroDivisionError(f"generator bus {b.name!r} has zero reactance")
        out.append(b.emf * V[i] / b.reactance * np.sin(b.rotor_angle - th[i]))
    return np.array(out)


def _constraint(bus, V, th):
    """``P(V, theta) - p_gen`` per bus (zero generation on load buses)."""
    g = power_flow_residual(bus, V, th)
    g[bus.generators] -= generator_power(bus, V, th)
    return g


def _constraint_jacobian(bus, V, th):
    dV, dT = _power_flow_jacobian(bus, V, th)
    for i in bus.generators:
        b = bus.buses[i]
        dV[i, i] -= b.emf / b.reactance * np.sin(b.rotor_angle - th[i])
        dT[i, i] += b.emf * V[i] / b.reactance * np.cos(b.rotor_angle - th[i])
    return dV, dT


class PowerFlowTerm:
    """Nonlinear remainder of the bus constraints.

    Returns ``J x - g(V, theta)`` on the bus rows, where ``g`` is the bus
    constraint and ``J`` its Jacobian at the nominal point (stored in ``A``
    with the opposite sign), so ``A x + G(x)`` equals ``-g`` exactly.
    """

    def __init__(self, n, m, bus, v_idx, theta_idx, rows, J):
        self.n, self.m = n, m
        self.bus = bus
        self.v_idx = np.asarray(v_idx)
        self.theta_idx = np.asarray(theta_idx)
        self.rows = np.asarray(rows)
        self.J = J

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.n)
        out[self.rows] = self.J @ x - _constraint(self.bus, x[self.v_idx], x[self.theta_idx])
        return out

    def jacobian(self, x, u):
        x = np.asarray(x, dtype=float)
        dV, dT = _constraint_jacobian(self.bus, x[self.v_idx], x[self.theta_idx])
        Jx = np.zeros((self.n, self.n))
        Jx[self.rows] = self.J
        Jx[np.ix_(self.rows, self.v_idx)] -= dV
        Jx[np.ix_(self.rows, self.theta_idx)] -= dT
        return Jx, np.zeros((self.n, self.m))


def assemble_power(lines, buses=None, injections=None):
    """Assemble lines and (optionally) bus constraints.

    Parameters
    ----------
    lines : sequence of LineSpec
    buses : BusSystem, optional
        Bus ``k`` reads its voltage from segment ``node`` of line ``line``.
    injections : sequence of float, optional
        Nominal sending-end currents per line (default 1.0).

    State ``[I_1, V_1, ..., I_L, V_L, theta]``; inputs ``[I_0 per line, p per
    bus]``; outputs are the bus angles followed by the attachment voltages
    (or the sending-end voltages when there are no buses).

    Raises
    ------
    TopologyError
        Empty bus set, bad attachment, or no generator bus.
    """
    lines = list(lines)
    if not lines:
        raise TopologyError("at least one line is required")
    models = [discretize_line_fdm(s) for s in lines]
    sizes = [2 * md.segments for md in models]
    offsets = np.cumsum([0] + sizes)
    n_line = int(offsets[-1])
    nb = 0 if buses is None else len(buses.buses)
    if buses is not None and nb == 0:
        raise TopologyError("bus system is empty")
    N = n_line + nb
    m_in = len(lines) + nb
    E = np.zeros((N, N))
    A = np.zeros((N, N))
    B = np.zeros((N, m_in))
    for k, md in enumerate(models):
        sl = slice(offsets[k], offsets[k + 1])
        Ek, Ak = md.state_matrices()
        E[sl, sl] = Ek
        A[sl, sl] = Ak
        B[offsets[k] + md.segments, k] = 1.0 / md.dx
    inj = np.ones(len(lines)) if injections is None else np.asarray(injections, dtype=float)
    if inj.shape != (len(lines),):
        raise DimensionError("one injection per line required")

    # nominal line state: steady response to the nominal injections
    u_lines = np.concatenate([inj, np.zeros(nb)])
    x_line = np.linalg.solve(A[:n_line, :n_line], -B[:n_line] @ u_lines)

    if buses is None:
        C = np.zeros((len(lines), N))
        for k, md in enumerate(models):
            C[k, offsets[k] + md.segments] = 1.0
        return make_dae(E, A, B, C, None, x0=x_line, u0=inj,
                        input_names=[f"I0[{k}]" for k in range(len(lines))],
                        output_names=[f"V[{k}]" for k in range(len(lines))],
                        meta={"domain": "power"})

    if not buses.generators:
        raise TopologyError("bus constraints need at least one generator bus")
    v_idx = []
    for b in buses.buses:
        if not 0 <= b.line < len(lines) or not 0 <= b.node < models[b.line].segments:
            raise TopologyError(f"bus {b.name!r} attaches to a nonexistent line segment")
        v_idx.append(offsets[b.line] + models[b.line].segments + b.node)
    v_idx = np.array(v_idx)
    theta_idx = np.arange(n_line, N)
    rows = theta_idx
    V_nom = x_line[v_idx]
    dV, dT = _constraint_jacobian(buses, V_nom, np.zeros(nb))
    J = np.zeros((nb, N))
    J[:, v_idx] += dV
    J[:, theta_idx] += dT
    A[rows] = -J
    B[rows, len(lines):] = np.eye(nb)
    G = PowerFlowTerm(N, m_in, buses, v_idx, theta_idx, rows, J)

    p0 = np.array([b.power for b in buses.buses], dtype=float)
    x0 = np.concatenate([x_line, np.zeros(nb)])
    C = np.zeros((2 * nb, N))
    C[np.arange(nb), theta_idx] = 1.0
    C[nb + np.arange(nb), v_idx] = 1.0
    return make_dae(
        E, A, B, C, G, x0=x0, u0=np.concatenate([inj, p0]),
        input_names=[f"I0[{k}]" for k in range(len(lines))] + [f"p[{b.name}]" for b in buses.buses],
        output_names=[f"theta[{b.name}]" for b in buses.buses] + [f"V[{b.name}]" for b in buses.buses],
        meta={"domain": "power", "balance_rows": tuple(int(r) for r in rows)},
    )


def desk_system():
    """Two lines and three buses used as the shipped power example.

    Returns ``(lines, buses, injections)``.
    """
    lines = [LineSpec(0.2, 0.5, 0.5, 0.02, 3.0, 3), LineSpec(0.2, 0.5, 0.5, 0.02, 2.0, 2)]
    buses = BusSystem(
        buses=(Bus("g1", "generator", power=0.0, emf=1.2, reactance=0.3, rotor_angle=0.2, line=0, node=0),
               Bus("l2", "load", power=-0.3, line=0, node=1),
               Bus("g3", "generator", power=0.0, emf=1.1, reactance=0.4, rotor_angle=0.1, line=1, node=0)),
        G=[[0.5, -0.25, -0.25], [-0.25, 0.5, -0.25], [-0.25, -0.25, 0.5]],
        B=[[-9.0, 5.0, 4.0], [5.0, -8.0, 3.0], [4.0, 3.0, -7.0]],
    )
    return lines, buses, (2.0, 2.5)
