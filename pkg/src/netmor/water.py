"""Rigid water column networks.

Each pipe carries a single mass flow ``q`` obeying::

    (L/A) q' = p_in - p_out - f(q) + H,    f(q) = (L/rho) lam / (2 D A^2) q|q|

with the constant head ``H = -L rho g sin(alpha)``.  Demand nodes add an
algebraic balance ``inflow - outflow = demand``; pressure nodes are boundary
inputs.  Units are SI (Pa, kg/s); configuration files give pressures in bar.
"""

from dataclasses import dataclass

import numpy as np

from .dae import make_dae
from .errors import DimensionError, TopologyError
from .terms import P_NONE, QuadraticTerm

GRAVITY = 9.81
BAR = 1e5
NODE_KINDS = ("pressure", "demand")


@dataclass(frozen=True)
class WaterPipeSpec:
    """Pipe parameters: lengths in m, area in m^2, density in kg/m^3, angle in rad."""

    length: float
    area: float
    diameter: float
    friction: float = 0.02
    angle: float = 0.0
    density: float = 1000.0

    def __post_init__(self):
        for name in ("length", "area", "diameter", "density"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not (np.isfinite(self.friction) and self.friction >= 0):
            raise ValueError("friction must be non-negative")
        if not abs(self.angle) <= np.pi / 2:
            raise ValueError("angle must lie in [-pi/2, pi/2]")


@dataclass(frozen=True)
class WaterNode:
    """``pressure`` nodes carry a boundary pressure (bar), ``demand`` nodes a withdrawal (kg/s)."""

    name: str
    kind: str
    pressure: float = None
    demand: float = 0.0


@dataclass(frozen=True)
class WaterEdge:
    name: str
    source: str
    target: str
    spec: WaterPipeSpec


@dataclass(frozen=True)
class WaterNetwork:
    nodes: tuple
    edges: tuple

    @property
    def pressure_nodes(self):
        return [nd for nd in self.nodes if nd.kind == "pressure"]

    @property
    def demand_nodes(self):
        return [nd for nd in self.nodes if nd.kind == "demand"]


def build_incidence(net):
    """Signed incidence matrix and its split by node kind.

    Returns ``(A_G, A_p, A_q)``.  ``A_G`` has one row per edge and one column
    per node; an edge row holds ``+1`` at the node it enters and ``-1`` at
    the node it leaves.  ``A_p`` and ``A_q`` are the pressure-node and
    demand-node columns, in node order.

    Raises
    ------
    TopologyError
        Untagged or isolated node, undeclared endpoint, empty network.
    """
    if not net.nodes or not net.edges:
        raise TopologyError("water network needs at least one node and one edge")
    index = {}
    for nd in net.nodes:
        if nd.kind not in NODE_KINDS:
            raise TopologyError(f"node {nd.name!r} is not tagged as pressure or demand")
        if nd.name in index:
            raise TopologyError(f"duplicate node {nd.name!r}")
        index[nd.name] = len(index)
    A_G = np.zeros((len(net.edges), len(net.nodes)))
    for k, e in enumerate(net.edges):
        for end in (e.source, e.target):
            if end not in index:
                raise TopologyError(f"edge {e.name!r} references undeclared node {end!r}")
        if e.source == e.target:
            raise TopologyError(f"edge {e.name!r} is a self-loop")
        A_G[k, index[e.target]] = 1.0
        A_G[k, index[e.source]] = -1.0
    isolated = [nd.name for nd in net.nodes if not A_G[:, index[nd.name]].any()]
    if isolated:
        raise TopologyError(f"isolated node(s): {isolated}")
    p_cols = [index[nd.name] for nd in net.nodes if nd.kind == "pressure"]
    q_cols = [index[nd.name] for nd in net.nodes if nd.kind == "demand"]
    return A_G, A_G[:, p_cols], A_G[:, q_cols]


def water_friction(q, specs):
    """Friction pressure losses ``(L/rho) lam / (2 D A^2) q|q|`` per edge."""
    q = np.asarray(q, dtype=float)
    if q.shape != (len(specs),):
        raise DimensionError(f"expected {len(specs)} flows, got shape {q.shape}")
    return _friction_coef(specs) * q * np.abs(q)


def _friction_coef(specs):
    return np.array([s.length / s.density * s.friction / (2 * s.diameter * s.area**2) for s in specs])


def head_vector(specs):
    return np.array([-s.length * s.density * GRAVITY * np.sin(s.angle) for s in specs])


def assemble_water(net):
    """Assemble the network DAE.

    State ``[q (edges), p (demand nodes)]``; inputs ``[p_s (pressure nodes),
    q_s (demand nodes)]``; outputs are the demand-node pressures followed by
    the edge flows.

    Raises
    ------
    TopologyError
        See :func:`build_incidence`; also when no pressure node exists.
    """
    _, A_p, A_q = build_incidence(net)
    specs = [e.spec for e in net.edges]
    ne, nq, npr = len(specs), A_q.shape[1], A_p.shape[1]
    if npr == 0:
        raise TopologyError("water network needs at least one pressure node")
    N = ne + nq
    S = np.diag([s.length / s.area for s in specs])
    E = np.zeros((N, N))
    E[:ne, :ne] = S
    A = np.zeros((N, N))
    A[:ne, ne:] = -A_q
    A[ne:, :ne] = A_q.T
    B = np.zeros((N, npr + nq))
    B[:ne, :npr] = -A_p
    B[ne:, npr:] = -np.eye(nq)
    C = np.zeros((nq + ne, N))
    C[:nq, ne:] = np.eye(nq)
    C[nq:, :ne] = np.eye(ne)

    const = np.zeros(N)
    const[:ne] = head_vector(specs)
    G = QuadraticTerm(N, npr + nq, rows=np.arange(ne), q_idx=np.arange(ne),
                      p_kind=np.full(ne, P_NONE), p_idx=np.zeros(ne, dtype=int),
                      p_scale=np.ones(ne), coef=-_friction_coef(specs), const=const)

    pn, dn = net.pressure_nodes, net.demand_nodes
    for nd in pn:
        if nd.pressure is None:
            raise TopologyError(f"pressure node {nd.name!r} needs a pressure")
    p_s = np.array([nd.pressure * BAR for nd in pn])
    u0 = np.concatenate([p_s, [nd.demand for nd in dn]])
    x0 = np.concatenate([np.zeros(ne), np.full(nq, p_s.mean())])
    return make_dae(
        E, A, B, C, G, x0=x0, u0=u0,
        input_names=[f"p[{nd.name}]" for nd in pn] + [f"q[{nd.name}]" for nd in dn],
        output_names=[f"p[{nd.name}]" for nd in dn] + [f"q[{e.name}]" for e in net.edges],
        meta={"domain": "water", "balance_rows": tuple(range(ne, N)), "edges": ne},
    )


def y_network(spec=None, feed_pressures=(5.0, 4.8), demand=50.0):
    """Two pressure feeds joined at a junction that serves one demand node."""
    spec = spec or WaterPipeSpec(length=500.0, area=0.0707, diameter=0.3)
    return WaterNetwork(
        nodes=(WaterNode("r1", "pressure", pressure=feed_pressures[0]),
               WaterNode("r2", "pressure", pressure=feed_pressures[1]),
               WaterNode("j", "demand", demand=0.0),
               WaterNode("d", "demand", demand=demand)),
        edges=(WaterEdge("e1", "r1", "j", spec),
               WaterEdge("e2", "r2", "j", spec),
               WaterEdge("e3", "j", "d", spec)),
    )
