"""Isothermal gas pipelines and pipeline networks.

A pipe of length ``L`` with mesh size ``dx`` is represented on ``n = L/dx``
grid points with staggered unknowns: pressures at points ``2..n`` and mass
flows at points ``1..n-1``.  The inlet pressure ``p_s`` and the outlet flow
``q_d`` are boundary inputs.  Per pipe::

    M_p p' = K_pq q + B_q q_d
    M_q q' = K_qp p + B_p p_s + g(p_s, p, q)

Assembled models use SI units throughout (Pa, kg/s); topologies and
configuration files state supply pressures in bar and are converted on
assembly.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dae import make_dae
from .errors import DimensionError, NonphysicalPressureError, TopologyError
from .terms import P_INPUT, P_STATE, QuadraticTerm

BAR = 1e5
SCHEMES = ("fvm", "fdm")


@dataclass(frozen=True)
class GasPipelineSpec:
    """Physical parameters of one pipe.

    Parameters
    ----------
    length, diameter : float
        Metres.
    area : float, optional
        Cross-section in m^2; defaults to ``pi d^2 / 4`` and must agree with
        it within 1 % when given.
    friction : float
        Constant Darcy friction factor.
    sound_speed_sq : float
        Squared isothermal speed of sound in m^2/s^2.
    mesh : float
        Grid spacing in metres.
    """

    length: float
    diameter: float
    area: float = None
    friction: float = 0.011
    sound_speed_sq: float = 140000.0
    mesh: float = 100.0

    def __post_init__(self):
        nominal = np.pi * self.diameter**2 / 4
        if self.area is None:
            object.__setattr__(self, "area", float(nominal))
        for name in ("length", "diameter", "area", "friction", "sound_speed_sq", "mesh"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.mesh > self.length:
            raise ValueError(f"mesh {self.mesh} exceeds pipe length {self.length}")
        if abs(self.area - nominal) > 0.01 * nominal:
            raise ValueError(
                f"area {self.area} inconsistent with diameter {self.diameter} (pi d^2/4 = {nominal:.6g})")


@dataclass(frozen=True, eq=False)
class PipelineModel:
    """Discretized pipe; see the module docstring for the block equations."""

    spec: GasPipelineSpec
    scheme: str
    n: int
    h: np.ndarray
    areas: np.ndarray
    M_p: np.ndarray
    M_q: np.ndarray
    K_pq: np.ndarray
    K_qp: np.ndarray
    B_p: np.ndarray
    B_q: np.ndarray
    friction_weights: np.ndarray

    @property
    def cells(self):
        return self.n - 1

    @property
    def dim(self):
        return 2 * (self.n - 1)

    def system(self):
        """Single-pipe ``(E, A, B)``; state ``[p, q]``, inputs ``[p_s, q_d]``."""
        m = self.cells
        E = sla.block_diag(self.M_p, self.M_q)
        Z = np.zeros((m, m))
        A = np.block([[Z, self.K_pq], [self.K_qp, Z]])
        B = np.zeros((2 * m, 2))
        B[m:, 0] = self.B_p
        B[:m, 1] = self.B_q
        return E, A, B


def grid_points(spec):
    ratio = spec.length / spec.mesh
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"length/mesh = {ratio!r} is not integral")
    if n - 1 < 2:
        raise ValueError("mesh too coarse for FVM stencil")
    return n


def _fvm_blocks(spec):
    n = grid_points(spec)
    m = n - 1
    c = spec.sound_speed_sq
    h = np.full(m, float(spec.mesh))
    a = np.full(m, float(spec.area))

    M_p = np.zeros((m, m))
    M_q = np.zeros((m, m))
    for i in range(m - 1):
        M_p[i, i] = (h[i] + h[i + 1]) / 2
    M_p[m - 1, m - 2] = h[m - 1] / 8
    M_p[m - 1, m - 1] = 3 * h[m - 1] / 8
    M_q[0, 0] = 3 * h[0] / 8
    M_q[0, 1] = h[0] / 8
    for i in range(1, m):
        M_q[i, i] = (h[i - 1] + h[i]) / 2

    K_pq = np.zeros((m, m))
    for i in range(m - 1):
        K_pq[i, i] = -1 / a[i]
        K_pq[i, i + 1] = 1 / a[i] - 1 / a[i + 1]
        if i + 2 < m:
            K_pq[i, i + 2] = 1 / a[i + 1]
    K_pq[m - 1, m - 1] = -1 / a[m - 1]
    K_pq *= -c / 2

    K_qp = np.zeros((m, m))
    K_qp[0, 0] = a[0]
    for i in range(1, m):
        K_qp[i, i] = a[i]
        K_qp[i, i - 1] = a[i - 1] - a[i]
        if i >= 2:
            K_qp[i, i - 2] = -a[i - 1]
    K_qp *= -0.5

    B_p = np.zeros(m)
    B_p[0] = B_p[1] = a[0] / 2
    B_q = np.zeros(m)
    B_q[m - 2] = B_q[m - 1] = -c / a[m - 1] / 2

    lam, d = spec.friction, spec.diameter
    w = h * lam / (a * d)
    weights = w.copy()
    weights[1:] += w[:-1]
    weights *= -c / 4
    return n, h, a, M_p, M_q, K_pq, K_qp, B_p, B_q, weights


def discretize_pipeline_fvm(spec):
    """Finite-volume model of one pipe.

    Raises
    ------
    ValueError
        Non-integral ``length/mesh`` or fewer than two cells.
    """
    n, h, a, M_p, M_q, K_pq, K_qp, B_p, B_q, w = _fvm_blocks(spec)
    return PipelineModel(spec, "fvm", n, h, a, M_p, M_q, K_pq, K_qp, B_p, B_q, w)


def discretize_pipeline_fdm(spec):
    """Finite-difference variant with identity mass matrices.

    The two coupled mass rows are lumped onto their diagonal, then every
    row of the coupling, boundary and friction data is divided by the
    resulting diagonal entry.
    """
    n, h, a, M_p, M_q, K_pq, K_qp, B_p, B_q, w = _fvm_blocks(spec)
    dp = M_p.sum(axis=1)
    dq = M_q.sum(axis=1)
    m = n - 1
    return PipelineModel(
        spec, "fdm", n, h, a, np.eye(m), np.eye(m),
        K_pq / dp[:, None], K_qp / dq[:, None], B_p / dq, B_q / dp, w / dq,
    )


def discretize_pipeline(spec, scheme="fvm"):
    if scheme == "fvm":
        return discretize_pipeline_fvm(spec)
    if scheme == "fdm":
        return discretize_pipeline_fdm(spec)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def friction_vector(model, p_s, p, q):
    """Friction losses ``w_i q_i |q_i| / p_{i-1}`` with ``p_0 = p_s``.

    The formula is homogeneous in pressure, so any consistent unit works;
    assembled networks evaluate it in Pa.

    Raises
    ------
    NonphysicalPressureError
        Some pressure is not strictly positive; ``index`` is the offending
        entry (0 refers to ``p_s``).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = model.cells
    if p.shape != (m,) or q.shape != (m,):
        raise DimensionError(f"p and q must have length {m}")
    pp = np.concatenate([[float(p_s)], p[:-1]])
    bad = np.flatnonzero(~(pp > 0))
    if bad.size:
        raise NonphysicalPressureError(
            f"nonphysical pressure {pp[bad[0]]!r} at index {bad[0]}", index=int(bad[0]))
    return model.friction_weights * q * np.abs(q) / pp


# ------------------------------------------------------------------ networks

NODE_KINDS = ("supply", "demand", "junction")


@dataclass(frozen=True)
class GasNode:
    """Network node; supply nodes carry ``pressure`` (bar), demand nodes ``flow`` (kg/s)."""

    name: str
    kind: str
    pressure: float = None
    flow: float = None


@dataclass(frozen=True)
class GasEdge:
    name: str
    source: str
    target: str
    spec: GasPipelineSpec


@dataclass(frozen=True)
class GasTopology:
    nodes: tuple
    edges: tuple
    scheme: str = "fvm"
    meta: dict = field(default_factory=dict)


def single_pipe(spec, supply_pressure=50.0, demand_flow=30.0, scheme="fvm"):
    """Topology with one supply, one pipe and one demand."""
    return GasTopology(
        nodes=(GasNode("in", "supply", pressure=supply_pressure),
               GasNode("out", "demand", flow=demand_flow)),
        edges=(GasEdge("pipe", "in", "out", spec),),
        scheme=scheme,
    )


def fork_network(spec, supply_pressures=(50.0, 50.0), demand_flow=30.0, scheme="fvm"):
    """Two supply pipes joining at one junction that feeds a demand pipe."""
    return GasTopology(
        nodes=(GasNode("s1", "supply", pressure=supply_pressures[0]),
               GasNode("s2", "supply", pressure=supply_pressures[1]),
               GasNode("j", "junction"),
               GasNode("d", "demand", flow=demand_flow)),
        edges=(GasEdge("p1", "s1", "j", spec),
               GasEdge("p2", "s2", "j", spec),
               GasEdge("p3", "j", "d", spec)),
        scheme=scheme,
    )


def _validate(topo):
    names = [nd.name for nd in topo.nodes]
    if len(set(names)) != len(names):
        raise TopologyError("duplicate node name")
    if len({e.name for e in topo.edges}) != len(topo.edges):
        raise TopologyError("duplicate edge name")
    if not topo.edges:
        raise TopologyError("network has no edges")
    kinds = {nd.name: nd.kind for nd in topo.nodes}
    for nd in topo.nodes:
        if nd.kind not in NODE_KINDS:
            raise TopologyError(f"node {nd.name!r} has unknown kind {nd.kind!r}")
        if nd.kind == "supply" and nd.pressure is None:
            raise TopologyError(f"supply node {nd.name!r} needs a pressure")
        if nd.kind == "demand" and nd.flow is None:
            raise TopologyError(f"demand node {nd.name!r} needs a flow")
    inc = {nm: [] for nm in names}
    out = {nm: [] for nm in names}
    for k, e in enumerate(topo.edges):
        for end in (e.source, e.target):
            if end not in kinds:
                raise TopologyError(f"edge {e.name!r} references undeclared node {end!r}")
        if e.source == e.target:
            raise TopologyError(f"edge {e.name!r} is a self-loop")
        out[e.source].append(k)
        inc[e.target].append(k)
    for nm, kind in kinds.items():
        deg = len(inc[nm]) + len(out[nm])
        if deg == 0:
            raise TopologyError(f"node {nm!r} is isolated")
        if kind == "junction":
            if deg == 2:
                raise TopologyError(
                    f"junction {nm!r} has degree 2; contract it by merging its two pipes into one edge")
            if deg < 3:
                raise TopologyError(f"junction {nm!r} touches {deg} edge(s); at least 3 required")
            if not out[nm]:
                raise TopologyError(f"junction {nm!r} has no outgoing edge")
            if not inc[nm]:
                raise TopologyError(f"junction {nm!r} has no incoming edge")
        elif kind == "supply":
            if inc[nm]:
                raise TopologyError(f"supply node {nm!r} has incoming edges")
        elif kind == "demand":
            if out[nm]:
                raise TopologyError(f"demand node {nm!r} has outgoing edges")
            if len(inc[nm]) != 1:
                raise TopologyError(f"demand node {nm!r} must have exactly one incoming edge")
    # connectivity on the undirected graph
    adj = {nm: set() for nm in names}
    for e in topo.edges:
        adj[e.source].add(e.target)
        adj[e.target].add(e.source)
    seen = {names[0]}
    todo = deque([names[0]])
    while todo:
        for nb in adj[todo.popleft()]:
            if nb not in seen:
                seen.add(nb)
                todo.append(nb)
    if len(seen) != len(names):
        missing = sorted(set(names) - seen)
        raise TopologyError(f"network is disconnected; unreachable nodes: {missing}")
    # edges in topological order (cycles rejected)
    indeg = {nm: len(inc[nm]) for nm in names}
    order = []
    ready = deque(nm for nm in names if indeg[nm] == 0)
    while ready:
        nm = ready.popleft()
        for k in out[nm]:
            order.append(k)
            t = topo.edges[k].target
            indeg[t] -= 1
            if indeg[t] == 0:
                ready.append(t)
    if len(order) != len(topo.edges):
        raise TopologyError("network contains a directed cycle")
    return kinds, inc, out, order


def assemble_gas_network(topo):
    """Assemble a :class:`~netmor.dae.UnifiedDae` for a gas network.

    State layout: ``[p, q]`` of each pipe in edge order, followed by one
    algebraic outlet-flow variable per pipe that ends in a junction.  Inputs
    are supply pressures (Pa) then demand flows (kg/s); outputs are
    demand-node pressures (Pa) then supply-node flows (kg/s).

    Raises
    ------
    TopologyError
        Invalid graph (degree-2 junction, disconnected, dangling junction,
        undeclared endpoint, cycle).
    """
    if topo.scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {topo.scheme!r}")
    kinds, inc, out, order = _validate(topo)
    models = [discretize_pipeline(e.spec, topo.scheme) for e in topo.edges]
    offsets = np.cumsum([0] + [md.dim for md in models])
    n_pipe = int(offsets[-1])

    supplies = [nd for nd in topo.nodes if nd.kind == "supply"]
    demands = [nd for nd in topo.nodes if nd.kind == "demand"]
    junctions = [nd for nd in topo.nodes if nd.kind == "junction"]
    u_index = {nd.name: i for i, nd in enumerate(supplies)}
    u_index.update({nd.name: len(supplies) + i for i, nd in enumerate(demands)})
    alg_var = {}
    for nd in junctions:
        for k in inc[nd.name]:
            alg_var[k] = n_pipe + len(alg_var)
    N = n_pipe + len(alg_var)
    m_in = len(supplies) + len(demands)

    E = np.zeros((N, N))
    A = np.zeros((N, N))
    B = np.zeros((N, m_in))

    def p_slice(k):
        return slice(offsets[k], offsets[k] + models[k].cells)

    def q_slice(k):
        return slice(offsets[k] + models[k].cells, offsets[k + 1])

    def outlet_p(k):
        return offsets[k] + models[k].cells - 1

    def inlet_q(k):
        return offsets[k] + models[k].cells

    def junction_pressure(name):
        return outlet_p(inc[name][0])

    rows, q_idx, p_kind, p_idx, p_scale, coef = [], [], [], [], [], []
    for k, (e, md) in enumerate(zip(topo.edges, models)):
        sl = slice(offsets[k], offsets[k + 1])
        Ek, Ak, _ = md.system()
        E[sl, sl] = Ek
        A[sl, sl] = Ak
        ps, qs = p_slice(k), q_slice(k)
        # inlet pressure
        if kinds[e.source] == "supply":
            B[qs, u_index[e.source]] = md.B_p
            first = (P_INPUT, u_index[e.source], 1.0)
        else:
            A[qs, junction_pressure(e.source)] += md.B_p
            first = (P_STATE, junction_pressure(e.source), 1.0)
        # outlet flow
        if kinds[e.target] == "demand":
            B[ps, u_index[e.target]] = md.B_q
        else:
            A[ps, alg_var[k]] += md.B_q
        m = md.cells
        for i in range(m):
            rows.append(qs.start + i)
            q_idx.append(qs.start + i)
            coef.append(md.friction_weights[i])
            if i == 0:
                kd, idx, sc = first
            else:
                kd, idx, sc = P_STATE, ps.start + i - 1, 1.0
            p_kind.append(kd)
            p_idx.append(idx)
            p_scale.append(sc)

    # junction constraints: flow balance first, then pressure equalities
    balance_rows = []
    row = n_pipe
    for nd in junctions:
        ins = inc[nd.name]
        for k in ins:
            A[row, alg_var[k]] = 1.0
        for k in out[nd.name]:
            A[row, inlet_q(k)] = -1.0
        balance_rows.append(row)
        row += 1
        for k in ins[1:]:
            A[row, outlet_p(ins[0])] = 1.0
            A[row, outlet_p(k)] = -1.0
            row += 1

    C = np.zeros((len(demands) + len(supplies), N))
    for i, nd in enumerate(demands):
        C[i, outlet_p(inc[nd.name][0])] = 1.0
    for i, nd in enumerate(supplies):
        for k in out[nd.name]:
            C[len(demands) + i, inlet_q(k)] = 1.0

    u0 = np.array([nd.pressure * BAR for nd in supplies] + [nd.flow for nd in demands], dtype=float)
    x0 = _initial_state(topo, models, offsets, kinds, inc, out, order, alg_var, N)
    G = QuadraticTerm(N, m_in, rows, q_idx, p_kind, p_idx, p_scale, coef)
    meta = dict(
        domain="gas", scheme=topo.scheme, offsets=tuple(int(o) for o in offsets),
        balance_rows=tuple(balance_rows), edge_names=tuple(e.name for e in topo.edges),
        pressure_scale=BAR,
    )
    return make_dae(
        E, A, B, C, G, x0=x0, u0=u0,
        input_names=[f"p[{nd.name}]" for nd in supplies] + [f"q[{nd.name}]" for nd in demands],
        output_names=[f"p[{nd.name}]" for nd in demands] + [f"q[{nd.name}]" for nd in supplies],
        meta=meta,
    )


def _initial_state(topo, models, offsets, kinds, inc, out, order, alg_var, N):
    """Supply pressure everywhere downstream, flows split evenly toward demands."""
    nodes = {nd.name: nd for nd in topo.nodes}
    flow = np.zeros(len(topo.edges))
    for k in reversed(order):
        t = topo.edges[k].target
        if kinds[t] == "demand":
            flow[k] = nodes[t].flow
        else:
            flow[k] = sum(flow[j] for j in out[t]) / len(inc[t])
    pressure = np.zeros(len(topo.edges))
    for k in order:
        s = topo.edges[k].source
        pressure[k] = nodes[s].pressure if kinds[s] == "supply" else pressure[inc[s][0]]
    x0 = np.zeros(N)
    for k, md in enumerate(models):
        o, m = offsets[k], md.cells
        x0[o:o + m] = pressure[k] * BAR
        x0[o + m:o + 2 * m] = flow[k]
    for k, idx in alg_var.items():
        x0[idx] = flow[k]
    return x0
