import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmor.errors import NonphysicalPressureError, TopologyError
from netmor.gas import (BAR, GasEdge, GasNode, GasPipelineSpec, GasTopology, assemble_gas_network,
                        discretize_pipeline_fdm, discretize_pipeline_fvm, fork_network,
                        friction_vector, single_pipe)
from netmor.integrator import StepperConfig, simulate

TABLE1 = GasPipelineSpec(length=1000.0, diameter=1.0, area=0.7854, mesh=100.0)


# ------------------------------------------------------------ discretization

def test_table1_grid_size():
    md = discretize_pipeline_fvm(TABLE1)
    assert md.n == 10
    assert md.dim == 18


def test_uniform_area_middle_band_vanishes():
    md = discretize_pipeline_fvm(TABLE1)
    m = md.cells
    assert all(md.K_pq[i, i + 1] == 0.0 for i in range(m - 1))
    assert all(md.K_qp[i, i - 1] == 0.0 for i in range(1, m))


def test_table1_mass_matrix_boundary_rows():
    md = discretize_pipeline_fvm(TABLE1)
    assert md.M_q[0, :2].tolist() == [37.5, 12.5]
    assert not md.M_q[0, 2:].any()
    assert md.M_p[-1, -2:].tolist() == [12.5, 37.5]
    assert not md.M_p[-1, :-2].any()


def test_fdm_mass_matrix_is_identity():
    md = discretize_pipeline_fdm(TABLE1)
    E, _, _ = md.system()
    assert md.scheme == "fdm"
    np.testing.assert_array_equal(E, np.eye(18))
    dae = assemble_gas_network(single_pipe(TABLE1, scheme="fdm"))
    assert dae.diff_mask.all()


def test_area_defaults_to_circle():
    spec = GasPipelineSpec(length=1000.0, diameter=1.0)
    assert spec.area == pytest.approx(np.pi / 4)


@pytest.mark.parametrize("kwargs, msg", [
    (dict(length=1000.0, diameter=1.0, area=0.5), "inconsistent"),
    (dict(length=1000.0, diameter=1.0, mesh=2000.0), "exceeds"),
    (dict(length=-1.0, diameter=1.0), "positive"),
])
def test_spec_validation(kwargs, msg):
    with pytest.raises(ValueError, match=msg):
        GasPipelineSpec(**kwargs)


def test_grid_errors():
    with pytest.raises(ValueError, match="not integral"):
        discretize_pipeline_fvm(GasPipelineSpec(length=1000.0, diameter=1.0, mesh=300.0))
    with pytest.raises(ValueError, match="too coarse"):
        discretize_pipeline_fvm(GasPipelineSpec(length=1000.0, diameter=1.0, mesh=500.0))


# ------------------------------------------------------------------ friction

def test_friction_zero_flow():
    md = discretize_pipeline_fvm(TABLE1)
    assert not friction_vector(md, 50.0, np.full(9, 50.0), np.zeros(9)).any()


def test_friction_is_odd():
    md = discretize_pipeline_fvm(TABLE1)
    rng = np.random.default_rng(1)
    p, q = 40 + rng.random(9), rng.standard_normal(9) * 30
    np.testing.assert_array_equal(friction_vector(md, 50.0, p, -q), -friction_vector(md, 50.0, p, q))


def test_friction_table1_hand_value():
    md = discretize_pipeline_fvm(TABLE1)
    g = friction_vector(md, 50.0, np.full(9, 50.0), np.full(9, 30.0))
    # -(c/4) h lam / (a d) q^2 / p, doubled for cells that share two faces
    first = -882352.9411764706
    assert g[0] == pytest.approx(first, rel=1e-13)
    np.testing.assert_allclose(g[1:], 2 * first, rtol=1e-13)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), seed=st.integers(0, 2**31 - 1))
def test_friction_degree_two_homogeneity(alpha, seed):
    md = discretize_pipeline_fvm(TABLE1)
    rng = np.random.default_rng(seed)
    p, q = 10 + 40 * rng.random(9), 50 * rng.standard_normal(9)
    ref = alpha**2 * friction_vector(md, 50.0, p, q)
    got = friction_vector(md, 50.0, p, alpha * q)
    assert np.abs(got - ref).max() <= 1e-12 * max(1.0, np.abs(ref).max())


def test_friction_rejects_nonpositive_pressure():
    md = discretize_pipeline_fvm(TABLE1)
    p = np.full(9, 50.0)
    p[3] = 0.0
    with pytest.raises(NonphysicalPressureError) as exc:
        friction_vector(md, 50.0, p, np.ones(9))
    assert exc.value.index == 4
    with pytest.raises(NonphysicalPressureError) as exc:
        friction_vector(md, -1.0, np.full(9, 50.0), np.ones(9))
    assert exc.value.index == 0


@settings(max_examples=40, deadline=None)
@given(cells=st.integers(2, 30), mesh=st.floats(10.0, 500.0), diameter=st.floats(0.1, 2.0),
       c2=st.floats(1e4, 2e5), pressure=st.floats(1e5, 1e7))
def test_constant_pressure_zero_flow_is_linear_equilibrium(cells, mesh, diameter, c2, pressure):
    spec = GasPipelineSpec(length=mesh * (cells + 1), diameter=diameter, mesh=mesh, sound_speed_sq=c2)
    md = discretize_pipeline_fvm(spec)
    _, A, B = md.system()
    m = md.cells
    x = np.concatenate([np.full(m, pressure), np.zeros(m)])
    r = A @ x + B @ np.array([pressure, 0.0])
    scale = np.abs(A).max() * pressure
    assert np.abs(r).max() <= 1e-12 * scale


# ------------------------------------------------------------------ networks

def test_single_pipe_assembly():
    dae = assemble_gas_network(single_pipe(TABLE1))
    assert dae.n == 18
    assert dae.diff_mask.all()
    assert abs(np.linalg.det(dae.E)) > 0
    assert dae.output_names == ("p[out]", "q[in]")
    assert dae.u0.tolist() == [50 * BAR, 30.0]


def test_fork_dimensions_and_algebraic_rows():
    dae = assemble_gas_network(fork_network(TABLE1))
    assert dae.n == 3 * 18 + 2
    zero_rows = np.flatnonzero(~np.any(dae.E != 0, axis=1))
    assert zero_rows.tolist() == list(range(54, 56))
    assert (~dae.diff_mask).sum() == 2
    assert dae.meta["balance_rows"] == (54,)


def test_fork_constraints_hold_along_trajectory():
    dae = assemble_gas_network(fork_network(TABLE1))
    res = simulate(dae, cfg=StepperConfig(tau=0.5, max_iter=300, stop_on_settle=False))
    rows = ~dae.diff_mask
    R = res.states @ dae.A[rows].T + res.inputs @ dae.B[rows].T
    # the balance row is a flow balance; the other row equates pressures in Pa
    assert np.abs(R[:, 0]).max() <= 1e-10
    assert np.abs(R[:, 1]).max() <= 1e-10 * 50 * BAR


def test_fvm_fdm_steady_states_agree():
    cfg = StepperConfig(tau=0.5, max_iter=5000)
    a = simulate(assemble_gas_network(single_pipe(TABLE1, scheme="fvm")), cfg=cfg)
    b = simulate(assemble_gas_network(single_pipe(TABLE1, scheme="fdm")), cfg=cfg)
    assert a.settled and b.settled
    rel = np.abs(a.final_state - b.final_state) / np.maximum(np.abs(a.final_state), 1.0)
    assert rel.max() <= 1e-6


# ------------------------------------------------------------------ topology

def _topo(nodes, edges):
    return GasTopology(nodes=tuple(nodes), edges=tuple(GasEdge(n, s, t, TABLE1) for n, s, t in edges))


def test_degree_two_junction_is_rejected():
    topo = _topo([GasNode("s", "supply", pressure=50.0), GasNode("j", "junction"),
                  GasNode("d", "demand", flow=30.0)],
                 [("a", "s", "j"), ("b", "j", "d")])
    with pytest.raises(TopologyError, match="contract"):
        assemble_gas_network(topo)


@pytest.mark.parametrize("nodes, edges, msg", [
    ([("s", "supply"), ("d", "demand"), ("x", "demand")], [("a", "s", "d")], "isolated"),
    ([("s", "supply"), ("d", "demand")], [("a", "s", "zz")], "undeclared"),
    ([("s", "supply"), ("t", "supply"), ("d", "demand")], [("a", "s", "d"), ("b", "d", "t")],
     "has incoming edges"),
    ([("s", "supply"), ("d", "demand")], [("a", "d", "s")], "outgoing|incoming"),
    ([("s", "supply"), ("d", "demand"), ("t", "supply"), ("e", "demand")],
     [("a", "s", "d"), ("b", "t", "e")], "disconnected"),
    ([("s", "supply"), ("j", "junction"), ("k", "junction"), ("d", "demand")],
     [("a", "s", "j"), ("b", "j", "k"), ("c", "k", "j"), ("e", "k", "d")], "cycle"),
])
def test_topology_errors(nodes, edges, msg):
    kinds = {"supply": dict(pressure=50.0), "demand": dict(flow=30.0), "junction": {}}
    topo = _topo([GasNode(n, k, **kinds[k]) for n, k in nodes], edges)
    with pytest.raises(TopologyError, match=msg):
        assemble_gas_network(topo)
