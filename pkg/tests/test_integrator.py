import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmor.config import build_model, parse_config_text, serialize_config
from netmor.dae import make_dae
from netmor.errors import DivergenceError, NonphysicalPressureError, SingularPencilError
from netmor.integrator import StepperConfig, factorize, simulate, steady_state_residual, step

BAR = 1e5


def scalar_decay():
    return make_dae([[1.0]], [[-1.0]], [[1.0]], [[1.0]], x0=[1.0], u0=[0.0])


def fixed_horizon(dae, tau, horizon, **kw):
    n = int(round(horizon / tau))
    return simulate(dae, cfg=StepperConfig(tau=tau, max_iter=n, stop_on_settle=False, record_every=n), **kw)


# -------------------------------------------------------------------- step

def test_scalar_step():
    assert step(scalar_decay(), np.array([1.0]), np.array([0.0]), 1.0)[0] == pytest.approx(0.5, abs=1e-15)


def test_linear_equilibrium_is_fixed_point():
    rng = np.random.default_rng(3)
    E = np.diag([1.0, 2.0, 0.0])
    A = rng.standard_normal((3, 3)) - 3 * np.eye(3)
    B = rng.standard_normal((3, 2))
    dae = make_dae(E, A, B, np.eye(3))
    u = np.array([0.3, -1.2])
    xs = np.linalg.solve(A, -B @ u)
    np.testing.assert_allclose(step(dae, xs, u, 0.7), xs, rtol=1e-13, atol=1e-13)


def test_cached_factorization_is_bit_identical(table1_dae):
    x, u = table1_dae.x0, table1_dae.u0
    fac = factorize(table1_dae, 0.5)
    a = step(table1_dae, x, u, 0.5)
    b = step(table1_dae, x, u, 0.5, factorization=fac)
    np.testing.assert_array_equal(a, b)


def test_factorization_reports_singular_step_matrix():
    dae = make_dae([[1.0]], [[1.0]], [[1.0]], [[1.0]])
    with pytest.raises(SingularPencilError, match="tau"):
        factorize(dae, 1.0)


def test_factorization_rejects_other_step():
    dae = scalar_decay()
    with pytest.raises(ValueError):
        step(dae, np.array([1.0]), np.array([0.0]), 0.5, factorization=factorize(dae, 0.25))


# ---------------------------------------------------------------- simulate

def test_gas_step_size_against_fine_reference(table1_dae):
    coarse = fixed_horizon(table1_dae, 0.5, 50.0)
    fine = fixed_horizon(table1_dae, 0.001, 50.0)
    yc, yf = coarse.outputs[-1], fine.outputs[-1]
    assert np.all(np.abs(yc - yf) <= 0.01 * np.abs(yf))


def test_gas_settles_to_demand(table1_dae):
    res = simulate(table1_dae, cfg=StepperConfig(tau=0.5, max_iter=2000))
    p_out, q_in = res.outputs[-1]
    assert res.settled
    assert q_in == pytest.approx(30.0, rel=1e-3)
    assert p_out < 50 * BAR


def test_zero_demand_settles_to_supply_pressure(table1_cfg):
    text = serialize_config(table1_cfg).replace("node.out.flow = 30.0", "node.out.flow = 0.0")
    dae = build_model(parse_config_text(text))
    res = simulate(dae, cfg=StepperConfig(tau=0.5, max_iter=2000))
    np.testing.assert_allclose(res.final_state[:9], 50 * BAR, rtol=1e-12)
    np.testing.assert_allclose(res.final_state[9:], 0.0, atol=1e-9)


def test_record_every_and_final_state(table1_dae):
    res = simulate(table1_dae, cfg=StepperConfig(tau=0.5, max_iter=25, record_every=10, stop_on_settle=False))
    assert res.steps == 25
    np.testing.assert_array_equal(res.t, [0.0, 5.0, 10.0])
    assert res.states.shape == (3, 18) and res.outputs.shape == (3, 2)
    full = simulate(table1_dae, cfg=StepperConfig(tau=0.5, max_iter=25, stop_on_settle=False))
    np.testing.assert_allclose(res.final_state, full.states[-1], rtol=1e-14)


def test_backends_agree(table1_dae, fork_dae):
    cfg = StepperConfig(tau=0.5, max_iter=200, stop_on_settle=False)
    for dae in (table1_dae, fork_dae):
        a = simulate(dae, cfg=cfg, use_numba=True)
        b = simulate(dae, cfg=cfg, use_numba=False)
        c = simulate(dae, u=lambda t: dae.u0, cfg=cfg)
        assert (a.backend, b.backend, c.backend) == ("numba", "numpy", "python")
        scale = np.abs(a.states).max()
        assert np.abs(a.states - b.states).max() <= 1e-12 * scale
        assert np.abs(a.states - c.states).max() <= 1e-12 * scale


def test_time_dependent_input(table1_dae):
    u0 = table1_dae.u0

    def u(t):
        return u0 if t < 10 else np.array([u0[0], 20.0])

    res = simulate(table1_dae, u=u, cfg=StepperConfig(tau=0.5, max_iter=4000))
    assert res.outputs[-1, 1] == pytest.approx(20.0, rel=1e-3)
    assert res.inputs[0, 1] == 30.0 and res.inputs[-1, 1] == 20.0


def test_divergence_is_reported():
    dae = make_dae([[1.0]], [[1.0]], [[0.0]], [[1.0]], x0=[1.0], u0=[0.0])
    with pytest.raises(DivergenceError) as exc:
        simulate(dae, cfg=StepperConfig(tau=0.5, max_iter=5000))
    assert exc.value.step > 1000


def test_nonphysical_pressure_is_reported(table1_dae):
    x0 = np.array(table1_dae.x0)
    x0[:9] = -1.0
    with pytest.raises(NonphysicalPressureError):
        simulate(table1_dae, x0=x0, cfg=StepperConfig(max_iter=5))


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(tau=0.0)
    with pytest.raises(ValueError):
        StepperConfig(max_iter=0)


# -------------------------------------------------------- steady residual

def test_residual_zero_at_scalar_equilibrium():
    dae = make_dae([[1.0]], [[-2.0]], [[1.0]], [[1.0]])
    assert steady_state_residual(dae, np.array([0.5]), np.array([1.0])) == 0.0


def test_residual_small_after_settling(table1_dae):
    cfg = StepperConfig(tau=0.5, max_iter=2000)
    res = simulate(table1_dae, cfg=cfg)
    assert steady_state_residual(table1_dae, res.final_state, table1_dae.u0) <= 10 * cfg.settle_tol


def test_residual_positive_off_equilibrium(table1_dae):
    x = np.random.default_rng(0).random(18) * 1e6 + 1e5
    assert steady_state_residual(table1_dae, x, table1_dae.u0) > 0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_linear_fixed_point_consistency(seed):
    rng = np.random.default_rng(seed)
    n = 5
    E = np.diag([1.0, 1.0, 1.0, 0.0, 0.0])
    M = rng.standard_normal((n, n))
    A = -(M @ M.T + n * np.eye(n))
    B = rng.standard_normal((n, 2))
    dae = make_dae(E, A, B, np.eye(n))
    u = rng.standard_normal(2)
    res = simulate(dae, x0=np.zeros(n), u=u, cfg=StepperConfig(tau=0.5, max_iter=5000, settle_tol=1e-14))
    r = A @ res.final_state + B @ u
    assert np.abs(r).max() <= 1e-9 * max(1.0, np.abs(B @ u).max())


# -------------------------------------------------------- self-convergence

def test_observed_order_under_halving(table1_dae):
    taus = [0.01 / 2**k for k in range(4)]
    xs = [fixed_horizon(table1_dae, t, 10.0).final_state for t in taus]
    d = [np.linalg.norm(xs[k] - xs[k + 1]) for k in range(3)]
    orders = [np.log2(d[k] / d[k + 1]) for k in range(2)]
    assert min(orders) >= 0.8
