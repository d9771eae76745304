import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, numeric_columns
from netmor.dae import (LinearPart, eval_transfer, finite_eigenvalues, linearize, make_dae,
                        sigma_max_sweep, transfer_sample)
from netmor.errors import DimensionError, SingularPencilError, SingularShiftError
from netmor.terms import full_jacobian

SCALAR = LinearPart(E=[[1.0]], A=[[-1.0]], B=[[1.0]], C=[[1.0]])


def random_system(seed, n=5, m=2, p=3, descriptor=False):
    rng = np.random.default_rng(seed)
    E = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    if descriptor:
        E[-1] = 0.0
    A = rng.standard_normal((n, n)) - 3 * np.eye(n)
    return LinearPart(E, A, rng.standard_normal((n, m)), rng.standard_normal((p, n)))


# ----------------------------------------------------------- construction

def test_make_dae_identity_case():
    dae = make_dae(np.eye(2), -np.eye(2), [[1.0], [0.0]], [[1.0, 0.0]])
    assert dae.n == 2 and dae.m == 1 and dae.p == 1
    assert dae.diff_mask.tolist() == [True, True]


def test_make_dae_zero_row_forces_algebraic_flag():
    dae = make_dae(np.diag([1.0, 0.0]), -np.eye(2), [[1.0], [1.0]], [[1.0, 1.0]])
    assert dae.diff_mask.tolist() == [True, False]


def test_make_dae_rejects_degenerate_pencil():
    with pytest.raises(SingularPencilError, match="singular pencil"):
        make_dae(np.zeros((2, 2)), np.zeros((2, 2)), [[1.0], [0.0]], [[1.0, 0.0]])


def test_make_dae_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        make_dae(np.eye(2), -np.eye(3), [[1.0], [0.0]], [[1.0, 0.0]])
    with pytest.raises(DimensionError):
        make_dae(np.eye(2), -np.eye(2), [[1.0], [0.0], [2.0]], [[1.0, 0.0]])
    with pytest.raises(DimensionError):
        make_dae(np.eye(2), -np.eye(2), [[1.0], [0.0]], [[1.0, 0.0]], D=np.zeros((2, 2)))


def test_dae_arrays_are_read_only():
    E = np.eye(2)
    dae = make_dae(E, -np.eye(2), [[1.0], [0.0]], [[1.0, 0.0]])
    E[0, 0] = 5.0
    assert dae.E[0, 0] == 1.0
    with pytest.raises(ValueError):
        dae.A[0, 0] = 1.0


# --------------------------------------------------------------- transfer

def test_transfer_scalar_at_zero():
    assert eval_transfer(SCALAR, 0.0)[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_transfer_scalar_at_one():
    assert eval_transfer(SCALAR, 1.0)[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_transfer_at_pole_raises():
    with pytest.raises(SingularShiftError) as exc:
        eval_transfer(SCALAR, -1.0)
    assert exc.value.s == -1.0


def test_transfer_sample_record():
    smp = transfer_sample(SCALAR, 1.0)
    assert smp.s == 1.0 and smp.H.shape == (1, 1)


def test_transfer_matches_golden(table1_lin):
    _, data = numeric_columns(GOLDEN / "transfer_table1.csv")
    H = eval_transfer(table1_lin, 1e-2j)
    for i, j, re, im in data:
        got = H[int(i), int(j)]
        assert got == pytest.approx(complex(re, im), rel=1e-10, abs=1e-12 * np.abs(H).max())


# ------------------------------------------------------------------ sweep

def test_sweep_scalar():
    ((w, s),) = sigma_max_sweep(SCALAR, [1.0])
    assert w == 1.0 and s == pytest.approx(1 / np.sqrt(2), rel=1e-14)


def test_sweep_rejects_empty_grid():
    with pytest.raises(ValueError, match="empty frequency grid"):
        sigma_max_sweep(SCALAR, [])


def test_sweep_rejects_unordered_grid():
    with pytest.raises(ValueError):
        sigma_max_sweep(SCALAR, [2.0, 1.0])
    with pytest.raises(ValueError):
        sigma_max_sweep(SCALAR, [-1.0, 1.0])


def test_sweep_matches_golden(table1_lin):
    _, data = numeric_columns(GOLDEN / "sweep_table1.csv")
    out = sigma_max_sweep(table1_lin, data[:, 0])
    w = np.array([o[0] for o in out])
    s = np.array([o[1] for o in out])
    assert len(out) == 200
    assert np.all(np.diff(w) > 0)
    np.testing.assert_allclose(s, data[:, 1], rtol=1e-9)


# ------------------------------------------------------------- invariants

@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), re=st.floats(-5, 5), im=st.floats(0.01, 50),
       descriptor=st.booleans())
def test_transfer_conjugate_symmetry(seed, re, im, descriptor):
    lin = random_system(seed, descriptor=descriptor)
    s = complex(re, im)
    try:
        H = eval_transfer(lin, s)
    except SingularShiftError:
        return
    Hc = eval_transfer(lin, s.conjugate())
    assert np.abs(Hc - np.conj(H)).max() <= 1e-12 * max(1.0, np.abs(H).max())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s1=st.complex_numbers(max_magnitude=10),
       s2=st.complex_numbers(max_magnitude=10))
def test_resolvent_identity(seed, s1, s2):
    lin = random_system(seed)
    R1 = np.linalg.inv(s1 * lin.E - lin.A)
    R2 = np.linalg.inv(s2 * lin.E - lin.A)
    if max(np.linalg.cond(s1 * lin.E - lin.A), np.linalg.cond(s2 * lin.E - lin.A)) > 1e6:
        return
    lhs = R1 - R2
    rhs = (s2 - s1) * R1 @ lin.E @ R2
    assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(R1).max() * np.abs(R2).max())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), zero_rows=st.sets(st.integers(0, 4), max_size=2))
def test_diff_mask_matches_zero_rows(seed, zero_rows):
    rng = np.random.default_rng(seed)
    E = np.eye(5) + 0.1 * rng.standard_normal((5, 5))
    E[list(zero_rows)] = 0.0
    A = rng.standard_normal((5, 5)) - 4 * np.eye(5)
    dae = make_dae(E, A, np.ones((5, 1)), np.ones((1, 5)))
    for i in range(5):
        assert (np.linalg.norm(dae.E[i]) == 0) == (not dae.diff_mask[i])


# ----------------------------------------------------------- linearization

def test_linearize_matches_finite_differences(table1_dae):
    x, u = table1_dae.x0, table1_dae.u0
    lin = linearize(table1_dae, x, u)
    Jx, _ = full_jacobian(lambda xx, uu: table1_dae.G(xx, uu) + 0.0, x, u, table1_dae.m)
    # the wrapper hides the analytic jacobian, forcing central differences
    np.testing.assert_allclose(lin.A - table1_dae.A, Jx, rtol=1e-5, atol=1e-9 * np.abs(Jx).max())


def test_finite_eigenvalues_drop_infinite_ones():
    lin = LinearPart(np.diag([1.0, 0.0]), -np.eye(2), [[1.0], [1.0]], [[1.0, 1.0]])
    lam = finite_eigenvalues(lin)
    assert lam.size == 1 and lam[0] == pytest.approx(-1.0)
