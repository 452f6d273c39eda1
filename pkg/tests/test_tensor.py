import numpy as np
import pytest

from conftest import conformal_metric, conformal_phi, general_metric
from qlab.grid import PeriodicGrid, ScalarField, SymTensor2Field, gradient
from qlab.tensor import (
    MetricField,
    NonSPDMetricError,
    christoffel,
    covariant_hessian,
    curvature_bundle,
    divergence_tensor,
    einstein_divergence,
    kulkarni_nomizu,
    laplace_beltrami,
    lichnerowicz,
    second_divergence,
    tensor_norm2,
)


def _flat_grad_sq(dphi):
    return np.sum(dphi**2, axis=0)


@pytest.mark.parametrize("dim", [3, 4])
def test_christoffel_conformal_closed_form(dim):
    grid = PeriodicGrid(dim, 12)
    g = conformal_metric(grid)
    dphi = gradient(conformal_phi(grid), dim)
    G = christoffel(g)
    eye = np.eye(dim)
    exact = (np.einsum("ki,j...->kij...", eye, dphi) + np.einsum("kj,i...->kij...", eye, dphi)
             - np.einsum("ij,k...->kij...", eye, dphi))
    np.testing.assert_allclose(G, exact, atol=1e-12)


@pytest.mark.parametrize("dim", [3, 4])
def test_scalar_and_ricci_conformal_closed_form(dim):
    # g = exp(2 phi) delta:
    #   Ric = -(n-2)(d2 phi - dphi dphi) - (lap phi + (n-2)|dphi|^2) delta
    #   R = -exp(-2 phi) (2(n-1) lap phi + (n-1)(n-2)|dphi|^2)
    grid = PeriodicGrid(dim, 16)
    phi = conformal_phi(grid)
    g = conformal_metric(grid)
    n = dim
    dphi = gradient(phi, n)
    hess = np.stack([gradient(d, n) for d in dphi])
    lap = np.einsum("ii...->...", hess)
    gsq = _flat_grad_sq(dphi)
    ric = -(n - 2) * (hess - np.einsum("i...,j...->ij...", dphi, dphi)) \
        - np.einsum("ij,...->ij...", np.eye(n), lap + (n - 2) * gsq)
    R = -np.exp(-2 * phi) * (2 * (n - 1) * lap + (n - 1) * (n - 2) * gsq)
    b = curvature_bundle(g)
    # the two sides alias differently, so agreement is at truncation level
    assert np.abs(b.ricci.values - ric).max() < 1e-9 * np.abs(ric).max()
    assert np.abs(b.scalar.values - R).max() < 1e-9 * np.abs(R).max()


def test_sphere_sign_convention_from_kulkarni_nomizu():
    # a constant-curvature model tensor: Riem = -(k/2) g (.) g gives Ric = (n-1) k g
    grid = PeriodicGrid(4, 8)
    g = MetricField.flat(grid)
    I = SymTensor2Field.identity(grid)
    riem = kulkarni_nomizu(I, I) * -0.5
    full = riem.full()
    ric = np.einsum("ijki...->jk...", full)
    np.testing.assert_allclose(ric, 3.0 * g.values, atol=1e-15)


def test_weyl_vanishes_on_conformally_flat():
    grid = PeriodicGrid(4, 12)
    b = curvature_bundle(conformal_metric(grid))
    assert np.abs(b.weyl.pairs).max() < 1e-12
    assert np.abs(b.riemann.pairs).max() > 1e-2


def test_weyl_is_trace_free_on_general_metric():
    grid = PeriodicGrid(4, 12)
    g = general_metric(grid)
    b = curvature_bundle(g)
    W = b.weyl.full()
    tr = np.einsum("il...,ijkl...->jk...", g.inverse, W)
    assert np.abs(tr).max() < 1e-12
    assert np.abs(W).max() > 1e-3


def test_first_bianchi_identity():
    grid = PeriodicGrid(4, 12)
    R = curvature_bundle(general_metric(grid)).riemann.full()
    cyc = R + np.einsum("iklj...->ijkl...", R) + np.einsum("iljk...->ijkl...", R)
    assert np.abs(cyc).max() < 1e-12


@pytest.mark.parametrize("dim", [3, 4])
def test_contracted_bianchi(dim):
    grid = PeriodicGrid(dim, 16)
    d = einstein_divergence(general_metric(grid))
    assert np.abs(d.values).max() < 1e-10


def test_lichnerowicz_annihilates_metric():
    grid = PeriodicGrid(4, 12)
    g = general_metric(grid)
    out = lichnerowicz(g.components, g)
    assert np.abs(out.values).max() < 1e-12


def test_lichnerowicz_rejects_foreign_bundle():
    grid = PeriodicGrid(3, 8)
    g = general_metric(grid)
    other = conformal_metric(grid)
    with pytest.raises(ValueError):
        lichnerowicz(g.components, g, bundle=other.bundle)


def test_laplace_beltrami_conformal_closed_form(rng):
    grid = PeriodicGrid(4, 12)
    phi = conformal_phi(grid)
    g = conformal_metric(grid)
    u = grid.random_bandlimited(rng, 2)
    du, dphi = gradient(u, 4), gradient(phi, 4)
    flat_lap = sum(gradient(du[a], 4)[a] for a in range(4))
    exact = np.exp(-2 * phi) * (flat_lap + 2 * np.sum(du * dphi, axis=0))
    got = laplace_beltrami(ScalarField(grid, u), g).values
    assert np.abs(got - exact).max() < 1e-9 * np.abs(exact).max()


def test_laplacian_is_symmetric_and_hessian_traces(rng):
    grid = PeriodicGrid(3, 12)
    g = general_metric(grid)
    u = ScalarField(grid, grid.random_bandlimited(rng, 2))
    v = ScalarField(grid, grid.random_bandlimited(rng, 2))
    w = g.sqrt_det
    a = np.sum(laplace_beltrami(u, g).values * v.values * w)
    b = np.sum(u.values * laplace_beltrami(v, g).values * w)
    assert abs(a - b) < 1e-11 * np.sum(np.abs(a))
    H = covariant_hessian(u, g).values
    np.testing.assert_allclose(np.einsum("ij...,ij...->...", g.inverse, H),
                               laplace_beltrami(u, g).values, atol=1e-11)


def test_second_divergence_is_adjoint_of_hessian(rng):
    # integral of u * delta^2 h equals integral of <hess u, h>
    grid = PeriodicGrid(3, 12)
    g = general_metric(grid)
    u = ScalarField(grid, grid.random_bandlimited(rng, 2))
    h = SymTensor2Field(grid, grid.random_bandlimited(rng, 2, shape=(3, 3)))
    w = g.sqrt_det
    lhs = np.sum(u.values * second_divergence(h, g).values * w)
    H = covariant_hessian(u, g).values
    gi = g.inverse
    rhs = np.sum(np.einsum("ia...,jb...,ij...,ab...->...", gi, gi, H, h.values) * w)
    assert abs(lhs - rhs) < 1e-10 * abs(rhs)


def test_divergence_sign(rng):
    # delta h = -div h, so on flat space (delta (u delta_ij))_i = -d_i u
    grid = PeriodicGrid(3, 8)
    g = MetricField.flat(grid)
    u = grid.random_bandlimited(rng, 2)
    h = SymTensor2Field(grid, np.einsum("ij,...->ij...", np.eye(3), u))
    np.testing.assert_allclose(divergence_tensor(h, g).values, -gradient(u, 3), atol=1e-12)


def test_tensor_norm_conformal_scaling(rng):
    grid = PeriodicGrid(4, 8)
    g = conformal_metric(grid)
    phi = conformal_phi(grid)
    h = SymTensor2Field(grid, grid.random_bandlimited(rng, 2, shape=(4, 4)))
    flat_sq = np.einsum("ij...,ij...->...", h.values, h.values)
    np.testing.assert_allclose(tensor_norm2(h, g).values, np.exp(-4 * phi) * flat_sq, rtol=1e-12)


def test_non_spd_metric_rejected():
    grid = PeriodicGrid(2, 8)
    vals = np.zeros((2, 2) + grid.shape)
    vals[0, 0] = 1.0
    vals[1, 1] = -1.0
    with pytest.raises(NonSPDMetricError):
        MetricField.general(grid, vals)


def test_rescaled_composes_conformal_factors():
    grid = PeriodicGrid(3, 8)
    g = conformal_metric(grid)
    psi = ScalarField(grid, 0.02 * np.cos(grid.coords()[1]))
    g2 = g.rescaled(psi)
    assert g2.preset == "conformal"
    np.testing.assert_allclose(g2.values, np.exp(2 * psi.values) * g.values, rtol=1e-15)
