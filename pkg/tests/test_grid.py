import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from threshold_nls import grid as rg
from threshold_nls.errors import InvalidArgument


@pytest.fixture(scope="module")
def g():
    return rg.make_grid(2048, 30.0)


def test_grid_nodes_are_cell_centred(g):
    assert g.h == pytest.approx(30.0 / 2048)
    assert g.r[0] == pytest.approx(0.5 * g.h)
    assert g.cell_centred


@pytest.mark.parametrize("n, rmax", [(0, 10.0), (2.5, 10.0), (100, -1.0), (100, 0.0)])
def test_make_grid_rejects_bad_parameters(n, rmax):
    with pytest.raises(InvalidArgument):
        rg.make_grid(n, rmax)


def test_mass_of_gaussian(g):
    # int e^{-r^2} d^3x = pi^{3/2}
    assert rg.integrate(g, np.exp(-g.r**2)) == pytest.approx(np.pi**1.5, rel=1e-12)


def test_grad_norm_of_exponential(g):
    # |grad e^{-r}|^2 integrates to pi; the kink at the origin limits accuracy
    assert rg.grad_norm_sq(g, np.exp(-g.r)) == pytest.approx(np.pi, rel=1e-5)


def test_grad_norm_of_gaussian_is_high_order():
    exact = 1.5 * np.pi**1.5  # int |grad e^{-r^2/2}|^2
    errs = []
    for n in (256, 512):
        g = rg.make_grid(n, 12.0)
        errs.append(abs(rg.grad_norm_sq(g, np.exp(-g.r**2 / 2)) - exact))
    assert errs[1] < 1e-6
    assert errs[0] / errs[1] > 12.0


def test_laplacian_exact_on_quadratics(g):
    lap = rg.laplacian3d(g, g.r**2)
    assert np.max(np.abs(lap[:-3] - 6.0)) < 1e-8


def test_laplacian_of_gaussian(g):
    f = np.exp(-g.r**2)
    exact = (4 * g.r**2 - 6) * f
    assert np.max(np.abs(rg.laplacian3d(g, f) - exact)) < 1e-6


def test_radial_derivative_fourth_order():
    errs = []
    for n in (256, 512):
        g = rg.make_grid(n, 10.0)
        f = np.exp(-g.r**2)
        errs.append(np.max(np.abs(rg.radial_derivative(g, f) + 2 * g.r * f)))
    assert errs[0] / errs[1] > 12.0


def test_operator_band_is_symmetric_positive(g):
    A = rg.neg_d2_sparse(g).toarray()[:200, :200]
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_apply_matches_matrix(seed):
    g = rg.make_grid(64, 5.0)
    v = np.random.default_rng(seed).normal(size=64)
    assert np.allclose(rg.apply_neg_d2(g, v), rg.neg_d2_sparse(g) @ v, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quadratic_form_is_symmetric(seed):
    g = rg.make_grid(64, 5.0)
    rng = np.random.default_rng(seed)
    v, w = rng.normal(size=(2, 64))
    T = lambda x: rg.apply_neg_d2(g, x)
    assert np.dot(v, T(w)) == pytest.approx(np.dot(w, T(v)), rel=1e-10, abs=1e-8)


@pytest.mark.parametrize("b", [0.1, 0.25, 0.4])
def test_potential_weight_endpoint_correction(b):
    # int r^{-b} e^{-r^2} d^3x = 2 pi Gamma((3-b)/2)
    exact = 2 * np.pi * gamma((3 - b) / 2)
    g = rg.make_grid(400, 8.0)
    f = np.exp(-g.r**2)
    corrected = rg.integrate(g, rg.potential_weight(g, b) * f)
    plain = rg.integrate(g, g.r ** (-b) * f)
    assert abs(corrected - exact) < 1e-3 * abs(plain - exact)
    assert corrected == pytest.approx(exact, rel=1e-8)


def test_potential_weight_without_singularity(g):
    assert np.array_equal(rg.potential_weight(g, 0.0), np.ones(g.n))


def test_virial_weight_inner_region(g):
    w = rg.virial_weight(g, 5.0)
    inside = g.r <= 5.0
    assert np.allclose(w.w[inside], g.r[inside] ** 2)
    assert np.allclose(w.lap[inside], 6.0)
    assert np.allclose(w.bilap[inside], 0.0, atol=1e-10)
    assert np.all(np.abs(w.d2w) <= 2.0 + 1e-12)


def test_virial_weight_plateau(g):
    w = rg.virial_weight(g, 5.0)
    out = g.r >= 15.0
    assert np.allclose(w.w[out], 25.0 * rg.PHI_PLATEAU)
    assert np.allclose(w.dw[out], 0.0)


def test_virial_weight_derivatives_consistent(g):
    w = rg.virial_weight(g, 4.0)
    num = np.gradient(w.w, g.r)
    assert np.max(np.abs(num - w.dw)[5:-5]) < 1e-3
    num2 = np.gradient(w.d3w, g.r)
    assert np.max(np.abs(num2 - w.d4w)[5:-5]) < 1e-2 * np.max(np.abs(w.d4w))


def test_virial_weight_rejects_bad_radius(g):
    with pytest.raises(InvalidArgument):
        rg.virial_weight(g, -1.0)
