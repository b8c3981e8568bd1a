import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threshold_nls import grid as rg
from threshold_nls import special as S
from threshold_nls.errors import InvalidArgument, PreconditionViolation
from threshold_nls.linearized import smooth_random_fields


@pytest.fixture(scope="module")
def ps(small):
    return small.profiles(-1.0, 5)


def _rand_pair(small, seed, scale):
    return scale * smooth_random_fields(small.gs.grid, 1, np.random.default_rng(seed), complex_=True)[0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 2.0))
def test_nonlinearity_forms_agree(small, seed, scale):
    gs = small.gs
    v = _rand_pair(small, seed, scale)
    inner = gs.grid.r < 15.0
    a, b = S.eval_R(v, gs)[inner], S.eval_R_from_G(v, gs)[inner]
    # the G form cancels O(Q^3) terms, so its round-off scales with them
    scale = (gs.weight * (gs.Q + np.abs(v)) ** 3)[inner]
    assert np.all(np.abs(a - b) <= 1e-12 * scale + 1e-9 * np.abs(a))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-3, 2.0))
def test_full_expansion(small, seed, scale):
    gs = small.gs
    v = _rand_pair(small, seed, scale)
    w, Q = gs.weight, gs.Q
    u = Q + v
    lhs = w * np.abs(u) ** 2 * u - w * Q**3
    rhs = S.eval_K(v, gs) + S.eval_R(v, gs)
    scale = w * (Q + np.abs(v)) ** 3
    assert np.all(np.abs(lhs - rhs) <= 1e-12 * scale)
    split = S.R2(v, v, gs) + S.R3(v, v, v, gs)
    assert np.all(np.abs(S.eval_R(v, gs) - split) <= 1e-12 * scale)


def test_first_profile_is_seed(small, ps):
    assert np.array_equal(ps.Z[0], -small.spec.y_plus)


def test_profile_solves_are_accurate(ps):
    assert max(ps.solve_residuals) < 1e-10


@pytest.mark.parametrize("A", [2.0, -0.5])
def test_profiles_homogeneous_in_amplitude(small, A):
    base = small.profiles(1.0, 4)
    other = S.build_profiles(small.gs, small.ops, small.spec, A, 4)
    for j, (z1, za) in enumerate(zip(base.Z, other.Z), start=1):
        assert np.allclose(za, A**j * z1, rtol=1e-9, atol=1e-12 * np.max(np.abs(z1)))


def test_zero_amplitude(small):
    ps0 = S.build_profiles(small.gs, small.ops, small.spec, 0.0, 3)
    assert all(np.all(z == 0) for z in ps0.Z)
    assert np.array_equal(S.special_initial_data(ps0, 1.0), small.gs.Q)


@pytest.mark.parametrize("k", [0, -1, 13, 2.5])
def test_invalid_order(small, k):
    with pytest.raises(InvalidArgument):
        S.build_profiles(small.gs, small.ops, small.spec, 1.0, k)


def test_direct_and_collected_residuals_agree(small):
    ps = small.profiles(-1.0, 2)
    t = 3.0 / small.e0
    _, a = S.residual_epsilon(ps, t, "collected")
    _, b = S.residual_epsilon(ps, t, "direct")
    assert a == pytest.approx(b, rel=1e-4)


def test_unknown_residual_method(ps):
    with pytest.raises(InvalidArgument):
        S.residual_epsilon(ps, 1.0, "spectral")


@pytest.mark.parametrize("k", [1, 2, 3])
def test_residual_order(small, k):
    ps = small.profiles(-1.0, k)
    e0 = small.e0
    ts = np.linspace(2 / e0, 6 / e0, 9)
    norms = [S.residual_epsilon(ps, t)[1] for t in ts]
    slope = np.polyfit(ts, np.log(norms), 1)[0]
    assert slope == pytest.approx(-(k + 1) * e0, rel=0.1)


def test_special_data_sits_at_threshold(ctx):
    ps = ctx.profiles(-1.0, 5)
    u0 = S.special_initial_data(ps, 5 / ctx.e0)
    gs = ctx.gs
    assert rg.mass(gs.grid, u0) == pytest.approx(gs.mass, rel=1e-10)
    energy = 0.5 * rg.grad_norm_sq(gs.grid, u0) - 0.25 * rg.potential_term(gs.grid, u0, gs.b)
    assert energy == pytest.approx(gs.energy, rel=1e-10)


@pytest.mark.parametrize("A, above", [(-1.0, False), (1.0, True)])
def test_amplitude_sign_fixes_side_of_threshold(ctx, A, above):
    u0 = S.special_initial_data(ctx.profiles(A, 5), 5 / ctx.e0)
    assert (rg.grad_norm_sq(ctx.gs.grid, u0) > ctx.gs.grad_sq) == above


def test_early_time_rejected(small, ps):
    with pytest.raises(PreconditionViolation):
        S.special_initial_data(ps, 0.0)


def test_vk_vanishes_late(ps):
    assert np.max(np.abs(S.eval_Vk(ps, 100.0))) < 1e-300 or np.max(np.abs(S.eval_Vk(ps, 100.0))) == 0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.1, 10.0))
def test_amplitude_is_time_translation(small, A):
    base = small.profiles(1.0, 4)
    other = S.build_profiles(small.gs, small.ops, small.spec, A, 4)
    t0 = 4 / small.e0
    shift = S.amplitude_shift(small.e0, A)
    gap = S.eval_Vk(other, t0) - S.eval_Vk(base, t0 - shift)
    assert np.max(np.abs(gap)) < 1e-10 * np.max(np.abs(S.eval_Vk(base, t0 - shift)))


def test_amplitude_shift_needs_positive_amplitude():
    with pytest.raises(InvalidArgument):
        S.amplitude_shift(7.0, -1.0)
