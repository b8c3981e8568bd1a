"""Distance to the ground-state orbit, modulation, virial functionals, spectral
components of the deviation."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import fsolve

from . import grid as rg
from .errors import ModulationFailure, NoConvergence
from .linearized import complex_h1_norm_sq, constrained_projection, smooth_random_fields, z_direction

DELTA0_FRACTION = 0.1


def delta(u, gs):
    """``| ||grad u||^2 - ||grad Q||^2 |``."""
    return abs(rg.grad_norm_sq(gs.grid, u) - gs.grad_sq)


def delta0(gs):
    return DELTA0_FRACTION * gs.grad_sq


# ---------------------------------------------------------------------------
# modulation

@dataclass(frozen=True, eq=False)
class ModulationFrame:
    t: float
    theta: float
    alpha: float
    h: np.ndarray | None
    delta: float
    valid: bool

    def reconstruct(self, gs):
        return np.exp(1j * self.theta) * ((1.0 + self.alpha) * gs.Q + self.h)


def modulate(u, gs, theta_guess=None, t=0.0, delta_max=None):
    """Decompose ``u = e^{i theta} [(1 + alpha) Q + h]``.

    ``theta`` zeroes ``Im(u, e^{i theta} Q)``.  That function is
    ``Im(c e^{-i theta})`` with ``c = (u, Q)``, so its roots are ``arg c`` modulo
    pi and the one with ``Re(u, e^{i theta} Q) > 0`` is taken, placed on the
    branch nearest ``theta_guess``.
    """
    grid = gs.grid
    d = delta(u, gs)
    limit = delta0(gs) if delta_max is None else delta_max
    if not d < limit:
        return ModulationFrame(t, float("nan"), float("nan"), None, d, False)
    c = rg.FOUR_PI * grid.h * np.sum(u * gs.Q * grid.r**2)
    if abs(c) < 1e-8 * gs.mass:
        raise ModulationFailure("u is orthogonal to Q; the phase is undefined")
    theta = float(np.angle(c))
    if theta_guess is not None:
        theta += 2.0 * np.pi * np.round((theta_guess - theta) / (2.0 * np.pi))
        if abs(theta - theta_guess) > 0.5 * np.pi:
            raise ModulationFailure(
                f"no phase root within pi/2 of the guess {theta_guess:.6g} (nearest {theta:.6g})")
    g = np.exp(-1j * theta) * u - gs.Q
    lapQ = rg.laplacian3d(grid, gs.Q)
    alpha = rg.inner(grid, g.real, lapQ) / rg.inner(grid, gs.Q, lapQ)
    h = g - alpha * gs.Q
    return ModulationFrame(t, theta, float(alpha), h, d, True)


def modulate_trajectory(times, states, gs):
    frames, guess = [], None
    for t, u in zip(times, states):
        f = modulate(u, gs, guess, t)
        if f.valid:
            guess = f.theta
        frames.append(f)
    return frames


def threshold_perturbation(gs, f, eps):
    """``mu (Q + eps f + s Z)`` with ``mu, s`` chosen so that mass and energy
    equal those of ``Q`` (``Z`` is the scaling direction)."""
    grid, b = gs.grid, gs.b
    f = np.asarray(f, dtype=complex)
    f = f * np.sqrt(complex_h1_norm_sq(grid, gs.Q) / complex_h1_norm_sq(grid, f))
    Z = z_direction(gs)

    def build(x):
        return x[0] * (gs.Q + eps * f + x[1] * Z)

    def F(x):
        u = build(x)
        e = 0.5 * rg.grad_norm_sq(grid, u) - 0.25 * rg.potential_term(grid, u, b)
        return [rg.mass(grid, u) / gs.mass - 1.0, e / gs.energy - 1.0]

    # Q is a saddle of E at fixed mass with Z the descending direction, so the
    # energy is stationary in s at s = 0; start Newton off that point
    x, info, ok, msg = fsolve(F, [1.0, eps], full_output=True, xtol=1e-13)
    # fsolve may stop with a "no progress" flag once round-off is reached
    if max(abs(v) for v in F(x)) > 1e-10:
        raise NoConvergence(f"threshold projection failed: {msg}")
    return build(x)


def modulation_constants(gs, count=100, rng=None, eps_range=(1e-3, 3e-2)):
    """Ranges of ``|alpha| / delta`` and ``|h|_{H^1} / delta`` over random
    threshold data near ``Q``."""
    rng = np.random.default_rng(0) if rng is None else rng
    fields = smooth_random_fields(gs.grid, count, rng, complex_=True)
    a_ratio, h_ratio = [], []
    for f in fields:
        u = threshold_perturbation(gs, f, rng.uniform(*eps_range))
        fr = modulate(u, gs)
        if not fr.valid:
            continue
        a_ratio.append(abs(fr.alpha) / fr.delta)
        h_ratio.append(np.sqrt(complex_h1_norm_sq(gs.grid, fr.h)) / fr.delta)
    a_ratio, h_ratio = np.array(a_ratio), np.array(h_ratio)
    return {"samples": int(a_ratio.size),
            "alpha": (float(a_ratio.min()), float(a_ratio.max())),
            "h": (float(h_ratio.min()), float(h_ratio.max()))}


# ---------------------------------------------------------------------------
# virial functionals

def virial_P(u, w, grid):
    """``2 Im int conj(u) grad u . grad w``.

    Evaluated as ``2 Im <w u, -Delta_h u>``, the exact time derivative of
    ``int w |u|^2`` under the semi-discrete flow.
    """
    v = grid.r * np.asarray(u, dtype=complex)
    return 2.0 * rg.FOUR_PI * grid.h * float(np.imag(np.sum(w.w * np.conj(v) * rg.apply_neg_d2(grid, v))))


def _kinetic_weighted(grid, u, w):
    """``int w'' |u'|^2 dx`` for radial ``u``.

    On ``v = r u`` this is ``int w'' |v'|^2 dr + int w''' |v|^2 / r dr``, and the
    first term is the symmetrised form ``<v, (A T + T A) v>/2`` (``A = w''``,
    ``T = -d^2/dr^2``) plus ``int w'''' |v|^2 / 2``.
    """
    v = grid.r * np.asarray(u, dtype=complex)
    A = w.d2w
    Tv = rg.apply_neg_d2(grid, v)
    quad = 0.5 * np.real(np.sum(np.conj(v) * (A * Tv + rg.apply_neg_d2(grid, A * v))))
    extra = np.sum(np.abs(v) ** 2 * (0.5 * w.d4w + w.d3w / grid.r))
    return rg.FOUR_PI * grid.h * (quad + extra)


def virial_F(u, w, gs):
    """Time derivative of ``virial_P`` along the flow.

    For ``R = inf`` the reduced form ``8 ||grad u||^2 - (6 + 2b) int |x|^{-b}|u|^4``.
    """
    grid, b = gs.grid, gs.b
    if w.infinite:
        return 8.0 * rg.grad_norm_sq(grid, u) - (6.0 + 2.0 * b) * rg.potential_term(grid, u, b)
    a2 = np.abs(u) ** 2
    quartic = gs.weight * a2**2
    t_bilap = rg.integrate(grid, -w.bilap * a2)
    t_kin = 4.0 * _kinetic_weighted(grid, u, w)
    t_pot = -rg.integrate(grid, quartic * w.lap)
    t_dil = -b * rg.integrate(grid, quartic * w.dw / grid.r)
    return t_bilap + t_kin + t_pot + t_dil


def virial_ratio(t, d, t1, t2):
    """``int_{t1}^{t2} delta / (delta(t1) + delta(t2))`` from sampled ``delta``."""
    t, d = np.asarray(t), np.asarray(d)
    sel = (t >= t1) & (t <= t2)
    ts, ds = t[sel], d[sel]
    return float(np.trapezoid(ds, ts) / (ds[0] + ds[-1]))


# ---------------------------------------------------------------------------
# spectral components

@dataclass(frozen=True, eq=False)
class ComponentTrack:
    t: float
    alpha_plus: float
    alpha_minus: float
    beta: float
    g_norm: float
    g: np.ndarray


def component_track(h, spec, ops, gs, t=0.0):
    """Coefficients of ``h = a+ Y+ + a- Y- + beta iQ/|Q| + g``; ``a+`` is the
    coefficient multiplying ``Y+`` (see :func:`linearized.constrained_projection`)."""
    a_plus, a_minus, beta, g = constrained_projection(h, spec, ops, gs)
    return ComponentTrack(t, a_plus, a_minus, beta, float(np.sqrt(rg.mass(ops.grid, g))), g)


def virial_delta_gap(u, gs):
    """``F_inf[u] - 4(1+b) delta(u)`` and ``4(1+b) delta(u)``."""
    w = rg.virial_weight(gs.grid)
    f = virial_F(u, w, gs)
    ref = 4.0 * (1.0 + gs.b) * delta(u, gs)
    return f - ref, ref
