"""Approximate threshold solutions converging to the standing wave.

With ``u = e^{it}(Q + v)`` the perturbation obeys ``v_t + Lop v = i R(v)``.
Seeding ``Z_1 = A Y+`` and matching powers of ``e^{-e0 t}`` gives

    Z_j = (Lop - j e0)^{-1} (i N_j),   j >= 2,

where ``N_j`` collects the ``e^{-j e0 t}`` coefficient of ``R(sum_m e^{-m e0 t} Z_m)``.
``R`` splits into a bilinear part ``R2`` and the cubic ``w |v|^2 v``, so ``N_j``
is a convolution over index pairs and triples.  The truncation
``V_k = sum_{j<=k} e^{-j e0 t} Z_j`` then solves the equation up to
``O(e^{-(k+1) e0 t})``.

Because the recursion is homogeneous, ``Z_j`` for amplitude ``A`` is exactly
``A^j`` times the ``A = 1`` profile: changing ``A`` is a time translation by
``ln(A)/e0``.
"""

from dataclasses import dataclass

import numpy as np

from . import grid as rg
from .errors import InvalidArgument, PreconditionViolation
from .linearized import Resolvent, complex_h1_norm_sq

MAX_ORDER = 12
# data are admitted once |V_k(t0)|_{H^1} <= SMALLNESS * |Q|_{H^1}
SMALLNESS = 0.1


def _dot(a, c):
    """Pointwise real dot product of two pairs."""
    return a.real * c.real + a.imag * c.imag


def eval_K(v, gs):
    """Linear part ``w Q^2 (3 v1 + i v2)``."""
    v = np.asarray(v, dtype=complex)
    c = gs.weight * gs.Q**2
    return c * (3.0 * v.real + 1j * v.imag)


def R2(a, c, gs):
    """Symmetric bilinear part of ``R``: ``R2(v, v) = w Q (3 v1^2 + v2^2 + 2i v1 v2)``."""
    wq = gs.weight * gs.Q
    return wq * ((3.0 * a.real * c.real + a.imag * c.imag)
                 + 1j * (a.real * c.imag + a.imag * c.real))


def R3(a, c, d, gs):
    """Cubic part arranged so that ``R3(v, v, v) = w |v|^2 v``."""
    return gs.weight * _dot(a, c) * d


def eval_R(v, gs):
    """Nonlinear remainder written without dividing by ``Q``."""
    v = np.asarray(v, dtype=complex)
    v1, v2, Q = v.real, v.imag, gs.Q
    re = Q * (3.0 * v1**2 + v2**2) + v1**3 + v1 * v2**2
    im = 2.0 * Q * v1 * v2 + v1**2 * v2 + v2**3
    return gs.weight * (re + 1j * im)


def eval_R_from_G(v, gs):
    """``w Q^3 G(v / Q)`` with ``G(z) = |1+z|^2 (1+z) - 1 - 2z - conj(z)``.

    Only meaningful where ``Q`` is not tiny; kept as an independent check of
    :func:`eval_R`.
    """
    z = np.asarray(v, dtype=complex) / gs.Q
    G = np.abs(1.0 + z) ** 2 * (1.0 + z) - 1.0 - 2.0 * z - np.conj(z)
    return gs.weight * gs.Q**3 * G


def _coefficient(Z, j, gs):
    """``N_j``: the ``e^{-j e0 t}`` coefficient of ``R(sum e^{-m e0 t} Z_m)``.

    ``Z`` is 1-based through ``Z[m - 1]``.
    """
    out = np.zeros_like(Z[0])
    for m in range(1, j):
        out += R2(Z[m - 1], Z[j - m - 1], gs)
    for m in range(1, j - 1):
        for l in range(1, j - m):
            p = j - m - l
            out += R3(Z[m - 1], Z[l - 1], Z[p - 1], gs)
    return out


@dataclass(frozen=True, eq=False)
class ProfileSet:
    A: float
    e0: float
    k: int
    Z: tuple
    gs: object
    ops: object
    spec: object
    solve_residuals: tuple = ()

    def coefficient(self, j):
        return _coefficient(self.Z, j, self.gs)


def build_profiles(gs, ops, spec, A, k):
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise InvalidArgument(f"order k must be a positive integer, got {k!r}")
    if k > MAX_ORDER:
        raise InvalidArgument(f"order k = {k} exceeds {MAX_ORDER}")
    A = float(A)
    e0 = spec.e0
    Z = [A * spec.y_plus]
    residuals = []
    for j in range(2, k + 1):
        if A == 0.0:
            Z.append(np.zeros_like(Z[0]))
            residuals.append(0.0)
            continue
        rhs = 1j * _coefficient(Z, j, gs)
        res = Resolvent(ops, j * e0, spec)
        zj = res(rhs)
        err = np.sqrt(rg.mass(gs.grid, ops.apply(zj) - j * e0 * zj - rhs))
        residuals.append(float(err / np.sqrt(rg.mass(gs.grid, rhs))))
        Z.append(zj)
    return ProfileSet(A, e0, int(k), tuple(Z), gs, ops, spec, tuple(residuals))


def eval_Vk(ps, t):
    out = np.zeros_like(ps.Z[0])
    for j, z in enumerate(ps.Z, start=1):
        out = out + np.exp(-j * ps.e0 * t) * z
    return out


def residual_epsilon(ps, t, method="collected"):
    """``eps_k = d/dt V_k + Lop V_k - i R(V_k)`` and its L^2 norm.

    ``collected`` uses the recursion to cancel the linear terms analytically,
    leaving ``i sum_j e^{-j e0 t} N_j - i R(V_k)``; ``direct`` evaluates the
    defining expression term by term (the time derivative is still exact).
    The collected form avoids subtracting ``O(1/h^2)`` quantities.
    """
    gs, e0 = ps.gs, ps.e0
    V = eval_Vk(ps, t)
    if method == "direct":
        dV = np.zeros_like(V)
        for j, z in enumerate(ps.Z, start=1):
            dV = dV - j * e0 * np.exp(-j * e0 * t) * z
        eps = dV + ps.ops.apply(V) - 1j * eval_R(V, gs)
    elif method == "collected":
        acc = np.zeros_like(V)
        for j in range(2, ps.k + 1):
            acc = acc + np.exp(-j * e0 * t) * ps.coefficient(j)
        eps = 1j * (acc - eval_R(V, gs))
    else:
        raise InvalidArgument(f"unknown residual method {method!r}")
    return eps, float(np.sqrt(rg.mass(gs.grid, eps)))


def special_initial_data(ps, t0):
    """``Q + V_k(t0)``; the common phase ``e^{i t0}`` is dropped."""
    gs = ps.gs
    V = eval_Vk(ps, t0)
    ratio = np.sqrt(complex_h1_norm_sq(gs.grid, V) / (gs.mass + gs.grad_sq))
    if ratio > SMALLNESS:
        raise PreconditionViolation(
            f"t0 = {t0!r} too small: |V_k(t0)|_H1 / |Q|_H1 = {ratio:.3g} > {SMALLNESS}")
    return gs.Q + V


def amplitude_shift(e0, A):
    """Time shift turning the ``A = 1`` family into amplitude ``A``: data for
    ``A`` at ``t`` equal data for ``1`` at ``t - amplitude_shift(e0, A)``."""
    if A <= 0:
        raise InvalidArgument("amplitude shift needs A > 0")
    return np.log(A) / e0
