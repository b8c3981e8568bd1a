"""Linearisation about the standing wave ``e^{it} Q``.

Writing ``u = e^{it}(Q + v)`` with ``v = v1 + i v2`` turns the equation into

    d/dt v + Lop v = i R(v),      Lop(f1, f2) = (-L_- f2, L_+ f1),

with ``L_+ = 1 - Delta - 3 w Q^2`` and ``L_- = 1 - Delta - w Q^2``.  Pairs of
real fields are carried as complex arrays ``f1 + i f2`` throughout, so
multiplication by ``i`` is the rotation ``(f1, f2) -> (-f2, f1)``.

``Lop`` has exactly one positive eigenvalue ``e0`` on radial functions, with
eigenvector ``Y+ = Y1 + i Y2``, and ``Y- = conj(Y+)`` belongs to ``-e0``::

    L_+ Y1 = e0 Y2,    L_- Y2 = -e0 Y1.

All matrices act on ``v = r f`` where they are symmetric; the public helpers
take and return radial fields ``f``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigs, eigsh, splu

from . import grid as rg
from .errors import (InvalidArgument, LinearSolveFailure, NearSingular, SpectralDataInvalid,
                     SpectralFailure)

GUARD = 1e-6
DENSE_LIMIT = 2048


@dataclass(frozen=True, eq=False)
class DiscreteOperators:
    grid: rg.RadialGrid
    b: float
    Q: np.ndarray
    weight: np.ndarray
    L_plus: sp.csc_matrix
    L_minus: sp.csc_matrix

    def plus(self, f):
        r = self.grid.r
        return (self.L_plus @ (r * f)) / r

    def minus(self, f):
        r = self.grid.r
        return (self.L_minus @ (r * f)) / r

    def apply(self, f):
        """``Lop f`` for a pair stored as ``f1 + i f2``."""
        f = np.asarray(f, dtype=complex)
        return -self.minus(f.imag) + 1j * self.plus(f.real)


def assemble_operators(gs):
    grid = gs.grid
    T = rg.neg_d2_sparse(grid)
    eye = sp.identity(grid.n, format="csc")
    pot = gs.weight * gs.Q**2
    Lp = (T + eye - sp.diags(3.0 * pot)).tocsc()
    Lm = (T + eye - sp.diags(pot)).tocsc()
    return DiscreteOperators(grid, gs.b, gs.Q, gs.weight, Lp, Lm)


def kernel_residuals(ops):
    """``||L_- Q|| / ||Q||`` and ``||L_+ Q + 2 w Q^3|| / ||Q||``."""
    g, Q = ops.grid, ops.Q
    nq = np.sqrt(rg.mass(g, Q))
    r_minus = np.sqrt(rg.mass(g, ops.minus(Q))) / nq
    r_plus = np.sqrt(rg.mass(g, ops.plus(Q) + 2.0 * ops.weight * Q**3)) / nq
    return r_minus, r_plus


# ---------------------------------------------------------------------------
# bilinear form

def bilinear_B(f, g, ops):
    """``B(f, g) = (L_+ f1, g1)/2 + (L_- f2, g2)/2``."""
    f = np.asarray(f, dtype=complex)
    g = np.asarray(g, dtype=complex)
    grid = ops.grid
    return 0.5 * (rg.inner(grid, ops.plus(f.real), g.real)
                  + rg.inner(grid, ops.minus(f.imag), g.imag))


def Phi(h, ops):
    return bilinear_B(h, h, ops)


# ---------------------------------------------------------------------------
# unstable eigenpair

@dataclass(frozen=True, eq=False)
class SpectralData:
    """``e0`` and ``Y+ = Y1 + i Y2``.

    ``b_norm`` is ``B(Y+, Y-)`` for the eigenvector scaled to ``||Y1|| = 1``.
    Since ``B(Y+, Y-) = -(L_- Y2, Y2) < 0`` always, the normalised pair has
    ``B(Y+, Y-) = -1``; ``Y1(r_0) > 0`` fixes the sign.
    """

    e0: float
    Y1: np.ndarray
    Y2: np.ndarray
    b_norm: float
    normalized: bool
    method: str
    residuals: dict = field(default_factory=dict)

    @property
    def y_plus(self):
        return self.Y1 + 1j * self.Y2

    @property
    def y_minus(self):
        return self.Y1 - 1j * self.Y2


def _lowest_dense(ops):
    """Route 1: ``P = L_-^{1/2} L_+ L_-^{1/2}`` from a dense eigendecomposition of ``L_-``."""
    Lm = ops.L_minus.toarray()
    lam, V = np.linalg.eigh(Lm)
    q = ops.grid.r * ops.Q
    q /= np.linalg.norm(q)
    k = int(np.argmin(np.abs(lam)))
    if abs(V[:, k] @ q) < 1.0 - 1e-6:
        raise SpectralFailure("kernel of L_- is not spanned by Q")
    lam[k] = 0.0
    if np.any(lam < 0):
        raise SpectralFailure("L_- has a negative direction")
    S = (V * np.sqrt(lam)) @ V.T
    P = S @ (ops.L_plus @ S)
    P = 0.5 * (P + P.T)
    mu, W = np.linalg.eigh(P)
    if mu[0] >= 0:
        raise SpectralFailure("P has no negative eigenvalue")
    # the kernel direction Q is an eigenvector of P with eigenvalue 0; skip it
    k_q = int(np.argmax(np.abs(W.T @ q)))
    second = float(np.min(np.delete(mu, sorted({0, k_q}))))
    y1 = S @ W[:, 0]
    return float(mu[0]), y1, float(second)


def _lowest_sparse(ops):
    """Route 2: shift-invert Arnoldi on ``L_- L_+`` (equivalently ``L_+ x = mu L_-^{-1} x``
    on ``{Q}^perp``), the shift being pushed down until it sits below ``-e0^2``."""
    # -Delta >= 0, so 1 - 3 max(w Q^2) bounds the spectrum of L_+ from below
    floor = -3.0 * float(np.max(ops.weight * ops.Q**2))
    mu_plus = eigsh(ops.L_plus, k=1, sigma=floor, which="LM", return_eigenvectors=False)[0]
    if mu_plus >= 0:
        raise SpectralFailure("L_+ has no negative direction")
    M = (ops.L_minus @ ops.L_plus).tocsc()
    shift = 4.0 * abs(mu_plus)
    for _ in range(12):
        val, vec = eigs(M, k=1, sigma=-shift, which="LM", tol=1e-14)
        lam = val[0].real
        if lam < -1e-6 * shift:
            return float(lam), vec[:, 0].real, None
        shift *= 4.0
    raise SpectralFailure("shift-invert iteration found no negative eigenvalue of L_- L_+")


def compute_unstable_pair(ops, gs=None, method="auto", normalize=True):
    """Unstable eigenpair of ``Lop``; ``method`` is ``dense``, ``sparse`` or ``auto``."""
    if method == "auto":
        method = "dense" if ops.grid.n <= DENSE_LIMIT else "sparse"
    if method == "dense":
        lam, y1, second = _lowest_dense(ops)
    elif method == "sparse":
        lam, y1, second = _lowest_sparse(ops)
    else:
        raise InvalidArgument(f"unknown eigen method {method!r}")
    e0 = float(np.sqrt(-lam))
    grid, r = ops.grid, ops.grid.r
    Y1 = y1 / r
    Y1 = Y1 / np.sqrt(rg.mass(grid, Y1))
    if Y1[0] < 0:
        Y1 = -Y1
    Y2 = ops.plus(Y1) / e0
    b_norm = bilinear_B(Y1 + 1j * Y2, Y1 - 1j * Y2, ops)
    if normalize:
        scale = 1.0 / np.sqrt(-b_norm)
        Y1, Y2 = scale * Y1, scale * Y2
    res = eigen_residuals(ops, e0, Y1, Y2)
    res["second_eigenvalue"] = second
    res.update(pairing_diagnostics(ops, e0, Y1, Y2))
    return SpectralData(e0, Y1, Y2, float(b_norm), normalize, method, res)


def eigen_residuals(ops, e0, Y1, Y2):
    g = ops.grid
    scale = np.sqrt(rg.mass(g, Y1)) + np.sqrt(rg.mass(g, Y2))
    return {
        "minus": float(np.sqrt(rg.mass(g, ops.minus(Y2) + e0 * Y1)) / scale),
        "plus": float(np.sqrt(rg.mass(g, ops.plus(Y1) - e0 * Y2)) / scale),
    }


def pairing_diagnostics(ops, e0, Y1, Y2):
    """``B(Y+, Y-)`` next to two closed forms one might expect it to equal:
    ``-e0 (L_- Y2, Y2)`` and ``|(L_- Y1, Y1)|`` (the latter compared in modulus).

    Neither is assumed anywhere; the identity that does hold is
    ``B(Y+, Y-) = -(L_- Y2, Y2)``.
    """
    g = ops.grid
    yp, ym = Y1 + 1j * Y2, Y1 - 1j * Y2
    return {
        "pairing_B": float(bilinear_B(yp, ym, ops)),
        "pairing_minus_e0_Lm_Y2": float(-e0 * rg.inner(g, ops.minus(Y2), Y2)),
        "pairing_abs_Lm_Y1": float(abs(rg.inner(g, ops.minus(Y1), Y1))),
        "pairing_minus_Lm_Y2": float(-rg.inner(g, ops.minus(Y2), Y2)),
    }


# ---------------------------------------------------------------------------
# resolvent

class Resolvent:
    """Factorised ``(Lop - lam)`` for repeated solves."""

    def __init__(self, ops, lam, spectrum=None):
        points = [0.0] if spectrum is None else [-spectrum.e0, 0.0, spectrum.e0]
        gap = min(abs(lam - s) for s in points)
        if gap < GUARD:
            raise NearSingular(f"lambda = {lam!r} is within {gap:.3g} of the point spectrum")
        n = ops.grid.n
        eye = sp.identity(n, format="csc")
        block = sp.bmat([[-lam * eye, -ops.L_minus], [ops.L_plus, -lam * eye]], format="csc")
        try:
            self._lu = splu(block)
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc
        self.ops, self.lam = ops, lam

    def __call__(self, F, check=1e-8):
        F = np.asarray(F, dtype=complex)
        r, n = self.ops.grid.r, self.ops.grid.n
        x = self._lu.solve(np.concatenate([r * F.real, r * F.imag]))
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure("resolvent solve produced non-finite values")
        f = (x[:n] + 1j * x[n:]) / r
        if check is not None:
            nF = np.sqrt(rg.mass(self.ops.grid, F))
            res = np.sqrt(rg.mass(self.ops.grid, self.ops.apply(f) - self.lam * f - F))
            if res > check * max(nF, np.finfo(float).tiny):
                raise LinearSolveFailure(f"resolvent round trip residual {res:.3g} (|F| = {nF:.3g})")
        return f


def resolvent_solve(ops, lam, F, spectrum=None):
    """Solve ``(Lop - lam) f = F``."""
    return Resolvent(ops, lam, spectrum)(F)


# ---------------------------------------------------------------------------
# coercivity and related checks

def z_direction(gs):
    """``Z = (3-b)/2 Q + r Q'`` with the derivative taken on the grid."""
    return 0.5 * (3.0 - gs.b) * gs.Q + gs.grid.r * rg.radial_derivative(gs.grid, gs.Q)


def z_quadratic_form(ops, gs):
    """Measured ``(L_+ Z, Z)`` with the two closed forms it is compared against.

    Direct computation with both Pohozaev identities gives
    ``(L_+ Z, Z) = b M - (3-b)/4 P = -(2 + (1-b)^2)/(1-b) M``.
    """
    Z = z_direction(gs)
    measured = rg.inner(ops.grid, ops.plus(Z), Z)
    b, m = gs.b, gs.mass
    return {
        "measured": measured,
        "derived": -(2.0 + (1.0 - b) ** 2) / (1.0 - b) * m,
        "stated": -(2.0 - (1.0 - b) ** 2) / (1.0 - b) * m,
    }


def smooth_random_fields(grid, count, rng, complex_=False, scale=10.0):
    """Sums of a few Gaussian bumps with random centres, widths and signs."""
    r = grid.r
    out = []
    for _ in range(count):
        k = rng.integers(2, 6)
        centres = rng.uniform(0.0, scale, k)
        widths = rng.uniform(0.3, 3.0, k)
        parts = []
        for _ in range(2 if complex_ else 1):
            amps = rng.normal(size=k)
            parts.append(np.sum(amps[:, None] * np.exp(-((r[None, :] - centres[:, None]) / widths[:, None]) ** 2), axis=0))
        out.append(parts[0] + 1j * parts[1] if complex_ else parts[0])
    return out


def project_out(grid, f, direction):
    """L^2 projection of a real field onto ``{direction}^perp``."""
    return f - rg.inner(grid, f, direction) / rg.mass(grid, direction) * direction


def coercivity_ratios(ops, gs, kind, fields):
    """``form(v) / ||v||_{H^1}^2`` after projecting each field onto the subspace
    on which the form is coercive.

    kind ``minus``: ``(L_- v, v)`` on ``{Q}^perp``;
    kind ``plus``: ``(L_+ v, v)`` on ``{Delta Q}^perp``.
    """
    if kind not in ("minus", "plus"):
        raise InvalidArgument(f"unknown coercivity kind {kind!r}")
    grid = ops.grid
    out = []
    for f in fields:
        if kind == "minus":
            v = project_out(grid, f, gs.Q)
            form = rg.inner(grid, ops.minus(v), v)
        else:
            v = project_out(grid, f, rg.laplacian3d(grid, gs.Q))
            form = rg.inner(grid, ops.plus(v), v)
        out.append(form / rg.h1_norm_sq(grid, v))
    return np.array(out)


def constrained_projection(h, spec, ops, gs):
    """Split ``h = a+ Y+ + a- Y- + beta iQ/|Q| + g`` with ``g`` satisfying
    ``(g2, Q) = B(g, Y+) = B(g, Y-) = 0``; returns ``(a+, a-, beta, g)``.

    ``(a+, a-)`` solve the 2x2 system against the Gram matrix of ``Y+, Y-``
    under ``B`` (``B(iQ, .) = 0``), then ``beta`` is fixed by ``(g2, Q) = 0``.
    """
    grid = ops.grid
    yp, ym = spec.y_plus, spec.y_minus
    nq = np.sqrt(rg.mass(grid, gs.Q))
    gram = np.array([[bilinear_B(yp, yp, ops), bilinear_B(ym, yp, ops)],
                     [bilinear_B(yp, ym, ops), bilinear_B(ym, ym, ops)]])
    if not np.all(np.isfinite(gram)) or abs(np.linalg.det(gram)) < 1e-12 * np.max(np.abs(gram)) ** 2:
        raise SpectralDataInvalid("Gram matrix of Y+, Y- under B is singular")
    rhs = np.array([bilinear_B(h, yp, ops), bilinear_B(h, ym, ops)])
    a_plus, a_minus = np.linalg.solve(gram, rhs)
    h = np.asarray(h, dtype=complex)
    pair_q = lambda f: rg.inner(grid, np.imag(f), gs.Q)
    beta = (pair_q(h) - a_plus * pair_q(yp) - a_minus * pair_q(ym)) / nq
    g = h - a_plus * yp - a_minus * ym - beta * 1j * gs.Q / nq
    return float(a_plus), float(a_minus), float(beta), g


def complex_h1_norm_sq(grid, f):
    return rg.mass(grid, f) + rg.grad_norm_sq(grid, f)


def phi_coercivity_ratios(ops, gs, spec, fields):
    """``Phi(g) / ||g||_{H^1}^2`` for the constrained part of each complex field."""
    out = []
    for f in fields:
        g = constrained_projection(f, spec, ops, gs)[3]
        out.append(Phi(g, ops) / complex_h1_norm_sq(ops.grid, g))
    return np.array(out)


def tail_mass(grid, f, radii):
    """L^2 mass of ``f`` outside each radius."""
    r = grid.r
    dens = np.abs(f) ** 2 * r**2 * rg.FOUR_PI * grid.h
    cum = np.cumsum(dens[::-1])[::-1]
    idx = np.searchsorted(r, radii)
    return np.array([cum[i] if i < grid.n else 0.0 for i in idx])
