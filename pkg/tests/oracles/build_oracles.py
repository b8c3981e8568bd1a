"""Independent reference values, computed without importing the package.

Shooting with an adaptive DOP853 integrator gives a seed profile, Newton on a
vertex-centred second-order difference grid polishes it, and the unstable
eigenvalue comes from the full block matrix.  Three resolutions are
Richardson-extrapolated.  Run once; the result is frozen in values.json.
"""

import json
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import eigs, spsolve

L_BOX = 30.0
STEPS = (0.04, 0.02, 0.01)


def shoot(b, r0=1e-6, r_end=20.0):
    def rhs(r, y):
        q, p = y
        return [p, -2.0 * p / r + q - r ** (-b) * q**3]

    def fate(a):
        # series start q = a + c r^{2-b}
        c = a**3 / ((2 - b) * (3 - b))
        y0 = [a - c * r0 ** (2 - b) + a * r0**2 / 6, -(2 - b) * c * r0 ** (1 - b) + a * r0 / 3]
        hit = lambda r, y: y[0]
        hit.terminal = True
        turn = lambda r, y: y[1]
        turn.terminal = True
        sol = solve_ivp(rhs, (r0, r_end), y0, method="DOP853", rtol=1e-12, atol=1e-14, events=(hit, turn))
        if sol.t_events[0].size:
            return 1, sol
        return -1, sol

    lo, hi = 0.5, 20.0
    assert fate(lo)[0] < 0 and fate(hi)[0] > 0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if fate(mid)[0] > 0:
            hi = mid
        else:
            lo = mid
    a = 0.5 * (lo + hi)
    sol = solve_ivp(rhs, (r0, 8.0), fate(a)[1].y[:, 0], method="DOP853", rtol=1e-12, atol=1e-14,
                    dense_output=True)
    return a, sol


def fd_system(b, h):
    n = int(round(L_BOX / h)) - 1
    r = h * np.arange(1, n + 1)
    T = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h**2
    return r, T.tocsc()


def polish(b, h, seed):
    r, T = fd_system(b, h)
    v = np.where(r < 8.0, r * seed(np.minimum(r, 8.0)), 0.0)
    tail = r >= 8.0
    v[tail] = v[~tail][-1] * np.exp(-(r[tail] - r[~tail][-1]))
    w = r ** (-b) / r**2
    I = sparse.identity(len(r), format="csc")
    for _ in range(40):
        F = T @ v + v - w * v**3
        J = T + I - sparse.diags(3 * w * v**2)
        dv = spsolve(J.tocsc(), F)
        v -= dv
        if np.max(np.abs(dv)) < 1e-13:
            break
    return r, T, v


def trap(f, h):
    # integrand vanishes at r = 0 and at the box edge
    return h * np.sum(f)


def scalars(b, h, seed, guess=None):
    r, T, v = polish(b, h, seed)
    m = 4 * np.pi * trap(v**2, h)
    g = 4 * np.pi * h * (v @ (T @ v))
    p = 4 * np.pi * trap(r ** (-2 - b) * v**4, h)
    Q = v / r
    w = r ** (-b)
    Lp = T + sparse.diags(1 - 3 * w * Q**2)
    Lm = T + sparse.diags(1 - w * Q**2)
    n = len(r)
    Z = sparse.csc_matrix((n, n))
    # v_t = -Lop v with Lop(f1, f2) = (-Lm f2, Lp f1)
    block = sparse.bmat([[Z, Lm], [-Lp, Z]]).tocsc()
    if n <= 1000:
        vals = np.linalg.eigvals(block.toarray())
    else:
        vals = eigs(block, k=1, sigma=guess, return_eigenvectors=False)
    real = vals[(np.abs(vals.imag) < 1e-8) & (vals.real > 1e-3)].real
    e0 = float(np.max(real))
    return {"mass": m, "grad_sq": g, "pot": p, "e0": e0}


def richardson(values, order=2):
    f1, f2, f3 = values
    k = 2.0**order
    r12 = (k * f2 - f1) / (k - 1)
    r23 = (k * f3 - f2) / (k - 1)
    return r23, abs(r23 - r12)


def main():
    out = {}
    for b in (0.1, 0.3):
        a, sol = shoot(b)
        seed = lambda r: sol.sol(r)[0]
        per = []
        for h in STEPS:
            per.append(scalars(b, h, seed, per[-1]["e0"] if per else None))
        entry = {"a_star": a}
        for key in ("mass", "grad_sq", "pot", "e0"):
            val, err = richardson([p[key] for p in per])
            entry[key] = val
            entry[key + "_uncertainty"] = err
        entry = {k: float(v) for k, v in entry.items()}
        out[str(b)] = entry
        print(b, entry)
    Path(__file__).with_name("values.json").write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()
