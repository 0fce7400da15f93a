"""Reference values frozen as constants in src/problems.

* Johnson SU mean for gamma = delta = lambda = 1, xi = 0 (closed form vs scipy).
* E[Q_4] of the elliptic PDE problem by randomized QMC with scipy's scrambled
  Sobol' points (an independent point generator and solver).

Run: python3 reference_values.py
"""
import numpy as np
from scipy.stats import johnsonsu, norm, qmc


def jsu_mean():
    closed = -np.sqrt(np.e) * np.sinh(1.0)
    return closed, johnsonsu(1.0, 1.0).mean()


def elliptic_q(x, level):
    m = 2 ** (1 + level)
    h = 1.0 / m
    z = norm.ppf(x)                                   # (n, 8)
    mid = (np.arange(m) + 0.5) * h                    # cell midpoints
    j = np.arange(1, 9)
    s = np.sin(np.pi * np.outer(mid, j)) / j          # (m, 8)
    a = np.exp(z @ s.T)                               # (n, m)
    # tridiagonal system for interior nodes 1..m-1
    diag = a[:, :-1] + a[:, 1:]
    off = -a[:, 1:-1]
    rhs = np.full(diag.shape, h * h)
    n_int = m - 1
    c = np.zeros_like(diag)
    dd = np.zeros_like(diag)
    c[:, 0] = off[:, 0] / diag[:, 0] if n_int > 1 else 0
    dd[:, 0] = rhs[:, 0] / diag[:, 0]
    for k in range(1, n_int):
        den = diag[:, k] - off[:, k - 1] * c[:, k - 1]
        if k < n_int - 1:
            c[:, k] = off[:, k] / den
        dd[:, k] = (rhs[:, k] - off[:, k - 1] * dd[:, k - 1]) / den
    q = np.zeros_like(diag)
    q[:, -1] = dd[:, -1]
    for k in range(n_int - 2, -1, -1):
        q[:, k] = dd[:, k] - c[:, k] * q[:, k + 1]
    return q[:, m // 2 - 1]


def elliptic_reference(level=4, m=20, reps=16, seed=7):
    ests = []
    for r in range(reps):
        pts = qmc.Sobol(8, scramble=True, seed=seed + r).random_base2(m)
        vals = np.concatenate([elliptic_q(pts[k:k + 2**16], level) for k in range(0, 2**m, 2**16)])
        ests.append(vals.mean())
    ests = np.array(ests)
    return ests.mean(), ests.std(ddof=1) / np.sqrt(reps)


if __name__ == "__main__":
    print("jsu mean (closed, scipy):", jsu_mean())
    print("elliptic a=0 check q(1/2) =", elliptic_q(np.full((1, 8), 0.5), 3))
    mean, se = elliptic_reference()
    print(f"elliptic E[Q_4] = {mean:.15f} +- {se:.2e}")
