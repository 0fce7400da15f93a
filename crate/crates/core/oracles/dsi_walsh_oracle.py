"""Brute-force Walsh-series oracle for the digitally-shift-invariant kernels.

R_alpha(x) = sum_{k>=1} w_alpha(k) wal_k(x), with w_alpha(k) = 2^{-mu_alpha(k)} for
alpha >= 2 and w_1(k) = 2 * 4^{-mu_1(k)}.  mu_alpha(k) sums the alpha largest
1-based positions of the set bits of k.  Truncating k < 2^T and evaluating at
dyadic x with t <= T bits gives the closed forms to ~2^{-T}.
"""
import numpy as np

T = 22
k = np.arange(1, 2**T, dtype=np.int64)


def mu(alpha):
    out = np.zeros(k.shape, dtype=np.float64)
    rem = k.copy()
    for _ in range(alpha):
        pos = np.where(rem > 0, np.floor(np.log2(np.maximum(rem, 1))) + 1, 0)
        out += pos
        rem = np.where(rem > 0, rem - (2 ** (pos - 1)).astype(np.int64), 0)
    return out


def weights(alpha):
    if alpha == 1:
        return 2.0 * 4.0 ** (-mu(1))
    return 2.0 ** (-mu(alpha))


def walsh_sum(alpha, xb, t):
    # wal_k(x) = (-1)^{sum_a k_a x_{a+1}}, x_{a+1} = bit (t-1-a) of xb
    w = weights(alpha)
    rev = 0
    for a in range(t):
        if (xb >> (t - 1 - a)) & 1:
            rev |= 1 << a
    par = np.bitwise_count(k & rev) & 1 if hasattr(np, "bitwise_count") else np.array([bin(v).count("1") & 1 for v in (k & rev)])
    return float(np.sum(w * (1 - 2 * par.astype(np.float64))))


def closed(alpha, xb, t):
    x = xb / 2**t
    b = -np.floor(np.log2(x))
    t1, t2, t3 = 2**-b, 4**-b, 8**-b
    if alpha == 1:
        return 1 - 3 * t1
    if alpha == 2:
        return -1 - b * x + 2.5 * (1 - t1)
    if alpha == 3:
        return -1 + b * x**2 - 5 * (1 - t1) * x + 43 / 18 * (1 - t2)
    s = sum((1 - 2 * ((xb >> (t - 1 - a)) & 1)) / 8.0**a for a in range(t)) + 8.0**-t * 8 / 7
    return (-1 - 2 / 3 * b * x**3 + 5 * (1 - t1) * x**2 - 43 / 9 * (1 - t2) * x
            + 701 / 294 * (1 - t3) + b * (s / 48 - 1 / 42))


if __name__ == "__main__":
    rng = np.random.default_rng(3)
    t = 12
    for alpha in (1, 2, 3, 4):
        zero = float(np.sum(weights(alpha)))
        errs = [abs(walsh_sum(alpha, int(xb), t) - closed(alpha, int(xb), t))
                for xb in rng.integers(1, 2**t, 6)]
        print(f"alpha={alpha} R(0) partial sum = {zero:.15f} max|series-closed| = {max(errs):.2e}")
