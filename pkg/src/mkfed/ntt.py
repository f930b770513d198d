"""Negacyclic number theoretic transform over Z_q[X]/(X^n + 1).

The transform evaluates polynomials at odd powers of a primitive 2n-th root
of unity, so the pointwise product of two transformed polynomials is the
negacyclic convolution (X^n = -1) of the originals. All arithmetic is exact:
64-bit products are reduced with a float-assisted quotient estimate whose
off-by-a-few error is absorbed by a final modular correction. This bounds
the supported modulus to 52 bits (operands must be exact in a float64).
"""

from functools import lru_cache

import numpy as np

from .errors import ConfigurationError

# Largest modulus the vectorized exact multiply supports.
MAX_MODULUS_BITS = 52

_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


def is_prime(m: int) -> bool:
    """Deterministic Miller-Rabin, exact for all m < 2^64."""
    if m < 2:
        return False
    for p in _MR_WITNESSES:
        if m % p == 0:
            return m == p
    d = m - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, m)
        if x in (1, m - 1):
            continue
        for _ in range(r - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


def _bit_reverse(x: int, bits: int) -> int:
    out = 0
    for _ in range(bits):
        out = (out << 1) | (x & 1)
        x >>= 1
    return out


def _primitive_2n_root(n: int, q: int) -> int:
    # psi has order exactly 2n iff psi^n == -1 (2n is a power of two).
    exp = (q - 1) // (2 * n)
    for x in range(2, q):
        psi = pow(x, exp, q)
        if pow(psi, n, q) == q - 1:
            return psi
    raise ConfigurationError(f"no primitive 2n-th root of unity mod {q}")


class NttPlan:
    """Precomputed twiddle tables for one (n, q) pair."""

    def __init__(self, n: int, q: int):
        self.n = n
        self.q = q
        self.qinv = 1.0 / q
        psi = _primitive_2n_root(n, q)
        ipsi = pow(psi, q - 2, q)
        bits = n.bit_length() - 1
        rev = [_bit_reverse(i, bits) for i in range(n)]
        self.psi_brv = np.array([pow(psi, r, q) for r in rev], dtype=np.int64)
        self.ipsi_brv = np.array([pow(ipsi, r, q) for r in rev], dtype=np.int64)
        self.psi_brv_f = self.psi_brv.astype(np.float64)
        self.ipsi_brv_f = self.ipsi_brv.astype(np.float64)
        self.ninv = pow(n, q - 2, q)


@lru_cache(maxsize=None)
def get_plan(n: int, q: int) -> NttPlan:
    return NttPlan(n, q)


def mulmod(a, b, q: int, qinv: float, bf=None):
    """Exact elementwise a*b mod q for int64 arrays with q < 2^52.

    The quotient is estimated in float64 (error at most a couple of units),
    the remainder is recovered through 64-bit wraparound arithmetic, and a
    final floored mod folds the result into [0, q).
    """
    if bf is None:
        bf = np.asarray(b, dtype=np.float64)
    k = np.rint(a.astype(np.float64) * bf * qinv)
    au = a.astype(np.uint64)
    bu = np.asarray(b).astype(np.uint64)
    ku = k.astype(np.int64).astype(np.uint64)
    r = (au * bu - ku * np.uint64(q)).astype(np.uint64)
    return np.mod(r.view(np.int64), q)


def forward(coeffs: np.ndarray, plan: NttPlan) -> np.ndarray:
    """Cooley-Tukey forward transform, natural order in, bit-reversed out."""
    q = plan.q
    a = coeffs.copy()
    t = plan.n
    m = 1
    while m < plan.n:
        t //= 2
        zetas = plan.psi_brv[m : 2 * m, None]
        zetas_f = plan.psi_brv_f[m : 2 * m, None]
        blk = a.reshape(m, 2, t)
        lo = blk[:, 0, :]
        hi = mulmod(blk[:, 1, :], zetas, q, plan.qinv, bf=zetas_f)
        diff = lo - hi
        diff += q * (diff < 0)
        summ = lo + hi
        summ -= q * (summ >= q)
        blk[:, 0, :] = summ
        blk[:, 1, :] = diff
        m *= 2
    return a


def inverse(values: np.ndarray, plan: NttPlan) -> np.ndarray:
    """Gentleman-Sande inverse transform, bit-reversed in, natural order out."""
    q = plan.q
    a = values.copy()
    t = 1
    m = plan.n
    while m > 1:
        m //= 2
        zetas = plan.ipsi_brv[m : 2 * m, None]
        zetas_f = plan.ipsi_brv_f[m : 2 * m, None]
        blk = a.reshape(m, 2, t)
        lo = blk[:, 0, :]
        hi = blk[:, 1, :]
        summ = lo + hi
        summ -= q * (summ >= q)
        diff = lo - hi
        diff += q * (diff < 0)
        blk[:, 0, :] = summ
        blk[:, 1, :] = mulmod(diff, zetas, q, plan.qinv, bf=zetas_f)
        t *= 2
    return mulmod(a, np.int64(plan.ninv), q, plan.qinv)


def pointwise(a: np.ndarray, b: np.ndarray, plan: NttPlan) -> np.ndarray:
    return mulmod(a, b, plan.q, plan.qinv)
