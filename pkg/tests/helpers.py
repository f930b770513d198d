"""Shared test utilities: independent oracles and noise-forcing RNG stubs."""

import numpy as np

from mkfed.params import RingParams
from mkfed.ring import RingElement

TEST_SEED = bytes(range(32))


def make_params(n, q, sigma_err=3.2, sigma_flood=25.6):
    return RingParams(n, q, sigma_err, sigma_flood, TEST_SEED)


def school_mul(x: RingElement, y: RingElement) -> RingElement:
    """O(n^2) negacyclic convolution over exact Python integers.

    Deliberately avoids the NTT code path: plain shift-and-add of the full
    product followed by the X^n = -1 fold.
    """
    n, q = x.params.n, x.params.q
    b = y.coeffs.astype(object)
    full = np.zeros(2 * n - 1, dtype=object)
    for i, a_i in enumerate(x.coeffs):
        full[i : i + n] += int(a_i) * b
    folded = full[:n].copy()
    folded[: n - 1] -= full[n:]
    return RingElement(x.params, np.mod(folded, q).astype(np.int64), x.domain)


def school_add(x: RingElement, y: RingElement) -> RingElement:
    q = x.params.q
    coeffs = [(int(a) + int(b)) % q for a, b in zip(x.coeffs, y.coeffs)]
    return RingElement(x.params, np.array(coeffs, dtype=np.int64), x.domain)


def random_element(params, rng) -> RingElement:
    return RingElement(params, rng.integers(0, params.q, params.n, dtype=np.int64))


class ZeroRng:
    """Stands in for a Generator but samples nothing: every draw is zero.

    Feeding this to keygen/encrypt collapses all secrets and noise to zero,
    which turns the scheme into the identity pipeline the exactness tests
    assert against.
    """

    def integers(self, low, high=None, size=None, dtype=np.int64):
        return np.zeros(size, dtype=dtype)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.zeros(size)


class ZeroNoiseRng:
    """Real ternary draws, zeroed Gaussian noise (keeps keys, kills errors)."""

    def __init__(self, rng):
        self._rng = rng

    def integers(self, *args, **kwargs):
        return self._rng.integers(*args, **kwargs)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.zeros(size)
