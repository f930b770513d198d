"""Elements of Z_q[X]/(X^n + 1): arithmetic, sampling, serialization.

A RingElement is an immutable vector of n canonical residues in [0, q)
tagged with the domain it lives in (coefficient or NTT). Multiplication
runs through the NTT fast path; the transform of an element is memoized on
the element since values never mutate.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import ntt
from .errors import ConfigurationError
from .params import DOMAIN_COEFF, DOMAIN_NTT, RingParams

GAUSS_TAIL_SIGMAS = 10.0  # noise samples are truncated at 10 sigma

_HEADER = 16  # n:u32 | q:u64 | domain:u8 | 3 reserved bytes


@dataclass(frozen=True, eq=False)
class RingElement:
    params: RingParams
    coeffs: np.ndarray
    domain: int = DOMAIN_COEFF
    _dual: "RingElement | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.int64, copy=True)
        if arr.shape != (self.params.n,):
            raise ConfigurationError(
                f"expected {self.params.n} coefficients, got shape {arr.shape}"
            )
        if arr.min() < 0 or arr.max() >= self.params.q:
            arr = np.mod(arr, self.params.q)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)
        if self.domain not in (DOMAIN_COEFF, DOMAIN_NTT):
            raise ConfigurationError(f"bad domain tag {self.domain}")

    def __eq__(self, other):
        return (
            isinstance(other, RingElement)
            and self.params == other.params
            and self.domain == other.domain
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return negate(self)

    def __mul__(self, other):
        return mul(self, other)

    def to_ntt(self) -> "RingElement":
        if self.domain == DOMAIN_NTT:
            return self
        if self._dual is None:
            plan = ntt.get_plan(self.params.n, self.params.q)
            out = RingElement(self.params, ntt.forward(self.coeffs, plan), DOMAIN_NTT)
            object.__setattr__(out, "_dual", self)
            object.__setattr__(self, "_dual", out)
        return self._dual

    def from_ntt(self) -> "RingElement":
        if self.domain == DOMAIN_COEFF:
            return self
        if self._dual is None:
            plan = ntt.get_plan(self.params.n, self.params.q)
            out = RingElement(self.params, ntt.inverse(self.coeffs, plan), DOMAIN_COEFF)
            object.__setattr__(out, "_dual", self)
            object.__setattr__(self, "_dual", out)
        return self._dual

    def signed(self) -> np.ndarray:
        """Coefficients lifted to signed representatives in [-q/2, q/2)."""
        q = self.params.q
        return np.where(self.coeffs > q // 2, self.coeffs - q, self.coeffs)


def _check_pair(x: RingElement, y: RingElement):
    if x.params != y.params:
        raise ConfigurationError("ring parameter mismatch")
    if x.domain != y.domain:
        raise ConfigurationError("domain mismatch (coefficient vs NTT)")


def zero(params: RingParams, domain: int = DOMAIN_COEFF) -> RingElement:
    return RingElement(params, np.zeros(params.n, dtype=np.int64), domain)


def one(params: RingParams) -> RingElement:
    c = np.zeros(params.n, dtype=np.int64)
    c[0] = 1
    return RingElement(params, c)


def add(x: RingElement, y: RingElement) -> RingElement:
    _check_pair(x, y)
    s = x.coeffs + y.coeffs
    s -= x.params.q * (s >= x.params.q)
    return RingElement(x.params, s, x.domain)


def sub(x: RingElement, y: RingElement) -> RingElement:
    _check_pair(x, y)
    d = x.coeffs - y.coeffs
    d += x.params.q * (d < 0)
    return RingElement(x.params, d, x.domain)


def negate(x: RingElement) -> RingElement:
    return RingElement(x.params, np.mod(-x.coeffs, x.params.q), x.domain)


def mul(x: RingElement, y: RingElement) -> RingElement:
    """Negacyclic product. Coefficient inputs round-trip through the NTT;
    NTT inputs multiply pointwise and stay in the NTT domain."""
    _check_pair(x, y)
    plan = ntt.get_plan(x.params.n, x.params.q)
    if x.domain == DOMAIN_NTT:
        return RingElement(x.params, ntt.pointwise(x.coeffs, y.coeffs, plan), DOMAIN_NTT)
    prod = ntt.pointwise(x.to_ntt().coeffs, y.to_ntt().coeffs, plan)
    return RingElement(x.params, ntt.inverse(prod, plan), DOMAIN_COEFF)


# --- sampling -------------------------------------------------------------


def sample_uniform(params: RingParams, seed: bytes, domain_label: bytes | str) -> RingElement:
    """Deterministic uniform element from a seed and a stream label.

    Expands SHAKE-256(seed || label) and rejection-samples 64-bit words so
    every residue is exactly uniform over [0, q).
    """
    if isinstance(domain_label, str):
        domain_label = domain_label.encode()
    xof = hashlib.shake_256(seed + b"/" + domain_label)
    q = params.q
    limit = (1 << 64) // q * q
    out = np.empty(params.n, dtype=np.int64)
    have = 0
    nbytes = 8 * params.n
    offset = 0
    while have < params.n:
        offset += nbytes
        words = np.frombuffer(xof.digest(offset)[offset - nbytes :], dtype="<u8")
        words = words[words < limit]
        take = min(params.n - have, len(words))
        out[have : have + take] = (words[:take] % q).astype(np.int64)
        have += take
    return RingElement(params, out)


def sample_ternary(params: RingParams, rng: np.random.Generator) -> RingElement:
    coeffs = rng.integers(-1, 2, size=params.n)
    return RingElement(params, np.mod(coeffs, params.q))


def sample_gaussian(params: RingParams, sigma: float, rng: np.random.Generator) -> RingElement:
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    raw = rng.normal(0.0, sigma, size=params.n)
    bound = GAUSS_TAIL_SIGMAS * sigma
    clipped = np.clip(raw, -bound, bound)
    return RingElement(params, np.mod(np.rint(clipped).astype(np.int64), params.q))


def sample_error(params: RingParams, rng: np.random.Generator) -> RingElement:
    return sample_gaussian(params, params.sigma_err, rng)


def sample_flood(params: RingParams, rng: np.random.Generator) -> RingElement:
    return sample_gaussian(params, params.sigma_flood, rng)


# --- wire format ----------------------------------------------------------


def to_bytes(x: RingElement) -> bytes:
    head = (
        x.params.n.to_bytes(4, "little")
        + x.params.q.to_bytes(8, "little")
        + bytes([x.domain, 0, 0, 0])
    )
    return head + x.coeffs.astype("<u8").tobytes()


def serialized_size(params: RingParams) -> int:
    return _HEADER + 8 * params.n


def from_bytes(buf: bytes, params: RingParams, offset: int = 0) -> tuple[RingElement, int]:
    """Parse one element at offset; returns (element, offset past it)."""
    if len(buf) - offset < _HEADER:
        raise ConfigurationError("ring element truncated")
    n = int.from_bytes(buf[offset : offset + 4], "little")
    q = int.from_bytes(buf[offset + 4 : offset + 12], "little")
    domain = buf[offset + 12]
    if n != params.n or q != params.q:
        raise ConfigurationError(f"serialized element for n={n}, q={q} does not match params")
    body = offset + _HEADER
    end = body + 8 * n
    if len(buf) < end:
        raise ConfigurationError("ring element truncated")
    coeffs = np.frombuffer(buf[body:end], dtype="<u8").astype(np.int64)
    return RingElement(params, coeffs, domain), end
