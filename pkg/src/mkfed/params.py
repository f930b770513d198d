"""Ring and encoding parameter sets.

A parameter set fixes the ring Z_q[X]/(X^n + 1), the error and flooding
noise widths, and the seed of the common reference string. Presets:

  toy       n=8, q=3329. Structural and exactness tests only; the modulus
            is far too small to carry scaled real vectors.
  small     n=2048, 51-bit q, scale 2^44. Fast federated runs.
  standard  n=4096, 52-bit q, scale 2^46. Default for accuracy-sensitive
            aggregation (supports ~16 devices with wide noise margin).
"""

import hashlib
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .ntt import MAX_MODULUS_BITS, is_prime

DOMAIN_COEFF = 0
DOMAIN_NTT = 1

MIN_SCALE = 2.0**20


@dataclass(frozen=True)
class RingParams:
    """Parameters of the polynomial ring and its noise distributions.

    sigma_err is the standard deviation of the per-ciphertext error
    distribution; sigma_flood masks decryption shares and must be strictly
    wider. Samples from either are truncated at 10 standard deviations.
    """

    n: int
    q: int
    sigma_err: float
    sigma_flood: float
    seed: bytes = field(repr=False)

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1) != 0:
            raise ConfigurationError(f"ring dimension must be a power of two >= 8, got {self.n}")
        if self.q.bit_length() > MAX_MODULUS_BITS:
            raise ConfigurationError(
                f"modulus must fit in {MAX_MODULUS_BITS} bits for exact vector arithmetic"
            )
        if not is_prime(self.q):
            raise ConfigurationError(f"modulus {self.q} is not prime")
        if self.q % (2 * self.n) != 1:
            raise ConfigurationError(f"modulus must satisfy q = 1 mod 2n, got q={self.q}, n={self.n}")
        if self.sigma_err <= 0:
            raise ConfigurationError("sigma_err must be positive")
        if self.sigma_flood <= self.sigma_err:
            raise ConfigurationError("sigma_flood must exceed sigma_err")
        if len(self.seed) != 32:
            raise ConfigurationError("seed must be 32 bytes")


@dataclass(frozen=True)
class EncodingParams:
    """Fixed-point scale and usable slot count (n/2 reals per plaintext)."""

    scale: float
    slots: int

    def __post_init__(self):
        if self.scale < MIN_SCALE:
            raise ConfigurationError(f"scale must be at least 2^20, got {self.scale}")
        s = int(self.scale)
        if s != self.scale or s & (s - 1) != 0:
            raise ConfigurationError("scale must be a power of two")
        if self.slots < 1:
            raise ConfigurationError("slots must be positive")


@dataclass(frozen=True)
class Preset:
    name: str
    n: int
    q: int
    sigma_err: float
    sigma_flood: float
    scale: float


PRESETS = {
    "toy": Preset("toy", 8, 3329, 3.2, 25.6, 2.0**20),
    "small": Preset("small", 2048, 2251799813640193, 3.2, 3.2 * 2**20, 2.0**44),
    "standard": Preset("standard", 4096, 4503599627149313, 3.2, 3.2 * 2**20, 2.0**46),
}


def preset_seed(name: str) -> bytes:
    return hashlib.sha256(b"mkfed-crs:" + name.encode()).digest()


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        ) from None


def params_from_preset(name: str, seed: bytes | None = None) -> tuple[RingParams, EncodingParams]:
    p = get_preset(name)
    rp = RingParams(p.n, p.q, p.sigma_err, p.sigma_flood, seed if seed is not None else preset_seed(name))
    ep = EncodingParams(p.scale, p.n // 2)
    return rp, ep
