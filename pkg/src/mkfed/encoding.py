"""Fixed-point encoding between real vectors and ring plaintexts.

A real vector occupies n/2 slots. Slot k is the value of the polynomial at
zeta^(4k+1), where zeta = exp(i*pi/n) is a primitive 2n-th root of unity;
the remaining n/2 evaluation points are the complex conjugates, which pins
the polynomial coefficients to real values. Values are multiplied by a
power-of-two scale and rounded, so addition of plaintexts (and ciphertexts)
is addition of the embedded vectors up to rounding noise.

The evaluation reduces to a length-n/2 FFT: with u_j = (m_j + i*m_{j+n/2})
* zeta^j, slot_k = sum_j u_j * exp(2*pi*i*j*k/(n/2)).
"""

from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, EncodingOverflowError
from .params import DOMAIN_COEFF, EncodingParams, RingParams
from .ring import RingElement

MAX_PLAIN_MAGNITUDE = 2.0**20


@lru_cache(maxsize=None)
def _twist(n: int) -> np.ndarray:
    # zeta^j for j < n/2, zeta = exp(i*pi/n)
    return np.exp(1j * np.pi * np.arange(n // 2) / n)


def encode(values, ep: EncodingParams, rp: RingParams) -> RingElement:
    """Embed up to n/2 reals into a plaintext polynomial at the given scale."""
    v = np.asarray(values, dtype=np.float64)
    half = rp.n // 2
    if ep.slots != half:
        raise ConfigurationError(f"encoding params expect {ep.slots} slots, ring provides {half}")
    if v.ndim != 1 or len(v) > half:
        raise ConfigurationError(f"expected at most {half} values, got shape {v.shape}")
    if len(v) and not np.all(np.isfinite(v)):
        raise ConfigurationError("values must be finite")
    mag = float(np.max(np.abs(v))) if len(v) else 0.0
    if mag > MAX_PLAIN_MAGNITUDE or mag * ep.scale >= rp.q / 4:
        raise EncodingOverflowError(
            f"|value| up to {mag:g} at scale {ep.scale:g} overflows modulus headroom"
        )
    z = np.zeros(half, dtype=np.complex128)
    z[: len(v)] = v
    u = np.fft.fft(z) / half * np.conj(_twist(rp.n))
    coeffs = np.rint(np.concatenate([u.real, u.imag]) * ep.scale).astype(np.int64)
    return RingElement(rp, np.mod(coeffs, rp.q))


def decode(p: RingElement, ep: EncodingParams, rp: RingParams) -> np.ndarray:
    """Recover the n/2 embedded reals from a coefficient-domain plaintext."""
    if p.domain != DOMAIN_COEFF:
        raise ConfigurationError("decode expects a coefficient-domain element")
    if p.params != rp:
        raise ConfigurationError("ring parameter mismatch")
    half = rp.n // 2
    s = p.signed().astype(np.float64)
    u = (s[:half] + 1j * s[half:]) * _twist(rp.n)
    z = np.fft.ifft(u) * half
    return z.real / ep.scale


def chunk_weights(w, slots: int) -> list[np.ndarray]:
    """Split a flat weight vector into zero-padded slot-sized chunks."""
    w = np.asarray(w, dtype=np.float64)
    if slots < 1:
        raise ConfigurationError("slots must be positive")
    if len(w) == 0:
        return []
    chunks = []
    for start in range(0, len(w), slots):
        piece = w[start : start + slots]
        if len(piece) < slots:
            piece = np.concatenate([piece, np.zeros(slots - len(piece))])
        chunks.append(piece)
    return chunks


def unchunk(chunks, original_len: int) -> np.ndarray:
    """Inverse of chunk_weights; validates the chunk count matches the length."""
    if original_len < 0:
        raise ConfigurationError("negative length")
    if not chunks:
        if original_len:
            raise ConfigurationError("no chunks for nonzero length")
        return np.zeros(0)
    slots = len(chunks[0])
    if any(len(c) != slots for c in chunks):
        raise ConfigurationError("inconsistent chunk sizes")
    expected = -(-original_len // slots)
    if len(chunks) != expected:
        raise ConfigurationError(
            f"{len(chunks)} chunks of {slots} slots cannot carry {original_len} values"
        )
    return np.concatenate(chunks)[:original_len]
