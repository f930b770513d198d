"""Additive multi-key homomorphic encryption over the negacyclic ring.

Two schemes share the key material:

* The primary scheme encrypts under one aggregated public key (the sum of
  all devices' key shares). Ciphertexts from different devices add into a
  two-element sum, and decryption needs one masked share per contributor:
  no proper subset of devices, nor the aggregator, can open anything.

* The baseline scheme encrypts under each device's own key. Sums carry one
  c1 per device (N+1 ring elements total) and partial decryptions are
  computed per device c1. It is kept for size/cost comparison and for the
  regression tests showing why its partial decryptions leak individual
  plaintexts to the aggregator.

Every aggregate-able object carries a fingerprint of the key or sum it is
bound to, so cross-key and cross-sum combinations fail loudly.
"""

import hashlib
import math
from dataclasses import dataclass

from . import ring
from .errors import ConfigurationError, MixedKeyError, QuorumError, ShareBindingError
from .params import EncodingParams, RingParams, params_from_preset
from .ring import RingElement

CRS_LABEL = "crs"


@dataclass(frozen=True)
class SecretKey:
    s: RingElement
    device_id: int


@dataclass(frozen=True)
class PublicKeyShare:
    b: RingElement
    device_id: int


@dataclass(frozen=True)
class AggregatedPublicKey:
    b_tilde: RingElement
    contributor_ids: tuple
    fingerprint: bytes


@dataclass(frozen=True)
class Ciphertext:
    c0: RingElement
    c1: RingElement
    key_fingerprint: bytes
    contributors: tuple


@dataclass(frozen=True)
class CiphertextSum:
    c_sum0: RingElement
    c_sum1: RingElement
    count: int
    key_fingerprint: bytes
    contributors: tuple
    sum_fingerprint: bytes

    def digest(self) -> "SumDigest":
        return SumDigest(self.c_sum1, self.contributors, self.sum_fingerprint)


@dataclass(frozen=True)
class SumDigest:
    """The share-computation view of a ciphertext sum: c1 only.

    Devices receive just c_sum1 (never c_sum0, which would let a device
    holding all shares open the sum unilaterally), so shares are computed
    against this digest rather than the full sum.
    """

    c_sum1: RingElement
    contributors: tuple
    sum_fingerprint: bytes


@dataclass(frozen=True)
class DecryptionShare:
    d: RingElement
    device_id: int
    sum_fingerprint: bytes


@dataclass(frozen=True)
class MkCiphertextSum:
    c0_sum: RingElement
    c1_list: tuple
    device_ids: tuple


def _fingerprint(tag: bytes, *parts: bytes) -> bytes:
    h = hashlib.sha256(tag)
    for p in parts:
        h.update(p)
    return h.digest()


def key_share_fingerprint(pk: PublicKeyShare) -> bytes:
    return _fingerprint(b"mkfed-pk", pk.device_id.to_bytes(4, "little"), ring.to_bytes(pk.b))


def sum_digest(c_sum1: RingElement, contributors) -> SumDigest:
    fp = _fingerprint(b"mkfed-csum1", ring.to_bytes(c_sum1))
    return SumDigest(c_sum1, tuple(contributors), fp)


def setup_crs(params: RingParams) -> RingElement:
    """Common reference string: the uniform element every party derives
    from the shared parameter seed."""
    return ring.sample_uniform(params, params.seed, CRS_LABEL)


def setup(preset_name: str, seed: bytes | None = None):
    """Return (ring params, encoding params, common reference string)."""
    rp, ep = params_from_preset(preset_name, seed)
    return rp, ep, setup_crs(rp)


def keygen(params: RingParams, crs: RingElement, rng, device_id: int):
    """Sample a ternary secret s and publish b = -s*a + e."""
    if crs.params != params:
        raise ConfigurationError("CRS does not match ring parameters")
    s = ring.sample_ternary(params, rng)
    e = ring.sample_error(params, rng)
    b = ring.negate(s * crs) + e
    return SecretKey(s, device_id), PublicKeyShare(b, device_id)


def aggregate_public_keys(shares) -> AggregatedPublicKey:
    """Sum at least two key shares into the joint encryption key."""
    shares = list(shares)
    if len(shares) < 2:
        raise ConfigurationError("aggregated key needs at least 2 contributors")
    ids = [sh.device_id for sh in shares]
    if len(set(ids)) != len(ids):
        raise ConfigurationError(f"duplicate device ids in key aggregation: {sorted(ids)}")
    params = shares[0].b.params
    if any(sh.b.params != params for sh in shares):
        raise ConfigurationError("ring parameter mismatch among key shares")
    b_tilde = shares[0].b
    for sh in shares[1:]:
        b_tilde = b_tilde + sh.b
    contributor_ids = tuple(sorted(ids))
    fp = _fingerprint(
        b"mkfed-apk",
        b"".join(i.to_bytes(4, "little") for i in contributor_ids),
        ring.to_bytes(b_tilde),
    )
    return AggregatedPublicKey(b_tilde, contributor_ids, fp)


def encrypt(m: RingElement, apk: AggregatedPublicKey, crs: RingElement, params: RingParams, rng) -> Ciphertext:
    """(v*b_tilde + m + e0, v*a + e1) under the aggregated key."""
    if m.params != params or crs.params != params or apk.b_tilde.params != params:
        raise ConfigurationError("ring parameter mismatch")
    v = ring.sample_ternary(params, rng)
    e0 = ring.sample_error(params, rng)
    e1 = ring.sample_error(params, rng)
    c0 = v * apk.b_tilde + m + e0
    c1 = v * crs + e1
    return Ciphertext(c0, c1, apk.fingerprint, apk.contributor_ids)


def add_ciphertexts(cts) -> CiphertextSum:
    """Componentwise sum of ciphertexts under one aggregated key."""
    cts = list(cts)
    if not cts:
        raise ConfigurationError("nothing to aggregate")
    fp = cts[0].key_fingerprint
    if any(ct.key_fingerprint != fp for ct in cts):
        raise MixedKeyError("mixed-key aggregation: ciphertexts under different aggregated keys")
    c0 = cts[0].c0
    c1 = cts[0].c1
    for ct in cts[1:]:
        c0 = c0 + ct.c0
        c1 = c1 + ct.c1
    digest = sum_digest(c1, cts[0].contributors)
    return CiphertextSum(c0, c1, len(cts), fp, digest.contributors, digest.sum_fingerprint)


def decryption_share(sk: SecretKey, cs, params: RingParams, rng) -> DecryptionShare:
    """One device's masked opening d = s*c_sum1 + e, e from the flooding
    distribution. Accepts a CiphertextSum or its c1-only SumDigest."""
    if sk.device_id not in cs.contributors:
        raise ShareBindingError(
            f"device {sk.device_id} is not a contributor to this aggregated key"
        )
    if cs.c_sum1.params != params:
        raise ConfigurationError("ring parameter mismatch")
    e_star = ring.sample_flood(params, rng)
    d = sk.s * cs.c_sum1 + e_star
    return DecryptionShare(d, sk.device_id, cs.sum_fingerprint)


def merge(cs: CiphertextSum, shares) -> RingElement:
    """Open the sum: c_sum0 + sum of all decryption shares.

    Requires exactly one share per contributor, each bound to this sum.
    The result is the plaintext sum plus the additive noise term; decode
    it with the same encoding params used at encryption.
    """
    shares = list(shares)
    by_device = {}
    for sh in shares:
        if sh.device_id in by_device:
            raise QuorumError(
                f"duplicate decryption share from device {sh.device_id}", extra=[sh.device_id]
            )
        by_device[sh.device_id] = sh
    expected = set(cs.contributors)
    got = set(by_device)
    missing = sorted(expected - got)
    extra = sorted(got - expected)
    if missing or extra:
        detail = []
        if missing:
            detail.append(f"missing devices {missing}")
        if extra:
            detail.append(f"unexpected devices {extra}")
        raise QuorumError(
            "incomplete decryption quorum: " + ", ".join(detail), missing=missing, extra=extra
        )
    for sh in shares:
        if sh.sum_fingerprint != cs.sum_fingerprint:
            raise ShareBindingError(
                f"share from device {sh.device_id} is bound to a different ciphertext sum"
            )
    acc = cs.c_sum0
    for dev in cs.contributors:
        acc = acc + by_device[dev].d
    return acc


# --- baseline per-device-key scheme ----------------------------------------


def mk_encrypt(m: RingElement, pk: PublicKeyShare, crs: RingElement, params: RingParams, rng) -> Ciphertext:
    """Encrypt under one device's own key share (baseline scheme)."""
    if m.params != params or crs.params != params or pk.b.params != params:
        raise ConfigurationError("ring parameter mismatch")
    v = ring.sample_ternary(params, rng)
    e0 = ring.sample_error(params, rng)
    e1 = ring.sample_error(params, rng)
    c0 = v * pk.b + m + e0
    c1 = v * crs + e1
    return Ciphertext(c0, c1, key_share_fingerprint(pk), (pk.device_id,))


def decrypt_individual(ct: Ciphertext, sk: SecretKey, params: RingParams) -> RingElement:
    """c0 + c1*s; meaningful only for the key that produced the ciphertext."""
    if ct.c0.params != params:
        raise ConfigurationError("ring parameter mismatch")
    return ct.c0 + ct.c1 * sk.s


def mk_add(cts) -> MkCiphertextSum:
    """Baseline aggregation: sum the c0 halves, concatenate the c1 halves."""
    cts = list(cts)
    if not cts:
        raise ConfigurationError("nothing to aggregate")
    ids = [ct.contributors[0] for ct in cts]
    if len(set(ids)) != len(ids):
        raise MixedKeyError(f"duplicate device ids in baseline aggregation: {sorted(ids)}")
    if len({ct.key_fingerprint for ct in cts}) != len(cts):
        raise MixedKeyError("baseline aggregation expects one ciphertext per device key")
    order = sorted(range(len(cts)), key=lambda i: ids[i])
    c0 = cts[order[0]].c0
    for i in order[1:]:
        c0 = c0 + cts[i].c0
    return MkCiphertextSum(
        c0,
        tuple(cts[i].c1 for i in order),
        tuple(ids[i] for i in order),
    )


def mk_part_dec(sk: SecretKey, c1_i: RingElement, params: RingParams, rng) -> DecryptionShare:
    """Baseline partial decryption of one device's own c1 (noise flooded)."""
    if c1_i.params != params:
        raise ConfigurationError("ring parameter mismatch")
    e_star = ring.sample_flood(params, rng)
    mu = sk.s * c1_i + e_star
    return DecryptionShare(mu, sk.device_id, _fingerprint(b"mkfed-c1", ring.to_bytes(c1_i)))


def mk_merge(mks: MkCiphertextSum, shares) -> RingElement:
    """Baseline opening: c0_sum plus every device's partial decryption."""
    shares = list(shares)
    if len(shares) != len(mks.device_ids):
        raise QuorumError(
            f"expected {len(mks.device_ids)} partial decryptions, got {len(shares)}",
            missing=sorted(set(mks.device_ids) - {sh.device_id for sh in shares}),
        )
    by_device = {sh.device_id: sh for sh in shares}
    if set(by_device) != set(mks.device_ids):
        raise QuorumError(
            "partial decryptions do not match the aggregated devices",
            missing=sorted(set(mks.device_ids) - set(by_device)),
            extra=sorted(set(by_device) - set(mks.device_ids)),
        )
    for dev, c1 in zip(mks.device_ids, mks.c1_list):
        expected = _fingerprint(b"mkfed-c1", ring.to_bytes(c1))
        if by_device[dev].sum_fingerprint != expected:
            raise ShareBindingError(f"partial decryption from device {dev} targets a different c1")
    acc = mks.c0_sum
    for dev in mks.device_ids:
        acc = acc + by_device[dev].d
    return acc


# --- noise accounting -------------------------------------------------------


@dataclass(frozen=True)
class NoiseBudget:
    bound_per_slot: float
    ok: bool


def noise_budget(params: RingParams, ep: EncodingParams, n_devices: int) -> NoiseBudget:
    """Worst-case post-decode noise bound (in scale units) for an N-device sum.

    Infinity-norm accounting of the merged noise
    (sum v)*(sum e) + sum e0 + sum (s*e1 + e_flood), with ternary norms 1
    and Gaussian tails cut at 10 sigma; a ring product multiplies norms by
    n, and the decode transform contributes another factor of n. The sum
    decodes cleanly when the bound stays below scale/2.
    """
    if n_devices < 1:
        raise ConfigurationError("need at least one device")
    n = params.n
    tail_err = ring.GAUSS_TAIL_SIGMAS * params.sigma_err
    tail_flood = ring.GAUSS_TAIL_SIGMAS * params.sigma_flood
    coeff_bound = (
        n_devices**2 * n * tail_err
        + n_devices * tail_err
        + n_devices * (n * tail_err + tail_flood)
    )
    slot_bound = n * coeff_bound
    return NoiseBudget(slot_bound, bool(slot_bound < ep.scale / 2))


def expected_merge_tolerance(params: RingParams, ep: EncodingParams, n_devices: int) -> float:
    """High-probability per-slot decode error for an honest N-device merge.

    Unlike the worst-case budget this uses variance accounting (flooding
    noise dominates): slot std is sqrt(n/2 * N) * sigma_flood / scale; the
    returned value adds a 6-sigma margin.
    """
    std = math.sqrt(params.n / 2 * n_devices) * params.sigma_flood / ep.scale
    return 6.0 * std


# --- wire format ------------------------------------------------------------

TAG_PUBKEY = 1
TAG_AGGKEY = 2
TAG_CIPHERTEXT = 3
TAG_CIPHERSUM = 4
TAG_DECSHARE = 5
TAG_MKSUM = 6
TAG_SECKEY = 7

_WIRE_VERSION = 1
_ZERO_FP = bytes(32)


def _header(tag: int, id_or_count: int, fingerprint: bytes) -> bytes:
    return bytes([tag, _WIRE_VERSION]) + id_or_count.to_bytes(4, "little") + fingerprint


def _parse_header(buf: bytes, offset: int, expect_tag: int):
    if len(buf) - offset < 38:
        raise ConfigurationError("object header truncated")
    tag, version = buf[offset], buf[offset + 1]
    if tag != expect_tag:
        raise ConfigurationError(f"expected object tag {expect_tag}, found {tag}")
    if version != _WIRE_VERSION:
        raise ConfigurationError(f"unsupported wire version {version}")
    id_or_count = int.from_bytes(buf[offset + 2 : offset + 6], "little")
    fingerprint = buf[offset + 6 : offset + 38]
    return id_or_count, fingerprint, offset + 38


def _pack_ids(ids) -> bytes:
    return len(ids).to_bytes(4, "little") + b"".join(i.to_bytes(4, "little") for i in ids)


def _parse_ids(buf: bytes, offset: int):
    count = int.from_bytes(buf[offset : offset + 4], "little")
    offset += 4
    ids = tuple(
        int.from_bytes(buf[offset + 4 * i : offset + 4 * i + 4], "little") for i in range(count)
    )
    return ids, offset + 4 * count


def serialize_public_key_share(pk: PublicKeyShare) -> bytes:
    return _header(TAG_PUBKEY, pk.device_id, _ZERO_FP) + ring.to_bytes(pk.b)


def parse_public_key_share(buf: bytes, params: RingParams, offset: int = 0):
    device_id, _, offset = _parse_header(buf, offset, TAG_PUBKEY)
    b, offset = ring.from_bytes(buf, params, offset)
    return PublicKeyShare(b, device_id), offset


def serialize_aggregated_key(apk: AggregatedPublicKey) -> bytes:
    return (
        _header(TAG_AGGKEY, len(apk.contributor_ids), apk.fingerprint)
        + _pack_ids(apk.contributor_ids)
        + ring.to_bytes(apk.b_tilde)
    )


def parse_aggregated_key(buf: bytes, params: RingParams, offset: int = 0):
    _, fp, offset = _parse_header(buf, offset, TAG_AGGKEY)
    ids, offset = _parse_ids(buf, offset)
    b_tilde, offset = ring.from_bytes(buf, params, offset)
    return AggregatedPublicKey(b_tilde, ids, fp), offset


def serialize_ciphertext(ct: Ciphertext) -> bytes:
    return (
        _header(TAG_CIPHERTEXT, 0, ct.key_fingerprint)
        + _pack_ids(ct.contributors)
        + ring.to_bytes(ct.c0)
        + ring.to_bytes(ct.c1)
    )


def parse_ciphertext(buf: bytes, params: RingParams, offset: int = 0):
    _, fp, offset = _parse_header(buf, offset, TAG_CIPHERTEXT)
    ids, offset = _parse_ids(buf, offset)
    c0, offset = ring.from_bytes(buf, params, offset)
    c1, offset = ring.from_bytes(buf, params, offset)
    return Ciphertext(c0, c1, fp, ids), offset


def serialize_ciphertext_sum(cs: CiphertextSum) -> bytes:
    return (
        _header(TAG_CIPHERSUM, cs.count, cs.sum_fingerprint)
        + cs.key_fingerprint
        + _pack_ids(cs.contributors)
        + ring.to_bytes(cs.c_sum0)
        + ring.to_bytes(cs.c_sum1)
    )


def parse_ciphertext_sum(buf: bytes, params: RingParams, offset: int = 0):
    count, sum_fp, offset = _parse_header(buf, offset, TAG_CIPHERSUM)
    key_fp = buf[offset : offset + 32]
    offset += 32
    ids, offset = _parse_ids(buf, offset)
    c0, offset = ring.from_bytes(buf, params, offset)
    c1, offset = ring.from_bytes(buf, params, offset)
    return CiphertextSum(c0, c1, count, key_fp, ids, sum_fp), offset


def serialize_decryption_share(sh: DecryptionShare) -> bytes:
    return _header(TAG_DECSHARE, sh.device_id, sh.sum_fingerprint) + ring.to_bytes(sh.d)


def parse_decryption_share(buf: bytes, params: RingParams, offset: int = 0):
    device_id, fp, offset = _parse_header(buf, offset, TAG_DECSHARE)
    d, offset = ring.from_bytes(buf, params, offset)
    return DecryptionShare(d, device_id, fp), offset


def serialize_mk_sum(mks: MkCiphertextSum) -> bytes:
    body = _pack_ids(mks.device_ids) + ring.to_bytes(mks.c0_sum)
    for c1 in mks.c1_list:
        body += ring.to_bytes(c1)
    return _header(TAG_MKSUM, len(mks.device_ids), _ZERO_FP) + body


def parse_mk_sum(buf: bytes, params: RingParams, offset: int = 0):
    count, _, offset = _parse_header(buf, offset, TAG_MKSUM)
    ids, offset = _parse_ids(buf, offset)
    c0, offset = ring.from_bytes(buf, params, offset)
    c1s = []
    for _ in range(count):
        c1, offset = ring.from_bytes(buf, params, offset)
        c1s.append(c1)
    return MkCiphertextSum(c0, tuple(c1s), ids), offset
