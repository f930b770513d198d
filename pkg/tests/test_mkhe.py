"""Aggregated-key scheme, baseline per-key scheme, and their contrast."""

import numpy as np
import pytest

from mkfed import encoding, mkhe, ring
from mkfed.errors import ConfigurationError, MixedKeyError, QuorumError, ShareBindingError
from mkfed.ntt import is_prime
from mkfed.params import params_from_preset

from helpers import ZeroNoiseRng, ZeroRng, make_params, random_element, school_add

TOY_RP, TOY_EP, TOY_CRS = mkhe.setup("toy")


def toy_message(rng):
    return random_element(TOY_RP, rng)


def make_devices(rp, crs, n_devices, seed=100):
    keys = []
    for dev in range(1, n_devices + 1):
        keys.append(mkhe.keygen(rp, crs, np.random.default_rng(seed + dev), dev))
    apk = mkhe.aggregate_public_keys([pk for _, pk in keys])
    return keys, apk


def xmk_pipeline(rp, ep, crs, weights, seed=200):
    """Encrypt each weight vector, sum, share, merge; returns decoded slots."""
    keys, apk = make_devices(rp, crs, len(weights), seed)
    cts = []
    for (sk, _), w in zip(keys, weights):
        m = encoding.encode(w, ep, rp)
        cts.append(mkhe.encrypt(m, apk, crs, rp, np.random.default_rng(seed + 31 + sk.device_id)))
    cs = mkhe.add_ciphertexts(cts)
    shares = [
        mkhe.decryption_share(sk, cs, rp, np.random.default_rng(seed + 77 + sk.device_id))
        for sk, _ in keys
    ]
    return encoding.decode(mkhe.merge(cs, shares), ep, rp)


class TestSetup:
    def test_toy_parameters(self):
        assert TOY_RP.n == 8
        assert TOY_RP.q == 3329
        assert TOY_RP.q % 16 == 1
        assert is_prime(TOY_RP.q)

    def test_setup_deterministic(self):
        _, _, crs1 = mkhe.setup("toy")
        _, _, crs2 = mkhe.setup("toy")
        assert crs1 == crs2

    def test_standard_dimensions(self):
        rp, ep, _ = mkhe.setup("standard")
        assert rp.n == 4096
        assert ep.slots == 2048

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            mkhe.setup("huge")


class TestKeygen:
    def test_error_free_identity(self):
        rng = ZeroNoiseRng(np.random.default_rng(30))
        sk, pk = mkhe.keygen(TOY_RP, TOY_CRS, rng, 1)
        assert ring.add(pk.b, ring.mul(sk.s, TOY_CRS)) == ring.zero(TOY_RP)

    def test_key_error_bounded(self):
        for i in range(100):
            sk, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(1000 + i), i)
            residual = ring.add(pk.b, ring.mul(sk.s, TOY_CRS))
            assert np.max(np.abs(residual.signed())) <= 10 * TOY_RP.sigma_err

    def test_distinct_secrets(self):
        sk1, _ = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(31), 1)
        sk2, _ = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(32), 2)
        assert sk1.s != sk2.s


class TestAggregateKeys:
    def test_single_share_rejected(self):
        _, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(33), 1)
        with pytest.raises(ConfigurationError):
            mkhe.aggregate_public_keys([pk])

    def test_duplicate_device_rejected(self):
        _, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(34), 1)
        with pytest.raises(ConfigurationError):
            mkhe.aggregate_public_keys([pk, pk])

    def test_order_independent(self):
        keys, apk = make_devices(TOY_RP, TOY_CRS, 5)
        rng = np.random.default_rng(35)
        for _ in range(5):
            perm = rng.permutation(5)
            apk2 = mkhe.aggregate_public_keys([keys[i][1] for i in perm])
            assert apk2.b_tilde == apk.b_tilde
            assert apk2.fingerprint == apk.fingerprint

    def test_matches_summation_oracle(self):
        keys, apk = make_devices(TOY_RP, TOY_CRS, 10)
        acc = ring.zero(TOY_RP)
        for _, pk in keys:
            acc = school_add(acc, pk.b)
        assert apk.b_tilde == acc
        assert apk.contributor_ids == tuple(range(1, 11))


class TestEncryptAddShare:
    def test_noiseless_ciphertext_is_message_and_zero(self):
        rng = np.random.default_rng(36)
        _, apk = make_devices(TOY_RP, TOY_CRS, 3)
        m = toy_message(rng)
        ct = mkhe.encrypt(m, apk, TOY_CRS, TOY_RP, ZeroRng())
        assert ct.c0 == m
        assert ct.c1 == ring.zero(TOY_RP)

    def test_encryption_randomized(self):
        rng = np.random.default_rng(37)
        _, apk = make_devices(TOY_RP, TOY_CRS, 3)
        m = toy_message(rng)
        ct1 = mkhe.encrypt(m, apk, TOY_CRS, TOY_RP, np.random.default_rng(1))
        ct2 = mkhe.encrypt(m, apk, TOY_CRS, TOY_RP, np.random.default_rng(2))
        assert ct1.c0 != ct2.c0

    def test_singleton_sum(self):
        rng = np.random.default_rng(38)
        _, apk = make_devices(TOY_RP, TOY_CRS, 2)
        ct = mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng)
        cs = mkhe.add_ciphertexts([ct])
        assert cs.c_sum0 == ct.c0 and cs.c_sum1 == ct.c1 and cs.count == 1

    def test_sum_permutation_invariant_and_matches_oracle(self):
        rng = np.random.default_rng(39)
        _, apk = make_devices(TOY_RP, TOY_CRS, 10)
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(10)]
        cs = mkhe.add_ciphertexts(cts)
        c0 = ring.zero(TOY_RP)
        c1 = ring.zero(TOY_RP)
        for ct in cts:
            c0 = school_add(c0, ct.c0)
            c1 = school_add(c1, ct.c1)
        assert cs.c_sum0 == c0 and cs.c_sum1 == c1
        perm = np.random.default_rng(40).permutation(10)
        cs2 = mkhe.add_ciphertexts([cts[i] for i in perm])
        assert cs2.c_sum0 == cs.c_sum0 and cs2.sum_fingerprint == cs.sum_fingerprint

    def test_mixed_key_aggregation_rejected(self):
        rng = np.random.default_rng(41)
        _, apk1 = make_devices(TOY_RP, TOY_CRS, 2, seed=50)
        _, apk2 = make_devices(TOY_RP, TOY_CRS, 2, seed=60)
        ct1 = mkhe.encrypt(toy_message(rng), apk1, TOY_CRS, TOY_RP, rng)
        ct2 = mkhe.encrypt(toy_message(rng), apk2, TOY_CRS, TOY_RP, rng)
        with pytest.raises(MixedKeyError, match="mixed-key aggregation"):
            mkhe.add_ciphertexts([ct1, ct2])

    def test_noiseless_share_is_s_times_c1(self):
        rng = np.random.default_rng(42)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 3)
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(3)]
        cs = mkhe.add_ciphertexts(cts)
        sk = keys[0][0]
        share = mkhe.decryption_share(sk, cs, TOY_RP, ZeroRng())
        assert share.d == ring.mul(sk.s, cs.c_sum1)

    def test_share_requires_contributor(self):
        rng = np.random.default_rng(43)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 2)
        outsider, _ = mkhe.keygen(TOY_RP, TOY_CRS, rng, 99)
        ct = mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng)
        cs = mkhe.add_ciphertexts([ct])
        with pytest.raises(ShareBindingError):
            mkhe.decryption_share(outsider, cs, TOY_RP, rng)

    def test_share_from_digest_matches_full_sum(self):
        rng = np.random.default_rng(44)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 3)
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(3)]
        cs = mkhe.add_ciphertexts(cts)
        digest = mkhe.sum_digest(cs.c_sum1, cs.contributors)
        assert digest == cs.digest()
        sk = keys[1][0]
        s1 = mkhe.decryption_share(sk, cs, TOY_RP, ZeroRng())
        s2 = mkhe.decryption_share(sk, digest, TOY_RP, ZeroRng())
        assert s1 == s2


class TestMerge:
    def test_noiseless_pipeline_exact(self):
        rng = np.random.default_rng(45)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 3)
        msgs = [toy_message(rng) for _ in range(3)]
        cts = [mkhe.encrypt(m, apk, TOY_CRS, TOY_RP, ZeroRng()) for m in msgs]
        cs = mkhe.add_ciphertexts(cts)
        shares = [mkhe.decryption_share(sk, cs, TOY_RP, ZeroRng()) for sk, _ in keys]
        merged = mkhe.merge(cs, shares)
        expect = school_add(school_add(msgs[0], msgs[1]), msgs[2])
        # noiseless: only the key errors e_i survive, scaled by the v=0 encryption
        assert merged == expect

    def test_standard_weight_sum_within_tolerance(self):
        rp, ep, crs = mkhe.setup("standard")
        rng = np.random.default_rng(46)
        weights = [rng.uniform(-1, 1, 492) for _ in range(10)]
        decoded = xmk_pipeline(rp, ep, crs, weights)
        expect = np.sum(weights, axis=0)
        assert np.max(np.abs(decoded[:492] - expect)) < 1e-4

    @pytest.mark.parametrize("n_devices", [2, 3, 10, 16])
    def test_end_to_end_homomorphism(self, n_devices):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(47 + n_devices)
        weights = [rng.uniform(-1, 1, ep.slots) for _ in range(n_devices)]
        decoded = xmk_pipeline(rp, ep, crs, weights, seed=300 + n_devices)
        tol = mkhe.expected_merge_tolerance(rp, ep, n_devices)
        assert np.max(np.abs(decoded - np.sum(weights, axis=0))) < tol

    def test_fresh_shares_differ_but_both_merge(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(48)
        keys, apk = make_devices(rp, crs, 3)
        weights = [rng.uniform(-1, 1, ep.slots) for _ in range(3)]
        cts = [
            mkhe.encrypt(encoding.encode(w, ep, rp), apk, crs, rp, rng) for w in weights
        ]
        cs = mkhe.add_ciphertexts(cts)
        shares = [mkhe.decryption_share(sk, cs, rp, rng) for sk, _ in keys]
        repeat = mkhe.decryption_share(keys[0][0], cs, rp, rng)
        assert repeat.d != shares[0].d
        tol = mkhe.expected_merge_tolerance(rp, ep, 3)
        expect = np.sum(weights, axis=0)
        for share_set in (shares, [repeat] + shares[1:]):
            decoded = encoding.decode(mkhe.merge(cs, share_set), ep, rp)
            assert np.max(np.abs(decoded - expect)) < tol

    def test_missing_share_raises_quorum_error(self):
        rng = np.random.default_rng(49)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 3)
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(3)]
        cs = mkhe.add_ciphertexts(cts)
        shares = [mkhe.decryption_share(sk, cs, TOY_RP, rng) for sk, _ in keys]
        with pytest.raises(QuorumError) as exc:
            mkhe.merge(cs, shares[:-1])
        assert exc.value.missing == (3,)
        assert "incomplete decryption quorum" in str(exc.value)

    @pytest.mark.parametrize("n_devices", [2, 5, 10])
    def test_any_proper_subset_rejected(self, n_devices):
        rng = np.random.default_rng(50 + n_devices)
        keys, apk = make_devices(TOY_RP, TOY_CRS, n_devices)
        cts = [
            mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng)
            for _ in range(n_devices)
        ]
        cs = mkhe.add_ciphertexts(cts)
        shares = [mkhe.decryption_share(sk, cs, TOY_RP, rng) for sk, _ in keys]
        for _ in range(20):
            size = int(rng.integers(0, n_devices))
            subset = [shares[i] for i in rng.choice(n_devices, size=size, replace=False)]
            with pytest.raises(QuorumError) as exc:
                mkhe.merge(cs, subset)
            assert set(exc.value.missing) == set(cs.contributors) - {s.device_id for s in subset}
        merged = mkhe.merge(cs, shares)
        assert merged.params == TOY_RP

    def test_unknown_share_rejected(self):
        rng = np.random.default_rng(51)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 2)
        outsider_sk, _ = mkhe.keygen(TOY_RP, TOY_CRS, rng, 42)
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(2)]
        cs = mkhe.add_ciphertexts(cts)
        shares = [mkhe.decryption_share(sk, cs, TOY_RP, rng) for sk, _ in keys]
        rogue = mkhe.DecryptionShare(shares[0].d, 42, cs.sum_fingerprint)
        with pytest.raises(QuorumError):
            mkhe.merge(cs, shares + [rogue])

    def test_share_bound_to_other_sum_rejected(self):
        rng = np.random.default_rng(52)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 2)
        rounds = []
        for _ in range(2):
            cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(2)]
            rounds.append(mkhe.add_ciphertexts(cts))
        stale = mkhe.decryption_share(keys[0][0], rounds[0], TOY_RP, rng)
        fresh = mkhe.decryption_share(keys[1][0], rounds[1], TOY_RP, rng)
        with pytest.raises(ShareBindingError):
            mkhe.merge(rounds[1], [stale, fresh])

    def test_merge_bit_identical_under_permutations(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(53)
        keys, apk = make_devices(rp, crs, 4)
        cts = [
            mkhe.encrypt(encoding.encode(rng.uniform(-1, 1, ep.slots), ep, rp), apk, crs, rp,
                         np.random.default_rng(500 + i))
            for i in range(4)
        ]
        shares_by_dev = {}
        cs = mkhe.add_ciphertexts(cts)
        for sk, _ in keys:
            shares_by_dev[sk.device_id] = mkhe.decryption_share(
                sk, cs, rp, np.random.default_rng(600 + sk.device_id)
            )
        reference = None
        for _ in range(4):
            perm_cts = [cts[i] for i in rng.permutation(4)]
            cs2 = mkhe.add_ciphertexts(perm_cts)
            share_perm = [shares_by_dev[d] for d in rng.permutation(list(shares_by_dev))]
            merged = ring.to_bytes(mkhe.merge(cs2, share_perm))
            if reference is None:
                reference = merged
            assert merged == reference


class TestBaselineScheme:
    def test_noiseless_paths(self):
        rng = np.random.default_rng(54)
        sk, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(55), 1)
        m = toy_message(rng)
        ct = mkhe.mk_encrypt(m, pk, TOY_CRS, TOY_RP, ZeroRng())
        assert ct.c0 == m and ct.c1 == ring.zero(TOY_RP)
        assert mkhe.decrypt_individual(ct, sk, TOY_RP) == m

    def test_individual_decryption_within_noise(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(56)
        sk, pk = mkhe.keygen(rp, crs, rng, 1)
        w = rng.uniform(-1, 1, ep.slots)
        ct = mkhe.mk_encrypt(encoding.encode(w, ep, rp), pk, crs, rp, rng)
        decoded = encoding.decode(mkhe.decrypt_individual(ct, sk, rp), ep, rp)
        assert np.max(np.abs(decoded - w)) < 1e-4

    def test_wrong_key_yields_garbage(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(57)
        sk1, pk1 = mkhe.keygen(rp, crs, np.random.default_rng(58), 1)
        sk2, _ = mkhe.keygen(rp, crs, np.random.default_rng(59), 2)
        w = rng.uniform(-1, 1, ep.slots)
        ct = mkhe.mk_encrypt(encoding.encode(w, ep, rp), pk1, crs, rp, rng)
        decoded = encoding.decode(mkhe.decrypt_individual(ct, sk2, rp), ep, rp)
        assert np.max(np.abs(decoded)) > rp.q / (4 * ep.scale)

    def test_noiseless_baseline_merge(self):
        rng = np.random.default_rng(60)
        keys = [mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(61 + i), i + 1) for i in range(3)]
        msgs = [toy_message(rng) for _ in range(3)]
        cts = [
            mkhe.mk_encrypt(m, pk, TOY_CRS, TOY_RP, ZeroRng()) for m, (_, pk) in zip(msgs, keys)
        ]
        mks = mkhe.mk_add(cts)
        shares = [
            mkhe.mk_part_dec(sk, c1, TOY_RP, ZeroRng())
            for (sk, _), c1 in zip(keys, mks.c1_list)
        ]
        merged = mkhe.mk_merge(mks, shares)
        assert merged == school_add(school_add(msgs[0], msgs[1]), msgs[2])

    def test_cross_key_mixing_rejected(self):
        rng = np.random.default_rng(62)
        sk, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(63), 1)
        m = toy_message(rng)
        ct1 = mkhe.mk_encrypt(m, pk, TOY_CRS, TOY_RP, rng)
        ct2 = mkhe.mk_encrypt(m, pk, TOY_CRS, TOY_RP, rng)
        with pytest.raises(MixedKeyError):
            mkhe.mk_add([ct1, ct2])

    def test_share_count_mismatch_rejected(self):
        rng = np.random.default_rng(64)
        keys = [mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(65 + i), i + 1) for i in range(3)]
        cts = [mkhe.mk_encrypt(toy_message(rng), pk, TOY_CRS, TOY_RP, rng) for _, pk in keys]
        mks = mkhe.mk_add(cts)
        shares = [
            mkhe.mk_part_dec(sk, c1, TOY_RP, rng) for (sk, _), c1 in zip(keys, mks.c1_list)
        ]
        with pytest.raises(QuorumError):
            mkhe.mk_merge(mks, shares[:2])

    def test_baseline_merge_recovers_sum(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(66)
        keys = [mkhe.keygen(rp, crs, np.random.default_rng(67 + i), i + 1) for i in range(3)]
        weights = [rng.uniform(-1, 1, ep.slots) for _ in range(3)]
        cts = [
            mkhe.mk_encrypt(encoding.encode(w, ep, rp), pk, crs, rp, rng)
            for w, (_, pk) in zip(weights, keys)
        ]
        mks = mkhe.mk_add(cts)
        shares = [
            mkhe.mk_part_dec(sk, c1, rp, rng) for (sk, _), c1 in zip(keys, mks.c1_list)
        ]
        decoded = encoding.decode(mkhe.mk_merge(mks, shares), ep, rp)
        tol = mkhe.expected_merge_tolerance(rp, ep, 3)
        assert np.max(np.abs(decoded - np.sum(weights, axis=0))) < tol


class TestLeakageContrast:
    """The motivating gap: baseline partial decryptions open individual
    ciphertexts to the aggregator; aggregated-key shares do not."""

    TOLERANCE = 1e-4

    def test_baseline_partial_decryption_leaks_plaintext(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(68)
        sk, pk = mkhe.keygen(rp, crs, rng, 1)
        w = rng.uniform(-1, 1, ep.slots)
        ct = mkhe.mk_encrypt(encoding.encode(w, ep, rp), pk, crs, rp, rng)
        mu = mkhe.mk_part_dec(sk, ct.c1, rp, rng)
        recovered = encoding.decode(ring.add(ct.c0, mu.d), ep, rp)
        assert np.max(np.abs(recovered - w)) < self.TOLERANCE

    def test_aggregated_share_does_not_open_individual_ciphertext(self):
        rp, ep, crs = mkhe.setup("small")
        rng = np.random.default_rng(69)
        keys, apk = make_devices(rp, crs, 3)
        weights = [rng.uniform(-1, 1, 492) for _ in range(3)]
        cts = [
            mkhe.encrypt(encoding.encode(w, ep, rp), apk, crs, rp, rng) for w in weights
        ]
        cs = mkhe.add_ciphertexts(cts)
        share0 = mkhe.decryption_share(keys[0][0], cs, rp, rng)
        combined = encoding.decode(ring.add(cts[0].c0, share0.d), ep, rp)[:492]
        assert np.min(np.abs(combined)) > 1e3 * self.TOLERANCE

    def test_collusion_combination_keeps_message_masked(self):
        # all-but-one devices expose secrets; c0_i + c1_i * sum(s_j, j != i)
        rp, ep, crs = mkhe.setup("small")
        for n_devices in (2, 5, 10):
            rng = np.random.default_rng(70 + n_devices)
            keys, apk = make_devices(rp, crs, n_devices, seed=700 + n_devices)
            w = rng.uniform(-1, 1, ep.slots)
            ct = mkhe.encrypt(encoding.encode(w, ep, rp), apk, crs, rp, rng)
            s_others = ring.zero(rp)
            for sk, _ in keys[1:]:
                s_others = ring.add(s_others, sk.s)
            forced = ring.add(ct.c0, ring.mul(ct.c1, s_others))
            recovered = encoding.decode(forced, ep, rp)
            assert np.max(np.abs(recovered - w)) > 1e3 * self.TOLERANCE


class TestNoiseBudget:
    def test_standard_ten_devices_ok(self):
        rp, ep, _ = mkhe.setup("standard")
        budget = mkhe.noise_budget(rp, ep, 10)
        assert budget.ok
        assert budget.bound_per_slot < ep.scale / 2

    def test_monotone_in_devices(self):
        rp, ep, _ = mkhe.setup("standard")
        assert (
            mkhe.noise_budget(rp, ep, 1).bound_per_slot
            < mkhe.noise_budget(rp, ep, 16).bound_per_slot
        )

    def test_exhausted_budget_predicts_merge_failure(self):
        # flooding cranked far past the preset default: the budget flags the
        # configuration and the merge error indeed blows the tolerance
        small = params_from_preset("small")[0]
        rp = make_params(small.n, small.q, sigma_err=3.2, sigma_flood=3.2 * 2**35)
        ep = params_from_preset("small")[1]
        budget = mkhe.noise_budget(rp, ep, 4)
        assert not budget.ok
        crs = ring.sample_uniform(rp, rp.seed, "crs")
        rng = np.random.default_rng(71)
        weights = [rng.uniform(-1, 1, ep.slots) for _ in range(4)]
        decoded = xmk_pipeline(rp, ep, crs, weights, seed=800)
        assert np.max(np.abs(decoded - np.sum(weights, axis=0))) > 1e-4

    def test_rejects_zero_devices(self):
        rp, ep, _ = mkhe.setup("toy")
        with pytest.raises(ConfigurationError):
            mkhe.noise_budget(rp, ep, 0)


class TestSerialization:
    def test_all_types_roundtrip(self):
        rng = np.random.default_rng(72)
        keys, apk = make_devices(TOY_RP, TOY_CRS, 3)
        sk, pk = keys[0]
        cts = [mkhe.encrypt(toy_message(rng), apk, TOY_CRS, TOY_RP, rng) for _ in range(3)]
        cs = mkhe.add_ciphertexts(cts)
        share = mkhe.decryption_share(sk, cs, TOY_RP, rng)
        mk_cts = [
            mkhe.mk_encrypt(toy_message(rng), k[1], TOY_CRS, TOY_RP, rng) for k in keys
        ]
        mks = mkhe.mk_add(mk_cts)

        got_pk, _ = mkhe.parse_public_key_share(mkhe.serialize_public_key_share(pk), TOY_RP)
        assert got_pk == pk
        got_apk, _ = mkhe.parse_aggregated_key(mkhe.serialize_aggregated_key(apk), TOY_RP)
        assert got_apk == apk
        got_ct, _ = mkhe.parse_ciphertext(mkhe.serialize_ciphertext(cts[0]), TOY_RP)
        assert got_ct == cts[0]
        got_cs, _ = mkhe.parse_ciphertext_sum(mkhe.serialize_ciphertext_sum(cs), TOY_RP)
        assert got_cs == cs
        got_share, _ = mkhe.parse_decryption_share(
            mkhe.serialize_decryption_share(share), TOY_RP
        )
        assert got_share == share
        got_mks, _ = mkhe.parse_mk_sum(mkhe.serialize_mk_sum(mks), TOY_RP)
        assert got_mks == mks

    def test_wrong_tag_rejected(self):
        _, pk = mkhe.keygen(TOY_RP, TOY_CRS, np.random.default_rng(73), 1)
        blob = mkhe.serialize_public_key_share(pk)
        with pytest.raises(ConfigurationError):
            mkhe.parse_ciphertext(blob, TOY_RP)
