"""Policy/fund contract semantics, driven through real ledger transactions.

The reward expectations are computed with a plain dot-product oracle; the
refund expectations with plain stake/spent/fee arithmetic.
"""

import pytest

from privads.codec import encode_args
from privads.group import (
    G,
    decrypt,
    encrypt_vector,
    hybrid_encrypt,
    keygen,
    random_scalar,
    recover_plaintext,
    sign,
)
from privads.ledger import address_from_pk
from privads.payments import build_batch, serialize_batch
from privads.proofs import prove_decryption
from privads.threshold import SyncChannel, dkg_run, partial_decrypt

from conftest import build_campaign


def claim(campaign, vector, tag="user"):
    """Submit a claim; returns the ephemeral keypair used."""
    rng = campaign.rng
    kp = keygen(b"eph/" + tag.encode())
    enc_vec = encrypt_vector(kp.pk, vector, rng)
    enc_vec_prime = encrypt_vector(kp.pk, vector, rng)  # stand-in analytics copy
    campaign.chain.call(
        campaign.cf_account,
        campaign.psc_address,
        "compute_aggregate",
        {"user_pk": kp.pk, "enc_vec": enc_vec, "enc_vec_prime": enc_vec_prime},
    )
    campaign.mine()
    return kp


def request_payment(campaign, kp, amount=None, payout=None, rng=None):
    rng = rng or campaign.rng
    ct, sig = campaign.psc.get_aggregate(kp.pk)
    recovered = recover_plaintext(decrypt(kp.sk, ct), 2**20)
    claim_amount = recovered if amount is None else amount
    proof = prove_decryption(kp, ct, decrypt(kp.sk, ct), rng)
    payout = payout or address_from_pk(keygen(b"payout/" + kp.pk.encode()).pk)
    rid = campaign.chain.call(
        campaign.cf_account,
        campaign.psc_address,
        "payment_request",
        {
            "user_pk": kp.pk,
            "amount": claim_amount,
            "reward_sig": sig,
            "proof": proof,
            "payout_address": payout,
        },
        private=True,
        rng=rng,
    )
    campaign.mine()
    return rid, recovered, payout


class TestPolicyStorage:
    def test_cf_writes_slot(self):
        campaign = build_campaign(stake=False)
        assert campaign.psc.enc_policies[0] is not None

    def test_non_cf_rejected(self):
        campaign = build_campaign(stake=False)
        outsider = address_from_pk(keygen(b"outsider").pk)
        campaign.chain.create_account(outsider)
        rid = campaign.chain.call(
            outsider, campaign.psc_address, "store_policy", {"index": 0, "enc_policy": b"x"}
        )
        campaign.mine()
        assert "NotCF" in campaign.chain.receipt(rid).error

    def test_write_after_init_rejected(self, campaign):
        rid = campaign.cf_call(campaign.psc_address, "store_policy", {"index": 0, "enc_policy": b"x"})
        campaign.mine()
        assert "AlreadyInitialized" in campaign.chain.receipt(rid).error

    def test_index_out_of_range(self):
        campaign = build_campaign(stake=False)
        rid = campaign.cf_call(campaign.psc_address, "store_policy", {"index": 3, "enc_policy": b"x"})
        campaign.mine()
        assert "IndexOutOfRange" in campaign.chain.receipt(rid).error

    def test_encrypted_keys_bad_signature(self):
        campaign = build_campaign(stake=False)
        rng = campaign.rng
        keys = [hybrid_encrypt(campaign.chain.validator_keypair.pk, b"k" * 32, rng) for _ in range(3)]
        sig = sign(campaign.cf.sk, encode_args(keys), rng, tag=b"sig/enc-keys")
        tampered = keys[::-1]
        rid = campaign.cf_call(
            campaign.psc_address, "store_encrypted_keys", {"enc_keys": tampered, "sig": sig}
        )
        campaign.mine()
        assert "BadSignature" in campaign.chain.receipt(rid).error

    def test_encrypted_keys_wrong_signer(self):
        campaign = build_campaign(stake=False)
        rng = campaign.rng
        keys = [hybrid_encrypt(campaign.chain.validator_keypair.pk, b"k" * 32, rng) for _ in range(3)]
        sig = sign(keygen(b"not-cf").sk, encode_args(keys), rng, tag=b"sig/enc-keys")
        rid = campaign.cf_call(
            campaign.psc_address, "store_encrypted_keys", {"enc_keys": keys, "sig": sig}
        )
        campaign.mine()
        assert "BadSignature" in campaign.chain.receipt(rid).error


class TestAggregation:
    def test_worked_example(self, campaign):
        # policies 4/20/12, interactions 3/0/2; oracle: 4*3 + 20*0 + 12*2
        kp = claim(campaign, [3, 0, 2])
        ct, _ = campaign.psc.get_aggregate(kp.pk)
        expected = 4 * 3 + 20 * 0 + 12 * 2
        assert recover_plaintext(decrypt(kp.sk, ct), 1000) == expected == 36

    def test_zero_vector(self, campaign):
        kp = claim(campaign, [0, 0, 0], tag="zero")
        ct, _ = campaign.psc.get_aggregate(kp.pk)
        assert decrypt(kp.sk, ct).is_identity

    def test_length_mismatch(self, campaign):
        kp = keygen(b"short")
        enc = encrypt_vector(kp.pk, [1, 1], campaign.rng)
        rid = campaign.cf_call(
            campaign.psc_address,
            "compute_aggregate",
            {"user_pk": kp.pk, "enc_vec": enc, "enc_vec_prime": enc},
        )
        campaign.mine()
        assert "LengthMismatch" in campaign.chain.receipt(rid).error

    def test_unknown_user_before_compute(self, campaign):
        from privads.ledger import ContractError

        with pytest.raises(ContractError):
            campaign.psc.get_aggregate(keygen(b"nobody").pk)

    def test_claim_before_init_rejected(self):
        campaign = build_campaign(stake=False)
        kp = keygen(b"early")
        enc = encrypt_vector(kp.pk, [1, 0, 0], campaign.rng)
        rid = campaign.cf_call(
            campaign.psc_address,
            "compute_aggregate",
            {"user_pk": kp.pk, "enc_vec": enc, "enc_vec_prime": enc},
        )
        campaign.mine()
        assert "NotInitialized" in campaign.chain.receipt(rid).error

    @pytest.mark.parametrize("catalog_size", [8, 64, 256])
    def test_aggregate_correctness_random_catalogs(self, catalog_size):
        # plaintext dot-product oracle over a random catalog
        from privads.rng import Rng

        rng = Rng(f"catalog-{catalog_size}")
        policies = tuple(rng.randrange(1, 21) for _ in range(catalog_size))
        vector = [rng.randrange(6) for _ in range(catalog_size)]
        oracle = sum(p * x for p, x in zip(policies, vector))
        campaign = build_campaign(
            policies=policies,
            impressions=(10,) * catalog_size,
            seed=f"catalog-{catalog_size}",
        )
        kp = claim(campaign, vector, tag=f"n{catalog_size}")
        ct, _ = campaign.psc.get_aggregate(kp.pk)
        assert recover_plaintext(decrypt(kp.sk, ct), 2**20) == oracle

    def test_aggregate_signature_verifies(self, campaign):
        from privads.contracts import aggregate_message
        from privads.group import verify_sig

        kp = claim(campaign, [1, 1, 1], tag="signed")
        ct, sig = campaign.psc.get_aggregate(kp.pk)
        message = aggregate_message(kp.pk, ct)
        assert verify_sig(campaign.chain.aggregate_keypair.pk, message, sig, tag=b"sig/aggregate")


class TestPaymentRequest:
    def test_honest_request_buffered(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        rid, recovered, payout = request_payment(campaign, kp)
        assert campaign.chain.receipt(rid).ok
        assert campaign.fsc.payment_requests == [
            {"addr": payout, "amount": 36, "user_pk": kp.pk.encode()}
        ]
        assert recovered == 36

    def test_wrong_amount_rejected(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        rid, _, _ = request_payment(campaign, kp, amount=37)
        assert "BadProof" in campaign.chain.receipt(rid).error

    def test_amount_minus_one_rejected(self, campaign):
        kp = claim(campaign, [3, 0, 2], tag="minus")
        rid, _, _ = request_payment(campaign, kp, amount=35)
        assert "BadProof" in campaign.chain.receipt(rid).error

    def test_cap_exceeded(self):
        campaign = build_campaign(reward_cap=35)
        kp = claim(campaign, [3, 0, 2])
        rid, _, _ = request_payment(campaign, kp)
        assert "CapExceeded" in campaign.chain.receipt(rid).error

    def test_duplicate_request(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        rid1, _, _ = request_payment(campaign, kp)
        rid2, _, _ = request_payment(campaign, kp)
        assert campaign.chain.receipt(rid1).ok
        assert "DuplicateRequest" in campaign.chain.receipt(rid2).error

    def test_public_submission_rejected(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        ct, sig = campaign.psc.get_aggregate(kp.pk)
        proof = prove_decryption(kp, ct, decrypt(kp.sk, ct), campaign.rng)
        rid = campaign.cf_call(
            campaign.psc_address,
            "payment_request",
            {
                "user_pk": kp.pk,
                "amount": 36,
                "reward_sig": sig,
                "proof": proof,
                "payout_address": address_from_pk(kp.pk),
            },
        )
        campaign.mine()
        assert "NotPrivate" in campaign.chain.receipt(rid).error


class TestStaking:
    def test_all_stakes_flip_init(self):
        campaign = build_campaign(
            advertiser_split={"a": [0], "b": [1], "c": [2]}, stake=False
        )
        assert not campaign.fsc.init
        for adv_id, _, account, budget, fee, _, _ in campaign.advertisers:
            campaign.chain.call(account, campaign.fsc_address, "store_funds", {"id": adv_id, "amount": budget + fee})
        campaign.mine()
        assert campaign.fsc.init

    def test_partial_staking_keeps_uninitialized(self):
        campaign = build_campaign(advertiser_split={"a": [0], "b": [1], "c": [2]}, stake=False)
        for adv_id, _, account, budget, fee, _, _ in campaign.advertisers[:2]:
            campaign.chain.call(account, campaign.fsc_address, "store_funds", {"id": adv_id, "amount": budget + fee})
        campaign.mine()
        assert not campaign.fsc.init

    def test_wrong_stake_amount(self):
        # budget-formula oracle: required = sum(impressions*policy) + fee
        campaign = build_campaign(stake=False)
        adv_id, _, account, budget, fee, _, _ = campaign.advertisers[0]
        assert budget == 4 * 100 + 20 * 100 + 12 * 100
        rid = campaign.chain.call(
            account, campaign.fsc_address, "store_funds", {"id": adv_id, "amount": budget + fee - 1}
        )
        campaign.mine()
        assert "WrongStakeAmount" in campaign.chain.receipt(rid).error

    def test_unknown_advertiser(self, campaign):
        rid = campaign.cf_call(campaign.fsc_address, "store_funds", {"id": "ghost", "amount": 1})
        campaign.mine()
        assert "UnknownAdvertiser" in campaign.chain.receipt(rid).error

    def test_store_adv_after_init_rejected(self, campaign):
        rid = campaign.cf_call(
            campaign.fsc_address,
            "store_adv_id",
            {"id": "late", "account": campaign.cf_account, "budget": 1, "fee": 0, "ads": []},
        )
        campaign.mine()
        assert "AlreadyInitialized" in campaign.chain.receipt(rid).error


class TestAggrClicks:
    def _pool(self, campaign):
        pool_kp = keygen(b"pool-signing")
        campaign.cf_call(
            campaign.fsc_address,
            "register_pool",
            {"pk": pool_kp.pk, "threshold": 2, "recovery_bound": 2**16},
        )
        campaign.mine()
        return pool_kp

    def test_signed_update_accumulates(self, campaign):
        pool_kp = self._pool(campaign)
        totals = [3, 0, 2]
        sig = sign(pool_kp.sk, encode_args(totals), campaign.rng, tag=b"sig/aggr-clicks")
        campaign.cf_call(campaign.fsc_address, "store_aggr_clicks", {"totals": totals, "sig": sig})
        campaign.mine()
        assert campaign.fsc.aggr_clicks == [3, 0, 2]
        sig2 = sign(pool_kp.sk, encode_args(totals), campaign.rng, tag=b"sig/aggr-clicks")
        campaign.cf_call(campaign.fsc_address, "store_aggr_clicks", {"totals": totals, "sig": sig2})
        campaign.mine()
        assert campaign.fsc.aggr_clicks == [6, 0, 4]

    def test_forged_signature_rejected(self, campaign):
        self._pool(campaign)
        totals = [1, 1, 1]
        sig = sign(keygen(b"forger").sk, encode_args(totals), campaign.rng, tag=b"sig/aggr-clicks")
        rid = campaign.cf_call(campaign.fsc_address, "store_aggr_clicks", {"totals": totals, "sig": sig})
        campaign.mine()
        assert "BadSignature" in campaign.chain.receipt(rid).error


class TestAnalyticsPosts:
    def test_threshold_combination(self, campaign):
        rng = campaign.rng
        result = dkg_run([1, 2, 3], 2, SyncChannel(), rng)
        campaign.cf_call(
            campaign.fsc_address,
            "register_pool",
            {"pk": keygen(b"pool-signing").pk, "threshold": 2, "recovery_bound": 2**12},
        )
        campaign.mine()
        totals_plain = [5, 0, 7]
        enc_totals = encrypt_vector(result.public_key.pk, totals_plain, rng)
        for index in (1, 2):
            partials = [partial_decrypt(result.shares[index], ct, rng) for ct in enc_totals]
            rid = campaign.cf_call(
                campaign.fsc_address,
                "post_analytics",
                {
                    "enc_totals": enc_totals,
                    "tpk_pk": result.public_key.pk,
                    "tpk_vector": list(result.public_key.verification),
                    "index": index,
                    "partials": partials,
                },
            )
            campaign.mine()
            assert campaign.chain.receipt(rid).ok, campaign.chain.receipt(rid).error
        assert campaign.fsc.analytics_totals == totals_plain
        assert campaign.fsc.aggr_clicks == totals_plain

    def test_forged_partial_rejected(self, campaign):
        rng = campaign.rng
        result = dkg_run([1, 2], 2, SyncChannel(), rng)
        campaign.cf_call(
            campaign.fsc_address,
            "register_pool",
            {"pk": keygen(b"pool-signing").pk, "threshold": 2, "recovery_bound": 2**12},
        )
        campaign.mine()
        enc_totals = encrypt_vector(result.public_key.pk, [1, 2, 3], rng)
        partials = [partial_decrypt(result.shares[1], ct, rng) for ct in enc_totals]
        forged = [type(p)(p.index, p.share_point + G, p.proof) for p in partials]
        rid = campaign.cf_call(
            campaign.fsc_address,
            "post_analytics",
            {
                "enc_totals": enc_totals,
                "tpk_pk": result.public_key.pk,
                "tpk_vector": list(result.public_key.verification),
                "index": 1,
                "partials": forged,
            },
        )
        campaign.mine()
        assert "InvalidShareProof" in campaign.chain.receipt(rid).error


def settle_campaign(campaign, kps_with_amounts, pool_totals, underpay_addr=None, surplus=0):
    """Drive settlement: analytics, settlement request, batch, processed marks.

    Returns {payout_addr: (tx_ref, blinding, amount_paid)}.
    """
    rng = campaign.rng
    pool_kp = keygen(b"pool-signing")
    campaign.cf_call(
        campaign.fsc_address,
        "register_pool",
        {"pk": pool_kp.pk, "threshold": 1, "recovery_bound": 2**16},
    )
    sig = sign(pool_kp.sk, encode_args(pool_totals), rng, tag=b"sig/aggr-clicks")
    campaign.cf_call(campaign.fsc_address, "store_aggr_clicks", {"totals": pool_totals, "sig": sig})
    campaign.mine()

    pending = campaign.fsc.payment_requests
    total = sum(r["amount"] for r in pending) + surplus
    message = encode_args(["settlement", campaign.fsc_address, total, campaign.fsc.settlement_counter])
    sig = sign(campaign.cf.sk, message, rng, tag=b"sig/settlement")
    campaign.cf_call(campaign.fsc_address, "settlement_request", {"amount": total, "sig": sig})
    campaign.mine()

    payments, openings = [], {}
    batch_total = 0
    for req in pending:
        amount = req["amount"]
        if underpay_addr == req["addr"]:
            amount -= 1
        blinding = random_scalar(rng)
        payments.append((req["addr"], amount, blinding))
        openings[req["addr"]] = (blinding, amount)
        batch_total += amount
    batch = build_batch(payments, batch_total, rng)
    campaign.chain.call(
        campaign.cf_account, None, "submit_batch", {"batch": serialize_batch(batch), "total": batch_total}
    )
    campaign.mine()
    result = {}
    for note in batch.notes:
        blinding, amount = openings[note.recipient]
        result[note.recipient] = (note.tx_ref, blinding, amount)
    return result


class TestSettlementAndClose:
    def test_settlement_transfers_sum_of_pending(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        request_payment(campaign, kp)
        escrow_before = campaign.chain.balances[campaign.fsc_address]
        settle_campaign(campaign, [(kp, 36)], [3, 0, 2])
        assert campaign.fsc.settled_total == 36
        assert escrow_before - campaign.chain.balances[campaign.fsc_address] == 36
        # the whole tau went into the settlement batch
        assert campaign.chain.note_pool_value == 36

    def test_overdraw_rejected(self, campaign):
        escrow = campaign.chain.balances[campaign.fsc_address]
        message = encode_args(["settlement", campaign.fsc_address, escrow + 1, 0])
        sig = sign(campaign.cf.sk, message, campaign.rng, tag=b"sig/settlement")
        rid = campaign.cf_call(campaign.fsc_address, "settlement_request", {"amount": escrow + 1, "sig": sig})
        campaign.mine()
        assert "Overdraw" in campaign.chain.receipt(rid).error

    def test_non_cf_signature_rejected(self, campaign):
        message = encode_args(["settlement", campaign.fsc_address, 1, 0])
        sig = sign(keygen(b"evil").sk, message, campaign.rng, tag=b"sig/settlement")
        rid = campaign.cf_call(campaign.fsc_address, "settlement_request", {"amount": 1, "sig": sig})
        campaign.mine()
        assert "BadSignature" in campaign.chain.receipt(rid).error

    def test_full_close_pays_fees_and_refunds(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        request_payment(campaign, kp)
        notes = settle_campaign(campaign, [(kp, 36)], [3, 0, 2])
        (payout_addr, (tx_ref, _, _)), = notes.items()
        adv_id, _, account, budget, fee, _, policies = campaign.advertisers[0]
        before_adv = campaign.chain.balances[account]
        before_cf = campaign.chain.balances[campaign.cf_account]
        rid = campaign.cf_call(
            campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout_addr}
        )
        campaign.mine()
        receipt = campaign.chain.receipt(rid)
        assert receipt.ok and receipt.ret["all_paid"]
        # refund oracle: stake - spent - fee, spent = dot(policies, clicks)
        spent = 4 * 3 + 20 * 0 + 12 * 2
        stake = budget + fee
        assert campaign.fsc.refunds_paid == {adv_id: stake - spent - fee}
        assert campaign.chain.balances[account] - before_adv == stake - spent - fee
        assert campaign.chain.balances[campaign.cf_account] - before_cf == fee
        assert campaign.fsc.fees_paid
        assert campaign.chain.conservation_holds()

    def test_refund_boundary_cases(self):
        # zero clicks: refund = stake - fee
        campaign = build_campaign()
        kp = claim(campaign, [0, 0, 0], tag="idle")
        request_payment(campaign, kp)
        notes = settle_campaign(campaign, [(kp, 0)], [0, 0, 0])
        (payout_addr, (tx_ref, _, _)), = notes.items()
        adv_id, _, account, budget, fee, _, _ = campaign.advertisers[0]
        campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout_addr})
        campaign.mine()
        assert campaign.fsc.refunds_paid == {adv_id: budget}

    def test_bogus_txref(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        request_payment(campaign, kp)
        rid = campaign.cf_call(
            campaign.fsc_address, "payment_processed", {"tx_ref": b"\x01" * 16, "addr": b"\x02" * 20}
        )
        campaign.mine()
        assert "UnknownTxRef" in campaign.chain.receipt(rid).error

    def test_finalize_before_campaign_end_rejected(self, campaign):
        rid = campaign.cf_call(campaign.fsc_address, "finalize", {})
        campaign.mine()
        assert "CampaignActive" in campaign.chain.receipt(rid).error

    def test_epoch_elapse_allows_finalize(self):
        # short epoch; refunds run on the zero-click totals once it elapses
        campaign = build_campaign(epoch_blocks=6)
        pool_kp = keygen(b"pool-signing")
        campaign.cf_call(
            campaign.fsc_address, "register_pool", {"pk": pool_kp.pk, "threshold": 1, "recovery_bound": 16}
        )
        sig = sign(pool_kp.sk, encode_args([0, 0, 0]), campaign.rng, tag=b"sig/aggr-clicks")
        campaign.cf_call(campaign.fsc_address, "store_aggr_clicks", {"totals": [0, 0, 0], "sig": sig})
        campaign.mine()
        while campaign.chain.height < 6:
            campaign.mine()
        rid = campaign.cf_call(campaign.fsc_address, "finalize", {})
        campaign.mine()
        assert campaign.chain.receipt(rid).ok, campaign.chain.receipt(rid).error
        adv_id, _, _, budget, fee, _, _ = campaign.advertisers[0]
        assert campaign.fsc.refunds_paid == {adv_id: budget}
        assert campaign.fsc.fees_paid

    def test_double_mark_idempotent(self, campaign):
        kp = claim(campaign, [3, 0, 2])
        request_payment(campaign, kp)
        notes = settle_campaign(campaign, [(kp, 36)], [3, 0, 2])
        (payout_addr, (tx_ref, _, _)), = notes.items()
        campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout_addr})
        rid = campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout_addr})
        campaign.mine()
        receipt = campaign.chain.receipt(rid)
        assert receipt.ok and receipt.ret == {"already": True}


class TestComplaints:
    def _settled(self, underpay=False):
        campaign = build_campaign()
        kp = claim(campaign, [3, 0, 2])
        _, _, payout = request_payment(campaign, kp)
        notes = settle_campaign(
            campaign, [(kp, 36)], [3, 0, 2], underpay_addr=payout if underpay else None
        )
        tx_ref, blinding, paid = notes[payout]
        return campaign, kp, payout, tx_ref, blinding, paid

    def test_underpayment_flags_cf(self):
        campaign, kp, payout, tx_ref, blinding, paid = self._settled(underpay=True)
        assert paid == 35
        rid = campaign.cf_call(
            campaign.fsc_address,
            "raise_complaint",
            {"user_pk": kp.pk.encode(), "tx_ref": tx_ref, "blinding": blinding, "amount": paid},
        )
        campaign.mine()
        receipt = campaign.chain.receipt(rid)
        assert receipt.ok and receipt.ret["verdict"] == "cf_flagged"
        assert campaign.fsc.status == "failed"
        # fees withheld: the final payment_processed no longer pays out
        before = campaign.chain.balances[campaign.cf_account]
        campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout})
        campaign.mine()
        assert not campaign.fsc.fees_paid
        assert campaign.chain.balances[campaign.cf_account] == before

    def test_correct_payment_complaint_rejected(self):
        campaign, kp, payout, tx_ref, blinding, paid = self._settled(underpay=False)
        rid = campaign.cf_call(
            campaign.fsc_address,
            "raise_complaint",
            {"user_pk": kp.pk.encode(), "tx_ref": tx_ref, "blinding": blinding, "amount": paid},
        )
        campaign.mine()
        assert campaign.chain.receipt(rid).ret["verdict"] == "rejected"
        assert campaign.fsc.status == "active"

    def test_wrong_opening(self):
        campaign, kp, payout, tx_ref, blinding, paid = self._settled(underpay=False)
        rid = campaign.cf_call(
            campaign.fsc_address,
            "raise_complaint",
            {"user_pk": kp.pk.encode(), "tx_ref": tx_ref, "blinding": blinding + 1, "amount": paid},
        )
        campaign.mine()
        assert "BadOpening" in campaign.chain.receipt(rid).error

    def test_insufficient_refund_flow(self):
        # CF drains surplus from escrow, refund comes up short, advertiser claims
        campaign = build_campaign()
        kp = claim(campaign, [3, 0, 2])
        _, _, payout = request_payment(campaign, kp)
        notes = settle_campaign(campaign, [(kp, 36)], [3, 0, 2], surplus=500)
        tx_ref, _, _ = notes[payout]
        campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout})
        campaign.mine()
        adv_id, _, account, budget, fee, _, _ = campaign.advertisers[0]
        assert campaign.fsc.refunds_paid[adv_id] < budget - 36
        rid = campaign.cf_call(campaign.fsc_address, "claim_insufficient_refund", {"id": adv_id})
        campaign.mine()
        assert campaign.chain.receipt(rid).ret["verdict"] == "cf_flagged"
        assert campaign.fsc.status == "failed"

    def test_honest_refund_claim_rejected(self):
        campaign = build_campaign()
        kp = claim(campaign, [3, 0, 2])
        _, _, payout = request_payment(campaign, kp)
        notes = settle_campaign(campaign, [(kp, 36)], [3, 0, 2])
        tx_ref, _, _ = notes[payout]
        campaign.cf_call(campaign.fsc_address, "payment_processed", {"tx_ref": tx_ref, "addr": payout})
        campaign.mine()
        adv_id = campaign.advertisers[0][0]
        rid = campaign.cf_call(campaign.fsc_address, "claim_insufficient_refund", {"id": adv_id})
        campaign.mine()
        assert campaign.chain.receipt(rid).ret["verdict"] == "rejected"

    def test_claim_before_refunds(self, campaign):
        rid = campaign.cf_call(campaign.fsc_address, "claim_insufficient_refund", {"id": "adv0"})
        campaign.mine()
        assert "RefundsNotExecuted" in campaign.chain.receipt(rid).error

    def test_unknown_advertiser_claim(self, campaign):
        rid = campaign.cf_call(campaign.fsc_address, "claim_insufficient_refund", {"id": "ghost"})
        campaign.mine()
        assert "UnknownAdvertiser" in campaign.chain.receipt(rid).error
