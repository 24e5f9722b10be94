"""Policy and fund contracts: the two replicated state machines.

The policy contract stores the encrypted per-ad reward values and computes
each user's encrypted reward aggregate homomorphically; policies are only
ever decrypted inside validated block execution.  The fund contract
escrows advertiser stakes, buffers verified payment requests, settles
fees/refunds at campaign close, and adjudicates misbehavior complaints.
Any validated complaint flips its status to "failed", which is absorbing:
no fee payout or further settlement happens afterwards.
"""

from __future__ import annotations

from .codec import encode_args, to_wire
from .group import (
    G,
    GroupElement,
    IDENTITY,
    Ciphertext,
    Signature,
    add_ciphertexts,
    recover_plaintext,
    scalar_mul_ciphertext,
    sym_decrypt,
    verify_sig,
)
from .ledger import Address, ContractError, ExecutionContext
from .payments import open_verify
from .proofs import verify_decryption
from .threshold import ThresholdPublicKey, combine_partials, verify_partial

__all__ = ["PolicyContract", "FundContract", "policy_blob", "policy_value"]

_EMPTY_CT = Ciphertext(IDENTITY, IDENTITY)


def policy_blob(value: int) -> bytes:
    """Plaintext encoding of one policy value before symmetric encryption."""
    return value.to_bytes(8, "big")


def policy_value(blob: bytes) -> int:
    return int.from_bytes(blob, "big")


def aggregate_message(user_pk: GroupElement, ct: Ciphertext) -> bytes:
    """Bytes signed by the aggregate-signing key for one stored aggregate."""
    return encode_args({"user_pk": user_pk, "aggregate": ct})


class PolicyContract:
    """Per-catalog reward computation and payment-request validation."""

    KIND = "psc"

    def __init__(self, address: Address, deployer: Address, params: dict):
        self.address = address
        self.cf_account = deployer
        self.cf_pk: GroupElement = params["cf_pk"]
        self.catalog_size: int = params["catalog_size"]
        self.fsc_address: Address = params["fsc"]
        self.reward_cap: int = params.get("reward_cap", 10_000)
        self.enc_policies: list = [None] * self.catalog_size
        self.enc_keys: list = [None] * self.catalog_size
        self.threshold_key: GroupElement | None = None
        self.aggregates: dict[bytes, Ciphertext] = {}
        self.aggregate_signatures: dict[bytes, Signature] = {}
        self.reported_vectors: list = []  # (period, user_pk bytes, tuple[Ciphertext])
        self.requested_this_period: set = set()
        self.period = 0

    # -- dispatch ------------------------------------------------------------

    def call(self, ctx: ExecutionContext, function: str, args):
        handlers = {
            "store_policy": self.store_policy,
            "store_encrypted_keys": self.store_encrypted_keys,
            "store_threshold_key": self.store_threshold_key,
            "compute_aggregate": self.compute_aggregate,
            "get_aggregate": self.get_aggregate_call,
            "payment_request": self.payment_request,
            "advance_period": self.advance_period,
        }
        if function not in handlers:
            raise ContractError("UnknownFunction", function)
        return handlers[function](ctx, args)

    # -- campaign setup -------------------------------------------------------

    def _require_cf(self, ctx):
        if ctx.sender != self.cf_account:
            raise ContractError("NotCF")

    def _fsc(self, ctx) -> "FundContract":
        return ctx.contract(self.fsc_address)

    def store_policy(self, ctx, args):
        self._require_cf(ctx)
        if self._fsc(ctx).init:
            raise ContractError("AlreadyInitialized")
        index = args["index"]
        if not 0 <= index < self.catalog_size:
            raise ContractError("IndexOutOfRange", str(index))
        self.enc_policies[index] = args["enc_policy"]
        return None

    def store_encrypted_keys(self, ctx, args):
        enc_keys = args["enc_keys"]
        sig = args["sig"]
        if len(enc_keys) != self.catalog_size:
            raise ContractError("LengthMismatch")
        if not verify_sig(self.cf_pk, encode_args(enc_keys), sig, tag=b"sig/enc-keys"):
            raise ContractError("BadSignature")
        if self._fsc(ctx).init:
            raise ContractError("AlreadyInitialized")
        self.enc_keys = list(enc_keys)
        return None

    def store_threshold_key(self, ctx, args):
        if self.threshold_key is not None:
            raise ContractError("AlreadyInitialized", "threshold key already published")
        self.threshold_key = args["pk"]
        return None

    # -- reward aggregation ----------------------------------------------------

    def _decrypt_policies(self, ctx) -> list[int]:
        if any(k is None for k in self.enc_keys) or any(p is None for p in self.enc_policies):
            raise ContractError("PolicyNotLoaded")
        values = []
        for enc_key, enc_policy in zip(self.enc_keys, self.enc_policies):
            sym_key = ctx.validator_decrypt(enc_key)
            values.append(policy_value(sym_decrypt(sym_key, enc_policy)))
        return values

    def compute_aggregate(self, ctx, args):
        user_pk: GroupElement = args["user_pk"]
        enc_vec = args["enc_vec"]
        enc_vec_prime = args["enc_vec_prime"]
        if len(enc_vec) != self.catalog_size or len(enc_vec_prime) != self.catalog_size:
            raise ContractError("LengthMismatch")
        if not self._fsc(ctx).init:
            raise ContractError("NotInitialized")
        key = user_pk.encode()
        if key in self.aggregates:
            raise ContractError("DuplicateClaim")
        policies = self._decrypt_policies(ctx)
        aggregate = _EMPTY_CT
        for value, ct in zip(policies, enc_vec):
            if value:
                aggregate = add_ciphertexts(aggregate, scalar_mul_ciphertext(value, ct))
        self.aggregates[key] = aggregate
        self.aggregate_signatures[key] = ctx.sign_aggregate(aggregate_message(user_pk, aggregate))
        self.reported_vectors.append((self.period, key, tuple(enc_vec_prime)))
        return None

    def get_aggregate(self, user_pk: GroupElement):
        """Off-chain read used by clients between blocks."""
        key = user_pk.encode()
        if key not in self.aggregates:
            raise ContractError("UnknownUser")
        return self.aggregates[key], self.aggregate_signatures[key]

    def get_aggregate_call(self, ctx, args):
        ct, sig = self.get_aggregate(args["user_pk"])
        return {"aggregate": ct, "sig": sig}

    # -- payment requests -------------------------------------------------------

    def payment_request(self, ctx, args):
        if not ctx.private:
            raise ContractError("NotPrivate", "payment requests must be private-input")
        user_pk: GroupElement = args["user_pk"]
        amount: int = args["amount"]
        reward_sig: Signature = args["reward_sig"]
        proof = args["proof"]
        payout_address: Address = args["payout_address"]
        key = user_pk.encode()
        if key not in self.aggregates:
            raise ContractError("UnknownUser")
        aggregate = self.aggregates[key]
        if not verify_sig(
            ctx.chain.aggregate_keypair.pk,
            aggregate_message(user_pk, aggregate),
            reward_sig,
            tag=b"sig/aggregate",
        ):
            raise ContractError("BadSignature")
        if not verify_decryption(user_pk, aggregate, G.mul(amount), proof):
            raise ContractError("BadProof")
        if key in self.requested_this_period:
            raise ContractError("DuplicateRequest")
        if amount > self.reward_cap:
            raise ContractError("CapExceeded", f"{amount} > {self.reward_cap}")
        self.requested_this_period.add(key)
        self._fsc(ctx).buffer_payment(payout_address, amount, key)
        return None

    def advance_period(self, ctx, args):
        self._require_cf(ctx)
        self.period += 1
        self.requested_this_period = set()
        return None

    # -- state -------------------------------------------------------------------

    def state_dict(self) -> dict:
        return to_wire(
            {
                "kind": self.KIND,
                "cf": self.cf_account,
                "catalog_size": self.catalog_size,
                "enc_policies": [p for p in self.enc_policies],
                "enc_keys": [k for k in self.enc_keys],
                "threshold_key": self.threshold_key,
                "aggregates": {k: v for k, v in sorted(self.aggregates.items())},
                "aggregate_sigs": {k: v for k, v in sorted(self.aggregate_signatures.items())},
                "reported": [[p, k, list(v)] for p, k, v in self.reported_vectors],
                "requested": sorted(self.requested_this_period),
                "period": self.period,
                "reward_cap": self.reward_cap,
            }
        )


class FundContract:
    """Escrow, buffered payments, settlement, analytics, and complaints."""

    KIND = "fsc"

    def __init__(self, address: Address, deployer: Address, params: dict):
        self.address = address
        self.cf_account = deployer
        self.cf_pk: GroupElement = params["cf_pk"]
        self.catalog_size: int = params["catalog_size"]
        self.epoch_blocks: int = params.get("epoch_blocks", 10)
        self.psc_address: Address | None = None
        self.init = False
        self.status = "active"
        self.advertisers: dict[str, dict] = {}
        self.payment_requests: list[dict] = []
        self.payed_requests: dict[bytes, bytes] = {}  # payout addr -> tx_ref
        self.aggr_clicks = [0] * self.catalog_size
        self.pool_pk: GroupElement | None = None
        self.pool_threshold: int | None = None
        self.recovery_bound: int = 2**20
        self.analytics_enc_totals: list | None = None
        self.analytics_tpk: dict | None = None
        self.analytics_partials: dict[int, list] = {}
        self.analytics_totals: list | None = None
        self.settlement_counter = 0
        self.settled_total = 0
        self.refunds_paid: dict[str, int] = {}
        self.top_up_due: dict[str, int] = {}
        self.fees_paid = False
        self.refunds_done = False
        self.analytics_ready = False
        self.complaints: list[dict] = []

    # -- dispatch ------------------------------------------------------------

    def call(self, ctx: ExecutionContext, function: str, args):
        handlers = {
            "link_psc": self.link_psc,
            "store_adv_id": self.store_adv_id,
            "store_funds": self.store_funds,
            "register_pool": self.register_pool,
            "store_aggr_clicks": self.store_aggr_clicks,
            "post_analytics": self.post_analytics,
            "settlement_request": self.settlement_request,
            "payment_processed": self.payment_processed,
            "finalize": self.finalize,
            "refund_advertisers": self.refund_advertisers_call,
            "pay_processing_fees": self.pay_processing_fees_call,
            "raise_complaint": self.raise_complaint,
            "claim_insufficient_refund": self.claim_insufficient_refund,
        }
        if function not in handlers:
            raise ContractError("UnknownFunction", function)
        return handlers[function](ctx, args)

    def _require_cf(self, ctx):
        if ctx.sender != self.cf_account:
            raise ContractError("NotCF")

    def _require_alive(self):
        if self.status == "failed":
            raise ContractError("CampaignFailed")

    def link_psc(self, ctx, args):
        self._require_cf(ctx)
        if self.psc_address is not None:
            raise ContractError("AlreadyInitialized", "psc already linked")
        self.psc_address = args["psc"]
        return None

    # -- advertiser onboarding --------------------------------------------------

    def store_adv_id(self, ctx, args):
        self._require_cf(ctx)
        if self.init:
            raise ContractError("AlreadyInitialized")
        adv_id = args["id"]
        if adv_id in self.advertisers:
            raise ContractError("DuplicateAdvertiser", adv_id)
        self.advertisers[adv_id] = {
            "account": args["account"],
            "budget": args["budget"],
            "fee": args["fee"],
            "ads": list(args["ads"]),
            "staked": 0,
        }
        return None

    def store_funds(self, ctx, args):
        adv_id = args["id"]
        amount = args["amount"]
        record = self.advertisers.get(adv_id)
        if record is None:
            raise ContractError("UnknownAdvertiser", adv_id)
        if self.init:
            raise ContractError("AlreadyInitialized")
        if record["staked"]:
            raise ContractError("AlreadyStaked", adv_id)
        required = record["budget"] + record["fee"]
        if amount != required:
            raise ContractError("WrongStakeAmount", f"need {required}, got {amount}")
        if ctx.sender != record["account"]:
            raise ContractError("NotAdvertiserAccount")
        ctx.transfer(ctx.sender, self.address, amount)
        record["staked"] = amount
        if all(r["staked"] for r in self.advertisers.values()):
            self._initialise_campaign()
        return None

    def _initialise_campaign(self):
        self.init = True

    # -- analytics ----------------------------------------------------------------

    def register_pool(self, ctx, args):
        if self.pool_pk is not None:
            raise ContractError("AlreadyInitialized", "pool already registered")
        self.pool_pk = args["pk"]
        self.pool_threshold = args["threshold"]
        self.recovery_bound = args.get("recovery_bound", self.recovery_bound)
        return None

    def store_aggr_clicks(self, ctx, args):
        totals = args["totals"]
        sig = args["sig"]
        if self.pool_pk is None:
            raise ContractError("NoPoolKey")
        if len(totals) != self.catalog_size:
            raise ContractError("LengthMismatch")
        if not verify_sig(self.pool_pk, encode_args(totals), sig, tag=b"sig/aggr-clicks"):
            raise ContractError("BadSignature")
        self.aggr_clicks = [a + b for a, b in zip(self.aggr_clicks, totals)]
        self.analytics_ready = True
        return None

    def post_analytics(self, ctx, args):
        """One consensus participant posts the summed ciphertexts plus its
        partial decryptions; at threshold the contract combines and
        accumulates the recovered per-ad totals."""
        if self.pool_threshold is None:
            raise ContractError("NoPoolKey")
        enc_totals = args["enc_totals"]
        tpk_pk: GroupElement = args["tpk_pk"]
        tpk_vector = args["tpk_vector"]
        index: int = args["index"]
        partials = args["partials"]
        if len(enc_totals) != self.catalog_size or len(partials) != self.catalog_size:
            raise ContractError("LengthMismatch")
        if self.psc_address is not None:
            published = ctx.contract(self.psc_address).threshold_key
            if published is not None and published != tpk_pk:
                raise ContractError("ThresholdKeyMismatch")
        if tpk_vector and tpk_vector[0] != tpk_pk:
            raise ContractError("ThresholdKeyMismatch", "vector head must be the public key")
        if self.analytics_enc_totals is None:
            self.analytics_enc_totals = list(enc_totals)
            self.analytics_tpk = {"pk": tpk_pk, "vector": list(tpk_vector)}
        else:
            if [ct.encode() for ct in enc_totals] != [ct.encode() for ct in self.analytics_enc_totals]:
                raise ContractError("AnalyticsMismatch", "posted ciphertexts disagree")
        if index in self.analytics_partials:
            raise ContractError("DuplicatePost", str(index))
        tpk = ThresholdPublicKey(self.analytics_tpk["pk"], tuple(self.analytics_tpk["vector"]))
        for slot, partial in enumerate(partials):
            if partial.index != index:
                raise ContractError("IndexMismatch")
            if not verify_partial(tpk, self.analytics_enc_totals[slot], partial):
                raise ContractError("InvalidShareProof", str(index))
        self.analytics_partials[index] = list(partials)
        if self.analytics_totals is None and len(self.analytics_partials) >= self.pool_threshold:
            self._combine_analytics(tpk)
            self._maybe_close(ctx)
        return {"posted": index, "combined": self.analytics_totals is not None}

    def _combine_analytics(self, tpk: ThresholdPublicKey):
        chosen = sorted(self.analytics_partials)[: self.pool_threshold]
        totals = []
        for slot, ct in enumerate(self.analytics_enc_totals):
            partials = [self.analytics_partials[i][slot] for i in chosen]
            point = combine_partials(tpk, partials, ct, self.pool_threshold)
            totals.append(recover_plaintext(point, self.recovery_bound))
        self.analytics_totals = totals
        self.aggr_clicks = [a + b for a, b in zip(self.aggr_clicks, totals)]
        self.analytics_ready = True

    # -- payments -------------------------------------------------------------------

    def buffer_payment(self, payout_address: Address, amount: int, user_pk: bytes):
        """Called by the policy contract after it validated a request."""
        self.payment_requests.append({"addr": payout_address, "amount": amount, "user_pk": user_pk})

    def settlement_request(self, ctx, args):
        self._require_alive()
        amount = args["amount"]
        sig = args["sig"]
        message = encode_args(["settlement", self.address, amount, self.settlement_counter])
        if not verify_sig(self.cf_pk, message, sig, tag=b"sig/settlement"):
            raise ContractError("BadSignature")
        balance = ctx.chain.balances.get(self.address, 0)
        if amount > balance:
            raise ContractError("Overdraw", f"{amount} > escrow {balance}")
        ctx.transfer(self.address, self.cf_account, amount)
        self.settlement_counter += 1
        self.settled_total += amount
        return None

    def payment_processed(self, ctx, args):
        tx_ref = args["tx_ref"]
        addr = args["addr"]
        note = ctx.note(tx_ref)
        if note is None or note.recipient != addr:
            raise ContractError("UnknownTxRef")
        if not any(req["addr"] == addr for req in self.payment_requests):
            raise ContractError("UnknownAddress")
        if addr in self.payed_requests:
            return {"already": True}
        self.payed_requests[addr] = tx_ref
        done = len(self.payed_requests) == len(self.payment_requests)
        if done:
            self._maybe_close(ctx)
        return {"already": False, "all_paid": done}

    # -- campaign close ----------------------------------------------------------------

    def _campaign_over(self, ctx) -> bool:
        all_paid = self.payment_requests and len(self.payed_requests) == len(self.payment_requests)
        return bool(all_paid) or ctx.height >= self.epoch_blocks

    def _maybe_close(self, ctx):
        """Once every buffered request is paid and analytics landed, pay the
        processing fees and run refunds.  A failed status blocks both."""
        all_paid = self.payment_requests and len(self.payed_requests) == len(self.payment_requests)
        if not all_paid or not self.analytics_ready or self.refunds_done:
            return
        if self.status == "failed":
            return
        self.pay_processing_fees(ctx)
        self._refund(ctx)

    def _policies(self, ctx) -> list[int]:
        psc = ctx.contract(self.psc_address)
        return psc._decrypt_policies(ctx)

    def _spent(self, policies: list[int], adv_id: str) -> int:
        record = self.advertisers[adv_id]
        return sum(policies[i] * self.aggr_clicks[i] for i in record["ads"])

    def finalize(self, ctx, args):
        """Explicit campaign close (epoch elapsed or everything paid)."""
        if not self._campaign_over(ctx):
            raise ContractError("CampaignActive")
        if self.refunds_done:
            raise ContractError("AlreadyFinalized")
        if self.status != "failed":
            self.pay_processing_fees(ctx)
            self._refund(ctx)
        return None

    def pay_processing_fees_call(self, ctx, args):
        self._require_alive()
        if not self._campaign_over(ctx):
            raise ContractError("CampaignActive")
        self.pay_processing_fees(ctx)
        return None

    def pay_processing_fees(self, ctx):
        self._require_alive()
        if self.fees_paid:
            return
        total_fees = sum(r["fee"] for r in self.advertisers.values())
        balance = ctx.chain.balances.get(self.address, 0)
        if total_fees > balance:
            raise ContractError("Overdraw", "escrow cannot cover fees")
        ctx.transfer(self.address, self.cf_account, total_fees)
        self.fees_paid = True

    def refund_advertisers_call(self, ctx, args):
        if not self._campaign_over(ctx):
            raise ContractError("CampaignActive")
        if self.refunds_done:
            raise ContractError("AlreadyFinalized")
        self._refund(ctx)
        return {"refunds": dict(self.refunds_paid)}

    def _refund(self, ctx):
        """refund = stake - spent - fee per advertiser; shortfalls are paid
        out as far as the escrow allows and leave an auditable gap."""
        policies = self._policies(ctx)
        for adv_id in self.advertisers:
            record = self.advertisers[adv_id]
            spent = self._spent(policies, adv_id)
            owed = record["staked"] - spent - record["fee"]
            if owed < 0:
                # overspent campaign: the difference is requested back
                self.top_up_due[adv_id] = -owed
                owed = 0
            balance = ctx.chain.balances.get(self.address, 0)
            paid = min(owed, balance)
            if paid:
                ctx.transfer(self.address, record["account"], paid)
            self.refunds_paid[adv_id] = paid
        self.refunds_done = True

    # -- complaints -------------------------------------------------------------------

    def raise_complaint(self, ctx, args):
        """User proves the confidential payment mismatches their request."""
        tx_ref = args["tx_ref"]
        user_pk: bytes = args["user_pk"]
        blinding = args["blinding"]
        amount = args["amount"]
        note = ctx.note(tx_ref)
        if note is None:
            raise ContractError("UnknownTxRef")
        request = next((r for r in self.payment_requests if r["user_pk"] == user_pk), None)
        if request is None or note.recipient != request["addr"]:
            raise ContractError("UnknownTxRef", "note does not resolve to the user's payout address")
        if not open_verify(note.commitment, blinding, amount):
            raise ContractError("BadOpening")
        if amount == request["amount"]:
            return {"verdict": "rejected"}
        self.status = "failed"
        self.complaints.append(
            {"kind": "underpayment", "user_pk": user_pk.hex(), "expected": request["amount"], "paid": amount}
        )
        return {"verdict": "cf_flagged"}

    def claim_insufficient_refund(self, ctx, args):
        """Advertiser checks spent + refund + fee against their stake."""
        adv_id = args["id"]
        if adv_id not in self.advertisers:
            raise ContractError("UnknownAdvertiser", adv_id)
        if not self.refunds_done:
            raise ContractError("RefundsNotExecuted")
        record = self.advertisers[adv_id]
        policies = self._policies(ctx)
        spent = self._spent(policies, adv_id)
        refund = self.refunds_paid.get(adv_id, 0) - self.top_up_due.get(adv_id, 0)
        if spent + refund + record["fee"] == record["staked"]:
            return {"verdict": "rejected"}
        self.status = "failed"
        self.complaints.append(
            {
                "kind": "insufficient_refund",
                "advertiser": adv_id,
                "stake": record["staked"],
                "spent": spent,
                "refund": refund,
                "fee": record["fee"],
            }
        )
        return {"verdict": "cf_flagged"}

    # -- state ----------------------------------------------------------------------------

    def state_dict(self) -> dict:
        return to_wire(
            {
                "kind": self.KIND,
                "cf": self.cf_account,
                "init": self.init,
                "status": self.status,
                "advertisers": {k: v for k, v in sorted(self.advertisers.items())},
                "payment_requests": self.payment_requests,
                "payed": {k: v for k, v in sorted(self.payed_requests.items())},
                "aggr_clicks": self.aggr_clicks,
                "pool_pk": self.pool_pk,
                "pool_threshold": self.pool_threshold,
                "analytics_totals": self.analytics_totals,
                "analytics_ready": self.analytics_ready,
                "analytics_posts": sorted(self.analytics_partials),
                "settled_total": self.settled_total,
                "refunds": {k: v for k, v in sorted(self.refunds_paid.items())},
                "top_up_due": {k: v for k, v in sorted(self.top_up_due.items())},
                "fees_paid": self.fees_paid,
                "refunds_done": self.refunds_done,
                "complaints": self.complaints,
                "epoch_blocks": self.epoch_blocks,
            }
        )
