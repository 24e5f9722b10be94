"""Scenario schema: the single declarative input that drives a run.

Scenarios are YAML mappings (see scenarios/ for bundled ones).  Every
field that influences behavior lives here, so a (seed, scenario) pair
pins the whole simulation.  validate() returns a list of human-readable
errors with field paths; load_scenario raises ScenarioError on any.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .rng import Rng
from .threshold import PoolParams

__all__ = ["Scenario", "PoolConfig", "AdvertiserConfig", "UserConfig", "ScenarioError", "load_scenario"]


class ScenarioError(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class PoolConfig:
    participants: int = 3  # expected DKG size
    threshold: int = 2
    draw_pool: int = 10
    vrf_modulus: int = 100_000


@dataclass
class AdvertiserConfig:
    adv_id: str
    ads: list
    policies: list
    impressions: list
    fee: int = 10


@dataclass
class UserConfig:
    count: int = 1
    max_count: int = 5  # uniform interaction counts in [0, max_count]
    vectors: list | None = None  # optional explicit vectors, one per user


@dataclass
class Scenario:
    seed: int = 0
    catalog_size: int = 3
    payout_periods: int = 1
    epoch_blocks: int = 30
    reward_cap: int = 10_000
    interaction_cap: int = 1000
    recovery_bound: int = 2**20
    cf_mode: str = "honest"
    chains: int = 1
    name: str = "scenario"
    pool: PoolConfig = field(default_factory=PoolConfig)
    advertisers: list = field(default_factory=list)
    users: UserConfig = field(default_factory=UserConfig)

    # -- construction ------------------------------------------------------

    @staticmethod
    def from_dict(data: dict) -> "Scenario":
        known = {
            "seed",
            "catalog_size",
            "payout_periods",
            "epoch_blocks",
            "reward_cap",
            "interaction_cap",
            "recovery_bound",
            "cf_mode",
            "chains",
            "name",
            "pool",
            "advertisers",
            "users",
        }
        errors = [f"unknown field: {key}" for key in data if key not in known]
        if errors:
            raise ScenarioError(errors)
        pool = PoolConfig(**data.get("pool", {}))
        users = UserConfig(**data.get("users", {}))
        advertisers = [
            AdvertiserConfig(
                adv_id=a["id"],
                ads=list(a["ads"]),
                policies=list(a["policies"]),
                impressions=list(a["impressions"]),
                fee=a.get("fee", 10),
            )
            for a in data.get("advertisers", [])
        ]
        scalar_fields = {
            k: v
            for k, v in data.items()
            if k not in ("pool", "advertisers", "users")
        }
        scenario = Scenario(pool=pool, users=users, advertisers=advertisers, **scalar_fields)
        errors = scenario.validate()
        if errors:
            raise ScenarioError(errors)
        return scenario

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "catalog_size": self.catalog_size,
            "payout_periods": self.payout_periods,
            "epoch_blocks": self.epoch_blocks,
            "reward_cap": self.reward_cap,
            "interaction_cap": self.interaction_cap,
            "recovery_bound": self.recovery_bound,
            "cf_mode": self.cf_mode,
            "chains": self.chains,
            "name": self.name,
            "pool": {
                "participants": self.pool.participants,
                "threshold": self.pool.threshold,
                "draw_pool": self.pool.draw_pool,
                "vrf_modulus": self.pool.vrf_modulus,
            },
            "advertisers": [
                {
                    "id": a.adv_id,
                    "ads": list(a.ads),
                    "policies": list(a.policies),
                    "impressions": list(a.impressions),
                    "fee": a.fee,
                }
                for a in self.advertisers
            ],
            "users": {
                "count": self.users.count,
                "max_count": self.users.max_count,
                "vectors": self.users.vectors,
            },
        }

    # -- validation ---------------------------------------------------------

    def validate(self) -> list:
        errors = []
        if self.seed < 0:
            errors.append("seed: must be non-negative")
        if self.catalog_size < 1:
            errors.append("catalog_size: must be >= 1")
        if self.payout_periods < 1:
            errors.append("payout_periods: must be >= 1")
        if self.chains < 1:
            errors.append("chains: must be >= 1")
        if self.cf_mode not in ("honest", "underpay", "divert"):
            errors.append(f"cf_mode: {self.cf_mode!r} not one of honest/underpay/divert")
        if not self.advertisers:
            errors.append("advertisers: at least one required")
        if not 1 <= self.pool.threshold <= self.pool.participants:
            errors.append("pool.threshold: need 1 <= threshold <= participants")
        if self.pool.participants > self.pool.draw_pool:
            errors.append("pool.participants: cannot exceed pool.draw_pool")
        if self.pool.vrf_modulus < 2:
            errors.append("pool.vrf_modulus: must be >= 2")
        covered = []
        for i, adv in enumerate(self.advertisers):
            prefix = f"advertisers[{i}]"
            if len(adv.ads) != len(adv.policies) or len(adv.ads) != len(adv.impressions):
                errors.append(f"{prefix}: ads/policies/impressions lengths differ")
            if any(not 0 <= s < self.catalog_size for s in adv.ads):
                errors.append(f"{prefix}.ads: slot outside catalog")
            if any(p < 0 for p in adv.policies):
                errors.append(f"{prefix}.policies: negative reward")
            if adv.fee < 0:
                errors.append(f"{prefix}.fee: negative")
            covered.extend(adv.ads)
        if sorted(covered) != list(range(self.catalog_size)):
            errors.append("advertisers: ad slots must cover the catalog exactly once")
        if self.users.count < 0:
            errors.append("users.count: must be >= 0")
        if self.users.vectors is not None:
            if len(self.users.vectors) != self.users.count:
                errors.append("users.vectors: need exactly one vector per user")
            for j, vec in enumerate(self.users.vectors):
                if len(vec) != self.catalog_size:
                    errors.append(f"users.vectors[{j}]: length != catalog_size")
                elif any(v < 0 for v in vec):
                    errors.append(f"users.vectors[{j}]: negative count")
        return errors

    # -- derived data ---------------------------------------------------------

    def pool_params(self) -> PoolParams:
        return PoolParams(
            expected=self.pool.participants,
            threshold=self.pool.threshold,
            draw_pool=self.pool.draw_pool,
            modulus=self.pool.vrf_modulus,
        )

    def policy_vector(self) -> list:
        policies = [0] * self.catalog_size
        for adv in self.advertisers:
            for slot, value in zip(adv.ads, adv.policies):
                policies[slot] = value
        return policies

    def interaction_vector(self, user_index: int, period: int) -> list:
        """Deterministic per-user interaction vector for one payout period."""
        if self.users.vectors is not None:
            return list(self.users.vectors[user_index])
        rng = Rng(self.seed).child(f"vector/{user_index}/{period}")
        return [rng.randrange(self.users.max_count + 1) for _ in range(self.catalog_size)]

    def user_partition(self) -> list:
        """Round-robin split of user indices across chains."""
        parts = [[] for _ in range(self.chains)]
        for index in range(self.users.count):
            parts[index % self.chains].append(index)
        return parts


def load_scenario(path) -> Scenario:
    data = yaml.safe_load(Path(path).read_text())
    if not isinstance(data, dict):
        raise ScenarioError(["scenario file must contain a mapping"])
    scenario = Scenario.from_dict(data)
    if scenario.name == "scenario":
        scenario.name = Path(path).stem
    return scenario
