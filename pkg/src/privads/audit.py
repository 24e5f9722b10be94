"""Independent replay verification of a finished run.

verify_run re-executes the scenario embedded in the report from its seed
(the seed regenerates every secret, which is the test-only key escrow),
recomputes each reward with the plaintext dot-product oracle, checks the
block log's hash chain record by record, and compares the replayed chain
state against the log.  Every discrepancy is returned as a finding.
"""

from __future__ import annotations

import json
from pathlib import Path

from .ledger import Block
from .runner import report_bytes, run_scenario
from .scenario import Scenario

__all__ = ["write_block_log", "load_block_log", "verify_run"]


def write_block_log(chains, path):
    """One JSON record per block, tagged with its chain id."""
    with open(path, "w") as fh:
        for run in chains:
            for block in run.chain.blocks:
                fh.write(json.dumps({"chain": run.chain.chain_id, **block.record()}, sort_keys=True,
                                    separators=(",", ":")) + "\n")


def load_block_log(path) -> dict:
    by_chain: dict[int, list] = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        by_chain.setdefault(record["chain"], []).append(record)
    return by_chain


def _check_hash_chain(records) -> list:
    findings = []
    parent = "genesis"
    for record in records:
        recomputed = Block.compute_hash(
            record["height"], record["parent"], record["txs"], record["receipts"], record["state"]
        )
        if recomputed != record["hash"]:
            findings.append(f"block {record['height']}: stored hash does not match its contents")
        if record["parent"] != parent:
            findings.append(f"block {record['height']}: hash chain broken (parent mismatch)")
        parent = record["hash"]
    return findings


def verify_run(report_path, blocks_path) -> tuple:
    """Returns (ok, findings).  Empty findings means the run checks out."""
    findings = []
    raw = Path(report_path).read_bytes()
    sections = {s["section"]: s for s in (json.loads(line) for line in raw.decode().splitlines() if line.strip())}
    meta = sections.get("meta")
    if meta is None:
        return False, ["report has no meta section"]
    scenario = Scenario.from_dict(meta["scenario"])

    # 1. block log integrity
    by_chain = load_block_log(blocks_path)
    for chain_id in sorted(by_chain):
        for finding in _check_hash_chain(by_chain[chain_id]):
            findings.append(f"chain {chain_id}: {finding}")

    # 2. deterministic replay
    outcome = run_scenario(scenario)
    if report_bytes(outcome.sections) != raw:
        findings.append("replayed report differs from the stored report")
    for run in outcome.chains:
        logged = by_chain.get(run.chain.chain_id)
        if logged is None:
            findings.append(f"chain {run.chain.chain_id}: missing from block log")
            continue
        replayed = [b.block_hash for b in run.chain.blocks]
        stored = [r["hash"] for r in logged]
        if replayed != stored:
            findings.append(f"chain {run.chain.chain_id}: replayed block hashes differ from the log")

    # 3. plaintext reward oracle against the stored report
    policies = scenario.policy_vector()
    users_section = sections.get("users", {"rows": []})
    for row in users_section["rows"]:
        index = int(row["user"].removeprefix("user"))
        oracle = sum(
            sum(p * x for p, x in zip(policies, scenario.interaction_vector(index, period)))
            for period in range(scenario.payout_periods)
        )
        if row["claimed"] != oracle:
            findings.append(f"{row['user']}: reported claim {row['claimed']} != oracle {oracle}")
        if row["paid"] != oracle and not row["complaints"]:
            findings.append(f"{row['user']}: paid {row['paid']} != oracle {oracle} with no complaint")

    # 4. conservation equations recorded in the report
    for row in sections.get("conservation", {"rows": []})["rows"]:
        if not row["holds"]:
            status = next(
                (c["status"] for c in sections.get("chains", {"rows": []})["rows"] if c["chain"] == row["chain"]),
                "active",
            )
            if status != "failed":
                findings.append(
                    f"chain {row['chain']} advertiser {row['advertiser']}: conservation equation violated"
                )

    return not findings, findings
