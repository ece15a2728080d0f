"""In-process simulation of the peer network and ordering service.

N organization peers endorse transactions by dry-running them against their
local state; the orderer serializes endorsed transactions FIFO (arrival
sequence, ties by tx id), cuts blocks, and every peer applies the same
blocks to its own replica. A logical clock scripted by the caller drives
block timestamps, so entire runs are a pure function of (script, config,
key seed).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from .canonical import to_canonical_json
from .chaincode import (
    ChainClock,
    OP_CHECK_EMBARGO,
    OP_ONBOARD,
    OP_REVOKE,
    OP_SUBMIT,
    OP_UPDATE_STATUS,
    WorldState,
    execute_transaction,
)
from .corrections import OP_DISPUTE, OP_MERGE, OP_PARTIAL_DUP, OP_REJECT, OP_SPLIT
from .errors import BadCertificate, ClockRegression, LedgerError, UnauthorizedCaller
from .identity import (
    Certificate,
    CertificateAuthority,
    KeyPair,
    ROLE_CNA,
    ROLE_GOVERNANCE,
    ROLE_READER,
    RevocationList,
    derive_keypair,
    sign_payload,
    verify_certificate,
    verify_payload,
)
from .ledger import (
    Block,
    EndorsementPolicy,
    Transaction,
    TrustAnchors,
    append_block,
    apply_block,
    make_genesis_block,
    state_hash,
)

DEFAULT_GOVERNANCE = "gov.root"


@dataclass(frozen=True)
class OrdererConfig:
    max_block_txs: int = 100
    tick_seconds: int = 1

    def to_dict(self) -> dict:
        return {"maxBlockTxs": self.max_block_txs, "tickSeconds": self.tick_seconds}

    @classmethod
    def from_dict(cls, obj: dict) -> "OrdererConfig":
        return cls(
            max_block_txs=int(obj.get("maxBlockTxs", 100)),
            tick_seconds=int(obj.get("tickSeconds", 1)),
        )


@dataclass(frozen=True)
class Refusal:
    peer_id: str
    code: str
    message: str


class Peer:
    """One organization's node: chain replica plus materialized state."""

    def __init__(self, peer_id: str, org: str, key: KeyPair, genesis: Block):
        self.peer_id = peer_id
        self.org = org
        self.key = key
        self.chain: list[Block] = []
        self.state = WorldState()
        self.commit_block(genesis)

    def endorse(self, tx: Transaction, crl, cert_check_cache: dict | None = None):
        """Signature over the payload iff the caller's certificate verifies
        (and is not revoked), the payload signature holds, and a dry run of
        the chaincode passes every guard. Otherwise a Refusal naming the
        failed guard."""
        payload = tx.payload
        caller = payload["caller"]
        cert = self.state.certificates.get(caller)
        if cert is None:
            return Refusal(self.peer_id, BadCertificate("").code, f"no certificate for {caller}")
        if cert.role == ROLE_READER:
            return Refusal(self.peer_id, UnauthorizedCaller("").code, "readers cannot sign")
        cache_key = (cert.cert_hash(), self.state.ca_public_key)
        if cert_check_cache is not None and cache_key in cert_check_cache:
            ca_ok = cert_check_cache[cache_key]
        else:
            # revocation is checked separately below so the cache key can
            # stay independent of the CRL version
            ca_ok, _ = verify_certificate(cert, RevocationList(), self.state.ca_public_key)
            if cert_check_cache is not None:
                cert_check_cache[cache_key] = ca_ok
        if not ca_ok:
            return Refusal(self.peer_id, BadCertificate("").code, "CA signature invalid")
        if not tx.caller_signature or not verify_payload(
            cert.public_key, tx.payload_bytes(), bytes.fromhex(tx.caller_signature)
        ):
            return Refusal(self.peer_id, BadCertificate("").code, "payload signature invalid")
        try:
            execute_transaction(
                self.state, payload, ChainClock(payload["clockNow"]), check_only=True
            )
        except LedgerError as exc:
            return Refusal(self.peer_id, exc.code, str(exc))
        if cert.serial in crl.revoked_serials:
            return Refusal(self.peer_id, "Revoked", f"certificate serial {cert.serial} revoked")
        return self.peer_id, sign_payload(self.key, tx.payload_bytes()).hex()

    def commit_block(self, block: Block) -> None:
        if self.chain:
            assert block.prev_hash == self.chain[-1].block_hash, "orderer broke the chain"
        apply_block(self.state, block)
        self.chain.append(block)

    def state_hash(self) -> str:
        return state_hash(self.state)


@dataclass
class SubmitResult:
    tx: Transaction
    accepted: bool
    refusals: list[Refusal] = field(default_factory=list)


class SimulatedNetwork:
    """Consortium in one process: CA, governance identity, N peers, orderer."""

    def __init__(
        self,
        *,
        n_peers: int = 3,
        policy: EndorsementPolicy | None = None,
        seed: bytes = b"cveledger-dev",
        genesis_time: int = 0,
        orderer: OrdererConfig | None = None,
        governance_id: str = DEFAULT_GOVERNANCE,
    ):
        self.orderer = orderer or OrdererConfig()
        self.seed = seed
        self.ca = CertificateAuthority(derive_keypair(seed, "ca"))
        self.keys: dict[str, KeyPair] = {}
        self.certs: dict[str, Certificate] = {}
        self.governance_id = governance_id

        gov_key = derive_keypair(seed, governance_id)
        gov_cert = self.ca.issue_certificate(
            governance_id, ROLE_GOVERNANCE, gov_key.public_hex, issued_at=genesis_time
        )
        self.keys[governance_id] = gov_key
        self.certs[governance_id] = gov_cert

        peers_cfg = {}
        peer_keys = {}
        for i in range(n_peers):
            pid = f"peer{i}.org{i}"
            key = derive_keypair(seed, pid)
            peer_keys[pid] = key
            peers_cfg[pid] = {"org": f"org{i}", "publicKey": key.public_hex}
        self.policy = policy or EndorsementPolicy(rule="ANY_N", n=1)
        genesis = make_genesis_block(
            self.ca.public_key, {governance_id: gov_cert}, peers_cfg, self.policy, genesis_time
        )
        self.trust = TrustAnchors.from_genesis(genesis)
        self.peers = [
            Peer(pid, peers_cfg[pid]["org"], peer_keys[pid], genesis) for pid in sorted(peers_cfg)
        ]
        self.chain: list[Block] = [genesis]
        self.clock: int = genesis_time
        self.pending: list[tuple[int, Transaction]] = []
        self._arrival_seq = 0
        self._cert_check_cache: dict = {}
        self.submit_tick: dict[str, int] = {}
        self.commit_tick: dict[str, int] = {}
        self._tick_count = 0

    @classmethod
    def from_materials(
        cls,
        *,
        ca: CertificateAuthority,
        keys: dict[str, KeyPair],
        certs: dict[str, Certificate],
        chain: list[Block],
        orderer: OrdererConfig,
        governance_id: str = DEFAULT_GOVERNANCE,
    ) -> "SimulatedNetwork":
        """Rebuild a running network around an existing chain: peers replay
        it independently and the orderer resumes at the tip's clock."""
        if not chain:
            raise ValueError("a genesis block is required")
        net = cls.__new__(cls)
        net.orderer = orderer
        net.seed = b""
        net.ca = ca
        net.keys = dict(keys)
        net.certs = dict(certs)
        net.governance_id = governance_id
        genesis = chain[0]
        net.trust = TrustAnchors.from_genesis(genesis)
        net.policy = net.trust.policy
        net.peers = []
        for pid in sorted(net.trust.peer_keys):
            key = net.keys.get(pid)
            if key is None:
                raise BadCertificate(f"missing signing key for peer {pid}")
            peer = Peer(pid, net.trust.peer_orgs[pid], key, genesis)
            for block in chain[1:]:
                peer.commit_block(block)
            net.peers.append(peer)
        net.chain = list(chain)
        net.clock = chain[-1].block_time
        net.pending = []
        net._arrival_seq = 0
        net._cert_check_cache = {}
        net.submit_tick = {}
        net.commit_tick = {}
        net._tick_count = 0
        return net

    # -- identities ---------------------------------------------------------

    def issue_identity(self, participant: str, role: str = ROLE_CNA) -> Certificate:
        key = derive_keypair(self.seed, participant)
        cert = self.ca.issue_certificate(participant, role, key.public_hex, issued_at=self.clock)
        self.keys[participant] = key
        self.certs[participant] = cert
        return cert

    def revoke_identity(self, participant: str) -> None:
        cert = self.certs.get(participant)
        if cert is not None:
            self.ca.revoke(cert.serial)

    @property
    def crl(self):
        return self.ca.crl

    # -- transaction flow ----------------------------------------------------

    def build_tx(self, op: str, args: dict, caller: str) -> Transaction:
        key = self.keys.get(caller)
        if key is None:
            raise BadCertificate(f"no signing key for {caller}")
        return Transaction.build(op, args, caller, self.clock, key=key)

    def submit_tx(self, tx: Transaction) -> SubmitResult:
        """Gather endorsements (peers asked in id order until the policy is
        satisfied); accepted transactions queue for the next block cut."""
        endorsements: list[tuple[str, str]] = []
        refusals: list[Refusal] = []
        orgs: set[str] = set()
        for peer in self.peers:
            outcome = peer.endorse(tx, self.crl, self._cert_check_cache)
            if isinstance(outcome, Refusal):
                refusals.append(outcome)
                continue
            endorsements.append(outcome)
            orgs.add(peer.org)
            if self.policy.satisfied(orgs, len(endorsements)):
                break
        endorsed = tx.with_endorsements(endorsements)
        if not endorsements or not self.policy.satisfied(orgs, len(endorsements)):
            return SubmitResult(tx=endorsed, accepted=False, refusals=refusals)
        self.pending.append((self._arrival_seq, endorsed))
        self._arrival_seq += 1
        self.submit_tick[endorsed.tx_id] = self._tick_count
        return SubmitResult(tx=endorsed, accepted=True, refusals=refusals)

    def invoke(self, op: str, args: dict, caller: str) -> SubmitResult:
        return self.submit_tx(self.build_tx(op, args, caller))

    def advance_clock(self, now: int) -> None:
        if now < self.clock:
            raise ClockRegression(f"clock to {now} behind {self.clock}")
        self.clock = int(now)

    def tick(self, now: int | None = None) -> list[Block]:
        """Advance the logical clock and cut pending transactions into
        blocks (max_block_txs per block); all peers commit each block."""
        new_now = self.clock + self.orderer.tick_seconds if now is None else int(now)
        if new_now < self.clock:
            raise ClockRegression(f"tick to {new_now} behind clock {self.clock}")
        self.clock = new_now
        queue = sorted(self.pending, key=lambda item: (item[0], item[1].tx_id))
        self.pending = []
        cut: list[Block] = []
        for start in range(0, len(queue), self.orderer.max_block_txs):
            batch = [tx for _, tx in queue[start : start + self.orderer.max_block_txs]]
            self.chain = append_block(self.chain, batch, self.clock, self.trust)
            block = self.chain[-1]
            for peer in self.peers:
                peer.commit_block(block)
            for tx in batch:
                self.commit_tick[tx.tx_id] = self._tick_count
            cut.append(block)
        self._tick_count += 1
        return cut

    def state_hashes(self) -> dict[str, str]:
        return {peer.peer_id: peer.state_hash() for peer in self.peers}

    def consistent(self) -> bool:
        return len(set(self.state_hashes().values())) == 1


# -- scenario driver ----------------------------------------------------------

_ACTION_OPS = {
    "status": OP_UPDATE_STATUS,
    "reject": OP_REJECT,
    "dispute": OP_DISPUTE,
    "merge": OP_MERGE,
    "split": OP_SPLIT,
    "partialdup": OP_PARTIAL_DUP,
}


def _scenario_salt(seed: bytes, index: int) -> str:
    return hashlib.sha256(seed + b"/salt/" + str(index).encode()).hexdigest()[:32]


def drive_scenario(script: dict | list) -> tuple[SimulatedNetwork, list[dict], list[dict]]:
    """Execute a timed action script; returns the driven network plus the
    per-action and per-block logs.

    A bare JSON list of {atTick, action, args} is accepted as shorthand for
    {"actions": [...]} with default network settings."""
    if isinstance(script, list):
        script = {"actions": script}
    seed = bytes.fromhex(script["seed"]) if "seed" in script else b"cveledger-scenario"
    genesis_time = int(script.get("genesisTime", 0))
    tick_seconds = int(script.get("tickSeconds", 1))
    net = SimulatedNetwork(
        n_peers=int(script.get("peers", 3)),
        policy=EndorsementPolicy.from_dict(script["policy"]) if "policy" in script else None,
        seed=seed,
        genesis_time=genesis_time,
        orderer=OrdererConfig(
            max_block_txs=int(script.get("maxBlockTxs", 100)), tick_seconds=tick_seconds
        ),
    )
    gov = net.governance_id
    actions = list(script.get("actions", ()))
    max_tick = max((int(a.get("atTick", 0)) for a in actions), default=-1)

    action_log: list[dict] = []
    block_log: list[dict] = []
    salt_counter = 0

    def perform(entry: dict) -> dict:
        nonlocal salt_counter
        kind = entry["action"]
        args = dict(entry.get("args", {}))
        caller = args.pop("caller", gov)
        out: dict = {"atTick": int(entry.get("atTick", 0)), "action": kind}
        if kind == "onboard":
            cna = args["cna"]
            cert = net.certs.get(cna) or net.issue_identity(cna, ROLE_CNA)
            result = net.invoke(
                OP_ONBOARD,
                {"cnaID": cna, "certHash": cert.cert_hash(), "certificate": cert.to_dict()},
                caller,
            )
        elif kind == "revoke":
            cna = args["cna"]
            result = net.invoke(OP_REVOKE, {"cnaID": cna}, caller)
            if result.accepted:
                net.revoke_identity(cna)
        elif kind == "submit":
            record = dict(args["record"])
            if "embargoTicks" in args:
                record["embargoUntil"] = genesis_time + int(args["embargoTicks"]) * tick_seconds
            submitter = record.get("submitterCNA", caller)
            salt = args.get("salt")
            if salt is None and record.get("embargoUntil") is not None:
                salt = _scenario_salt(seed, salt_counter)
                salt_counter += 1
            tx_args = {"record": record}
            if salt is not None:
                tx_args["salt"] = salt
            result = net.invoke(OP_SUBMIT, tx_args, submitter)
        elif kind == "embargo-tick":
            result = net.invoke(OP_CHECK_EMBARGO, {}, caller)
        elif kind in _ACTION_OPS:
            result = net.invoke(_ACTION_OPS[kind], args, caller)
        else:
            raise ValueError(f"unknown scenario action {kind!r}")
        out["ok"] = result.accepted
        out["txId"] = result.tx.tx_id
        if result.refusals:
            out["refusals"] = [
                {"peer": r.peer_id, "code": r.code} for r in result.refusals
            ]
        return out

    for tick_no in range(max_tick + 1):
        now = genesis_time + tick_no * tick_seconds
        net.advance_clock(now)
        for entry in actions:
            if int(entry.get("atTick", 0)) == tick_no:
                action_log.append(perform(entry))
        for block in net.tick(now):
            hashes = net.state_hashes()
            block_log.append(
                {
                    "height": block.height,
                    "blockHash": block.block_hash,
                    "blockTime": block.block_time,
                    "txCount": len(block.txs),
                    "stateHashes": hashes,
                    "consistent": len(set(hashes.values())) == 1,
                }
            )
    return net, action_log, block_log


def run_scenario(script: dict | list) -> dict:
    """Execute a timed action script and return a fully deterministic trace:
    per-action outcomes, per-block state hashes across peers, the event
    log, and simulated-time throughput/latency statistics."""
    if isinstance(script, list):
        script = {"actions": script}
    genesis_time = int(script.get("genesisTime", 0))
    net, action_log, block_log = drive_scenario(script)

    committed = sorted(
        net.commit_tick[tid] - net.submit_tick[tid] for tid in net.commit_tick
    )

    def pct(p: float) -> int:
        if not committed:
            return 0
        return committed[min(len(committed) - 1, int(p * len(committed)))]

    reference = net.peers[0].state
    simulated = max(net.clock - genesis_time, 0)
    trace = {
        "actions": action_log,
        "blocks": block_log,
        "events": [e.to_dict() for e in reference.event_log],
        "failedTxs": list(reference.failed_txs),
        "finalStateHash": state_hash(reference),
        "stats": {
            "committedTxs": len(net.commit_tick),
            "pendingTxs": len(net.pending),
            "simulatedSeconds": simulated,
            "txPerSimulatedSecond": (
                round(len(net.commit_tick) / simulated, 6) if simulated else 0.0
            ),
            "latencyTicks": {"p50": pct(0.50), "p95": pct(0.95), "max": committed[-1] if committed else 0},
        },
    }
    return trace


def trace_json(trace: dict) -> str:
    return to_canonical_json(trace)
