"""Operator node: durable storage wiring around the simulated network.

One writer process per data dir (advisory lock). The ledger file is the
only source of truth: opening a node replays it into memory, every
mutation runs the full endorse -> order -> commit pipeline, and each
committed block is appended to the file before the call returns.
"""

from __future__ import annotations

import json
import secrets
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import errors
from .canonical import to_canonical_json
from .chaincode import OP_CHECK_EMBARGO, OP_ONBOARD, OP_REVOKE, OP_SUBMIT
from .corrections import OP_DISPUTE, OP_MERGE, OP_PARTIAL_DUP, OP_REJECT, OP_SPLIT
from .errors import LedgerError
from .identity import (
    Certificate,
    CertificateAuthority,
    KeyPair,
    ROLE_GOVERNANCE,
    RevocationList,
)
from .ledger import AuditReport, EndorsementPolicy, make_genesis_block, state_hash
from .network import DEFAULT_GOVERNANCE, OrdererConfig, SimulatedNetwork, SubmitResult
from .records import parse_cve_id
from .storage import DataDirLock, append_block_file, audit_file, read_chain

LEDGER_FILE = "ledger.jsonl"
CONFIG_FILE = "config.json"
CRL_FILE = "crl.json"
KEYS_DIR = "keys"
CERTS_DIR = "certs"


@dataclass(frozen=True)
class NodeConfig:
    orderer: OrdererConfig = field(default_factory=OrdererConfig)
    policy: EndorsementPolicy = field(default_factory=EndorsementPolicy)
    ca_key_path: str = f"{KEYS_DIR}/ca.json"
    identity_key_path: str = f"{KEYS_DIR}/{DEFAULT_GOVERNANCE}.json"
    listen_port: int = 8440
    governance_id: str = DEFAULT_GOVERNANCE
    peer_count: int = 3

    def to_dict(self) -> dict:
        return {
            "ordererConfig": self.orderer.to_dict(),
            "endorsementPolicy": self.policy.to_dict(),
            "caKeyPath": self.ca_key_path,
            "identityKeyPath": self.identity_key_path,
            "listenPort": self.listen_port,
            "governanceId": self.governance_id,
            "peerCount": self.peer_count,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "NodeConfig":
        return cls(
            orderer=OrdererConfig.from_dict(obj.get("ordererConfig", {})),
            policy=EndorsementPolicy.from_dict(obj.get("endorsementPolicy", {})),
            ca_key_path=obj.get("caKeyPath", f"{KEYS_DIR}/ca.json"),
            identity_key_path=obj.get("identityKeyPath", f"{KEYS_DIR}/{DEFAULT_GOVERNANCE}.json"),
            listen_port=int(obj.get("listenPort", 8440)),
            governance_id=obj.get("governanceId", DEFAULT_GOVERNANCE),
            peer_count=int(obj.get("peerCount", 3)),
        )


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(to_canonical_json(obj) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def _refusal_error(result: SubmitResult) -> LedgerError:
    if result.refusals:
        first = result.refusals[0]
        exc_type = getattr(errors, first.code, LedgerError)
        if isinstance(exc_type, type) and issubclass(exc_type, LedgerError) and exc_type is not errors.SchemaViolation:
            return exc_type(first.message)
        return LedgerError(f"{first.code}: {first.message}")
    return errors.PolicyUnsatisfied("endorsement policy not satisfied")


class Node:
    """A data-dir-backed consortium node driving the in-process network."""

    def __init__(self, data_dir: Path, config: NodeConfig, net: SimulatedNetwork, lock: DataDirLock):
        self.data_dir = Path(data_dir)
        self.config = config
        self.net = net
        self._lock = lock

    # -- lifecycle ------------------------------------------------------------

    @classmethod
    def init(
        cls,
        data_dir: str | Path,
        *,
        genesis_time: int | None = None,
        peer_count: int = 3,
        policy: EndorsementPolicy | None = None,
        listen_port: int = 8440,
        seed: bytes | None = None,
    ) -> "Node":
        """Create the CA, bootstrap governance, peer identities, and the
        genesis block."""
        data_dir = Path(data_dir)
        data_dir.mkdir(parents=True, exist_ok=True)
        if (data_dir / LEDGER_FILE).exists():
            raise LedgerError(f"data dir already initialized: {data_dir}")
        (data_dir / KEYS_DIR).mkdir(exist_ok=True)
        (data_dir / CERTS_DIR).mkdir(exist_ok=True)
        lock = DataDirLock(data_dir).acquire()

        genesis_time = int(time.time()) if genesis_time is None else int(genesis_time)
        policy = policy or EndorsementPolicy(rule="ANY_N", n=1)
        config = NodeConfig(
            policy=policy,
            listen_port=listen_port,
            peer_count=peer_count,
        )

        def new_key(label: str) -> KeyPair:
            if seed is None:
                return KeyPair.generate()
            from .identity import derive_keypair

            return derive_keypair(seed, label)

        ca = CertificateAuthority(new_key("ca"))
        gov_id = config.governance_id
        gov_key = new_key(gov_id)
        gov_cert = ca.issue_certificate(gov_id, ROLE_GOVERNANCE, gov_key.public_hex, issued_at=genesis_time)

        peers_cfg = {}
        keys = {gov_id: gov_key}
        for i in range(peer_count):
            pid = f"peer{i}.org{i}"
            key = new_key(pid)
            keys[pid] = key
            peers_cfg[pid] = {"org": f"org{i}", "publicKey": key.public_hex}

        genesis = make_genesis_block(ca.public_key, {gov_id: gov_cert}, peers_cfg, policy, genesis_time)
        append_block_file(data_dir / LEDGER_FILE, genesis)
        _write_json(data_dir / CONFIG_FILE, config.to_dict())
        _write_json(data_dir / CRL_FILE, RevocationList().to_dict())
        cls._persist_ca(data_dir, config, ca)
        for name, key in keys.items():
            _write_json(data_dir / KEYS_DIR / f"{name}.json", {"seedHex": key.seed_hex, "publicKey": key.public_hex})
        _write_json(data_dir / CERTS_DIR / f"{gov_id}.json", gov_cert.to_dict())

        net = SimulatedNetwork.from_materials(
            ca=ca,
            keys=keys,
            certs={gov_id: gov_cert},
            chain=[genesis],
            orderer=config.orderer,
            governance_id=gov_id,
        )
        net.ca.crl = RevocationList()
        return cls(data_dir, config, net, lock)

    @classmethod
    def open(cls, data_dir: str | Path) -> "Node":
        """Load config, keys, certificates, and the ledger (recovering a
        truncated tail if a previous append was interrupted)."""
        data_dir = Path(data_dir)
        config_path = data_dir / CONFIG_FILE
        if not config_path.exists():
            raise LedgerError(f"not an initialized data dir: {data_dir}")
        lock = DataDirLock(data_dir).acquire()
        try:
            config = NodeConfig.from_dict(_read_json(config_path))
            crl = RevocationList.from_dict(_read_json(data_dir / CRL_FILE))

            keys: dict[str, KeyPair] = {}
            for key_file in sorted((data_dir / KEYS_DIR).glob("*.json")):
                if key_file.name == "ca.json":
                    continue
                obj = _read_json(key_file)
                keys[key_file.stem] = KeyPair.from_seed_hex(obj["seedHex"])
            certs: dict[str, Certificate] = {}
            for cert_file in sorted((data_dir / CERTS_DIR).glob("*.json")):
                certs[cert_file.stem] = Certificate.from_dict(_read_json(cert_file))

            ca_obj = _read_json(data_dir / config.ca_key_path)
            live = {
                name: cert
                for name, cert in certs.items()
                if cert.serial not in crl.revoked_serials
            }
            ca = CertificateAuthority(
                KeyPair.from_seed_hex(ca_obj["seedHex"]),
                next_serial=int(ca_obj.get("nextSerial", 1)),
                live=live,
                crl=crl,
            )
            chain = read_chain(data_dir / LEDGER_FILE, recover=True)
            if not chain:
                raise LedgerError(f"ledger file has no genesis block: {data_dir}")
            net = SimulatedNetwork.from_materials(
                ca=ca,
                keys=keys,
                certs=certs,
                chain=chain,
                orderer=config.orderer,
                governance_id=config.governance_id,
            )
        except BaseException:
            lock.release()
            raise
        return cls(data_dir, config, net, lock)

    @classmethod
    def _persist_ca(cls, data_dir: Path, config: NodeConfig, ca: CertificateAuthority) -> None:
        _write_json(
            data_dir / config.ca_key_path,
            {"seedHex": ca.key.seed_hex, "publicKey": ca.public_key, "nextSerial": ca.next_serial},
        )

    def close(self) -> None:
        self._lock.release()

    def __enter__(self) -> "Node":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- identity management ----------------------------------------------------

    def issue(self, participant: str, role: str, issued_at: int | None = None) -> Certificate:
        key = KeyPair.generate()
        cert = self.net.ca.issue_certificate(
            participant, role, key.public_hex, issued_at=self.net.clock if issued_at is None else issued_at
        )
        self.net.keys[participant] = key
        self.net.certs[participant] = cert
        _write_json(
            self.data_dir / KEYS_DIR / f"{participant}.json",
            {"seedHex": key.seed_hex, "publicKey": key.public_hex},
        )
        _write_json(self.data_dir / CERTS_DIR / f"{participant}.json", cert.to_dict())
        self._persist_ca(self.data_dir, self.config, self.net.ca)
        return cert

    # -- mutations ---------------------------------------------------------------

    def _commit(self, op: str, args: dict, caller: str) -> dict:
        """One CLI mutation == one transaction == one block."""
        result = self.net.invoke(op, args, caller)
        if not result.accepted:
            raise _refusal_error(result)
        blocks = self.net.tick(self.net.clock)
        for block in blocks:
            append_block_file(self.data_dir / LEDGER_FILE, block)
        return {
            "txId": result.tx.tx_id,
            "blocks": [b.block_hash for b in blocks],
            "height": self.net.chain[-1].height,
        }

    def onboard(self, cna: str, cert_path: str | Path) -> dict:
        cert = Certificate.from_dict(_read_json(Path(cert_path)))
        _write_json(self.data_dir / CERTS_DIR / f"{cert.subject}.json", cert.to_dict())
        self.net.certs[cert.subject] = cert
        return self._commit(
            OP_ONBOARD,
            {"cnaID": cna, "certHash": cert.cert_hash(), "certificate": cert.to_dict()},
            self.config.governance_id,
        )

    def revoke(self, cna: str) -> dict:
        out = self._commit(OP_REVOKE, {"cnaID": cna}, self.config.governance_id)
        cert = self.net.certs.get(cna)
        notice = None
        if cert is not None:
            before = self.net.ca.crl.version
            self.net.ca.revoke(cert.serial)
            notice = "AlreadyRevoked" if self.net.ca.crl.version == before else None
            _write_json(self.data_dir / CRL_FILE, self.net.ca.crl.to_dict())
        out["crlVersion"] = self.net.ca.crl.version
        if notice:
            out["notice"] = notice
        return out

    def submit(self, record: dict, embargo: int | None = None, salt: str | None = None) -> dict:
        record = dict(record)
        if embargo is not None:
            record["embargoUntil"] = int(embargo)
        caller = record.get("submitterCNA", "")
        if caller not in self.net.keys:
            raise errors.BadCertificate(f"no local signing key for {caller!r}; run issue first")
        args: dict = {"record": record}
        if record.get("embargoUntil") is not None:
            args["salt"] = salt or secrets.token_hex(16)
        out = self._commit(OP_SUBMIT, args, caller)
        out["cveID"] = record.get("cveID")
        stored = self.state.cve_registry.get(parse_cve_id(record["cveID"]))
        if stored is not None:
            out["status"] = stored.status.value
        return out

    def update_status(self, cve_id: str, new_status: str, caller: str | None = None) -> dict:
        return self._commit(
            "UpdateCVEStatus",
            {"cveID": cve_id, "newStatus": new_status},
            caller or self.config.governance_id,
        )

    def reject(self, cve_id: str, reason: str, caller: str | None = None) -> dict:
        return self._commit(
            OP_REJECT, {"cveID": cve_id, "reason": reason}, caller or self.config.governance_id
        )

    def dispute(self, cve_id: str, note: str, external_ref: str | None = None, caller: str | None = None) -> dict:
        args = {"cveID": cve_id, "note": note}
        if external_ref:
            args["externalRef"] = external_ref
        return self._commit(OP_DISPUTE, args, caller or self.config.governance_id)

    def merge(self, candidates: list[dict], caller: str | None = None) -> dict:
        return self._commit(
            OP_MERGE, {"candidates": candidates}, caller or self.config.governance_id
        )

    def split(self, cve_id: str, candidates: list[dict], caller: str | None = None) -> dict:
        return self._commit(
            OP_SPLIT,
            {"cveID": cve_id, "candidates": candidates},
            caller or self.config.governance_id,
        )

    def partial_duplicate(self, keep: str, revise: str, caller: str | None = None) -> dict:
        return self._commit(
            OP_PARTIAL_DUP,
            {"keepID": keep, "reviseID": revise},
            caller or self.config.governance_id,
        )

    def tick(self, now: int | None = None) -> dict:
        """Advance the chain clock and run the embargo sweep."""
        if now is not None:
            self.net.advance_clock(int(now))
        else:
            self.net.advance_clock(self.net.clock + self.config.orderer.tick_seconds)
        out = self._commit(OP_CHECK_EMBARGO, {}, self.config.governance_id)
        out["clockNow"] = self.net.clock
        released = [
            e.payload["cveID"]
            for e in self.net.peers[0].state.event_log
            if e.kind == "EmbargoReleased" and e.block_height == self.net.chain[-1].height
        ]
        out["released"] = released
        return out

    # -- reads --------------------------------------------------------------------

    @property
    def state(self):
        return self.net.peers[0].state

    def query(self, **filters) -> list[dict]:
        from .ledger import query_public

        return query_public(self.state, **filters)

    def audit(self) -> AuditReport:
        return audit_file(self.data_dir / LEDGER_FILE)

    def replay_hash(self) -> str:
        from .ledger import replay

        chain = read_chain(self.data_dir / LEDGER_FILE, recover=True)
        return state_hash(replay(chain))

    def memory_state_hash(self) -> str:
        return state_hash(self.state)
