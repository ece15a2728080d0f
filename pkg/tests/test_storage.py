from __future__ import annotations

import logging

import pytest

from cveledger.errors import LedgerCorrupt
from cveledger.ledger import state_hash, replay
from cveledger.storage import (
    ChainAuditor,
    DataDirLock,
    append_block_file,
    audit_file,
    block_line,
    read_chain,
    write_chain_file,
)

from test_ledger import small_network


@pytest.fixture
def chain_file(tmp_path):
    net = small_network(2)
    path = tmp_path / "ledger.jsonl"
    write_chain_file(path, net.chain)
    return path, net.chain


class TestBlockLines:
    def test_roundtrip(self, chain_file):
        path, chain = chain_file
        assert read_chain(path) == chain

    def test_append_matches_bulk_write(self, tmp_path, chain_file):
        _, chain = chain_file
        path = tmp_path / "incremental.jsonl"
        for block in chain:
            append_block_file(path, block)
        assert read_chain(path) == chain

    def test_one_block_per_line(self, chain_file):
        path, chain = chain_file
        lines = path.read_bytes().splitlines()
        assert len(lines) == len(chain)


class TestCrashRecovery:
    def test_partial_tail_dropped_with_warning(self, chain_file, caplog):
        path, chain = chain_file
        good_bytes = path.read_bytes()
        partial = block_line(chain[-1])[:40]  # half-written next block
        path.write_bytes(good_bytes + partial)
        with caplog.at_level(logging.WARNING):
            recovered = read_chain(path, recover=True)
        assert recovered == chain
        assert any("truncated" in r.message for r in caplog.records)
        # the file was repaired in place
        assert path.read_bytes() == good_bytes
        assert read_chain(path) == chain

    def test_exactly_the_partial_line_is_dropped(self, chain_file):
        path, chain = chain_file
        path.write_bytes(path.read_bytes() + b'{"height": 99')
        recovered = read_chain(path, recover=True)
        assert len(recovered) == len(chain)
        assert state_hash(replay(recovered)) == state_hash(replay(chain))

    def test_strict_mode_raises_on_partial_tail(self, chain_file):
        path, chain = chain_file
        path.write_bytes(path.read_bytes() + b"garbage")
        with pytest.raises(LedgerCorrupt) as err:
            read_chain(path)
        assert err.value.height == len(chain)

    def test_mid_file_corruption_raises_even_in_recover_mode(self, chain_file):
        path, chain = chain_file
        data = path.read_bytes()
        lines = data.split(b"\n")
        lines[1] = lines[1][:10] + b"X" + lines[1][11:]
        path.write_bytes(b"\n".join(lines))
        with pytest.raises(LedgerCorrupt):
            read_chain(path, recover=True)

    def test_missing_final_newline_restored_in_recover_mode(self, chain_file):
        path, chain = chain_file
        path.write_bytes(path.read_bytes()[:-1])  # strip the last newline only
        recovered = read_chain(path, recover=True)
        assert recovered == chain
        assert path.read_bytes().endswith(b"\n")


class TestFileAudit:
    def test_pristine_file_valid(self, chain_file):
        path, _ = chain_file
        assert audit_file(path).valid

    def test_partial_tail_flagged_by_audit(self, chain_file):
        path, chain = chain_file
        path.write_bytes(path.read_bytes() + b"tail-without-newline")
        report = audit_file(path)
        assert not report.valid
        assert report.first_bad_height == len(chain)

    def test_single_byte_flip_flagged_with_correct_height(self, chain_file):
        path, chain = chain_file
        data = path.read_bytes()
        offsets = []
        start = 0
        for block in chain:
            end = data.index(b"\n", start)
            offsets.append((start, end))
            start = end + 1
        auditor = ChainAuditor()
        for height, (lo, hi) in enumerate(offsets):
            for pos in (lo, (lo + hi) // 2, hi - 1, hi):  # hi == the newline byte
                mutated = bytearray(data)
                mutated[pos] ^= 0x01
                report = auditor.audit_bytes(bytes(mutated))
                assert not report.valid, f"flip at byte {pos} undetected"
                assert report.first_bad_height == height, (
                    f"flip at byte {pos}: expected height {height}, got {report.first_bad_height}"
                )

    def test_hex_case_flip_is_detected(self, chain_file):
        # 'a' ^ 0x20 == 'A' decodes to the same signature bytes; the string
        # comparison must still catch it
        path, _ = chain_file
        data = path.read_bytes()
        pos = data.index(b'"callerSignature":"')
        sig_region = data[pos + len(b'"callerSignature":"') :]
        idx = next(i for i, b in enumerate(sig_region) if chr(b) in "abcdef")
        absolute = pos + len(b'"callerSignature":"') + idx
        mutated = bytearray(data)
        mutated[absolute] ^= 0x20  # lowercase hex letter -> uppercase
        report = ChainAuditor().audit_bytes(bytes(mutated))
        assert not report.valid

    def test_empty_file_invalid(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_bytes(b"")
        report = audit_file(path)
        assert not report.valid and report.first_bad_height == 0


class TestLock:
    def test_second_writer_refused(self, tmp_path):
        with DataDirLock(tmp_path):
            with pytest.raises(LedgerCorrupt):
                DataDirLock(tmp_path).acquire()

    def test_released_lock_reacquirable(self, tmp_path):
        with DataDirLock(tmp_path):
            pass
        with DataDirLock(tmp_path):
            pass
