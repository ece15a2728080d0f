from __future__ import annotations

import itertools
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cveledger.canonical import to_canonical_json
from cveledger.errors import MalformedId, YearOutOfRange
from cveledger.records import (
    Annotation,
    CveId,
    CveStatus,
    DISPUTED_PREFIX,
    Severity,
    SeverityLabel,
    band_for_score,
    parse_cve_id,
    record_from_dict,
    record_to_dict,
    status_transition_valid,
    validate_schema,
)

from conftest import make_record


class TestCveIdParsing:
    def test_direct_parse(self):
        assert parse_cve_id("CVE-2025-0001") == CveId(year=2025, sequence=1)

    def test_year_before_1999_rejected(self):
        with pytest.raises(YearOutOfRange):
            parse_cve_id("CVE-1998-0001")

    def test_short_sequence_rejected(self):
        with pytest.raises(MalformedId):
            parse_cve_id("CVE-2025-123")

    @pytest.mark.parametrize(
        "text",
        ["cve-2025-0001", "CVE-2025-0000", "CVE-2025-00010", "CVE-25-0001", "CVE-2025-1a34", "", "CVE--0001"],
    )
    def test_malformed_rejected(self, text):
        with pytest.raises(MalformedId):
            parse_cve_id(text)

    def test_long_sequences_parse(self):
        assert parse_cve_id("CVE-2025-123456") == CveId(2025, 123456)

    @settings(max_examples=500, deadline=None)
    @given(
        year=st.integers(min_value=1999, max_value=2999),
        sequence=st.integers(min_value=1, max_value=10**7),
    )
    def test_roundtrip_property(self, year, sequence):
        cid = CveId(year=year, sequence=sequence)
        assert parse_cve_id(str(cid)) == cid

    def test_ids_order_by_year_then_sequence(self):
        assert CveId(2024, 9999) < CveId(2025, 1)
        assert CveId(2025, 2) < CveId(2025, 10)


class TestSeverityBands:
    @pytest.mark.parametrize(
        "score,label",
        [
            (0.0, SeverityLabel.NONE),
            (0.1, SeverityLabel.LOW),
            (3.9, SeverityLabel.LOW),
            (4.0, SeverityLabel.MEDIUM),
            (6.9, SeverityLabel.MEDIUM),
            (7.0, SeverityLabel.HIGH),
            (8.9, SeverityLabel.HIGH),
            (9.0, SeverityLabel.CRITICAL),
            (10.0, SeverityLabel.CRITICAL),
        ],
    )
    def test_band_boundaries(self, score, label):
        assert band_for_score(score) is label


class TestStatusMachine:
    def test_draft_to_published_allowed(self):
        assert status_transition_valid(CveStatus.DRAFT, CveStatus.PUBLISHED)

    def test_archived_is_terminal(self):
        assert not status_transition_valid(CveStatus.ARCHIVED, CveStatus.PUBLISHED)

    def test_full_matrix_has_exactly_seven_legal_cells(self):
        # independent transcription of the lifecycle rules
        expected = {
            ("DRAFT", "PUBLISHED"),
            ("PUBLISHED", "ARCHIVED"),
            ("DRAFT", "REJECTED"),
            ("PUBLISHED", "REJECTED"),
            ("PUBLISHED", "DISPUTED"),
            ("DISPUTED", "PUBLISHED"),
            ("DISPUTED", "REJECTED"),
        }
        observed = {
            (a.value, b.value)
            for a, b in itertools.product(CveStatus, CveStatus)
            if status_transition_valid(a, b)
        }
        assert observed == expected
        assert len(observed) == 7

    def test_reflexive_pairs_are_invalid(self):
        for status in CveStatus:
            assert not status_transition_valid(status, status)


class TestValidateSchema:
    def test_fully_populated_record_is_valid(self):
        assert validate_schema(make_record()) == []

    def test_band_mismatch_detected(self):
        record = make_record(severity=Severity(SeverityLabel.CRITICAL, 5.0))
        assert [v.code for v in validate_schema(record)] == ["SEVERITY_BAND_MISMATCH"]

    def test_empty_description_detected(self):
        record = make_record(description="")
        assert "EMPTY_DESCRIPTION" in [v.code for v in validate_schema(record)]

    def test_oversized_description_detected(self):
        record = make_record(description="x" * (16 * 1024 + 1))
        assert "DESCRIPTION_TOO_LONG" in [v.code for v in validate_schema(record)]

    def test_score_out_of_scale(self):
        record = make_record(severity=Severity(SeverityLabel.CRITICAL, 11.0))
        assert "BAD_SEVERITY_SCORE" in [v.code for v in validate_schema(record)]

    def test_score_absent_is_fine(self):
        record = make_record(severity=Severity(SeverityLabel.HIGH, None))
        assert validate_schema(record) == []

    def test_rejected_requires_annotation(self):
        record = make_record(status=CveStatus.REJECTED)
        assert "MISSING_REJECTION_ANNOTATION" in [v.code for v in validate_schema(record)]
        annotated = record.with_(annotations=(Annotation("REJECTION_REASON", "typo"),))
        assert validate_schema(annotated) == []

    def test_merge_pointer_satisfies_rejected_rule(self):
        record = make_record(
            status=CveStatus.REJECTED,
            annotations=(Annotation("MERGE_POINTER", "into CVE-2025-0002", ref="CVE-2025-0002"),),
        )
        assert validate_schema(record) == []

    def test_disputed_requires_prefix_and_note(self):
        record = make_record(status=CveStatus.DISPUTED)
        codes = [v.code for v in validate_schema(record)]
        assert "MISSING_DISPUTE_PREFIX" in codes and "MISSING_DISPUTE_NOTE" in codes
        fixed = record.with_(
            description=DISPUTED_PREFIX + record.description,
            annotations=(Annotation("DISPUTE_NOTE", "contested", ref="https://example.org"),),
        )
        assert validate_schema(fixed) == []

    def test_draft_without_embargo_detected(self):
        record = make_record(status=CveStatus.DRAFT, embargo_until=None)
        assert "DRAFT_WITHOUT_EMBARGO" in [v.code for v in validate_schema(record)]

    def test_timestamps_must_not_regress(self):
        record = make_record(created_at=10, updated_at=5)
        assert "BAD_TIMESTAMPS" in [v.code for v in validate_schema(record)]

    def test_bad_reference_detected(self):
        record = make_record(references=("CVE-2025-7",))
        assert "BAD_REFERENCE" in [v.code for v in validate_schema(record)]

    def test_bad_submitter_detected(self):
        record = make_record(submitter="NotAnId")
        assert "BAD_SUBMITTER_ID" in [v.code for v in validate_schema(record)]

    def test_validation_is_stable(self):
        record = make_record(description="", submitter="nope")
        first = validate_schema(record)
        for _ in range(5):
            assert validate_schema(record) == first


class TestCanonicalForm:
    def test_keys_sorted_and_absent_embargo_is_null(self):
        text = to_canonical_json(record_to_dict(make_record()))
        obj = json.loads(text)
        assert list(obj) == sorted(obj)
        assert '"embargoUntil":null' in text

    def test_roundtrip(self):
        record = make_record(
            embargo_until=12345,
            references=("CVE-2025-0002",),
            annotations=(Annotation("DISPUTE_NOTE", "n", ref="r"),),
            created_at=5,
            updated_at=9,
        )
        assert record_from_dict(record_to_dict(record)) == record

    def test_internal_form_carries_salt(self):
        record = make_record(embargo_salt="ab" * 8)
        assert record_to_dict(record, internal=True)["embargoSalt"] == "ab" * 8
        assert "embargoSalt" not in record_to_dict(record)
