"""
JSON documents: deterministic emitter, validation errors and report schemas.
"""
import json
import os

import numpy as np
import pytest

from nlforge import qobj
from nlforge.documents import (
    document_for,
    dumps,
    load_povm,
    load_state,
    parse_document,
    read_document,
    robustness_report_doc,
    save_object,
    score_report_doc,
    suite_report_doc,
    write_json_atomic,
)
from nlforge.errors import InputError
from nlforge.games import ScoreReport
from nlforge.linalg import HermitianOperator

FIXTURE_NAMES = [
    "phi_plus.json",
    "product_state.json",
    "isotropic_0.json",
    "isotropic_0.25.json",
    "isotropic_0.5.json",
    "isotropic_0.75.json",
    "isotropic_1.json",
    "bell_povm_2.json",
    "z_povm.json",
    "ideal_teleportation.json",
    "classical_instrument.json",
    "free_zz_measurement.json",
    "bell_phi_plus.json",
    "orthogonal_product_ensemble.json",
]


class TestEmitter:
    def test_number_format(self):
        """Integral floats print without a decimal point, others with 17 digits."""
        text = dumps({"a": 1.0, "b": 0.0, "c": -0.0, "d": 0.1, "e": 3, "f": True})
        assert text == '{\n  "a": 1,\n  "b": 0,\n  "c": 0,\n  "d": 0.10000000000000001,\n  "e": 3,\n  "f": true\n}\n'

    def test_shallow_lists_inline(self):
        text = dumps({"m": [[[1.0, 0.0], [0.0, 0.0]]], "deep": [[[[1]]]]})
        assert '"m": [\n    [[1, 0], [0, 0]]\n  ]' in text

    def test_non_finite_is_null(self):
        assert dumps({"x": float("nan")}) == '{\n  "x": null\n}\n'

    @pytest.mark.parametrize("name", FIXTURE_NAMES)
    def test_fixture_round_trip_is_byte_stable(self, fixtures_dir, name):
        """read -> write reproduces the checked-in bytes."""
        path = fixtures_dir / name
        original = path.read_text(encoding="utf-8")
        assert dumps(document_for(read_document(str(path)))) == original


class TestParsing:
    def test_invalid_json_reports_position(self):
        with pytest.raises(InputError) as exc:
            parse_document('{\n  "kind": ,\n}', "broken.json")
        assert str(exc.value).startswith("broken.json:2:")

    def test_field_errors_carry_dotted_location(self):
        doc = {"schema_version": "1", "kind": "state",
               "payload": {"state": {"dims": [0], "data": []}}}
        with pytest.raises(InputError) as exc:
            parse_document(json.dumps(doc), "bad_state.json")
        assert "payload.state.dims" in str(exc.value)

    def test_unknown_schema_version(self):
        doc = {"schema_version": "2", "kind": "state", "payload": {}}
        with pytest.raises(InputError) as exc:
            parse_document(json.dumps(doc), "future.json")
        assert "schema_version" in str(exc.value)

    def test_unexpected_kind(self, fixtures_dir):
        with pytest.raises(InputError) as exc:
            load_povm(str(fixtures_dir / "phi_plus.json"))
        assert "expected a povm document" in str(exc.value)

    def test_domain_errors_are_input_errors(self):
        """A well-formed state with trace above one fails after schema validation."""
        doc = document_for(qobj.BipartiteState(HermitianOperator.identity((2, 2)) / 4))
        doc["payload"]["state"]["data"][0][0] = [2.0, 0.0]
        with pytest.raises(InputError) as exc:
            parse_document(json.dumps(doc), "not_normalized.json")
        assert "not_normalized.json: payload:" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            read_document(str(tmp_path / "missing.json"))


class TestWriting:
    def test_atomic_write_leaves_no_temp_files(self, tmp_path):
        target = tmp_path / "out" / "state.json"
        write_json_atomic(str(target), {"a": 1})
        assert target.read_text() == '{\n  "a": 1\n}\n'
        assert os.listdir(target.parent) == ["state.json"]

    def test_save_object_to_stdout(self, capsys, phi_plus):
        save_object(phi_plus)
        out = capsys.readouterr().out
        assert json.loads(out)["kind"] == "state"

    def test_save_and_load(self, tmp_path):
        rho = qobj.random_state((2, 2), 2, seed=4)
        path = str(tmp_path / "rho.json")
        save_object(rho, path)
        assert load_state(path).op.allclose(rho.op, atol=1e-15)

    def test_subroutine_documents(self, tmp_path):
        s = qobj.random_subroutine((2, 2), (2, 2), seed=6)
        path = str(tmp_path / "s.json")
        save_object(s, path)
        loaded = read_document(path, ("subroutine",))
        assert np.allclose(loaded.weights, s.weights)


class TestReports:
    def test_robustness_report_validates(self, bell_phi_plus_robn):
        doc = robustness_report_doc(bell_phi_plus_robn)
        assert doc["kind"] == "report"
        payload = doc["payload"]
        assert payload["report_type"] == "robustness"
        assert payload["relaxation"] == "PPT_OUTER"
        assert len(payload["dual_certificate"]["A"]) == 4
        kind, parsed = parse_document(dumps(doc))
        assert kind == "report" and parsed["quantifier"] == "robn"

    def test_score_report_validates(self):
        doc = score_report_doc(ScoreReport(0.5, 0.25, "certificate_postprocessed"), elapsed=0.1)
        assert doc["payload"]["ratio"] == 2.0

    def test_suite_report_rejects_missing_fields(self):
        with pytest.raises(InputError):
            suite_report_doc({"suite": "roe"})
